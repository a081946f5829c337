//! Label-noise dilution and the per-example running store of diluted labels.

use std::io::{self, Write};

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DilutionParams {
    /// Weight on neighbor mass in each diffusion step.
    pub alpha: f64,
    /// Weight on the previous stored row in the running average.
    pub beta: f64,
    /// Maximum diffusion steps per batch.
    pub iterations: usize,
    /// Early-stop threshold on the max-abs change of one step; `0` disables.
    pub tol: f64,
}

impl Default for DilutionParams {
    fn default() -> Self {
        Self { alpha: 0.99, beta: 0.9, iterations: 10, tol: 1e-6 }
    }
}

impl DilutionParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("dilution needs at least one iteration".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be nonnegative, got {}", self.tol)));
        }
        Ok(())
    }
}

/// One-hot rows for a batch of observed labels.
pub fn init_batch(noisy_labels: &[usize], num_classes: usize) -> Result<Array2<f64>> {
    let mut z = Array2::zeros((noisy_labels.len(), num_classes));
    for (i, &label) in noisy_labels.iter().enumerate() {
        if label >= num_classes {
            return Err(Error::LabelOutOfRange { line: i, label, classes: num_classes });
        }
        z[[i, label]] = 1.0;
    }
    Ok(z)
}

#[derive(Debug, Clone)]
pub struct Dilution {
    pub labels: Array2<f64>,
    pub iterations_run: usize,
}

/// Repeats `Z ← αWZ + (1−α)Z` up to `iterations` times, stopping early
/// once a step changes no entry by `tol` or more.
pub fn dilute(z0: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>, alpha: f64, iterations: usize, tol: f64) -> Result<Dilution> {
    let (n, c) = z0.dim();
    if w.dim() != (n, n) {
        return Err(Error::DimensionMismatch { what: "similarity matrix", expected: n, got: w.nrows() });
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    if iterations == 0 {
        return Err(Error::InvalidParameter("dilution needs at least one iteration".into()));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("similarity matrix"));
    }
    if z0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial labels"));
    }

    let keep = 1.0 - alpha;
    let mut z = z0.to_owned();
    let mut next = Array2::<f64>::zeros((n, c));
    let mut mixed = vec![0.0; c];
    let mut run = 0;
    while run < iterations {
        let mut change: f64 = 0.0;
        for i in 0..n {
            mixed.iter_mut().for_each(|m| *m = 0.0);
            for (j, &wij) in w.row(i).iter().enumerate() {
                if wij != 0.0 {
                    for (m, &zj) in mixed.iter_mut().zip(z.row(j)) {
                        *m += wij * zj;
                    }
                }
            }
            for col in 0..c {
                let v = alpha * mixed[col] + keep * z[[i, col]];
                change = change.max((v - z[[i, col]]).abs());
                next[[i, col]] = v;
            }
        }
        std::mem::swap(&mut z, &mut next);
        run += 1;
        if tol > 0.0 && change < tol {
            break;
        }
    }
    Ok(Dilution { labels: z, iterations_run: run })
}

/// Index of the largest entry, ties to the smallest index. `None` when the
/// row has no positive mass.
pub fn row_argmax(row: ArrayView1<'_, f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in row.iter().enumerate() {
        if v > best.map_or(0.0, |(_, b)| b) {
            best = Some((j, v));
        }
    }
    best.map(|(j, _)| j)
}

/// Persistent diluted-label mass for every training example, keyed by id.
///
/// Rows start as the one-hot encoding of each example's observed label and
/// are blended with freshly diluted batch rows as training proceeds. Rows
/// are never renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct DilutedLabelStore {
    rows: Array2<f64>,
    initialized: Vec<bool>,
    tau: u64,
    params: DilutionParams,
}

impl DilutedLabelStore {
    /// `noisy_by_id[id]` is the observed label of example `id`.
    pub fn new(noisy_by_id: &[usize], num_classes: usize, params: DilutionParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            rows: init_batch(noisy_by_id, num_classes)?,
            initialized: vec![false; noisy_by_id.len()],
            tau: 0,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.rows.ncols()
    }

    pub fn params(&self) -> &DilutionParams {
        &self.params
    }

    /// Number of momentum updates applied so far.
    pub fn tau(&self) -> u64 {
        self.tau
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn row(&self, id: usize) -> Result<ArrayView1<'_, f64>> {
        if id >= self.len() {
            return Err(Error::UnknownExample(id));
        }
        Ok(self.rows.row(id))
    }

    pub fn is_initialized(&self, id: usize) -> bool {
        self.initialized.get(id).copied().unwrap_or(false)
    }

    /// Computes `(1−β)Z_i + β·store[id_i]` for every batch row without
    /// writing anything back.
    pub fn blended(&self, batch_ids: &[usize], z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if z.dim() != (batch_ids.len(), self.num_classes()) {
            return Err(Error::DimensionMismatch { what: "diluted batch", expected: batch_ids.len(), got: z.nrows() });
        }
        let beta = self.params.beta;
        let mut out = Array2::zeros(z.dim());
        for (r, &id) in batch_ids.iter().enumerate() {
            let prior = self.row(id)?;
            for c in 0..self.num_classes() {
                out[[r, c]] = (1.0 - beta) * z[[r, c]] + beta * prior[c];
            }
        }
        Ok(out)
    }

    /// Overwrites rows for `batch_ids` and marks them initialized; `τ` is
    /// left alone.
    pub fn write_rows(&mut self, batch_ids: &[usize], rows: ArrayView2<'_, f64>) -> Result<()> {
        if rows.dim() != (batch_ids.len(), self.num_classes()) {
            return Err(Error::DimensionMismatch { what: "store rows", expected: batch_ids.len(), got: rows.nrows() });
        }
        if let Some(&bad) = batch_ids.iter().find(|&&id| id >= self.len()) {
            return Err(Error::UnknownExample(bad));
        }
        for (r, &id) in batch_ids.iter().enumerate() {
            self.rows.row_mut(id).assign(&rows.row(r));
            self.initialized[id] = true;
        }
        Ok(())
    }

    /// Running-average update for one batch, then `τ ← τ + 1`.
    pub fn momentum_update(&mut self, batch_ids: &[usize], z: ArrayView2<'_, f64>) -> Result<()> {
        let blended = self.blended(batch_ids, z)?;
        self.write_rows(batch_ids, blended.view())?;
        self.tau += 1;
        Ok(())
    }

    pub fn advance(&mut self) {
        self.tau += 1;
    }

    /// Argmax of the stored row, ties to the smallest class index.
    pub fn diluted_argmax(&self, id: usize) -> Result<usize> {
        row_argmax(self.row(id)?).ok_or(Error::DegenerateRow(id))
    }

    /// Total mass per row, for diagnostics.
    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.rows().into_iter().map(|r| r.sum()).collect()
    }

    /// Writes `id,argmax,mass_0..mass_{C-1}` for every example.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "id,argmax")?;
        for c in 0..self.num_classes() {
            write!(out, ",mass_{c}")?;
        }
        writeln!(out)?;
        for (id, row) in self.rows.rows().into_iter().enumerate() {
            match row_argmax(row) {
                Some(a) => write!(out, "{id},{a}")?,
                None => write!(out, "{id},")?,
            }
            for v in row {
                write!(out, ",{v:?}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn init_batch_one_hot() {
        let z = init_batch(&[0, 2], 3).unwrap();
        assert_eq!(z, array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(init_batch(&[], 3).unwrap().dim(), (0, 3));
        assert!(init_batch(&[3], 3).is_err());
        let same = init_batch(&[1, 1, 1], 2).unwrap();
        assert!(same.rows().into_iter().all(|r| r[1] == 1.0 && r[0] == 0.0));
    }

    #[test]
    fn alpha_zero_is_identity() {
        let z0 = array![[1.0, 0.0], [0.0, 1.0], [0.3, 0.7]];
        let w = array![[0.0, 0.9, 0.1], [0.9, 0.0, 0.4], [0.1, 0.4, 0.2]];
        let out = dilute(z0.view(), w.view(), 0.0, 7, 0.0).unwrap();
        assert_eq!(out.labels, z0);
    }

    #[test]
    fn one_step_by_hand() {
        let z0 = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        let w = array![[0.0, 0.5, 0.25], [0.5, 0.0, 0.5], [0.25, 0.5, 0.0]];
        let out = dilute(z0.view(), w.view(), 0.5, 1, 0.0).unwrap();
        // row 0: .5*(0.5*(0,1) + .25*(1,0)) + .5*(1,0) = (0.625, 0.25)
        // row 1: .5*(.5*(1,0) + .5*(1,0)) + .5*(0,1) = (0.5, 0.5)
        // row 2: .5*(.25*(1,0) + .5*(0,1)) + .5*(1,0) = (0.625, 0.25)
        let want = array![[0.625, 0.25], [0.5, 0.5], [0.625, 0.25]];
        for (a, b) in out.labels.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn early_stop_on_tolerance() {
        let z0 = array![[1.0, 0.0], [0.0, 1.0]];
        let w = Array2::zeros((2, 2));
        // with W = 0 a step scales Z by (1-α); the change 0.5 exceeds 0.1, then 0.25, 0.125, 0.0625
        let out = dilute(z0.view(), w.view(), 0.5, 50, 0.1).unwrap();
        assert_eq!(out.iterations_run, 4);
    }

    #[test]
    fn rejects_non_finite() {
        let z0 = array![[1.0, 0.0], [0.0, 1.0]];
        let w = array![[0.0, f64::NAN], [0.0, 0.0]];
        assert!(matches!(dilute(z0.view(), w.view(), 0.5, 1, 0.0), Err(Error::NonFinite(_))));
    }

    fn store(noisy: &[usize], beta: f64) -> DilutedLabelStore {
        DilutedLabelStore::new(noisy, 2, DilutionParams { beta, ..Default::default() }).unwrap()
    }

    #[test]
    fn beta_extremes() {
        let z = array![[0.2, 0.8]];
        let mut s = store(&[0], 0.0);
        s.momentum_update(&[0], z.view()).unwrap();
        assert_eq!(s.row(0).unwrap(), z.row(0));

        let mut s = store(&[0], 1.0);
        s.momentum_update(&[0], z.view()).unwrap();
        assert_eq!(s.row(0).unwrap(), array![1.0, 0.0].view());
    }

    #[test]
    fn momentum_by_hand() {
        let mut s = store(&[0], 0.9);
        s.momentum_update(&[0], array![[0.2, 0.8]].view()).unwrap();
        let r = s.row(0).unwrap();
        assert!((r[0] - 0.92).abs() < 1e-12 && (r[1] - 0.08).abs() < 1e-12);
        assert_eq!(s.tau(), 1);
        assert!(s.is_initialized(0));
    }

    #[test]
    fn unknown_id_is_rejected() {
        let mut s = store(&[0, 1], 0.9);
        assert!(matches!(s.momentum_update(&[5], array![[0.5, 0.5]].view()), Err(Error::UnknownExample(5))));
        assert!(matches!(s.diluted_argmax(2), Err(Error::UnknownExample(2))));
    }

    #[test]
    fn argmax_ties_and_scaling() {
        let mut s = store(&[1], 0.0);
        s.momentum_update(&[0], array![[0.5, 0.5]].view()).unwrap();
        assert_eq!(s.diluted_argmax(0).unwrap(), 0);
        s.momentum_update(&[0], array![[9.2, 0.8]].view()).unwrap();
        assert_eq!(s.diluted_argmax(0).unwrap(), 0);
        assert_eq!(row_argmax(array![0.92, 0.08].view()), Some(0));
        s.momentum_update(&[0], array![[0.0, 0.0]].view()).unwrap();
        assert!(matches!(s.diluted_argmax(0), Err(Error::DegenerateRow(0))));
    }

    #[test]
    fn snapshot_format() {
        let s = store(&[1, 0], 0.9);
        let mut buf = Vec::new();
        s.write_snapshot(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "id,argmax,mass_0,mass_1\n0,1,0.0,1.0\n1,0,1.0,0.0\n");
    }
}
