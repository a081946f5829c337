//! Labeled datasets, label-noise models and the on-disk dataset format.
//!
//! A [`LabeledDataset`] carries both the clean and the observed (noisy)
//! label of every example. Training code only ever sees the noisy side
//! through [`NoisyView`]; clean labels exist for evaluation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    ids: Vec<usize>,
    features: Array2<f64>,
    clean_labels: Vec<usize>,
    noisy_labels: Vec<usize>,
    num_classes: usize,
    split: Split,
}

impl LabeledDataset {
    /// Builds a dataset, checking every structural invariant.
    ///
    /// `ids` must be a permutation of `0..n`.
    pub fn new(
        ids: Vec<usize>,
        features: Array2<f64>,
        clean_labels: Vec<usize>,
        noisy_labels: Vec<usize>,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::InvalidParameter("dataset must hold at least one example".into()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidParameter("dataset needs at least one class".into()));
        }
        for (what, len) in [("ids", ids.len()), ("clean labels", clean_labels.len()), ("noisy labels", noisy_labels.len())] {
            if len != n {
                return Err(Error::DimensionMismatch { what, expected: n, got: len });
            }
        }
        let mut seen = vec![false; n];
        for &id in &ids {
            if id >= n || seen[id] {
                return Err(Error::InvalidParameter(format!("ids must be unique and dense in [0, {n}); offending id {id}")));
            }
            seen[id] = true;
        }
        for (row, &label) in clean_labels.iter().chain(noisy_labels.iter()).enumerate() {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange { line: row % n, label, classes: num_classes });
            }
        }
        Ok(Self { ids, features, clean_labels, noisy_labels, num_classes, split })
    }

    /// Dataset whose noisy labels start out equal to the clean ones.
    pub fn from_clean(features: Array2<f64>, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        let ids = (0..features.nrows()).collect();
        Self::new(ids, features, labels.clone(), labels, num_classes, split)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn clean_labels(&self) -> &[usize] {
        &self.clean_labels
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    /// Fraction of examples whose observed label differs from the clean one.
    pub fn noise_fraction(&self) -> f64 {
        let flipped = self.clean_labels.iter().zip(&self.noisy_labels).filter(|(c, n)| c != n).count();
        flipped as f64 / self.len() as f64
    }

    /// Position of example `id` in storage order.
    pub fn position_of(&self, id: usize) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    /// Training-side view that hides the clean labels.
    pub fn noisy_view(&self) -> NoisyView<'_> {
        NoisyView { dataset: self }
    }

    /// Same examples with rows reordered so that row `r` is old row `order[r]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::DimensionMismatch { what: "permutation", expected: self.len(), got: order.len() });
        }
        let features = self.features.select(ndarray::Axis(0), order);
        let pick = |v: &[usize]| order.iter().map(|&r| v[r]).collect::<Vec<_>>();
        Self::new(
            pick(&self.ids),
            features,
            pick(&self.clean_labels),
            pick(&self.noisy_labels),
            self.num_classes,
            self.split,
        )
    }
}

/// Read-only access to features and observed labels, keyed by example id.
///
/// The training loop is handed this instead of the dataset so it cannot
/// consult clean labels.
#[derive(Debug, Clone, Copy)]
pub struct NoisyView<'a> {
    dataset: &'a LabeledDataset,
}

impl<'a> NoisyView<'a> {
    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dataset.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.dataset.num_classes
    }

    pub fn ids(&self) -> &'a [usize] {
        &self.dataset.ids
    }

    pub fn features(&self) -> ArrayView2<'a, f64> {
        self.dataset.features.view()
    }

    /// Feature row stored at position `pos`.
    pub fn row(&self, pos: usize) -> ArrayView1<'a, f64> {
        self.dataset.features.row(pos)
    }

    pub fn noisy_labels(&self) -> &'a [usize] {
        &self.dataset.noisy_labels
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NoiseKind {
    Symmetric,
    /// Pair flipping; `partners[i]` is the class that class `i` flips into.
    Asymmetric { partners: Vec<usize> },
}

/// A label-noise process `p(noisy = j | clean = i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    kind: NoiseKind,
    rate: f64,
    transition: Array2<f64>,
    seed: u64,
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidParameter(format!("noise rate must lie in [0, 1), got {rate}")));
    }
    Ok(())
}

fn check_classes(num_classes: usize) -> Result<()> {
    if num_classes < 2 {
        return Err(Error::InvalidParameter(format!("noise needs at least 2 classes, got {num_classes}")));
    }
    Ok(())
}

/// Uniform flipping: keep the label with probability `1 - rate`, otherwise
/// move to each other class with probability `rate / (C - 1)`.
pub fn make_symmetric_spec(num_classes: usize, rate: f64, seed: u64) -> Result<NoiseSpec> {
    check_classes(num_classes)?;
    check_rate(rate)?;
    let off = rate / (num_classes - 1) as f64;
    let transition = Array2::from_shape_fn((num_classes, num_classes), |(i, j)| if i == j { 1.0 - rate } else { off });
    Ok(NoiseSpec { kind: NoiseKind::Symmetric, rate, transition, seed })
}

/// Cyclic partner map `i -> (i + 1) mod C`.
pub fn default_partners(num_classes: usize) -> Vec<usize> {
    (0..num_classes).map(|i| (i + 1) % num_classes).collect()
}

/// Pair flipping: class `i` keeps its label with probability `1 - rate` and
/// flips to `partners[i]` otherwise.
pub fn make_asymmetric_spec(num_classes: usize, rate: f64, partners: &[usize], seed: u64) -> Result<NoiseSpec> {
    check_classes(num_classes)?;
    check_rate(rate)?;
    if partners.len() != num_classes {
        return Err(Error::DimensionMismatch { what: "partner map", expected: num_classes, got: partners.len() });
    }
    for (i, &p) in partners.iter().enumerate() {
        if p == i {
            return Err(Error::PartnerFixedPoint(i));
        }
        if p >= num_classes {
            return Err(Error::InvalidParameter(format!("partner {p} of class {i} is out of range")));
        }
    }
    if rate >= 0.5 {
        return Err(Error::UnidentifiableNoise { rate });
    }
    let mut transition = Array2::zeros((num_classes, num_classes));
    for (i, &p) in partners.iter().enumerate() {
        transition[[i, i]] = 1.0 - rate;
        transition[[i, p]] += rate;
    }
    Ok(NoiseSpec {
        kind: NoiseKind::Asymmetric { partners: partners.to_vec() },
        rate,
        transition,
        seed,
    })
}

impl NoiseSpec {
    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_classes(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> ArrayView2<'_, f64> {
        self.transition.view()
    }

    /// Checks row-stochasticity within 1e-12 and entrywise nonnegativity.
    pub fn is_row_stochastic(&self) -> bool {
        self.transition.rows().into_iter().all(|row| {
            row.iter().all(|&p| p >= 0.0 && p.is_finite()) && (row.sum() - 1.0).abs() <= ROW_SUM_TOL
        })
    }

    /// Draws a noisy label for example `id` whose clean label is `clean`.
    ///
    /// Each id owns its own ChaCha stream, so the draw does not depend on
    /// the order in which examples are visited.
    pub fn sample(&self, id: usize, clean: usize) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id as u64);
        let u: f64 = rng.random();
        let row = self.transition.row(clean);
        let mut acc = 0.0;
        let mut last_nonzero = clean;
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                last_nonzero = j;
            }
            acc += p;
            if u < acc {
                return j;
            }
        }
        // u landed in the rounding slack above the accumulated row sum
        last_nonzero
    }
}

/// Replaces the noisy labels of `dataset` with draws from `spec`.
pub fn inject_noise(dataset: &LabeledDataset, spec: &NoiseSpec) -> Result<LabeledDataset> {
    if dataset.num_classes != spec.num_classes() {
        return Err(Error::DimensionMismatch {
            what: "noise transition",
            expected: dataset.num_classes,
            got: spec.num_classes(),
        });
    }
    let noisy = dataset
        .ids
        .iter()
        .zip(&dataset.clean_labels)
        .map(|(&id, &clean)| spec.sample(id, clean))
        .collect();
    Ok(LabeledDataset { noisy_labels: noisy, ..dataset.clone() })
}

/// Parameters of a synthetic isotropic Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    pub num_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub spread: f64,
    pub seed: u64,
}

/// Cluster centers with pairwise distance at least `separation`.
///
/// With `C <= dim` the centers sit on scaled coordinate axes, which puts
/// every pair at distance exactly `separation`. Otherwise they are drawn
/// on a sphere by rejection, widening the sphere until a placement fits.
fn cluster_centers(params: &ClusterParams, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (c, d, sep) = (params.num_classes, params.dim, params.separation);
    if c <= d {
        let scale = sep / std::f64::consts::SQRT_2;
        return Array2::from_shape_fn((c, d), |(i, j)| if i == j { scale } else { 0.0 });
    }
    let mut radius = sep;
    loop {
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(c);
        let mut attempts = 0;
        while centers.len() < c && attempts < 10_000 {
            attempts += 1;
            let raw: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let cand: Vec<f64> = raw.iter().map(|x| x / norm * radius).collect();
            let far_enough = centers.iter().all(|other| {
                other.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= sep
            });
            if far_enough {
                centers.push(cand);
            }
        }
        if centers.len() == c {
            return Array2::from_shape_fn((c, d), |(i, j)| centers[i][j]);
        }
        radius *= 1.5;
    }
}

/// Generates `num_classes` Gaussian blobs; example labels are blob indices.
pub fn make_gaussian_clusters(params: &ClusterParams, split: Split) -> Result<LabeledDataset> {
    if params.num_classes == 0 || params.per_class == 0 || params.dim == 0 {
        return Err(Error::InvalidParameter("num_classes, per_class and dim must all be positive".into()));
    }
    if !(params.separation > 0.0) || !(params.spread > 0.0) {
        return Err(Error::InvalidParameter("separation and spread must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let centers = cluster_centers(params, &mut rng);
    let n = params.num_classes * params.per_class;
    let mut features = Array2::zeros((n, params.dim));
    let mut labels = Vec::with_capacity(n);
    for class in 0..params.num_classes {
        for k in 0..params.per_class {
            let row = class * params.per_class + k;
            for j in 0..params.dim {
                let z: f64 = rng.sample(StandardNormal);
                features[[row, j]] = centers[[class, j]] + params.spread * z;
            }
            labels.push(class);
        }
    }
    LabeledDataset::from_clean(features, labels, params.num_classes, split)
}

/// Draws `per_class + test_per_class` points per cluster around shared
/// centers and splits them into a train set (`per_class` each) and a test
/// set (`test_per_class` each), both with dense ids.
pub fn make_gaussian_split(params: &ClusterParams, test_per_class: usize) -> Result<(LabeledDataset, LabeledDataset)> {
    if test_per_class == 0 {
        return Err(Error::InvalidParameter("test_per_class must be positive".into()));
    }
    let total = params.per_class + test_per_class;
    let all = make_gaussian_clusters(&ClusterParams { per_class: total, ..params.clone() }, Split::Train)?;
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for class in 0..params.num_classes {
        let start = class * total;
        train_rows.extend(start..start + params.per_class);
        test_rows.extend(start + params.per_class..start + total);
    }
    let take = |rows: &[usize], split: Split| {
        let features = all.features.select(ndarray::Axis(0), rows);
        let labels = rows.iter().map(|&r| all.clean_labels[r]).collect();
        LabeledDataset::from_clean(features, labels, params.num_classes, split)
    };
    Ok((take(&train_rows, Split::Train)?, take(&test_rows, Split::Test)?))
}

const HEADER_MAGIC: &str = "LEND-DS";
const HEADER_VERSION: &str = "v1";

/// Renders a dataset in the `LEND-DS v1` text format.
///
/// Floats use Rust's shortest round-trip representation, so parsing the
/// text back yields bit-identical values.
pub fn dataset_to_string(dataset: &LabeledDataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER_MAGIC} {HEADER_VERSION} n={} d={} c={}", dataset.len(), dataset.dim(), dataset.num_classes);
    for (pos, row) in dataset.features.rows().into_iter().enumerate() {
        let _ = write!(out, "{} {} {}", dataset.ids[pos], dataset.clean_labels[pos], dataset.noisy_labels[pos]);
        for v in row {
            let _ = write!(out, " {v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn save_dataset(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, dataset_to_string(dataset)).map_err(|e| Error::io(path, e))
}

fn header_field(token: Option<&str>, key: &str) -> Result<usize> {
    let token = token.ok_or_else(|| Error::MalformedHeader(format!("missing {key}=")))?;
    let value = token
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| Error::MalformedHeader(format!("expected {key}=<int>, found {token:?}")))?;
    value
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("{key} is not a nonnegative integer: {value:?}")))
}

/// Parses the `LEND-DS v1` text format. `split` tags the result; the file
/// itself does not record it.
pub fn parse_dataset(text: &str, split: Split) -> Result<LabeledDataset> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::MalformedHeader("empty file".into()))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some(HEADER_MAGIC) || tokens.next() != Some(HEADER_VERSION) {
        return Err(Error::MalformedHeader(format!("expected `{HEADER_MAGIC} {HEADER_VERSION}`, found {header:?}")));
    }
    let n = header_field(tokens.next(), "n")?;
    let d = header_field(tokens.next(), "d")?;
    let c = header_field(tokens.next(), "c")?;
    if tokens.next().is_some() {
        return Err(Error::MalformedHeader("trailing tokens after c=".into()));
    }
    if n == 0 || c == 0 {
        return Err(Error::MalformedHeader("n and c must be positive".into()));
    }

    let mut ids = Vec::with_capacity(n);
    let mut clean = Vec::with_capacity(n);
    let mut noisy = Vec::with_capacity(n);
    let mut features = Array2::zeros((n, d));
    let mut row = 0;
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        if row == n {
            return Err(Error::RowLength { line: line_no, expected: 0, found: line.split_whitespace().count() });
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != d + 3 {
            return Err(Error::RowLength { line: line_no, expected: d + 3, found: fields.len() });
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse { line: line_no, field: s.to_string() });
        let id = int(fields[0])?;
        let labels = [int(fields[1])?, int(fields[2])?];
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::LabelOutOfRange { line: line_no, label: bad, classes: c });
        }
        for (j, s) in fields[3..].iter().enumerate() {
            features[[row, j]] = s.parse::<f64>().map_err(|_| Error::Parse { line: line_no, field: s.to_string() })?;
        }
        ids.push(id);
        clean.push(labels[0]);
        noisy.push(labels[1]);
        row += 1;
    }
    if row != n {
        return Err(Error::RowLength { line: row + 2, expected: n, found: row });
    }
    LabeledDataset::new(ids, features, clean, noisy, c, split)
}

pub fn load_dataset(path: impl AsRef<Path>, split: Split) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, split)
}
