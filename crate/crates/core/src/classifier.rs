//! A two-layer perceptron `d_in → d → C` with hand-derived gradients.
//!
//! The ramp-activated hidden layer is the feature embedding used to build
//! neighbor graphs; the linear head produces class logits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::dot;

pub const DEFAULT_EMBEDDING_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    /// `d × d_in`
    w1: Array2<f64>,
    b1: Array1<f64>,
    /// `C × d`
    w2: Array2<f64>,
    b2: Array1<f64>,
}

/// Gradients (or momentum buffers) shaped like a model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `|B| × C`
    pub logits: Array2<f64>,
    /// Post-activation hidden layer, `|B| × d`.
    pub embeddings: Array2<f64>,
    pre_activation: Array2<f64>,
}

impl ClassifierModel {
    /// Fan-in scaled uniform initialization: every weight and bias of a
    /// layer with fan-in `m` is drawn from `U(-1/√m, 1/√m)`.
    pub fn new(input_dim: usize, embedding_dim: usize, num_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |fan_in: usize, shape: (usize, usize)| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_simple_fn(shape, || rng.random_range(-bound..bound))
        };
        let w1 = uniform(input_dim, (embedding_dim, input_dim));
        let b1 = uniform(input_dim, (1, embedding_dim)).row(0).to_owned();
        let w2 = uniform(embedding_dim, (num_classes, embedding_dim));
        let b2 = uniform(embedding_dim, (1, num_classes)).row(0).to_owned();
        Self { w1, b1, w2, b2 }
    }

    pub fn zeros(input_dim: usize, embedding_dim: usize, num_classes: usize) -> Self {
        Self {
            w1: Array2::zeros((embedding_dim, input_dim)),
            b1: Array1::zeros(embedding_dim),
            w2: Array2::zeros((num_classes, embedding_dim)),
            b2: Array1::zeros(num_classes),
        }
    }

    pub fn from_parameters(w1: Array2<f64>, b1: Array1<f64>, w2: Array2<f64>, b2: Array1<f64>) -> Result<Self> {
        let d = w1.nrows();
        if b1.len() != d {
            return Err(Error::DimensionMismatch { what: "hidden bias", expected: d, got: b1.len() });
        }
        if w2.ncols() != d {
            return Err(Error::DimensionMismatch { what: "head input width", expected: d, got: w2.ncols() });
        }
        if b2.len() != w2.nrows() {
            return Err(Error::DimensionMismatch { what: "head bias", expected: w2.nrows(), got: b2.len() });
        }
        Ok(Self { w1, b1, w2, b2 })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn embedding_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.nrows()
    }

    pub fn parameters(&self) -> Gradients {
        Gradients { w1: self.w1.clone(), b1: self.b1.clone(), w2: self.w2.clone(), b2: self.b2.clone() }
    }

    pub fn num_parameters(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Flat mutable access in the order `w1, b1, w2, b2` (row-major).
    pub fn parameter_mut(&mut self, index: usize) -> &mut f64 {
        flat_mut(&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, index)
    }

    pub fn forward(&self, features: ArrayView2<'_, f64>) -> Result<ForwardPass> {
        if features.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { what: "feature width", expected: self.input_dim(), got: features.ncols() });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input features"));
        }
        let n = features.nrows();
        let (d, c) = (self.embedding_dim(), self.num_classes());
        let mut pre = Array2::zeros((n, d));
        let mut hidden = Array2::zeros((n, d));
        let mut logits = Array2::zeros((n, c));
        for i in 0..n {
            let x = features.row(i);
            for h in 0..d {
                let z = self.b1[h] + dot(self.w1.row(h), x);
                pre[[i, h]] = z;
                hidden[[i, h]] = z.max(0.0);
            }
            let hrow = hidden.row(i);
            for k in 0..c {
                logits[[i, k]] = self.b2[k] + dot(self.w2.row(k), hrow);
            }
        }
        Ok(ForwardPass { logits, embeddings: hidden, pre_activation: pre })
    }

    pub fn embed(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward(features)?.embeddings)
    }

    /// Argmax class per row, ties to the smallest index.
    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let pass = self.forward(features)?;
        Ok(pass.logits.rows().into_iter().map(|r| argmax(r.iter().copied())).collect())
    }

    /// Back-propagates `d_logits` through the network. Rows with
    /// `active[i] == false` are skipped outright, so they contribute nothing
    /// to any accumulated sum.
    pub fn backward(&self, features: ArrayView2<'_, f64>, pass: &ForwardPass, d_logits: ArrayView2<'_, f64>, active: &[bool]) -> Gradients {
        let (d, c) = (self.embedding_dim(), self.num_classes());
        let mut g = Gradients::zeros_like(self);
        let mut d_hidden = vec![0.0; d];
        for (i, _) in active.iter().enumerate().filter(|(_, &on)| on) {
            let dl = d_logits.row(i);
            let h = pass.embeddings.row(i);
            for k in 0..c {
                g.b2[k] += dl[k];
                for j in 0..d {
                    g.w2[[k, j]] += dl[k] * h[j];
                }
            }
            for j in 0..d {
                d_hidden[j] = if pass.pre_activation[[i, j]] > 0.0 {
                    (0..c).fold(0.0, |acc, k| acc + dl[k] * self.w2[[k, j]])
                } else {
                    0.0
                };
            }
            let x = features.row(i);
            for j in 0..d {
                let dh = d_hidden[j];
                g.b1[j] += dh;
                for (w, &xv) in g.w1.row_mut(j).iter_mut().zip(x.iter()) {
                    *w += dh * xv;
                }
            }
        }
        g
    }

    /// Selected-example cross-entropy and its parameter gradients.
    pub fn loss_and_gradients(&self, features: ArrayView2<'_, f64>, labels: &[usize], selected: &[bool]) -> Result<(f64, Gradients)> {
        let pass = self.forward(features)?;
        let (loss, d_logits) = weighted_loss(pass.logits.view(), labels, selected)?;
        Ok((loss, self.backward(features, &pass, d_logits.view(), selected)))
    }

    /// Text checkpoint with a shape header; see [`ClassifierModel::from_checkpoint_str`].
    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "LEND-CKPT v1 d_in={} d={} c={}", self.input_dim(), self.embedding_dim(), self.num_classes());
        let mut section = |name: &str, rows: Vec<Vec<f64>>| {
            let _ = writeln!(out, "{name} {}", rows.len());
            for r in rows {
                let line: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
        };
        section("w1", self.w1.rows().into_iter().map(|r| r.to_vec()).collect());
        section("b1", vec![self.b1.to_vec()]);
        section("w2", self.w2.rows().into_iter().map(|r| r.to_vec()).collect());
        section("b2", vec![self.b2.to_vec()]);
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::CheckpointShape("empty checkpoint".into()))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 5 || toks[0] != "LEND-CKPT" || toks[1] != "v1" {
            return Err(Error::CheckpointShape(format!("bad header {header:?}")));
        }
        let field = |tok: &str, key: &str| -> Result<usize> {
            tok.strip_prefix(key)
                .and_then(|v| v.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::CheckpointShape(format!("expected {key}=<int>, found {tok:?}")))
        };
        let (d_in, d, c) = (field(toks[2], "d_in")?, field(toks[3], "d")?, field(toks[4], "c")?);

        let mut read = |name: &str, nrows: usize, ncols: usize| -> Result<Array2<f64>> {
            let head = lines.next().ok_or_else(|| Error::CheckpointShape(format!("missing section {name}")))?;
            if head != format!("{name} {nrows}") {
                return Err(Error::CheckpointShape(format!("expected `{name} {nrows}`, found {head:?}")));
            }
            let mut m = Array2::zeros((nrows, ncols));
            for r in 0..nrows {
                let line = lines.next().ok_or_else(|| Error::CheckpointShape(format!("{name}: missing row {r}")))?;
                let vals: Vec<&str> = line.split_whitespace().collect();
                if vals.len() != ncols {
                    return Err(Error::CheckpointShape(format!("{name} row {r}: expected {ncols} values, found {}", vals.len())));
                }
                for (col, v) in vals.iter().enumerate() {
                    m[[r, col]] = v.parse().map_err(|_| Error::CheckpointShape(format!("{name} row {r}: bad value {v:?}")))?;
                }
            }
            Ok(m)
        };
        let w1 = read("w1", d, d_in)?;
        let b1 = read("b1", 1, d)?.row(0).to_owned();
        let w2 = read("w2", c, d)?;
        let b2 = read("b2", 1, c)?.row(0).to_owned();
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::CheckpointShape("trailing data after b2".into()));
        }
        Self::from_parameters(w1, b1, w2, b2)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_checkpoint_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_str(&text)
    }

    /// Loads a checkpoint and insists on the given shape.
    pub fn load_checkpoint_with_shape(path: impl AsRef<Path>, input_dim: usize, embedding_dim: usize, num_classes: usize) -> Result<Self> {
        let model = Self::load_checkpoint(path)?;
        let want = (input_dim, embedding_dim, num_classes);
        let got = (model.input_dim(), model.embedding_dim(), model.num_classes());
        if want != got {
            return Err(Error::CheckpointShape(format!("expected (d_in, d, c) = {want:?}, found {got:?}")));
        }
        Ok(model)
    }
}

fn flat_mut<'a>(w1: &'a mut Array2<f64>, b1: &'a mut Array1<f64>, w2: &'a mut Array2<f64>, b2: &'a mut Array1<f64>, mut index: usize) -> &'a mut f64 {
    if index < w1.len() {
        let cols = w1.ncols();
        return &mut w1[[index / cols, index % cols]];
    }
    index -= w1.len();
    if index < b1.len() {
        return &mut b1[index];
    }
    index -= b1.len();
    if index < w2.len() {
        let cols = w2.ncols();
        return &mut w2[[index / cols, index % cols]];
    }
    index -= w2.len();
    &mut b2[index]
}

impl Gradients {
    pub fn zeros_like(model: &ClassifierModel) -> Self {
        ClassifierModel::zeros(model.input_dim(), model.embedding_dim(), model.num_classes()).parameters()
    }

    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values in the order `w1, b1, w2, b2` (row-major).
    pub fn to_flat(&self) -> Vec<f64> {
        self.w1.iter().chain(self.b1.iter()).chain(self.w2.iter()).chain(self.b2.iter()).copied().collect()
    }

    pub fn scale(&mut self, factor: f64) {
        self.w1 *= factor;
        self.b1 *= factor;
        self.w2 *= factor;
        self.b2 *= factor;
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Numerically stable soft-max of one row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Sum of soft-max cross-entropies over selected rows, and the gradient
/// with respect to the logits (zero rows for unselected examples).
pub fn weighted_loss(logits: ArrayView2<'_, f64>, labels: &[usize], selected: &[bool]) -> Result<(f64, Array2<f64>)> {
    let (n, c) = logits.dim();
    if labels.len() != n || selected.len() != n {
        return Err(Error::DimensionMismatch { what: "labels/weights vs logits", expected: n, got: labels.len().min(selected.len()) });
    }
    let mut grad = Array2::zeros((n, c));
    let mut loss = 0.0;
    for i in 0..n {
        if !selected[i] {
            continue;
        }
        let y = labels[i];
        if y >= c {
            return Err(Error::LabelOutOfRange { line: i, label: y, classes: c });
        }
        let row = logits.row(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&z| (z - m).exp()).sum();
        let lse = m + sum_exp.ln();
        loss += lse - row[y];
        for k in 0..c {
            grad[[i, k]] = (row[k] - lse).exp();
        }
        grad[[i, y]] -= 1.0;
    }
    Ok((loss, grad))
}

/// Step schedule: `initial` until `decay_epoch`, then `initial / divisor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay_epoch: usize,
    pub divisor: f64,
}

impl LrSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_epoch {
            self.initial / self.divisor
        } else {
            self.initial
        }
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { initial: 0.05, decay_epoch: 100, divisor: 10.0 }
    }
}

/// SGD with heavy-ball momentum and decoupled-from-buffer weight decay:
/// `v ← μv + g`, `θ ← θ − lr·(v + λθ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub schedule: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Option<Gradients>,
}

impl OptimizerState {
    pub fn new(schedule: LrSchedule, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(schedule.initial > 0.0) || !(schedule.divisor > 0.0) || !schedule.divisor.is_finite() {
            return Err(Error::InvalidParameter("learning rate and decay divisor must be positive".into()));
        }
        if !(0.0..1.0).contains(&momentum) || !(weight_decay >= 0.0) {
            return Err(Error::InvalidParameter("momentum must lie in [0, 1) and weight decay must be nonnegative".into()));
        }
        Ok(Self { schedule, momentum, weight_decay, velocity: None })
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        self.schedule.at(epoch)
    }

    pub fn sgd_step(&mut self, model: &mut ClassifierModel, grads: &Gradients, epoch: usize) -> Result<()> {
        let zero = Gradients::zeros_like(model);
        if grads.w1.dim() != zero.w1.dim() || grads.w2.dim() != zero.w2.dim() || grads.b1.len() != zero.b1.len() || grads.b2.len() != zero.b2.len() {
            return Err(Error::DimensionMismatch { what: "gradient shape", expected: model.num_parameters(), got: grads.len() });
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradients"));
        }
        let lr = self.lr(epoch);
        let (mu, wd) = (self.momentum, self.weight_decay);
        let v = self.velocity.get_or_insert(zero);
        let step2 = |theta: &mut Array2<f64>, vel: &mut Array2<f64>, g: &Array2<f64>| {
            Zip::from(theta).and(vel).and(g).for_each(|t, v, &g| {
                *v = mu * *v + g;
                *t -= lr * (*v + wd * *t);
            });
        };
        let step1 = |theta: &mut Array1<f64>, vel: &mut Array1<f64>, g: &Array1<f64>| {
            Zip::from(theta).and(vel).and(g).for_each(|t, v, &g| {
                *v = mu * *v + g;
                *t -= lr * (*v + wd * *t);
            });
        };
        step2(&mut model.w1, &mut v.w1, &grads.w1);
        step1(&mut model.b1, &mut v.b1, &grads.b1);
        step2(&mut model.w2, &mut v.w2, &grads.w2);
        step1(&mut model.b2, &mut v.b2, &grads.b2);
        Ok(())
    }
}
