#![allow(dead_code)]

use lend::classifier::ClassifierModel;
use lend::dataset::ClusterParams;
use lend::experiment::{NoiseSetting, SyntheticData};
use lend::{LabeledDataset, LrSchedule, Method, TrainConfig};
use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// Small-integer entries, so proportional rows (and exact similarity ties)
/// show up often.
pub fn tie_heavy_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-2i32..=2) as f64)
}

fn unit_rows(x: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    x.rows()
        .into_iter()
        .map(|r| {
            let norm = r.iter().fold(0.0, |acc, v| acc + v * v).sqrt();
            r.iter().map(|&v| if norm > 0.0 { v / norm } else { v }).collect()
        })
        .collect()
}

fn plain_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

/// Exhaustive neighbor search: score every other row, full sort by
/// descending cosine then ascending index, keep the first `k`.
pub fn knn_oracle(x: ArrayView2<'_, f64>, k: usize) -> Vec<Vec<(usize, f64)>> {
    let unit = unit_rows(x);
    let n = unit.len();
    (0..n)
        .map(|i| {
            let mut all: Vec<(usize, f64)> = (0..n).filter(|&j| j != i).map(|j| (j, plain_dot(&unit[i], &unit[j]))).collect();
            all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            all.truncate(k);
            all
        })
        .collect()
}

pub fn to_na(x: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[[i, j]])
}

/// Dense affinity, `W' = AᵀA` and `D^{-1/2} W' D^{-1/2}` built from the
/// exhaustive neighbor oracle with nalgebra products.
pub struct DenseGraph {
    pub affinity: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    pub normalized: DMatrix<f64>,
}

pub fn dense_graph_oracle(x: ArrayView2<'_, f64>, k: usize, gamma: f64) -> DenseGraph {
    let n = x.nrows();
    let mut a = DMatrix::zeros(n, n);
    for (i, list) in knn_oracle(x, k).into_iter().enumerate() {
        for (j, s) in list {
            a[(i, j)] = s.max(0.0).powf(gamma);
        }
    }
    let gram = a.transpose() * &a;
    let inv: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = gram.row(i).iter().sum();
            if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }
        })
        .collect();
    let normalized = DMatrix::from_fn(n, n, |i, j| gram[(i, j)] * inv[i] * inv[j]);
    DenseGraph { affinity: a, gram, normalized }
}

/// `(αW + (1−α)I)^T Z0` by repeated dense products.
pub fn dilution_oracle(z0: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>, alpha: f64, iterations: usize) -> DMatrix<f64> {
    let n = w.nrows();
    let step = to_na(w) * alpha + DMatrix::identity(n, n) * (1.0 - alpha);
    let mut power = DMatrix::identity(n, n);
    for _ in 0..iterations {
        power = &power * &step;
    }
    power * to_na(z0)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: ArrayView2<'_, f64>) -> f64 {
    assert_eq!(a.shape(), b.dim());
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            worst = worst.max((a[(i, j)] - b[[i, j]]).abs());
        }
    }
    worst
}

/// Worst relative disagreement between analytic and central-difference
/// gradients over every parameter. Entries where both sides are below
/// `1e-7` in magnitude are compared absolutely.
pub fn gradient_check(model: &ClassifierModel, x: ArrayView2<'_, f64>, labels: &[usize], selected: &[bool], h: f64) -> f64 {
    let (_, grads) = model.loss_and_gradients(x, labels, selected).unwrap();
    let analytic = grads.to_flat();
    let mut worst: f64 = 0.0;
    for (p, &g) in analytic.iter().enumerate() {
        let mut plus = model.clone();
        *plus.parameter_mut(p) += h;
        let mut minus = model.clone();
        *minus.parameter_mut(p) -= h;
        let lp = plus.loss_and_gradients(x, labels, selected).unwrap().0;
        let lm = minus.loss_and_gradients(x, labels, selected).unwrap().0;
        let numeric = (lp - lm) / (2.0 * h);
        let scale = g.abs().max(numeric.abs());
        let err = if scale < 1e-7 { (g - numeric).abs() } else { (g - numeric).abs() / scale };
        worst = worst.max(err);
    }
    worst
}

/// Four well-separated Gaussian classes, 500 training and 250 test points
/// each, with symmetric label noise on the training split.
pub fn desk_data(seed: u64, dim: usize, noise_rate: f64) -> (LabeledDataset, LabeledDataset) {
    SyntheticData {
        clusters: ClusterParams { num_classes: 4, per_class: 500, dim, separation: 10.0, spread: 1.0, seed },
        test_per_class: 250,
        noise: if noise_rate > 0.0 { NoiseSetting::Symmetric { rate: noise_rate } } else { NoiseSetting::None },
        noise_seed: seed + 1,
    }
    .generate()
    .unwrap()
}

/// 100 epochs, batch 256, `k = 8`, lr 0.05 divided by 10 at epoch 50.
pub fn desk_config(method: Method, seed: u64) -> TrainConfig {
    TrainConfig {
        method,
        max_epochs: 100,
        batch_size: 256,
        k: 8,
        schedule: LrSchedule { initial: 0.05, decay_epoch: 50, divisor: 10.0 },
        seed,
        ..Default::default()
    }
}
