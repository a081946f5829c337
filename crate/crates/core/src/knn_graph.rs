//! Per-batch neighbor graphs over embedded features.
//!
//! Embeddings are unit-normalized, each example keeps its `k` most similar
//! batch-mates, and the clipped, powered similarities form a sparse affinity
//! `A`. The diffusion operator is the symmetric degree normalization of the
//! two-hop gram `AᵀA`, stored dense since batches are small.

use std::io::{self, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default exponent applied to clipped cosine similarities.
pub const DEFAULT_GAMMA: f64 = 3.0;

pub use crate::linalg::dot;

/// Scales each row to unit length. All-zero rows stay zero.
pub fn l2_normalize(embeddings: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = embeddings.to_owned();
    for mut row in out.rows_mut() {
        let norm = dot(row.view(), row.view()).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub similarity: f64,
}

/// For each batch position, its neighbors by descending similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    lists: Vec<Vec<Neighbor>>,
    k: usize,
}

impl NeighborList {
    /// Requested neighbor count (before clamping to `|B| - 1`).
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.lists[i]
    }

    pub fn indices(&self, i: usize) -> Vec<usize> {
        self.lists[i].iter().map(|n| n.index).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Neighbor]> {
        self.lists.iter().map(Vec::as_slice)
    }
}

/// Orders by descending similarity, then ascending index.
fn rank(a: &Neighbor, b: &Neighbor) -> std::cmp::Ordering {
    b.similarity.total_cmp(&a.similarity).then(a.index.cmp(&b.index))
}

/// Exact k-nearest neighbors under cosine similarity, by exhaustive search.
///
/// Rows are searched in parallel; each row's result depends only on that
/// row, so the output is identical for any thread count.
pub fn find_knn(embeddings: ArrayView2<'_, f64>, k: usize) -> Result<NeighborList> {
    let n = embeddings.nrows();
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if embeddings.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embeddings"));
    }
    let unit = l2_normalize(embeddings);
    let keep = k.min(n - 1);
    let lists = (0..n)
        .into_par_iter()
        .map(|i| {
            let vi = unit.row(i);
            let mut cands: Vec<Neighbor> = (0..n)
                .filter(|&j| j != i)
                .map(|j| Neighbor { index: j, similarity: dot(vi, unit.row(j)) })
                .collect();
            if keep < cands.len() {
                cands.select_nth_unstable_by(keep - 1, rank);
                cands.truncate(keep);
            }
            cands.sort_unstable_by(rank);
            cands
        })
        .collect();
    Ok(NeighborList { lists, k })
}

/// Row-sparse nonnegative affinity matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffinity {
    rows: Vec<Vec<(usize, f64)>>,
    k: usize,
    gamma: f64,
}

impl SparseAffinity {
    /// Builds an affinity from explicit rows. Entries must be finite,
    /// nonnegative and off-diagonal.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, k: usize, gamma: f64) -> Result<Self> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                if j >= n || j == i {
                    return Err(Error::InvalidParameter(format!("affinity entry ({i}, {j}) is out of range or on the diagonal")));
                }
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidParameter(format!("affinity entry ({i}, {j}) = {v} is not a finite nonnegative value")));
                }
            }
        }
        Ok(Self { rows, k, gamma })
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Number of strictly positive entries in row `i`.
    pub fn nonzeros(&self, i: usize) -> usize {
        self.rows[i].iter().filter(|(_, v)| *v > 0.0).count()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().find(|(c, _)| *c == j).map_or(0.0, |&(_, v)| v)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.size();
        let mut dense = Array2::zeros((n, n));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                dense[[i, j]] = v;
            }
        }
        dense
    }
}

/// `A_ij = max(0, v̂_i · v̂_j)^γ` for each listed neighbor `j` of `i`.
pub fn build_affinity(neighbors: &NeighborList, embeddings: ArrayView2<'_, f64>, gamma: f64) -> Result<SparseAffinity> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if embeddings.nrows() != neighbors.len() {
        return Err(Error::DimensionMismatch { what: "embeddings vs neighbor list", expected: neighbors.len(), got: embeddings.nrows() });
    }
    let unit = l2_normalize(embeddings);
    let rows = neighbors
        .lists
        .iter()
        .enumerate()
        .map(|(i, list)| {
            list.iter()
                .map(|nb| {
                    let s = dot(unit.row(i), unit.row(nb.index));
                    (nb.index, s.max(0.0).powf(gamma))
                })
                .collect()
        })
        .collect();
    Ok(SparseAffinity { rows, k: neighbors.k, gamma })
}

/// The normalized similarity operator of one mini-batch.
#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    batch_ids: Vec<usize>,
    affinity: SparseAffinity,
    gram: Array2<f64>,
    degrees: Array1<f64>,
    normalized: Array2<f64>,
}

/// Forms `W' = AᵀA`, its row sums `D`, and `W = D^{-1/2} W' D^{-1/2}`.
///
/// A zero degree gets a zero inverse square root, leaving that row and
/// column of `W` empty.
pub fn normalize(affinity: SparseAffinity) -> SimilarityGraph {
    let n = affinity.size();
    let mut gram = Array2::<f64>::zeros((n, n));
    // (AᵀA)_ij = Σ_r A_ri A_rj: every row of A contributes its outer product
    for row in &affinity.rows {
        for &(i, a) in row {
            if a == 0.0 {
                continue;
            }
            for &(j, b) in row {
                gram[[i, j]] += a * b;
            }
        }
    }
    let degrees: Array1<f64> = gram.rows().into_iter().map(|r| r.sum()).collect();
    let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let normalized = Array2::from_shape_fn((n, n), |(i, j)| gram[[i, j]] * (inv_sqrt[i] * inv_sqrt[j]));
    SimilarityGraph { batch_ids: (0..n).collect(), affinity, gram, degrees, normalized }
}

impl SimilarityGraph {
    /// Runs neighbor search, affinity construction and normalization.
    pub fn build(batch_ids: &[usize], embeddings: ArrayView2<'_, f64>, k: usize, gamma: f64) -> Result<Self> {
        if batch_ids.len() != embeddings.nrows() {
            return Err(Error::DimensionMismatch { what: "batch ids vs embeddings", expected: embeddings.nrows(), got: batch_ids.len() });
        }
        let neighbors = find_knn(embeddings, k)?;
        let affinity = build_affinity(&neighbors, embeddings, gamma)?;
        Ok(normalize(affinity).with_batch_ids(batch_ids.to_vec()))
    }

    pub fn with_batch_ids(mut self, ids: Vec<usize>) -> Self {
        assert_eq!(ids.len(), self.size(), "batch id count must match graph size");
        self.batch_ids = ids;
        self
    }

    pub fn size(&self) -> usize {
        self.degrees.len()
    }

    pub fn batch_ids(&self) -> &[usize] {
        &self.batch_ids
    }

    pub fn k(&self) -> usize {
        self.affinity.k
    }

    pub fn gamma(&self) -> f64 {
        self.affinity.gamma
    }

    pub fn affinity(&self) -> &SparseAffinity {
        &self.affinity
    }

    pub fn gram(&self) -> ArrayView2<'_, f64> {
        self.gram.view()
    }

    pub fn degrees(&self) -> ArrayView1<'_, f64> {
        self.degrees.view()
    }

    pub fn normalized(&self) -> ArrayView2<'_, f64> {
        self.normalized.view()
    }

    /// Writes the affinity as `i,j,value` triples, one per stored entry.
    pub fn write_affinity_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "i,j,value")?;
        for (i, row) in self.affinity.rows.iter().enumerate() {
            for &(j, v) in row {
                writeln!(out, "{i},{j},{v:?}")?;
            }
        }
        Ok(())
    }

    /// Writes the nonzero entries of `W` as `i,j,value` triples.
    pub fn write_normalized_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "i,j,value")?;
        for ((i, j), &v) in self.normalized.indexed_iter() {
            if v != 0.0 {
                writeln!(out, "{i},{j},{v:?}")?;
            }
        }
        Ok(())
    }
}

/// Most frequent label among the neighbors of batch position `i`; ties go
/// to the smaller class index.
pub fn dominant_label(i: usize, neighbors: &NeighborList, labels: &[usize]) -> Result<usize> {
    let list = neighbors.neighbors(i);
    if list.is_empty() {
        return Err(Error::EmptyNeighbors);
    }
    let max_label = list.iter().map(|nb| labels[nb.index]).max().unwrap_or(0);
    let mut counts = vec![0usize; max_label + 1];
    for nb in list {
        counts[labels[nb.index]] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    Ok(counts.iter().position(|&c| c == best).unwrap_or(0))
}
