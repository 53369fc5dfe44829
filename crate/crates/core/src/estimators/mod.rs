//! Nonparametric k-nearest-neighbour estimators of differential entropy,
//! conditional entropy, mutual information, conditional mutual information,
//! transfer entropy and directed-information rate. All results are in bits.
//!
//! Entropies use the Kozachenko–Leonenko estimator; (conditional) mutual
//! information uses the Kraskov–Stögbauer–Grassberger construction (algorithm 1)
//! and its Frenzel–Pompe conditional extension. Joint spaces use the max-norm
//! so the marginal neighbour counts are exact.
//!
//! Every estimator first adds a deterministic jitter of amplitude
//! `1e-10 × (column standard deviation)` to break ties. The jitter of a column
//! depends only on that column's rank pattern and a fixed sub-seed, so the same
//! column gets the same jitter in joint and marginal spaces and in either
//! argument position.
//!
//! Time-series quantities condition on windows of the `lag` most recent steps
//! instead of the full past; see [`timeseries`].

mod kdtree;
mod knn;
mod permutation;
pub mod timeseries;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maxent::EntropyBits;
use crate::rng;

pub use kdtree::KdTree;
pub use knn::{conditional_entropy, conditional_mutual_information, entropy_knn, mutual_information};
pub use permutation::{cmi_noise_floor, mi_noise_floor, NoiseFloor};
pub use timeseries::{
    directed_information_rate, innovation_mutual_information, lagged_mutual_information, transfer_entropy,
    DirectedInformation, WindowedSeries,
};

/// Default neighbour count.
pub const DEFAULT_K: usize = 5;
/// Default history window.
pub const DEFAULT_LAG: usize = 5;
/// Default number of shuffles for permutation noise floors.
pub const DEFAULT_PERMUTATIONS: usize = 200;
/// Default number of shuffles for floors of window-dimensional estimates
/// (joint innovation history, transfer entropy), which cost roughly `lag`
/// times more per shuffle than pairwise ones.
pub const DEFAULT_WINDOW_PERMUTATIONS: usize = 50;
/// Number of disjoint subsamples behind every standard error.
pub const SUBSAMPLE_FOLDS: usize = 10;

const JITTER_RELATIVE: f64 = 1e-10;
const JITTER_SEED: u64 = 0x6a69_7474_6572;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("need more samples than neighbours: n = {n}, k = {k}")]
    TooFewSamples { n: usize, k: usize },
    #[error("neighbour count k must be at least 1")]
    ZeroNeighbors,
    #[error("aligned inputs differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("rows have inconsistent dimension")]
    RaggedRows,
    #[error("sample buffer of length {len} is not a multiple of dimension {dim}")]
    BadShape { len: usize, dim: usize },
    #[error("samples must have dimension at least 1")]
    ZeroDimension,
    #[error("non-finite sample value")]
    NonFinite,
    #[error("history lag must be at least 1")]
    ZeroLag,
    #[error("series of length {len} too short for lag {lag} and k {k}")]
    SeriesTooShort { len: usize, lag: usize, k: usize },
    #[error("conditioning variable is degenerate (lies on a lower-dimensional set)")]
    DegenerateConditioning,
    #[error("averaging horizon {horizon} outside 1..={available}")]
    BadHorizon { horizon: usize, available: usize },
}

/// Row-major block of `n` samples of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self, EstimatorError> {
        if dim == 0 {
            return Err(EstimatorError::ZeroDimension);
        }
        if data.len() % dim != 0 {
            return Err(EstimatorError::BadShape { len: data.len(), dim });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(EstimatorError::NonFinite);
        }
        Ok(Self { n: data.len() / dim, dim, data })
    }

    pub fn from_scalars(values: &[f64]) -> Result<Self, EstimatorError> {
        Self::new(1, values.to_vec())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, EstimatorError> {
        let dim = rows.first().map_or(1, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(EstimatorError::RaggedRows);
        }
        Self::new(dim, rows.concat())
    }

    /// Concatenates aligned blocks column-wise.
    pub fn hstack(parts: &[&SampleMatrix]) -> Result<Self, EstimatorError> {
        let n = parts.first().map_or(0, |p| p.n);
        if let Some(p) = parts.iter().find(|p| p.n != n) {
            return Err(EstimatorError::LengthMismatch(n, p.n));
        }
        let dim: usize = parts.iter().map(|p| p.dim).sum();
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Ok(Self { n, dim, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.dim + d]).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self { n: rows.len(), dim: self.dim, data }
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self { n: end - start, dim: self.dim, data: self.data[start * self.dim..end * self.dim].to_vec() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { n: self.n, dim: self.dim, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// True when the samples lie on a lower-dimensional affine set: a constant
    /// coordinate, or (for `dim ≥ 2`) a covariance eigenvalue below `1e-12`
    /// of the largest.
    pub fn is_degenerate(&self) -> bool {
        let (n, dim) = (self.n, self.dim);
        if n < 2 {
            return true;
        }
        for d in 0..dim {
            let first = self.data[d];
            if (0..n).all(|i| self.data[i * dim + d] == first) {
                return true;
            }
        }
        if dim == 1 {
            return false;
        }
        let mut mean = vec![0.0; dim];
        for i in 0..n {
            for d in 0..dim {
                mean[d] += self.data[i * dim + d];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..n {
            let r = self.row(i);
            for a in 0..dim {
                for b in a..dim {
                    cov[(a, b)] += (r[a] - mean[a]) * (r[b] - mean[b]);
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                cov[(a, b)] = cov[(b, a)];
            }
        }
        let eig = SymmetricEigen::new(cov).eigenvalues;
        let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        max <= 0.0 || min <= 1e-12 * max
    }

    /// Tie-breaking jitter; see the module docs.
    pub(crate) fn jittered(&self) -> Self {
        let (n, dim) = (self.n, self.dim);
        let mut out = self.data.clone();
        for d in 0..dim {
            let col = self.column(d);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let scale = if var > 0.0 { var.sqrt() } else { mean.abs().max(1.0) };
            let amp = JITTER_RELATIVE * scale;
            let mut r = rng::stream(JITTER_SEED ^ rank_fingerprint(&col), "jitter");
            for i in 0..n {
                out[i * dim + d] += amp * r.gen_range(-1.0..1.0);
            }
        }
        Self { n, dim, data: out }
    }
}

// Hash of the column's argsort order: invariant to shifts and positive scaling.
fn rank_fingerprint(col: &[f64]) -> u64 {
    let mut idx: Vec<u32> = (0..col.len() as u32).collect();
    idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for i in idx {
        h ^= i as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// An estimated information quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// Raw estimate, bits. Information quantities keep negative values here.
    pub value: EntropyBits,
    /// Standard error from the spread over disjoint subsamples, bits.
    pub std_error: f64,
    pub n_samples: usize,
    pub k_neighbors: usize,
    /// Set for (conditional) mutual information whose raw value is negative;
    /// [`EntropyEstimate::reported`] then returns 0.
    pub clipped: bool,
}

impl EntropyEstimate {
    pub(crate) fn entropy(nats: f64, std_error_nats: f64, n: usize, k: usize) -> Self {
        Self { value: EntropyBits::from_nats(nats), std_error: std_error_nats / std::f64::consts::LN_2, n_samples: n, k_neighbors: k, clipped: false }
    }

    pub(crate) fn information(nats: f64, std_error_nats: f64, n: usize, k: usize) -> Self {
        let mut e = Self::entropy(nats, std_error_nats, n, k);
        e.clipped = e.value.0 < 0.0;
        e
    }

    pub(crate) fn deterministic(n: usize, k: usize) -> Self {
        Self { value: EntropyBits::DETERMINISTIC, std_error: 0.0, n_samples: n, k_neighbors: k, clipped: false }
    }

    /// Exact zero, for quantities that vanish structurally (e.g. no input process).
    pub(crate) fn zero(n: usize, k: usize) -> Self {
        Self { value: EntropyBits(0.0), std_error: 0.0, n_samples: n, k_neighbors: k, clipped: false }
    }

    pub fn bits(&self) -> f64 {
        self.value.0
    }

    /// Value used in reports: information estimates are clipped at zero.
    pub fn reported(&self) -> f64 {
        if self.clipped {
            0.0
        } else {
            self.value.0
        }
    }
}

/// Estimator settings shared by diagnostics and estimated-entropy bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorParams {
    pub k: usize,
    pub lag: usize,
    /// Shuffles behind pairwise noise floors.
    pub permutations: usize,
    /// Shuffles behind window-dimensional noise floors.
    pub window_permutations: usize,
    pub seed: u64,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            lag: DEFAULT_LAG,
            permutations: DEFAULT_PERMUTATIONS,
            window_permutations: DEFAULT_WINDOW_PERMUTATIONS,
            seed: 0x5eed,
        }
    }
}

pub(crate) fn check_k(n: usize, k: usize) -> Result<(), EstimatorError> {
    if k == 0 {
        return Err(EstimatorError::ZeroNeighbors);
    }
    if n <= k {
        return Err(EstimatorError::TooFewSamples { n, k });
    }
    Ok(())
}

pub(crate) fn check_aligned(parts: &[&SampleMatrix]) -> Result<usize, EstimatorError> {
    let n = parts[0].len();
    for p in parts {
        if p.len() != n {
            return Err(EstimatorError::LengthMismatch(n, p.len()));
        }
    }
    Ok(n)
}

/// Standard error of an estimator from its spread over disjoint contiguous
/// subsamples: `sd(sub-estimates) / sqrt(folds)`. Returns 0 when the data are
/// too short to split into at least two folds of more than `k + 1` rows.
pub(crate) fn subsample_std_error(n: usize, k: usize, estimate: impl Fn(usize, usize) -> f64) -> f64 {
    let mut folds = SUBSAMPLE_FOLDS;
    while folds >= 2 && n / folds <= k + 1 {
        folds -= 1;
    }
    if folds < 2 {
        return 0.0;
    }
    let size = n / folds;
    let values: Vec<f64> = (0..folds).map(|f| estimate(f * size, (f + 1) * size)).filter(|v| v.is_finite()).collect();
    if values.len() < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    (var / values.len() as f64).sqrt()
}
