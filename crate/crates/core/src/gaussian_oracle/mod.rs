//! Closed-form entropies for linear-Gaussian systems.
//!
//! Given the inputs, the outputs of a [`LinearGaussianModel`] are jointly
//! Gaussian with a covariance that does not depend on the input values, so
//! every conditional entropy reduces to a conditional variance. The Kalman
//! recursion computes these in `O(k)`; the covariance-assembly routines here do
//! it by brute force and serve as an independent check.

mod bayes;
mod kalman;
mod model;
mod spectral;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maxent::EntropyBits;

pub use bayes::{generalization_conditional_entropy, BayesLinearModel, Posterior};
pub use kalman::KalmanFilter;
pub use model::{spectral_radius, stationary_covariance, LinearGaussianModel, ModelSpec};
pub use spectral::{ar_spectrum, arma_spectrum, szego_entropy_rate, szego_prediction_variance};

/// Iteration cap for the steady-state Riccati recursion.
pub const RICCATI_MAX_ITERATIONS: usize = 1_000_000;
/// Relative change over one step at which the recursion counts as converged.
pub const RICCATI_TOLERANCE: f64 = 1e-12;

// Conditional variances below this fraction of the unconditional one are
// treated as exact zeros (deterministic relations).
const DETERMINISTIC_RELATIVE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{what} has shape {got:?}, expected {expected:?}")]
    Dimension { what: &'static str, expected: (usize, usize), got: (usize, usize) },
    #[error("{0} must be symmetric")]
    NotSymmetric(&'static str),
    #[error("{0} must be positive semidefinite")]
    NotPsd(&'static str),
    #[error("{0} has rows of different lengths")]
    Ragged(&'static str),
    #[error("state dimension must be at least 1")]
    EmptyState,
    #[error("model contains non-finite entries")]
    NonFinite,
    #[error("noise variance must be non-negative and finite, got {0}")]
    NegativeNoise(f64),
    #[error("state transition is not stable: spectral radius {0} >= 1")]
    Unstable(f64),
    #[error("Riccati recursion did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("spectral density must be positive, got {value} at omega = {omega}")]
    NonPositiveSpectrum { omega: f64, value: f64 },
    #[error("quadrature grid must have at least one point")]
    EmptyGrid,
    #[error("observed label {index} is not before step {step}")]
    MaskOutOfRange { index: usize, step: usize },
    #[error("input has dimension {got}, model expects {expected}")]
    InputDimension { expected: usize, got: usize },
}

/// One-step innovation variances `Var(y_k | observed y_{<k}, x_{0..k})` for
/// `k = 0..steps`. `observed[k] == false` means `y_k` is not conditioned on
/// at later steps; `None` observes every label.
pub fn innovation_variance_path(model: &LinearGaussianModel, steps: usize, observed: Option<&[bool]>) -> Vec<f64> {
    let mut mean = nalgebra::DVector::zeros(model.state_dim());
    let mut cov = model.initial_covariance().clone();
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let s = kalman::innovation_variance(model, &cov);
        out.push(s);
        if observed.map_or(true, |o| o.get(k).copied().unwrap_or(true)) {
            kalman::measurement_update(model, &mut mean, &mut cov, None, s);
        }
        cov = kalman::covariance_time_update(model, &cov);
    }
    out
}

pub(crate) fn entropy_of(variance: f64, reference: f64) -> EntropyBits {
    if variance <= DETERMINISTIC_RELATIVE * reference.max(f64::MIN_POSITIVE) {
        EntropyBits::DETERMINISTIC
    } else {
        EntropyBits::gaussian(variance)
    }
}

/// `h(y_k | y_{0..k-1}, x_{0..k})` from the time-varying Riccati recursion.
pub fn finite_horizon_conditional_entropy(model: &LinearGaussianModel, k: usize) -> EntropyBits {
    let path = innovation_variance_path(model, k + 1, None);
    let prior = innovation_variance_path(model, k + 1, Some(&vec![false; k + 1]));
    entropy_of(path[k], prior[k])
}

/// Steady state of the Riccati recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub innovation_variance: f64,
    pub iterations: usize,
}

/// Iterates the Riccati recursion from the initial covariance until the
/// predicted covariance changes by less than [`RICCATI_TOLERANCE`] relative
/// over one step.
pub fn riccati_steady_state(model: &LinearGaussianModel) -> Result<SteadyState, OracleError> {
    model.require_stable()?;
    let mut mean = nalgebra::DVector::zeros(model.state_dim());
    let mut cov = model.initial_covariance().clone();
    for it in 1..=RICCATI_MAX_ITERATIONS {
        let s = kalman::innovation_variance(model, &cov);
        let mut next = cov.clone();
        kalman::measurement_update(model, &mut mean, &mut next, None, s);
        let next = kalman::covariance_time_update(model, &next);
        let change = (&next - &cov).amax();
        let size = next.amax().max(cov.amax());
        cov = next;
        if change <= RICCATI_TOLERANCE * size || size == 0.0 {
            return Ok(SteadyState { innovation_variance: kalman::innovation_variance(model, &cov), iterations: it });
        }
    }
    Err(OracleError::NoConvergence(RICCATI_MAX_ITERATIONS))
}

/// Causally conditional entropy rate `h_∞(y ‖ x)`.
pub fn conditional_entropy_rate(model: &LinearGaussianModel) -> Result<EntropyBits, OracleError> {
    let s = riccati_steady_state(model)?;
    let stationary = stationary_covariance(model.transition(), model.state_noise())?;
    let c = model.output_map();
    let reference = (c * stationary * c.transpose())[0] + model.output_noise();
    Ok(entropy_of(s.innovation_variance, reference))
}

/// Covariance of `(y_0, …, y_{steps-1})` given the inputs.
pub fn output_covariance(model: &LinearGaussianModel, steps: usize) -> DMatrix<f64> {
    let a = model.transition();
    let c = model.output_map();
    let mut sigma = model.initial_covariance().clone();
    let mut out = DMatrix::zeros(steps, steps);
    for i in 0..steps {
        // c A^{j-i} Σ_i for j ≥ i
        let mut row = c * &sigma;
        for j in i..steps {
            let v = (&row * c.transpose())[0];
            out[(i, j)] = v;
            out[(j, i)] = v;
            row = &row * a.transpose();
        }
        out[(i, i)] += model.output_noise();
        sigma = a * &sigma * a.transpose() + model.state_noise();
    }
    out
}

/// Result of conditioning on a subset of past labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskedEntropy {
    pub entropy: EntropyBits,
    /// Set when the observed block was singular and had to be regularized.
    pub regularized: bool,
}

/// `h(y_k | y_observed, x_{0..k})` by assembling the output covariance and
/// taking the Schur complement. A singular observed block gets a ridge of
/// `1e-12 · trace`, grown tenfold until it factors, and the result is flagged.
pub fn masked_conditional_entropy(
    model: &LinearGaussianModel,
    k: usize,
    observed: &[usize],
) -> Result<MaskedEntropy, OracleError> {
    if let Some(&index) = observed.iter().find(|&&i| i >= k) {
        return Err(OracleError::MaskOutOfRange { index, step: k });
    }
    let mut idx = observed.to_vec();
    idx.sort_unstable();
    idx.dedup();
    let cov = output_covariance(model, k + 1);
    let prior = cov[(k, k)];
    if idx.is_empty() {
        return Ok(MaskedEntropy { entropy: entropy_of(prior, prior), regularized: false });
    }
    let m = idx.len();
    let mut block = DMatrix::from_fn(m, m, |i, j| cov[(idx[i], idx[j])]);
    let cross = DMatrix::from_fn(m, 1, |i, _| cov[(idx[i], k)]);
    let mut regularized = false;
    let trace = block.trace().max(f64::MIN_POSITIVE);
    let mut ridge = 1e-12 * trace;
    let chol = loop {
        match block.clone().cholesky() {
            Some(c) => break c,
            None => {
                regularized = true;
                for i in 0..m {
                    block[(i, i)] += ridge;
                }
                ridge *= 10.0;
            }
        }
    };
    let var = prior - (cross.transpose() * chol.solve(&cross))[(0, 0)];
    Ok(MaskedEntropy { entropy: entropy_of(var.max(0.0), prior), regularized })
}

/// `h(y_k | y_{0..k-1}, x_{0..k})` by brute-force covariance conditioning.
pub fn brute_force_conditional_entropy(model: &LinearGaussianModel, k: usize) -> Result<MaskedEntropy, OracleError> {
    masked_conditional_entropy(model, k, &(0..k).collect::<Vec<_>>())
}
