//! Batch generalization: train on `k` pairs, predict one held-out output.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{median, BoundReport, EmpiricalNorm, EntropyMethod, EntropySourceKind, HarnessError, Mode};
use crate::gaussian_oracle::{generalization_conditional_entropy, BayesLinearModel};
use crate::maxent::{empirical_lp_norm, entropy_to_lp_bound, lp_constant, EntropyBits, PNorm};
use crate::processes::{gen_regression_batch, WeightSource};
use crate::rng::derive_indexed;

/// How the test output is predicted from the training block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learner {
    /// Posterior mean under the generating prior.
    Bayes,
    /// Ridge regression `(XᵀX + λI)⁻¹ Xᵀy`.
    Ridge { lambda: f64 },
    /// Always 0.
    Zero,
}

impl Learner {
    pub fn tag(&self) -> String {
        match self {
            Learner::Bayes => "bayes".into(),
            Learner::Ridge { lambda } => format!("ridge({lambda})"),
            Learner::Zero => "zero".into(),
        }
    }

    fn predict(&self, model: &BayesLinearModel, x: &[Vec<f64>], y: &[f64], test: &[f64]) -> Result<f64, HarnessError> {
        let w: Vec<f64> = match *self {
            Learner::Zero => return Ok(0.0),
            Learner::Bayes => model.posterior(x, y)?.mean,
            Learner::Ridge { lambda } => {
                let d = test.len();
                let xm = DMatrix::from_fn(x.len(), d, |i, j| x[i][j]);
                let gram = xm.transpose() * &xm + DMatrix::identity(d, d) * lambda;
                let rhs = xm.transpose() * DVector::from_column_slice(y);
                let sol = gram
                    .clone()
                    .cholesky()
                    .map(|c| c.solve(&rhs))
                    .or_else(|| gram.pseudo_inverse(1e-12).ok().map(|g| g * &rhs))
                    .ok_or_else(|| HarnessError::Unsupported("singular ridge system".into()))?;
                sol.iter().copied().collect()
            }
        };
        Ok(w.iter().zip(test).map(|(a, b)| a * b).sum())
    }
}

/// Settings for the generalization scenario of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralizationConfig {
    pub dim: usize,
    pub train_size: usize,
    #[serde(default = "unit")]
    pub weight_var: f64,
    pub noise_var: f64,
    pub trials: usize,
    pub learners: Vec<Learner>,
}

fn unit() -> f64 {
    1.0
}

/// Per-trial bounds of a generalization experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trials: usize,
    pub bound_mean: f64,
    pub bound_median: f64,
    /// `(mean b_i^p)^{1/p}` (max at `p = ∞`): the bound on the pooled norm.
    /// Never below `bound_mean`.
    pub bound_pooled: f64,
    pub bounds: Vec<f64>,
    pub errors: Vec<f64>,
}

/// Runs `trials` independent batches. The report's bound is the mean of the
/// per-trial bounds; since the empirical norm pools errors across trials, the
/// pooled bound (also recorded) is the sharper comparison and the mean sits
/// below it.
pub fn generalization_experiment(
    model: &BayesLinearModel,
    k: usize,
    learner: Learner,
    trials: usize,
    p: PNorm,
    seed: u64,
) -> Result<BoundReport, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::Config("at least one trial required".into()));
    }
    let mut bounds = Vec::with_capacity(trials);
    let mut errors = Vec::with_capacity(trials);
    for i in 0..trials {
        let batch = gen_regression_batch(model, &WeightSource::Prior, k, derive_indexed(seed, "trial", i as u64))?;
        let h = generalization_conditional_entropy(model, &batch.train_inputs, &batch.test_input)?;
        bounds.push(entropy_to_lp_bound(h, p));
        let y_hat = learner.predict(model, &batch.train_inputs, &batch.train_outputs, &batch.test_input)?;
        errors.push(batch.test_output - y_hat);
    }
    let bound_mean = bounds.iter().sum::<f64>() / trials as f64;
    let bound_pooled = empirical_lp_norm(&bounds, p).map_err(|_| HarnessError::Empty)?;
    let entropy = if bound_mean > 0.0 { EntropyBits((lp_constant(p) * bound_mean).log2()) } else { EntropyBits::DETERMINISTIC };
    // Trials are independent, so batch means are as good as any ordering.
    let empirical: EmpiricalNorm = super::empirical_norm(&errors, p)?;
    let mut r = BoundReport::assemble(
        learner.tag(),
        seed,
        p,
        Mode::Generalization,
        entropy,
        EntropySourceKind::Oracle,
        EntropyMethod::Posterior,
        empirical,
    );
    r.trials = Some(TrialSummary { trials, bound_mean, bound_median: median(&bounds), bound_pooled, bounds, errors });
    Ok(r)
}
