//! Bounds, empirical errors, gaps and achievability diagnostics.
//!
//! A [`BoundReport`] compares the empirical L_p norm of a predictor's
//! innovations with the entropic lower bound `2^h / c_p`, where `h` is the
//! conditional entropy of the next output given everything the predictor was
//! allowed to see. With an oracle entropy the gap can only be negative by
//! Monte-Carlo noise; estimated entropies carry estimator bias and no such
//! guarantee.

mod config;
mod generalization;
mod output;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{
    cmi_noise_floor, conditional_entropy, conditional_mutual_information, directed_information_rate, lagged_mutual_information,
    mi_noise_floor, mutual_information, EntropyEstimate, EstimatorError, EstimatorParams, NoiseFloor, SampleMatrix,
    WindowedSeries,
};
use crate::gaussian_oracle::{
    entropy_of, innovation_variance_path, riccati_steady_state, stationary_covariance, LinearGaussianModel, OracleError,
};
use crate::maxent::{empirical_lp_norm, entropy_to_lp_bound, lp_constant, EntropyBits, MaxEntDistribution, PNorm};
use crate::predictors::{PredictionTrace, PredictorError};
use crate::processes::{GeneratorTag, ProcessError, Trajectory};
use crate::rng::derive_seed;

pub use config::{
    run_scenario, run_trajectory, BenchConfig, Failure, ProcessSpec, ScenarioConfig, ScenarioOutcome, DEFAULT_MASK_RATE,
};
pub use generalization::{generalization_experiment, GeneralizationConfig, Learner, TrialSummary};
pub use output::{write_plot_data, write_reports_csv, CSV_HEADER};

/// Runs at least this long use the steady-state entropy rate.
pub const RATE_MIN_LENGTH: usize = 200;
/// Contiguous batches behind the Monte-Carlo standard error of an empirical norm.
pub const MC_BATCHES: usize = 20;
/// Oracle gaps may fall this many standard errors below zero.
pub const GAP_TOLERANCE_SE: f64 = 3.0;
/// Diagnostics need at least this many samples per window step.
pub const MIN_SAMPLES_PER_LAG: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("trace has {trace} steps, trajectory has {trajectory}")]
    Misaligned { trace: usize, trajectory: usize },
    #[error("no closed-form conditional entropy: {0}")]
    NoOracle(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("series of length {len} too short for lag {lag}: need at least {need}")]
    TooShort { len: usize, lag: usize, need: usize },
    #[error("empty error sample")]
    Empty,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

/// Which information set the predictor had.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Supervised,
    Semi,
    Unsupervised,
    Generalization,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Supervised => "supervised",
            Mode::Semi => "semi",
            Mode::Unsupervised => "unsupervised",
            Mode::Generalization => "generalization",
        }
    }

    /// Mode implied by a trajectory's label mask.
    pub fn of(t: &Trajectory) -> Mode {
        match &t.label_mask {
            None => Mode::Supervised,
            Some(m) if m.iter().all(|&b| b) => Mode::Supervised,
            Some(m) if !m.is_empty() && m.iter().all(|&b| !b) => Mode::Unsupervised,
            Some(_) => Mode::Semi,
        }
    }
}

/// Where the conditional entropy comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropySourceKind {
    #[default]
    Oracle,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntropySource {
    /// Closed form from the trajectory's generator.
    Oracle,
    /// k-NN estimate over `lag`-step windows.
    Estimated(EstimatorParams),
}

impl EntropySource {
    pub fn kind(&self) -> EntropySourceKind {
        match self {
            EntropySource::Oracle => EntropySourceKind::Oracle,
            EntropySource::Estimated(_) => EntropySourceKind::Estimated,
        }
    }
}

/// How the conditional entropy was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMethod {
    /// Entropy of the i.i.d. driving noise, exact for AR processes given their past.
    InnovationLaw,
    /// Steady-state Riccati entropy rate.
    RiccatiRate,
    /// Per-step Kalman innovation variances, pooled over the run.
    KalmanPath,
    /// Windowed k-NN estimate.
    Knn,
    /// Per-trial posterior-predictive entropies (generalization).
    Posterior,
}

/// Conditional entropy of the next output, constant or per step.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleEntropy {
    Constant(EntropyBits),
    PerStep(Vec<EntropyBits>),
}

impl OracleEntropy {
    /// Bound on the L_p norm pooled over the run. Per-step bounds `b_k` pool as
    /// `(mean b_k^p)^{1/p}`, and as `max b_k` at `p = ∞`, since the pooled
    /// `E|e|^p` is the average of the per-step ones.
    pub fn pooled_bound(&self, p: PNorm) -> f64 {
        match self {
            OracleEntropy::Constant(h) => entropy_to_lp_bound(*h, p),
            OracleEntropy::PerStep(hs) if hs.is_empty() => 0.0,
            OracleEntropy::PerStep(hs) => {
                let b: Vec<f64> = hs.iter().map(|h| entropy_to_lp_bound(*h, p)).collect();
                empirical_lp_norm(&b, p).expect("non-empty")
            }
        }
    }

    /// Entropy whose bound is the pooled bound.
    pub fn effective_entropy(&self, p: PNorm) -> EntropyBits {
        match self {
            OracleEntropy::Constant(h) => *h,
            OracleEntropy::PerStep(_) => {
                let b = self.pooled_bound(p);
                if b > 0.0 {
                    EntropyBits((lp_constant(p) * b).log2())
                } else {
                    EntropyBits::DETERMINISTIC
                }
            }
        }
    }
}

/// Closed-form conditional entropy for `t` under its label mask.
///
/// AR processes with all labels and a known presample use the noise entropy
/// directly (exact for any innovation law). Otherwise the process must be
/// Gaussian: long fully labelled runs use the Riccati rate, everything else the
/// per-step Kalman innovation variances with masked labels skipped.
pub fn oracle_entropy(t: &Trajectory) -> Result<(OracleEntropy, EntropyMethod), HarnessError> {
    let all_labeled = Mode::of(t) == Mode::Supervised;
    let model = match &t.generator {
        GeneratorTag::Ar { coeffs, innovation, .. } => {
            if all_labeled && t.presample.len() >= coeffs.len() {
                return Ok((OracleEntropy::Constant(innovation.entropy()), EntropyMethod::InnovationLaw));
            }
            if innovation.p() != PNorm::TWO {
                return Err(HarnessError::NoOracle(format!(
                    "AR process with p = {} innovations and missing labels or past",
                    innovation.p()
                )));
            }
            LinearGaussianModel::ar(coeffs, innovation.variance())?
        }
        GeneratorTag::Lgssm { .. } => t.model().ok_or_else(|| HarnessError::NoOracle("unreadable model".into()))?,
        GeneratorTag::External { source } => {
            return Err(HarnessError::NoOracle(format!("external data from {source}")));
        }
    };
    if all_labeled && t.len() >= RATE_MIN_LENGTH {
        if let Ok(ss) = riccati_steady_state(&model) {
            let stationary = stationary_covariance(model.transition(), model.state_noise())?;
            let c = model.output_map();
            let reference = (c * stationary * c.transpose())[0] + model.output_noise();
            return Ok((OracleEntropy::Constant(entropy_of(ss.innovation_variance, reference)), EntropyMethod::RiccatiRate));
        }
    }
    // Presample outputs are observed labels preceding step 0.
    let pre = t.presample.len();
    let total = pre + t.len();
    let observed: Vec<bool> = std::iter::repeat(true).take(pre).chain((0..t.len()).map(|k| t.is_labeled(k))).collect();
    let path = innovation_variance_path(&model, total, Some(&observed));
    let prior = innovation_variance_path(&model, total, Some(&vec![false; total]));
    let hs = (pre..total).map(|k| entropy_of(path[k], prior[k])).collect();
    Ok((OracleEntropy::PerStep(hs), EntropyMethod::KalmanPath))
}

fn input_matrix(t: &Trajectory) -> Result<Option<SampleMatrix>, HarnessError> {
    if t.input_dim == 0 {
        Ok(None)
    } else {
        Ok(Some(SampleMatrix::new(t.input_dim, t.inputs.clone())?))
    }
}

/// `h(y_t | y_{t-1..t-lag}, x_{t..t-lag})` by k-NN over fully labelled data.
pub fn estimated_entropy(t: &Trajectory, params: &EstimatorParams) -> Result<EntropyEstimate, HarnessError> {
    if Mode::of(t) != Mode::Supervised {
        return Err(HarnessError::Unsupported("estimated entropies need every label".into()));
    }
    let input = input_matrix(t)?;
    let w = WindowedSeries::embed(input.as_ref(), &t.outputs, params.lag, params.k)?;
    let z = match &w.input_window {
        Some(x) => SampleMatrix::hstack(&[&w.history, x])?,
        None => w.history.clone(),
    };
    Ok(conditional_entropy(&w.target, &z, params.k)?)
}

/// Empirical L_p norm of an error sample with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalNorm {
    pub value: f64,
    /// For finite `p`: delta-method error of the norm from the spread of
    /// `mean |e|^p` over contiguous batches, valid for correlated errors.
    /// For `p = ∞`: spread of the batch maxima, a conservative scale for how
    /// far the sample maximum falls short of the essential supremum.
    pub std_error: f64,
    pub n_samples: usize,
    /// Set at `p = ∞`: the value is the sample maximum, a lower estimate of
    /// the essential supremum.
    pub sample_maximum: bool,
}

pub fn empirical_norm(errors: &[f64], p: PNorm) -> Result<EmpiricalNorm, HarnessError> {
    let n = errors.len();
    let value = empirical_lp_norm(errors, p).map_err(|_| HarnessError::Empty)?;
    let batches = MC_BATCHES.min(n);
    let std_error = if batches < 2 {
        0.0
    } else {
        let size = n / batches;
        let chunks = errors[..size * batches].chunks(size);
        match p.finite() {
            None => sample_sd(&chunks.map(|c| c.iter().fold(0.0f64, |m, x| m.max(x.abs()))).collect::<Vec<_>>()),
            Some(q) => {
                let means: Vec<f64> = chunks.map(|c| c.iter().map(|x| x.abs().powf(q)).sum::<f64>() / c.len() as f64).collect();
                let m = value.powf(q);
                let se_m = sample_sd(&means) / (batches as f64).sqrt();
                if m > 0.0 {
                    se_m * value / (q * m)
                } else {
                    0.0
                }
            }
        }
    };
    Ok(EmpiricalNorm { value, std_error, n_samples: n, sample_maximum: p.is_infinite() })
}

pub(crate) fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / n as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64).sqrt()
}

pub(crate) fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Kolmogorov–Smirnov distance between the empirical law of `sample` and `law`.
pub fn density_fit_distance(sample: &[f64], law: &MaxEntDistribution) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = law.cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// `I(e_t; e_{t-lag})` for one lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaggedInformation {
    pub lag: usize,
    pub estimate: EntropyEstimate,
}

/// Estimates of the information left in the innovations. Zero innovation
/// self-information and zero transfer from the inputs are the equality
/// conditions of the bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AchievabilityDiagnostics {
    pub lag: usize,
    pub k: usize,
    /// `I(e_t; e_{t-1}, …, e_{t-lag})`.
    pub innovation_mi: EntropyEstimate,
    pub innovation_mi_floor: NoiseFloor,
    /// `I(e_t; e_{t-j})` for `j = 1..lag`.
    pub lagged_mi: Vec<LaggedInformation>,
    /// Shared by all lags: shuffling leaves the same marginals at every lag.
    pub lagged_mi_floor: NoiseFloor,
    /// `I(x_{t..t-lag}; e_t | e_{t-1..t-lag})`; exactly zero without inputs.
    pub transfer_entropy: EntropyEstimate,
    pub transfer_entropy_floor: NoiseFloor,
    /// Directed-information rate from the inputs, bits per step.
    pub directed_information: Option<f64>,
    /// KS distance to the max-entropy law with `μ` equal to the bound; set per report.
    pub density_fit_distance: Option<f64>,
}

impl AchievabilityDiagnostics {
    /// No self-information detected at any lag or over the joint window.
    pub fn innovations_white(&self) -> bool {
        !self.innovation_mi_floor.exceeded_by(self.innovation_mi.reported())
            && self.lagged_mi.iter().all(|l| !self.lagged_mi_floor.exceeded_by(l.estimate.reported()))
    }

    /// No transfer from the inputs detected.
    pub fn inputs_exhausted(&self) -> bool {
        !self.transfer_entropy_floor.exceeded_by(self.transfer_entropy.reported())
    }
}

fn check_trace(t: &Trajectory, trace: &PredictionTrace) -> Result<(), HarnessError> {
    if trace.len() != t.len() {
        return Err(HarnessError::Misaligned { trace: trace.len(), trajectory: t.len() });
    }
    Ok(())
}

/// Innovation self-information at lags `1..=lag`, over the joint window, and
/// transfer from the inputs, each with a permutation noise floor.
pub fn achievability_diagnostics(
    t: &Trajectory,
    trace: &PredictionTrace,
    params: &EstimatorParams,
) -> Result<AchievabilityDiagnostics, HarnessError> {
    check_trace(t, trace)?;
    let (lag, k) = (params.lag, params.k);
    let need = MIN_SAMPLES_PER_LAG * (lag + 1);
    if t.len() < need {
        return Err(HarnessError::TooShort { len: t.len(), lag, need });
    }
    let e = &trace.innovations;
    let lagged_mi = (1..=lag)
        .map(|j| Ok(LaggedInformation { lag: j, estimate: lagged_mutual_information(e, j, k)? }))
        .collect::<Result<Vec<_>, EstimatorError>>()?;
    let pair = WindowedSeries::embed(None, e, 1, k)?;
    let lagged_mi_floor = mi_noise_floor(&pair.target, &pair.history, k, params.permutations, derive_seed(params.seed, "lagged-mi"))?;

    let input = input_matrix(t)?;
    let w = WindowedSeries::embed(input.as_ref(), e, lag, k)?;
    let innovation_mi = mutual_information(&w.target, &w.history, k)?;
    let innovation_mi_floor =
        mi_noise_floor(&w.target, &w.history, k, params.window_permutations, derive_seed(params.seed, "innovation-mi"))?;

    let (transfer_entropy, transfer_entropy_floor, directed_information) = match (&w.input_window, &input) {
        (Some(x), Some(raw)) => {
            let te = conditional_mutual_information(x, &w.target, &w.history, k)?;
            let floor = cmi_noise_floor(x, &w.target, &w.history, k, params.window_permutations, derive_seed(params.seed, "transfer-entropy"))?;
            let di = directed_information_rate(raw, e, lag, k, None)?;
            (te, floor, Some(di.estimate.bits()))
        }
        _ => (EntropyEstimate::zero(w.len(), k), NoiseFloor::zero(), None),
    };
    Ok(AchievabilityDiagnostics {
        lag,
        k,
        innovation_mi,
        innovation_mi_floor,
        lagged_mi,
        lagged_mi_floor,
        transfer_entropy,
        transfer_entropy_floor,
        directed_information,
        density_fit_distance: None,
    })
}

/// `I(e_t; e_{t-1..t-lag}, x_{t..t-lag})`, everything the windowed past says
/// about the current innovation. By the chain rule it splits into the
/// innovation self-information plus the transfer entropy.
pub fn past_information(t: &Trajectory, trace: &PredictionTrace, params: &EstimatorParams) -> Result<EntropyEstimate, HarnessError> {
    check_trace(t, trace)?;
    let input = input_matrix(t)?;
    let w = WindowedSeries::embed(input.as_ref(), &trace.innovations, params.lag, params.k)?;
    let past = match &w.input_window {
        Some(x) => SampleMatrix::hstack(&[&w.history, x])?,
        None => w.history.clone(),
    };
    Ok(mutual_information(&w.target, &past, params.k)?)
}

/// Bound versus empirical error for one predictor, norm and information set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub scenario: String,
    pub predictor: String,
    pub seed: u64,
    pub p: PNorm,
    pub mode: Mode,
    pub conditional_entropy: EntropyBits,
    pub entropy_source: EntropySourceKind,
    pub entropy_method: EntropyMethod,
    /// Standard error of an estimated entropy.
    pub entropy_std_error: Option<f64>,
    pub lower_bound: f64,
    pub empirical_lp: f64,
    pub empirical_std_error: f64,
    /// `empirical_lp` is a sample maximum (a lower estimate at `p = ∞`).
    pub empirical_is_sample_max: bool,
    pub n_samples: usize,
    pub gap: f64,
    /// `gap ≥ −3·SE`; only meaningful for oracle entropies.
    pub valid: Option<bool>,
    /// The entropy is the `−∞` sentinel and the bound collapses to 0.
    pub deterministic: bool,
    pub diagnostics: Option<AchievabilityDiagnostics>,
    pub trials: Option<TrialSummary>,
}

impl BoundReport {
    pub(crate) fn assemble(
        predictor: String,
        seed: u64,
        p: PNorm,
        mode: Mode,
        entropy: EntropyBits,
        source: EntropySourceKind,
        method: EntropyMethod,
        empirical: EmpiricalNorm,
    ) -> Self {
        let lower_bound = entropy_to_lp_bound(entropy, p);
        let gap = empirical.value - lower_bound;
        let valid = (source == EntropySourceKind::Oracle).then(|| gap >= -GAP_TOLERANCE_SE * empirical.std_error);
        Self {
            scenario: String::new(),
            predictor,
            seed,
            p,
            mode,
            conditional_entropy: entropy,
            entropy_source: source,
            entropy_method: method,
            entropy_std_error: None,
            lower_bound,
            empirical_lp: empirical.value,
            empirical_std_error: empirical.std_error,
            empirical_is_sample_max: empirical.sample_maximum,
            n_samples: empirical.n_samples,
            gap,
            valid,
            deterministic: entropy.is_deterministic(),
            diagnostics: None,
            trials: None,
        }
    }

    /// `gap` exceeds `GAP_TOLERANCE_SE` standard errors.
    pub fn strictly_suboptimal(&self) -> bool {
        self.gap > GAP_TOLERANCE_SE * self.empirical_std_error
    }

    /// Attaches diagnostics, filling in the density fit against the
    /// equality-case law with `μ` equal to this report's bound.
    pub fn with_diagnostics(mut self, mut diagnostics: AchievabilityDiagnostics, innovations: &[f64]) -> Self {
        diagnostics.density_fit_distance = MaxEntDistribution::new(self.p, self.lower_bound)
            .ok()
            .map(|law| density_fit_distance(innovations, &law));
        self.diagnostics = Some(diagnostics);
        self
    }
}

/// Entropy for a trajectory under `source`, reusable across norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedEntropy {
    pub entropy: OracleEntropy,
    pub method: EntropyMethod,
    pub source: EntropySourceKind,
    pub std_error: Option<f64>,
}

pub fn resolve_entropy(t: &Trajectory, source: &EntropySource) -> Result<ResolvedEntropy, HarnessError> {
    match source {
        EntropySource::Oracle => {
            let (entropy, method) = oracle_entropy(t)?;
            Ok(ResolvedEntropy { entropy, method, source: EntropySourceKind::Oracle, std_error: None })
        }
        EntropySource::Estimated(params) => {
            let est = estimated_entropy(t, params)?;
            Ok(ResolvedEntropy {
                entropy: OracleEntropy::Constant(est.value),
                method: EntropyMethod::Knn,
                source: EntropySourceKind::Estimated,
                std_error: Some(est.std_error),
            })
        }
    }
}

pub(crate) fn report_from(
    t: &Trajectory,
    trace: &PredictionTrace,
    p: PNorm,
    entropy: &ResolvedEntropy,
) -> Result<BoundReport, HarnessError> {
    check_trace(t, trace)?;
    let empirical = empirical_norm(&trace.innovations, p)?;
    let mut r = BoundReport::assemble(
        trace.predictor.clone(),
        t.seed,
        p,
        Mode::of(t),
        entropy.entropy.effective_entropy(p),
        entropy.source,
        entropy.method,
        empirical,
    );
    r.entropy_std_error = entropy.std_error;
    Ok(r)
}

/// Bound, empirical norm and gap for `trace` on `t`. Diagnostics, if given,
/// get their density fit filled in for this report's `p` and bound.
pub fn bound_report(
    t: &Trajectory,
    trace: &PredictionTrace,
    p: PNorm,
    source: &EntropySource,
    diagnostics: Option<AchievabilityDiagnostics>,
) -> Result<BoundReport, HarnessError> {
    let entropy = resolve_entropy(t, source)?;
    let r = report_from(t, trace, p, &entropy)?;
    Ok(match diagnostics {
        Some(d) => r.with_diagnostics(d, &trace.innovations),
        None => r,
    })
}
