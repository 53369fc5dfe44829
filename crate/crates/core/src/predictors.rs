//! Online prediction protocol and baseline learners.
//!
//! [`run_online`] enforces causality: at step `k` the predictor is handed
//! `x_k` and asked for `ŷ_k`, and only afterwards learns `y_k` (or is told the
//! label is missing). Predictors that feed back past outputs replace a missing
//! one with their own prediction for it.

use std::collections::VecDeque;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian_oracle::{KalmanFilter, LinearGaussianModel, ModelSpec, OracleError};
use crate::processes::{ar_mean, fmt_float, GeneratorTag, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictorError {
    #[error("predictor {tag} expects inputs of dimension {expected}, trajectory has {got}")]
    InputDimension { tag: String, expected: usize, got: usize },
    #[error("predictor {tag} produced a non-finite prediction at step {step}")]
    NonFinite { tag: String, step: usize },
    #[error("predictor {tag} diverged at step {step}")]
    Diverged { tag: String, step: usize },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] OracleError),
}

/// A learner driven one step at a time.
pub trait OnlinePredictor {
    fn tag(&self) -> String;

    /// Required input dimension, or `None` if any is accepted.
    fn input_dim(&self) -> Option<usize>;

    /// Outputs observed before step 0, oldest first.
    fn warm_start(&mut self, _presample: &[f64]) {}

    fn predict(&mut self, x: &[f64]) -> f64;

    /// Reveals the label of the step just predicted.
    fn observe(&mut self, x: &[f64], y: f64);

    /// The label of the step just predicted is missing.
    fn skip(&mut self, x: &[f64]);

    fn diverged(&self) -> bool {
        false
    }
}

/// Per-step predictions and innovations `y_k − ŷ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrace {
    pub predictor: String,
    pub predictions: Vec<f64>,
    pub innovations: Vec<f64>,
}

impl PredictionTrace {
    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    /// CSV with columns `step, y, y_hat, innovation`; `outputs` are the
    /// trajectory outputs the trace was computed on.
    pub fn write_csv<W: Write>(&self, outputs: &[f64], mut w: W) -> io::Result<()> {
        writeln!(w, "step,y,y_hat,innovation")?;
        for (k, ((y, p), e)) in outputs.iter().zip(&self.predictions).zip(&self.innovations).enumerate() {
            writeln!(w, "{k},{},{},{}", fmt_float(*y), fmt_float(*p), fmt_float(*e))?;
        }
        Ok(())
    }
}

/// Runs `p` over `t` under the causal protocol.
pub fn run_online(t: &Trajectory, p: &mut dyn OnlinePredictor) -> Result<PredictionTrace, PredictorError> {
    if let Some(d) = p.input_dim() {
        if d != t.input_dim {
            return Err(PredictorError::InputDimension { tag: p.tag(), expected: d, got: t.input_dim });
        }
    }
    p.warm_start(&t.presample);
    let n = t.len();
    let mut predictions = Vec::with_capacity(n);
    let mut innovations = Vec::with_capacity(n);
    for k in 0..n {
        let x = t.input(k);
        let y_hat = p.predict(x);
        if !y_hat.is_finite() {
            return Err(PredictorError::NonFinite { tag: p.tag(), step: k });
        }
        predictions.push(y_hat);
        innovations.push(t.outputs[k] - y_hat);
        if t.is_labeled(k) {
            p.observe(x, t.outputs[k]);
        } else {
            p.skip(x);
        }
        if p.diverged() {
            return Err(PredictorError::Diverged { tag: p.tag(), step: k });
        }
    }
    Ok(PredictionTrace { predictor: p.tag(), predictions, innovations })
}

/// Always predicts 0.
#[derive(Debug, Clone, Default)]
pub struct ZeroPredictor;

impl OnlinePredictor for ZeroPredictor {
    fn tag(&self) -> String {
        "zero".into()
    }
    fn input_dim(&self) -> Option<usize> {
        None
    }
    fn predict(&mut self, _x: &[f64]) -> f64 {
        0.0
    }
    fn observe(&mut self, _x: &[f64], _y: f64) {}
    fn skip(&mut self, _x: &[f64]) {}
}

/// AR predictor with known coefficients, `ŷ_k = Σ a_j y_{k-j}`.
#[derive(Debug, Clone)]
pub struct ArPlugin {
    coeffs: Vec<f64>,
    // Oldest first; always `coeffs.len()` long.
    history: Vec<f64>,
    pending: f64,
}

impl ArPlugin {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let history = vec![0.0; coeffs.len()];
        Self { coeffs, history, pending: 0.0 }
    }

    fn push(&mut self, y: f64) {
        if !self.history.is_empty() {
            self.history.remove(0);
            self.history.push(y);
        }
    }
}

impl OnlinePredictor for ArPlugin {
    fn tag(&self) -> String {
        "ar_plugin".into()
    }
    fn input_dim(&self) -> Option<usize> {
        None
    }
    fn warm_start(&mut self, presample: &[f64]) {
        for &y in presample.iter().rev().take(self.coeffs.len()).collect::<Vec<_>>().iter().rev() {
            self.push(*y);
        }
    }
    fn predict(&mut self, _x: &[f64]) -> f64 {
        self.pending = ar_mean(&self.coeffs, &self.history);
        self.pending
    }
    fn observe(&mut self, _x: &[f64], y: f64) {
        self.push(y);
    }
    fn skip(&mut self, _x: &[f64]) {
        let y = self.pending;
        self.push(y);
    }
}

/// Time-varying Kalman one-step predictor for a known model.
#[derive(Debug, Clone)]
pub struct KalmanPredictor {
    filter: KalmanFilter,
    tag: String,
}

impl KalmanPredictor {
    pub fn new(model: LinearGaussianModel) -> Self {
        Self { filter: KalmanFilter::new(model), tag: "kalman".into() }
    }

    /// Kalman filter built on `model` with its state transition misreported as `transition`.
    pub fn mismatched(model: LinearGaussianModel, transition: DMatrix<f64>) -> Result<Self, PredictorError> {
        let wrong = model.with_transition(transition)?;
        Ok(Self { filter: KalmanFilter::new(wrong), tag: "mismatched_kalman".into() })
    }
}

impl OnlinePredictor for KalmanPredictor {
    fn tag(&self) -> String {
        self.tag.clone()
    }
    fn input_dim(&self) -> Option<usize> {
        Some(self.filter.model().input_dim())
    }
    fn warm_start(&mut self, presample: &[f64]) {
        // Presamples come from input-free processes; condition on them as
        // ordinary observations.
        let zeros = vec![0.0; self.filter.model().input_dim()];
        for &y in presample {
            self.filter.predict(&zeros);
            self.filter.update(y);
        }
    }
    fn predict(&mut self, x: &[f64]) -> f64 {
        self.filter.predict(x).0
    }
    fn observe(&mut self, _x: &[f64], y: f64) {
        self.filter.update(y);
    }
    fn skip(&mut self, _x: &[f64]) {
        self.filter.skip();
    }
}

// Regressor `[x_k; y_{k-1}, …, y_{k-lags}]` with missing outputs imputed by
// the predictor's own predictions.
#[derive(Debug, Clone)]
struct Features {
    input_dim: usize,
    lags: VecDeque<f64>,
    n_lags: usize,
}

impl Features {
    fn new(input_dim: usize, n_lags: usize) -> Self {
        Self { input_dim, lags: VecDeque::from(vec![0.0; n_lags]), n_lags }
    }

    fn dim(&self) -> usize {
        self.input_dim + self.n_lags
    }

    fn build(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.dim(), x.iter().copied().chain(self.lags.iter().copied()))
    }

    fn push(&mut self, y: f64) {
        if self.n_lags > 0 {
            self.lags.pop_back();
            self.lags.push_front(y);
        }
    }

    fn warm_start(&mut self, presample: &[f64]) {
        for &y in presample {
            self.push(y);
        }
    }
}

/// Exponentially weighted recursive least squares.
#[derive(Debug, Clone)]
pub struct RlsPredictor {
    features: Features,
    forgetting: f64,
    weights: DVector<f64>,
    p: DMatrix<f64>,
    phi: DVector<f64>,
    pending: f64,
}

/// Smallest ridge used to initialise the inverse correlation matrix.
pub const MIN_RIDGE: f64 = 1e-8;

impl RlsPredictor {
    /// `forgetting ∈ (0, 1]`; the inverse correlation matrix starts at
    /// `I / max(ridge, MIN_RIDGE)`.
    pub fn new(input_dim: usize, lags: usize, forgetting: f64, ridge: f64) -> Result<Self, PredictorError> {
        if !(forgetting > 0.0 && forgetting <= 1.0) {
            return Err(PredictorError::Config(format!("forgetting factor must lie in (0, 1], got {forgetting}")));
        }
        if !(ridge >= 0.0) || !ridge.is_finite() {
            return Err(PredictorError::Config(format!("ridge must be non-negative, got {ridge}")));
        }
        let features = Features::new(input_dim, lags);
        let d = features.dim();
        Ok(Self {
            features,
            forgetting,
            weights: DVector::zeros(d),
            p: DMatrix::identity(d, d) / ridge.max(MIN_RIDGE),
            phi: DVector::zeros(d),
            pending: 0.0,
        })
    }

    pub fn weights(&self) -> &[f64] {
        self.weights.as_slice()
    }
}

impl OnlinePredictor for RlsPredictor {
    fn tag(&self) -> String {
        "rls".into()
    }
    fn input_dim(&self) -> Option<usize> {
        Some(self.features.input_dim)
    }
    fn warm_start(&mut self, presample: &[f64]) {
        self.features.warm_start(presample);
    }
    fn predict(&mut self, x: &[f64]) -> f64 {
        self.phi = self.features.build(x);
        self.pending = self.weights.dot(&self.phi);
        self.pending
    }
    fn observe(&mut self, _x: &[f64], y: f64) {
        if self.phi.len() > 0 {
            let pphi = &self.p * &self.phi;
            let denom = self.forgetting + self.phi.dot(&pphi);
            let gain = &pphi / denom;
            self.weights += &gain * (y - self.pending);
            self.p = (&self.p - &gain * pphi.transpose()) / self.forgetting;
            self.p = (&self.p + self.p.transpose()) * 0.5;
        }
        self.features.push(y);
    }
    fn skip(&mut self, _x: &[f64]) {
        let y = self.pending;
        self.features.push(y);
    }
    fn diverged(&self) -> bool {
        !self.weights.iter().all(|w| w.is_finite())
    }
}

/// Normalized LMS: `w ← w + μ e φ / (δ + |φ|²)`. Stable for `0 < μ < 2`.
#[derive(Debug, Clone)]
pub struct NlmsPredictor {
    features: Features,
    step_size: f64,
    regularization: f64,
    weights: DVector<f64>,
    phi: DVector<f64>,
    pending: f64,
}

/// Default NLMS regularizer `δ`. It keeps the step bounded when the regressor
/// is nearly zero, which matters most for one-dimensional regressors.
pub const NLMS_REGULARIZATION: f64 = 1.0;
// Weight norm beyond which the filter is declared divergent.
const NLMS_DIVERGENCE: f64 = 1e8;

impl NlmsPredictor {
    pub fn new(input_dim: usize, lags: usize, step_size: f64) -> Result<Self, PredictorError> {
        if !(step_size > 0.0) || !step_size.is_finite() {
            return Err(PredictorError::Config(format!("step size must be positive, got {step_size}")));
        }
        let features = Features::new(input_dim, lags);
        let d = features.dim();
        Ok(Self {
            features,
            step_size,
            regularization: NLMS_REGULARIZATION,
            weights: DVector::zeros(d),
            phi: DVector::zeros(d),
            pending: 0.0,
        })
    }

    pub fn with_regularization(mut self, delta: f64) -> Result<Self, PredictorError> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(PredictorError::Config(format!("regularization must be positive, got {delta}")));
        }
        self.regularization = delta;
        Ok(self)
    }

    pub fn weights(&self) -> &[f64] {
        self.weights.as_slice()
    }
}

impl OnlinePredictor for NlmsPredictor {
    fn tag(&self) -> String {
        "nlms".into()
    }
    fn input_dim(&self) -> Option<usize> {
        Some(self.features.input_dim)
    }
    fn warm_start(&mut self, presample: &[f64]) {
        self.features.warm_start(presample);
    }
    fn predict(&mut self, x: &[f64]) -> f64 {
        self.phi = self.features.build(x);
        self.pending = self.weights.dot(&self.phi);
        self.pending
    }
    fn observe(&mut self, _x: &[f64], y: f64) {
        let norm = self.regularization + self.phi.norm_squared();
        self.weights += &self.phi * (self.step_size * (y - self.pending) / norm);
        self.features.push(y);
    }
    fn skip(&mut self, _x: &[f64]) {
        let y = self.pending;
        self.features.push(y);
    }
    fn diverged(&self) -> bool {
        let n = self.weights.norm();
        !n.is_finite() || n > NLMS_DIVERGENCE
    }
}

/// Configuration-level description of a predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictorSpec {
    Zero,
    /// Coefficients default to the generating AR process.
    ArPlugin {
        #[serde(default)]
        coeffs: Option<Vec<f64>>,
    },
    /// Model defaults to the generating process.
    Kalman {
        #[serde(default)]
        model: Option<ModelSpec>,
    },
    /// The generating model with a misreported state transition.
    MismatchedKalman { transition: Vec<Vec<f64>> },
    Rls {
        #[serde(default = "default_lags")]
        lags: usize,
        #[serde(default = "one")]
        forgetting: f64,
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
    Nlms {
        #[serde(default = "default_lags")]
        lags: usize,
        step_size: f64,
        #[serde(default = "nlms_regularization")]
        regularization: f64,
    },
}

fn default_lags() -> usize {
    1
}

fn one() -> f64 {
    1.0
}

fn nlms_regularization() -> f64 {
    NLMS_REGULARIZATION
}

fn default_ridge() -> f64 {
    1e-3
}

/// The Gaussian state-space model matching a trajectory's generator. AR
/// processes map to their companion form with the innovation variance.
pub fn generating_model(t: &Trajectory) -> Option<LinearGaussianModel> {
    match &t.generator {
        GeneratorTag::Ar { coeffs, innovation, .. } => LinearGaussianModel::ar(coeffs, innovation.variance()).ok(),
        GeneratorTag::Lgssm { .. } => t.model(),
        GeneratorTag::External { .. } => None,
    }
}

impl PredictorSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            PredictorSpec::Zero => "zero",
            PredictorSpec::ArPlugin { .. } => "ar_plugin",
            PredictorSpec::Kalman { .. } => "kalman",
            PredictorSpec::MismatchedKalman { .. } => "mismatched_kalman",
            PredictorSpec::Rls { .. } => "rls",
            PredictorSpec::Nlms { .. } => "nlms",
        }
    }

    /// Instantiates the predictor for `t`, filling defaults from its generator.
    pub fn build(&self, t: &Trajectory) -> Result<Box<dyn OnlinePredictor>, PredictorError> {
        let missing = |what: &str| PredictorError::Config(format!("{} needs {what} for this trajectory", self.tag()));
        Ok(match self {
            PredictorSpec::Zero => Box::new(ZeroPredictor),
            PredictorSpec::ArPlugin { coeffs } => {
                let coeffs = match (coeffs, &t.generator) {
                    (Some(c), _) => c.clone(),
                    (None, GeneratorTag::Ar { coeffs, .. }) => coeffs.clone(),
                    _ => return Err(missing("explicit coefficients")),
                };
                Box::new(ArPlugin::new(coeffs))
            }
            PredictorSpec::Kalman { model } => {
                let model = match model {
                    Some(spec) => LinearGaussianModel::try_from(spec)?,
                    None => generating_model(t).ok_or_else(|| missing("an explicit model"))?,
                };
                Box::new(KalmanPredictor::new(model))
            }
            PredictorSpec::MismatchedKalman { transition } => {
                let model = generating_model(t).ok_or_else(|| missing("a generating model"))?;
                let m = transition.len();
                if transition.iter().any(|r| r.len() != m) {
                    return Err(PredictorError::Config("transition must be square".into()));
                }
                let a = DMatrix::from_fn(m, m, |i, j| transition[i][j]);
                Box::new(KalmanPredictor::mismatched(model, a)?)
            }
            PredictorSpec::Rls { lags, forgetting, ridge } => Box::new(RlsPredictor::new(t.input_dim, *lags, *forgetting, *ridge)?),
            PredictorSpec::Nlms { lags, step_size, regularization } => {
                Box::new(NlmsPredictor::new(t.input_dim, *lags, *step_size)?.with_regularization(*regularization)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxent::{MaxEntDistribution, PNorm};
    use crate::processes::{gen_ar, mask_labels, MaskSpec};

    fn ar_trajectory(n: usize) -> Trajectory {
        gen_ar(&[0.9], &MaxEntDistribution::new(PNorm::TWO, 1.0).unwrap(), n, 1).unwrap()
    }

    #[test]
    fn zero_predictor_innovations_are_outputs() {
        let t = ar_trajectory(100);
        let trace = run_online(&t, &mut ZeroPredictor).unwrap();
        assert_eq!(trace.innovations, t.outputs);
        assert_eq!(trace.predictor, "zero");
    }

    #[test]
    fn ar_plugin_with_masked_labels_imputes() {
        let t = mask_labels(&ar_trajectory(10), &MaskSpec::Indices(vec![4, 5]), 0).unwrap();
        let trace = run_online(&t, &mut ArPlugin::new(vec![0.9])).unwrap();
        assert_eq!(trace.predictions[5], 0.9 * trace.predictions[4]);
        assert_eq!(trace.predictions[6], 0.9 * trace.predictions[5]);
        assert_eq!(trace.predictions[7], 0.9 * t.outputs[6]);
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let t = ar_trajectory(10);
        let mut rls = RlsPredictor::new(2, 1, 1.0, 1e-3).unwrap();
        assert!(matches!(run_online(&t, &mut rls), Err(PredictorError::InputDimension { .. })));
    }

    #[test]
    fn empty_regressor_predicts_zero() {
        let t = ar_trajectory(50);
        let trace = run_online(&t, &mut RlsPredictor::new(0, 0, 1.0, 0.0).unwrap()).unwrap();
        assert!(trace.predictions.iter().all(|&p| p == 0.0));
        let trace = run_online(&t, &mut NlmsPredictor::new(0, 0, 0.5).unwrap()).unwrap();
        assert!(trace.predictions.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn invalid_settings_rejected() {
        assert!(RlsPredictor::new(1, 1, 0.0, 1.0).is_err());
        assert!(RlsPredictor::new(1, 1, 1.0, -1.0).is_err());
        assert!(NlmsPredictor::new(1, 1, 0.0).is_err());
    }

    #[test]
    fn nlms_divergence_is_reported() {
        let t = ar_trajectory(2000);
        let mut p = NlmsPredictor::new(0, 2, 3.0).unwrap();
        assert!(matches!(run_online(&t, &mut p), Err(PredictorError::Diverged { .. })));
    }

    #[test]
    fn spec_builds_from_trajectory() {
        let t = ar_trajectory(20);
        for spec in [
            PredictorSpec::Zero,
            PredictorSpec::ArPlugin { coeffs: None },
            PredictorSpec::Kalman { model: None },
            PredictorSpec::MismatchedKalman { transition: vec![vec![0.5]] },
            PredictorSpec::Rls { lags: 2, forgetting: 0.99, ridge: 1e-2 },
            PredictorSpec::Nlms { lags: 1, step_size: 0.5, regularization: 1.0 },
        ] {
            let mut p = spec.build(&t).unwrap();
            assert_eq!(p.tag(), spec.tag());
            run_online(&t, p.as_mut()).unwrap();
        }
        let toml_like: PredictorSpec = serde_json::from_str(r#"{"kind":"nlms","step_size":0.5}"#).unwrap();
        assert_eq!(toml_like, PredictorSpec::Nlms { lags: 1, step_size: 0.5, regularization: NLMS_REGULARIZATION });
        assert!(serde_json::from_str::<PredictorSpec>(r#"{"kind":"oracle"}"#).is_err());
    }

    #[test]
    fn trace_csv() {
        let t = ar_trajectory(3);
        let trace = run_online(&t, &mut ArPlugin::new(vec![0.9])).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&t.outputs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,y,y_hat,innovation\n0,"));
        assert_eq!(text.lines().count(), 4);
    }
}
