//! Synthetic processes with known bound-relevant entropies.
//!
//! Every generator draws from ChaCha20 streams derived from `(seed, label)`,
//! so a trajectory is reproducible from its generator tag and seed alone.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian_oracle::{spectral_radius, BayesLinearModel, LinearGaussianModel, ModelSpec, OracleError};
use crate::maxent::MaxEntDistribution;
use crate::rng::stream;

/// Minimum AR burn-in; the default is `max(MIN_BURN_IN, 10 × order)`.
pub const MIN_BURN_IN: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProcessError {
    #[error("AR coefficients are not stable: companion spectral radius {0} >= 1")]
    UnstableAr(f64),
    #[error("invalid state-space model: {0}")]
    Model(#[from] OracleError),
    #[error("length must be at least 1")]
    EmptyLength,
    #[error("missing rate must lie in [0, 1], got {0}")]
    InvalidRate(f64),
    #[error("masked index {index} outside trajectory of length {len}")]
    MaskIndex { index: usize, len: usize },
    #[error("{what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("input process parameter out of range: {0}")]
    InputProcess(String),
    #[error("trajectory contains non-finite values")]
    NonFinite,
}

/// Exogenous input process for [`gen_lgssm`]; components are independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputProcess {
    /// i.i.d. `N(0, variance)`.
    Iid { variance: f64 },
    /// Stationary Gaussian AR(1) with coefficient `coeff` and marginal variance `variance`.
    Ar { coeff: f64, variance: f64 },
}

impl Default for InputProcess {
    fn default() -> Self {
        InputProcess::Iid { variance: 1.0 }
    }
}

impl InputProcess {
    fn validate(&self) -> Result<(), ProcessError> {
        match *self {
            InputProcess::Iid { variance } if variance >= 0.0 && variance.is_finite() => Ok(()),
            InputProcess::Ar { coeff, variance } if coeff.abs() < 1.0 && variance >= 0.0 && variance.is_finite() => Ok(()),
            ref other => Err(ProcessError::InputProcess(format!("{other:?}"))),
        }
    }
}

/// How a trajectory was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratorTag {
    Ar { coeffs: Vec<f64>, innovation: MaxEntDistribution, burn_in: usize },
    Lgssm { model: ModelSpec, input: InputProcess },
    /// Read from a file; nothing is known about the generator.
    External { source: String },
}

/// Paired inputs and scalar outputs, with an optional label mask
/// (`true` = label available to predictors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub input_dim: usize,
    /// Row-major, `len × input_dim`.
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
    pub label_mask: Option<Vec<bool>>,
    pub seed: u64,
    pub generator: GeneratorTag,
    /// Outputs immediately before step 0, oldest first (the AR state after burn-in).
    #[serde(default)]
    pub presample: Vec<f64>,
}

impl Trajectory {
    /// Validating constructor for externally supplied data.
    pub fn from_parts(
        input_dim: usize,
        inputs: Vec<f64>,
        outputs: Vec<f64>,
        label_mask: Option<Vec<bool>>,
        seed: u64,
        generator: GeneratorTag,
    ) -> Result<Self, ProcessError> {
        let n = outputs.len();
        if inputs.len() != n * input_dim {
            return Err(ProcessError::Dimension { what: "input values", expected: n * input_dim, got: inputs.len() });
        }
        if let Some(m) = &label_mask {
            if m.len() != n {
                return Err(ProcessError::Dimension { what: "label mask length", expected: n, got: m.len() });
            }
        }
        if inputs.iter().chain(&outputs).any(|v| !v.is_finite()) {
            return Err(ProcessError::NonFinite);
        }
        Ok(Self { input_dim, inputs, outputs, label_mask, seed, generator, presample: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn input(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.input_dim..(k + 1) * self.input_dim]
    }

    pub fn is_labeled(&self, k: usize) -> bool {
        self.label_mask.as_ref().map_or(true, |m| m[k])
    }

    /// Indices of the available labels before step `k`.
    pub fn observed_before(&self, k: usize) -> Vec<usize> {
        (0..k).filter(|&i| self.is_labeled(i)).collect()
    }

    /// The state-space model behind an LGSSM trajectory.
    pub fn model(&self) -> Option<LinearGaussianModel> {
        match &self.generator {
            GeneratorTag::Lgssm { model, .. } => LinearGaussianModel::try_from(model).ok(),
            _ => None,
        }
    }

    /// CSV with columns `step, x_0 … x_{d-1}, y, mask`; floats carry 17
    /// significant digits so the file reads back bit-exactly.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = vec!["step".to_string()];
        header.extend((0..self.input_dim).map(|i| format!("x_{i}")));
        header.push("y".into());
        header.push("mask".into());
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.len() {
            write!(w, "{k}")?;
            for v in self.input(k) {
                write!(w, ",{}", fmt_float(*v))?;
            }
            writeln!(w, ",{},{}", fmt_float(self.outputs[k]), u8::from(self.is_labeled(k)))?;
        }
        Ok(())
    }

    pub fn metadata(&self) -> TrajectoryMetadata {
        TrajectoryMetadata {
            generator: self.generator.clone(),
            seed: self.seed,
            length: self.len(),
            input_dim: self.input_dim,
            masked: self.label_mask.as_ref().map_or(0, |m| m.iter().filter(|&&b| !b).count()),
            presample: self.presample.clone(),
        }
    }
}

/// Side-car JSON for a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetadata {
    pub generator: GeneratorTag,
    pub seed: u64,
    pub length: usize,
    pub input_dim: usize,
    pub masked: usize,
    #[serde(default)]
    pub presample: Vec<f64>,
}

/// Scientific notation with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn ar_spectral_radius(coeffs: &[f64]) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let m = coeffs.len();
    let mut a = DMatrix::zeros(m, m);
    for (j, &c) in coeffs.iter().enumerate() {
        a[(0, j)] = c;
    }
    for i in 1..m {
        a[(i, i - 1)] = 1.0;
    }
    spectral_radius(&a)
}

pub fn default_burn_in(order: usize) -> usize {
    MIN_BURN_IN.max(10 * order)
}

/// `y_k = Σ a_j y_{k-j} + w_k` with i.i.d. `w_k` from `innovation`, after
/// the default burn-in.
pub fn gen_ar(coeffs: &[f64], innovation: &MaxEntDistribution, length: usize, seed: u64) -> Result<Trajectory, ProcessError> {
    gen_ar_with_burn_in(coeffs, innovation, length, seed, default_burn_in(coeffs.len()))
}

pub fn gen_ar_with_burn_in(
    coeffs: &[f64],
    innovation: &MaxEntDistribution,
    length: usize,
    seed: u64,
    burn_in: usize,
) -> Result<Trajectory, ProcessError> {
    if length == 0 {
        return Err(ProcessError::EmptyLength);
    }
    let rho = ar_spectral_radius(coeffs);
    if rho >= 1.0 || coeffs.iter().any(|c| !c.is_finite()) {
        return Err(ProcessError::UnstableAr(rho));
    }
    let order = coeffs.len();
    let mut rng = stream(seed, "ar-innovation");
    let total = burn_in + length;
    let mut y = vec![0.0; order + total];
    for t in order..order + total {
        let w = innovation.draw(&mut rng);
        y[t] = ar_mean(coeffs, &y[..t]) + w;
    }
    let start = order + burn_in;
    Ok(Trajectory {
        input_dim: 0,
        inputs: Vec::new(),
        outputs: y[start..].to_vec(),
        label_mask: None,
        seed,
        generator: GeneratorTag::Ar { coeffs: coeffs.to_vec(), innovation: *innovation, burn_in },
        presample: y[start - order..start].to_vec(),
    })
}

/// `Σ_j a_j y_{t-j}` over the tail of `past`, summed from `j = 1` upwards.
/// Shared by the generator and the plug-in predictor so both round alike.
pub fn ar_mean(coeffs: &[f64], past: &[f64]) -> f64 {
    let n = past.len();
    coeffs.iter().enumerate().map(|(j, a)| a * past[n - 1 - j]).sum()
}

// Symmetric square root for sampling N(0, S) with possibly singular S.
fn sqrt_psd(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(s.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * d
}

fn normal_vector(rng: &mut impl Rng, root: &DMatrix<f64>) -> DVector<f64> {
    let z = DVector::from_fn(root.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    root * z
}

/// Simulates a state-space model driven by `input`. The initial state is
/// drawn from the model's initial covariance; there is no burn-in.
pub fn gen_lgssm(model: &LinearGaussianModel, input: &InputProcess, length: usize, seed: u64) -> Result<Trajectory, ProcessError> {
    if length == 0 {
        return Err(ProcessError::EmptyLength);
    }
    let rho = model.spectral_radius();
    if rho >= 1.0 {
        return Err(ProcessError::Model(OracleError::Unstable(rho)));
    }
    input.validate()?;
    let n = model.input_dim();
    let mut in_rng = stream(seed, "lgssm-input");
    let mut state_rng = stream(seed, "lgssm-state");
    let mut out_rng = stream(seed, "lgssm-output");

    let mut inputs = Vec::with_capacity(length * n);
    let mut prev = vec![0.0; n];
    for k in 0..length {
        for p in prev.iter_mut() {
            let z: f64 = in_rng.sample(StandardNormal);
            *p = match *input {
                InputProcess::Iid { variance } => variance.sqrt() * z,
                // Stationary from the first step.
                InputProcess::Ar { variance, .. } if k == 0 => variance.sqrt() * z,
                InputProcess::Ar { coeff, variance } => coeff * *p + ((1.0 - coeff * coeff) * variance).sqrt() * z,
            };
        }
        inputs.extend_from_slice(&prev);
    }

    let q_root = sqrt_psd(model.state_noise());
    let mut s = normal_vector(&mut state_rng, &sqrt_psd(model.initial_covariance()));
    let r_std = model.output_noise().sqrt();
    let mut outputs = Vec::with_capacity(length);
    for k in 0..length {
        let x = DVector::from_column_slice(&inputs[k * n..(k + 1) * n]);
        let v: f64 = out_rng.sample(StandardNormal);
        let y = (model.output_map() * &s)[0] + (model.feedthrough() * &x)[0] + r_std * v;
        outputs.push(y);
        s = model.transition() * &s + model.input_map() * &x + normal_vector(&mut state_rng, &q_root);
    }
    Ok(Trajectory {
        input_dim: n,
        inputs,
        outputs,
        label_mask: None,
        seed,
        generator: GeneratorTag::Lgssm { model: model.spec(), input: input.clone() },
        presample: Vec::new(),
    })
}

/// Which labels to hide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskSpec {
    /// Each label independently missing with this probability.
    Rate(f64),
    /// Exactly these steps are missing.
    Indices(Vec<usize>),
}

/// Copy of `t` with labels hidden per `spec`. Outputs are kept for scoring;
/// predictors never see masked ones.
pub fn mask_labels(t: &Trajectory, spec: &MaskSpec, seed: u64) -> Result<Trajectory, ProcessError> {
    let n = t.len();
    let mask = match spec {
        MaskSpec::Rate(rate) => {
            if !(0.0..=1.0).contains(rate) {
                return Err(ProcessError::InvalidRate(*rate));
            }
            let mut rng = stream(seed, "label-mask");
            (0..n).map(|_| rng.gen::<f64>() >= *rate).collect()
        }
        MaskSpec::Indices(idx) => {
            let mut m = vec![true; n];
            for &i in idx {
                if i >= n {
                    return Err(ProcessError::MaskIndex { index: i, len: n });
                }
                m[i] = false;
            }
            m
        }
    };
    let mut out = t.clone();
    out.label_mask = Some(mask);
    Ok(out)
}

/// Where the true regression weights come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    Fixed(Vec<f64>),
    Prior,
}

/// Training block plus one held-out pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchDataset {
    pub train_inputs: Vec<Vec<f64>>,
    pub train_outputs: Vec<f64>,
    pub test_input: Vec<f64>,
    pub test_output: f64,
    pub weights: Vec<f64>,
}

/// `k` training pairs and one test pair with i.i.d. standard Gaussian inputs
/// and `y = wᵀx + ε`, `ε ~ N(0, noise_var)`.
pub fn gen_regression_batch(model: &BayesLinearModel, weights: &WeightSource, k: usize, seed: u64) -> Result<BatchDataset, ProcessError> {
    let d = model.input_dim();
    let w = match weights {
        WeightSource::Fixed(w) => {
            if w.len() != d {
                return Err(ProcessError::Dimension { what: "weight vector", expected: d, got: w.len() });
            }
            DVector::from_column_slice(w)
        }
        WeightSource::Prior => normal_vector(&mut stream(seed, "regression-weights"), &sqrt_psd(model.prior_cov())),
    };
    let mut rng = stream(seed, "regression-data");
    let noise = model.noise_var().sqrt();
    let draw = |rng: &mut rand_chacha::ChaCha20Rng| {
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let e: f64 = rng.sample(StandardNormal);
        let y = x.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>() + noise * e;
        (x, y)
    };
    let (mut train_inputs, mut train_outputs) = (Vec::with_capacity(k), Vec::with_capacity(k));
    for _ in 0..k {
        let (x, y) = draw(&mut rng);
        train_inputs.push(x);
        train_outputs.push(y);
    }
    let (test_input, test_output) = draw(&mut rng);
    Ok(BatchDataset { train_inputs, train_outputs, test_input, test_output, weights: w.iter().copied().collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxent::PNorm;

    fn gauss() -> MaxEntDistribution {
        MaxEntDistribution::new(PNorm::TWO, 1.0).unwrap()
    }

    #[test]
    fn ar_rejects_unstable_and_empty() {
        assert!(matches!(gen_ar(&[1.0], &gauss(), 10, 1), Err(ProcessError::UnstableAr(_))));
        assert!(matches!(gen_ar(&[0.5, 0.6], &gauss(), 10, 1), Err(ProcessError::UnstableAr(_))));
        assert_eq!(gen_ar(&[0.5], &gauss(), 0, 1), Err(ProcessError::EmptyLength));
    }

    #[test]
    fn ar_keeps_presample_and_burn_in() {
        let t = gen_ar(&[0.5, -0.2, 0.1], &gauss(), 50, 3).unwrap();
        assert_eq!(t.presample.len(), 3);
        assert_eq!(t.len(), 50);
        assert_eq!(t.input_dim, 0);
        match &t.generator {
            GeneratorTag::Ar { burn_in, .. } => assert_eq!(*burn_in, 100),
            other => panic!("{other:?}"),
        }
        assert_eq!(default_burn_in(25), 250);
        // Same noise stream with a longer burn-in: the tail is a continuation.
        let long = gen_ar_with_burn_in(&[0.5, -0.2, 0.1], &gauss(), 40, 3, 110).unwrap();
        assert_eq!(&t.outputs[10..], &long.outputs[..]);
    }

    #[test]
    fn white_ar_is_the_noise() {
        let t = gen_ar(&[], &gauss(), 20, 9).unwrap();
        let mut rng = stream(9, "ar-innovation");
        let noise: Vec<f64> = (0..120).map(|_| gauss().draw(&mut rng)).collect();
        assert_eq!(&t.outputs[..], &noise[100..]);
    }

    #[test]
    fn masks() {
        let t = gen_ar(&[0.5], &gauss(), 10, 1).unwrap();
        let none = mask_labels(&t, &MaskSpec::Rate(0.0), 2).unwrap();
        assert!(none.label_mask.as_ref().unwrap().iter().all(|&b| b));
        let all = mask_labels(&t, &MaskSpec::Rate(1.0), 2).unwrap();
        assert!(all.label_mask.as_ref().unwrap().iter().all(|&b| !b));
        let some = mask_labels(&t, &MaskSpec::Indices(vec![3, 7]), 2).unwrap();
        let missing: Vec<usize> = (0..10).filter(|&i| !some.is_labeled(i)).collect();
        assert_eq!(missing, vec![3, 7]);
        assert_eq!(some.observed_before(5), vec![0, 1, 2, 4]);
        assert_eq!(some.outputs, t.outputs);
        assert!(mask_labels(&t, &MaskSpec::Rate(1.5), 2).is_err());
        assert!(mask_labels(&t, &MaskSpec::Indices(vec![10]), 2).is_err());
    }

    #[test]
    fn csv_layout() {
        let m = LinearGaussianModel::memoryless(&[1.0, 2.0], 1.0).unwrap();
        let t = gen_lgssm(&m, &InputProcess::default(), 3, 4).unwrap();
        let t = mask_labels(&t, &MaskSpec::Indices(vec![1]), 0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,x_0,x_1,y,mask");
        assert_eq!(lines.len(), 4);
        let fields: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(fields[0], "1");
        assert_eq!(fields[4], "0");
        assert_eq!(fields[3].parse::<f64>().unwrap(), t.outputs[1]);
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn regression_batches() {
        let model = BayesLinearModel::isotropic(3, 1.0, 0.25).unwrap();
        let a = gen_regression_batch(&model, &WeightSource::Prior, 5, 11).unwrap();
        let b = gen_regression_batch(&model, &WeightSource::Prior, 5, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train_inputs.len(), 5);
        let empty = gen_regression_batch(&model, &WeightSource::Fixed(vec![1.0, 0.0, -1.0]), 0, 1).unwrap();
        assert!(empty.train_inputs.is_empty() && empty.train_outputs.is_empty());
        assert_eq!(empty.test_input.len(), 3);
        assert!(gen_regression_batch(&model, &WeightSource::Fixed(vec![1.0]), 1, 1).is_err());
    }
}
