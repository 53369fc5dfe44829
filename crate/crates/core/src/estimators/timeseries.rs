//! Windowed estimators over an input process and an innovations process.
//!
//! The exact quantities condition on the entire past, whose dimension grows
//! with time and defeats k-NN estimation. Here the past is truncated to the
//! `lag` most recent steps: at time `t` the input window is
//! `(x_t, x_{t-1}, …, x_{t-lag})` (the current input is part of the causal side
//! information) and the innovation history is `(e_{t-1}, …, e_{t-lag})`.
//! This is an approximation that is exact for processes whose dependence dies
//! out within `lag` steps.

use super::knn::{ksg_cmi_locals, mean};
use super::{check_k, conditional_mutual_information, mutual_information, subsample_std_error, EntropyEstimate, EstimatorError, SampleMatrix};
use serde::{Deserialize, Serialize};

/// Aligned windows, one row per time `t = lag, …, n-1`.
#[derive(Debug, Clone)]
pub struct WindowedSeries {
    /// `(x_t, x_{t-1}, …, x_{t-lag})`, or `None` when there is no input process.
    pub input_window: Option<SampleMatrix>,
    /// `e_t`.
    pub target: SampleMatrix,
    /// `(e_{t-1}, …, e_{t-lag})`.
    pub history: SampleMatrix,
}

impl WindowedSeries {
    pub fn embed(input: Option<&SampleMatrix>, series: &[f64], lag: usize, k: usize) -> Result<Self, EstimatorError> {
        if lag == 0 {
            return Err(EstimatorError::ZeroLag);
        }
        if k == 0 {
            return Err(EstimatorError::ZeroNeighbors);
        }
        let n = series.len();
        if let Some(x) = input {
            if x.len() != n {
                return Err(EstimatorError::LengthMismatch(x.len(), n));
            }
        }
        if n <= lag + k {
            return Err(EstimatorError::SeriesTooShort { len: n, lag, k });
        }
        if series.iter().any(|v| !v.is_finite()) {
            return Err(EstimatorError::NonFinite);
        }
        let rows = n - lag;
        let mut target = Vec::with_capacity(rows);
        let mut history = Vec::with_capacity(rows * lag);
        for t in lag..n {
            target.push(series[t]);
            history.extend((1..=lag).map(|j| series[t - j]));
        }
        let input_window = match input {
            None => None,
            Some(x) => {
                let mut w = Vec::with_capacity(rows * x.dim() * (lag + 1));
                for t in lag..n {
                    for j in 0..=lag {
                        w.extend_from_slice(x.row(t - j));
                    }
                }
                Some(SampleMatrix::new(x.dim() * (lag + 1), w)?)
            }
        };
        Ok(Self { input_window, target: SampleMatrix::new(1, target)?, history: SampleMatrix::new(lag, history)? })
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }
}

/// `I(e_t; e_{t-1}, …, e_{t-lag})`: dependence of the current innovation on its
/// own recent past.
pub fn innovation_mutual_information(innovations: &[f64], lag: usize, k: usize) -> Result<EntropyEstimate, EstimatorError> {
    let w = WindowedSeries::embed(None, innovations, lag, k)?;
    mutual_information(&w.target, &w.history, k)
}

/// `I(e_t; e_{t-lag})` for a single lag.
pub fn lagged_mutual_information(series: &[f64], lag: usize, k: usize) -> Result<EntropyEstimate, EstimatorError> {
    let w = WindowedSeries::embed(None, series, lag, k)?;
    let far = SampleMatrix::from_scalars(&w.history.column(lag - 1))?;
    mutual_information(&w.target, &far, k)
}

/// Transfer entropy from the input process to the innovations,
/// `I(x_{t-lag..t}; e_t | e_{t-lag..t-1})`, averaged over `t`.
pub fn transfer_entropy(input: &SampleMatrix, innovations: &[f64], lag: usize, k: usize) -> Result<EntropyEstimate, EstimatorError> {
    let w = WindowedSeries::embed(Some(input), innovations, lag, k)?;
    let x = w.input_window.as_ref().expect("input given");
    conditional_mutual_information(x, &w.target, &w.history, k)
}

/// Cesàro-averaged directed information from input to innovations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectedInformation {
    /// Average over the first `horizon` windowed steps.
    pub estimate: EntropyEstimate,
    pub horizon: usize,
    /// Running averages after 1, 2, …, `horizon` steps, bits.
    pub running_average: Vec<f64>,
}

/// Directed-information rate as the running average of per-step windowed
/// conditional mutual informations. The per-step terms are the pointwise
/// Frenzel–Pompe contributions, with neighbours searched over the whole
/// series; `horizon` (default: every step) sets how many are averaged.
pub fn directed_information_rate(
    input: &SampleMatrix,
    innovations: &[f64],
    lag: usize,
    k: usize,
    horizon: Option<usize>,
) -> Result<DirectedInformation, EstimatorError> {
    let w = WindowedSeries::embed(Some(input), innovations, lag, k)?;
    let available = w.len();
    check_k(available, k)?;
    let horizon = horizon.unwrap_or(available);
    if horizon == 0 || horizon > available {
        return Err(EstimatorError::BadHorizon { horizon, available });
    }
    let x = w.input_window.as_ref().expect("input given").jittered();
    let (y, z) = (w.target.jittered(), w.history.jittered());
    let locals = ksg_cmi_locals(&x, &y, &z, k);
    let to_bits = 1.0 / std::f64::consts::LN_2;
    let mut running_average = Vec::with_capacity(horizon);
    let mut acc = 0.0;
    for (i, v) in locals[..horizon].iter().enumerate() {
        acc += v;
        running_average.push(acc / (i + 1) as f64 * to_bits);
    }
    let m = mean(&locals);
    let sd = (locals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (locals.len() - 1).max(1) as f64).sqrt();
    let value = acc / horizon as f64;
    // Pointwise terms share neighbourhoods, so their spread understates the
    // error of the full average; take the larger of the two error models.
    let sub = if horizon == available {
        subsample_std_error(available, k, |a, b| {
            mean(&ksg_cmi_locals(&x.slice_rows(a, b), &y.slice_rows(a, b), &z.slice_rows(a, b), k))
        })
    } else {
        0.0
    };
    let se = (sd / (horizon as f64).sqrt()).max(sub);
    Ok(DirectedInformation { estimate: EntropyEstimate::information(value, se, horizon, k), horizon, running_average })
}
