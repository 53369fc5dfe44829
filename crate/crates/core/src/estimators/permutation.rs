//! Permutation null distributions. Shuffling one argument's rows destroys its
//! dependence on the others while keeping every marginal, so the spread of the
//! shuffled estimates is the estimator's noise floor at this sample size.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::knn::{ksg_cmi_nats, ksg_mi_nats};
use super::{check_aligned, check_k, EstimatorError, SampleMatrix};
use crate::rng::derive_indexed;

/// Summary of shuffled estimates, bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseFloor {
    pub shuffles: usize,
    pub mean: f64,
    pub std: f64,
    /// `mean + 3·std`: estimates at or below this are indistinguishable from zero.
    pub threshold: f64,
}

impl NoiseFloor {
    fn from_nats(values: &[f64]) -> Self {
        let bits: Vec<f64> = values.iter().map(|v| v / std::f64::consts::LN_2).collect();
        let n = bits.len();
        let mean = bits.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (bits.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { shuffles: n, mean, std, threshold: mean + 3.0 * std }
    }

    /// A floor of exactly zero, for quantities that vanish structurally.
    pub fn zero() -> Self {
        Self { shuffles: 0, mean: 0.0, std: 0.0, threshold: 0.0 }
    }

    pub fn exceeded_by(&self, bits: f64) -> bool {
        bits > self.threshold
    }
}

fn permutation(n: usize, seed: u64, index: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(derive_indexed(seed, "permutation", index as u64));
    idx.shuffle(&mut rng);
    idx
}

/// Null distribution of `I(x; y)` with the rows of `y` shuffled.
pub fn mi_noise_floor(
    x: &SampleMatrix,
    y: &SampleMatrix,
    k: usize,
    shuffles: usize,
    seed: u64,
) -> Result<NoiseFloor, EstimatorError> {
    let n = check_aligned(&[x, y])?;
    check_k(n, k)?;
    if shuffles == 0 {
        return Ok(NoiseFloor::zero());
    }
    let (jx, jy) = (x.jittered(), y.jittered());
    let values: Vec<f64> = (0..shuffles)
        .map(|s| ksg_mi_nats(&jx, &jy.select_rows(&permutation(n, seed, s)), k))
        .collect();
    Ok(NoiseFloor::from_nats(&values))
}

/// Null distribution of `I(x; y | z)` with the rows of `x` shuffled.
pub fn cmi_noise_floor(
    x: &SampleMatrix,
    y: &SampleMatrix,
    z: &SampleMatrix,
    k: usize,
    shuffles: usize,
    seed: u64,
) -> Result<NoiseFloor, EstimatorError> {
    let n = check_aligned(&[x, y, z])?;
    check_k(n, k)?;
    if shuffles == 0 {
        return Ok(NoiseFloor::zero());
    }
    let (jx, jy, jz) = (x.jittered(), y.jittered(), z.jittered());
    let values: Vec<f64> = (0..shuffles)
        .map(|s| ksg_cmi_nats(&jx.select_rows(&permutation(n, seed, s)), &jy, &jz, k))
        .collect();
    Ok(NoiseFloor::from_nats(&values))
}
