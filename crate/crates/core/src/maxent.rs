//! The exponential-power family that maximizes differential entropy under an
//! L_p-norm constraint, and the arithmetic linking entropy to L_p bounds.
//!
//! For `p ≥ 1` and scale `μ > 0` the density is
//!
//! ```text
//! f(x) = exp(-|x|^p / (p μ^p)) / (2 Γ((p+1)/p) p^{1/p} μ)
//! ```
//!
//! whose L_p norm is exactly `μ` and whose entropy is `log2(c_p μ)` with
//! `c_p = 2 Γ((p+1)/p) (p e)^{1/p}`. Any real variable with entropy `h` has
//! L_p norm at least `2^h / c_p`. Laplace (p = 1), Gaussian (p = 2) and the
//! uniform law on `[-μ, μ]` (p = ∞) are members; `p = ∞` is its own branch
//! everywhere rather than a large finite exponent.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::special::{ln_gamma, regularized_gamma_p};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaxEntError {
    #[error("norm exponent must satisfy p >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("cannot parse norm exponent from {0:?}")]
    UnparsableExponent(String),
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("empirical norm of an empty sample")]
    EmptySample,
    #[error("sample count must be at least 1")]
    ZeroCount,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Exponent {
    Finite(f64),
    Infinite,
}

/// Norm exponent `p ∈ [1, ∞]`. `∞` has a single representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PNorm(Exponent);

impl PNorm {
    pub const ONE: PNorm = PNorm(Exponent::Finite(1.0));
    pub const TWO: PNorm = PNorm(Exponent::Finite(2.0));
    pub const INFINITY: PNorm = PNorm(Exponent::Infinite);

    /// `f64::INFINITY` maps to [`PNorm::INFINITY`]; anything below 1 or NaN is rejected.
    pub fn new(p: f64) -> Result<Self, MaxEntError> {
        if p == f64::INFINITY {
            Ok(Self::INFINITY)
        } else if p >= 1.0 {
            Ok(PNorm(Exponent::Finite(p)))
        } else {
            Err(MaxEntError::InvalidExponent(p))
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self.0, Exponent::Infinite)
    }

    /// The exponent, or `None` for `p = ∞`.
    pub fn finite(self) -> Option<f64> {
        match self.0 {
            Exponent::Finite(p) => Some(p),
            Exponent::Infinite => None,
        }
    }

    /// The exponent as `f64` (`f64::INFINITY` for `p = ∞`).
    pub fn value(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for PNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for PNorm {
    type Err = MaxEntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "∞" => Ok(Self::INFINITY),
            _ => {
                let p: f64 = t
                    .parse()
                    .map_err(|_| MaxEntError::UnparsableExponent(s.to_string()))?;
                PNorm::new(p)
            }
        }
    }
}

impl Serialize for PNorm {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Exponent::Finite(p) => s.serialize_f64(p),
            Exponent::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for PNorm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(p) => PNorm::new(p),
            Raw::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Differential entropy in bits. May be negative; `-∞` marks a deterministic
/// relation (zero conditional uncertainty).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EntropyBits(pub f64);

impl EntropyBits {
    pub const DETERMINISTIC: EntropyBits = EntropyBits(f64::NEG_INFINITY);

    pub fn from_nats(nats: f64) -> Self {
        EntropyBits(nats / std::f64::consts::LN_2)
    }

    /// Entropy of a Gaussian with the given variance; a non-positive variance
    /// yields the deterministic sentinel.
    pub fn gaussian(variance: f64) -> Self {
        if variance > 0.0 {
            EntropyBits(0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * variance).log2())
        } else {
            Self::DETERMINISTIC
        }
    }

    pub fn bits(self) -> f64 {
        self.0
    }

    pub fn is_deterministic(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

impl fmt::Display for EntropyBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_deterministic() {
            f.write_str("-inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for EntropyBits {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_str("nan")
        }
    }
}

impl<'de> Deserialize<'de> for EntropyBits {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(EntropyBits(v)),
            Raw::Text(s) => match s.as_str() {
                "-inf" => Ok(EntropyBits::DETERMINISTIC),
                "inf" => Ok(EntropyBits(f64::INFINITY)),
                "nan" => Ok(EntropyBits(f64::NAN)),
                other => Err(serde::de::Error::custom(format!("bad entropy value {other:?}"))),
            },
        }
    }
}

/// `c_p = 2 Γ((p+1)/p) (p e)^{1/p}`; exactly 2 at `p = ∞`.
pub fn lp_constant(p: PNorm) -> f64 {
    match p.finite() {
        None => 2.0,
        Some(p) => {
            let inv = 1.0 / p;
            2.0 * (ln_gamma(1.0 + inv) + inv * (p.ln() + 1.0)).exp()
        }
    }
}

/// Largest entropy attainable by a variable with L_p norm `mu`.
pub fn maxent_entropy(p: PNorm, mu: f64) -> Result<EntropyBits, MaxEntError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(MaxEntError::InvalidScale(mu));
    }
    Ok(EntropyBits((lp_constant(p) * mu).log2()))
}

/// Smallest L_p norm compatible with entropy `h`: `2^h / c_p`. Also the scale
/// of the equality-case law. The deterministic sentinel maps to 0.
pub fn entropy_to_lp_bound(h: EntropyBits, p: PNorm) -> f64 {
    h.0.exp2() / lp_constant(p)
}

/// Exponential-power law with exponent `p` and L_p norm `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxEntDistribution {
    p: PNorm,
    mu: f64,
}

impl MaxEntDistribution {
    pub fn new(p: PNorm, mu: f64) -> Result<Self, MaxEntError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(MaxEntError::InvalidScale(mu));
        }
        Ok(Self { p, mu })
    }

    pub fn p(&self) -> PNorm {
        self.p
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn entropy(&self) -> EntropyBits {
        EntropyBits((lp_constant(self.p) * self.mu).log2())
    }

    /// Variance of the law: `μ² p^{2/p} Γ(3/p) / Γ(1/p)`, `μ²/3` at `p = ∞`.
    pub fn variance(&self) -> f64 {
        match self.p.finite() {
            None => self.mu * self.mu / 3.0,
            Some(p) => {
                let ln = 2.0 * self.mu.ln() + (2.0 / p) * p.ln() + ln_gamma(3.0 / p) - ln_gamma(1.0 / p);
                ln.exp()
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let mu = self.mu;
        match self.p.finite() {
            None => {
                if x.abs() <= mu {
                    0.5 / mu
                } else {
                    0.0
                }
            }
            Some(p) => {
                let log_norm = 2f64.ln() + ln_gamma(1.0 + 1.0 / p) + p.ln() / p + mu.ln();
                let log_kernel = -(x.abs() / mu).powf(p) / p;
                (log_kernel - log_norm).exp()
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let mu = self.mu;
        match self.p.finite() {
            None => ((x + mu) / (2.0 * mu)).clamp(0.0, 1.0),
            Some(p) => {
                // |x|^p / (p μ^p) is Gamma(1/p, 1) distributed.
                let t = (x.abs() / mu).powf(p) / p;
                let half = 0.5 * regularized_gamma_p(1.0 / p, t);
                if x >= 0.0 {
                    0.5 + half
                } else {
                    0.5 - half
                }
            }
        }
    }

    /// `n` i.i.d. draws, reproducible from `seed`.
    ///
    /// Finite `p`: `u ~ Gamma(1/p, 1)`, `x = ±(p μ^p u)^{1/p}` with a fair sign.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>, MaxEntError> {
        if n == 0 {
            return Err(MaxEntError::ZeroCount);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Ok((0..n).map(|_| self.draw(&mut rng)).collect())
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mu = self.mu;
        match self.p.finite() {
            None => rng.gen_range(-mu..=mu),
            Some(p) => {
                let u = gamma_variate(1.0 / p, rng);
                let magnitude = mu * (p * u).powf(1.0 / p);
                if rng.gen::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            }
        }
    }
}

/// Marsaglia–Tsang Gamma(shape, 1) sampler; shapes below one are boosted
/// through `Gamma(shape + 1) · U^{1/shape}`.
pub fn gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let g = gamma_variate(shape + 1.0, rng);
        let u: f64 = rng.gen::<f64>();
        // u == 0 would collapse the draw to exactly zero.
        let u = if u > 0.0 { u } else { f64::MIN_POSITIVE };
        return g * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * z;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.gen();
        if u < 1.0 - 0.0331 * z.powi(4) {
            return d * v;
        }
        if u > 0.0 && u.ln() < 0.5 * z * z + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// `((1/n) Σ|x_i|^p)^{1/p}`, computed relative to `max |x_i|` so large `p`
/// does not overflow. At `p = ∞` this is the sample maximum of `|x_i|`.
pub fn empirical_lp_norm(samples: &[f64], p: PNorm) -> Result<f64, MaxEntError> {
    if samples.is_empty() {
        return Err(MaxEntError::EmptySample);
    }
    let peak = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    match p.finite() {
        None => Ok(peak),
        Some(_) if peak == 0.0 || !peak.is_finite() => Ok(peak),
        Some(p) => {
            let mean = samples.iter().map(|x| (x.abs() / peak).powf(p)).sum::<f64>() / samples.len() as f64;
            Ok(peak * (mean.ln() / p).exp())
        }
    }
}
