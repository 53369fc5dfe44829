use std::f64::consts::PI;

use num_complex::Complex64;

use super::OracleError;
use crate::maxent::EntropyBits;

/// One-step prediction variance `exp((1/2π) ∫ ln S(ω) dω)` by the trapezoidal
/// rule on `grid` equispaced points of `[0, 2π)`. For a periodic integrand
/// the trapezoidal rule is the plain mean over the grid.
pub fn szego_prediction_variance(spectral_density: impl Fn(f64) -> f64, grid: usize) -> Result<f64, OracleError> {
    if grid == 0 {
        return Err(OracleError::EmptyGrid);
    }
    let mut acc = 0.0;
    for j in 0..grid {
        let omega = 2.0 * PI * j as f64 / grid as f64;
        let value = spectral_density(omega);
        if !(value > 0.0) || !value.is_finite() {
            return Err(OracleError::NonPositiveSpectrum { omega, value });
        }
        acc += value.ln();
    }
    Ok((acc / grid as f64).exp())
}

/// Entropy rate `½ log2(2πe σ²_pred)` of a stationary Gaussian process.
pub fn szego_entropy_rate(spectral_density: impl Fn(f64) -> f64, grid: usize) -> Result<EntropyBits, OracleError> {
    Ok(EntropyBits::gaussian(szego_prediction_variance(spectral_density, grid)?))
}

fn polynomial_gain(coeffs: &[f64], sign: f64, omega: f64) -> f64 {
    // |1 + sign·Σ c_j e^{-ijω}|²
    let z = Complex64::from_polar(1.0, -omega);
    let mut acc = Complex64::new(1.0, 0.0);
    let mut zj = Complex64::new(1.0, 0.0);
    for &c in coeffs {
        zj *= z;
        acc += sign * c * zj;
    }
    acc.norm_sqr()
}

/// Spectral density `σ² / |1 − Σ a_j e^{-ijω}|²` of an AR process.
pub fn ar_spectrum(coeffs: &[f64], noise_var: f64) -> impl Fn(f64) -> f64 + '_ {
    move |omega| noise_var / polynomial_gain(coeffs, -1.0, omega)
}

/// Spectral density `σ² |1 + Σ θ_j e^{-ijω}|² / |1 − Σ a_j e^{-ijω}|²` of an ARMA process.
pub fn arma_spectrum<'a>(ar: &'a [f64], ma: &'a [f64], noise_var: f64) -> impl Fn(f64) -> f64 + 'a {
    move |omega| noise_var * polynomial_gain(ma, 1.0, omega) / polynomial_gain(ar, -1.0, omega)
}
