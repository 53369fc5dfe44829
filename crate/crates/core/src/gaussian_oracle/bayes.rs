use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::maxent::EntropyBits;

/// Bayesian linear regression `y = wᵀx + ε`, `w ~ N(0, Σ₀)`, `ε ~ N(0, σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesLinearModel {
    prior_cov: DMatrix<f64>,
    noise_var: f64,
}

/// Gaussian weight posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl BayesLinearModel {
    pub fn new(prior_cov: DMatrix<f64>, noise_var: f64) -> Result<Self, OracleError> {
        let d = prior_cov.nrows();
        if prior_cov.ncols() != d {
            return Err(OracleError::Dimension { what: "weight prior covariance", expected: (d, d), got: prior_cov.shape() });
        }
        if !(noise_var > 0.0) || !noise_var.is_finite() {
            return Err(OracleError::NegativeNoise(noise_var));
        }
        if prior_cov.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite);
        }
        let scale = prior_cov.amax().max(1.0);
        if (&prior_cov - prior_cov.transpose()).amax() > 1e-9 * scale {
            return Err(OracleError::NotSymmetric("weight prior covariance"));
        }
        if d > 0 && prior_cov.clone().symmetric_eigenvalues().min() < -1e-10 * scale {
            return Err(OracleError::NotPsd("weight prior covariance"));
        }
        Ok(Self { prior_cov, noise_var })
    }

    /// Isotropic prior `σ_w² I`.
    pub fn isotropic(dim: usize, weight_var: f64, noise_var: f64) -> Result<Self, OracleError> {
        Self::new(DMatrix::identity(dim, dim) * weight_var, noise_var)
    }

    pub fn input_dim(&self) -> usize {
        self.prior_cov.nrows()
    }

    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.prior_cov
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    fn check_input(&self, x: &[f64]) -> Result<(), OracleError> {
        if x.len() != self.input_dim() {
            return Err(OracleError::InputDimension { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    /// Posterior over the weights after the rows of `train_inputs` with
    /// outputs `train_outputs`, by sequential rank-one updates (the prior may
    /// be singular).
    pub fn posterior(&self, train_inputs: &[Vec<f64>], train_outputs: &[f64]) -> Result<Posterior, OracleError> {
        if train_inputs.len() != train_outputs.len() {
            return Err(OracleError::Dimension {
                what: "training outputs",
                expected: (train_inputs.len(), 1),
                got: (train_outputs.len(), 1),
            });
        }
        let (mean, cov) = self.update(train_inputs, Some(train_outputs))?;
        Ok(Posterior {
            mean: mean.iter().copied().collect(),
            cov: (0..cov.nrows()).map(|i| cov.row(i).iter().copied().collect()).collect(),
        })
    }

    fn update(&self, inputs: &[Vec<f64>], outputs: Option<&[f64]>) -> Result<(DVector<f64>, DMatrix<f64>), OracleError> {
        let d = self.input_dim();
        let mut mean = DVector::zeros(d);
        let mut cov = self.prior_cov.clone();
        for (i, row) in inputs.iter().enumerate() {
            self.check_input(row)?;
            let x = DVector::from_column_slice(row);
            let sx = &cov * &x;
            let s = x.dot(&sx) + self.noise_var;
            if let Some(y) = outputs {
                let e = y[i] - x.dot(&mean);
                mean += &sx * (e / s);
            }
            cov -= &sx * sx.transpose() / s;
            cov = (&cov + cov.transpose()) * 0.5;
        }
        Ok((mean, cov))
    }

    /// Posterior-predictive variance `x_testᵀ Σ_post x_test + σ²`.
    pub fn predictive_variance(&self, train_inputs: &[Vec<f64>], test_input: &[f64]) -> Result<f64, OracleError> {
        self.check_input(test_input)?;
        let (_, cov) = self.update(train_inputs, None)?;
        let x = DVector::from_column_slice(test_input);
        Ok(x.dot(&(&cov * &x)).max(0.0) + self.noise_var)
    }
}

/// `h(y_test | x_test, y_{1..k}, x_{1..k})` for the Bayesian linear model.
pub fn generalization_conditional_entropy(
    model: &BayesLinearModel,
    train_inputs: &[Vec<f64>],
    test_input: &[f64],
) -> Result<EntropyBits, OracleError> {
    Ok(EntropyBits::gaussian(model.predictive_variance(train_inputs, test_input)?))
}
