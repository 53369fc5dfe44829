use nalgebra::{DMatrix, DVector};

use super::LinearGaussianModel;

/// Time-varying Kalman one-step predictor for a [`LinearGaussianModel`].
///
/// Each step runs `predict(x_k)` for `ŷ_k` and its variance, then either
/// `update(y_k)` or `skip()` when the label is unavailable. Skipping the
/// measurement update is exact conditioning on the observed labels only.
#[derive(Debug, Clone)]
pub struct KalmanFilter {
    model: LinearGaussianModel,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    pending: Option<Pending>,
}

#[derive(Debug, Clone)]
struct Pending {
    input: DVector<f64>,
    y_hat: f64,
    variance: f64,
}

impl KalmanFilter {
    pub fn new(model: LinearGaussianModel) -> Self {
        let m = model.state_dim();
        let cov = model.initial_covariance().clone();
        Self { model, mean: DVector::zeros(m), cov, pending: None }
    }

    pub fn model(&self) -> &LinearGaussianModel {
        &self.model
    }

    /// Predicted output mean and innovation variance for the current step.
    pub fn predict(&mut self, input: &[f64]) -> (f64, f64) {
        assert_eq!(input.len(), self.model.input_dim(), "input dimension");
        let x = DVector::from_column_slice(input);
        let y_hat = (self.model.output_map() * &self.mean)[0] + (self.model.feedthrough() * &x)[0];
        let variance = innovation_variance(&self.model, &self.cov);
        self.pending = Some(Pending { input: x, y_hat, variance });
        (y_hat, variance)
    }

    /// Conditions on the output of the current step and advances.
    pub fn update(&mut self, y: f64) {
        let p = self.pending.take().expect("predict before update");
        measurement_update(&self.model, &mut self.mean, &mut self.cov, Some(y - p.y_hat), p.variance);
        self.time_update(&p.input);
    }

    /// Advances without seeing the output of the current step.
    pub fn skip(&mut self) {
        let p = self.pending.take().expect("predict before skip");
        self.time_update(&p.input);
    }

    fn time_update(&mut self, x: &DVector<f64>) {
        let a = self.model.transition();
        self.mean = a * &self.mean + self.model.input_map() * x;
        self.cov = covariance_time_update(&self.model, &self.cov);
    }
}

pub(crate) fn innovation_variance(model: &LinearGaussianModel, cov: &DMatrix<f64>) -> f64 {
    let c = model.output_map();
    (c * cov * c.transpose())[0] + model.output_noise()
}

/// Joseph-free measurement update; a zero innovation variance carries no
/// information and leaves the state alone.
pub(crate) fn measurement_update(
    model: &LinearGaussianModel,
    mean: &mut DVector<f64>,
    cov: &mut DMatrix<f64>,
    innovation: Option<f64>,
    variance: f64,
) {
    if variance <= 0.0 {
        return;
    }
    let pc = &*cov * model.output_map().transpose();
    let gain = &pc / variance;
    if let Some(e) = innovation {
        *mean += &gain * e;
    }
    *cov -= &gain * pc.transpose();
    let sym = (&*cov + cov.transpose()) * 0.5;
    *cov = sym;
}

pub(crate) fn covariance_time_update(model: &LinearGaussianModel, cov: &DMatrix<f64>) -> DMatrix<f64> {
    let a = model.transition();
    a * cov * a.transpose() + model.state_noise()
}
