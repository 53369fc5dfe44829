use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use super::OracleError;

/// Linear-Gaussian state-space model with an exogenous input channel:
///
/// ```text
/// s_{k+1} = A s_k + B x_k + u_k,   u_k ~ N(0, Q)
/// y_k     = C s_k + D x_k + v_k,   v_k ~ N(0, r)
/// s_0 ~ N(0, P0)
/// ```
///
/// Inputs are treated as known side information, so they shift conditional
/// means but never conditional variances.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianModel {
    a: DMatrix<f64>,
    q: DMatrix<f64>,
    b: DMatrix<f64>,
    c: RowDVector<f64>,
    d: RowDVector<f64>,
    r: f64,
    p0: DMatrix<f64>,
}

fn check_square(name: &'static str, m: &DMatrix<f64>, n: usize) -> Result<(), OracleError> {
    if m.nrows() != n || m.ncols() != n {
        return Err(OracleError::Dimension { what: name, expected: (n, n), got: (m.nrows(), m.ncols()) });
    }
    Ok(())
}

fn check_psd(name: &'static str, m: &DMatrix<f64>) -> Result<(), OracleError> {
    let scale = m.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    if (m - m.transpose()).amax() > 1e-9 * scale {
        return Err(OracleError::NotSymmetric(name));
    }
    let sym = (m + m.transpose()) * 0.5;
    let min = sym.symmetric_eigenvalues().min();
    if min < -1e-10 * scale {
        return Err(OracleError::NotPsd(name));
    }
    Ok(())
}

impl LinearGaussianModel {
    pub fn new(
        a: DMatrix<f64>,
        q: DMatrix<f64>,
        b: DMatrix<f64>,
        c: RowDVector<f64>,
        d: RowDVector<f64>,
        r: f64,
        p0: DMatrix<f64>,
    ) -> Result<Self, OracleError> {
        let m = a.nrows();
        if m == 0 {
            return Err(OracleError::EmptyState);
        }
        check_square("state transition", &a, m)?;
        check_square("state noise covariance", &q, m)?;
        check_square("initial state covariance", &p0, m)?;
        if b.nrows() != m {
            return Err(OracleError::Dimension { what: "input map", expected: (m, b.ncols()), got: (b.nrows(), b.ncols()) });
        }
        if c.len() != m {
            return Err(OracleError::Dimension { what: "output map", expected: (1, m), got: (1, c.len()) });
        }
        if d.len() != b.ncols() {
            return Err(OracleError::Dimension { what: "feedthrough", expected: (1, b.ncols()), got: (1, d.len()) });
        }
        let finite = [&a, &q, &b, &p0].iter().all(|x| x.iter().all(|v| v.is_finite()))
            && c.iter().chain(d.iter()).all(|v| v.is_finite());
        if !finite || !r.is_finite() {
            return Err(OracleError::NonFinite);
        }
        if r < 0.0 {
            return Err(OracleError::NegativeNoise(r));
        }
        check_psd("state noise covariance", &q)?;
        check_psd("initial state covariance", &p0)?;
        Ok(Self { a, q, b, c, d, r, p0 })
    }

    /// AR(m) process `y_k = Σ a_j y_{k-j} + w_k` in companion form, started
    /// from its stationary law. An empty coefficient list gives white noise.
    pub fn ar(coeffs: &[f64], noise_var: f64) -> Result<Self, OracleError> {
        if noise_var <= 0.0 || !noise_var.is_finite() {
            return Err(OracleError::NegativeNoise(noise_var));
        }
        let m = coeffs.len().max(1);
        let mut a = DMatrix::zeros(m, m);
        for (j, &c) in coeffs.iter().enumerate() {
            a[(0, j)] = c;
        }
        for i in 1..m {
            a[(i, i - 1)] = 1.0;
        }
        let mut q = DMatrix::zeros(m, m);
        q[(0, 0)] = noise_var;
        let mut c = RowDVector::zeros(m);
        c[0] = 1.0;
        let p0 = stationary_covariance(&a, &q)?;
        Self::new(a, q, DMatrix::zeros(m, 0), c, RowDVector::zeros(0), 0.0, p0)
    }

    /// ARMA(1,1) `y_k = a y_{k-1} + w_k + θ w_{k-1}` with state `(y_k, w_k)`,
    /// started from its stationary law.
    pub fn arma11(a: f64, theta: f64, noise_var: f64) -> Result<Self, OracleError> {
        if noise_var <= 0.0 || !noise_var.is_finite() {
            return Err(OracleError::NegativeNoise(noise_var));
        }
        let am = DMatrix::from_row_slice(2, 2, &[a, theta, 0.0, 0.0]);
        let q = DMatrix::from_element(2, 2, noise_var);
        let p0 = stationary_covariance(&am, &q)?;
        Self::new(am, q, DMatrix::zeros(2, 0), RowDVector::from_row_slice(&[1.0, 0.0]), RowDVector::zeros(0), 0.0, p0)
    }

    /// Memoryless `y_k = cᵀ x_k + w_k`.
    pub fn memoryless(c: &[f64], noise_var: f64) -> Result<Self, OracleError> {
        let n = c.len();
        Self::new(
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, n),
            RowDVector::zeros(1),
            RowDVector::from_row_slice(c),
            noise_var,
            DMatrix::zeros(1, 1),
        )
    }

    /// `y_k = v_k`, no state and no inputs.
    pub fn white_noise(var: f64) -> Result<Self, OracleError> {
        Self::memoryless(&[], var)
    }

    /// Scalar state `s_{k+1} = a s_k + u_k`, `y_k = c s_k + v_k`, stationary start.
    pub fn scalar(a: f64, q: f64, c: f64, r: f64) -> Result<Self, OracleError> {
        let am = DMatrix::from_element(1, 1, a);
        let qm = DMatrix::from_element(1, 1, q);
        let p0 = stationary_covariance(&am, &qm)?;
        Self::new(am, qm, DMatrix::zeros(1, 0), RowDVector::from_element(1, c), RowDVector::zeros(0), r, p0)
    }

    /// Replaces the input channel.
    pub fn with_input(mut self, b: DMatrix<f64>, d: RowDVector<f64>) -> Result<Self, OracleError> {
        self.b = b;
        self.d = d;
        Self::new(self.a, self.q, self.b, self.c, self.d, self.r, self.p0)
    }

    /// Replaces the initial covariance by the stationary one.
    pub fn with_stationary_start(mut self) -> Result<Self, OracleError> {
        self.p0 = stationary_covariance(&self.a, &self.q)?;
        Ok(self)
    }

    /// Copy with the state transition replaced, keeping everything else.
    /// Used to build deliberately misspecified filters.
    pub fn with_transition(mut self, a: DMatrix<f64>) -> Result<Self, OracleError> {
        self.a = a;
        Self::new(self.a, self.q, self.b, self.c, self.d, self.r, self.p0)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn state_noise(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn input_map(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn output_map(&self) -> &RowDVector<f64> {
        &self.c
    }

    pub fn feedthrough(&self) -> &RowDVector<f64> {
        &self.d
    }

    pub fn output_noise(&self) -> f64 {
        self.r
    }

    pub fn initial_covariance(&self) -> &DMatrix<f64> {
        &self.p0
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius() < 1.0
    }

    pub(crate) fn require_stable(&self) -> Result<(), OracleError> {
        let rho = self.spectral_radius();
        if rho < 1.0 {
            Ok(())
        } else {
            Err(OracleError::Unstable(rho))
        }
    }

    pub fn spec(&self) -> ModelSpec {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        ModelSpec {
            transition: rows(&self.a),
            state_noise: rows(&self.q),
            input_map: rows(&self.b),
            output_map: self.c.iter().copied().collect(),
            feedthrough: self.d.iter().copied().collect(),
            output_noise: self.r,
            initial_covariance: Some(rows(&self.p0)),
        }
    }
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Solves `P = A P Aᵀ + Q` directly through `(I − A⊗A) vec P = vec Q`.
pub fn stationary_covariance(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>, OracleError> {
    let rho = spectral_radius(a);
    if rho >= 1.0 {
        return Err(OracleError::Unstable(rho));
    }
    let m = a.nrows();
    let lhs = DMatrix::identity(m * m, m * m) - a.kronecker(a);
    let rhs = DVector::from_iterator(m * m, q.iter().copied());
    let sol = lhs.lu().solve(&rhs).ok_or(OracleError::Unstable(rho))?;
    let p = DMatrix::from_iterator(m, m, sol.iter().copied());
    Ok((&p + p.transpose()) * 0.5)
}

/// Serializable form of [`LinearGaussianModel`] with nested row vectors.
/// A missing initial covariance means "start from the stationary law".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub transition: Vec<Vec<f64>>,
    pub state_noise: Vec<Vec<f64>>,
    #[serde(default)]
    pub input_map: Vec<Vec<f64>>,
    pub output_map: Vec<f64>,
    #[serde(default)]
    pub feedthrough: Vec<f64>,
    pub output_noise: f64,
    #[serde(default)]
    pub initial_covariance: Option<Vec<Vec<f64>>>,
}

fn matrix(what: &'static str, rows: &[Vec<f64>], ncols_if_empty: usize) -> Result<DMatrix<f64>, OracleError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(ncols_if_empty, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(OracleError::Ragged(what));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl TryFrom<&ModelSpec> for LinearGaussianModel {
    type Error = OracleError;

    fn try_from(s: &ModelSpec) -> Result<Self, OracleError> {
        let a = matrix("transition", &s.transition, 0)?;
        let q = matrix("state_noise", &s.state_noise, 0)?;
        let m = a.nrows();
        let n = s.feedthrough.len().max(s.input_map.first().map_or(0, Vec::len));
        let b = if s.input_map.is_empty() { DMatrix::zeros(m, n) } else { matrix("input_map", &s.input_map, n)? };
        let d = if s.feedthrough.is_empty() { RowDVector::zeros(b.ncols()) } else { RowDVector::from_row_slice(&s.feedthrough) };
        let c = RowDVector::from_row_slice(&s.output_map);
        let p0 = match &s.initial_covariance {
            Some(rows) => matrix("initial_covariance", rows, m)?,
            None => {
                check_square("state transition", &a, m)?;
                check_square("state noise covariance", &q, m)?;
                stationary_covariance(&a, &q)?
            }
        };
        LinearGaussianModel::new(a, q, b, c, d, s.output_noise, p0)
    }
}
