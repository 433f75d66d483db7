//! Logistic-regression objectives: the l2-regularized convex form and the
//! variant with the bounded non-convex regularizer `sum_j x_j^2 / (1 + x_j^2)`.

use super::{Dataset, ObjectiveOracle, ProblemError};
use nalgebra::{DMatrix, DVector};

/// Peak of |d^3/dt^3 [t^2 / (1 + t^2)]|, attained at t^2 = 1 - 2/sqrt(5).
/// Bounds the Hessian-Lipschitz constant contributed per unit of the
/// non-convex regularizer weight.
pub const NONCONVEX_REG_CURVATURE: f64 = 4.669651135926097;

/// log(1 + e^t), overflow-safe.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Logistic sigmoid.
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Regularizer {
    /// (l2/2) ||x||^2
    Ridge(f64),
    /// lambda * sum_j x_j^2 / (1 + x_j^2)
    Bounded(f64),
}

/// Finite-sum logistic loss `f_i(x) = log(1 + exp(-b_i a_i^T x)) + reg(x)`.
#[derive(Debug, Clone)]
pub struct LogRegOracle {
    data: Dataset,
    reg: Regularizer,
    hess_lipschitz: f64,
    f_star: Option<f64>,
}

/// l2-regularized logistic regression. The loss curvature is label
/// independent; the Hessian-Lipschitz constant is `max_i ||a_i||^3 / (6 sqrt 3)`.
pub fn logreg_oracle(data: Dataset, l2: f64) -> Result<LogRegOracle, ProblemError> {
    assert!(l2 >= 0.0, "l2 weight must be non-negative");
    validate_labels(&data)?;
    let hess_lipschitz = logistic_lipschitz(&data);
    Ok(LogRegOracle { data, reg: Regularizer::Ridge(l2), hess_lipschitz, f_star: None })
}

/// Logistic loss plus the bounded non-convex regularizer
/// `lambda * sum_j x_j^2 / (1 + x_j^2)`.
pub fn logreg_nonconvex_oracle(data: Dataset, lambda: f64) -> Result<LogRegOracle, ProblemError> {
    assert!(lambda >= 0.0, "regularizer weight must be non-negative");
    validate_labels(&data)?;
    let hess_lipschitz = logistic_lipschitz(&data) + lambda * NONCONVEX_REG_CURVATURE;
    Ok(LogRegOracle { data, reg: Regularizer::Bounded(lambda), hess_lipschitz, f_star: None })
}

fn validate_labels(data: &Dataset) -> Result<(), ProblemError> {
    for &b in data.labels().iter() {
        if b != 1.0 && b != -1.0 {
            return Err(ProblemError::BadLabel(b));
        }
    }
    Ok(())
}

fn logistic_lipschitz(data: &Dataset) -> f64 {
    let mut max_cube = 0.0f64;
    for i in 0..data.num_samples() {
        max_cube = max_cube.max(data.features().row(i).norm().powi(3));
    }
    max_cube / (6.0 * 3.0f64.sqrt())
}

impl LogRegOracle {
    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    /// Caches a known optimal value for rate diagnostics.
    pub fn with_f_star(mut self, f_star: f64) -> Self {
        self.f_star = Some(f_star);
        self
    }

    fn margin(&self, i: usize, x: &DVector<f64>) -> f64 {
        // t = -b_i a_i^T x
        -self.data.labels()[i] * self.data.features().row(i).transpose().dot(x)
    }

    fn reg_value(&self, x: &DVector<f64>) -> f64 {
        match self.reg {
            Regularizer::Ridge(l2) => 0.5 * l2 * x.norm_squared(),
            Regularizer::Bounded(lambda) => {
                lambda * x.iter().map(|&v| v * v / (1.0 + v * v)).sum::<f64>()
            }
        }
    }

    fn reg_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self.reg {
            Regularizer::Ridge(l2) => x * l2,
            Regularizer::Bounded(lambda) => DVector::from_fn(x.len(), |j, _| {
                let v = x[j];
                let q = 1.0 + v * v;
                lambda * 2.0 * v / (q * q)
            }),
        }
    }

    fn reg_hessian_diag(&self, x: &DVector<f64>) -> DVector<f64> {
        match self.reg {
            Regularizer::Ridge(l2) => DVector::from_element(x.len(), l2),
            Regularizer::Bounded(lambda) => DVector::from_fn(x.len(), |j, _| {
                let v = x[j];
                let q = 1.0 + v * v;
                lambda * (2.0 - 6.0 * v * v) / (q * q * q)
            }),
        }
    }
}

impl ObjectiveOracle for LogRegOracle {
    fn num_components(&self) -> usize {
        self.data.num_samples()
    }

    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn hess_lipschitz(&self) -> f64 {
        self.hess_lipschitz
    }

    fn f_star(&self) -> Option<f64> {
        self.f_star
    }

    fn component_value(&self, i: usize, x: &DVector<f64>) -> f64 {
        softplus(self.margin(i, x)) + self.reg_value(x)
    }

    fn component_gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let t = self.margin(i, x);
        let b = self.data.labels()[i];
        let coeff = -b * sigmoid(t);
        let mut g = self.data.feature_row(i) * coeff;
        g += self.reg_gradient(x);
        g
    }

    fn component_hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let t = self.margin(i, x);
        // l''(t) = sigma(t) sigma(-t) is even in t, so the loss Hessian does
        // not depend on the label.
        let w = sigmoid(t) * sigmoid(-t);
        let a = self.data.feature_row(i);
        let mut h = DMatrix::zeros(self.dim(), self.dim());
        h.ger(w, &a, &a, 0.0);
        let diag = self.reg_hessian_diag(x);
        for j in 0..self.dim() {
            h[(j, j)] += diag[j];
        }
        h
    }
}
