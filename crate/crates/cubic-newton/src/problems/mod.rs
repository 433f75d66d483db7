//! Finite-sum objectives `f(x) = (1/n) sum_i f_i(x)` with per-component
//! value/gradient/Hessian access and a known Hessian-Lipschitz constant.
//!
//! All oracles are read-only after construction; component evaluations are
//! pure and can run concurrently.

mod diag_nn;
mod libsvm;
mod logreg;
mod synthetic;

pub use diag_nn::{diag_nn_oracle, DiagNnOracle};
pub use libsvm::{parse_libsvm, parse_libsvm_with_dim, ParseError, ParsedData};
pub use logreg::{logreg_nonconvex_oracle, logreg_oracle, LogRegOracle, NONCONVEX_REG_CURVATURE};
pub use synthetic::{
    planted_logistic_dataset, synthetic_strongly_convex, QuadraticOracle, SyntheticConfig,
};

use nalgebra::{DMatrix, DVector};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("labels must lie in {{-1, +1}}, found {0}")]
    BadLabel(f64),
    #[error("dimension must be even to pack (u, v), got {0}")]
    OddDimension(usize),
    #[error("dataset has a non-finite entry")]
    NonFiniteData,
    #[error("dataset must have n >= 1 and d >= 1, got n={n}, d={d}")]
    EmptyData { n: usize, d: usize },
}

/// A dense feature/label table.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: DVector<f64>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self, ProblemError> {
        let (n, d) = (features.nrows(), features.ncols());
        if n == 0 || d == 0 {
            return Err(ProblemError::EmptyData { n, d });
        }
        if labels.len() != n {
            return Err(ProblemError::EmptyData { n: labels.len(), d });
        }
        if features.iter().any(|v| !v.is_finite()) || labels.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFiniteData);
        }
        Ok(Self { features, labels })
    }

    pub fn num_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn feature_row(&self, i: usize) -> DVector<f64> {
        self.features.row(i).transpose()
    }

    /// Splits the rows into a leading part of `head` samples and the rest.
    pub fn split_at(&self, head: usize) -> (Dataset, Dataset) {
        let n = self.num_samples();
        assert!(head >= 1 && head < n, "split must leave both halves non-empty");
        let first = Dataset {
            features: self.features.rows(0, head).into_owned(),
            labels: self.labels.rows(0, head).into_owned(),
        };
        let second = Dataset {
            features: self.features.rows(head, n - head).into_owned(),
            labels: self.labels.rows(head, n - head).into_owned(),
        };
        (first, second)
    }
}

/// Gradient-dominance certificate `f(x) - f* <= tau ||grad f(x)||^alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradDominanceSpec {
    pub tau: f64,
    pub alpha: f64,
}

impl GradDominanceSpec {
    pub fn new(tau: f64, alpha: f64) -> Self {
        assert!(tau > 0.0, "tau must be positive");
        assert!((1.0..=2.0).contains(&alpha), "alpha must lie in [1, 2]");
        Self { tau, alpha }
    }
}

/// Finite-sum objective with component-level oracle access.
pub trait ObjectiveOracle: Send + Sync {
    /// Number of components `n`.
    fn num_components(&self) -> usize;
    /// Problem dimension `d`.
    fn dim(&self) -> usize;
    /// Hessian-Lipschitz constant shared by every component.
    fn hess_lipschitz(&self) -> f64;

    fn component_value(&self, i: usize, x: &DVector<f64>) -> f64;
    fn component_gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64>;
    fn component_hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64>;

    /// Known optimal value, when available.
    fn f_star(&self) -> Option<f64> {
        None
    }

    /// Full objective `(1/n) sum_i f_i(x)` with compensated summation.
    fn value(&self, x: &DVector<f64>) -> f64 {
        let n = self.num_components();
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for i in 0..n {
            let v = self.component_value(i, x);
            let t = sum + v;
            if sum.abs() >= v.abs() {
                comp += (sum - t) + v;
            } else {
                comp += (v - t) + sum;
            }
            sum = t;
        }
        (sum + comp) / n as f64
    }

    /// Full gradient `(1/n) sum_i grad f_i(x)`.
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.num_components();
        let mut g = DVector::zeros(self.dim());
        for i in 0..n {
            g += self.component_gradient(i, x);
        }
        g / n as f64
    }

    /// Full Hessian `(1/n) sum_i hess f_i(x)`.
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.num_components();
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for i in 0..n {
            h += self.component_hessian(i, x);
        }
        h / n as f64
    }
}

macro_rules! forward_oracle {
    ($ty:ty) => {
        impl<T: ObjectiveOracle + ?Sized> ObjectiveOracle for $ty {
            fn num_components(&self) -> usize {
                (**self).num_components()
            }
            fn dim(&self) -> usize {
                (**self).dim()
            }
            fn hess_lipschitz(&self) -> f64 {
                (**self).hess_lipschitz()
            }
            fn component_value(&self, i: usize, x: &DVector<f64>) -> f64 {
                (**self).component_value(i, x)
            }
            fn component_gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
                (**self).component_gradient(i, x)
            }
            fn component_hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
                (**self).component_hessian(i, x)
            }
            fn f_star(&self) -> Option<f64> {
                (**self).f_star()
            }
        }
    };
}

forward_oracle!(Arc<T>);
forward_oracle!(&T);

/// View of a base oracle restricted to a fixed index multiset. The average
/// runs over the chosen indices, so this is the batch helper
/// `h = (1/b) sum_{i in B} f_i`.
pub struct SubsetOracle<O> {
    base: O,
    indices: Vec<usize>,
}

impl<O: ObjectiveOracle> SubsetOracle<O> {
    pub fn new(base: O, indices: Vec<usize>) -> Self {
        assert!(!indices.is_empty(), "subset must be non-empty");
        let n = base.num_components();
        assert!(indices.iter().all(|&i| i < n), "index out of range");
        Self { base, indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

impl<O: ObjectiveOracle> ObjectiveOracle for SubsetOracle<O> {
    fn num_components(&self) -> usize {
        self.indices.len()
    }
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn hess_lipschitz(&self) -> f64 {
        self.base.hess_lipschitz()
    }
    fn component_value(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.base.component_value(self.indices[i], x)
    }
    fn component_gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        self.base.component_gradient(self.indices[i], x)
    }
    fn component_hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        self.base.component_hessian(self.indices[i], x)
    }
}

/// Wraps an oracle and counts component evaluations. Intended for tests and
/// audits that assert ledger fidelity against actual oracle traffic.
pub struct CountingOracle<O> {
    base: O,
    values: AtomicU64,
    gradients: AtomicU64,
    hessians: AtomicU64,
}

impl<O: ObjectiveOracle> CountingOracle<O> {
    pub fn new(base: O) -> Self {
        Self {
            base,
            values: AtomicU64::new(0),
            gradients: AtomicU64::new(0),
            hessians: AtomicU64::new(0),
        }
    }

    pub fn value_evals(&self) -> u64 {
        self.values.load(Ordering::Relaxed)
    }

    pub fn gradient_evals(&self) -> u64 {
        self.gradients.load(Ordering::Relaxed)
    }

    pub fn hessian_evals(&self) -> u64 {
        self.hessians.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.values.store(0, Ordering::Relaxed);
        self.gradients.store(0, Ordering::Relaxed);
        self.hessians.store(0, Ordering::Relaxed);
    }
}

impl<O: ObjectiveOracle> ObjectiveOracle for CountingOracle<O> {
    fn num_components(&self) -> usize {
        self.base.num_components()
    }
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn hess_lipschitz(&self) -> f64 {
        self.base.hess_lipschitz()
    }
    fn component_value(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.values.fetch_add(1, Ordering::Relaxed);
        self.base.component_value(i, x)
    }
    fn component_gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        self.gradients.fetch_add(1, Ordering::Relaxed);
        self.base.component_gradient(i, x)
    }
    fn component_hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        self.hessians.fetch_add(1, Ordering::Relaxed);
        self.base.component_hessian(i, x)
    }
    fn f_star(&self) -> Option<f64> {
        self.base.f_star()
    }
}

/// Spectral norm of a symmetric matrix.
pub fn spectral_norm(h: &DMatrix<f64>) -> f64 {
    let sym = (h + h.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min(h: &DMatrix<f64>) -> f64 {
    let sym = (h + h.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}
