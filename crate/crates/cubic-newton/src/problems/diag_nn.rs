//! Diagonal two-factor network with squared loss:
//! `f_i(u, v) = (a_i^T (u o v) - b_i)^2 + (lambda/2) ||(u, v)||^2`
//! where `o` is the element-wise product and `x = (u, v)` packs both factors.

use super::{Dataset, ObjectiveOracle, ProblemError};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct DiagNnOracle {
    data: Dataset,
    lambda: f64,
    hess_lipschitz: f64,
}

/// Builds the oracle for an even packed dimension `2 * data.dim()`. The
/// objective is a quartic in `x`, so its Hessian-Lipschitz constant has no
/// closed form; it is estimated as 1.5x the largest difference ratio
/// `||H(x) - H(y)|| / ||x - y||` over random pairs in `[-box, box]^d`.
pub fn diag_nn_oracle(data: Dataset, lambda: f64) -> Result<DiagNnOracle, ProblemError> {
    diag_nn_oracle_in_box(data, lambda, 2.0)
}

/// Same as [`diag_nn_oracle`] with a configurable sampling box for the
/// Lipschitz estimate.
pub fn diag_nn_oracle_in_box(
    data: Dataset,
    lambda: f64,
    box_half_width: f64,
) -> Result<DiagNnOracle, ProblemError> {
    assert!(lambda >= 0.0, "regularizer weight must be non-negative");
    let mut oracle = DiagNnOracle { data, lambda, hess_lipschitz: 0.0 };
    oracle.hess_lipschitz = oracle.estimate_lipschitz(box_half_width);
    Ok(oracle)
}

impl DiagNnOracle {
    /// Feature width; the packed dimension is twice this.
    pub fn factor_dim(&self) -> usize {
        self.data.dim()
    }

    fn split<'a>(&self, x: &'a DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let p = self.factor_dim();
        assert_eq!(x.len(), 2 * p, "point does not pack (u, v)");
        (x.rows(0, p).into_owned(), x.rows(p, p).into_owned())
    }

    fn residual(&self, i: usize, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let a = self.data.feature_row(i);
        let mut z = -self.data.labels()[i];
        for k in 0..a.len() {
            z += a[k] * u[k] * v[k];
        }
        z
    }

    fn estimate_lipschitz(&self, half: f64) -> f64 {
        let d = 2 * self.factor_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b97f4a7c15);
        let mut worst: f64 = 0.0;
        // Spectral norms via power iteration would be cheaper, but at desk
        // scale the dense eigen call is fine for 10^4 pairs.
        let pairs = 10_000usize;
        for _ in 0..pairs {
            let x = DVector::from_fn(d, |_, _| rng.gen_range(-half..half));
            let y = DVector::from_fn(d, |_, _| rng.gen_range(-half..half));
            let gap = (&x - &y).norm();
            if gap < 1e-9 {
                continue;
            }
            let diff = self.hessian(&x) - self.hessian(&y);
            worst = worst.max(super::spectral_norm(&diff) / gap);
        }
        1.5 * worst
    }
}

impl ObjectiveOracle for DiagNnOracle {
    fn num_components(&self) -> usize {
        self.data.num_samples()
    }

    fn dim(&self) -> usize {
        2 * self.factor_dim()
    }

    fn hess_lipschitz(&self) -> f64 {
        self.hess_lipschitz
    }

    fn component_value(&self, i: usize, x: &DVector<f64>) -> f64 {
        let (u, v) = self.split(x);
        let z = self.residual(i, &u, &v);
        z * z + 0.5 * self.lambda * x.norm_squared()
    }

    fn component_gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let p = self.factor_dim();
        let (u, v) = self.split(x);
        let a = self.data.feature_row(i);
        let z = self.residual(i, &u, &v);
        let mut g = x * self.lambda;
        for k in 0..p {
            g[k] += 2.0 * z * a[k] * v[k];
            g[p + k] += 2.0 * z * a[k] * u[k];
        }
        g
    }

    fn component_hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let p = self.factor_dim();
        let (u, v) = self.split(x);
        let a = self.data.feature_row(i);
        let z = self.residual(i, &u, &v);
        let av = DVector::from_fn(p, |k, _| a[k] * v[k]);
        let au = DVector::from_fn(p, |k, _| a[k] * u[k]);
        let mut h = DMatrix::zeros(2 * p, 2 * p);
        for r in 0..p {
            for c in 0..p {
                h[(r, c)] = 2.0 * av[r] * av[c];
                h[(p + r, p + c)] = 2.0 * au[r] * au[c];
                let mut cross = 2.0 * av[r] * au[c];
                if r == c {
                    cross += 2.0 * z * a[r];
                }
                h[(r, p + c)] = cross;
                h[(p + c, r)] = cross;
            }
        }
        for j in 0..2 * p {
            h[(j, j)] += self.lambda;
        }
        h
    }
}
