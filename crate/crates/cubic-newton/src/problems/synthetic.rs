//! Seeded synthetic problem generators. All generators are bit-reproducible
//! for a fixed 64-bit seed.

use super::{Dataset, GradDominanceSpec, ObjectiveOracle};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Sizes for the synthetic quadratic generator.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticConfig {
    pub n: usize,
    pub d: usize,
    pub mu: f64,
    pub seed: u64,
}

/// Finite sum of convex quadratics
/// `f_i(x) = 1/2 x^T (A_i + mu I) x + b_i^T x` with `A_i` positive
/// semidefinite. The average is mu-strongly convex, the Hessian is constant
/// (Hessian-Lipschitz constant zero) and the optimum is known in closed form.
#[derive(Debug, Clone)]
pub struct QuadraticOracle {
    quadratics: Vec<DMatrix<f64>>,
    linears: Vec<DVector<f64>>,
    minimizer: DVector<f64>,
    f_star: f64,
}

/// Generates a mu-strongly convex quadratic sum together with its
/// gradient-dominance certificate `tau = 1/(2 mu)`, `alpha = 2`.
pub fn synthetic_strongly_convex(
    n: usize,
    d: usize,
    mu: f64,
    seed: u64,
) -> (QuadraticOracle, GradDominanceSpec) {
    assert!(mu > 0.0, "mu must be positive");
    assert!(n >= 1 && d >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut quadratics = Vec::with_capacity(n);
    let mut linears = Vec::with_capacity(n);
    for _ in 0..n {
        let root = DMatrix::from_fn(d, d, |_, _| {
            let v: f64 = rng.sample(StandardNormal);
            v / (d as f64).sqrt()
        });
        let mut a = &root * root.transpose();
        for j in 0..d {
            a[(j, j)] += mu;
        }
        quadratics.push(a);
        linears.push(DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)));
    }

    let mut mean_a = DMatrix::zeros(d, d);
    for a in &quadratics {
        mean_a += a;
    }
    mean_a /= n as f64;
    let mut mean_b = DVector::zeros(d);
    for b in &linears {
        mean_b += b;
    }
    mean_b /= n as f64;

    let minimizer = mean_a
        .clone()
        .cholesky()
        .expect("mean quadratic is positive definite")
        .solve(&(-&mean_b));
    let f_star = 0.5 * (&mean_a * &minimizer).dot(&minimizer) + mean_b.dot(&minimizer);

    let oracle = QuadraticOracle { quadratics, linears, minimizer, f_star };
    (oracle, GradDominanceSpec::new(1.0 / (2.0 * mu), 2.0))
}

impl QuadraticOracle {
    pub fn minimizer(&self) -> &DVector<f64> {
        &self.minimizer
    }
}

impl ObjectiveOracle for QuadraticOracle {
    fn num_components(&self) -> usize {
        self.quadratics.len()
    }

    fn dim(&self) -> usize {
        self.minimizer.len()
    }

    fn hess_lipschitz(&self) -> f64 {
        0.0
    }

    fn f_star(&self) -> Option<f64> {
        Some(self.f_star)
    }

    fn component_value(&self, i: usize, x: &DVector<f64>) -> f64 {
        0.5 * (&self.quadratics[i] * x).dot(x) + self.linears[i].dot(x)
    }

    fn component_gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.quadratics[i] * x + &self.linears[i]
    }

    fn component_hessian(&self, i: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        self.quadratics[i].clone()
    }
}

/// Gaussian features with a planted separating direction; labels are the
/// separator sign with a seeded flip fraction of 5%. Feature rows are scaled
/// by `1/sqrt(d)` so per-sample norms stay O(1) as `d` grows.
pub fn planted_logistic_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    assert!(n >= 1 && d >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (d as f64).sqrt();
    let features = DMatrix::from_fn(n, d, |_, _| {
        let v: f64 = rng.sample(StandardNormal);
        v * scale
    });
    let separator = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let labels = DVector::from_fn(n, |i, _| {
        let margin = features.row(i).transpose().dot(&separator);
        let flip = rng.gen_range(0.0..1.0) < 0.05;
        let sign = if margin >= 0.0 { 1.0 } else { -1.0 };
        if flip {
            -sign
        } else {
            sign
        }
    });
    Dataset::new(features, labels).expect("generated data is finite and non-empty")
}
