//! Exact solver for the cubically regularized quadratic model
//!
//! ```text
//!     Omega(s) = <g, s> + 1/2 <H s, s> + (M/6) ||s||^3
//! ```
//!
//! with symmetric, possibly indefinite `H`. The solver factorizes `H` once
//! (spectral decomposition) and then finds the global minimizer by a
//! safeguarded Newton/bisection iteration on the scalar secular equation
//!
//! ```text
//!     psi(r) = ||(H + (M/2) r I)^{-1} g|| = r,      r > max(0, -2 lambda_min / M),
//! ```
//!
//! including the hard case (gradient orthogonal to the minimal eigenspace and
//! no interior root), where a minimal-eigenvector component is added to reach
//! the boundary norm. The factorization is reusable across solves with
//! different gradients, which is what makes lazy-Hessian methods cheap.

use nalgebra::{DMatrix, DVector};
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use thiserror::Error;

/// Default relative tolerance for the secular root find.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Largest tolerance accepted by [`solve_cubic`].
pub const MAX_TOL: f64 = 1e-4;

/// Relative asymmetry accepted when validating a Hessian estimate.
pub const SYMMETRY_TOL: f64 = 1e-12;

const MAX_ROOT_ITERS: usize = 200;
/// A direction counts as a minimal-eigenspace member when its eigenvalue is
/// within this relative distance of `lambda_min`.
const EIG_CLUSTER_TOL: f64 = 1e-10;
/// Hard-case detection: |q_i^T g| <= HARD_CASE_TOL * ||g|| on the minimal eigenspace.
const HARD_CASE_TOL: f64 = 1e-11;

#[derive(Debug, Error)]
pub enum CubicError {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not symmetric: relative asymmetry {asymmetry:.3e} exceeds {SYMMETRY_TOL:.0e}")]
    Asymmetric { asymmetry: f64 },
    #[error("dimension mismatch: gradient has length {grad}, Hessian is {hess}x{hess}")]
    DimensionMismatch { grad: usize, hess: usize },
    #[error("regularization weight must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("tolerance must lie in (0, {MAX_TOL:.0e}], got {0}")]
    BadTolerance(f64),
    #[error("secular root find failed to converge within {iters} iterations, last residual {residual:.3e}")]
    RootFind { iters: usize, residual: f64 },
}

/// The data of one cubic model: gradient estimate, Hessian estimate and the
/// cubic regularization weight.
#[derive(Debug, Clone)]
pub struct CubicModel {
    g: DVector<f64>,
    h: DMatrix<f64>,
    weight: f64,
}

impl CubicModel {
    /// Validates dimensions, symmetry of the Hessian estimate and positivity
    /// of the regularization weight.
    pub fn new(g: DVector<f64>, h: DMatrix<f64>, weight: f64) -> Result<Self, CubicError> {
        check_symmetric(&h)?;
        if g.len() != h.nrows() {
            return Err(CubicError::DimensionMismatch { grad: g.len(), hess: h.nrows() });
        }
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(CubicError::NonPositiveWeight(weight));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(CubicError::NonFinite { row: i, col: 0 });
        }
        Ok(Self { g, h, weight })
    }

    pub fn gradient(&self) -> &DVector<f64> {
        &self.g
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Model value `<g,s> + 1/2 <Hs,s> + (M/6)||s||^3` at an arbitrary step.
    pub fn value(&self, s: &DVector<f64>) -> f64 {
        self.g.dot(s) + 0.5 * (&self.h * s).dot(s) + self.weight / 6.0 * s.norm().powi(3)
    }
}

/// Reusable spectral factorization `H = Q diag(lambda) Q^T` with eigenvalues
/// sorted ascending.
#[derive(Debug, Clone)]
pub struct SpectralCache {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    source_hash: u64,
}

impl SpectralCache {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Ascending eigenvalues of the factored matrix.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthogonal eigenvector matrix, columns matching [`eigenvalues`](Self::eigenvalues).
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Identity token of the matrix this cache factors.
    pub fn source_hash(&self) -> u64 {
        self.source_hash
    }

    /// True when this cache was built from exactly this matrix (bitwise).
    pub fn matches(&self, h: &DMatrix<f64>) -> bool {
        self.source_hash == matrix_hash(h)
    }

    /// Rebuilds `Q diag(lambda) Q^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = {
            let mut m = self.eigenvectors.clone();
            for (j, col) in m.column_iter_mut().enumerate() {
                let mut col = col;
                col *= self.eigenvalues[j];
            }
            m
        };
        &scaled * self.eigenvectors.transpose()
    }
}

/// Solution of the cubic model: step, its norm, model value and solver
/// diagnostics.
#[derive(Debug, Clone)]
pub struct CubicStep {
    /// Step `x^+ - x`.
    pub s: DVector<f64>,
    /// Step norm `||s||`.
    pub r: f64,
    /// Model value at the step.
    pub model_value: f64,
    /// Whether the boundary (hard) case was taken.
    pub hard_case: bool,
    /// Secular Newton/bisection iterations used.
    pub newton_iters: usize,
    /// Stationarity residual `||g + H s + (M/2) r s||`.
    pub residual: f64,
}

fn matrix_hash(h: &DMatrix<f64>) -> u64 {
    let mut hasher = DefaultHasher::new();
    h.nrows().hash(&mut hasher);
    for v in h.iter() {
        v.to_bits().hash(&mut hasher);
    }
    hasher.finish()
}

fn check_symmetric(h: &DMatrix<f64>) -> Result<(), CubicError> {
    if h.nrows() != h.ncols() {
        return Err(CubicError::DimensionMismatch { grad: h.ncols(), hess: h.nrows() });
    }
    let mut scale = 0.0f64;
    for (idx, v) in h.iter().enumerate() {
        if !v.is_finite() {
            return Err(CubicError::NonFinite { row: idx % h.nrows(), col: idx / h.nrows() });
        }
        scale = scale.max(v.abs());
    }
    let mut asym = 0.0f64;
    for i in 0..h.nrows() {
        for j in (i + 1)..h.ncols() {
            asym = asym.max((h[(i, j)] - h[(j, i)]).abs());
        }
    }
    let rel = if scale > 0.0 { asym / scale } else { 0.0 };
    if rel > SYMMETRY_TOL {
        return Err(CubicError::Asymmetric { asymmetry: rel });
    }
    Ok(())
}

/// Spectral factorization of a symmetric matrix, eigenvalues ascending.
pub fn factorize(h: &DMatrix<f64>) -> Result<SpectralCache, CubicError> {
    check_symmetric(h)?;
    let source_hash = matrix_hash(h);
    // Work on the symmetrized matrix so tiny asymmetries cannot leak through.
    let sym = (h + h.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SpectralCache { eigenvalues, eigenvectors, source_hash })
}

/// Norm of the regularized-system solution `||(H + (M/2) r I)^{-1} g||` at a
/// given radius `r`. This is the left side of the secular equation; it is
/// finite only for `lambda_min + (M/2) r > 0`.
pub fn secular_step_norm(cache: &SpectralCache, g: &DVector<f64>, weight: f64, r: f64) -> f64 {
    let ghat = cache.eigenvectors.transpose() * g;
    psi(&cache.eigenvalues, &ghat, weight, r).0
}

/// psi(r) and its derivative d psi / d r.
fn psi(lambda: &DVector<f64>, ghat: &DVector<f64>, weight: f64, r: f64) -> (f64, f64) {
    let mut sum = 0.0;
    let mut dsum = 0.0;
    for i in 0..lambda.len() {
        let denom = lambda[i] + 0.5 * weight * r;
        let term = ghat[i] / denom;
        sum += term * term;
        dsum += term * term / denom;
    }
    let value = sum.sqrt();
    let deriv = if value > 0.0 { -0.5 * weight * dsum / value } else { 0.0 };
    (value, deriv)
}

/// Solves the cubic model for the gradient `g` using an existing
/// factorization of the Hessian estimate.
///
/// Returns the global minimizer; `hard_case` is set when the step needed a
/// minimal-eigenvector component to reach the boundary norm.
pub fn solve_cubic(
    cache: &SpectralCache,
    g: &DVector<f64>,
    weight: f64,
    tol: f64,
) -> Result<CubicStep, CubicError> {
    if g.len() != cache.dim() {
        return Err(CubicError::DimensionMismatch { grad: g.len(), hess: cache.dim() });
    }
    if !(weight > 0.0) || !weight.is_finite() {
        return Err(CubicError::NonPositiveWeight(weight));
    }
    if !(tol > 0.0 && tol <= MAX_TOL) {
        return Err(CubicError::BadTolerance(tol));
    }

    let n = g.len();
    let lambda = &cache.eigenvalues;
    let lambda_min = lambda[0];
    let ghat = cache.eigenvectors.transpose() * g;
    let gnorm = ghat.norm();
    let r_floor = (0.0f64).max(-2.0 * lambda_min / weight);

    // Stationary model: g = 0.
    if gnorm == 0.0 {
        if lambda_min >= 0.0 {
            return Ok(finalize(cache, &ghat, DVector::zeros(n), weight, false, 0));
        }
        // Pure eigenstep to the boundary radius.
        let mut shat = DVector::zeros(n);
        shat[0] = r_floor;
        return Ok(finalize(cache, &ghat, shat, weight, true, 0));
    }

    // Hard-case screen: gradient orthogonal to the minimal eigenspace while
    // the interior equation has no root above the floor radius.
    if lambda_min < 0.0 {
        let cluster = EIG_CLUSTER_TOL * lambda_min.abs().max(1.0);
        let in_min_space = |i: usize| lambda[i] - lambda_min <= cluster;
        let g_min: f64 = (0..n)
            .filter(|&i| in_min_space(i))
            .map(|i| ghat[i] * ghat[i])
            .sum::<f64>()
            .sqrt();
        if g_min <= HARD_CASE_TOL * gnorm {
            // Pseudo-inverse solution at the floor, minimal directions excluded.
            let mut shat = DVector::zeros(n);
            let mut norm_sq = 0.0;
            for i in 0..n {
                if in_min_space(i) {
                    continue;
                }
                let denom = lambda[i] + 0.5 * weight * r_floor;
                let v = -ghat[i] / denom;
                shat[i] = v;
                norm_sq += v * v;
            }
            if norm_sq.sqrt() <= r_floor {
                // Interior root infeasible: pad with the first minimal
                // eigenvector (positive sign) up to the boundary norm.
                shat[0] += (r_floor * r_floor - norm_sq).max(0.0).sqrt();
                return Ok(finalize(cache, &ghat, shat, weight, true, 0));
            }
        }
    }

    // Interior root: psi is strictly decreasing on (r_floor, inf) with
    // psi - r changing sign before r_ub, the positive root of
    // (M/2) r^2 + lambda_min r - ||g|| = 0.
    let r_ub = (-lambda_min + (lambda_min * lambda_min + 2.0 * weight * gnorm).sqrt()) / weight;
    let mut lo = r_floor;
    let mut hi = (r_ub * (1.0 + 1e-8)).max(r_floor + 1e-300);
    let mut r = 0.5 * (lo + hi);
    let mut iters = 0;
    let mut last_phi = f64::INFINITY;
    loop {
        if iters >= MAX_ROOT_ITERS {
            return Err(CubicError::RootFind { iters, residual: last_phi });
        }
        iters += 1;
        let (value, deriv) = psi(lambda, &ghat, weight, r);
        let phi = value - r;
        last_phi = phi;
        if phi.abs() <= tol * r.max(1.0) {
            break;
        }
        if phi > 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        let newton = r - phi / (deriv - 1.0);
        r = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
    }

    let mut shat = DVector::zeros(n);
    for i in 0..n {
        shat[i] = -ghat[i] / (lambda[i] + 0.5 * weight * r);
    }
    Ok(finalize(cache, &ghat, shat, weight, false, iters))
}

/// Convenience composition of [`factorize`] and [`solve_cubic`].
pub fn solve_cubic_fresh(model: &CubicModel, tol: f64) -> Result<CubicStep, CubicError> {
    let cache = factorize(model.hessian())?;
    solve_cubic(&cache, model.gradient(), model.weight(), tol)
}

fn finalize(
    cache: &SpectralCache,
    ghat: &DVector<f64>,
    shat: DVector<f64>,
    weight: f64,
    hard_case: bool,
    newton_iters: usize,
) -> CubicStep {
    let lambda = &cache.eigenvalues;
    let r = shat.norm();
    let mut model_value = 0.0;
    let mut res_sq = 0.0;
    for i in 0..shat.len() {
        model_value += ghat[i] * shat[i] + 0.5 * lambda[i] * shat[i] * shat[i];
        let res = ghat[i] + lambda[i] * shat[i] + 0.5 * weight * r * shat[i];
        res_sq += res * res;
    }
    model_value += weight / 6.0 * r.powi(3);
    CubicStep {
        s: &cache.eigenvectors * shat,
        r,
        model_value,
        hard_case,
        newton_iters,
        residual: res_sq.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..=i {
                let v = rng.gen_range(-scale..scale);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }

    /// Coarse grid search over [-half, half]^d followed by local refinement
    /// rounds around the best cell. Independent of the secular solver.
    pub(crate) fn grid_oracle(model: &CubicModel, half: f64, coarse: usize, rounds: usize) -> f64 {
        let d = model.gradient().len();
        let mut center = DVector::zeros(d);
        let mut span = half;
        let steps = coarse;
        let mut best_value = f64::INFINITY;
        for _ in 0..rounds {
            let mut best_point = center.clone();
            let mut idx = vec![0usize; d];
            loop {
                let mut y = DVector::zeros(d);
                for k in 0..d {
                    y[k] = center[k] - span + 2.0 * span * idx[k] as f64 / steps as f64;
                }
                let v = model.value(&y);
                if v < best_value {
                    best_value = v;
                    best_point = y;
                }
                let mut k = 0;
                loop {
                    if k == d {
                        break;
                    }
                    idx[k] += 1;
                    if idx[k] <= steps {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == d {
                    break;
                }
            }
            center = best_point;
            span = 2.0 * span / steps as f64;
        }
        best_value
    }

    #[test]
    fn factorize_identity() {
        let cache = factorize(&DMatrix::identity(3, 3)).unwrap();
        for v in cache.eigenvalues().iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn factorize_diagonal_sorted_ascending() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 2.0]));
        let cache = factorize(&h).unwrap();
        assert!((cache.eigenvalues()[0] + 1.0).abs() < 1e-14);
        assert!((cache.eigenvalues()[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn factorize_reconstructs_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let h = random_symmetric(&mut rng, 5, 3.0);
            let cache = factorize(&h).unwrap();
            let err = (cache.reconstruct() - &h).norm() / h.norm().max(1e-300);
            assert!(err <= 1e-9, "reconstruction error {err}");
            let q = cache.eigenvectors();
            let ortho = (q.transpose() * q - DMatrix::identity(5, 5)).norm();
            assert!(ortho <= 1e-10, "orthogonality defect {ortho}");
        }
    }

    #[test]
    fn factorize_rejects_nonfinite() {
        let mut h = DMatrix::identity(2, 2);
        h[(0, 1)] = f64::NAN;
        h[(1, 0)] = f64::NAN;
        assert!(matches!(factorize(&h), Err(CubicError::NonFinite { .. })));
    }

    #[test]
    fn factorize_rejects_asymmetric() {
        let mut h = DMatrix::identity(2, 2);
        h[(0, 1)] = 0.5;
        assert!(matches!(factorize(&h), Err(CubicError::Asymmetric { .. })));
    }

    #[test]
    fn zero_gradient_psd_gives_zero_step() {
        let cache = factorize(&DMatrix::identity(3, 3)).unwrap();
        let step = solve_cubic(&cache, &DVector::zeros(3), 2.5, DEFAULT_TOL).unwrap();
        assert_eq!(step.r, 0.0);
        assert!(!step.hard_case);
        assert_eq!(step.model_value, 0.0);
    }

    #[test]
    fn zero_gradient_indefinite_is_hard_case() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![-0.5, 1.0]));
        let cache = factorize(&h).unwrap();
        let step = solve_cubic(&cache, &DVector::zeros(2), 2.0, DEFAULT_TOL).unwrap();
        assert!(step.hard_case);
        // r = -2 lambda_min / M = 0.5
        assert!((step.r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_secular_matches_grid_oracle() {
        // 1 + (3/2)|s| s = 0  =>  s = -sqrt(2/3)
        let model = CubicModel::new(
            DVector::from_vec(vec![1.0]),
            DMatrix::zeros(1, 1),
            3.0,
        )
        .unwrap();
        let step = solve_cubic_fresh(&model, DEFAULT_TOL).unwrap();
        let expect = -(2.0f64 / 3.0).sqrt();
        assert!((step.s[0] - expect).abs() < 1e-9, "s = {}", step.s[0]);
        let oracle = grid_oracle(&model, 5.0, 400, 4);
        assert!(step.model_value <= oracle + 1e-9);
    }

    #[test]
    fn hard_case_diag_example() {
        // H = diag(-1, 1), g = (0, 1), M = 2: r = 1, s = (±sqrt(3)/2, -1/2).
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0]));
        let cache = factorize(&h).unwrap();
        let g = DVector::from_vec(vec![0.0, 1.0]);
        let step = solve_cubic(&cache, &g, 2.0, DEFAULT_TOL).unwrap();
        assert!(step.hard_case);
        assert!((step.r - 1.0).abs() < 1e-10);
        assert!((step.s[0].abs() - 3.0f64.sqrt() / 2.0).abs() < 1e-10);
        assert!((step.s[1] + 0.5).abs() < 1e-10);
        // Global optimality against the dense grid with local refinement.
        let model = CubicModel::new(g, h, 2.0).unwrap();
        let oracle = grid_oracle(&model, 3.0, 600, 3);
        assert!(step.model_value <= oracle + 1e-6);
        // Exact value: -1/2 - 1/4 + 1/3 = -5/12.
        assert!((step.model_value + 5.0 / 12.0).abs() < 1e-10);
    }

    #[test]
    fn fresh_solve_quadratic_root_example() {
        // g = (1,0), H = I, M = 6: 1 = t (1 + 3t), t = (-1 + sqrt(13)) / 6.
        let model = CubicModel::new(
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::identity(2, 2),
            6.0,
        )
        .unwrap();
        let step = solve_cubic_fresh(&model, DEFAULT_TOL).unwrap();
        let t = (13.0f64.sqrt() - 1.0) / 6.0;
        assert!((step.s[0] + t).abs() < 1e-10);
        assert!(step.s[1].abs() < 1e-12);
    }

    #[test]
    fn huge_weight_shrinks_step() {
        let model = CubicModel::new(
            DVector::from_vec(vec![1.0, -2.0]),
            DMatrix::identity(2, 2),
            1e12,
        )
        .unwrap();
        let step = solve_cubic_fresh(&model, DEFAULT_TOL).unwrap();
        assert!(step.r < 1e-4);
    }

    #[test]
    fn well_conditioned_step_approaches_newton() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 6;
        let base = random_symmetric(&mut rng, d, 1.0);
        let h = &base * base.transpose() + DMatrix::identity(d, d) * 4.0;
        let g = DVector::from_fn(d, |_, _| rng.gen_range(-0.01..0.01));
        let weight = 1.0;
        let model = CubicModel::new(g.clone(), h.clone(), weight).unwrap();
        let step = solve_cubic_fresh(&model, DEFAULT_TOL).unwrap();
        let newton = -h.clone().lu().solve(&g).unwrap();
        let gap = (&step.s - &newton).norm();
        assert!(gap <= 2.0 * weight * step.r * step.r, "gap {gap}, r {}", step.r);
    }

    #[test]
    fn step_invariants_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let d = rng.gen_range(1..=4usize);
            let h = random_symmetric(&mut rng, d, 2.0);
            let g = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
            let weight = rng.gen_range(0.5..10.0);
            let cache = factorize(&h).unwrap();
            let step = solve_cubic(&cache, &g, weight, DEFAULT_TOL).unwrap();
            assert!((step.s.norm() - step.r).abs() <= 1e-12 * (1.0 + step.r));
            let scale = g.norm() + weight * step.r * step.r + h.norm() * step.r;
            let residual = (&g + &h * &step.s + 0.5 * weight * step.r * &step.s).norm();
            assert!(residual <= 1e-8 * scale.max(1e-12), "residual {residual} scale {scale}");
            // Eq. (27): H + (M/2) r I  psd up to tolerance.
            assert!(cache.lambda_min() + 0.5 * weight * step.r >= -1e-8 * scale.max(1.0));
        }
    }

    #[test]
    fn secular_norm_monotone_in_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let d = rng.gen_range(2..=5usize);
            let h = random_symmetric(&mut rng, d, 2.0);
            let g = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
            let weight = rng.gen_range(0.5..4.0);
            let cache = factorize(&h).unwrap();
            let floor = (0.0f64).max(-2.0 * cache.lambda_min() / weight);
            let mut prev = f64::INFINITY;
            for k in 1..40 {
                let r = floor + 0.1 * k as f64;
                let v = secular_step_norm(&cache, &g, weight, r);
                assert!(v <= prev + 1e-12, "psi increased at r={r}");
                prev = v;
            }
        }
    }

    #[test]
    fn factorization_reuse_matches_fresh_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let h = random_symmetric(&mut rng, 5, 2.0);
        let cache = factorize(&h).unwrap();
        for _ in 0..10 {
            let g = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
            let reused = solve_cubic(&cache, &g, 3.0, DEFAULT_TOL).unwrap();
            let fresh =
                solve_cubic_fresh(&CubicModel::new(g, h.clone(), 3.0).unwrap(), DEFAULT_TOL)
                    .unwrap();
            assert!((&reused.s - &fresh.s).norm() <= 1e-10);
        }
    }

    #[test]
    fn global_optimality_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let d = rng.gen_range(1..=3usize);
            let h = random_symmetric(&mut rng, d, 2.0);
            let g = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
            let weight = rng.gen_range(0.5..10.0);
            let model = CubicModel::new(g, h, weight).unwrap();
            let step = solve_cubic_fresh(&model, DEFAULT_TOL).unwrap();
            let oracle = grid_oracle(&model, 8.0, 40, 5);
            assert!(
                step.model_value <= oracle + 1e-6,
                "solver {} vs grid {}",
                step.model_value,
                oracle
            );
        }
    }
}
