//! Numerical verification: per-step inequality audits, gradient-dominance
//! checks and convergence-rate fitting over recorded traces.
//!
//! The audited one-step inequalities, for a cubic step `s` of norm `r`
//! computed from estimates `(g, H)` with weight `M >= L`, are
//!
//! ```text
//!   descent:      f(x) - f(x+) >= (M/36) r^3 - (3/sqrt M) eg^{3/2} - (72/M^2) eh^3
//!   combined:     f(x) - f(x+) >= mu_M(x+)/(1008 sqrt M) + (M/72) r^3
//!                                 - (4/sqrt M) eg^{3/2} - (73/M^2) eh^3
//!   gradient:     ||grad f(x+)||^{3/2}/sqrt(M) <= 3 M r^3 + (2/sqrt M) eg^{3/2} + eh^3/M^2
//!   eigenvalue:   (-lambda_min(hess f(x+)))^3/M^2 <= 14 M r^3 + (4/M^2) eh^3
//! ```
//!
//! where `eg = ||grad f(x) - g||` and `eh = ||hess f(x) - H||` are the exact
//! full-batch estimate errors. Audits never mutate optimizer state.

use crate::problems::{lambda_min, spectral_norm, GradDominanceSpec, ObjectiveOracle};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("subproblem residual {residual:.3e} exceeds the audit threshold {threshold:.3e}")]
    AuditRefused { residual: f64, threshold: f64 },
    #[error("rate fitting needs at least {need} usable points, got {got}")]
    TraceTooShort { need: usize, got: usize },
    #[error("gradient-dominance check needs a known optimal value")]
    MissingFStar,
}

/// Relative residual above which an audit refuses the step as not being a
/// solution of its own subproblem.
pub const AUDIT_RESIDUAL_THRESHOLD: f64 = 1e-6;

/// Slacks of the four per-step inequalities; all should be bounded below by
/// `-1e-8 * max(1, |f(x)|)` in exact arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepAudit {
    pub t: usize,
    pub f: f64,
    pub f_plus: f64,
    pub r: f64,
    /// `||grad f(x) - g||`.
    pub grad_err: f64,
    /// `||hess f(x) - H||` (spectral norm).
    pub hess_err: f64,
    pub descent_slack: f64,
    pub combined_slack: f64,
    pub gradient_slack: f64,
    pub eigenvalue_slack: f64,
}

impl StepAudit {
    /// Smallest of the four slacks.
    pub fn worst_slack(&self) -> f64 {
        self.descent_slack
            .min(self.combined_slack)
            .min(self.gradient_slack)
            .min(self.eigenvalue_slack)
    }

    /// Tolerance the slacks are measured against.
    pub fn tolerance(&self) -> f64 {
        -1e-8 * self.f.abs().max(1.0)
    }

    pub fn passes(&self) -> bool {
        self.worst_slack() >= self.tolerance()
    }

    /// Assembles the audit from precomputed full-batch quantities.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        t: usize,
        f: f64,
        grad: &DVector<f64>,
        hess: &DMatrix<f64>,
        f_plus: f64,
        grad_plus: &DVector<f64>,
        lambda_min_plus: f64,
        mu_plus: f64,
        g_est: &DVector<f64>,
        h_est: &DMatrix<f64>,
        weight: f64,
        step: &DVector<f64>,
    ) -> StepAudit {
        let r = step.norm();
        let grad_err = (grad - g_est).norm();
        let hess_err = spectral_norm(&(hess - h_est));
        let sqrt_w = weight.sqrt();
        let eg = grad_err.powf(1.5);
        let eh = hess_err.powi(3);
        let r3 = r.powi(3);
        let decrease = f - f_plus;

        let descent_slack =
            decrease - (weight / 36.0 * r3 - 3.0 / sqrt_w * eg - 72.0 / weight.powi(2) * eh);
        let combined_slack = decrease
            - (mu_plus / (1008.0 * sqrt_w) + weight / 72.0 * r3
                - 4.0 / sqrt_w * eg
                - 73.0 / weight.powi(2) * eh);
        let gradient_slack = 3.0 * weight * r3 + 2.0 / sqrt_w * eg + eh / weight.powi(2)
            - grad_plus.norm().powf(1.5) / sqrt_w;
        let eigenvalue_slack = 14.0 * weight * r3 + 4.0 / weight.powi(2) * eh
            - (-lambda_min_plus).powi(3) / weight.powi(2);

        StepAudit {
            t,
            f,
            f_plus,
            r,
            grad_err,
            hess_err,
            descent_slack,
            combined_slack,
            gradient_slack,
            eigenvalue_slack,
        }
    }
}

/// Audits one step from scratch with full-batch oracle evaluations.
///
/// `x_plus` must be the cubic step from `x` for the estimates `(g, H)` and
/// weight `M`; the audit refuses steps whose stationarity residual exceeds
/// [`AUDIT_RESIDUAL_THRESHOLD`] relative to the model scale.
pub fn audit_step(
    oracle: &dyn ObjectiveOracle,
    x: &DVector<f64>,
    x_plus: &DVector<f64>,
    g_est: &DVector<f64>,
    h_est: &DMatrix<f64>,
    weight: f64,
) -> Result<StepAudit, VerifyError> {
    let s = x_plus - x;
    let r = s.norm();
    let residual = (g_est + h_est * &s + 0.5 * weight * r * &s).norm();
    let scale = g_est.norm() + weight * r * r + spectral_norm(h_est) * r;
    // The absolute floor keeps near-stationary steps (scale ~ 0) auditable.
    let threshold = AUDIT_RESIDUAL_THRESHOLD * scale + 1e-14 * (1.0 + g_est.norm());
    if residual > threshold {
        return Err(VerifyError::AuditRefused { residual, threshold });
    }

    let f = oracle.value(x);
    let grad = oracle.gradient(x);
    let hess = oracle.hessian(x);
    let f_plus = oracle.value(x_plus);
    let grad_plus = oracle.gradient(x_plus);
    let hess_plus = oracle.hessian(x_plus);
    let lambda_min_plus = lambda_min(&hess_plus);
    let mu_plus =
        grad_plus.norm().powf(1.5).max((-lambda_min_plus).powi(3) / weight.powf(1.5));

    Ok(StepAudit::from_parts(
        0,
        f,
        &grad,
        &hess,
        f_plus,
        &grad_plus,
        lambda_min_plus,
        mu_plus,
        g_est,
        h_est,
        weight,
        &s,
    ))
}

/// Counts sample points where `f(x) - f* > tau ||grad f(x)||^alpha` beyond a
/// 1e-9 relative slack.
pub fn check_grad_dominance(
    oracle: &dyn ObjectiveOracle,
    spec: &GradDominanceSpec,
    points: &[DVector<f64>],
) -> Result<usize, VerifyError> {
    let f_star = oracle.f_star().ok_or(VerifyError::MissingFStar)?;
    let mut violations = 0;
    for x in points {
        let lhs = oracle.value(x) - f_star;
        let rhs = spec.tau * oracle.gradient(x).norm().powf(spec.alpha);
        if lhs - rhs > 1e-9 * lhs.abs().max(1.0) {
            violations += 1;
        }
    }
    Ok(violations)
}

/// Convergence regime implied by the dominance degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateRegime {
    /// `alpha < 3/2`: sublinear global rate.
    Sublinear,
    /// `alpha = 3/2`: linear global rate.
    Linear,
    /// `alpha > 3/2`: superlinear terminal rate.
    Superlinear,
}

/// Result of fitting the decrease recurrence
/// `F_t - F_{t+1} >= C F_{t+1}^gamma - a` with `gamma = 3/(2 alpha)` to a
/// recorded objective trace.
#[derive(Debug, Clone)]
pub struct RateFit {
    pub gamma: f64,
    pub c_hat: f64,
    pub a_hat: f64,
    pub regime: RateRegime,
    /// Regime-dependent violation count; see [`fit_rate`].
    pub violations: usize,
    /// Tail slope of `log F` against `log t` (sublinear regime diagnostics).
    pub loglog_slope: f64,
}

/// Options for [`fit_rate`]. The defaults discard the first 5 iterations,
/// fit over the trailing half, treat gaps below `floor_rel * max(1, |f*|)`
/// as exhausted precision, and allow 50% multiplicative slack on the
/// superlinear contraction test.
#[derive(Debug, Clone, Copy)]
pub struct RateFitOptions {
    pub burn_in: usize,
    pub tail_fraction: f64,
    pub floor_rel: f64,
    pub contraction_slack: f64,
    /// Window length for the terminal contraction check.
    pub terminal_window: usize,
    /// Slope threshold for the sublinear check.
    pub slope_threshold: f64,
}

impl Default for RateFitOptions {
    fn default() -> Self {
        Self {
            burn_in: 5,
            tail_fraction: 0.5,
            floor_rel: 1e-13,
            contraction_slack: 0.5,
            terminal_window: 5,
            slope_threshold: -2.0 + 0.3,
        }
    }
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in points {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Fits the rate recurrence to objective values `f_values` with known
/// optimum `f_star` under the dominance certificate `spec`.
///
/// Violations counted per regime:
/// - superlinear (`alpha > 3/2`): terminal-window steps where the gap fails
///   `delta_{t+1} <= delta_t^{2 alpha / 3} (1 + slack)`;
/// - linear (`alpha = 3/2`): 1 when the fitted `log F` slope is
///   non-negative;
/// - sublinear (`alpha < 3/2`): 1 when the tail log-log slope exceeds the
///   threshold (default `-1.7`).
pub fn fit_rate(
    f_values: &[f64],
    f_star: f64,
    spec: &GradDominanceSpec,
    options: &RateFitOptions,
) -> Result<RateFit, VerifyError> {
    let floor = options.floor_rel * f_star.abs().max(1.0);
    let deltas: Vec<f64> = f_values
        .iter()
        .map(|f| f - f_star)
        .take_while(|d| *d > floor && d.is_finite())
        .collect();
    if deltas.len() < 8 {
        return Err(VerifyError::TraceTooShort { need: 8, got: deltas.len() });
    }

    let gamma = 3.0 / (2.0 * spec.alpha);
    let regime = if spec.alpha < 1.5 {
        RateRegime::Sublinear
    } else if spec.alpha == 1.5 {
        RateRegime::Linear
    } else {
        RateRegime::Superlinear
    };

    // Least squares for (C, a) in F_t - F_{t+1} = C F_{t+1}^gamma - a.
    let (c_hat, a_hat) = {
        let pts: Vec<(f64, f64)> = deltas
            .windows(2)
            .map(|w| (w[1].powf(gamma), w[0] - w[1]))
            .collect();
        let slope = least_squares_slope(&pts);
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        (slope, slope * mx - my)
    };

    // Tail window after burn-in.
    let start = options.burn_in.min(deltas.len().saturating_sub(2));
    let tail_len = (((deltas.len() - start) as f64) * options.tail_fraction).ceil() as usize;
    let tail_start = deltas.len() - tail_len.max(2);
    let loglog: Vec<(f64, f64)> = deltas
        .iter()
        .enumerate()
        .skip(tail_start.max(1))
        .map(|(t, d)| ((t as f64).ln(), d.ln()))
        .collect();
    let loglog_slope = if loglog.len() >= 2 { least_squares_slope(&loglog) } else { f64::NAN };

    let violations = match regime {
        RateRegime::Superlinear => {
            let exponent = 2.0 * spec.alpha / 3.0;
            let window = options.terminal_window.min(deltas.len() - 1);
            let mut count = 0;
            for w in deltas[deltas.len() - window - 1..].windows(2) {
                let bound = w[0].powf(exponent) * (1.0 + options.contraction_slack);
                if w[1] > bound {
                    count += 1;
                }
            }
            count
        }
        RateRegime::Linear => {
            let pts: Vec<(f64, f64)> = deltas
                .iter()
                .enumerate()
                .skip(start)
                .map(|(t, d)| (t as f64, d.ln()))
                .collect();
            usize::from(least_squares_slope(&pts) >= 0.0)
        }
        RateRegime::Sublinear => usize::from(loglog_slope > options.slope_threshold),
    };

    Ok(RateFit { gamma, c_hat, a_hat, regime, violations, loglog_slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubic::{factorize, solve_cubic, DEFAULT_TOL};
    use crate::problems::{
        logreg_oracle, planted_logistic_dataset, synthetic_strongly_convex,
    };
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_step_audit_has_nonnegative_slacks() {
        let data = planted_logistic_dataset(50, 6, 12);
        let oracle = logreg_oracle(data, 1e-3).unwrap();
        let weight = oracle.hess_lipschitz();
        let mut x = DVector::zeros(6);
        for _ in 0..20 {
            let g = oracle.gradient(&x);
            let h = oracle.hessian(&x);
            let cache = factorize(&h).unwrap();
            let step = solve_cubic(&cache, &g, weight, DEFAULT_TOL).unwrap();
            let x_plus = &x + &step.s;
            let audit = audit_step(&oracle, &x, &x_plus, &g, &h, weight).unwrap();
            assert!(audit.passes(), "audit failed: {audit:?}");
            assert!(audit.grad_err < 1e-14 && audit.hess_err < 1e-12);
            x = x_plus;
        }
    }

    #[test]
    fn stationary_point_audit_trivially_passes() {
        let (oracle, _) = synthetic_strongly_convex(6, 4, 1.0, 5);
        let x = oracle.minimizer().clone();
        let g = oracle.gradient(&x);
        let h = oracle.hessian(&x);
        let cache = factorize(&h).unwrap();
        let step = solve_cubic(&cache, &g, 1.0, DEFAULT_TOL).unwrap();
        assert!(step.r < 1e-9);
        let audit = audit_step(&oracle, &x, &(&x + &step.s), &g, &h, 1.0).unwrap();
        assert!(audit.passes());
    }

    #[test]
    fn noisy_gradient_audit_holds_with_error_terms() {
        let data = planted_logistic_dataset(60, 5, 3);
        let oracle = logreg_oracle(data, 1e-3).unwrap();
        let weight = oracle.hess_lipschitz();
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let mut x = DVector::zeros(5);
        for _ in 0..50 {
            let mut noise = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
            noise *= 0.1 / noise.norm();
            let g = oracle.gradient(&x) + noise;
            let h = oracle.hessian(&x);
            let cache = factorize(&h).unwrap();
            let step = solve_cubic(&cache, &g, weight, DEFAULT_TOL).unwrap();
            let x_plus = &x + &step.s;
            let audit = audit_step(&oracle, &x, &x_plus, &g, &h, weight).unwrap();
            assert!((audit.grad_err - 0.1).abs() < 1e-12);
            assert!(audit.passes(), "noisy audit failed: {audit:?}");
            x = x_plus;
        }
    }

    #[test]
    fn audit_refuses_non_solutions() {
        let data = planted_logistic_dataset(10, 3, 4);
        let oracle = logreg_oracle(data, 1e-3).unwrap();
        let x = DVector::zeros(3);
        let g = oracle.gradient(&x);
        let h = oracle.hessian(&x);
        let bogus = &x + DVector::from_element(3, 0.5);
        assert!(matches!(
            audit_step(&oracle, &x, &bogus, &g, &h, 1.0),
            Err(VerifyError::AuditRefused { .. })
        ));
    }

    #[test]
    fn grad_dominance_counts() {
        // mu dominates the random quadratic part, so every Hessian
        // eigenvalue sits below 2 mu and halving tau must produce
        // violations.
        let (oracle, spec) = synthetic_strongly_convex(8, 4, 5.0, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let points: Vec<_> = (0..1000)
            .map(|_| DVector::from_fn(4, |_, _| rng.gen_range(-3.0..3.0)))
            .collect();
        assert_eq!(check_grad_dominance(&oracle, &spec, &points).unwrap(), 0);
        let broken = GradDominanceSpec::new(spec.tau / 2.0, spec.alpha);
        assert!(check_grad_dominance(&oracle, &broken, &points).unwrap() > 0);
    }

    #[test]
    fn grad_dominance_requires_f_star() {
        let data = planted_logistic_dataset(10, 3, 4);
        let oracle = logreg_oracle(data, 1e-3).unwrap();
        let spec = GradDominanceSpec::new(1.0, 1.0);
        assert!(matches!(
            check_grad_dominance(&oracle, &spec, &[DVector::zeros(3)]),
            Err(VerifyError::MissingFStar)
        ));
    }

    #[test]
    fn fit_rate_recovers_inverse_square_slope() {
        let values: Vec<f64> = (1..=60).map(|t| 1.0 / (t as f64 * t as f64)).collect();
        let spec = GradDominanceSpec::new(1.0, 1.0);
        let fit = fit_rate(&values, 0.0, &spec, &RateFitOptions::default()).unwrap();
        assert_eq!(fit.regime, RateRegime::Sublinear);
        assert!((fit.loglog_slope + 2.0).abs() < 0.05, "slope {}", fit.loglog_slope);
        assert_eq!(fit.violations, 0);
    }

    #[test]
    fn fit_rate_detects_planted_superlinear_contraction() {
        let mut delta: f64 = 0.5;
        let mut values = Vec::new();
        for _ in 0..14 {
            values.push(delta);
            delta = delta.powf(4.0 / 3.0);
        }
        let spec = GradDominanceSpec::new(1.0, 2.0);
        let fit = fit_rate(&values, 0.0, &spec, &RateFitOptions::default()).unwrap();
        assert_eq!(fit.regime, RateRegime::Superlinear);
        assert_eq!(fit.violations, 0);
    }

    #[test]
    fn fit_rate_flags_stalled_superlinear_sequence() {
        // Geometric (merely linear) decay violates the terminal contraction.
        let values: Vec<f64> = (0..30).map(|t| 0.5f64 * 0.8f64.powi(t)).collect();
        let spec = GradDominanceSpec::new(1.0, 2.0);
        let fit = fit_rate(&values, 0.0, &spec, &RateFitOptions::default()).unwrap();
        assert!(fit.violations > 0);
    }

    #[test]
    fn fit_rate_rejects_short_traces() {
        let spec = GradDominanceSpec::new(1.0, 1.0);
        let err = fit_rate(&[1.0, 0.5, 0.1], 0.0, &spec, &RateFitOptions::default());
        assert!(matches!(err, Err(VerifyError::TraceTooShort { .. })));
    }

    #[test]
    fn fit_rate_planted_exponent_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let spec = GradDominanceSpec::new(1.0, 2.0);
        for _ in 0..20 {
            let mut delta: f64 = rng.gen_range(0.3..0.6);
            let exponent: f64 = rng.gen_range(4.0 / 3.0..1.6);
            let mut values = Vec::new();
            while delta > 1e-15 && values.len() < 40 {
                values.push(delta);
                delta = delta.powf(exponent);
            }
            if values.len() < 8 {
                continue;
            }
            let fit = fit_rate(&values, 0.0, &spec, &RateFitOptions::default()).unwrap();
            assert_eq!(fit.violations, 0, "exponent {exponent} flagged spuriously");
        }
    }
}
