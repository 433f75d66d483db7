//! Outer driver: snapshot management, regularization-weight selection, cubic
//! steps, cost bookkeeping and trace recording.
//!
//! The loop runs `rounds * m` cubic steps. Every `m` steps the snapshot
//! anchor is refreshed, either to the current iterate or to the best of the
//! last `m` iterates. Estimator variants with a loop-constant Hessian reuse
//! one spectral factorization per inner loop.
//!
//! Diagnostic work (objective/gradient values recorded in the trace, the
//! optional per-step inequality audit) is booked on separate audit counters
//! so the reported gradient-equivalent total covers only the algorithm's own
//! oracle traffic.

use crate::costmodel::CostLedger;
use crate::cubic::{self, CubicError, SpectralCache};
use crate::estimators::{Estimator, EstimatorConfig, EstimatorError, Snapshot};
use crate::problems::ObjectiveOracle;
use crate::verify::StepAudit;
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("cubic subproblem failed at iteration {iter}: {source}")]
    Solver {
        iter: usize,
        #[source]
        source: CubicError,
    },
    #[error("objective diverged at iteration {iter}: f = {f:.6e}")]
    Diverged { iter: usize, f: f64 },
}

/// How the cubic regularization weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightPolicy {
    Fixed(f64),
    /// `max(L, 32 d1 m^2, 16 d2 m)`, which balances the snapshot error terms
    /// against the model decrease.
    Auto,
    /// `max(L, 34 d1 m^2, 11 d2 m)`, the variant used with the best-iterate
    /// snapshot on gradient-dominated problems.
    AutoGradDom,
}

/// Snapshot anchor choice at the start of each inner loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotPolicy {
    /// Use the current iterate.
    LastIterate,
    /// Use the iterate with the smallest recorded objective value among the
    /// previous `m`.
    BestIterate,
}

/// Complete configuration for one optimizer run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Inner-loop length (snapshot lifetime).
    pub m: usize,
    /// Number of outer rounds; the run performs `rounds * m` steps.
    pub rounds: usize,
    pub weight_policy: WeightPolicy,
    pub snapshot_policy: SnapshotPolicy,
    pub estimator: EstimatorConfig,
    /// Gradient-side similarity used by the automatic weight policies.
    pub delta1: f64,
    /// Hessian-side similarity used by the automatic weight policies.
    pub delta2: f64,
    pub tol_subproblem: f64,
    pub x0: DVector<f64>,
    pub seed: u64,
    /// Record the stationarity measure and per-step inequality audits
    /// (full-batch Hessian work on the audit ledger each step).
    pub audit: bool,
    /// Hessian cost in gradient units; defaults to the problem dimension.
    pub d_eff: Option<f64>,
}

impl RunConfig {
    pub fn new(estimator: EstimatorConfig, x0: DVector<f64>) -> Self {
        Self {
            m: 1,
            rounds: 0,
            weight_policy: WeightPolicy::Auto,
            snapshot_policy: SnapshotPolicy::LastIterate,
            estimator,
            delta1: 0.0,
            delta2: 0.0,
            tol_subproblem: cubic::DEFAULT_TOL,
            x0,
            seed: 0,
            audit: false,
            d_eff: None,
        }
    }

    fn validate(&self, oracle: &dyn ObjectiveOracle) -> Result<(), RunError> {
        if self.m < 1 {
            return Err(RunError::Config("inner-loop length m must be >= 1".into()));
        }
        if self.x0.len() != oracle.dim() {
            return Err(RunError::Config(format!(
                "x0 has dimension {}, oracle expects {}",
                self.x0.len(),
                oracle.dim()
            )));
        }
        if !(self.tol_subproblem > 0.0 && self.tol_subproblem <= cubic::MAX_TOL) {
            return Err(RunError::Config(format!(
                "subproblem tolerance {} out of range",
                self.tol_subproblem
            )));
        }
        match self.weight_policy {
            WeightPolicy::Fixed(w) if !(w > 0.0) || !w.is_finite() => {
                Err(RunError::Config(format!("fixed weight {w} must be positive")))
            }
            WeightPolicy::Auto | WeightPolicy::AutoGradDom => {
                let l = oracle.hess_lipschitz();
                if !(self.delta1.is_finite() && self.delta2.is_finite() && l.is_finite()) {
                    Err(RunError::Config(
                        "automatic weight selection needs finite L, delta1, delta2".into(),
                    ))
                } else if self.delta1 < 0.0 || self.delta2 < 0.0 {
                    Err(RunError::Config("similarity constants must be non-negative".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn resolve_weight(&self, l: f64) -> f64 {
        match self.weight_policy {
            WeightPolicy::Fixed(w) => w,
            WeightPolicy::Auto => select_weight(l, self.delta1, self.delta2, self.m),
            WeightPolicy::AutoGradDom => {
                select_weight_grad_dom(l, self.delta1, self.delta2, self.m)
            }
        }
    }
}

/// One iteration's record.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    /// Full-batch objective at the post-step iterate.
    pub f: f64,
    /// Full-batch gradient norm at the post-step iterate.
    pub grad_norm: f64,
    /// Stationarity measure at the post-step iterate; NaN unless auditing.
    pub mu: f64,
    /// Step norm.
    pub r: f64,
    pub snapshot_refreshed: bool,
    /// Cumulative main-ledger counters after this step.
    pub grad_units: u64,
    pub hess_units: u64,
    pub factorizations: u64,
    pub gradcost_total: f64,
    pub audit_grad_units: u64,
    pub audit_hess_units: u64,
    /// Estimator plus solver time for this step.
    pub wall_ns: u128,
}

/// Result of a run: final iterate, per-iteration trace, cost ledger and, in
/// audit mode, the per-step inequality records.
#[derive(Debug)]
pub struct RunOutput {
    pub x: DVector<f64>,
    pub trace: Vec<TraceRow>,
    pub ledger: CostLedger,
    pub audits: Vec<StepAudit>,
}

/// The balance condition the automatic weight must satisfy:
/// `4 (d1/M)^{3/2} + 73 (d2/M)^3 <= 1 / (24 m^3)`.
pub fn weight_balances_errors(weight: f64, delta1: f64, delta2: f64, m: usize) -> bool {
    let lhs = 4.0 * (delta1 / weight).powf(1.5) + 73.0 * (delta2 / weight).powi(3);
    lhs <= 1.0 / (24.0 * (m as f64).powi(3))
}

/// Closed-form regularization weight `max(L, 32 d1 m^2, 16 d2 m)`.
///
/// Panics if the returned weight fails the balance condition, which cannot
/// happen for non-negative inputs.
pub fn select_weight(l: f64, delta1: f64, delta2: f64, m: usize) -> f64 {
    assert!(l > 0.0 && delta1 >= 0.0 && delta2 >= 0.0 && m >= 1);
    let m_f = m as f64;
    let weight = l.max(32.0 * delta1 * m_f * m_f).max(16.0 * delta2 * m_f);
    assert!(
        weight_balances_errors(weight, delta1, delta2, m),
        "selected weight {weight} violates the balance condition"
    );
    weight
}

/// Weight variant `max(L, 34 d1 m^2, 11 d2 m)` paired with the best-iterate
/// snapshot policy on gradient-dominated problems.
pub fn select_weight_grad_dom(l: f64, delta1: f64, delta2: f64, m: usize) -> f64 {
    assert!(l > 0.0 && delta1 >= 0.0 && delta2 >= 0.0 && m >= 1);
    let m_f = m as f64;
    l.max(34.0 * delta1 * m_f * m_f).max(11.0 * delta2 * m_f)
}

/// Second-order stationarity measure
/// `max(||grad f||^{3/2}, (-lambda_min(hess f))^3 / c^{3/2})`, evaluated with
/// the exact full-batch gradient and spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityMeasure {
    pub value: f64,
    pub grad_part: f64,
    /// Signed `(-lambda_min)^3 / c^{3/2}`; negative when the Hessian is
    /// positive definite, in which case it never attains the max.
    pub eig_part: f64,
}

pub fn mu_measure(oracle: &dyn ObjectiveOracle, x: &DVector<f64>, c: f64) -> StationarityMeasure {
    assert!(c > 0.0, "stationarity scale must be positive");
    let grad_part = oracle.gradient(x).norm().powf(1.5);
    let lambda_min = crate::problems::lambda_min(&oracle.hessian(x));
    let eig_part = (-lambda_min).powi(3) / c.powf(1.5);
    StationarityMeasure { value: grad_part.max(eig_part), grad_part, eig_part }
}

/// Output-iterate selection over a finished trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputMode {
    UniformRandom(u64),
    Last,
    BestF,
}

/// Picks a trace index per the mode; the uniform mode is reproducible from
/// its seed.
pub fn select_output(trace: &[TraceRow], mode: OutputMode) -> usize {
    assert!(!trace.is_empty(), "cannot select from an empty trace");
    match mode {
        OutputMode::UniformRandom(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.gen_range(0..trace.len())
        }
        OutputMode::Last => trace.len() - 1,
        OutputMode::BestF => {
            let mut best = 0;
            for (i, row) in trace.iter().enumerate() {
                if row.f < trace[best].f {
                    best = i;
                }
            }
            best
        }
    }
}

/// Runs `rounds * m` cubic steps of the configured method.
pub fn run(oracle: &dyn ObjectiveOracle, config: &RunConfig) -> Result<RunOutput, RunError> {
    config.validate(oracle)?;
    let n = oracle.num_components() as u64;
    let d = oracle.dim();
    let mut estimator = Estimator::new(config.estimator.clone(), oracle)?;
    let needs_snapshot = estimator.variant().needs_snapshot();
    let lazy_hessian = estimator.variant().hessian_is_lazy();

    let mut ledger = CostLedger::new(config.d_eff.unwrap_or(d as f64));
    let mut trace: Vec<TraceRow> = Vec::with_capacity(config.rounds * config.m);
    let mut audits: Vec<StepAudit> = Vec::new();

    let mut x = config.x0.clone();
    let mut f_curr = oracle.value(&x);
    ledger.charge_audit_grads(n);
    let f0 = f_curr;
    let divergence_cap = {
        let scale = oracle.f_star().map(|fs| f0 - fs).unwrap_or_else(|| f0.abs().max(1.0));
        f0 + 1e10 * scale.max(1e-12)
    };

    // Audit-mode cache of full-batch data at the pre-step point.
    let mut grad_curr = if config.audit {
        ledger.charge_audit_grads(n);
        Some(oracle.gradient(&x))
    } else {
        None
    };
    let mut hess_curr = if config.audit {
        ledger.charge_audit_hessians(n);
        Some(oracle.hessian(&x))
    } else {
        None
    };

    // Window of the last `m` iterates for the best-iterate snapshot policy.
    let mut window: Vec<(DVector<f64>, f64)> = vec![(x.clone(), f_curr)];

    let mut snapshot: Option<Snapshot> = None;
    let mut lazy_cache: Option<SpectralCache> = None;
    let weight = config.resolve_weight(oracle.hess_lipschitz());

    let total = config.rounds * config.m;
    for t in 0..total {
        let refresh_due = t % config.m == 0;
        let mut refreshed = false;
        let started = Instant::now();

        if refresh_due && needs_snapshot {
            let (anchor, f_anchor) = match config.snapshot_policy {
                SnapshotPolicy::LastIterate => (x.clone(), f_curr),
                SnapshotPolicy::BestIterate => {
                    // The recorded full-batch values of the previous inner
                    // loop are already on the audit ledger.
                    let best = window
                        .iter()
                        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                        .expect("window never empty");
                    best.clone()
                }
            };
            let (snap, cost) =
                Snapshot::refresh(oracle, estimator.variant(), anchor, f_anchor);
            ledger.charge_grads(cost.grad_component_evals);
            ledger.charge_hessians(cost.hess_component_evals);
            if lazy_hessian {
                let hess = snap.hess_tilde.as_ref().expect("lazy snapshot has a Hessian");
                lazy_cache =
                    Some(cubic::factorize(hess).map_err(|source| RunError::Solver { iter: t, source })?);
                ledger.charge_factorization();
            }
            snapshot = Some(snap);
            refreshed = true;
            window.clear();
        }

        let estimates = estimator.estimate(oracle, &x, snapshot.as_ref())?;
        ledger.charge_grads(estimates.grad_component_evals);
        ledger.charge_hessians(estimates.hess_component_evals);

        let fresh_cache;
        let cache = if lazy_hessian {
            lazy_cache.as_ref().expect("lazy factorization present")
        } else {
            fresh_cache = cubic::factorize(&estimates.h)
                .map_err(|source| RunError::Solver { iter: t, source })?;
            ledger.charge_factorization();
            &fresh_cache
        };
        let step = cubic::solve_cubic(cache, &estimates.g, weight, config.tol_subproblem)
            .map_err(|source| RunError::Solver { iter: t, source })?;
        let x_plus = &x + &step.s;
        let wall_ns = started.elapsed().as_nanos();

        // Trace diagnostics at the post-step iterate (audit ledger).
        let f_plus = oracle.value(&x_plus);
        ledger.charge_audit_grads(n);
        let grad_plus = oracle.gradient(&x_plus);
        ledger.charge_audit_grads(n);

        let mut mu = f64::NAN;
        if config.audit {
            let hess_plus = oracle.hessian(&x_plus);
            ledger.charge_audit_hessians(n);
            let lambda_min_plus = crate::problems::lambda_min(&hess_plus);
            let grad_part = grad_plus.norm().powf(1.5);
            let eig_part = (-lambda_min_plus).powi(3) / weight.powf(1.5);
            mu = grad_part.max(eig_part);

            let record = audit_step_cached(
                t,
                f_curr,
                grad_curr.as_ref().expect("audit gradient cached"),
                hess_curr.as_ref().expect("audit Hessian cached"),
                f_plus,
                &grad_plus,
                lambda_min_plus,
                mu,
                &estimates.g,
                &estimates.h,
                weight,
                &step,
            );
            audits.push(record);
            grad_curr = Some(grad_plus.clone());
            hess_curr = Some(hess_plus);
        }

        if snapshot.is_some() {
            if let Some(s) = snapshot.as_mut() {
                s.age = t % config.m;
            }
        }

        trace.push(TraceRow {
            t,
            f: f_plus,
            grad_norm: grad_plus.norm(),
            mu,
            r: step.r,
            snapshot_refreshed: refreshed,
            grad_units: ledger.grad_units,
            hess_units: ledger.hess_units,
            factorizations: ledger.factorizations,
            gradcost_total: ledger.gradcost_total(),
            audit_grad_units: ledger.audit_grad_units,
            audit_hess_units: ledger.audit_hess_units,
            wall_ns,
        });

        if !f_plus.is_finite() || f_plus > divergence_cap {
            return Err(RunError::Diverged { iter: t, f: f_plus });
        }

        window.push((x_plus.clone(), f_plus));
        if window.len() > config.m {
            let drop = window.len() - config.m;
            window.drain(0..drop);
        }
        x = x_plus;
        f_curr = f_plus;
    }

    Ok(RunOutput { x, trace, ledger, audits })
}

/// Audit using full-batch data already computed by the driver, avoiding a
/// second pass over the oracle.
#[allow(clippy::too_many_arguments)]
fn audit_step_cached(
    t: usize,
    f: f64,
    grad: &DVector<f64>,
    hess: &nalgebra::DMatrix<f64>,
    f_plus: f64,
    grad_plus: &DVector<f64>,
    lambda_min_plus: f64,
    mu_plus: f64,
    g_est: &DVector<f64>,
    h_est: &nalgebra::DMatrix<f64>,
    weight: f64,
    step: &cubic::CubicStep,
) -> StepAudit {
    StepAudit::from_parts(
        t,
        f,
        grad,
        hess,
        f_plus,
        grad_plus,
        lambda_min_plus,
        mu_plus,
        g_est,
        h_est,
        weight,
        &step.s,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::EstimatorVariant;
    use crate::problems::{
        logreg_oracle, planted_logistic_dataset, synthetic_strongly_convex, ObjectiveOracle,
    };

    fn exact_config(x0: DVector<f64>, weight: WeightPolicy, steps: usize) -> RunConfig {
        let mut config = RunConfig::new(EstimatorConfig::new(EstimatorVariant::Exact, 1), x0);
        config.weight_policy = weight;
        config.m = 1;
        config.rounds = steps;
        config
    }

    #[test]
    fn select_weight_examples() {
        assert_eq!(select_weight(3.0, 0.0, 0.0, 5), 3.0);
        assert_eq!(select_weight(1.0, 1.0, 1.0, 1), 32.0);
        // 4 (1/32)^{3/2} + 73/32^3 must stay below 1/24.
        let lhs = 4.0 * (1.0f64 / 32.0).powf(1.5) + 73.0 / 32.0f64.powi(3);
        assert!((lhs - 0.0243).abs() < 1e-3);
        assert!(lhs <= 1.0 / 24.0);
        assert_eq!(select_weight(1.0, 0.0, 1.0, 4), 64.0);
        assert_eq!(select_weight_grad_dom(1.0, 1.0, 1.0, 1), 34.0);
    }

    #[test]
    fn mu_measure_cases() {
        let (oracle, _) = synthetic_strongly_convex(5, 4, 1.0, 3);
        let at_min = mu_measure(&oracle, oracle.minimizer(), 1.0);
        assert!(at_min.value < 1e-12);
        // grad_part dominates away from the optimum of a convex problem.
        let x = oracle.minimizer() + DVector::from_element(4, 1.0);
        let m = mu_measure(&oracle, &x, 1.0);
        assert_eq!(m.value, m.grad_part);
        assert!(m.eig_part < 0.0);
    }

    #[test]
    fn quadratic_exact_newton_converges_fast() {
        let (oracle, _) = synthetic_strongly_convex(6, 5, 0.8, 7);
        let x0 = DVector::from_element(5, 2.0);
        // Hessian-Lipschitz constant is zero; a tiny fixed weight makes the
        // cubic step essentially a Newton step.
        let config = exact_config(x0, WeightPolicy::Fixed(1e-9), 3);
        let out = run(&oracle, &config).unwrap();
        assert!(out.trace.last().unwrap().grad_norm <= 1e-10);
    }

    #[test]
    fn exact_descent_is_monotone_on_logistic() {
        let data = planted_logistic_dataset(200, 20, 42);
        let oracle = logreg_oracle(data, 1e-3).unwrap();
        let mut config = exact_config(DVector::zeros(20), WeightPolicy::Auto, 30);
        config.audit = true;
        let out = run(&oracle, &config).unwrap();
        let mut previous = f64::INFINITY;
        for row in &out.trace {
            assert!(row.f <= previous + 1e-12, "objective increased at t={}", row.t);
            previous = row.f;
        }
        assert_eq!(out.audits.len(), 30);
    }

    #[test]
    fn lazy_exact_counts_hessians_once_per_round() {
        let data = planted_logistic_dataset(40, 6, 9);
        let oracle = logreg_oracle(data, 1e-3).unwrap();
        let mut config = RunConfig::new(
            EstimatorConfig::new(EstimatorVariant::LazyExact, 3),
            DVector::zeros(6),
        );
        config.m = 5;
        config.rounds = 4;
        config.weight_policy = WeightPolicy::Auto;
        config.delta2 = oracle.hess_lipschitz();
        let out = run(&oracle, &config).unwrap();
        let n = oracle.num_components() as u64;
        assert_eq!(out.ledger.hess_units, 4 * n, "one full Hessian per round");
        assert_eq!(out.ledger.factorizations, 4, "one factorization per round");
        assert_eq!(out.ledger.grad_units, 20 * n, "full gradient per step");
    }

    #[test]
    fn zero_rounds_runs_nothing() {
        let data = planted_logistic_dataset(10, 3, 2);
        let oracle = logreg_oracle(data, 0.0).unwrap();
        let config = exact_config(DVector::zeros(3), WeightPolicy::Auto, 0);
        let out = run(&oracle, &config).unwrap();
        assert!(out.trace.is_empty());
        assert_eq!(out.ledger.grad_units, 0);
    }

    #[test]
    fn best_iterate_snapshot_uses_smallest_f() {
        let data = planted_logistic_dataset(30, 4, 5);
        let oracle = logreg_oracle(data, 1e-3).unwrap();
        let mut config = RunConfig::new(
            EstimatorConfig::new(
                EstimatorVariant::VarianceReduced { b_g: 8, b_h: 4 },
                11,
            ),
            DVector::zeros(4),
        );
        config.m = 3;
        config.rounds = 3;
        config.snapshot_policy = SnapshotPolicy::BestIterate;
        config.weight_policy = WeightPolicy::Fixed(oracle.hess_lipschitz().max(1e-3));
        let out = run(&oracle, &config).unwrap();
        assert_eq!(out.trace.len(), 9);
        assert!(out.trace[3].snapshot_refreshed);
        assert!(!out.trace[4].snapshot_refreshed);
    }

    #[test]
    fn select_output_modes() {
        let data = planted_logistic_dataset(10, 3, 8);
        let oracle = logreg_oracle(data, 1e-3).unwrap();
        let config = exact_config(DVector::zeros(3), WeightPolicy::Auto, 10);
        let out = run(&oracle, &config).unwrap();
        assert_eq!(select_output(&out.trace, OutputMode::Last), 9);
        let first = select_output(&out.trace, OutputMode::UniformRandom(4));
        assert_eq!(first, select_output(&out.trace, OutputMode::UniformRandom(4)));
        let best = select_output(&out.trace, OutputMode::BestF);
        assert_eq!(best, 9, "monotone descent ends at the best iterate");
        assert_eq!(select_output(&out.trace[..1], OutputMode::BestF), 0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let data = planted_logistic_dataset(10, 3, 8);
        let oracle = logreg_oracle(data, 1e-3).unwrap();
        let config = exact_config(DVector::zeros(4), WeightPolicy::Auto, 1);
        assert!(matches!(run(&oracle, &config), Err(RunError::Config(_))));
    }
}
