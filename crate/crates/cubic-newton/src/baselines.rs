//! First-order comparators: gradient descent with Armijo backtracking and
//! constant-step minibatch SGD. Both share the optimizer trace schema with
//! zero Hessian work.

use crate::costmodel::CostLedger;
use crate::estimators::sample_batch;
use crate::optimizer::TraceRow;
use crate::problems::ObjectiveOracle;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("line search exceeded {halvings} halvings at iteration {iter}")]
    LineSearchFailed { iter: usize, halvings: usize },
    #[error("invalid baseline configuration: {0}")]
    Config(String),
}

const MAX_HALVINGS: usize = 60;

/// Method selector and parameters.
#[derive(Debug, Clone)]
pub enum BaselineVariant {
    /// Armijo backtracking: accept `eta` when
    /// `f(x - eta g) <= f(x) - c eta ||g||^2`; the accepted step doubles as
    /// the next initial step.
    GdLineSearch { c_armijo: f64, backtrack_factor: f64, init_step: f64 },
    /// Constant-step minibatch SGD with seeded with-replacement sampling;
    /// `batch == n` uses the deterministic full batch.
    Sgd { step: f64, batch: usize, seed: u64 },
}

impl Default for BaselineVariant {
    fn default() -> Self {
        BaselineVariant::GdLineSearch { c_armijo: 1e-4, backtrack_factor: 0.5, init_step: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineConfig {
    pub variant: BaselineVariant,
    pub iters: usize,
    pub x0: DVector<f64>,
    pub d_eff: Option<f64>,
}

/// Run result matching the second-order driver's shape.
#[derive(Debug)]
pub struct BaselineOutput {
    pub x: DVector<f64>,
    pub trace: Vec<TraceRow>,
    pub ledger: CostLedger,
}

fn push_row(
    trace: &mut Vec<TraceRow>,
    ledger: &CostLedger,
    t: usize,
    f: f64,
    grad_norm: f64,
    r: f64,
    wall_ns: u128,
) {
    trace.push(TraceRow {
        t,
        f,
        grad_norm,
        mu: f64::NAN,
        r,
        snapshot_refreshed: false,
        grad_units: ledger.grad_units,
        hess_units: ledger.hess_units,
        factorizations: ledger.factorizations,
        gradcost_total: ledger.gradcost_total(),
        audit_grad_units: ledger.audit_grad_units,
        audit_hess_units: ledger.audit_hess_units,
        wall_ns,
    });
}

/// Gradient descent with backtracking line search. The trace ends early when
/// an exactly zero gradient is reached.
pub fn run_gd(
    oracle: &dyn ObjectiveOracle,
    config: &BaselineConfig,
) -> Result<BaselineOutput, BaselineError> {
    let (c_armijo, backtrack_factor, init_step) = match config.variant {
        BaselineVariant::GdLineSearch { c_armijo, backtrack_factor, init_step } => {
            (c_armijo, backtrack_factor, init_step)
        }
        _ => return Err(BaselineError::Config("run_gd requires the line-search variant".into())),
    };
    if !(c_armijo > 0.0 && c_armijo < 1.0) {
        return Err(BaselineError::Config(format!("armijo constant {c_armijo} out of (0,1)")));
    }
    if !(backtrack_factor > 0.0 && backtrack_factor < 1.0) {
        return Err(BaselineError::Config(format!(
            "backtrack factor {backtrack_factor} out of (0,1)"
        )));
    }
    if !(init_step > 0.0) {
        return Err(BaselineError::Config(format!("initial step {init_step} must be positive")));
    }
    if config.x0.len() != oracle.dim() {
        return Err(BaselineError::Config("x0 dimension mismatch".into()));
    }

    let n = oracle.num_components() as u64;
    let mut ledger = CostLedger::new(config.d_eff.unwrap_or(oracle.dim() as f64));
    let mut trace = Vec::with_capacity(config.iters);
    let mut x = config.x0.clone();
    let mut f = oracle.value(&x);
    ledger.charge_audit_grads(n);
    let mut eta = init_step;

    for t in 0..config.iters {
        let started = Instant::now();
        let g = oracle.gradient(&x);
        ledger.charge_grads(n);
        let gnorm_sq = g.norm_squared();
        if gnorm_sq == 0.0 {
            push_row(&mut trace, &ledger, t, f, 0.0, 0.0, started.elapsed().as_nanos());
            break;
        }

        let mut halvings = 0;
        let (x_next, f_next, accepted) = loop {
            let candidate = &x - eta * &g;
            let f_candidate = oracle.value(&candidate);
            ledger.charge_audit_grads(n);
            if f_candidate <= f - c_armijo * eta * gnorm_sq {
                break (candidate, f_candidate, eta);
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(BaselineError::LineSearchFailed { iter: t, halvings });
            }
            eta *= backtrack_factor;
        };
        debug_assert!(f_next <= f - c_armijo * accepted * gnorm_sq);

        x = x_next;
        f = f_next;
        let wall_ns = started.elapsed().as_nanos();
        push_row(&mut trace, &ledger, t, f, gnorm_sq.sqrt(), accepted * gnorm_sq.sqrt(), wall_ns);
        // Optimistic restart: try a doubled step first next iteration.
        eta = accepted * 2.0;
    }

    Ok(BaselineOutput { x, trace, ledger })
}

/// Constant-step minibatch SGD.
pub fn run_sgd(
    oracle: &dyn ObjectiveOracle,
    config: &BaselineConfig,
) -> Result<BaselineOutput, BaselineError> {
    let (step, batch, seed) = match config.variant {
        BaselineVariant::Sgd { step, batch, seed } => (step, batch, seed),
        _ => return Err(BaselineError::Config("run_sgd requires the SGD variant".into())),
    };
    let n = oracle.num_components();
    if !(step > 0.0) {
        return Err(BaselineError::Config(format!("step {step} must be positive")));
    }
    if batch < 1 || batch > n {
        return Err(BaselineError::Config(format!("batch {batch} out of [1, {n}]")));
    }
    if config.x0.len() != oracle.dim() {
        return Err(BaselineError::Config("x0 dimension mismatch".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ledger = CostLedger::new(config.d_eff.unwrap_or(oracle.dim() as f64));
    let mut trace = Vec::with_capacity(config.iters);
    let mut x = config.x0.clone();

    for t in 0..config.iters {
        let started = Instant::now();
        let indices = sample_batch(&mut rng, n, batch);
        let mut g = DVector::zeros(oracle.dim());
        for &i in &indices {
            g += oracle.component_gradient(i, &x);
        }
        g /= batch as f64;
        ledger.charge_grads(batch as u64);
        x -= step * &g;
        let wall_ns = started.elapsed().as_nanos();

        let f = oracle.value(&x);
        ledger.charge_audit_grads(n as u64);
        let grad_norm = oracle.gradient(&x).norm();
        ledger.charge_audit_grads(n as u64);
        push_row(&mut trace, &ledger, t, f, grad_norm, step * g.norm(), wall_ns);
    }

    Ok(BaselineOutput { x, trace, ledger })
}
