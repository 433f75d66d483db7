//! Gradient/Hessian estimate construction for the cubic step.
//!
//! Every variant produces the pair `(g, H)` consumed by one cubic step. The
//! basic stochastic form evaluates batch means at the current point; the
//! variance-reduced forms correct batch means with snapshot information
//!
//! ```text
//!   g = grad h1(x) - grad h1(xs) + grad f(xs) + (hess f(xs) - hess h1(xs)) (x - xs)
//!   H = hess h2(x) - hess h2(xs) + hess f(xs)
//! ```
//!
//! which are exact for quadratics. The lazy variants keep `h2 = 0`, so the
//! Hessian estimate is the snapshot Hessian and its factorization can be
//! reused for a whole inner loop. An auxiliary oracle can stand in for the
//! sampled helpers, in which case the main oracle is touched only at the
//! snapshot point.
//!
//! Batch index sampling is uniform with replacement and owned by the caller's
//! RNG state, so fixed seeds give bit-identical batch sequences. A batch size
//! equal to `n` is served as the deterministic full batch.

use crate::problems::ObjectiveOracle;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("estimate dimension {estimate} does not match oracle dimension {oracle}")]
    DimensionMismatch { estimate: usize, oracle: usize },
    #[error("batch size {b} must lie in [1, {n}]")]
    BadBatchSize { b: usize, n: usize },
    #[error("variant {0} requires a snapshot")]
    SnapshotRequired(&'static str),
    #[error("auxiliary helper dimension {helper} does not match main dimension {main}")]
    HelperMismatch { helper: usize, main: usize },
    #[error("similarity measurement needs at least {need} point pairs, got {got}")]
    TooFewPairs { need: usize, got: usize },
}

/// Which helper construction feeds the cubic step.
#[derive(Clone)]
pub enum EstimatorVariant {
    /// Full gradient and Hessian every step.
    Exact,
    /// Batch means at the current point, no snapshot correction.
    BasicStochastic { b_g: usize, b_h: usize, resample_each_step: bool },
    /// Snapshot-corrected gradient and Hessian, fresh batches each call.
    VarianceReduced { b_g: usize, b_h: usize },
    /// Snapshot-corrected gradient, snapshot Hessian held for the inner loop.
    LazyVr { b_g: usize },
    /// Full gradient each step, snapshot Hessian held for the inner loop.
    LazyExact,
    /// A user-supplied helper oracle stands in for both sampled helpers.
    Auxiliary { helper: Arc<dyn ObjectiveOracle> },
}

impl EstimatorVariant {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorVariant::Exact => "exact",
            EstimatorVariant::BasicStochastic { .. } => "basic",
            EstimatorVariant::VarianceReduced { .. } => "vr",
            EstimatorVariant::LazyVr { .. } => "lazy-vr",
            EstimatorVariant::LazyExact => "lazy-exact",
            EstimatorVariant::Auxiliary { .. } => "auxiliary",
        }
    }

    /// Whether the Hessian estimate equals the snapshot Hessian for the whole
    /// inner loop, making its factorization reusable.
    pub fn hessian_is_lazy(&self) -> bool {
        matches!(self, EstimatorVariant::LazyVr { .. } | EstimatorVariant::LazyExact)
    }

    /// Whether estimates depend on snapshot data at all.
    pub fn needs_snapshot(&self) -> bool {
        !matches!(self, EstimatorVariant::Exact | EstimatorVariant::BasicStochastic { .. })
    }

    /// Default batch sizes for the inner-loop length `m`: the
    /// variance-reduced gradient batch grows like `m^4` (Hessian batch `m^2`),
    /// the lazy gradient batch like `m^2`, all clipped to `n`.
    pub fn with_default_batches(self, m: usize, n: usize) -> Self {
        match self {
            EstimatorVariant::VarianceReduced { .. } => EstimatorVariant::VarianceReduced {
                b_g: m.saturating_pow(4).min(n).max(1),
                b_h: m.saturating_pow(2).min(n).max(1),
            },
            EstimatorVariant::LazyVr { .. } => {
                EstimatorVariant::LazyVr { b_g: m.saturating_pow(2).min(n).max(1) }
            }
            other => other,
        }
    }
}

impl std::fmt::Debug for EstimatorVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorVariant::Exact => write!(f, "Exact"),
            EstimatorVariant::BasicStochastic { b_g, b_h, resample_each_step } => f
                .debug_struct("BasicStochastic")
                .field("b_g", b_g)
                .field("b_h", b_h)
                .field("resample_each_step", resample_each_step)
                .finish(),
            EstimatorVariant::VarianceReduced { b_g, b_h } => f
                .debug_struct("VarianceReduced")
                .field("b_g", b_g)
                .field("b_h", b_h)
                .finish(),
            EstimatorVariant::LazyVr { b_g } => {
                f.debug_struct("LazyVr").field("b_g", b_g).finish()
            }
            EstimatorVariant::LazyExact => write!(f, "LazyExact"),
            EstimatorVariant::Auxiliary { helper } => {
                write!(f, "Auxiliary {{ dim: {} }}", helper.dim())
            }
        }
    }
}

/// Variant plus the seed that drives batch sampling.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub variant: EstimatorVariant,
    pub seed: u64,
}

impl EstimatorConfig {
    pub fn new(variant: EstimatorVariant, seed: u64) -> Self {
        Self { variant, seed }
    }

    pub fn validate(&self, oracle: &dyn ObjectiveOracle) -> Result<(), EstimatorError> {
        let n = oracle.num_components();
        let check = |b: usize| {
            if b < 1 || b > n {
                Err(EstimatorError::BadBatchSize { b, n })
            } else {
                Ok(())
            }
        };
        match &self.variant {
            EstimatorVariant::BasicStochastic { b_g, b_h, .. } => {
                check(*b_g)?;
                check(*b_h)
            }
            EstimatorVariant::VarianceReduced { b_g, b_h } => {
                check(*b_g)?;
                check(*b_h)
            }
            EstimatorVariant::LazyVr { b_g } => check(*b_g),
            EstimatorVariant::Auxiliary { helper } => {
                if helper.dim() != oracle.dim() {
                    Err(EstimatorError::HelperMismatch {
                        helper: helper.dim(),
                        main: oracle.dim(),
                    })
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// The `(g, H)` pair fed to one cubic step, with the main-oracle component
/// traffic that produced it. Helper-oracle evaluations (auxiliary variant)
/// are free as far as the main ledger is concerned.
#[derive(Debug, Clone)]
pub struct HelperEstimates {
    pub g: DVector<f64>,
    pub h: DMatrix<f64>,
    pub grad_component_evals: u64,
    pub hess_component_evals: u64,
    pub used_snapshot: bool,
}

/// Anchor-point data refreshed once per inner loop. Only the fields a variant
/// needs are populated; `cost` reports the main-oracle traffic of the
/// refresh.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub x_tilde: DVector<f64>,
    pub f_tilde: f64,
    pub grad_tilde: Option<DVector<f64>>,
    pub hess_tilde: Option<DMatrix<f64>>,
    /// `hess h1(x_tilde)` for the gradient correction term when the gradient
    /// helper is fixed across the loop (auxiliary variant).
    pub hess_h1_tilde: Option<DMatrix<f64>>,
    pub age: usize,
}

/// Main-oracle traffic incurred by a snapshot refresh.
#[derive(Debug, Clone, Copy, Default)]
pub struct RefreshCost {
    pub grad_component_evals: u64,
    pub hess_component_evals: u64,
}

impl Snapshot {
    /// Builds the snapshot state a variant needs at `x_tilde`. `f_tilde` is
    /// supplied by the caller (the driver already tracks full objective
    /// values on its audit ledger).
    pub fn refresh(
        oracle: &dyn ObjectiveOracle,
        variant: &EstimatorVariant,
        x_tilde: DVector<f64>,
        f_tilde: f64,
    ) -> (Self, RefreshCost) {
        let n = oracle.num_components() as u64;
        let mut cost = RefreshCost::default();
        let mut grad_tilde = None;
        let mut hess_tilde = None;
        let mut hess_h1_tilde = None;
        match variant {
            EstimatorVariant::Exact | EstimatorVariant::BasicStochastic { .. } => {}
            EstimatorVariant::LazyExact => {
                hess_tilde = Some(oracle.hessian(&x_tilde));
                cost.hess_component_evals += n;
            }
            EstimatorVariant::VarianceReduced { .. } | EstimatorVariant::LazyVr { .. } => {
                grad_tilde = Some(oracle.gradient(&x_tilde));
                hess_tilde = Some(oracle.hessian(&x_tilde));
                cost.grad_component_evals += n;
                cost.hess_component_evals += n;
            }
            EstimatorVariant::Auxiliary { helper } => {
                grad_tilde = Some(oracle.gradient(&x_tilde));
                hess_tilde = Some(oracle.hessian(&x_tilde));
                cost.grad_component_evals += n;
                cost.hess_component_evals += n;
                // Helper-side cache; not charged to the main ledger.
                hess_h1_tilde = Some(helper.hessian(&x_tilde));
            }
        }
        (Snapshot { x_tilde, f_tilde, grad_tilde, hess_tilde, hess_h1_tilde, age: 0 }, cost)
    }
}

/// Uniform sample of `b` indices with replacement; `b == n` short-circuits to
/// the deterministic full batch.
pub fn sample_batch(rng: &mut ChaCha8Rng, n: usize, b: usize) -> Vec<usize> {
    if b == n {
        (0..n).collect()
    } else {
        (0..b).map(|_| rng.gen_range(0..n)).collect()
    }
}

fn batch_gradient(
    oracle: &dyn ObjectiveOracle,
    batch: &[usize],
    x: &DVector<f64>,
) -> DVector<f64> {
    let mut g = DVector::zeros(oracle.dim());
    for &i in batch {
        g += oracle.component_gradient(i, x);
    }
    g / batch.len() as f64
}

fn batch_hessian(
    oracle: &dyn ObjectiveOracle,
    batch: &[usize],
    x: &DVector<f64>,
) -> DMatrix<f64> {
    let d = oracle.dim();
    let mut h = DMatrix::zeros(d, d);
    for &i in batch {
        h += oracle.component_hessian(i, x);
    }
    h / batch.len() as f64
}

/// Basic stochastic estimates: batch means of component gradients and
/// Hessians at the current point.
pub fn estimate_basic(
    oracle: &dyn ObjectiveOracle,
    x: &DVector<f64>,
    batch_g: &[usize],
    batch_h: &[usize],
) -> HelperEstimates {
    HelperEstimates {
        g: batch_gradient(oracle, batch_g, x),
        h: batch_hessian(oracle, batch_h, x),
        grad_component_evals: batch_g.len() as u64,
        hess_component_evals: batch_h.len() as u64,
        used_snapshot: false,
    }
}

/// Snapshot-corrected estimates for a sampled gradient helper
/// `h1 = (1/b) sum_{i in batch} f_i` and, when given, a sampled Hessian
/// helper `h2`; `batch_h = None` keeps the snapshot Hessian (`h2 = 0`).
pub fn estimate_vr(
    oracle: &dyn ObjectiveOracle,
    x: &DVector<f64>,
    snapshot: &Snapshot,
    batch_g: &[usize],
    batch_h: Option<&[usize]>,
) -> Result<HelperEstimates, EstimatorError> {
    if x.len() != oracle.dim() {
        return Err(EstimatorError::DimensionMismatch { estimate: x.len(), oracle: oracle.dim() });
    }
    if snapshot.x_tilde.len() != oracle.dim() {
        return Err(EstimatorError::DimensionMismatch {
            estimate: snapshot.x_tilde.len(),
            oracle: oracle.dim(),
        });
    }
    let grad_tilde =
        snapshot.grad_tilde.as_ref().ok_or(EstimatorError::SnapshotRequired("vr gradient"))?;
    let hess_tilde =
        snapshot.hess_tilde.as_ref().ok_or(EstimatorError::SnapshotRequired("vr hessian"))?;

    let dx = x - &snapshot.x_tilde;
    let mut grad_evals = 0u64;
    let mut hess_evals = 0u64;

    // Gradient: batch difference, snapshot gradient, and the second-order
    // correction with the same batch helper in every term.
    let g_now = batch_gradient(oracle, batch_g, x);
    let g_snap = batch_gradient(oracle, batch_g, &snapshot.x_tilde);
    let h1_snap = batch_hessian(oracle, batch_g, &snapshot.x_tilde);
    grad_evals += 2 * batch_g.len() as u64;
    hess_evals += batch_g.len() as u64;
    let g = &g_now - &g_snap + grad_tilde + (hess_tilde - &h1_snap) * &dx;

    // Hessian: batch difference plus snapshot Hessian, or the snapshot
    // Hessian alone for the lazy variant.
    let h = match batch_h {
        Some(batch) => {
            let h_now = batch_hessian(oracle, batch, x);
            let h_snap = batch_hessian(oracle, batch, &snapshot.x_tilde);
            hess_evals += 2 * batch.len() as u64;
            h_now - h_snap + hess_tilde
        }
        None => hess_tilde.clone(),
    };

    Ok(HelperEstimates {
        g,
        h,
        grad_component_evals: grad_evals,
        hess_component_evals: hess_evals,
        used_snapshot: true,
    })
}

/// Snapshot-corrected estimates with a fixed auxiliary oracle standing in
/// for both helpers. The main oracle is touched only at the snapshot point
/// (during refresh), so the per-call main-oracle cost is zero.
pub fn estimate_auxiliary(
    helper: &dyn ObjectiveOracle,
    x: &DVector<f64>,
    snapshot: &Snapshot,
) -> Result<HelperEstimates, EstimatorError> {
    if helper.dim() != x.len() {
        return Err(EstimatorError::HelperMismatch { helper: helper.dim(), main: x.len() });
    }
    let grad_tilde =
        snapshot.grad_tilde.as_ref().ok_or(EstimatorError::SnapshotRequired("aux gradient"))?;
    let hess_tilde =
        snapshot.hess_tilde.as_ref().ok_or(EstimatorError::SnapshotRequired("aux hessian"))?;
    let helper_hess_snap = snapshot
        .hess_h1_tilde
        .as_ref()
        .ok_or(EstimatorError::SnapshotRequired("aux helper hessian"))?;

    let dx = x - &snapshot.x_tilde;
    let g = helper.gradient(x) - helper.gradient(&snapshot.x_tilde)
        + grad_tilde
        + (hess_tilde - helper_hess_snap) * &dx;
    let h = helper.hessian(x) - helper_hess_snap + hess_tilde;
    Ok(HelperEstimates {
        g,
        h,
        grad_component_evals: 0,
        hess_component_evals: 0,
        used_snapshot: true,
    })
}

/// Stateful estimator owning the RNG and any fixed batches.
pub struct Estimator {
    config: EstimatorConfig,
    rng: ChaCha8Rng,
    fixed_batch_g: Option<Vec<usize>>,
    fixed_batch_h: Option<Vec<usize>>,
}

impl Estimator {
    pub fn new(
        config: EstimatorConfig,
        oracle: &dyn ObjectiveOracle,
    ) -> Result<Self, EstimatorError> {
        use rand::SeedableRng;
        config.validate(oracle)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let n = oracle.num_components();
        let (fixed_batch_g, fixed_batch_h) = match &config.variant {
            EstimatorVariant::BasicStochastic { b_g, b_h, resample_each_step: false } => {
                // The same random index subsets serve every iteration.
                let g = sample_batch(&mut rng, n, *b_g);
                let h = sample_batch(&mut rng, n, *b_h);
                (Some(g), Some(h))
            }
            _ => (None, None),
        };
        Ok(Self { config, rng, fixed_batch_g, fixed_batch_h })
    }

    pub fn variant(&self) -> &EstimatorVariant {
        &self.config.variant
    }

    /// Produces the `(g, H)` estimates for the step at `x`.
    pub fn estimate(
        &mut self,
        oracle: &dyn ObjectiveOracle,
        x: &DVector<f64>,
        snapshot: Option<&Snapshot>,
    ) -> Result<HelperEstimates, EstimatorError> {
        let n = oracle.num_components();
        match &self.config.variant {
            EstimatorVariant::Exact => {
                let full: Vec<usize> = (0..n).collect();
                Ok(estimate_basic(oracle, x, &full, &full))
            }
            EstimatorVariant::BasicStochastic { b_g, b_h, resample_each_step } => {
                if *resample_each_step {
                    let bg = sample_batch(&mut self.rng, n, *b_g);
                    let bh = sample_batch(&mut self.rng, n, *b_h);
                    Ok(estimate_basic(oracle, x, &bg, &bh))
                } else {
                    Ok(estimate_basic(
                        oracle,
                        x,
                        self.fixed_batch_g.as_ref().expect("fixed batch"),
                        self.fixed_batch_h.as_ref().expect("fixed batch"),
                    ))
                }
            }
            EstimatorVariant::VarianceReduced { b_g, b_h } => {
                let snapshot =
                    snapshot.ok_or(EstimatorError::SnapshotRequired("variance reduced"))?;
                let bg = sample_batch(&mut self.rng, n, *b_g);
                let bh = sample_batch(&mut self.rng, n, *b_h);
                estimate_vr(oracle, x, snapshot, &bg, Some(&bh))
            }
            EstimatorVariant::LazyVr { b_g } => {
                let snapshot = snapshot.ok_or(EstimatorError::SnapshotRequired("lazy vr"))?;
                let bg = sample_batch(&mut self.rng, n, *b_g);
                estimate_vr(oracle, x, snapshot, &bg, None)
            }
            EstimatorVariant::LazyExact => {
                let snapshot = snapshot.ok_or(EstimatorError::SnapshotRequired("lazy exact"))?;
                let hess_tilde = snapshot
                    .hess_tilde
                    .as_ref()
                    .ok_or(EstimatorError::SnapshotRequired("lazy exact hessian"))?;
                Ok(HelperEstimates {
                    g: oracle.gradient(x),
                    h: hess_tilde.clone(),
                    grad_component_evals: n as u64,
                    hess_component_evals: 0,
                    used_snapshot: true,
                })
            }
            EstimatorVariant::Auxiliary { helper } => {
                let snapshot = snapshot.ok_or(EstimatorError::SnapshotRequired("auxiliary"))?;
                estimate_auxiliary(&**helper, x, snapshot)
            }
        }
    }
}

/// Similarity normalization mode: `Bounded` compares raw helper derivatives
/// against the objective's; `Lipschitz` compares the snapshot-corrected
/// estimates and normalizes by the anchor distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMode {
    Bounded,
    Lipschitz,
}

/// Empirical similarity constants of a helper oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityReport {
    pub delta1_hat: f64,
    pub delta2_hat: f64,
    /// Coincident pairs skipped in Lipschitz mode.
    pub skipped_pairs: usize,
}

/// Measures the empirical maxima of the similarity ratios over sample point
/// pairs. At least 10 pairs are required; coincident pairs cannot be
/// normalized in Lipschitz mode and are skipped (reported in the output).
pub fn measure_similarity(
    main: &dyn ObjectiveOracle,
    helper: &dyn ObjectiveOracle,
    pairs: &[(DVector<f64>, DVector<f64>)],
    mode: SimilarityMode,
) -> Result<SimilarityReport, EstimatorError> {
    if helper.dim() != main.dim() {
        return Err(EstimatorError::HelperMismatch { helper: helper.dim(), main: main.dim() });
    }
    if pairs.len() < 10 {
        return Err(EstimatorError::TooFewPairs { need: 10, got: pairs.len() });
    }
    let mut delta1 = 0.0f64;
    let mut delta2 = 0.0f64;
    let mut skipped = 0usize;
    for (x, x_tilde) in pairs {
        match mode {
            SimilarityMode::Bounded => {
                let g_err = (helper.gradient(x) - main.gradient(x)).norm();
                let h_err =
                    crate::problems::spectral_norm(&(helper.hessian(x) - main.hessian(x)));
                delta1 = delta1.max(g_err);
                delta2 = delta2.max(h_err);
            }
            SimilarityMode::Lipschitz => {
                let gap = (x - x_tilde).norm();
                if gap == 0.0 {
                    skipped += 1;
                    continue;
                }
                let dx = x - x_tilde;
                let g_est = helper.gradient(x) - helper.gradient(x_tilde)
                    + main.gradient(x_tilde)
                    + (main.hessian(x_tilde) - helper.hessian(x_tilde)) * &dx;
                let h_est =
                    helper.hessian(x) - helper.hessian(x_tilde) + main.hessian(x_tilde);
                let g_err = (g_est - main.gradient(x)).norm();
                let h_err = crate::problems::spectral_norm(&(h_est - main.hessian(x)));
                delta1 = delta1.max(g_err / (gap * gap));
                delta2 = delta2.max(h_err / gap);
            }
        }
    }
    Ok(SimilarityReport { delta1_hat: delta1, delta2_hat: delta2, skipped_pairs: skipped })
}
