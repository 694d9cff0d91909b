//! l1-regularized least squares `min_s ||H s - d||^2 + lambda ||s||_1`.
//!
//! The l1 term is replaced by the reweighted quadratic `||L(s_k) s||^2`
//! ([`irn`]); each reweighting becomes a new flexible preconditioner in the
//! Golub-Kahan process ([`fgk`]); and at every step the Tikhonov parameter of
//! the small projected problem is chosen by weighted GCV ([`projected`]).
//! [`prox`] holds the closed-form soft-threshold and the fixed-lambda ISTA
//! step used as a baseline.

pub mod fgk;
pub mod irn;
pub mod projected;
pub mod prox;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
pub use fgk::{Expansion, FgkState, LinearOperator};
pub use irn::{IrnWeights, DEFAULT_TAU1, DEFAULT_TAU2};
pub use projected::{projected_tikhonov, wgcv_select, ProjectedSvd};
pub use prox::{ista_alpha_step, ista_step_gram, soft_threshold};

/// How the GCV weight `omega` is picked at each step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightPolicy {
    Fixed(f64),
    /// Running mean of the per-step weights that make the previous lambda a
    /// stationary point of the current projected WGCV function.
    Stationary,
    /// Running mean of `(k+1) / N`, the weight that gives the projected
    /// GCV denominator the same relative scale as the full one on `N` rows.
    Adaptive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaRule {
    Wgcv(WeightPolicy),
    Fixed(f64),
}

pub const OMEGA_MIN: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct HybridConfig {
    pub max_iter: usize,
    pub tau1: f64,
    pub tau2: f64,
    pub lambda_rule: LambdaRule,
    /// Used when the first GCV selection fails.
    pub initial_lambda: Option<f64>,
    /// Row count `N` for the adaptive weight; defaults to `H.nrows()`.
    /// Set it when `H` is a compressed stand-in for a taller operator.
    pub data_rows: Option<usize>,
    pub stagnation_tol: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tau1: DEFAULT_TAU1,
            tau2: DEFAULT_TAU2,
            lambda_rule: LambdaRule::Wgcv(WeightPolicy::Adaptive),
            initial_lambda: None,
            data_rows: None,
            stagnation_tol: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    Breakdown,
    Stagnation,
    ZeroData,
}

#[derive(Clone, Debug)]
pub struct HybridSolution {
    pub s: DVector<f64>,
    /// Lambda used at each step.
    pub lambda_history: Vec<f64>,
    /// Projected residual `||M_k q_k - beta1 e1||` at each step.
    pub residual_history: Vec<f64>,
    pub omega_history: Vec<f64>,
    pub stop: StopReason,
}

impl HybridSolution {
    pub fn iterations(&self) -> usize {
        self.lambda_history.len()
    }
}

fn validate(cfg: &HybridConfig) -> Result<()> {
    if cfg.max_iter == 0 {
        return Err(Error::arg("max_iter must be at least 1"));
    }
    if !(cfg.tau2 > 0.0 && cfg.tau2 < cfg.tau1) {
        return Err(Error::arg("need 0 < tau2 < tau1"));
    }
    match cfg.lambda_rule {
        LambdaRule::Fixed(l) if !(l >= 0.0) => Err(Error::arg("fixed lambda must be >= 0")),
        LambdaRule::Wgcv(WeightPolicy::Fixed(w)) if !(w > 0.0 && w <= 1.0) => {
            Err(Error::arg("GCV weight must lie in (0, 1]"))
        }
        _ => Ok(()),
    }
}

/// Reweighted flexible hybrid solve of `min ||H s - d||^2 + lambda ||s||_1`.
pub fn solve_l1_hybrid(
    h: &dyn LinearOperator,
    d: &DVector<f64>,
    cfg: &HybridConfig,
) -> Result<HybridSolution> {
    validate(cfg)?;
    if d.len() != h.nrows() {
        return Err(Error::dims(h.nrows(), d.len()));
    }
    let n = h.ncols();
    let mut out = HybridSolution {
        s: DVector::zeros(n),
        lambda_history: Vec::new(),
        residual_history: Vec::new(),
        omega_history: Vec::new(),
        stop: StopReason::ZeroData,
    };
    if d.iter().all(|&x| x == 0.0) {
        return Ok(out);
    }
    let mut state = FgkState::start(h, d)?;
    let mut weights = IrnWeights::identity(n);
    let mut previous_lambda = cfg.initial_lambda;
    let mut estimates: Vec<f64> = Vec::new();
    let rows = cfg.data_rows.unwrap_or(h.nrows()).max(1);
    out.stop = StopReason::MaxIterations;

    for _ in 0..cfg.max_iter {
        let status = state.expand(h, &weights)?;
        if state.steps() == 0 {
            out.stop = StopReason::Breakdown;
            break;
        }
        let psvd = ProjectedSvd::new(state.m(), state.beta1());
        let (lambda, omega) = match cfg.lambda_rule {
            LambdaRule::Fixed(l) => (l, f64::NAN),
            LambdaRule::Wgcv(policy) => {
                let omega = match policy {
                    WeightPolicy::Fixed(w) => w,
                    WeightPolicy::Stationary => {
                        if let Some(w) = previous_lambda.and_then(|l| psvd.stationary_weight(l)) {
                            estimates.push(w);
                        }
                        if estimates.is_empty() {
                            1.0
                        } else {
                            let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
                            mean.clamp(OMEGA_MIN, 1.0)
                        }
                    }
                    WeightPolicy::Adaptive => {
                        estimates.push((state.steps() + 1) as f64 / rows as f64);
                        let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
                        mean.clamp(OMEGA_MIN, 1.0)
                    }
                };
                let fallback = previous_lambda.unwrap_or(0.0);
                (psvd.select(omega).unwrap_or(fallback), omega)
            }
        };
        previous_lambda = Some(lambda);
        let q = psvd.solve(lambda);
        let s = state.lift(&q);
        out.lambda_history.push(lambda);
        out.residual_history.push(psvd.residual_sq(lambda).sqrt());
        out.omega_history.push(omega);

        let change = (&s - &out.s).norm();
        let prev_norm = out.s.norm();
        out.s = s;
        if status == Expansion::Breakdown {
            out.stop = StopReason::Breakdown;
            break;
        }
        if state.steps() > 1 && change <= cfg.stagnation_tol * prev_norm {
            out.stop = StopReason::Stagnation;
            break;
        }
        if state.is_exhausted() {
            out.stop = StopReason::Breakdown;
            break;
        }
        weights = IrnWeights::from_solution(&out.s, cfg.tau1, cfg.tau2)?;
    }
    Ok(out)
}

/// Compresses `min ||Q^T a - t||` to an equivalent `(R+1) x R` problem.
///
/// With `G = [Q^T t]^T [Q^T t]` factored as `F^T F`, `F = [H~ d~]` satisfies
/// `||H~ a - d~|| = ||Q^T a - t||` for every `a`; `[Q^T t] = Z F` for a
/// partial isometry `Z`, so Golub-Kahan quantities agree with the full
/// problem. Only `Q Q^T`, `Q t` and `t^T t` are needed.
pub fn reduce_least_squares(
    gram: &DMatrix<f64>,
    qt: &DVector<f64>,
    tt: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let r = gram.nrows();
    if gram.ncols() != r || qt.len() != r {
        return Err(Error::dims((r, r), (gram.ncols(), qt.len())));
    }
    let mut aug = DMatrix::zeros(r + 1, r + 1);
    aug.view_mut((0, 0), (r, r)).copy_from(gram);
    for i in 0..r {
        aug[(i, r)] = qt[i];
        aug[(r, i)] = qt[i];
    }
    aug[(r, r)] = tt;
    // Symmetrize against round-off before the eigensolve.
    let aug = (&aug + aug.transpose()) * 0.5;
    let eig = SymmetricEigen::new(aug);
    let mut f = eig.eigenvectors.transpose();
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        f.row_mut(i).scale_mut(lam.max(0.0).sqrt());
    }
    let h = f.columns(0, r).into_owned();
    let d = f.column(r).into_owned();
    Ok((h, d))
}
