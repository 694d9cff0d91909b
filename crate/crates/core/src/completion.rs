//! Tensor completion driver.
//!
//! Each outer iteration imputes the missing entries from the current model,
//! takes one projected-gradient step on each factor, then re-solves for
//! `alpha` (hybrid l1 solve, or a single ISTA step with a fixed lambda).

use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cp::CpModel;
use crate::error::{Error, Result};
use crate::factor::{mm_sweep, StepControl};
use crate::hybrid::{self, HybridConfig, HybridSolution};
use crate::tensor::{masked_copy, masked_norms, Dims, Mask, Tensor3};

/// Floor applied to the magnitude of the initial `alpha`; a zero weight
/// would freeze its component.
const ALPHA_INIT_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaSolver {
    Hybrid,
    FixedLambda(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompletionConfig {
    /// Upper bound on the rank.
    pub rank: usize,
    pub max_iter: usize,
    /// Relative residual on the observed entries that ends the run.
    pub tol: f64,
    pub alpha_solver: AlphaSolver,
    pub seed: u64,
    /// Relative cut applied to `|alpha|` when reporting the rank.
    pub truncate_eps: f64,
    pub safety: f64,
    /// Inner solver settings; `max_iter` is capped at the rank.
    pub hybrid: HybridConfig,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            rank: 50,
            max_iter: 500,
            tol: 1e-3,
            alpha_solver: AlphaSolver::Hybrid,
            seed: 0,
            truncate_eps: 1e-2,
            safety: 1.05,
            hybrid: HybridConfig::default(),
        }
    }
}

impl CompletionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::arg("rank must be at least 1"));
        }
        if self.max_iter == 0 {
            return Err(Error::arg("max_iter must be at least 1"));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::arg(format!("tolerance must lie in (0, 1), got {}", self.tol)));
        }
        if !(self.truncate_eps > 0.0 && self.truncate_eps < 1.0) {
            return Err(Error::arg("truncation tolerance must lie in (0, 1)"));
        }
        if let AlphaSolver::FixedLambda(l) = self.alpha_solver {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::arg(format!("lambda must be finite and >= 0, got {l}")));
            }
        }
        StepControl::new(self.safety)?;
        Ok(())
    }
}

/// One row of the per-iteration trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// `||(S - T)|_Omega|| / ||T|_Omega||`.
    pub residual: f64,
    pub lambda: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct CompletionResult {
    /// Model after normalization and rank truncation.
    pub model: CpModel,
    /// Model at the end of the iteration, before truncation.
    pub full_model: CpModel,
    /// Reconstruction with the observed entries copied from the input.
    pub completed: Tensor3,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    /// Inner solve of the final iteration, in hybrid mode.
    pub last_hybrid: Option<HybridSolution>,
}

impl CompletionResult {
    pub fn rank(&self) -> usize {
        self.model.rank()
    }
}

fn least_squares_alpha(model: &CpModel, t: &Tensor3) -> DVector<f64> {
    let gram = model.component_gram();
    let qt = model.project(t);
    let tol = 1e-12 * gram.amax().max(f64::MIN_POSITIVE);
    let alpha = gram
        .svd(true, true)
        .solve(&qt, tol)
        .unwrap_or_else(|_| DVector::zeros(model.rank()));
    alpha.map(|a| {
        if !a.is_finite() {
            ALPHA_INIT_FLOOR
        } else if a.abs() < ALPHA_INIT_FLOOR {
            ALPHA_INIT_FLOOR.copysign(a)
        } else {
            a
        }
    })
}

/// Seeded standard-normal factors with unit columns and a least-squares
/// `alpha` against `t`.
pub fn initial_model(dims: Dims, rank: usize, seed: u64, t: &Tensor3) -> Result<CpModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = CpModel::random(dims, rank, &mut rng)?;
    model.alpha = least_squares_alpha(&model, t);
    Ok(model)
}

/// Solves the `alpha` subproblem with the hybrid method.
pub fn hybrid_alpha(model: &CpModel, t: &Tensor3, cfg: &HybridConfig) -> Result<HybridSolution> {
    let gram = model.component_gram();
    let qt = model.project(t);
    let tt = t.frobenius_norm().powi(2);
    let (h, d) = hybrid::reduce_least_squares(&gram, &qt, tt)?;
    let cfg = HybridConfig {
        max_iter: cfg.max_iter.min(model.rank()),
        data_rows: Some(cfg.data_rows.unwrap_or(t.len())),
        ..cfg.clone()
    };
    hybrid::solve_l1_hybrid(&h, &d, &cfg)
}

/// Fills the unobserved entries of `t` with a low-rank CP model.
pub fn complete(t: &Tensor3, mask: &Mask, cfg: &CompletionConfig) -> Result<CompletionResult> {
    cfg.validate()?;
    if t.dims() != mask.dims() {
        return Err(Error::dims(t.dims(), mask.dims()));
    }
    if mask.is_empty() {
        return Err(Error::arg("the observation mask is empty"));
    }
    if !t.is_finite() {
        return Err(Error::Data("input tensor has non-finite entries".into()));
    }
    let dims = t.dims();
    let start = Instant::now();

    let zeros = Tensor3::zeros(dims)?;
    let mut model = initial_model(dims, cfg.rank, cfg.seed, &masked_copy(t, &zeros, mask)?)?;
    let mut ctl = StepControl::new(cfg.safety)?;
    let mut current = model.reconstruct();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut last_hybrid = None;

    for iteration in 1..=cfg.max_iter {
        let work = masked_copy(t, &current, mask)?;
        model = mm_sweep(&model, &work, &mut ctl);
        let lambda = match cfg.alpha_solver {
            AlphaSolver::Hybrid => {
                let sol = hybrid_alpha(&model, &work, &cfg.hybrid)?;
                let lambda = sol.lambda_history.last().copied().unwrap_or(0.0);
                model.alpha = sol.s.clone();
                last_hybrid = Some(sol);
                lambda
            }
            AlphaSolver::FixedLambda(lambda) => {
                model.alpha = hybrid::ista_alpha_step(&model, &work, lambda, cfg.safety);
                lambda
            }
        };
        if !model.alpha.iter().all(|a| a.is_finite()) {
            return Err(Error::Data(format!("non-finite weights at iteration {iteration}")));
        }
        current = model.reconstruct();
        let (diff, base) = masked_norms(&current, t, mask);
        let residual = if base > 0.0 { diff / base } else { diff };
        trace.push(TraceRow {
            iteration,
            residual,
            lambda,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if residual <= cfg.tol {
            converged = true;
            break;
        }
    }

    let completed = masked_copy(t, &current, mask)?;
    let normalized = model.normalize().unwrap_or_else(|_| model.clone());
    let truncated = if normalized.alpha.amax() > 0.0 {
        normalized.truncate_rank(cfg.truncate_eps)?
    } else {
        normalized.clone()
    };
    Ok(CompletionResult {
        model: truncated,
        full_model: model,
        completed,
        trace,
        converged,
        last_hybrid,
    })
}

/// Uniformly samples `ceil(fraction * I*J*K)` observed entries.
pub fn make_random_mask(dims: Dims, fraction: f64, seed: u64) -> Result<Mask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::arg(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let total = dims.0 * dims.1 * dims.2;
    let count = ((fraction * total as f64).ceil() as usize).min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, total, count);
    let mut flags = vec![false; total];
    for o in picks {
        flags[o] = true;
    }
    let mut it = flags.into_iter();
    Mask::from_fn(dims, |_, _, _| it.next().unwrap_or(false))
}

/// Mask observing everything except the rectangle of rows `y0..=y1` and
/// columns `x0..=x1` (zero-based, inclusive), across all of mode 3.
pub fn make_rect_mask(dims: Dims, x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Mask> {
    if x0 > x1 || y0 > y1 || y1 >= dims.0 || x1 >= dims.1 {
        return Err(Error::arg(format!(
            "rectangle ({x0},{y0})-({x1},{y1}) does not fit in {}x{}",
            dims.1, dims.0
        )));
    }
    Mask::from_fn(dims, |i, j, _| !(i >= y0 && i <= y1 && j >= x0 && j <= x1))
}

/// `||S - A||_F / ||A||_F`.
pub fn relative_error(s: &Tensor3, a: &Tensor3) -> Result<f64> {
    let denom = a.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::arg("reference tensor has zero norm"));
    }
    Ok(s.sub(a)?.frobenius_norm() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn rank_r_tensor(dims: Dims, rank: usize, seed: u64) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = CpModel::random(dims, rank, &mut rng).unwrap();
        for r in 0..rank {
            m.alpha[r] = 10.0 * (rank - r) as f64;
        }
        m.reconstruct()
    }

    #[test]
    fn relative_error_basics() {
        let a = rank_r_tensor((3, 4, 5), 2, 1);
        assert_eq!(relative_error(&a, &a).unwrap(), 0.0);
        let mut twice = a.clone();
        twice.values_mut().iter_mut().for_each(|v| *v *= 2.0);
        assert!((relative_error(&twice, &a).unwrap() - 1.0).abs() < 1e-15);
        let zero = Tensor3::zeros((3, 4, 5)).unwrap();
        assert!(relative_error(&a, &zero).is_err());
    }

    #[test]
    fn relative_error_matches_direct_formula() {
        let a = rank_r_tensor((3, 4, 5), 2, 2);
        let s = rank_r_tensor((3, 4, 5), 2, 3);
        let num: f64 = a.values().iter().zip(s.values()).map(|(x, y)| (x - y) * (x - y)).sum();
        let den: f64 = a.values().iter().map(|x| x * x).sum();
        assert!((relative_error(&s, &a).unwrap() - (num / den).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn random_mask_counts_and_determinism() {
        let m = make_random_mask((10, 10, 10), 0.7, 9).unwrap();
        assert_eq!(m.len(), 700);
        assert_eq!(m, make_random_mask((10, 10, 10), 0.7, 9).unwrap());
        assert_eq!(make_random_mask((3, 3, 3), 1.0, 1).unwrap().len(), 27);
        let a: BTreeSet<_> = m.triples().iter().collect();
        let other = make_random_mask((10, 10, 10), 0.7, 10).unwrap();
        let b: BTreeSet<_> = other.triples().iter().collect();
        assert_ne!(a, b);
        assert!(make_random_mask((2, 2, 2), 0.0, 1).is_err());
    }

    #[test]
    fn rect_mask_removes_block() {
        let m = make_rect_mask((5, 6, 3), 1, 2, 3, 3).unwrap();
        assert_eq!(m.len(), 90 - 3 * 2 * 3);
        assert!(!m.contains(2, 1, 0));
        assert!(m.contains(1, 1, 0));
        assert!(make_rect_mask((5, 6, 3), 0, 0, 6, 1).is_err());
    }

    #[test]
    fn empty_mask_and_bad_data_are_rejected() {
        let t = rank_r_tensor((4, 4, 4), 1, 4);
        let cfg = CompletionConfig { rank: 2, ..Default::default() };
        assert!(matches!(
            complete(&t, &Mask::empty((4, 4, 4)).unwrap(), &cfg),
            Err(Error::InvalidArgument(_))
        ));
        let mut bad = t.clone();
        bad.set(0, 0, 0, f64::NAN);
        assert!(matches!(
            complete(&bad, &Mask::full((4, 4, 4)).unwrap(), &cfg),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn full_observation_exact_rank_three() {
        let t = rank_r_tensor((10, 11, 12), 3, 5);
        let mask = Mask::full(t.dims()).unwrap();
        let cfg = CompletionConfig { rank: 10, seed: 1, ..Default::default() };
        let res = complete(&t, &mask, &cfg).unwrap();
        let err = relative_error(&res.full_model.reconstruct(), &t).unwrap();
        assert!(err <= 1e-3, "relative error {err}");
        assert_eq!(res.rank(), 3);
    }

    #[test]
    fn observed_entries_are_kept_bit_exact() {
        let t = rank_r_tensor((8, 8, 8), 2, 6);
        let mask = make_random_mask(t.dims(), 0.6, 2).unwrap();
        let cfg = CompletionConfig { rank: 4, max_iter: 20, ..Default::default() };
        let res = complete(&t, &mask, &cfg).unwrap();
        for &(i, j, k) in mask.triples() {
            assert_eq!(res.completed.get(i, j, k).to_bits(), t.get(i, j, k).to_bits());
        }
        assert_eq!(res.trace.len(), 20);
        let first = res.trace[0].residual;
        assert!(res.trace.last().unwrap().residual <= first);
    }

    #[test]
    fn same_seed_same_result() {
        let t = rank_r_tensor((6, 7, 8), 2, 7);
        let mask = make_random_mask(t.dims(), 0.7, 3).unwrap();
        let cfg = CompletionConfig { rank: 4, max_iter: 15, seed: 11, ..Default::default() };
        let a = complete(&t, &mask, &cfg).unwrap();
        let b = complete(&t, &mask, &cfg).unwrap();
        assert_eq!(a.full_model, b.full_model);
        assert_eq!(a.completed, b.completed);
        let strip = |r: &CompletionResult| r.trace.iter().map(|x| (x.residual, x.lambda)).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
    }
}
