//! Factor-matrix updates: MM / proximal-gradient steps with unit-column
//! projection, and Tikhonov-damped ALS sweeps.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::cp::CpModel;
use crate::error::{Error, Result};
use crate::tensor::{Mode, Tensor3};

/// Smallest Lipschitz estimate handed out; keeps step sizes finite.
pub const LIPSCHITZ_FLOOR: f64 = 1e-12;

/// Step-size state for the three factor blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct StepControl {
    /// Safety factor `s > 1`; the step is `1 / (s * L)`.
    pub safety: f64,
    lipschitz: [f64; 3],
}

impl Default for StepControl {
    fn default() -> Self {
        Self::new(1.05).expect("default safety factor is valid")
    }
}

impl StepControl {
    pub fn new(safety: f64) -> Result<Self> {
        if !(safety > 1.0) || !safety.is_finite() {
            return Err(Error::arg(format!("safety factor must exceed 1, got {safety}")));
        }
        Ok(Self {
            safety,
            lipschitz: [1.0; 3],
        })
    }

    pub fn lipschitz(&self, mode: Mode) -> f64 {
        self.lipschitz[mode.index() - 1]
    }

    pub fn refresh(&mut self, mode: Mode, model: &CpModel) {
        self.lipschitz[mode.index() - 1] = lipschitz_estimate(mode, model);
    }

    pub fn step(&self, mode: Mode) -> f64 {
        1.0 / (self.safety * self.lipschitz(mode))
    }
}

fn scale_columns(m: &mut DMatrix<f64>, s: &nalgebra::DVector<f64>) {
    for (mut col, &v) in m.column_iter_mut().zip(s.iter()) {
        col *= v;
    }
}

/// `T(mode) * W` for the mode's Khatri-Rao product `W`.
pub fn mttkrp(mode: Mode, model: &CpModel, t: &Tensor3) -> DMatrix<f64> {
    t.matricize(mode) * model.khatri_rao_for(mode)
}

/// Gradient of `f = 1/2 ||T - [alpha; A, B, C]||_F^2` with respect to the
/// factor of `mode`: `(X D W^T - T(mode)) W D`.
pub fn gradient(mode: Mode, model: &CpModel, t: &Tensor3) -> DMatrix<f64> {
    gradient_with(mode, model, &mttkrp(mode, model, t))
}

fn gradient_with(mode: Mode, model: &CpModel, tw: &DMatrix<f64>) -> DMatrix<f64> {
    let mut twd = tw.clone();
    scale_columns(&mut twd, &model.alpha);
    model.factor(mode) * weighted_gram(mode, model) - twd
}

/// `D W^T W D`.
fn weighted_gram(mode: Mode, model: &CpModel) -> DMatrix<f64> {
    let d = &model.alpha;
    let g = model.khatri_rao_gram(mode);
    DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| d[i] * g[(i, j)] * d[j])
}

/// Largest eigenvalue of `D W^T W D` for the mode's Khatri-Rao product.
pub fn lipschitz_estimate(mode: Mode, model: &CpModel) -> f64 {
    let h = weighted_gram(mode, model);
    let top = SymmetricEigen::new(h)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if top.is_finite() {
        top.max(LIPSCHITZ_FLOOR)
    } else {
        LIPSCHITZ_FLOOR
    }
}

/// One projected gradient step on a single factor.
///
/// `D = X - grad / (s L)` is projected onto unit columns. A column of `D`
/// that vanishes keeps the previous column.
pub fn mm_update(mode: Mode, model: &CpModel, t: &Tensor3, ctl: &StepControl) -> CpModel {
    let grad = gradient(mode, model, t);
    let mut out = model.clone();
    let step = ctl.step(mode);
    let x = out.factor_mut(mode);
    let mut d = &*x - grad * step;
    for (r, mut col) in d.column_iter_mut().enumerate() {
        let n = col.norm();
        if n > 0.0 && n.is_finite() {
            col.unscale_mut(n);
        } else {
            col.copy_from(&x.column(r));
        }
    }
    *x = d;
    out
}

/// Cyclic A, B, C sweep; each block sees the freshest other factors and a
/// Lipschitz estimate refreshed just before its step.
pub fn mm_sweep(model: &CpModel, t: &Tensor3, ctl: &mut StepControl) -> CpModel {
    let mut m = model.clone();
    for mode in Mode::ALL {
        ctl.refresh(mode, &m);
        m = mm_update(mode, &m, t, ctl);
    }
    m
}

/// Solves `(W^T W + rho I) G^T = W^T T(mode)^T` for `G = X D`.
pub fn regularized_ls_factor(
    mode: Mode,
    model: &CpModel,
    t: &Tensor3,
    rho: f64,
) -> Result<DMatrix<f64>> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::arg(format!("damping must be finite and >= 0, got {rho}")));
    }
    let r = model.rank();
    let mut gram = model.khatri_rao_gram(mode);
    for i in 0..r {
        gram[(i, i)] += rho;
    }
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if !(min > 1e-13 * max) {
        return Err(Error::NumericalRank);
    }
    let rhs = mttkrp(mode, model, t).transpose();
    let chol = gram.cholesky().ok_or(Error::NumericalRank)?;
    Ok(chol.solve(&rhs).transpose())
}

/// One damped ALS sweep over A, B, C; after each block the column norms of
/// `G = X D` move into `alpha`.
pub fn regularized_als_step(model: &CpModel, t: &Tensor3, rho: f64) -> Result<CpModel> {
    let mut m = model.clone();
    for mode in Mode::ALL {
        let g = regularized_ls_factor(mode, &m, t, rho)?;
        let prev = m.factor(mode).clone();
        let mut x = g;
        for r in 0..m.rank() {
            let n = x.column(r).norm();
            if n > 0.0 && n.is_finite() {
                x.column_mut(r).unscale_mut(n);
                m.alpha[r] = n;
            } else {
                x.column_mut(r).copy_from(&prev.column(r));
                m.alpha[r] = 0.0;
            }
        }
        *m.factor_mut(mode) = x;
    }
    Ok(m)
}

/// Settings for running damped ALS to convergence.
#[derive(Clone, Debug, PartialEq)]
pub struct AlsConfig {
    /// Damping; `None` uses `1e-6 * ||T||_F / sqrt(R)`.
    pub rho: Option<f64>,
    pub max_sweeps: usize,
    /// Stop once the relative fit error changes by less than this.
    pub tol: f64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self {
            rho: None,
            max_sweeps: 500,
            tol: 1e-10,
        }
    }
}

/// Runs damped ALS sweeps; returns the model and the number of sweeps used.
pub fn regularized_als(model: &CpModel, t: &Tensor3, cfg: &AlsConfig) -> Result<(CpModel, usize)> {
    let norm = t.frobenius_norm();
    let rho = cfg
        .rho
        .unwrap_or(1e-6 * norm / (model.rank() as f64).sqrt());
    let rel_err = |m: &CpModel| {
        let e = m.reconstruct().sub(t).map(|d| d.frobenius_norm()).unwrap_or(f64::NAN);
        if norm > 0.0 {
            e / norm
        } else {
            e
        }
    };
    let mut m = model.clone();
    let mut prev = rel_err(&m);
    for sweep in 1..=cfg.max_sweeps {
        m = regularized_als_step(&m, t, rho)?;
        let err = rel_err(&m);
        if (prev - err).abs() <= cfg.tol || err <= cfg.tol {
            return Ok((m, sweep));
        }
        prev = err;
    }
    Ok((m, cfg.max_sweeps))
}

/// `1/2 ||T - [alpha; A, B, C]||_F^2`.
pub fn objective(model: &CpModel, t: &Tensor3) -> f64 {
    let d = model.reconstruct().sub(t).expect("model dims match tensor");
    0.5 * d.values().iter().map(|v| v * v).sum::<f64>()
}
