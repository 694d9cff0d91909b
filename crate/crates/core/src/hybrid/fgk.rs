//! Flexible Golub-Kahan process.
//!
//! After `k` steps the state satisfies
//!
//! ```text
//! H P_k = U_{k+1} M_k          H^T U_{k+1} = V_{k+1} T_{k+1}
//! ```
//!
//! with `P_k = [L_1^{-1} v_1, ..., L_k^{-1} v_k]`, `M_k` upper Hessenberg and
//! `T_{k+1}` upper triangular. With every `L_j = I` this is ordinary
//! Golub-Kahan bidiagonalization and `M_k` comes out lower bidiagonal.

use nalgebra::{DMatrix, DVector};

use super::irn::IrnWeights;
use crate::error::{Error, Result};

/// Matrix-free access to `H`.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.shape().0
    }

    fn ncols(&self) -> usize {
        self.shape().1
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self * x
    }

    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        self.tr_mul(y)
    }
}

/// Relative size below which an orthogonalized direction counts as zero.
pub const BREAKDOWN_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expansion {
    /// The basis grew by one vector on each side.
    Extended,
    /// The new direction vanished; the current subspace is invariant and the
    /// projected problem should be solved at the current size.
    Breakdown,
}

/// Bases and projected matrices of the flexible Golub-Kahan process.
#[derive(Clone, Debug)]
pub struct FgkState {
    u: Vec<DVector<f64>>,
    v: Vec<DVector<f64>>,
    p: Vec<DVector<f64>>,
    m: DMatrix<f64>,
    t: DMatrix<f64>,
    beta1: f64,
    exhausted: bool,
}

/// Orthogonalizes `w` against `basis` with repeated classical Gram-Schmidt,
/// returning the accumulated coefficients.
fn orthogonalize(w: &mut DVector<f64>, basis: &[DVector<f64>]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    let mut prev = w.norm();
    for _ in 0..3 {
        let c: Vec<f64> = basis.iter().map(|b| b.dot(w)).collect();
        for (b, &ci) in basis.iter().zip(&c) {
            w.axpy(-ci, b, 1.0);
        }
        for (acc, ci) in coeffs.iter_mut().zip(c) {
            *acc += ci;
        }
        let now = w.norm();
        // Two passes suffice unless the second one still cancelled heavily.
        if now > prev * std::f64::consts::FRAC_1_SQRT_2 {
            break;
        }
        prev = now;
    }
    coeffs
}

impl FgkState {
    /// Bootstraps `u_1 = d / ||d||` and `v_1 = H^T u_1 / ||H^T u_1||`.
    pub fn start(h: &dyn LinearOperator, d: &DVector<f64>) -> Result<Self> {
        if d.len() != h.nrows() {
            return Err(Error::dims(h.nrows(), d.len()));
        }
        let beta1 = d.norm();
        if !(beta1 > 0.0) || !beta1.is_finite() {
            return Err(Error::arg("right-hand side must be nonzero and finite"));
        }
        let u1 = d / beta1;
        let z = h.apply_transpose(&u1);
        let zn = z.norm();
        let mut t = DMatrix::zeros(1, 1);
        let (v1, exhausted) = if zn > 0.0 && zn.is_finite() {
            t[(0, 0)] = zn;
            (z / zn, false)
        } else {
            (DVector::zeros(h.ncols()), true)
        };
        Ok(Self {
            u: vec![u1],
            v: vec![v1],
            p: Vec::new(),
            m: DMatrix::zeros(1, 0),
            t,
            beta1,
            exhausted,
        })
    }

    /// Number of completed steps `k`.
    pub fn steps(&self) -> usize {
        self.p.len()
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    /// True once no further expansion is possible.
    pub fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    /// `M_k`, `(k+1) x k` upper Hessenberg.
    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// `T_{k+1}`, `(k+1) x (k+1)` upper triangular.
    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn u_basis(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.u)
    }

    pub fn v_basis(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.v)
    }

    /// `P_k`; an `n x 0` matrix before the first step.
    pub fn p_basis(&self) -> DMatrix<f64> {
        if self.p.is_empty() {
            DMatrix::zeros(self.v[0].len(), 0)
        } else {
            DMatrix::from_columns(&self.p)
        }
    }

    /// `s = P_k q`.
    pub fn lift(&self, q: &DVector<f64>) -> DVector<f64> {
        let mut s = DVector::zeros(self.v[0].len());
        for (pj, &qj) in self.p.iter().zip(q.iter()) {
            s.axpy(qj, pj, 1.0);
        }
        s
    }

    /// Performs step `k + 1` with preconditioner `weights`.
    pub fn expand(&mut self, h: &dyn LinearOperator, weights: &IrnWeights) -> Result<Expansion> {
        if weights.len() != h.ncols() {
            return Err(Error::dims(h.ncols(), weights.len()));
        }
        if self.exhausted {
            return Ok(Expansion::Breakdown);
        }
        let k = self.p.len();
        let pk = weights.apply_inverse(&self.v[k]);
        let mut w = h.apply(&pk);
        let scale = w.norm();
        let coeffs = orthogonalize(&mut w, &self.u);
        let wn = w.norm();

        let mut m = self.m.clone().resize(k + 2, k + 1, 0.0);
        for (i, c) in coeffs.into_iter().enumerate() {
            m[(i, k)] = c;
        }
        self.p.push(pk);

        if !(wn > BREAKDOWN_TOL * scale) || !wn.is_finite() {
            // H p_k already lies in span(U): keep the relation with a zero row.
            self.m = m;
            self.u.push(DVector::zeros(h.nrows()));
            self.v.push(DVector::zeros(h.ncols()));
            self.t = self.t.clone().resize(k + 2, k + 2, 0.0);
            self.exhausted = true;
            return Ok(Expansion::Breakdown);
        }
        m[(k + 1, k)] = wn;
        self.m = m;
        let u_next = w / wn;

        let mut z = h.apply_transpose(&u_next);
        let zscale = z.norm();
        let tc = orthogonalize(&mut z, &self.v);
        let zn = z.norm();
        let mut t = self.t.clone().resize(k + 2, k + 2, 0.0);
        for (i, c) in tc.into_iter().enumerate() {
            t[(i, k + 1)] = c;
        }
        self.u.push(u_next);
        if zn > BREAKDOWN_TOL * zscale && zn.is_finite() {
            t[(k + 1, k + 1)] = zn;
            self.v.push(z / zn);
        } else {
            self.v.push(DVector::zeros(h.ncols()));
            self.exhausted = true;
        }
        self.t = t;
        Ok(Expansion::Extended)
    }
}
