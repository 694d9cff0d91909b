//! Iteratively reweighted norm weights turning `||s||_1` into `||L(s) s||^2`.

use nalgebra::DVector;

use crate::error::{Error, Result};

pub const DEFAULT_TAU1: f64 = 1e-10;
pub const DEFAULT_TAU2: f64 = 1e-14;

/// Diagonal of `L(s)`: `1 / sqrt(f_tau(|s_i|))` where `f_tau(x) = x` for
/// `x >= tau1` and `tau2` below it.
#[derive(Clone, Debug, PartialEq)]
pub struct IrnWeights {
    pub tau1: f64,
    pub tau2: f64,
    diag: DVector<f64>,
}

impl IrnWeights {
    pub fn from_solution(s: &DVector<f64>, tau1: f64, tau2: f64) -> Result<Self> {
        if !(tau2 > 0.0 && tau2 < tau1 && tau1.is_finite()) {
            return Err(Error::arg(format!(
                "need 0 < tau2 < tau1, got tau1 = {tau1}, tau2 = {tau2}"
            )));
        }
        let diag = s.map(|x| {
            let a = x.abs();
            let f = if a >= tau1 { a } else { tau2 };
            1.0 / f.sqrt()
        });
        Ok(Self { tau1, tau2, diag })
    }

    /// `L = I`, used before any iterate exists.
    pub fn identity(n: usize) -> Self {
        Self {
            tau1: DEFAULT_TAU1,
            tau2: DEFAULT_TAU2,
            diag: DVector::from_element(n, 1.0),
        }
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `L x`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_mul(&self.diag)
    }

    /// `L^{-1} x`.
    pub fn apply_inverse(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_div(&self.diag)
    }
}
