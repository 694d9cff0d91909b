//! Soft thresholding and the fixed-lambda ISTA step for `alpha`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::cp::CpModel;
use crate::tensor::Tensor3;

/// Proximal map of `lambda * ||.||_1`: shrinks each entry toward zero by
/// `lambda`, zeroing entries with `|v_i| <= lambda`.
pub fn soft_threshold(v: &DVector<f64>, lambda: f64) -> DVector<f64> {
    v.map(|x| {
        if x.abs() <= lambda {
            0.0
        } else {
            x - lambda * x.signum()
        }
    })
}

fn top_eigenvalue(gram: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(gram.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// One ISTA step for `min 1/2 ||t - alpha Q||^2 + lambda ||alpha||_1`,
/// expressed through `Q Q^T` and `Q t` so `Q` never has to be formed.
pub fn ista_step_gram(
    gram: &DMatrix<f64>,
    qt: &DVector<f64>,
    alpha: &DVector<f64>,
    lambda: f64,
    safety: f64,
) -> DVector<f64> {
    let eta = top_eigenvalue(gram);
    if !(eta > 0.0) {
        return soft_threshold(alpha, f64::INFINITY);
    }
    let scale = safety * eta;
    let grad = gram * alpha - qt;
    soft_threshold(&(alpha - grad / scale), lambda / scale)
}

/// ISTA update of the model's scaling vector against `t`.
pub fn ista_alpha_step(model: &CpModel, t: &Tensor3, lambda: f64, safety: f64) -> DVector<f64> {
    ista_step_gram(
        &model.component_gram(),
        &model.project(t),
        &model.alpha,
        lambda,
        safety,
    )
}
