//! The small projected Tikhonov problem
//! `min_q ||M_k q - beta1 e1||^2 + lambda ||q||^2` and weighted GCV.
//!
//! Everything goes through the thin SVD `M_k = W S Z^T`. With
//! `c = W^T (beta1 e1)` and filter factors `f_i = s_i^2 / (s_i^2 + lambda)`:
//!
//! ```text
//! q(lambda)  = sum_i f_i c_i / s_i z_i
//! G_w(lambda) = k ||(I - M Phi) beta1 e1||^2 / trace(I - w M Phi)^2
//!            = k (sum_i (1 - f_i)^2 c_i^2 + r_perp^2) / ((k + 1) - w sum_i f_i)^2
//! ```

use nalgebra::{DMatrix, DVector};

use super::fgk::FgkState;

pub const GRID_POINTS: usize = 200;
/// Lower end of the lambda grid relative to `sigma_max^2`.
pub const GRID_FLOOR: f64 = 1e-10;
const GOLDEN_ITERS: usize = 80;

/// Thin SVD of a projected matrix together with `c = W^T beta1 e1`.
#[derive(Clone, Debug)]
pub struct ProjectedSvd {
    sigma: DVector<f64>,
    z: DMatrix<f64>,
    c: DVector<f64>,
    perp2: f64,
    rows: usize,
    cols: usize,
}

impl ProjectedSvd {
    pub fn new(m: &DMatrix<f64>, beta1: f64) -> Self {
        let (rows, cols) = m.shape();
        if cols == 0 {
            return Self {
                sigma: DVector::zeros(0),
                z: DMatrix::zeros(0, 0),
                c: DVector::zeros(0),
                perp2: beta1 * beta1,
                rows,
                cols,
            };
        }
        let svd = m.clone().svd(true, true);
        let w = svd.u.expect("requested U");
        let zt = svd.v_t.expect("requested V^T");
        let c = w.row(0).transpose() * beta1;
        let perp2 = (beta1 * beta1 - c.norm_squared()).max(0.0);
        Self {
            sigma: svd.singular_values,
            z: zt.transpose(),
            c,
            perp2,
            rows,
            cols,
        }
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma.iter().copied().fold(0.0, f64::max)
    }

    fn filters(&self, lambda: f64) -> impl Iterator<Item = f64> + '_ {
        let cutoff = self.rows.max(self.cols) as f64 * f64::EPSILON * self.sigma_max();
        self.sigma.iter().map(move |&s| {
            if lambda > 0.0 {
                let s2 = s * s;
                s2 / (s2 + lambda)
            } else if s > cutoff {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Tikhonov solution; `lambda = 0` gives the pseudoinverse solution.
    pub fn solve(&self, lambda: f64) -> DVector<f64> {
        let mut q = DVector::zeros(self.cols);
        for (i, f) in self.filters(lambda).enumerate() {
            if f > 0.0 {
                q.axpy(f * self.c[i] / self.sigma[i], &self.z.column(i), 1.0);
            }
        }
        q
    }

    /// `||M q(lambda) - beta1 e1||^2`.
    pub fn residual_sq(&self, lambda: f64) -> f64 {
        self.filters(lambda)
            .zip(self.c.iter())
            .map(|(f, c)| ((1.0 - f) * c).powi(2))
            .sum::<f64>()
            + self.perp2
    }

    /// Weighted GCV objective.
    pub fn wgcv(&self, lambda: f64, omega: f64) -> f64 {
        let trace = self.rows as f64 - omega * self.filters(lambda).sum::<f64>();
        self.cols as f64 * self.residual_sq(lambda) / (trace * trace)
    }

    /// Weight making `lambda` a stationary point of `G_w`, if one exists.
    ///
    /// Setting `dG/dlambda = 0` with `N` the residual and `F = sum f_i` gives
    /// `w = N' (k+1) / (N' F - 2 N F')`.
    pub fn stationary_weight(&self, lambda: f64) -> Option<f64> {
        if !(lambda > 0.0) {
            return None;
        }
        let n = self.residual_sq(lambda);
        let (mut dn, mut f, mut df) = (0.0, 0.0, 0.0);
        for (&s, &c) in self.sigma.iter().zip(self.c.iter()) {
            let s2 = s * s;
            let den = s2 + lambda;
            f += s2 / den;
            df -= s2 / (den * den);
            dn += 2.0 * (lambda / den) * (s2 / (den * den)) * c * c;
        }
        let denom = dn * f - 2.0 * n * df;
        let w = dn * self.rows as f64 / denom;
        (w.is_finite() && w > 0.0).then_some(w)
    }

    /// Minimizes `G_w` over a logarithmic grid spanning
    /// `[GRID_FLOOR, 1] * sigma_max^2`, then refines by golden section.
    /// Returns `None` if the objective is not finite at the minimizer.
    pub fn select(&self, omega: f64) -> Option<f64> {
        let smax = self.sigma_max();
        if !(smax > 0.0) || !smax.is_finite() {
            return None;
        }
        let hi = (smax * smax).ln();
        let lo = (GRID_FLOOR * smax * smax).ln();
        let at = |i: usize| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64;
        let g = |x: f64| self.wgcv(x.exp(), omega);
        let (best, gbest) = (0..GRID_POINTS)
            .map(|i| (i, g(at(i))))
            .filter(|(_, v)| v.is_finite())
            .min_by(|a, b| a.1.total_cmp(&b.1))?;

        let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(GRID_POINTS - 1)));
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = b - ratio * (b - a);
        let mut x2 = a + ratio * (b - a);
        let (mut g1, mut g2) = (g(x1), g(x2));
        for _ in 0..GOLDEN_ITERS {
            if g1 <= g2 {
                b = x2;
                x2 = x1;
                g2 = g1;
                x1 = b - ratio * (b - a);
                g1 = g(x1);
            } else {
                a = x1;
                x1 = x2;
                g1 = g2;
                x2 = a + ratio * (b - a);
                g2 = g(x2);
            }
        }
        let (xr, gr) = if g1 <= g2 { (x1, g1) } else { (x2, g2) };
        let lambda = if gr.is_finite() && gr <= gbest { xr.exp() } else { at(best).exp() };
        lambda.is_finite().then_some(lambda)
    }
}

/// `q_k` for the current projected problem.
pub fn projected_tikhonov(state: &FgkState, lambda: f64) -> DVector<f64> {
    ProjectedSvd::new(state.m(), state.beta1()).solve(lambda)
}

/// WGCV choice of lambda for the current projected problem; falls back to
/// `previous` when the objective is not finite.
pub fn wgcv_select(state: &FgkState, omega: f64, previous: f64) -> f64 {
    ProjectedSvd::new(state.m(), state.beta1())
        .select(omega)
        .unwrap_or(previous)
}
