//! The scaled CP representation `[alpha; A, B, C]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{khatri_rao, Dims, Mode, Tensor3};

/// `sum_r alpha_r a_r ∘ b_r ∘ c_r`, factors stored column-per-component.
#[derive(Clone, Debug, PartialEq)]
pub struct CpModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub alpha: DVector<f64>,
}

impl CpModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        alpha: DVector<f64>,
    ) -> Result<Self> {
        let r = alpha.len();
        if r == 0 {
            return Err(Error::arg("a CP model needs at least one component"));
        }
        for (name, m) in [('A', &a), ('B', &b), ('C', &c)] {
            if m.ncols() != r {
                return Err(Error::arg(format!(
                    "factor {name} has {} columns, alpha has {r} entries",
                    m.ncols()
                )));
            }
            if m.nrows() == 0 {
                return Err(Error::arg(format!("factor {name} has no rows")));
            }
        }
        let (i, j, k) = (a.nrows(), b.nrows(), c.nrows());
        let bound = (i * j).min(j * k).min(i * k);
        if r > bound {
            return Err(Error::arg(format!(
                "rank {r} exceeds the generic upper bound {bound} for {:?}",
                (i, j, k)
            )));
        }
        Ok(Self { a, b, c, alpha })
    }

    /// Standard-normal factors with unit columns and unit weights.
    pub fn random<R: Rng + ?Sized>(dims: Dims, rank: usize, rng: &mut R) -> Result<Self> {
        let mut gen = |rows| DMatrix::from_fn(rows, rank, |_, _| StandardNormal.sample(rng));
        let a = gen(dims.0);
        let b = gen(dims.1);
        let c = gen(dims.2);
        let mut m = Self::new(a, b, c, DVector::from_element(rank, 1.0))?;
        for f in [&mut m.a, &mut m.b, &mut m.c] {
            for mut col in f.column_iter_mut() {
                let n = col.norm();
                col /= n;
            }
        }
        Ok(m)
    }

    pub fn rank(&self) -> usize {
        self.alpha.len()
    }

    pub fn dims(&self) -> Dims {
        (self.a.nrows(), self.b.nrows(), self.c.nrows())
    }

    pub fn factor(&self, mode: Mode) -> &DMatrix<f64> {
        match mode {
            Mode::One => &self.a,
            Mode::Two => &self.b,
            Mode::Three => &self.c,
        }
    }

    pub fn factor_mut(&mut self, mode: Mode) -> &mut DMatrix<f64> {
        match mode {
            Mode::One => &mut self.a,
            Mode::Two => &mut self.b,
            Mode::Three => &mut self.c,
        }
    }

    /// The Khatri-Rao product paired with `mode`: `C⊙B`, `C⊙A` or `B⊙A`.
    pub fn khatri_rao_for(&self, mode: Mode) -> DMatrix<f64> {
        let kr = match mode {
            Mode::One => khatri_rao(&self.c, &self.b),
            Mode::Two => khatri_rao(&self.c, &self.a),
            Mode::Three => khatri_rao(&self.b, &self.a),
        };
        kr.expect("factors share the column count")
    }

    /// `W^T W` for the mode's Khatri-Rao product, via the Hadamard identity.
    pub fn khatri_rao_gram(&self, mode: Mode) -> DMatrix<f64> {
        let (x, y) = match mode {
            Mode::One => (&self.c, &self.b),
            Mode::Two => (&self.c, &self.a),
            Mode::Three => (&self.b, &self.a),
        };
        (x.transpose() * x).component_mul(&(y.transpose() * y))
    }

    /// `Q Q^T`, the Gram matrix of the vectorized rank-one components.
    pub fn component_gram(&self) -> DMatrix<f64> {
        let ga = self.a.transpose() * &self.a;
        ga.component_mul(&self.khatri_rao_gram(Mode::One))
    }

    /// `Q t`: inner products of each rank-one component with `t`.
    pub fn project(&self, t: &Tensor3) -> DVector<f64> {
        let m = t.matricize(Mode::One) * self.khatri_rao_for(Mode::One);
        DVector::from_fn(self.rank(), |r, _| self.a.column(r).dot(&m.column(r)))
    }

    pub fn reconstruct(&self) -> Tensor3 {
        let mut ad = self.a.clone();
        for (mut col, &s) in ad.column_iter_mut().zip(self.alpha.iter()) {
            col *= s;
        }
        let unfolded = ad * self.khatri_rao_for(Mode::One).transpose();
        Tensor3::from_matricized(Mode::One, self.dims(), &unfolded)
            .expect("unfolding matches model dims")
    }

    /// Rescales every column to unit norm, folding the norms into `alpha`.
    ///
    /// The first nonzero entry of each `a_r` is made positive; the sign flip is
    /// absorbed by `b_r`.
    pub fn normalize(&self) -> Result<CpModel> {
        let mut out = self.clone();
        for r in 0..out.rank() {
            for (name, f) in [('A', &mut out.a), ('B', &mut out.b), ('C', &mut out.c)] {
                let n = f.column(r).norm();
                if n == 0.0 || !n.is_finite() {
                    return Err(Error::DegenerateComponent {
                        index: r,
                        factor: name,
                    });
                }
                f.column_mut(r).unscale_mut(n);
                out.alpha[r] *= n;
            }
            let lead = out.a.column(r).iter().copied().find(|&v| v != 0.0);
            if lead.is_some_and(|v| v < 0.0) {
                out.a.column_mut(r).neg_mut();
                out.b.column_mut(r).neg_mut();
            }
        }
        Ok(out)
    }

    /// Dictionary whose row `r` is the vectorized `a_r ∘ b_r ∘ c_r`.
    pub fn build_q(&self) -> DMatrix<f64> {
        let (ni, nj, nk) = self.dims();
        let rank = self.rank();
        let mut q = DMatrix::zeros(rank, ni * nj * nk);
        for r in 0..rank {
            let mut col = 0;
            for i in 0..ni {
                let ai = self.a[(i, r)];
                for j in 0..nj {
                    let aij = ai * self.b[(j, r)];
                    for k in 0..nk {
                        q[(r, col)] = aij * self.c[(k, r)];
                        col += 1;
                    }
                }
            }
        }
        q
    }

    /// Keeps the listed components, in the given order.
    pub fn select(&self, keep: &[usize]) -> Result<CpModel> {
        let pick = |m: &DMatrix<f64>| m.select_columns(keep.iter());
        CpModel::new(
            pick(&self.a),
            pick(&self.b),
            pick(&self.c),
            DVector::from_iterator(keep.len(), keep.iter().map(|&r| self.alpha[r])),
        )
    }

    /// Drops components with `|alpha_r| < eps * max |alpha|` and sorts the
    /// survivors by descending `|alpha_r|`.
    pub fn truncate_rank(&self, eps: f64) -> Result<CpModel> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::arg(format!("truncation tolerance must lie in (0, 1), got {eps}")));
        }
        let alpha_max = self.alpha.amax();
        let mut keep: Vec<usize> = (0..self.rank())
            .filter(|&r| self.alpha[r].abs() >= eps * alpha_max)
            .collect();
        // Stable sort keeps the original order among ties.
        keep.sort_by(|&x, &y| self.alpha[y].abs().total_cmp(&self.alpha[x].abs()));
        self.select(&keep)
    }
}
