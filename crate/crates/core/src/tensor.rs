//! Dense third-order tensors, observation masks and the Khatri-Rao kernel.
//!
//! Storage is row-major over `(i, j, k)`: entry `(i, j, k)` lives at
//! `(i * J + j) * K + k`, so [`Tensor3::vectorize`] is a plain copy with `k`
//! varying fastest.
//!
//! Unfoldings are laid out so that, with `D = diag(alpha)`,
//!
//! ```text
//! T(1) = A D (C ⊙ B)^T      T(2) = B D (C ⊙ A)^T      T(3) = C D (B ⊙ A)^T
//! ```
//!
//! hold exactly for [`khatri_rao`]. That forces the column of `a_ijk` to be
//! `k * J + j` in mode 1, `k * I + i` in mode 2 and `j * I + i` in mode 3.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tensor extents `(I, J, K)`.
pub type Dims = (usize, usize, usize);

/// Matricization mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    pub fn index(self) -> usize {
        match self {
            Mode::One => 1,
            Mode::Two => 2,
            Mode::Three => 3,
        }
    }
}

impl TryFrom<usize> for Mode {
    type Error = Error;

    fn try_from(m: usize) -> Result<Self> {
        match m {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            _ => Err(Error::arg(format!("mode must be 1, 2 or 3, got {m}"))),
        }
    }
}

fn check_dims(dims: Dims) -> Result<()> {
    if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
        return Err(Error::arg(format!("tensor extents must be positive, got {dims:?}")));
    }
    Ok(())
}

/// Dense real tensor of order three.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: Dims,
    values: Vec<f64>,
}

impl Tensor3 {
    pub fn new(dims: Dims, values: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let len = dims.0 * dims.1 * dims.2;
        if values.len() != len {
            return Err(Error::dims(len, values.len()));
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims,
            values: vec![0.0; dims.0 * dims.1 * dims.2],
        })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        check_dims(dims)?;
        let mut values = Vec::with_capacity(dims.0 * dims.1 * dims.2);
        for i in 0..dims.0 {
            for j in 0..dims.1 {
                for k in 0..dims.2 {
                    values.push(f(i, j, k));
                }
            }
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims.1 + j) * self.dims.2 + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.values[o] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self - other`, entrywise.
    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.dims != other.dims {
            return Err(Error::dims(self.dims, other.dims));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor3 {
            dims: self.dims,
            values,
        })
    }

    /// Entries in row-major `(i, j, k)` order, `k` fastest.
    pub fn vectorize(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub fn matricize(&self, mode: Mode) -> DMatrix<f64> {
        let (ni, nj, nk) = self.dims;
        match mode {
            Mode::One => DMatrix::from_fn(ni, nj * nk, |i, col| {
                let (k, j) = (col / nj, col % nj);
                self.get(i, j, k)
            }),
            Mode::Two => DMatrix::from_fn(nj, ni * nk, |j, col| {
                let (k, i) = (col / ni, col % ni);
                self.get(i, j, k)
            }),
            Mode::Three => DMatrix::from_fn(nk, ni * nj, |k, col| {
                let (j, i) = (col / ni, col % ni);
                self.get(i, j, k)
            }),
        }
    }

    /// Inverse of [`Tensor3::matricize`].
    pub fn from_matricized(mode: Mode, dims: Dims, mat: &DMatrix<f64>) -> Result<Tensor3> {
        check_dims(dims)?;
        let (ni, nj, nk) = dims;
        let expected = match mode {
            Mode::One => (ni, nj * nk),
            Mode::Two => (nj, ni * nk),
            Mode::Three => (nk, ni * nj),
        };
        if mat.shape() != expected {
            return Err(Error::dims(expected, mat.shape()));
        }
        Tensor3::from_fn(dims, |i, j, k| match mode {
            Mode::One => mat[(i, k * nj + j)],
            Mode::Two => mat[(j, k * ni + i)],
            Mode::Three => mat[(k, j * ni + i)],
        })
    }
}

/// Column-wise Kronecker product: column `r` is `x_r ⊗ y_r`, with the row
/// index of `y` varying fastest.
pub fn khatri_rao(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != y.ncols() {
        return Err(Error::arg(format!(
            "khatri_rao needs equal column counts, got {} and {}",
            x.ncols(),
            y.ncols()
        )));
    }
    let (ny, r) = (y.nrows(), x.ncols());
    let mut out = DMatrix::zeros(x.nrows() * ny, r);
    for c in 0..r {
        for i in 0..x.nrows() {
            let xi = x[(i, c)];
            for j in 0..ny {
                out[(i * ny + j, c)] = xi * y[(j, c)];
            }
        }
    }
    Ok(out)
}

/// Index set of observed entries.
///
/// Triples are zero-based and kept sorted; a dense boolean cache answers
/// membership queries in constant time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    dims: Dims,
    observed: Vec<(usize, usize, usize)>,
    cache: Vec<bool>,
}

impl Mask {
    pub fn from_triples(dims: Dims, mut triples: Vec<(usize, usize, usize)>) -> Result<Self> {
        check_dims(dims)?;
        let mut cache = vec![false; dims.0 * dims.1 * dims.2];
        for &(i, j, k) in &triples {
            if i >= dims.0 || j >= dims.1 || k >= dims.2 {
                return Err(Error::arg(format!(
                    "index ({i}, {j}, {k}) out of bounds for {dims:?}"
                )));
            }
            let o = (i * dims.1 + j) * dims.2 + k;
            if cache[o] {
                return Err(Error::arg(format!("duplicate index ({i}, {j}, {k})")));
            }
            cache[o] = true;
        }
        triples.sort_unstable();
        Ok(Self {
            dims,
            observed: triples,
            cache,
        })
    }

    /// Builds a mask from a dense membership predicate in canonical layout.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Result<Self> {
        check_dims(dims)?;
        let mut observed = Vec::new();
        let mut cache = Vec::with_capacity(dims.0 * dims.1 * dims.2);
        for i in 0..dims.0 {
            for j in 0..dims.1 {
                for k in 0..dims.2 {
                    let hit = f(i, j, k);
                    if hit {
                        observed.push((i, j, k));
                    }
                    cache.push(hit);
                }
            }
        }
        Ok(Self {
            dims,
            observed,
            cache,
        })
    }

    pub fn full(dims: Dims) -> Result<Self> {
        Self::from_fn(dims, |_, _, _| true)
    }

    pub fn empty(dims: Dims) -> Result<Self> {
        Self::from_fn(dims, |_, _, _| false)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn triples(&self) -> &[(usize, usize, usize)] {
        &self.observed
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize, k: usize) -> bool {
        self.cache[(i * self.dims.1 + j) * self.dims.2 + k]
    }

    /// Membership flags in canonical layout.
    pub fn flags(&self) -> &[bool] {
        &self.cache
    }

    pub fn fill_fraction(&self) -> f64 {
        self.observed.len() as f64 / self.cache.len() as f64
    }
}

/// Returns a tensor equal to `t` on the mask and to `s` elsewhere.
pub fn masked_copy(t: &Tensor3, s: &Tensor3, mask: &Mask) -> Result<Tensor3> {
    if t.dims() != s.dims() {
        return Err(Error::dims(t.dims(), s.dims()));
    }
    if t.dims() != mask.dims() {
        return Err(Error::dims(t.dims(), mask.dims()));
    }
    let values = t
        .values()
        .iter()
        .zip(s.values())
        .zip(mask.flags())
        .map(|((&tv, &sv), &obs)| if obs { tv } else { sv })
        .collect();
    Tensor3::new(t.dims(), values)
}

/// Frobenius norm of `s - t` restricted to the mask, and of `t` on the mask.
pub fn masked_norms(s: &Tensor3, t: &Tensor3, mask: &Mask) -> (f64, f64) {
    let mut diff = 0.0;
    let mut base = 0.0;
    for ((&sv, &tv), &obs) in s.values().iter().zip(t.values()).zip(mask.flags()) {
        if obs {
            diff += (sv - tv) * (sv - tv);
            base += tv * tv;
        }
    }
    (diff.sqrt(), base.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn indexed_cube() -> Tensor3 {
        Tensor3::from_fn((2, 2, 2), |i, j, k| {
            (100 * (i + 1) + 10 * (j + 1) + (k + 1)) as f64
        })
        .unwrap()
    }

    fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn vectorize_orders_k_fastest() {
        let v = indexed_cube().vectorize();
        let expected = [111.0, 112.0, 121.0, 122.0, 211.0, 212.0, 221.0, 222.0];
        assert_eq!(v.as_slice(), &expected);
    }

    #[test]
    fn mode_one_row_follows_khatri_rao_ordering() {
        // Brute force: column index of a_{1jk} is k * J + j.
        let t = indexed_cube();
        let m = t.matricize(Mode::One);
        let mut row = vec![0.0; 4];
        for j in 0..2 {
            for k in 0..2 {
                row[k * 2 + j] = t.get(0, j, k);
            }
        }
        assert_eq!(row, vec![111.0, 121.0, 112.0, 122.0]);
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), row);
    }

    #[test]
    fn rank_one_mode_one_unfolding() {
        let a = DVector::from_vec(vec![1.0, -2.0]);
        let b = DVector::from_vec(vec![0.5, 3.0, 1.0]);
        let c = DVector::from_vec(vec![2.0, -1.0, 4.0, 0.25]);
        let t = Tensor3::from_fn((2, 3, 4), |i, j, k| a[i] * b[j] * c[k]).unwrap();
        let cb = khatri_rao(
            &DMatrix::from_column_slice(4, 1, c.as_slice()),
            &DMatrix::from_column_slice(3, 1, b.as_slice()),
        )
        .unwrap();
        let expected = &a * cb.transpose();
        assert_eq!(t.matricize(Mode::One), expected);
    }

    #[test]
    fn matricize_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = Tensor3::from_fn((3, 4, 5), |_, _, _| StandardNormal.sample(&mut rng)).unwrap();
        for mode in Mode::ALL {
            let back = Tensor3::from_matricized(mode, t.dims(), &t.matricize(mode)).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn invalid_mode_is_rejected() {
        assert!(matches!(Mode::try_from(4), Err(Error::InvalidArgument(_))));
        assert!(Mode::try_from(0).is_err());
    }

    #[test]
    fn khatri_rao_single_column() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let y = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        let kr = khatri_rao(&x, &y).unwrap();
        assert_eq!(kr.as_slice(), &[3.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn khatri_rao_of_identities() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let kr = khatri_rao(&i2, &i2).unwrap();
        let mut expected = DMatrix::zeros(4, 2);
        expected[(0, 0)] = 1.0;
        expected[(3, 1)] = 1.0;
        assert_eq!(kr, expected);
    }

    #[test]
    fn khatri_rao_matches_double_loop_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = randn(3, 2, &mut rng);
        let y = randn(4, 2, &mut rng);
        let kr = khatri_rao(&x, &y).unwrap();
        for r in 0..2 {
            let mut kron = Vec::new();
            for i in 0..3 {
                for j in 0..4 {
                    kron.push(x[(i, r)] * y[(j, r)]);
                }
            }
            assert_eq!(kr.column(r).iter().copied().collect::<Vec<_>>(), kron);
        }
    }

    #[test]
    fn khatri_rao_rejects_mismatched_columns() {
        let x = DMatrix::<f64>::zeros(2, 2);
        let y = DMatrix::<f64>::zeros(2, 3);
        assert!(khatri_rao(&x, &y).is_err());
    }

    #[test]
    fn masked_copy_extremes() {
        let t = indexed_cube();
        let s = Tensor3::zeros((2, 2, 2)).unwrap();
        let full = Mask::full((2, 2, 2)).unwrap();
        let none = Mask::empty((2, 2, 2)).unwrap();
        assert_eq!(masked_copy(&t, &s, &full).unwrap(), t);
        assert_eq!(masked_copy(&t, &s, &none).unwrap(), s);
    }

    #[test]
    fn masked_copy_random_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = (4, 5, 6);
        let t = Tensor3::from_fn(dims, |_, _, _| StandardNormal.sample(&mut rng)).unwrap();
        let s = Tensor3::from_fn(dims, |_, _, _| StandardNormal.sample(&mut rng)).unwrap();
        let picks = rand::seq::index::sample(&mut rng, 120, 36);
        let triples = picks
            .iter()
            .map(|o| (o / 30, (o / 6) % 5, o % 6))
            .collect::<Vec<_>>();
        let mask = Mask::from_triples(dims, triples.clone()).unwrap();
        let out = masked_copy(&t, &s, &mask).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                for k in 0..6 {
                    let expected = if triples.contains(&(i, j, k)) {
                        t.get(i, j, k)
                    } else {
                        s.get(i, j, k)
                    };
                    assert_eq!(out.get(i, j, k), expected);
                }
            }
        }
    }

    #[test]
    fn masked_copy_dimension_mismatch() {
        let t = Tensor3::zeros((2, 2, 2)).unwrap();
        let s = Tensor3::zeros((2, 2, 3)).unwrap();
        let mask = Mask::full((2, 2, 2)).unwrap();
        assert!(masked_copy(&t, &s, &mask).is_err());
    }

    #[test]
    fn mask_rejects_duplicates_and_out_of_range() {
        assert!(Mask::from_triples((2, 2, 2), vec![(0, 0, 0), (0, 0, 0)]).is_err());
        assert!(Mask::from_triples((2, 2, 2), vec![(2, 0, 0)]).is_err());
        let m = Mask::from_triples((2, 2, 2), vec![(1, 1, 1), (0, 1, 0)]).unwrap();
        assert_eq!(m.triples(), &[(0, 1, 0), (1, 1, 1)]);
        assert_eq!(m.fill_fraction(), 0.25);
    }

    #[test]
    fn tensor_rejects_bad_shapes() {
        assert!(Tensor3::new((0, 1, 1), vec![]).is_err());
        assert!(Tensor3::new((2, 1, 1), vec![1.0]).is_err());
        assert_eq!(Tensor3::zeros((2, 2, 2)).unwrap().frobenius_norm(), 0.0);
    }
}
