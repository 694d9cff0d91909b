//! Reduced bases for the parametrized diffusion problem
//!
//! ```text
//! (1 + mu1 x) u_xx + (1 + mu2 y) u_yy = exp(4xy)   on [-1, 1]^2,   u = 0 on the boundary
//! ```
//!
//! Snapshots come from Chebyshev collocation. A snapshot is an `nx x nx`
//! matrix `u[(i, j)] = u(x_i, y_j)`; vectorized snapshots use column-major
//! order, index `i + nx * j`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::completion::{self, CompletionConfig};
use crate::cp::CpModel;
use crate::error::{Error, Result};
use crate::factor::{self, AlsConfig};
use crate::tensor::{Dims, Mask, Tensor3};

/// Largest admissible `|mu|`.
pub const MU_MAX: f64 = 0.99;

/// Chebyshev-Gauss-Lobatto points `cos(j pi / n)` and the collocation
/// differentiation matrix on them.
pub fn cheb_diff(n: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if n == 0 {
        return Err(Error::arg("cheb_diff needs n >= 1"));
    }
    let x = DVector::from_fn(n + 1, |j, _| (j as f64 * PI / n as f64).cos());
    let c = |j: usize| {
        let s = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
        if j == 0 || j == n {
            2.0 * s
        } else {
            s
        }
    };
    let mut d = DMatrix::from_fn(n + 1, n + 1, |i, j| {
        if i == j {
            0.0
        } else {
            c(i) / c(j) / (x[i] - x[j])
        }
    });
    // Diagonal from the row sums so constants differentiate to zero.
    for i in 0..=n {
        let s: f64 = d.row(i).sum();
        d[(i, i)] = -s;
    }
    Ok((x, d))
}

/// Barycentric weights for the Chebyshev-Gauss-Lobatto points of `cheb_diff(n)`.
fn cheb_weights(n: usize) -> Vec<f64> {
    (0..=n)
        .map(|j| {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n {
                0.5 * s
            } else {
                s
            }
        })
        .collect()
}

/// Evaluates the Chebyshev interpolant of `values` (samples at the points of
/// `cheb_diff(values.len() - 1)`) at `t`.
pub fn cheb_interpolate(values: &[f64], t: f64) -> f64 {
    let n = values.len() - 1;
    if n == 0 {
        return values[0];
    }
    let w = cheb_weights(n);
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..=n {
        let xj = (j as f64 * PI / n as f64).cos();
        let diff = t - xj;
        if diff == 0.0 {
            return values[j];
        }
        let c = w[j] / diff;
        num += c * values[j];
        den += c;
    }
    num / den
}

/// One instance of the diffusion problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionProblem {
    /// Collocation points per direction, boundary included.
    pub nx: usize,
    pub mu1: f64,
    pub mu2: f64,
}

impl DiffusionProblem {
    pub fn new(nx: usize, mu1: f64, mu2: f64) -> Result<Self> {
        if nx < 3 {
            return Err(Error::arg(format!("nx must be at least 3, got {nx}")));
        }
        if !(mu1.abs() <= MU_MAX && mu2.abs() <= MU_MAX) {
            return Err(Error::arg(format!(
                "parameters ({mu1}, {mu2}) outside [-{MU_MAX}, {MU_MAX}]"
            )));
        }
        Ok(Self { nx, mu1, mu2 })
    }
}

/// Interior second-derivative operator and nodes for a fixed `nx`, shared
/// across parameter values.
#[derive(Clone, Debug)]
pub struct SpectralGrid {
    nx: usize,
    points: DVector<f64>,
    /// `D^2` restricted to interior rows and columns.
    d2: DMatrix<f64>,
}

impl SpectralGrid {
    pub fn new(nx: usize) -> Result<Self> {
        if nx < 3 {
            return Err(Error::arg(format!("nx must be at least 3, got {nx}")));
        }
        let (points, d) = cheb_diff(nx - 1)?;
        let n = nx - 2;
        let d2 = (&d * &d).view((1, 1), (n, n)).into_owned();
        Ok(Self { nx, points, d2 })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn points(&self) -> &DVector<f64> {
        &self.points
    }

    fn interior(&self) -> usize {
        self.nx - 2
    }

    /// `diag(1 + mu t) D2` on the interior nodes.
    fn weighted_d2(&self, mu: f64) -> DMatrix<f64> {
        let n = self.interior();
        DMatrix::from_fn(n, n, |i, j| (1.0 + mu * self.points[i + 1]) * self.d2[(i, j)])
    }

    /// Dense interior operator `I (x) Lx + Ly (x) I` acting on column-major
    /// interior vectors, with `Lx = diag(1 + mu1 x) D2` and likewise `Ly`.
    pub fn operator(&self, mu1: f64, mu2: f64) -> DMatrix<f64> {
        let n = self.interior();
        let eye = DMatrix::<f64>::identity(n, n);
        eye.kronecker(&self.weighted_d2(mu1)) + self.weighted_d2(mu2).kronecker(&eye)
    }

    /// `exp(4 x y)` at the interior nodes as an `(nx-2) x (nx-2)` matrix.
    pub fn rhs(&self) -> DMatrix<f64> {
        let n = self.interior();
        DMatrix::from_fn(n, n, |i, j| (4.0 * self.points[i + 1] * self.points[j + 1]).exp())
    }

    fn embed(&self, interior: &DMatrix<f64>) -> DMatrix<f64> {
        let mut u = DMatrix::zeros(self.nx, self.nx);
        let n = self.interior();
        u.view_mut((1, 1), (n, n)).copy_from(interior);
        u
    }

    /// Solves at one parameter pair; returns the full grid with zero boundary.
    ///
    /// The Kronecker system is the matrix equation `Lx U + U Ly^T = F`. With
    /// the real Schur form `Ly = Q T Q^T` and `U = W Q^T` it decouples into
    /// `(Lx + T_jj I) w_j = (F Q)_j - sum_{k>j} T_jk w_k`, solved from the
    /// last column back. If `Ly` has complex eigenvalues the assembled
    /// system is factored directly instead.
    pub fn solve(&self, mu1: f64, mu2: f64) -> Result<DMatrix<f64>> {
        self.solve_with(mu1, mu2, &self.rhs())
    }

    /// Same as [`SpectralGrid::solve`] for an arbitrary interior right-hand side.
    pub fn solve_with(&self, mu1: f64, mu2: f64, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        DiffusionProblem::new(self.nx, mu1, mu2)?;
        let n = self.interior();
        if f.shape() != (n, n) {
            return Err(Error::dims((n, n), f.shape()));
        }
        let singular = || Error::Solver(format!("collocation system singular at ({mu1}, {mu2})"));
        let lx = self.weighted_d2(mu1);
        let (q, t) = nalgebra::Schur::new(self.weighted_d2(mu2)).unpack();
        if (1..n).any(|j| t[(j, j - 1)] != 0.0) {
            let sol = self
                .operator(mu1, mu2)
                .lu()
                .solve(&DVector::from_column_slice(f.as_slice()))
                .ok_or_else(singular)?;
            return Ok(self.embed(&DMatrix::from_column_slice(n, n, sol.as_slice())));
        }
        let g = f * &q;
        let mut w = DMatrix::<f64>::zeros(n, n);
        for j in (0..n).rev() {
            let mut rhs = g.column(j).into_owned();
            for k in j + 1..n {
                rhs.axpy(-t[(j, k)], &w.column(k), 1.0);
            }
            let mut shifted = lx.clone();
            for i in 0..n {
                shifted[(i, i)] += t[(j, j)];
            }
            let col = shifted.lu().solve(&rhs).ok_or_else(singular)?;
            w.set_column(j, &col);
        }
        Ok(self.embed(&(w * q.transpose())))
    }

    /// `||L u - f|| / ||f||` over the interior nodes.
    pub fn relative_residual(&self, mu1: f64, mu2: f64, u: &DMatrix<f64>) -> f64 {
        let n = self.interior();
        let inner = u.view((1, 1), (n, n));
        let f = self.rhs();
        let lu = self.weighted_d2(mu1) * inner + inner * self.weighted_d2(mu2).transpose();
        (lu - &f).norm() / f.norm()
    }
}

pub fn solve_diffusion(p: &DiffusionProblem) -> Result<DMatrix<f64>> {
    SpectralGrid::new(p.nx)?.solve(p.mu1, p.mu2)
}

/// Solves at every parameter pair, in parallel, keeping input order.
pub fn solve_many(params: &[(f64, f64)], nx: usize) -> Result<Vec<DMatrix<f64>>> {
    let grid = SpectralGrid::new(nx)?;
    params.par_iter().map(|&(m1, m2)| grid.solve(m1, m2)).collect()
}

/// `n` evenly spaced points on `[-MU_MAX, MU_MAX]`.
pub fn linspace_mu(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| -MU_MAX + 2.0 * MU_MAX * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Cartesian `n x n` parameter grid, `mu1`-major.
pub fn parameter_grid(n: usize) -> Vec<(f64, f64)> {
    let pts = linspace_mu(n);
    pts.iter()
        .flat_map(|&a| pts.iter().map(move |&b| (a, b)))
        .collect()
}

/// Uniform random parameters on `[-MU_MAX, MU_MAX]^2`.
pub fn random_parameters(count: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (
                rng.random_range(-MU_MAX..=MU_MAX),
                rng.random_range(-MU_MAX..=MU_MAX),
            )
        })
        .collect()
}

/// Stacks snapshots along the third mode: entry `(i, j, k)` is `u_k[(i, j)]`.
pub fn stack_snapshots(snaps: &[DMatrix<f64>]) -> Result<Tensor3> {
    let first = snaps.first().ok_or_else(|| Error::arg("no snapshots"))?;
    let (r, c) = first.shape();
    if let Some(bad) = snaps.iter().find(|s| s.shape() != (r, c)) {
        return Err(Error::dims((r, c), bad.shape()));
    }
    Tensor3::from_fn((r, c, snaps.len()), |i, j, k| snaps[k][(i, j)])
}

pub fn assemble_snapshots(grid: &[(f64, f64)], nx: usize) -> Result<Tensor3> {
    if grid.is_empty() {
        return Err(Error::arg("parameter grid is empty"));
    }
    stack_snapshots(&solve_many(grid, nx)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisSource {
    Cp,
    Pod,
}

#[derive(Clone, Debug)]
pub struct ReducedBasis {
    /// Orthonormal columns.
    pub phi: DMatrix<f64>,
    pub source: BasisSource,
}

impl ReducedBasis {
    pub fn len(&self) -> usize {
        self.phi.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.ncols() == 0
    }

    /// `max |Phi^T Phi - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.phi.tr_mul(&self.phi);
        (g - DMatrix::identity(self.len(), self.len())).amax()
    }

    /// `||v - Phi Phi^T v||`.
    pub fn residual(&self, v: &DVector<f64>) -> f64 {
        (v - &self.phi * self.phi.tr_mul(v)).norm()
    }

    /// Basis made of the first `r` columns.
    pub fn leading(&self, r: usize) -> ReducedBasis {
        ReducedBasis {
            phi: self.phi.columns(0, r.min(self.len())).into_owned(),
            source: self.source,
        }
    }
}

/// Orthonormalizes the columns of `m` by QR with column pivoting, dropping
/// directions whose `R` diagonal falls below `1e-10` of the largest.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return m.clone();
    }
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let keep = diag.iter().take_while(|&&d| d > 1e-10 * max).count();
    qr.q().columns(0, keep).into_owned()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CpBasisConfig {
    pub completion: CompletionConfig,
    pub als: AlsConfig,
}

impl Default for CpBasisConfig {
    fn default() -> Self {
        let mut completion = CompletionConfig::default();
        completion.hybrid.initial_lambda = Some(10.0);
        Self {
            completion,
            als: AlsConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CpBasisOutput {
    pub basis: ReducedBasis,
    /// Rank kept after truncating the completion model.
    pub rank: usize,
    /// Model after the damped ALS refinement.
    pub model: CpModel,
    pub completion: completion::CompletionResult,
}

/// CP-derived reduced basis: complete with the full mask at rank `R0`,
/// truncate, refine with damped ALS at the kept rank, and orthonormalize the
/// spatial parts `vec(x_r y_r^T)`.
pub fn cp_reduced_basis(a: &Tensor3, cfg: &CpBasisConfig) -> Result<CpBasisOutput> {
    let mask = Mask::full(a.dims())?;
    let res = completion::complete(a, &mask, &cfg.completion)?;
    let rank = res.model.rank();
    let (model, _) = factor::regularized_als(&res.model, a, &cfg.als)?;
    let (i, j, _) = a.dims();
    let spatial = DMatrix::from_fn(i * j, rank, |idx, r| {
        model.a[(idx % i, r)] * model.b[(idx / i, r)]
    });
    Ok(CpBasisOutput {
        basis: ReducedBasis {
            phi: orthonormalize(&spatial),
            source: BasisSource::Cp,
        },
        rank,
        model,
        completion: res,
    })
}

/// Snapshot matrix `(I J) x K`, column `k` the vectorized slice `k`.
pub fn snapshot_matrix(a: &Tensor3) -> DMatrix<f64> {
    let (i, j, k) = a.dims();
    DMatrix::from_fn(i * j, k, |idx, kk| a.get(idx % i, idx / i, kk))
}

/// Leading `r` left singular vectors of the snapshot matrix.
pub fn pod_basis(a: &Tensor3, r: usize) -> Result<ReducedBasis> {
    let (i, j, k) = a.dims();
    if r == 0 || r > (i * j).min(k) {
        return Err(Error::arg(format!(
            "POD rank must lie in 1..={}, got {r}",
            (i * j).min(k)
        )));
    }
    let svd = snapshot_matrix(a).svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Solver("SVD did not return U".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&p, &q| svd.singular_values[q].total_cmp(&svd.singular_values[p]));
    let cols: Vec<_> = order[..r].iter().map(|&c| u.column(c).into_owned()).collect();
    Ok(ReducedBasis {
        phi: DMatrix::from_columns(&cols),
        source: BasisSource::Pod,
    })
}

/// Column-major vectorization of a snapshot.
pub fn vectorize_snapshot(u: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(u.as_slice())
}

/// `||u - Phi Phi^T u||_2` for the true solution at each test parameter.
pub fn project_error(basis: &ReducedBasis, tests: &[(f64, f64)], nx: usize) -> Result<Vec<f64>> {
    if basis.phi.nrows() != nx * nx {
        return Err(Error::dims(nx * nx, basis.phi.nrows()));
    }
    Ok(solve_many(tests, nx)?
        .iter()
        .map(|u| basis.residual(&vectorize_snapshot(u)))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Cp,
    Pod,
}

/// Entries of the snapshot tensor divided by the stored parameter count.
pub fn compression_ratio(dims: Dims, r: usize, scheme: Scheme) -> Result<f64> {
    if r == 0 {
        return Err(Error::arg("rank must be at least 1"));
    }
    let (i, j, k) = (dims.0 as f64, dims.1 as f64, dims.2 as f64);
    let stored = match scheme {
        Scheme::Pod => i * j + k + 1.0,
        Scheme::Cp => i + j + k + 1.0,
    };
    Ok(i * j * k / (r as f64 * stored))
}

/// Settings for the end-to-end reduced-basis comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct MorDemoConfig {
    pub nx: usize,
    /// Points per parameter direction of the training grid.
    pub grid: usize,
    pub tests: usize,
    pub seed: u64,
    pub pod_rank: usize,
    pub cp: CpBasisConfig,
}

impl Default for MorDemoConfig {
    fn default() -> Self {
        Self {
            nx: 40,
            grid: 9,
            tests: 10,
            seed: 0,
            pod_rank: 20,
            cp: CpBasisConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MorDemoReport {
    pub dims: Dims,
    pub test_params: Vec<(f64, f64)>,
    pub cp: CpBasisOutput,
    pub pod: ReducedBasis,
    pub cp_errors: Vec<f64>,
    pub pod_errors: Vec<f64>,
    /// Largest relative collocation residual over training and test solves.
    pub max_residual: f64,
    pub cp_ratio: f64,
    pub pod_ratio: f64,
}

pub fn run_demo(cfg: &MorDemoConfig) -> Result<MorDemoReport> {
    let grid = SpectralGrid::new(cfg.nx)?;
    let train = parameter_grid(cfg.grid);
    let test_params = random_parameters(cfg.tests, cfg.seed);
    let snaps = solve_many(&train, cfg.nx)?;
    let truths = solve_many(&test_params, cfg.nx)?;
    let max_residual = train
        .iter()
        .zip(&snaps)
        .chain(test_params.iter().zip(&truths))
        .map(|(&(m1, m2), u)| grid.relative_residual(m1, m2, u))
        .fold(0.0, f64::max);
    let a = stack_snapshots(&snaps)?;
    let cp = cp_reduced_basis(&a, &cfg.cp)?;
    let pod = pod_basis(&a, cfg.pod_rank)?;
    let errors = |b: &ReducedBasis| -> Vec<f64> {
        truths.iter().map(|u| b.residual(&vectorize_snapshot(u))).collect()
    };
    Ok(MorDemoReport {
        dims: a.dims(),
        cp_errors: errors(&cp.basis),
        pod_errors: errors(&pod),
        cp_ratio: compression_ratio(a.dims(), cp.rank, Scheme::Cp)?,
        pod_ratio: compression_ratio(a.dims(), cfg.pod_rank, Scheme::Pod)?,
        test_params,
        cp,
        pod,
        max_residual,
    })
}
