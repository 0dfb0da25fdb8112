//! Seeded Wiener paths, the dependent fBm pair they drive, and an exact
//! joint-Gaussian sampler used as a distributional oracle.

use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::kernels::{cross_covariance, fbm_covariance, Hurst, KernelMatrix};
use crate::rng::PhiloxStream;

/// Wiener increments `ΔW_j ~ N(0, Δ)` drawn from substream `path` of `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    grid: Grid,
    seed: u64,
    path: u64,
    increments: Vec<f64>,
}

impl WienerPath {
    /// Wrap given increments; used for zero or replayed noise.
    pub fn from_increments(grid: Grid, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.steps() {
            return Err(Error::GridMismatch { expected: grid.steps(), found: increments.len() });
        }
        if let Some(i) = increments.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i + 1, value: increments[i] });
        }
        Ok(WienerPath { grid, seed: 0, path: 0, increments })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `W(t_0..t_N)`, starting at 0.
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.increments.len() + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for dw in &self.increments {
            acc += dw;
            out.push(acc);
        }
        out
    }

    pub fn terminal(&self) -> f64 {
        self.increments.iter().sum()
    }
}

/// Draw path `path` of the ensemble identified by `seed`.
pub fn sample_wiener(grid: Grid, seed: u64, path: u64) -> WienerPath {
    let mut rng = PhiloxStream::new(seed, path);
    let sd = sqrt(grid.dt());
    let increments = (0..grid.steps()).map(|_| sd * rng.next_gaussian()).collect();
    WienerPath { grid, seed, path, increments }
}

/// The pair `(B^{H1}, B^{H2})` at `t_1..t_N`; both vanish at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPair {
    pub h1: Hurst,
    pub h2: Hurst,
    pub b1: GridFunction,
    pub b2: GridFunction,
}

impl FbmPair {
    fn new(grid: Grid, h1: Hurst, h2: Hurst, b1: Vec<f64>, b2: Vec<f64>) -> Result<Self> {
        Ok(FbmPair {
            h1,
            h2,
            b1: GridFunction::from_samples(grid, b1, Some(0.0))?,
            b2: GridFunction::from_samples(grid, b2, Some(0.0))?,
        })
    }
}

/// `B_k(t_i) = Σ_{j<=i} a_k[i][j] ΔW_j / Δ` with the shared increments.
pub fn fbm_pair_from_wiener(w: &WienerPath, k1: &KernelMatrix, k2: &KernelMatrix) -> Result<FbmPair> {
    for k in [k1, k2] {
        if k.grid() != w.grid() {
            return Err(Error::GridMismatch { expected: k.grid().steps(), found: w.grid().steps() });
        }
    }
    let b1 = k1.integrate_increments(&w.increments)?;
    let b2 = k2.integrate_increments(&w.increments)?;
    FbmPair::new(w.grid, k1.hurst(), k2.hurst(), b1, b2)
}

/// How the joint covariance was factored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factorization {
    /// Cholesky of `Σ + jitter·I`.
    Cholesky { jitter: f64 },
    /// Negative eigenvalues of `Σ` clipped to zero (nearest PSD matrix in
    /// Frobenius norm); `clipped` is the sum of their magnitudes.
    Projected { clipped: f64, min_eigenvalue: f64, trace: f64 },
}

/// Factor `F` with `F Fᵀ ≈ Σ`, where `Σ` is the `2N × 2N` covariance of
/// `(B^{H1}(t_i), B^{H2}(t_j))` with exact diagonal blocks and the
/// quadrature cross block.
#[derive(Debug, Clone)]
pub struct JointSampler {
    grid: Grid,
    h1: Hurst,
    h2: Hurst,
    /// Row-major, dimension `2N`.
    factor: Vec<f64>,
    kind: Factorization,
}

const JITTER_START: f64 = 1e-12;
const JITTER_MAX: f64 = 1e-8;

/// The joint covariance, row-major `2N × 2N`.
pub fn joint_covariance(k1: &KernelMatrix, k2: &KernelMatrix) -> Result<Vec<f64>> {
    let grid = *k1.grid();
    if k2.grid() != &grid {
        return Err(Error::GridMismatch { expected: grid.steps(), found: k2.grid().steps() });
    }
    let n = grid.steps();
    let dim = 2 * n;
    let (h1, h2) = (k1.hurst(), k2.hurst());
    let mut cov = vec![0.0; dim * dim];
    for i in 0..n {
        let ti = grid.node(i + 1);
        for j in 0..n {
            let tj = grid.node(j + 1);
            cov[i * dim + j] = fbm_covariance(h1, ti, tj);
            cov[(n + i) * dim + n + j] = fbm_covariance(h2, ti, tj);
            let c = cross_covariance(k1, k2, i + 1, j + 1)?;
            cov[i * dim + n + j] = c;
            cov[(n + j) * dim + i] = c;
        }
    }
    Ok(cov)
}

impl JointSampler {
    /// Cholesky with a ridge starting at `1e-12` and doubling up to `1e-8`
    /// times the mean diagonal; fails with diagnostics beyond that.
    pub fn new(k1: &KernelMatrix, k2: &KernelMatrix) -> Result<Self> {
        let cov = joint_covariance(k1, k2)?;
        Self::from_cholesky(k1, k2, &cov)
    }

    fn from_cholesky(k1: &KernelMatrix, k2: &KernelMatrix, cov: &[f64]) -> Result<Self> {
        let grid = *k1.grid();
        let dim = 2 * grid.steps();
        let mean_diag = (0..dim).map(|i| cov[i * dim + i]).sum::<f64>() / dim as f64;
        let mut ridge = 0.0;
        let mut next = JITTER_START * mean_diag;
        loop {
            match cholesky(cov, dim, ridge) {
                Ok(factor) => {
                    let kind = Factorization::Cholesky { jitter: ridge };
                    return Ok(JointSampler { grid, h1: k1.hurst(), h2: k2.hurst(), factor, kind });
                }
                Err((pivot, min_diagonal)) => {
                    if next > JITTER_MAX * mean_diag {
                        return Err(Error::Cholesky { jitter: ridge, pivot, min_diagonal });
                    }
                    ridge = next;
                    next *= 2.0;
                }
            }
        }
    }

    /// Like [`JointSampler::new`], but when the jittered Cholesky fails the
    /// covariance is projected onto the PSD cone by eigenvalue clipping.
    pub fn projected(k1: &KernelMatrix, k2: &KernelMatrix) -> Result<Self> {
        let cov = joint_covariance(k1, k2)?;
        match Self::from_cholesky(k1, k2, &cov) {
            Ok(s) => Ok(s),
            Err(Error::Cholesky { .. }) => {
                let grid = *k1.grid();
                let dim = 2 * grid.steps();
                let m = nalgebra::DMatrix::from_row_slice(dim, dim, &cov);
                let eig = nalgebra::SymmetricEigen::new(m);
                let mut clipped = 0.0;
                let mut min_eigenvalue = f64::INFINITY;
                let mut factor = vec![0.0; dim * dim];
                for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                    min_eigenvalue = min_eigenvalue.min(lam);
                    if lam <= 0.0 {
                        clipped += -lam;
                        continue;
                    }
                    let root = sqrt(lam);
                    for i in 0..dim {
                        factor[i * dim + k] = eig.eigenvectors[(i, k)] * root;
                    }
                }
                let trace = (0..dim).map(|i| cov[i * dim + i]).sum();
                let kind = Factorization::Projected { clipped, min_eigenvalue, trace };
                Ok(JointSampler { grid, h1: k1.hurst(), h2: k2.hurst(), factor, kind })
            }
            Err(e) => Err(e),
        }
    }

    pub fn factorization(&self) -> Factorization {
        self.kind
    }

    pub fn sample(&self, seed: u64, path: u64) -> Result<FbmPair> {
        let n = self.grid.steps();
        let dim = 2 * n;
        let mut rng = PhiloxStream::new(seed, path);
        let z: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
        let x: Vec<f64> = (0..dim).map(|i| crate::kernels::dot(&self.factor[i * dim..(i + 1) * dim], &z)).collect();
        FbmPair::new(self.grid, self.h1, self.h2, x[..n].to_vec(), x[n..].to_vec())
    }
}

/// Factor (projecting if needed) and draw one sample.
pub fn cholesky_joint_sampler(k1: &KernelMatrix, k2: &KernelMatrix, seed: u64, path: u64) -> Result<FbmPair> {
    JointSampler::projected(k1, k2)?.sample(seed, path)
}

/// Dense Cholesky of `a + ridge·I`; on failure returns the pivot and its value.
fn cholesky(a: &[f64], dim: usize, ridge: f64) -> core::result::Result<Vec<f64>, (usize, f64)> {
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = a[i * dim + j];
            if i == j {
                s += ridge;
            }
            let (ri, rj) = (&l[i * dim..i * dim + j], &l[j * dim..j * dim + j]);
            s -= ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return Err((i, s));
                }
                l[i * dim + i] = sqrt(s);
            } else {
                l[i * dim + j] = s / l[j * dim + j];
            }
        }
    }
    Ok(l)
}
