//! The Volterra operator `K_H`, its inverse, the cell-integrated kernel
//! matrix and the covariances derived from it.
//!
//! Conventions: `(K_H h)(t) = ∫_0^t K_H(t,s) h(s) ds` with
//!
//! * `H < ½`: `K_H = c_H · I^{2H} s^{½-H} I^{½-H} s^{H-½}`
//! * `H > ½`: `K_H = c_H · I^1 s^{H-½} I^{H-½} s^{½-H}`
//! * `H = ½`: `K_H = I^1`
//!
//! where `c_H` is fixed numerically so that `Var(B^H_T) = T^{2H}`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, pow, sqrt};

use crate::error::{Checked, Error, Result};
use crate::frac_ops::{
    apply_chain, cumulative_trapezoid, riemann_liouville_derivative, riemann_liouville_integral, Atom, OperatorChain,
    GL_NODES, GL_WEIGHTS,
};
use crate::grid::{Grid, GridFunction};
use crate::special::{beta, incomplete_beta_lower, rgamma};

/// Hurst parameter `H ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 1.0 {
            Ok(Hurst(h))
        } else {
            Err(Error::Domain(format!("Hurst parameter must lie in (0, 1), got {h}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `|H - ½|`.
    #[inline]
    pub fn alpha(self) -> f64 {
        fabs(self.0 - 0.5)
    }

    #[inline]
    pub fn is_half(self) -> bool {
        self.0 == 0.5
    }
}

/// Covariance of fBm normalized to `Var(B^H_t) = t^{2H}`.
pub fn fbm_covariance(h: Hurst, t: f64, s: f64) -> f64 {
    let e = 2.0 * h.0;
    0.5 * (pow(t, e) + pow(s, e) - pow(fabs(t - s), e))
}

/// The unnormalized operator chain of `K_H` (`None` for `H = ½`, where it is `I^1`).
pub fn kernel_chain(h: Hurst) -> Option<OperatorChain> {
    let hv = h.0;
    let atoms = if hv < 0.5 {
        vec![Atom::Integral(2.0 * hv), Atom::Weight(0.5 - hv), Atom::Integral(0.5 - hv), Atom::Weight(hv - 0.5)]
    } else if hv > 0.5 {
        vec![Atom::Integral(1.0), Atom::Weight(hv - 0.5), Atom::Integral(hv - 0.5), Atom::Weight(0.5 - hv)]
    } else {
        return None;
    };
    Some(OperatorChain::new(atoms).expect("kernel chain orders lie in (0, 1]"))
}

/// An absolutely continuous grid function together with its density.
#[derive(Debug, Clone, PartialEq)]
pub struct Antiderivative {
    values: GridFunction,
    density: Option<GridFunction>,
}

impl Antiderivative {
    /// `∫_0^t density`, computed by the trapezoid rule on the regular part.
    pub fn from_density(density: GridFunction) -> Result<Self> {
        let values = riemann_liouville_integral(&density, 1.0)?;
        Ok(Antiderivative { values, density: Some(density) })
    }

    /// Values only; [`apply_kh_inverse`] will refuse it.
    pub fn from_values(values: GridFunction) -> Self {
        Antiderivative { values, density: None }
    }

    pub fn values(&self) -> &GridFunction {
        &self.values
    }

    pub fn density(&self) -> Option<&GridFunction> {
        self.density.as_ref()
    }
}

/// Lower-triangular `a[i][j] = ∫_{t_{j-1}}^{t_j} K_H(t_i, s) ds`, `1 <= j <= i <= N`.
///
/// The smooth power weights of the chain are replaced by their cell
/// averages; the singular factors `(t-s)^{β-1}` are then integrated exactly,
/// so each column keeps the right mass near the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    grid: Grid,
    hurst: Hurst,
    normalization: f64,
    weights: Vec<f64>,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i - 1) / 2
}

/// Cell average of `t^e` over `[t_{k-1}, t_k]`.
fn cell_average(grid: &Grid, e: f64, k: usize) -> f64 {
    let (a, b) = (grid.node(k - 1), grid.node(k));
    (pow(b, e + 1.0) - pow(a, e + 1.0)) / ((e + 1.0) * grid.dt())
}

impl KernelMatrix {
    pub fn new(hurst: Hurst, grid: Grid) -> Self {
        let mut weights = unnormalized_weights(hurst, &grid);
        let normalization = if hurst.is_half() {
            1.0
        } else {
            let n = grid.steps();
            let row = &weights[row_start(n)..row_start(n + 1)];
            let var: f64 = row.iter().map(|a| a * a).sum::<f64>() / grid.dt();
            let c = sqrt(pow(grid.horizon(), 2.0 * hurst.0) / var);
            assert!(c.is_finite() && c > 0.0, "kernel calibration produced {c}");
            weights.iter_mut().for_each(|w| *w *= c);
            c
        };
        KernelMatrix { grid, hurst, normalization, weights }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn hurst(&self) -> Hurst {
        self.hurst
    }

    /// The calibrated constant `c_H`.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Row `i` (`1 <= i <= N`): entries `a[i][1..=i]`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[row_start(i)..row_start(i + 1)]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if j == 0 || j > i {
            0.0
        } else {
            self.row(i)[j - 1]
        }
    }

    /// All nonzero entries as `(row, col, weight)`, row-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (1..=self.grid.steps()).flat_map(move |i| self.row(i).iter().enumerate().map(move |(j, &w)| (i, j + 1, w)))
    }

    /// `Σ_{j<=i} a[i][j] ΔW_j / Δ` for `i = 1..N`.
    pub fn integrate_increments(&self, increments: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.steps();
        if increments.len() != n {
            return Err(Error::GridMismatch { expected: n, found: increments.len() });
        }
        let inv = 1.0 / self.grid.dt();
        Ok((1..=n).map(|i| inv * dot(self.row(i), increments)).collect())
    }

    /// `Σ_k a[i][k] a[j][k] / Δ`; zero if either index is 0.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        row_product(self, i, self, j)
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut tail = 0.0;
    for k in 4 * chunks..n {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn row_product(k1: &KernelMatrix, i: usize, k2: &KernelMatrix, j: usize) -> f64 {
    if i == 0 || j == 0 {
        return 0.0;
    }
    let (r1, r2) = (k1.row(i), k2.row(j));
    dot(r1, r2) / k1.grid.dt()
}

fn unnormalized_weights(hurst: Hurst, grid: &Grid) -> Vec<f64> {
    let n = grid.steps();
    let dt = grid.dt();
    let mut w = vec![0.0; row_start(n + 1)];
    let h = hurst.0;
    if h == 0.5 {
        w.iter_mut().for_each(|x| *x = dt);
        return w;
    }
    // inner weight s^{e_in}, fractional integral of order β, outer weight r^{e_out},
    // then an integral of order γ
    let (e_in, b, e_out, g) =
        if h < 0.5 { (h - 0.5, 0.5 - h, 0.5 - h, 2.0 * h) } else { (0.5 - h, h - 0.5, h - 0.5, 1.0) };
    let inner: Vec<f64> = (1..=n).map(|j| cell_average(grid, e_in, j)).collect();
    let outer: Vec<f64> = (1..=n).map(|k| cell_average(grid, e_out, k)).collect();
    if g == 1.0 {
        // cell integrals of (r - t_{j-1})_+^β - (r - t_j)_+^β are a Toeplitz sequence
        let b1 = b + 1.0;
        let toeplitz: Vec<f64> = (0..n)
            .map(|q| {
                if q == 0 {
                    1.0
                } else {
                    let qf = q as f64;
                    pow(qf + 1.0, b1) - 2.0 * pow(qf, b1) + pow(qf - 1.0, b1)
                }
            })
            .collect();
        let scale = pow(dt, b1) * rgamma(b + 2.0);
        for j in 1..=n {
            let c = scale * inner[j - 1];
            let mut acc = 0.0;
            for i in j..=n {
                acc += outer[i - 1] * toeplitz[i - j];
                w[row_start(i) + j - 1] = c * acc;
            }
        }
    } else {
        let table = SingularMoments::new(g, b, n);
        let scale = pow(dt, g + b) * rgamma(g) * rgamma(b + 1.0);
        for j in 1..=n {
            let c = scale * inner[j - 1];
            for i in j..=n {
                let p = i - j;
                let row = table.row(p);
                let m = &outer[j - 1..i];
                w[row_start(i) + j - 1] = c * dot(row, m);
            }
        }
    }
    w
}

/// `d(p, q) = G(p+1, q+1) - G(p, q)` for `0 <= q <= p < n`, where
/// `G(p, q) = ∫_{q-1}^{q} (p-x)^{γ-1} x^β dx` and `G(·, 0) = 0`.
struct SingularMoments {
    data: Vec<f64>,
}

impl SingularMoments {
    fn new(g: f64, b: f64, n: usize) -> Self {
        // interior cells by Gauss–Legendre; (p-x)^{γ-1} depends only on p-q and
        // x^β only on q, so both factors are tabulated once
        let far: Vec<[f64; 8]> =
            (0..=n).map(|d| core::array::from_fn(|l| pow(d as f64 + 1.0 - GL_NODES[l], g - 1.0))).collect();
        let near: Vec<[f64; 8]> =
            (0..=n).map(|q| core::array::from_fn(|l| GL_WEIGHTS[l] * pow(q as f64 - 1.0 + GL_NODES[l], b))).collect();
        let cell = |p: usize, q: usize| -> f64 {
            if q == 0 {
                return 0.0;
            }
            let pf = p as f64;
            if p == 1 {
                beta(b + 1.0, g)
            } else if q == 1 {
                pow(pf, g + b) * incomplete_beta_lower(1.0 / pf, b + 1.0, g)
            } else if q == p {
                pow(pf, g + b) * incomplete_beta_lower(1.0 / pf, g, b + 1.0)
            } else {
                let (f, m) = (&far[p - q], &near[q]);
                (0..8).map(|l| f[l] * m[l]).sum()
            }
        };
        let mut data = vec![0.0; n * (n + 1) / 2];
        // G(p, ·) is reused for consecutive p, so keep the previous row
        let mut prev: Vec<f64> = Vec::new();
        for p in 0..n {
            let cur: Vec<f64> = (0..=p + 1).map(|q| cell(p + 1, q)).collect();
            let base = p * (p + 1) / 2;
            for q in 0..=p {
                let old = if q < prev.len() { prev[q] } else { 0.0 };
                data[base + q] = cur[q + 1] - old;
            }
            prev = cur;
        }
        SingularMoments { data }
    }

    fn row(&self, p: usize) -> &[f64] {
        let base = p * (p + 1) / 2;
        &self.data[base..base + p + 1]
    }
}

/// The calibrated constant `c_H` on `grid`.
pub fn calibrate_normalization(hurst: Hurst, grid: Grid) -> f64 {
    KernelMatrix::new(hurst, grid).normalization()
}

/// `∫_0^{t_i ∧ t_j} K_{H1}(t_i, r) K_{H2}(t_j, r) dr` from two kernel matrices.
pub fn cross_covariance(k1: &KernelMatrix, k2: &KernelMatrix, i: usize, j: usize) -> Result<f64> {
    if k1.grid != k2.grid {
        return Err(Error::GridMismatch { expected: k1.grid.steps(), found: k2.grid.steps() });
    }
    Ok(row_product(k1, i, k2, j))
}

/// `σ²(t_i) = Var(B^{H1}_{t_i} + B^{H2}_{t_i})`.
pub fn variance_sigma2(k1: &KernelMatrix, k2: &KernelMatrix, i: usize) -> Result<f64> {
    let t = k1.grid.node(i);
    Ok(fbm_covariance(k1.hurst, t, t) + fbm_covariance(k2.hurst, t, t) + 2.0 * cross_covariance(k1, k2, i, i)?)
}

/// `K_H h` scaled by `c`, together with its density.
pub fn apply_kh(h: &GridFunction, hurst: Hurst, c: f64) -> Result<Checked<Antiderivative>> {
    let Some(chain) = kernel_chain(hurst) else {
        return Ok(Checked::clean(Antiderivative::from_density(h.clone())?));
    };
    // strip the outermost integral; its argument (or D^{1-2H} of it) is the density
    let inner = OperatorChain::new(chain.atoms()[1..].to_vec())?;
    let Checked { value: f, mut warnings } = apply_chain(&inner, h)?;
    let (values, density) = if hurst.0 > 0.5 {
        (riemann_liouville_integral(&f, 1.0)?, f)
    } else {
        let v = riemann_liouville_integral(&f, 2.0 * hurst.0)?;
        let d = riemann_liouville_derivative(&f, 1.0 - 2.0 * hurst.0)?;
        warnings.extend(d.warnings);
        (v, d.value)
    };
    Ok(Checked { value: Antiderivative { values: values.scaled(c), density: Some(density.scaled(c)) }, warnings })
}

/// `K_H^{-1} h` acting on the density `h'`, divided by `c`.
pub fn apply_kh_inverse(h: &Antiderivative, hurst: Hurst, c: f64) -> Result<Checked<GridFunction>> {
    let density = h
        .density
        .as_ref()
        .ok_or_else(|| Error::Precondition("K_H^{-1} needs the density h' of its argument".into()))?;
    let hv = hurst.0;
    let atoms = if hv < 0.5 {
        vec![Atom::Weight(hv - 0.5), Atom::Integral(0.5 - hv), Atom::Weight(0.5 - hv)]
    } else if hv > 0.5 {
        vec![Atom::Weight(hv - 0.5), Atom::Derivative(hv - 0.5), Atom::Weight(0.5 - hv)]
    } else {
        return Ok(Checked::clean(density.scaled(1.0 / c)));
    };
    let chain = OperatorChain::scaled(atoms, 1.0 / c)?;
    apply_chain(&chain, density)
}

/// Cumulative trapezoid of samples at `t_0..t_N`, returned at `t_1..t_N`.
pub fn cumulative_integral(values_with_origin: &[f64], dt: f64) -> Vec<f64> {
    cumulative_trapezoid(values_with_origin[0], &values_with_origin[1..], dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hurst_validation() {
        assert!(Hurst::new(0.0).is_err());
        assert!(Hurst::new(1.0).is_err());
        assert!((Hurst::new(0.3).unwrap().alpha() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn covariance_examples() {
        let h7 = Hurst::new(0.7).unwrap();
        assert!((fbm_covariance(h7, 1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((fbm_covariance(h7, 1.0, 0.5) - 0.5).abs() < 1e-15);
        let half = Hurst::new(0.5).unwrap();
        assert!((fbm_covariance(half, 1.0, 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(fbm_covariance(h7, 0.3, 0.9), fbm_covariance(h7, 0.9, 0.3));
    }

    #[test]
    fn half_kernel_is_indicator() {
        let g = Grid::unit(16);
        let k = KernelMatrix::new(Hurst::new(0.5).unwrap(), g);
        assert_eq!(k.normalization(), 1.0);
        assert!(k.entries().all(|(_, _, w)| w == g.dt()));
        assert!((k.covariance(16, 8) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn calibrated_terminal_variance() {
        for &h in &[0.2, 0.35, 0.65, 0.8] {
            let g = Grid::unit(64);
            let k = KernelMatrix::new(Hurst::new(h).unwrap(), g);
            assert!((k.covariance(64, 64) - 1.0).abs() < 1e-12);
            assert_eq!(k.weight(3, 4), 0.0);
        }
    }

    #[test]
    fn singular_moments_sum_to_beta() {
        // rebuild G(p, q) from the differences; Σ_q G(p, q) = p^{γ+β} B(β+1, γ)
        let (g, b) = (0.6, 0.2);
        let n = 40;
        let t = SingularMoments::new(g, b, n);
        let mut rows: Vec<Vec<f64>> = vec![vec![0.0]];
        for p in 0..n {
            let prev = &rows[p];
            let next: Vec<f64> = (0..=p + 1)
                .map(|q| if q == 0 { 0.0 } else { t.row(p)[q - 1] + prev.get(q - 1).copied().unwrap_or(0.0) })
                .collect();
            rows.push(next);
        }
        for p in [1usize, 2, 7, 40] {
            let total: f64 = rows[p].iter().sum();
            let want = pow(p as f64, g + b) * beta(b + 1.0, g);
            assert!(fabs(total - want) < 1e-9 * want, "p = {p}: {total} vs {want}");
        }
    }

    #[test]
    fn inverse_requires_density() {
        let g = Grid::unit(8);
        let h = Antiderivative::from_values(GridFunction::zeros(g));
        let err = apply_kh_inverse(&h, Hurst::new(0.3).unwrap(), 1.0).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
