//! Uniform time grids and functions sampled on them.
//!
//! A [`GridFunction`] is stored as a finite sum of exact power terms
//! `c·t^p` plus a regular part sampled at the nodes `t_1..t_N`. The power
//! terms carry the behaviour at `t = 0`, where weights like `t^{-α}` are
//! singular; fractional operators act on them in closed form and on the
//! regular part by product integration.

use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, pow};

use crate::error::{Error, Result};

/// Uniform grid `t_i = iΔ`, `i = 0..N`, on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    horizon: f64,
    steps: usize,
}

impl Grid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Domain(alloc::format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::Domain("grid needs at least one step".into()));
        }
        Ok(Grid { horizon, steps })
    }

    /// Unit horizon with `steps` cells.
    pub fn unit(steps: usize) -> Self {
        Grid::new(1.0, steps).expect("valid unit grid")
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of cells `N`.
    #[inline]
    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_i`; `t_N` is exactly `T`.
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    /// Nodes `t_0..=t_N`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.node(i)).collect()
    }

    /// The grid with half as many cells (same horizon).
    pub fn coarsened(&self) -> Option<Grid> {
        (self.steps.is_multiple_of(2) && self.steps >= 2)
            .then_some(Grid { horizon: self.horizon, steps: self.steps / 2 })
    }
}

/// Exact term `coeff · t^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTerm {
    pub coeff: f64,
    pub exponent: f64,
}

impl PowerTerm {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if self.exponent == 0.0 {
            self.coeff
        } else {
            self.coeff * pow(t, self.exponent)
        }
    }
}

const EXPONENT_MERGE_TOL: f64 = 1e-12;

/// Real function on a [`Grid`], known at `t_1..t_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    regular: Vec<f64>,
    /// Value of the regular part used at `t = 0` when interpolating.
    origin: f64,
    terms: Vec<PowerTerm>,
}

impl GridFunction {
    /// Build from samples at `t_1..t_N`.
    ///
    /// `at_zero` is the limit at `t = 0` if known; otherwise the first
    /// sample is used as the value on the first cell.
    pub fn from_samples(grid: Grid, values: Vec<f64>, at_zero: Option<f64>) -> Result<Self> {
        if values.len() != grid.steps() {
            return Err(Error::GridMismatch { expected: grid.steps(), found: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: index + 1, value: values[index] });
        }
        let origin = match at_zero {
            Some(v) if v.is_finite() => v,
            Some(v) => return Err(Error::NonFinite { index: 0, value: v }),
            None => values[0],
        };
        Ok(GridFunction { grid, regular: values, origin, terms: Vec::new() })
    }

    /// Sample `f` at the nodes. `f(0)` is used as the limit at zero when finite.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (1..=grid.steps()).map(|i| f(grid.node(i))).collect();
        let at_zero = Some(f(0.0)).filter(|v| v.is_finite());
        Self::from_samples(grid, values, at_zero)
    }

    pub fn zeros(grid: Grid) -> Self {
        GridFunction { grid, regular: vec![0.0; grid.steps()], origin: 0.0, terms: Vec::new() }
    }

    /// The exact power function `coeff · t^exponent`.
    pub fn power(grid: Grid, coeff: f64, exponent: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.push_term(PowerTerm { coeff, exponent });
        f
    }

    /// Assemble from parts; the caller guarantees finiteness.
    pub(crate) fn from_parts(grid: Grid, regular: Vec<f64>, origin: f64, terms: Vec<PowerTerm>) -> Self {
        let mut f = GridFunction { grid, regular, origin, terms: Vec::new() };
        for t in terms {
            f.push_term(t);
        }
        f
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.regular.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.regular.is_empty()
    }

    pub fn terms(&self) -> &[PowerTerm] {
        &self.terms
    }

    pub fn regular(&self) -> &[f64] {
        &self.regular
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    /// Value at node `t_i`, `1 <= i <= N`.
    pub fn value(&self, i: usize) -> f64 {
        let t = self.grid.node(i);
        self.regular[i - 1] + self.terms.iter().map(|p| p.eval(t)).sum::<f64>()
    }

    /// Values at `t_1..t_N`.
    pub fn values(&self) -> Vec<f64> {
        (1..=self.len()).map(|i| self.value(i)).collect()
    }

    /// Limit at `t = 0`, or `None` if a negative power makes it infinite.
    pub fn limit_at_zero(&self) -> Option<f64> {
        let mut acc = self.origin;
        for p in &self.terms {
            if p.exponent < 0.0 {
                return None;
            }
            if p.exponent == 0.0 {
                acc += p.coeff;
            }
        }
        Some(acc)
    }

    /// Values at `t_0..t_N`, using the limit at zero or `t_1` when it diverges.
    pub fn values_with_origin(&self) -> Vec<f64> {
        let vals = self.values();
        let mut out = Vec::with_capacity(vals.len() + 1);
        out.push(self.limit_at_zero().unwrap_or(vals[0]));
        out.extend_from_slice(&vals);
        out
    }

    pub fn sup_norm(&self) -> f64 {
        (1..=self.len()).map(|i| fabs(self.value(i))).fold(0.0, f64::max)
    }

    /// Move the regular part's value at zero into a constant term so the
    /// regular part vanishes at the origin.
    pub fn normalized(&self) -> Self {
        if self.origin == 0.0 {
            return self.clone();
        }
        let mut out = self.clone();
        let c = self.origin;
        out.regular.iter_mut().for_each(|v| *v -= c);
        out.origin = 0.0;
        out.push_term(PowerTerm { coeff: c, exponent: 0.0 });
        out
    }

    /// Evaluate the power terms into the samples, dropping all structure at zero.
    pub fn sampled(&self) -> Self {
        let values = self.values();
        let origin = self.limit_at_zero().unwrap_or(values[0]);
        GridFunction { grid: self.grid, regular: values, origin, terms: Vec::new() }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale_in_place(a);
        out
    }

    pub fn scale_in_place(&mut self, a: f64) {
        self.regular.iter_mut().for_each(|v| *v *= a);
        self.origin *= a;
        self.terms.iter_mut().for_each(|p| p.coeff *= a);
        self.terms.retain(|p| p.coeff != 0.0);
    }

    /// `self + a · other`.
    pub fn axpy(&self, a: f64, other: &GridFunction) -> Result<Self> {
        self.check_same_grid(other)?;
        let mut out = self.clone();
        for (v, w) in out.regular.iter_mut().zip(&other.regular) {
            *v += a * w;
        }
        out.origin += a * other.origin;
        for p in &other.terms {
            out.push_term(PowerTerm { coeff: a * p.coeff, exponent: p.exponent });
        }
        Ok(out)
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    /// Largest pointwise difference at the nodes.
    pub fn max_abs_diff(&self, other: &GridFunction) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok((1..=self.len()).map(|i| fabs(self.value(i) - other.value(i))).fold(0.0, f64::max))
    }

    pub(crate) fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch { expected: self.grid.steps(), found: other.grid.steps() });
        }
        Ok(())
    }

    pub(crate) fn push_term(&mut self, term: PowerTerm) {
        if term.coeff == 0.0 {
            return;
        }
        if let Some(p) = self.terms.iter_mut().find(|p| fabs(p.exponent - term.exponent) < EXPONENT_MERGE_TOL) {
            p.coeff += term.coeff;
        } else {
            self.terms.push(term);
        }
        self.terms.retain(|p| p.coeff != 0.0);
    }

    pub(crate) fn into_parts(self) -> (Grid, Vec<f64>, f64, Vec<PowerTerm>) {
        (self.grid, self.regular, self.origin, self.terms)
    }
}
