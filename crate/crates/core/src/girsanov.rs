//! Girsanov reweighting and assembly of weak solutions.
//!
//! Paths are drawn under a reference measure `P` on which `X = x0 + B1 + B2`
//! is a sum of two fBms driven by one Wiener process `W`. The density
//! `L_T = exp(∫ψ dW − ½∫ψ² dt)` defines the measure `Q` under which the
//! shifted processes `B̃k = Bk − ∫(u or v)` are again fBms and `X` solves
//! `dX = b(t, X) dt + dB̃1 + dB̃2`.

use alloc::format;
use alloc::vec::Vec;

use libm::{exp, fabs, pow, sqrt};

use crate::drift::{
    build_drift_decomposition, classify_case, CaseInfo, Coupling, DecompositionOperator, DriftDecomposition, DriftSpec,
};
use crate::error::{Error, Result, Warning};
use crate::grid::{Grid, GridFunction};
use crate::kernels::{cumulative_integral, fbm_covariance, variance_sigma2, Hurst, KernelMatrix};
use crate::noise::{fbm_pair_from_wiener, sample_wiener, FbmPair, WienerPath};
use crate::special::normal_cdf;

/// Substream flag for the independent noise used by direct simulation.
pub const DIRECT_STREAM: u64 = 1 << 63;

/// Effective sample size below which estimates carry a warning.
const MIN_ESS: f64 = 10.0;

/// Ensembles smaller than this report no standard error.
const MIN_PATHS_FOR_SE: usize = 100;

/// Disagreement (in combined standard errors) that flags the verbatim variant.
const VERBATIM_FLAG_SIGMA: f64 = 5.0;

fn check_grid(expected: &Grid, found: &Grid) -> Result<()> {
    if expected != found {
        return Err(Error::GridMismatch { expected: expected.steps(), found: found.steps() });
    }
    Ok(())
}

/// `f` at `t_0..t_N` with `f(t_0) := f(t_1)`.
fn first_cell_nodes(f: &GridFunction) -> Result<Vec<f64>> {
    let vals = f.values();
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i + 1, value: vals[i] });
    }
    let mut out = Vec::with_capacity(vals.len() + 1);
    out.push(vals[0]);
    out.extend_from_slice(&vals);
    Ok(out)
}

/// `(Σ ψ(t_{j-1}) ΔW_j, Σ ψ(t_{j-1})² Δ)`.
fn ito_sums(psi: &GridFunction, w: &WienerPath) -> Result<(f64, f64)> {
    check_grid(w.grid(), psi.grid())?;
    let nodes = first_cell_nodes(psi)?;
    let dt = w.grid().dt();
    let mut stochastic = 0.0;
    let mut quadratic = 0.0;
    for (p, dw) in nodes.iter().zip(w.increments()) {
        stochastic += p * dw;
        quadratic += p * p * dt;
    }
    Ok((stochastic, quadratic))
}

/// `log L_T` as a left-point Itô sum.
pub fn girsanov_log_density(psi: &GridFunction, w: &WienerPath) -> Result<f64> {
    let (s, q) = ito_sums(psi, w)?;
    Ok(s - 0.5 * q)
}

/// Shifted Wiener and fBm paths at `t_1..t_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedPaths {
    pub w: GridFunction,
    pub b1: GridFunction,
    pub b2: GridFunction,
    /// `‖B̃k − K_{H_k} ΔW̃‖_∞` for `k = 1, 2`.
    pub representation_residuals: [f64; 2],
}

/// One Monte Carlo path with its decomposition and density.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub wiener: WienerPath,
    pub fbm: FbmPair,
    pub x0: f64,
    /// `X = x0 + B1 + B2`; its value at zero is `x0`.
    pub x: GridFunction,
    /// `b(t, X_t)` along the path.
    pub drift_path: GridFunction,
    pub decomposition: DriftDecomposition,
    pub log_density: f64,
    pub shifted: Option<ShiftedPaths>,
    /// `‖X − x0 − ∫b(s, X_s) ds − B̃1 − B̃2‖_∞`, once shifted.
    pub sde_residual: Option<f64>,
}

impl PathBundle {
    pub fn psi(&self) -> &GridFunction {
        &self.decomposition.psi
    }

    pub fn density(&self) -> f64 {
        exp(self.log_density)
    }

    pub fn grid(&self) -> &Grid {
        self.wiener.grid()
    }
}

/// Fill `W̃`, `B̃1`, `B̃2` and the representation residuals.
pub fn shift_paths(mut bundle: PathBundle, k1: &KernelMatrix, k2: &KernelMatrix) -> Result<PathBundle> {
    let grid = *bundle.grid();
    check_grid(&grid, k1.grid())?;
    check_grid(&grid, k2.grid())?;
    let dt = grid.dt();
    let dec = &bundle.decomposition;
    let int_psi = cumulative_integral(&first_cell_nodes(&dec.psi)?, dt);
    let int_u = cumulative_integral(&first_cell_nodes(&dec.u)?, dt);
    let int_v = cumulative_integral(&first_cell_nodes(&dec.v)?, dt);

    let w = bundle.wiener.values();
    let w_tilde: Vec<f64> = w[1..].iter().zip(&int_psi).map(|(a, b)| a - b).collect();
    let b1_tilde: Vec<f64> = bundle.fbm.b1.values().iter().zip(&int_u).map(|(a, b)| a - b).collect();
    let b2_tilde: Vec<f64> = bundle.fbm.b2.values().iter().zip(&int_v).map(|(a, b)| a - b).collect();

    let mut prev = 0.0;
    let dw_tilde: Vec<f64> = w_tilde
        .iter()
        .map(|&v| {
            let d = v - prev;
            prev = v;
            d
        })
        .collect();
    let residual = |k: &KernelMatrix, shifted: &[f64]| -> Result<f64> {
        let rep = k.integrate_increments(&dw_tilde)?;
        Ok(rep.iter().zip(shifted).map(|(a, b)| fabs(a - b)).fold(0.0, f64::max))
    };
    let representation_residuals = [residual(k1, &b1_tilde)?, residual(k2, &b2_tilde)?];

    let int_b = cumulative_integral(&bundle.drift_path.values_with_origin(), dt);
    let x = bundle.x.values();
    let sde_residual =
        (0..grid.steps()).map(|i| fabs(x[i] - bundle.x0 - int_b[i] - b1_tilde[i] - b2_tilde[i])).fold(0.0, f64::max);

    bundle.shifted = Some(ShiftedPaths {
        w: GridFunction::from_samples(grid, w_tilde, Some(0.0))?,
        b1: GridFunction::from_samples(grid, b1_tilde, Some(0.0))?,
        b2: GridFunction::from_samples(grid, b2_tilde, Some(0.0))?,
        representation_residuals,
    });
    bundle.sde_residual = Some(sde_residual);
    Ok(bundle)
}

/// Parameters of one weak-solution experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSetup {
    pub h1: Hurst,
    pub h2: Hurst,
    pub grid: Grid,
    pub x0: f64,
    pub drift: DriftSpec,
    pub tol: f64,
}

/// Kernels, couplings and (optionally) a tabulated decomposition, shared by
/// every path of an ensemble.
#[derive(Debug, Clone)]
pub struct WeakSolutionModel {
    setup: ModelSetup,
    k1: KernelMatrix,
    k2: KernelMatrix,
    coupling: Coupling,
    case: CaseInfo,
    table: Option<DecompositionOperator>,
    warnings: Vec<Warning>,
}

impl WeakSolutionModel {
    pub fn new(setup: ModelSetup) -> Result<Self> {
        if !(setup.tol > 0.0) {
            return Err(Error::Precondition(format!("tolerance must be positive, got {}", setup.tol)));
        }
        if !setup.x0.is_finite() {
            return Err(Error::NonFinite { index: 0, value: setup.x0 });
        }
        let case = classify_case(setup.h1, setup.h2)?;
        let min_h = setup.h1.value().min(setup.h2.value());
        let warnings = setup.drift.admissible(case.tag, setup.grid.horizon(), min_h)?;
        let k1 = KernelMatrix::new(setup.h1, setup.grid);
        let k2 = KernelMatrix::new(setup.h2, setup.grid);
        let coupling = Coupling { c1: k1.normalization(), c2: k2.normalization() };
        Ok(WeakSolutionModel { setup, k1, k2, coupling, case, table: None, warnings })
    }

    /// Precompute the decomposition as a matrix acting on drift samples.
    pub fn tabulated(mut self) -> Result<Self> {
        let s = &self.setup;
        self.table = Some(DecompositionOperator::new(s.grid, s.h1, s.h2, self.coupling, s.tol)?);
        Ok(self)
    }

    pub fn setup(&self) -> &ModelSetup {
        &self.setup
    }

    pub fn kernels(&self) -> (&KernelMatrix, &KernelMatrix) {
        (&self.k1, &self.k2)
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn case(&self) -> CaseInfo {
        self.case
    }

    /// Drift-condition warnings raised when the model was built.
    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    fn decompose(&self, bpath: &GridFunction) -> Result<DriftDecomposition> {
        match &self.table {
            Some(op) => op.apply(&bpath.values_with_origin()),
            None => {
                let s = &self.setup;
                build_drift_decomposition(bpath, s.h1, s.h2, self.coupling, s.tol)
            }
        }
    }

    /// Assemble the weak solution driven by `w`.
    pub fn assemble_from(&self, w: WienerPath) -> Result<PathBundle> {
        let s = &self.setup;
        check_grid(&s.grid, w.grid())?;
        let fbm = fbm_pair_from_wiener(&w, &self.k1, &self.k2)?;
        let xs: Vec<f64> = fbm.b1.values().iter().zip(fbm.b2.values()).map(|(a, b)| s.x0 + a + b).collect();
        let bs: Vec<f64> = xs.iter().enumerate().map(|(i, &x)| s.drift.eval(s.grid.node(i + 1), x)).collect();
        let drift_path = GridFunction::from_samples(s.grid, bs, Some(s.drift.eval(0.0, s.x0)))?;
        let x = GridFunction::from_samples(s.grid, xs, Some(s.x0))?;
        let decomposition = self.decompose(&drift_path)?;
        let log_density = girsanov_log_density(&decomposition.psi, &w)?;
        let bundle = PathBundle {
            wiener: w,
            fbm,
            x0: s.x0,
            x,
            drift_path,
            decomposition,
            log_density,
            shifted: None,
            sde_residual: None,
        };
        shift_paths(bundle, &self.k1, &self.k2)
    }

    /// Assemble path `path` of the ensemble `seed`.
    pub fn assemble(&self, seed: u64, path: u64) -> Result<PathBundle> {
        self.assemble_from(sample_wiener(self.setup.grid, seed, path))
    }

    /// Left-point Euler solution of the SDE driven by the fBm pair of `w`.
    pub fn euler_solution(&self, w: &WienerPath) -> Result<GridFunction> {
        let s = &self.setup;
        check_grid(&s.grid, w.grid())?;
        let fbm = fbm_pair_from_wiener(w, &self.k1, &self.k2)?;
        let (b1, b2) = (fbm.b1.values(), fbm.b2.values());
        let dt = s.grid.dt();
        let mut x = s.x0;
        let mut prev = (0.0, 0.0);
        let mut out = Vec::with_capacity(b1.len());
        for i in 0..b1.len() {
            x += s.drift.eval(s.grid.node(i), x) * dt + (b1[i] - prev.0) + (b2[i] - prev.1);
            prev = (b1[i], b2[i]);
            out.push(x);
        }
        GridFunction::from_samples(s.grid, out, Some(s.x0))
    }
}

/// Spec-level entry point: build path `path` of ensemble `seed`.
pub fn assemble_weak_solution(model: &WeakSolutionModel, seed: u64, path: u64) -> Result<PathBundle> {
    model.assemble(seed, path)
}

/// Which way the densities are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Samples drawn under `P`, expectation wanted under `Q`: weights `L_T`.
    PToQ,
    /// Samples drawn under `Q`, expectation wanted under `P`: weights `1 / L_T`.
    QToP,
}

/// Records of an ensemble together with their log-densities.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEnsemble<T> {
    seed: u64,
    paths: Vec<u64>,
    records: Vec<T>,
    log_densities: Vec<f64>,
}

impl<T> WeightedEnsemble<T> {
    pub fn new(seed: u64) -> Self {
        WeightedEnsemble { seed, paths: Vec::new(), records: Vec::new(), log_densities: Vec::new() }
    }

    pub fn push(&mut self, path: u64, record: T, log_density: f64) -> Result<()> {
        if !log_density.is_finite() {
            return Err(Error::NonFinite { index: self.records.len(), value: log_density });
        }
        self.paths.push(path);
        self.records.push(record);
        self.log_densities.push(log_density);
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn paths(&self) -> &[u64] {
        &self.paths
    }

    pub fn records(&self) -> &[T] {
        &self.records
    }

    pub fn log_densities(&self) -> &[f64] {
        &self.log_densities
    }

    pub fn log_weights(&self, direction: Direction) -> Vec<f64> {
        match direction {
            Direction::PToQ => self.log_densities.clone(),
            Direction::QToP => self.log_densities.iter().map(|l| -l).collect(),
        }
    }

    pub fn weights(&self, direction: Direction) -> Vec<f64> {
        self.log_weights(direction).into_iter().map(exp).collect()
    }
}

impl WeightedEnsemble<PathBundle> {
    pub fn from_bundles(seed: u64, bundles: Vec<PathBundle>) -> Result<Self> {
        let mut ens = WeightedEnsemble::new(seed);
        for b in bundles {
            let (path, ld) = (b.wiener.path_index(), b.log_density);
            ens.push(path, b, ld)?;
        }
        Ok(ens)
    }
}

/// A Monte Carlo estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Absent when fewer than 100 samples were used.
    pub standard_error: Option<f64>,
    pub effective_sample_size: f64,
    pub warnings: Vec<Warning>,
}

impl Estimate {
    /// Standard error, or infinity when none was reported.
    pub fn se(&self) -> f64 {
        self.standard_error.unwrap_or(f64::INFINITY)
    }

    /// `|a − b| / sqrt(se_a² + se_b²)`; zero when both agree exactly.
    pub fn sigma_distance(&self, other: &Estimate) -> f64 {
        let diff = fabs(self.value - other.value);
        if diff == 0.0 {
            return 0.0;
        }
        diff / sqrt(self.se() * self.se() + other.se() * other.se())
    }
}

fn require_samples(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Precondition("an ensemble needs at least one path".into()));
    }
    Ok(())
}

fn jackknife_se(leave_one_out: impl Iterator<Item = f64>, m: usize) -> Option<f64> {
    if m < MIN_PATHS_FOR_SE {
        return None;
    }
    let thetas: Vec<f64> = leave_one_out.collect();
    let mean = thetas.iter().sum::<f64>() / m as f64;
    let ss: f64 = thetas.iter().map(|t| (t - mean) * (t - mean)).sum();
    Some(sqrt(ss * (m - 1) as f64 / m as f64))
}

fn scaled_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = log_weights.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i, value: log_weights[i] });
    }
    let top = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(log_weights.iter().map(|l| exp(l - top)).collect())
}

fn ess(w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    s * s / s2
}

fn ess_warnings(e: f64) -> Vec<Warning> {
    if e < MIN_ESS {
        alloc::vec![Warning::LowEffectiveSampleSize { ess: e }]
    } else {
        Vec::new()
    }
}

/// Plain sample mean with standard error `s / √M`.
pub fn sample_mean(values: &[f64]) -> Result<Estimate> {
    let m = values.len();
    require_samples(m)?;
    let mean = values.iter().sum::<f64>() / m as f64;
    let standard_error = if m >= MIN_PATHS_FOR_SE {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
        Some(sqrt(var / m as f64))
    } else {
        None
    };
    Ok(Estimate { value: mean, standard_error, effective_sample_size: m as f64, warnings: Vec::new() })
}

/// Self-normalised importance-sampling mean `Σ w f / Σ w` with jackknife error.
pub fn self_normalized_mean(values: &[f64], log_weights: &[f64]) -> Result<Estimate> {
    let m = values.len();
    require_samples(m)?;
    if log_weights.len() != m {
        return Err(Error::GridMismatch { expected: m, found: log_weights.len() });
    }
    let w = scaled_weights(log_weights)?;
    let sw: f64 = w.iter().sum();
    let swf: f64 = w.iter().zip(values).map(|(a, b)| a * b).sum();
    let loo = w.iter().zip(values).map(|(&wi, &fi)| (swf - wi * fi) / (sw - wi));
    let e = ess(&w);
    Ok(Estimate {
        value: swf / sw,
        standard_error: jackknife_se(loo, m),
        effective_sample_size: e,
        warnings: ess_warnings(e),
    })
}

/// Self-normalised weighted covariance of `x` and `y` with jackknife error.
pub fn weighted_covariance(x: &[f64], y: &[f64], log_weights: &[f64]) -> Result<Estimate> {
    let m = x.len();
    require_samples(m)?;
    if y.len() != m || log_weights.len() != m {
        return Err(Error::GridMismatch { expected: m, found: y.len().min(log_weights.len()) });
    }
    let w = scaled_weights(log_weights)?;
    let (mut sw, mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..m {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
        sxy += w[i] * x[i] * y[i];
    }
    let cov = |sw: f64, sx: f64, sy: f64, sxy: f64| sxy / sw - (sx / sw) * (sy / sw);
    let loo = (0..m).map(|i| cov(sw - w[i], sx - w[i] * x[i], sy - w[i] * y[i], sxy - w[i] * x[i] * y[i]));
    let e = ess(&w);
    Ok(Estimate {
        value: cov(sw, sx, sy, sxy),
        standard_error: jackknife_se(loo, m),
        effective_sample_size: e,
        warnings: ess_warnings(e),
    })
}

/// Self-normalised estimate of `E[functional]` under the target measure.
pub fn reweighted_expectation<T>(
    functional: impl Fn(&T) -> f64,
    ensemble: &WeightedEnsemble<T>,
    direction: Direction,
) -> Result<Estimate> {
    let values: Vec<f64> = ensemble.records().iter().map(functional).collect();
    self_normalized_mean(&values, &ensemble.log_weights(direction))
}

/// Summary of the log-density distribution, standing in for Novikov's condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailDiagnostics {
    pub max_abs_log_density: f64,
    pub mean_log_density: f64,
    /// Fourth standardised moment of `log L_T` (3 for a Gaussian).
    pub kurtosis: f64,
}

pub fn tail_diagnostics(log_densities: &[f64]) -> Result<TailDiagnostics> {
    let m = log_densities.len();
    require_samples(m)?;
    let mean = log_densities.iter().sum::<f64>() / m as f64;
    let (mut m2, mut m4) = (0.0, 0.0);
    for l in log_densities {
        let d = (l - mean) * (l - mean);
        m2 += d;
        m4 += d * d;
    }
    let (m2, m4) = (m2 / m as f64, m4 / m as f64);
    let kurtosis = if m2 > 0.0 { m4 / (m2 * m2) } else { 0.0 };
    Ok(TailDiagnostics {
        max_abs_log_density: log_densities.iter().map(|l| fabs(*l)).fold(0.0, f64::max),
        mean_log_density: mean,
        kurtosis,
    })
}

/// Per-path ingredients of the three law estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawSample {
    /// `Ψ` of the Euler solution on independent noise.
    pub direct: f64,
    /// `Ψ(x0 + B1 + B2)` on the reference path.
    pub functional: f64,
    pub log_density: f64,
    /// `−∫ψ dW + (3/2)∫ψ² dt`.
    pub verbatim_log_weight: f64,
}

/// Draw path `path` of all three law estimators.
pub fn law_sample(
    model: &WeakSolutionModel,
    functional: &impl Fn(&GridFunction) -> f64,
    seed: u64,
    path: u64,
) -> Result<LawSample> {
    let bundle = model.assemble(seed, path)?;
    let (s, q) = ito_sums(bundle.psi(), &bundle.wiener)?;
    let direct = model.euler_solution(&sample_wiener(model.setup().grid, seed, path | DIRECT_STREAM))?;
    Ok(LawSample {
        direct: functional(&direct),
        functional: functional(&bundle.x),
        log_density: bundle.log_density,
        verbatim_log_weight: -s + 1.5 * q,
    })
}

/// The three estimates of `E_Q[Ψ(X)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LawReport {
    /// (a) direct simulation of the SDE.
    pub direct: Estimate,
    /// (b) plain mean of `Ψ · exp(−∫ψ dW + (3/2)∫ψ²)`.
    pub verbatim: Estimate,
    /// (c) self-normalised change of measure with `L_T`.
    pub exact: Estimate,
    pub direct_vs_exact_sigma: f64,
    pub verbatim_vs_exact_sigma: f64,
    /// Set when (b) and (c) differ by more than five combined standard errors.
    pub verbatim_flagged: bool,
    pub tails: TailDiagnostics,
}

impl LawReport {
    pub fn from_samples(samples: &[LawSample]) -> Result<Self> {
        require_samples(samples.len())?;
        let direct: Vec<f64> = samples.iter().map(|s| s.direct).collect();
        let f: Vec<f64> = samples.iter().map(|s| s.functional).collect();
        let ld: Vec<f64> = samples.iter().map(|s| s.log_density).collect();
        let verbatim: Vec<f64> = samples.iter().map(|s| s.functional * exp(s.verbatim_log_weight)).collect();
        let direct = sample_mean(&direct)?;
        let verbatim = sample_mean(&verbatim)?;
        let exact = self_normalized_mean(&f, &ld)?;
        let verbatim_vs_exact_sigma = verbatim.sigma_distance(&exact);
        Ok(LawReport {
            direct_vs_exact_sigma: direct.sigma_distance(&exact),
            verbatim_vs_exact_sigma,
            verbatim_flagged: verbatim_vs_exact_sigma > VERBATIM_FLAG_SIGMA,
            tails: tail_diagnostics(&ld)?,
            direct,
            verbatim,
            exact,
        })
    }
}

/// Run the three law estimators over paths `0..m` of `seed`.
pub fn law_equality_check(
    functional: impl Fn(&GridFunction) -> f64,
    model: &WeakSolutionModel,
    m: usize,
    seed: u64,
) -> Result<LawReport> {
    let samples = (0..m as u64).map(|p| law_sample(model, &functional, seed, p)).collect::<Result<Vec<_>>>()?;
    LawReport::from_samples(&samples)
}

/// `g(t, y) = 1{lower <= y <= lower + width}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorWindow {
    pub lower: f64,
    pub width: f64,
}

impl IndicatorWindow {
    pub fn contains(&self, y: f64) -> bool {
        y >= self.lower && y <= self.lower + self.width
    }

    /// `(∫∫ g^ρ)^{1/ρ} = (T·width)^{1/ρ}`.
    pub fn norm(&self, horizon: f64, rho: f64) -> f64 {
        pow(horizon * self.width, 1.0 / rho)
    }
}

fn trapezoid(values_with_origin: &[f64], dt: f64) -> f64 {
    let n = values_with_origin.len();
    let inner: f64 = values_with_origin[1..n - 1].iter().sum();
    dt * (0.5 * (values_with_origin[0] + values_with_origin[n - 1]) + inner)
}

/// `∫_0^T g(t, X_t) dt` for each window, by the trapezoid rule on the nodes.
pub fn occupation_times(x: &GridFunction, windows: &[IndicatorWindow]) -> Vec<f64> {
    let xs = x.values_with_origin();
    let dt = x.grid().dt();
    windows
        .iter()
        .map(|w| {
            let hits: Vec<f64> = xs.iter().map(|&y| if w.contains(y) { 1.0 } else { 0.0 }).collect();
            trapezoid(&hits, dt)
        })
        .collect()
}

/// `∫_0^T P(x0 + G_t ∈ window) dt` with `G_t ~ N(0, σ²(t))`, same quadrature.
pub fn gaussian_occupation(k1: &KernelMatrix, k2: &KernelMatrix, x0: f64, window: IndicatorWindow) -> Result<f64> {
    let grid = *k1.grid();
    check_grid(&grid, k2.grid())?;
    let mut probs = Vec::with_capacity(grid.steps() + 1);
    probs.push(if window.contains(x0) { 1.0 } else { 0.0 });
    for i in 1..=grid.steps() {
        let sd = sqrt(variance_sigma2(k1, k2, i)?);
        let (lo, hi) = (window.lower - x0, window.lower + window.width - x0);
        probs.push(normal_cdf(hi / sd) - normal_cdf(lo / sd));
    }
    Ok(trapezoid(&probs, grid.dt()))
}

/// Per-path ingredients of the Krylov experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct KrylovSample {
    pub occupation: Vec<f64>,
    pub log_density: f64,
}

pub fn krylov_sample(
    model: &WeakSolutionModel,
    windows: &[IndicatorWindow],
    seed: u64,
    path: u64,
) -> Result<KrylovSample> {
    let bundle = model.assemble(seed, path)?;
    Ok(KrylovSample { occupation: occupation_times(&bundle.x, windows), log_density: bundle.log_density })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovRow {
    pub window: IndicatorWindow,
    /// `E_Q[∫ g(t, X_t) dt]`, reweighted.
    pub lhs: Estimate,
    pub rhs: f64,
    /// `lhs / rhs`, absent when `rhs = 0`.
    pub ratio: Option<f64>,
    /// Unweighted mean of the occupation time: `X` is Gaussian under `P`.
    pub gaussian_mc: Estimate,
    pub gaussian_exact: f64,
    pub gaussian_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovReport {
    pub rho: f64,
    pub rows: Vec<KrylovRow>,
    pub tails: TailDiagnostics,
}

impl KrylovReport {
    /// `max ratio / min ratio` over rows with a ratio.
    pub fn ratio_spread(&self) -> Option<f64> {
        let r: Vec<f64> = self.rows.iter().filter_map(|row| row.ratio).collect();
        if r.is_empty() {
            return None;
        }
        let hi = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(hi / lo)
    }
}

/// `ρ` must exceed `1 + min(H1, H2)`.
pub fn check_krylov_exponent(rho: f64, h1: Hurst, h2: Hurst) -> Result<()> {
    let bound = 1.0 + h1.value().min(h2.value());
    if rho.is_finite() && rho > bound {
        Ok(())
    } else {
        Err(Error::Precondition(format!("Krylov exponent rho = {rho} must exceed 1+\\min(H_1,H_2) = {bound}")))
    }
}

impl KrylovReport {
    pub fn from_samples(
        model: &WeakSolutionModel,
        rho: f64,
        windows: &[IndicatorWindow],
        samples: &[KrylovSample],
    ) -> Result<Self> {
        let s = model.setup();
        check_krylov_exponent(rho, s.h1, s.h2)?;
        require_samples(samples.len())?;
        let ld: Vec<f64> = samples.iter().map(|k| k.log_density).collect();
        let (k1, k2) = model.kernels();
        let mut rows = Vec::with_capacity(windows.len());
        for (j, &window) in windows.iter().enumerate() {
            let occ: Vec<f64> = samples.iter().map(|k| k.occupation[j]).collect();
            let lhs = self_normalized_mean(&occ, &ld)?;
            let rhs = window.norm(s.grid.horizon(), rho);
            let ratio = (rhs > 0.0).then_some(lhs.value / rhs);
            let gaussian_mc = sample_mean(&occ)?;
            let gaussian_exact = gaussian_occupation(k1, k2, s.x0, window)?;
            let diff = fabs(gaussian_mc.value - gaussian_exact);
            let gaussian_sigma = if diff == 0.0 { 0.0 } else { diff / gaussian_mc.se() };
            rows.push(KrylovRow { window, lhs, rhs, ratio, gaussian_mc, gaussian_exact, gaussian_sigma });
        }
        Ok(KrylovReport { rho, rows, tails: tail_diagnostics(&ld)? })
    }
}

/// Krylov ratio ladder and Gaussian cross-check over paths `0..m` of `seed`.
pub fn krylov_experiment(
    model: &WeakSolutionModel,
    rho: f64,
    windows: &[IndicatorWindow],
    m: usize,
    seed: u64,
) -> Result<KrylovReport> {
    let s = model.setup();
    check_krylov_exponent(rho, s.h1, s.h2)?;
    let samples = (0..m as u64).map(|p| krylov_sample(model, windows, seed, p)).collect::<Result<Vec<_>>>()?;
    KrylovReport::from_samples(model, rho, windows, &samples)
}

/// `R_H(s, t)` for comparison with weighted covariances of `B̃`.
pub fn target_covariance(h: Hurst, s: f64, t: f64) -> f64 {
    fbm_covariance(h, s, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn model(h1: f64, h2: f64, drift: DriftSpec, n: usize) -> WeakSolutionModel {
        WeakSolutionModel::new(ModelSetup {
            h1: Hurst::new(h1).unwrap(),
            h2: Hurst::new(h2).unwrap(),
            grid: Grid::unit(n),
            x0: 0.0,
            drift,
            tol: 1e-10,
        })
        .unwrap()
    }

    #[test]
    fn zero_psi_has_unit_density() {
        let g = Grid::unit(32);
        let w = sample_wiener(g, 1, 0);
        assert_eq!(girsanov_log_density(&GridFunction::zeros(g), &w).unwrap(), 0.0);
    }

    #[test]
    fn constant_psi_closed_form() {
        let g = Grid::new(2.0, 64).unwrap();
        let w = sample_wiener(g, 5, 3);
        let c = 0.7;
        let psi = GridFunction::from_fn(g, |_| c).unwrap();
        let want = c * w.terminal() - 0.5 * c * c * 2.0;
        assert!((girsanov_log_density(&psi, &w).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn psi_on_other_grid_is_rejected() {
        let w = sample_wiener(Grid::unit(32), 1, 0);
        assert!(girsanov_log_density(&GridFunction::zeros(Grid::unit(64)), &w).is_err());
    }

    #[test]
    fn zero_drift_leaves_paths_unshifted() {
        let m = model(0.3, 0.7, DriftSpec::Constant { c: 0.0 }, 64);
        let b = m.assemble(3, 0).unwrap();
        assert_eq!(b.log_density, 0.0);
        let s = b.shifted.as_ref().unwrap();
        assert_eq!(s.b1, b.fbm.b1);
        assert_eq!(s.b2, b.fbm.b2);
        assert_eq!(s.w.values()[..], b.wiener.values()[1..]);
        assert!(b.sde_residual.unwrap() < 1e-12);
        assert_eq!(b.x.origin(), 0.0);
    }

    #[test]
    fn self_normalized_constant_is_exact() {
        let lw: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let e = self_normalized_mean(&vec![1.0; 200], &lw).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.standard_error, Some(0.0));
    }

    #[test]
    fn unit_weights_reduce_to_plain_mean() {
        let v: Vec<f64> = (0..300).map(|i| (i as f64).cos()).collect();
        let a = self_normalized_mean(&v, &vec![0.0; 300]).unwrap();
        let b = sample_mean(&v).unwrap();
        assert!((a.value - b.value).abs() < 1e-14);
        assert!((a.se() - b.se()).abs() < 1e-12);
    }

    #[test]
    fn small_ensembles_have_no_standard_error() {
        assert_eq!(sample_mean(&[1.0, 2.0]).unwrap().standard_error, None);
        assert!(sample_mean(&[]).is_err());
    }

    #[test]
    fn collapsed_weights_warn() {
        let mut lw = vec![0.0; 200];
        lw[0] = 50.0;
        let e = self_normalized_mean(&vec![1.0; 200], &lw).unwrap();
        assert!(matches!(e.warnings[..], [Warning::LowEffectiveSampleSize { .. }]));
    }

    #[test]
    fn krylov_exponent_bound() {
        let (a, b) = (Hurst::new(0.3).unwrap(), Hurst::new(0.7).unwrap());
        let err = check_krylov_exponent(1.2, a, b).unwrap_err();
        assert!(format!("{err}").contains("1+\\min(H_1,H_2)"));
        assert!(check_krylov_exponent(1.5, a, b).is_ok());
    }

    #[test]
    fn empty_window_has_zero_sides() {
        let m = model(0.3, 0.7, DriftSpec::Constant { c: 0.0 }, 32);
        let w = [IndicatorWindow { lower: 0.0, width: 0.0 }, IndicatorWindow { lower: 5.0, width: 0.5 }];
        let r = krylov_experiment(&m, 1.5, &w, 20, 1).unwrap();
        assert_eq!(r.rows[0].rhs, 0.0);
        assert_eq!(r.rows[0].ratio, None);
        assert_eq!(r.rows[1].lhs.value, 0.0);
    }

    #[test]
    fn jump_drift_rejected_for_both_low() {
        let setup = ModelSetup {
            h1: Hurst::new(0.4).unwrap(),
            h2: Hurst::new(0.1).unwrap(),
            grid: Grid::unit(32),
            x0: 0.0,
            drift: DriftSpec::Sign { c: 1.0 },
            tol: 1e-8,
        };
        assert!(matches!(WeakSolutionModel::new(setup), Err(Error::Unsupported(_))));
    }
}
