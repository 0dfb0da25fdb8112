//! Decomposition of a drift path into `u + v = b` with a common `ψ`.
//!
//! For each ordering of the Hurst parameters the smaller-regularity side is
//! inverted through a Neumann series of a fractional-operator chain, and the
//! other side is obtained from it. All kernels are the calibrated ones of
//! [`crate::kernels`], so `K_{H_k} = c_k · (chain)` and the couplings carry the
//! ratio of the two constants.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::{cos, fabs, fmin, pow};

use crate::error::{Checked, Error, Result, Warning};
use crate::frac_ops::{apply_chain, Atom, OperatorChain};
use crate::grid::{Grid, GridFunction};
use crate::kernels::{apply_kh_inverse, calibrate_normalization, Antiderivative, Hurst};
use crate::special::{gamma, ln_gamma, rgamma};

/// Default cap on the number of Neumann terms.
pub const DEFAULT_MAX_TERMS: usize = 64;

/// Number of consecutive non-decreasing term norms that counts as divergence.
const STALL_LIMIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseTag {
    HalfAndLow,
    HalfAndHigh,
    Mixed,
    BothLow,
    BothHigh,
}

impl CaseTag {
    pub fn name(self) -> &'static str {
        match self {
            CaseTag::HalfAndLow => "HALF_AND_LOW",
            CaseTag::HalfAndHigh => "HALF_AND_HIGH",
            CaseTag::Mixed => "MIXED",
            CaseTag::BothLow => "BOTH_LOW",
            CaseTag::BothHigh => "BOTH_HIGH",
        }
    }

    /// Whether the construction differentiates the drift, so that (A2)
    /// regularity is needed.
    pub fn needs_hoelder_drift(self) -> bool {
        matches!(self, CaseTag::BothLow | CaseTag::BothHigh)
    }
}

impl core::fmt::Display for CaseTag {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Result of [`classify_case`].
///
/// The exponents refer to the canonical labelling of the case: the
/// half-Brownian index first in the `HALF_*` cases, `H1 < H2` for `MIXED`,
/// `α2 > α1` for `BOTH_LOW` and `α1 > α2` for `BOTH_HIGH`. `swapped` says
/// whether the caller's labels had to be exchanged to reach it. In the
/// `HALF_*` cases `alpha1 = 0` and `alpha2 = |H - ½|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseInfo {
    pub tag: CaseTag,
    pub alpha1: f64,
    pub alpha2: f64,
    pub swapped: bool,
}

impl CaseInfo {
    /// The canonical pair `(H1, H2)` for the caller's `(h1, h2)`.
    pub fn canonical(&self, h1: Hurst, h2: Hurst) -> (Hurst, Hurst) {
        if self.swapped {
            (h2, h1)
        } else {
            (h1, h2)
        }
    }
}

pub fn classify_case(h1: Hurst, h2: Hurst) -> Result<CaseInfo> {
    let (a, b) = (h1.value(), h2.value());
    if a == b {
        return Err(Error::Unsupported(format!(
            "equal Hurst parameters H1 = H2 = {a}; the construction needs two different indices"
        )));
    }
    let info = |tag, alpha1, alpha2, swapped| Ok(CaseInfo { tag, alpha1, alpha2, swapped });
    if h1.is_half() || h2.is_half() {
        let swapped = h2.is_half();
        let other = if swapped { a } else { b };
        let tag = if other < 0.5 { CaseTag::HalfAndLow } else { CaseTag::HalfAndHigh };
        return info(tag, 0.0, fabs(other - 0.5), swapped);
    }
    match (a < 0.5, b < 0.5) {
        (true, false) => info(CaseTag::Mixed, 0.5 - a, b - 0.5, false),
        (false, true) => info(CaseTag::Mixed, 0.5 - b, a - 0.5, true),
        (true, true) => {
            // canonical: α2 > α1, i.e. H2 < H1
            let swapped = a < b;
            let (hi, lo) = if swapped { (b, a) } else { (a, b) };
            info(CaseTag::BothLow, 0.5 - hi, 0.5 - lo, swapped)
        }
        (false, false) => {
            // canonical: α1 > α2, i.e. H1 > H2
            let swapped = a < b;
            let (hi, lo) = if swapped { (b, a) } else { (a, b) };
            info(CaseTag::BothHigh, hi - 0.5, lo - 0.5, swapped)
        }
    }
}

/// Drift coefficient `b(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftSpec {
    /// `b ≡ c`.
    Constant { c: f64 },
    /// `c · sign(x)`, bounded and measurable with a jump at 0.
    Sign { c: f64 },
    /// `c · x`.
    LinearGrowth { c: f64 },
    /// `c · (min(|x|, 1)^β + t^γ)`, Hölder of order `β` in space and `γ` in time.
    Hoelder { beta: f64, gamma: f64, c: f64 },
    /// `c · cos(x)`.
    Cosine { c: f64 },
}

impl DriftSpec {
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match *self {
            DriftSpec::Constant { c } => c,
            DriftSpec::Sign { c } => {
                if x > 0.0 {
                    c
                } else if x < 0.0 {
                    -c
                } else {
                    0.0
                }
            }
            DriftSpec::LinearGrowth { c } => c * x,
            DriftSpec::Hoelder { beta, gamma, c } => c * (pow(fmin(fabs(x), 1.0), beta) + pow(t, gamma)),
            DriftSpec::Cosine { c } => c * cos(x),
        }
    }

    pub fn has_jumps(&self) -> bool {
        matches!(self, DriftSpec::Sign { c } if *c != 0.0)
    }

    /// Constant of the linear-growth bound `|b(t,x)| ≤ c(1+|x|)` on `[0, T]`.
    pub fn growth_constant(&self, horizon: f64) -> f64 {
        match *self {
            DriftSpec::Constant { c }
            | DriftSpec::Sign { c }
            | DriftSpec::LinearGrowth { c }
            | DriftSpec::Cosine { c } => fabs(c),
            DriftSpec::Hoelder { gamma, c, .. } => fabs(c) * (1.0 + pow(horizon, gamma)),
        }
    }

    /// Exponents `(β, γ)` and constant used for the (A2) spot check.
    fn hoelder_moduli(&self, min_hurst: f64) -> (f64, f64, f64) {
        let beta_lo = 1.0 - 1.0 / (2.0 * min_hurst);
        let beta_mid = 0.5 * (beta_lo.max(0.0) + 1.0);
        match *self {
            DriftSpec::Hoelder { beta, gamma, c } => (beta, gamma, fabs(c)),
            DriftSpec::Cosine { c } => (beta_mid, 1.0, 2.0 * fabs(c)),
            DriftSpec::Constant { .. } => (beta_mid, 1.0, 0.0),
            DriftSpec::Sign { c } | DriftSpec::LinearGrowth { c } => (beta_mid, 1.0, fabs(c)),
        }
    }

    /// Spot checks of (A1) and, when `min(H1,H2) > ½`, of (A2) on a fixed
    /// set of arguments in `[0, T] × [-4, 4]`.
    pub fn check_conditions(&self, horizon: f64, min_hurst: f64) -> Vec<Warning> {
        let mut warnings = Vec::new();
        let times = [0.0, 0.25 * horizon, 0.5 * horizon, horizon];
        let xs: Vec<f64> = (0..=32).map(|k| -4.0 + 0.25 * k as f64).collect();
        let growth = self.growth_constant(horizon);
        'growth: for &t in &times {
            for &x in &xs {
                let b = self.eval(t, x);
                if !b.is_finite() || fabs(b) > growth * (1.0 + fabs(x)) * (1.0 + 1e-12) {
                    warnings.push(Warning::DriftCondition(format!(
                        "|b({t}, {x})| = {} exceeds the linear-growth bound {growth}·(1+|x|)",
                        fabs(b)
                    )));
                    break 'growth;
                }
            }
        }
        if min_hurst > 0.5 {
            let (beta, gamma_t, c) = self.hoelder_moduli(min_hurst);
            let beta_lo = 1.0 - 1.0 / (2.0 * min_hurst);
            if !(beta > beta_lo && beta <= 1.0) || !(gamma_t > min_hurst - 0.5) {
                warnings.push(Warning::DriftCondition(format!(
                    "Hölder exponents (β = {beta}, γ = {gamma_t}) outside β ∈ ({beta_lo}, 1), γ > {}",
                    min_hurst - 0.5
                )));
            }
            'hoelder: for &t in &times {
                for &s in &times {
                    for &x in &xs {
                        for d in [1e-3, 0.1, 1.0, 6.0] {
                            let y = x + d;
                            let lhs = fabs(self.eval(t, x) - self.eval(s, y));
                            let rhs = c * (pow(d, beta) + pow(fabs(t - s), gamma_t));
                            if lhs > rhs * (1.0 + 1e-9) + 1e-14 {
                                warnings.push(Warning::DriftCondition(format!(
                                    "(A2) modulus violated between ({s}, {y}) and ({t}, {x}): {lhs:.3e} > {rhs:.3e}"
                                )));
                                break 'hoelder;
                            }
                        }
                    }
                }
            }
        }
        warnings
    }

    /// Reject drifts that the case cannot handle and report failed spot checks.
    pub fn admissible(&self, case: CaseTag, horizon: f64, min_hurst: f64) -> Result<Vec<Warning>> {
        if case.needs_hoelder_drift() && self.has_jumps() {
            return Err(Error::Unsupported(format!(
                "drift {self:?} has a jump; case {case} differentiates the drift and needs the Hölder condition (A2)"
            )));
        }
        Ok(self.check_conditions(horizon, min_hurst))
    }
}

/// Partial sum of a Neumann series together with its convergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct NeumannSum {
    pub sum: GridFunction,
    /// Index `n*` of the last term included.
    pub last_index: usize,
    /// Sup-norm of term `n*`.
    pub final_norm: f64,
    /// Sup-norms of every computed term, starting with `‖rhs‖`.
    pub norms: Vec<f64>,
    pub converged: bool,
    pub warnings: Vec<Warning>,
}

/// `Σ_{n=0}^{n*} (-1)^n Op^n rhs` with `n*` the first index whose term has
/// sup-norm below `tol`, or `max_terms - 1`.
pub fn neumann_inverse(op: &OperatorChain, rhs: &GridFunction, tol: f64, max_terms: usize) -> Result<NeumannSum> {
    neumann_inverse_with(op, rhs, NeumannControl { tol, max_terms, monitor_from: 0 })
}

/// Stopping parameters of a Neumann series.
///
/// The divergence monitor (five consecutive non-decreasing term norms) only
/// runs from term `monitor_from` on, so that series whose terms grow before
/// the Gamma denominators take over are not cut off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeumannControl {
    pub tol: f64,
    pub max_terms: usize,
    pub monitor_from: usize,
}

impl NeumannControl {
    /// Schedule for an operator whose `n`-th power is bounded by
    /// `λ^n T^{nγ} / Γ(nγ + 1)`. The monitor starts once that bound has
    /// fallen back below one (terms may legitimately grow while it is above),
    /// and the cap leaves 16 spare terms beyond the index where the bound
    /// times `‖rhs‖` falls below `tol`, never going under [`DEFAULT_MAX_TERMS`].
    pub fn from_gamma_bound(gap: f64, lambda: f64, horizon: f64, rhs_norm: f64, tol: f64) -> Self {
        let log_scale = libm::log((fabs(lambda) * pow(horizon, gap)).max(f64::MIN_POSITIVE));
        let log_bound = |n: usize| n as f64 * log_scale - ln_gamma(1.0 + n as f64 * gap);
        let mut monitor_from = 1;
        while monitor_from < 10_000 && log_bound(monitor_from) > 0.0 {
            monitor_from += 1;
        }
        let log_target = libm::log(tol / rhs_norm.max(f64::MIN_POSITIVE));
        let mut needed = 0usize;
        while needed < 10_000 && log_bound(needed) >= log_target {
            needed += 1;
        }
        NeumannControl { tol, max_terms: DEFAULT_MAX_TERMS.max(needed + 16), monitor_from }
    }
}

/// [`neumann_inverse`] with an explicit [`NeumannControl`].
pub fn neumann_inverse_with(op: &OperatorChain, rhs: &GridFunction, control: NeumannControl) -> Result<NeumannSum> {
    let NeumannControl { tol, max_terms, monitor_from } = control;
    if !(tol > 0.0) {
        return Err(Error::Precondition(format!("Neumann tolerance must be positive, got {tol}")));
    }
    if max_terms == 0 {
        return Err(Error::Precondition("max_terms must be at least 1".into()));
    }
    let mut sum = rhs.clone();
    let mut term = rhs.clone();
    let mut norms = vec![rhs.sup_norm()];
    let mut warnings: Vec<Warning> = Vec::new();
    if norms[0] < tol {
        return Ok(NeumannSum { sum, last_index: 0, final_norm: norms[0], norms, converged: true, warnings });
    }
    let mut rising = 0;
    for n in 1..max_terms {
        let Checked { value, warnings: w } = apply_chain(op, &term)?;
        if warnings.is_empty() {
            warnings.extend(w.into_iter().take(1));
        }
        term = value;
        let norm = term.sup_norm();
        if !norm.is_finite() {
            norms.push(norm);
            return Err(Error::NonConvergence { norms });
        }
        sum = sum.axpy(if n % 2 == 0 { 1.0 } else { -1.0 }, &term)?;
        rising = if n > monitor_from && norm >= norms[n - 1] { rising + 1 } else { 0 };
        norms.push(norm);
        if rising >= STALL_LIMIT {
            return Err(Error::NonConvergence { norms });
        }
        if norm < tol {
            return Ok(NeumannSum { sum, last_index: n, final_norm: norm, norms, converged: true, warnings });
        }
    }
    let final_norm = *norms.last().unwrap_or(&0.0);
    Ok(NeumannSum { sum, last_index: max_terms - 1, final_norm, norms, converged: false, warnings })
}

/// `[t^{α1+α2} I^{α2} t^{-α1-α2} I^{α1}]^n (t^{α1})` in closed form:
/// `Γ(α1-α2+1)/Γ((n+1)α1+(n-1)α2+1) · t^{(n+1)α1+nα2}`.
pub fn pb1_closed_form(alpha1: f64, alpha2: f64, n: u32, t: f64) -> Result<f64> {
    let a = alpha1 - alpha2 + 1.0;
    let nf = f64::from(n);
    let d = (nf + 1.0) * alpha1 + (nf - 1.0) * alpha2 + 1.0;
    for x in [a, d] {
        if x <= 0.0 && fabs(x - libm::round(x)) < 1e-12 {
            return Err(Error::Domain(format!("Gamma pole at argument {x}")));
        }
    }
    if t < 0.0 {
        return Err(Error::Domain(format!("t = {t} is negative")));
    }
    let exponent = (nf + 1.0) * alpha1 + nf * alpha2;
    Ok(gamma(a) * rgamma(d) * pow(t, exponent))
}

/// Constant `c_T` of the linear-growth bound on `u` in the `MIXED` case:
/// `Σ_n λ^n Γ(α1-α2+1) T^{nα1+nα2} / Γ((n+1)α1+(n-1)α2+1)`, summed until a
/// term falls below `tol` relative to the partial sum.
pub fn bound1_constant(alpha1: f64, alpha2: f64, horizon: f64, lambda: f64, tol: f64) -> Result<f64> {
    let mut total = 0.0;
    for n in 0..10_000u32 {
        let term =
            pow(fabs(lambda), f64::from(n)) * pb1_closed_form(alpha1, alpha2, n, horizon)? / pow(horizon, alpha1);
        total += term;
        if n > 2 && term < tol * total {
            return Ok(total);
        }
    }
    Err(Error::NonConvergence { norms: vec![total] })
}

/// The kernel constants `c_1, c_2` of `K_{H1}, K_{H2}` in the caller's labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub c1: f64,
    pub c2: f64,
}

impl Coupling {
    pub fn unit() -> Self {
        Coupling { c1: 1.0, c2: 1.0 }
    }

    pub fn calibrated(h1: Hurst, h2: Hurst, grid: Grid) -> Self {
        Coupling { c1: calibrate_normalization(h1, grid), c2: calibrate_normalization(h2, grid) }
    }

    fn swapped(self) -> Self {
        Coupling { c1: self.c2, c2: self.c1 }
    }
}

/// The processes `u`, `v`, `ψ` for one drift path.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftDecomposition {
    pub u: GridFunction,
    pub v: GridFunction,
    pub psi: GridFunction,
    pub case: CaseInfo,
    pub coupling: Coupling,
    /// Ratio of kernel constants multiplying the case operator.
    pub lambda: f64,
    /// Number of Neumann terms summed (`n* + 1`).
    pub truncation_terms: usize,
    /// `‖u + v - b‖_∞` at the nodes.
    pub residual: f64,
    pub term_norms: Vec<f64>,
    pub warnings: Vec<Warning>,
}

/// Which canonical process the Neumann series produces directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Primary {
    U,
    V,
}

/// Case operator and the weights around it, in canonical labels:
/// `w = (1 + Op)^{-1}(t^{inner} b)`, `primary = t^{outer} w`,
/// `other = t^{outer} Op(w)`, `ψ = psi_chain(psi source)`.
struct CasePlan {
    inner: f64,
    outer: f64,
    op: OperatorChain,
    primary: Primary,
    psi_chain: OperatorChain,
    psi_from: Primary,
    lambda: f64,
}

fn case_plan(info: &CaseInfo, canonical: Coupling) -> Result<CasePlan> {
    let (a1, a2) = (info.alpha1, info.alpha2);
    let Coupling { c1, c2 } = canonical;
    use Atom::{Derivative as D, Integral as I, Weight as W};
    let plan = match info.tag {
        CaseTag::HalfAndLow => {
            let lambda = c1 / c2;
            CasePlan {
                inner: a2,
                outer: -a2,
                op: OperatorChain::scaled(vec![I(a2)], lambda)?,
                primary: Primary::V,
                psi_chain: OperatorChain::scaled(vec![W(0.0)], 1.0 / c1)?,
                psi_from: Primary::U,
                lambda,
            }
        }
        CaseTag::HalfAndHigh => {
            let lambda = c2 / c1;
            CasePlan {
                inner: 0.0,
                outer: 0.0,
                op: OperatorChain::scaled(vec![W(a2), I(a2), W(-a2)], lambda)?,
                primary: Primary::U,
                psi_chain: OperatorChain::scaled(vec![W(0.0)], 1.0 / c1)?,
                psi_from: Primary::U,
                lambda,
            }
        }
        CaseTag::Mixed => {
            let lambda = c2 / c1;
            CasePlan {
                inner: a1,
                outer: -a1,
                op: OperatorChain::scaled(vec![W(a1 + a2), I(a2), W(-a1 - a2), I(a1)], lambda)?,
                primary: Primary::U,
                psi_chain: OperatorChain::scaled(vec![W(-a1), I(a1), W(a1)], 1.0 / c1)?,
                psi_from: Primary::U,
                lambda,
            }
        }
        CaseTag::BothLow => {
            let lambda = c1 / c2;
            CasePlan {
                inner: a1,
                outer: -a1,
                op: OperatorChain::scaled(vec![D(a1), W(a1 - a2), I(a2), W(a2 - a1)], lambda)?,
                primary: Primary::V,
                psi_chain: OperatorChain::scaled(vec![W(-a2), I(a2), W(a2)], 1.0 / c2)?,
                psi_from: Primary::V,
                lambda,
            }
        }
        CaseTag::BothHigh => {
            let lambda = c1 / c2;
            CasePlan {
                inner: -a1,
                outer: a1,
                op: OperatorChain::scaled(vec![I(a1), W(a2 - a1), D(a2), W(a1 - a2)], lambda)?,
                primary: Primary::V,
                psi_chain: OperatorChain::scaled(vec![W(a2), D(a2), W(-a2)], 1.0 / c2)?,
                psi_from: Primary::V,
                lambda,
            }
        }
    };
    Ok(plan)
}

/// Power of `t` gained by one application of the case operator.
pub fn case_gap(info: &CaseInfo) -> f64 {
    match info.tag {
        CaseTag::HalfAndLow | CaseTag::HalfAndHigh => info.alpha2,
        CaseTag::Mixed => info.alpha1 + info.alpha2,
        CaseTag::BothLow => info.alpha2 - info.alpha1,
        CaseTag::BothHigh => info.alpha1 - info.alpha2,
    }
}

/// The unscaled case operator `Op` (without the coupling factor) in canonical
/// labels, e.g. `t^{α1+α2} I^{α2} t^{-α1-α2} I^{α1}` for `MIXED`.
pub fn case_operator(info: &CaseInfo) -> Result<OperatorChain> {
    Ok(case_plan(info, Coupling::unit())?.op)
}

/// Build `(u, v, ψ)` for the drift path `b(t, x0 + B^{H1}_t + B^{H2}_t)`.
///
/// `coupling` holds the kernel constants in the caller's labels; `tol` is the
/// sup-norm threshold on Neumann terms. The term cap and divergence monitor
/// follow [`NeumannControl::from_gamma_bound`] for the case operator.
pub fn build_drift_decomposition(
    bpath: &GridFunction,
    h1: Hurst,
    h2: Hurst,
    coupling: Coupling,
    tol: f64,
) -> Result<DriftDecomposition> {
    build_with_control(bpath, h1, h2, coupling, |gap, lambda, rhs_norm| {
        NeumannControl::from_gamma_bound(gap, lambda, bpath.grid().horizon(), rhs_norm, tol)
    })
}

/// [`build_drift_decomposition`] with the Neumann schedule chosen by
/// `control(gap, λ, ‖rhs‖)`, where the case operator raises powers of `t` by
/// `gap` per application.
pub fn build_with_control(
    bpath: &GridFunction,
    h1: Hurst,
    h2: Hurst,
    coupling: Coupling,
    control: impl FnOnce(f64, f64, f64) -> NeumannControl,
) -> Result<DriftDecomposition> {
    let case = classify_case(h1, h2)?;
    let canonical = if case.swapped { coupling.swapped() } else { coupling };
    let plan = case_plan(&case, canonical)?;
    let rhs = crate::power_weight(bpath, plan.inner);
    let control = control(case_gap(&case), plan.lambda, rhs.sup_norm());
    let series = neumann_inverse_with(&plan.op, &rhs, control)?;
    if !series.converged {
        return Err(Error::NonConvergence { norms: series.norms });
    }
    let mut warnings = series.warnings;
    let Checked { value: op_w, warnings: w } = apply_chain(&plan.op, &series.sum)?;
    if warnings.is_empty() {
        warnings.extend(w.into_iter().take(1));
    }
    let primary = crate::power_weight(&series.sum, plan.outer);
    let other = crate::power_weight(&op_w, plan.outer);
    let (u, v) = match plan.primary {
        Primary::U => (primary, other),
        Primary::V => (other, primary),
    };
    let source = match plan.psi_from {
        Primary::U => &u,
        Primary::V => &v,
    };
    let Checked { value: psi, warnings: w } = apply_chain(&plan.psi_chain, source)?;
    warnings.extend(w.into_iter().take(1));
    let residual = u.add(&v)?.max_abs_diff(bpath)?;
    let (u, v) = if case.swapped { (v, u) } else { (u, v) };
    Ok(DriftDecomposition {
        u,
        v,
        psi,
        case,
        coupling,
        lambda: plan.lambda,
        truncation_terms: series.last_index + 1,
        residual,
        term_norms: series.norms,
        warnings,
    })
}

/// `‖K_{H1}^{-1} ∫u - K_{H2}^{-1} ∫v‖_∞` computed through the kernel inverses,
/// independently of `dec.psi`.
pub fn verify_psi_consistency(dec: &DriftDecomposition, h1: Hurst, h2: Hurst) -> Result<f64> {
    let lhs = apply_kh_inverse(&Antiderivative::from_density(dec.u.clone())?, h1, dec.coupling.c1)?.value;
    let rhs = apply_kh_inverse(&Antiderivative::from_density(dec.v.clone())?, h2, dec.coupling.c2)?.value;
    lhs.max_abs_diff(&rhs)
}

/// The linear map `b ↦ (u, v, ψ)` at the nodes, tabulated once per grid so
/// that ensembles cost three matrix-vector products per path.
#[derive(Debug, Clone)]
pub struct DecompositionOperator {
    grid: Grid,
    case: CaseInfo,
    coupling: Coupling,
    lambda: f64,
    terms: usize,
    /// Row-major `N × (N+1)` matrices acting on `b(t_0..t_N)`.
    u: Vec<f64>,
    v: Vec<f64>,
    psi: Vec<f64>,
}

impl DecompositionOperator {
    pub fn new(grid: Grid, h1: Hurst, h2: Hurst, coupling: Coupling, tol: f64) -> Result<Self> {
        let n = grid.steps();
        let cols = n + 1;
        let mut u = vec![0.0; n * cols];
        let mut v = vec![0.0; n * cols];
        let mut psi = vec![0.0; n * cols];
        let mut terms = 1;
        let mut case = None;
        let mut lambda = 0.0;
        // column 0 first holds the response to b ≡ 1 and is converted to the
        // response to the origin value once the node hats are known
        for k in 0..cols {
            let basis = if k == 0 {
                GridFunction::from_samples(grid, vec![1.0; n], Some(1.0))?
            } else {
                let mut e = vec![0.0; n];
                e[k - 1] = 1.0;
                GridFunction::from_samples(grid, e, Some(0.0))?
            };
            let dec = build_drift_decomposition(&basis, h1, h2, coupling, tol)?;
            terms = terms.max(dec.truncation_terms);
            case = Some(dec.case);
            lambda = dec.lambda;
            for (dst, src) in [(&mut u, &dec.u), (&mut v, &dec.v), (&mut psi, &dec.psi)] {
                for (i, val) in src.values().into_iter().enumerate() {
                    dst[i * cols + k] = val;
                }
            }
        }
        for m in [&mut u, &mut v, &mut psi] {
            for row in m.chunks_exact_mut(cols) {
                let hats: f64 = row[1..].iter().sum();
                row[0] -= hats;
            }
        }
        let case = case.ok_or_else(|| Error::Precondition("empty grid".into()))?;
        Ok(DecompositionOperator { grid, case, coupling, lambda, terms, u, v, psi })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn case(&self) -> CaseInfo {
        self.case
    }

    /// Decompose `b` given at `t_0..t_N`.
    pub fn apply(&self, b_with_origin: &[f64]) -> Result<DriftDecomposition> {
        let n = self.grid.steps();
        if b_with_origin.len() != n + 1 {
            return Err(Error::GridMismatch { expected: n, found: b_with_origin.len().saturating_sub(1) });
        }
        let mat = |m: &[f64]| -> Vec<f64> {
            m.chunks_exact(n + 1).map(|row| crate::kernels::dot(row, b_with_origin)).collect()
        };
        let (u, v, psi) = (mat(&self.u), mat(&self.v), mat(&self.psi));
        let residual = (0..n).map(|i| fabs(u[i] + v[i] - b_with_origin[i + 1])).fold(0.0, f64::max);
        Ok(DriftDecomposition {
            u: GridFunction::from_samples(self.grid, u, None)?,
            v: GridFunction::from_samples(self.grid, v, None)?,
            psi: GridFunction::from_samples(self.grid, psi, None)?,
            case: self.case,
            coupling: self.coupling,
            lambda: self.lambda,
            truncation_terms: self.terms,
            residual,
            term_norms: Vec::new(),
            warnings: Vec::new(),
        })
    }
}
