//! Desk-scale acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! (plus indented detail lines) straight to stderr, so the lines survive output capture.

use std::io::Write;

use rayon::prelude::*;
use twofrac::config::{DriftConfig, ExperimentConfig};
use twofrac::paths::emit_with_model;
use twofrac::stats::{ks_two_sample, KS_ALPHA};
use twofrac::suites::{
    coarsen_wiener, girsanov_records, kernel_lattice_error, krylov_report, law_report, power_rule_error, ORDERS,
    RETRY_SEED,
};
use twofrac_core::drift::{pb1_closed_form, verify_psi_consistency, CaseTag, DriftSpec};
use twofrac_core::girsanov::{sample_mean, weighted_covariance, ModelSetup, PathBundle, WeakSolutionModel};
use twofrac_core::kernels::{cross_covariance, fbm_covariance, Hurst, KernelMatrix};
use twofrac_core::noise::{fbm_pair_from_wiener, sample_wiener, JointSampler};
use twofrac_core::{riemann_liouville_derivative, riemann_liouville_integral, Grid, GridFunction};

fn say(line: &str) {
    let mut e = std::io::stderr().lock();
    let _ = writeln!(e, "{line}");
}

fn verdict(n: u32, ok: bool, summary: &str) {
    say(&format!("criterion {n}: {} {summary}", if ok { "PASS" } else { "FAIL" }));
    assert!(ok, "criterion {n} failed: {summary}");
}

fn hurst(h: f64) -> Hurst {
    Hurst::new(h).unwrap()
}

fn grid(n: usize) -> Grid {
    Grid::new(1.0, n).unwrap()
}

/// Errors at machine precision count as converged in halving checks.
const CONVERGED: f64 = 1e-12;

fn halving_ok(coarse: f64, fine: f64, factor: f64) -> bool {
    fine < CONVERGED || coarse / fine >= factor
}

fn inputs(g: Grid) -> Vec<(&'static str, GridFunction)> {
    vec![
        ("1", GridFunction::from_fn(g, |_| 1.0).unwrap()),
        ("t", GridFunction::from_fn(g, |t| t).unwrap()),
        ("t^0.6", GridFunction::power(g, 1.0, 0.6)),
        ("sin t", GridFunction::from_fn(g, f64::sin).unwrap()),
    ]
}

/// Per input: (max semigroup error, max inversion error), relative to `‖f‖_∞`.
fn identity_errors(f: &GridFunction) -> (f64, f64) {
    let norm = f.sup_norm();
    let mut semi = 0.0f64;
    let mut inv = 0.0f64;
    for &a in &ORDERS {
        let ia = riemann_liouville_integral(f, a).unwrap();
        let back = riemann_liouville_derivative(&ia, a).unwrap().value;
        inv = inv.max(back.max_abs_diff(f).unwrap() / norm);
        for &b in &ORDERS {
            let lhs = riemann_liouville_integral(&riemann_liouville_integral(f, b).unwrap(), a).unwrap();
            let rhs = riemann_liouville_integral(f, a + b).unwrap();
            semi = semi.max(lhs.max_abs_diff(&rhs).unwrap() / norm);
        }
    }
    (semi, inv)
}

#[test]
fn criterion_01_operator_identities() {
    let (coarse, fine) = (grid(2048), grid(4096));
    let mut ok = true;
    for ((name, fc), (_, ff)) in inputs(coarse).into_iter().zip(inputs(fine)) {
        let (sc, ic) = identity_errors(&fc);
        let (sf, i_f) = identity_errors(&ff);
        let row_ok = sf <= 5e-3 && i_f <= 5e-3 && halving_ok(sc, sf, 1.7) && halving_ok(ic, i_f, 1.7);
        ok &= row_ok;
        say(&format!(
            "  f = {name}: I^a I^b {sf:.2e} (x{:.2} per doubling), D^a I^a {i_f:.2e} (x{:.2}) {}",
            sc / sf.max(f64::MIN_POSITIVE),
            ic / i_f.max(f64::MIN_POSITIVE),
            if row_ok { "ok" } else { "VIOLATED" }
        ));
    }
    let sampled = |g: Grid| identity_errors(&GridFunction::from_fn(g, |t| t.powf(0.6)).unwrap()).1;
    let (c, f) = (sampled(coarse), sampled(fine));
    say(&format!("  info: t^0.6 sampled without its power term: D^a I^a {f:.2e} (x{:.2} per doubling)", c / f));
    verdict(1, ok, "semigroup and inversion at N = 4096 within 5e-3, halving factor >= 1.7");
}

#[test]
fn criterion_02_power_rule() {
    let g = grid(4096);
    let err = power_rule_error(g, 0.2, 0.1, 5).unwrap();
    for n in 1..=5 {
        say(&format!("  n = {n}: closed form {:.6}", pb1_closed_form(0.2, 0.1, n, 1.0).unwrap()));
    }
    verdict(2, err <= 1e-2, &format!("max relative error over n = 1..5 is {err:.2e} (tol 1e-2)"));
}

#[test]
fn criterion_03_kernel_covariance() {
    let g = grid(2048);
    let mut ok = true;
    for h in [0.3, 0.5, 0.7] {
        let e = kernel_lattice_error(&KernelMatrix::new(hurst(h), g));
        ok &= e <= 2e-2;
        say(&format!("  H = {h}: lattice error / T^2H = {e:.2e}"));
    }
    verdict(3, ok, "16-point lattice covariance within 2e-2 T^2H at N = 2048");
}

#[test]
fn criterion_04_sampler_law() {
    let g = grid(256);
    let (k1, k2) = (KernelMatrix::new(hurst(0.3), g), KernelMatrix::new(hurst(0.7), g));
    let oracle = JointSampler::projected(&k1, &k2).unwrap();
    let m = 10_000u64;
    let n = g.steps();
    let kernel_side = |seed: u64| -> Vec<(f64, f64)> {
        (0..m)
            .into_par_iter()
            .map(|p| {
                let f = fbm_pair_from_wiener(&sample_wiener(g, seed, p), &k1, &k2).unwrap();
                (f.b1.value(n), f.b2.value(n))
            })
            .collect()
    };
    let oracle_side = |seed: u64| -> Vec<(f64, f64)> {
        (0..m)
            .into_par_iter()
            .map(|p| {
                let f = oracle.sample(seed, p).unwrap();
                (f.b1.value(n), f.b2.value(n))
            })
            .collect()
    };
    let p_values = |seed: u64| {
        let (a, b) = (kernel_side(seed), oracle_side(seed ^ 0xC0FFEE));
        let p1 = ks_two_sample(&a.iter().map(|x| x.0).collect::<Vec<_>>(), &b.iter().map(|x| x.0).collect::<Vec<_>>())
            .unwrap();
        let p2 = ks_two_sample(&a.iter().map(|x| x.1).collect::<Vec<_>>(), &b.iter().map(|x| x.1).collect::<Vec<_>>())
            .unwrap();
        (p1.p_value, p2.p_value, a)
    };
    let (mut p1, mut p2, mut samples) = p_values(4);
    say(&format!("  KS p-values: B1_T {p1:.3}, B2_T {p2:.3}"));
    if p1 <= KS_ALPHA || p2 <= KS_ALPHA {
        (p1, p2, samples) = p_values(4 ^ RETRY_SEED);
        say(&format!("  retry on independent streams: B1_T {p1:.3}, B2_T {p2:.3}"));
    }
    let xy: Vec<f64> = samples.iter().map(|(x, y)| x * y).collect();
    let cov = sample_mean(&xy).unwrap();
    let want = cross_covariance(&k1, &k2, n, n).unwrap();
    let z = (cov.value - want).abs() / cov.se();
    say(&format!("  Cov(B1_T, B2_T) = {:.5} ± {:.5} vs quadrature {want:.5} ({z:.2} sigma)", cov.value, cov.se()));
    let ok = p1 > KS_ALPHA && p2 > KS_ALPHA && z <= 3.0;
    verdict(4, ok, "kernel sampler vs Cholesky oracle at N = 256, 1e4 paths");
}

struct DecompositionCase {
    h: (f64, f64),
    drift: DriftSpec,
}

fn decomposition_cases() -> Vec<DecompositionCase> {
    let one = DriftSpec::Constant { c: 1.0 };
    let sign = DriftSpec::Sign { c: 1.0 };
    let cos = DriftSpec::Cosine { c: 1.0 };
    vec![
        DecompositionCase { h: (0.5, 0.3), drift: one },
        DecompositionCase { h: (0.5, 0.3), drift: sign },
        DecompositionCase { h: (0.5, 0.7), drift: one },
        DecompositionCase { h: (0.5, 0.7), drift: sign },
        DecompositionCase { h: (0.3, 0.7), drift: one },
        DecompositionCase { h: (0.3, 0.7), drift: sign },
        DecompositionCase { h: (0.2, 0.4), drift: one },
        DecompositionCase { h: (0.2, 0.4), drift: cos },
        DecompositionCase { h: (0.6, 0.8), drift: one },
        DecompositionCase { h: (0.6, 0.8), drift: cos },
    ]
}

fn model(h: (f64, f64), n: usize, drift: DriftSpec) -> WeakSolutionModel {
    WeakSolutionModel::new(ModelSetup { h1: hurst(h.0), h2: hurst(h.1), grid: grid(n), x0: 0.0, drift, tol: 1e-8 })
        .unwrap()
}

/// The same Brownian path assembled at `N = 2048` and at `N = 1024`.
fn fine_and_coarse(c: &DecompositionCase) -> (PathBundle, PathBundle) {
    let w = sample_wiener(grid(2048), 7, 0);
    let cw = coarsen_wiener(&w).unwrap();
    let fine = model(c.h, 2048, c.drift).assemble_from(w).unwrap();
    let coarse = model(c.h, 1024, c.drift).assemble_from(cw).unwrap();
    (fine, coarse)
}

fn drift_name(d: DriftSpec) -> &'static str {
    match d {
        DriftSpec::Constant { .. } => "b = 1",
        DriftSpec::Sign { .. } => "b = sign(x)",
        DriftSpec::Cosine { .. } => "b = cos(x)",
        _ => "other",
    }
}

#[test]
fn criterion_05_07_decomposition_and_sde_residual() {
    let results: Vec<_> = decomposition_cases().into_par_iter().map(|c| (fine_and_coarse(&c), c)).collect();
    let mut tags = std::collections::BTreeSet::new();
    let (mut ok5, mut ok7) = (true, true);
    for ((fine, coarse), c) in &results {
        let (h1, h2) = (hurst(c.h.0), hurst(c.h.1));
        let tag: CaseTag = fine.decomposition.case.tag;
        tags.insert(tag.name());
        let res = fine.decomposition.residual;
        let psi_f = verify_psi_consistency(&fine.decomposition, h1, h2).unwrap();
        let psi_c = verify_psi_consistency(&coarse.decomposition, h1, h2).unwrap();
        let slope_ok = halving_ok(psi_c, psi_f, 1.2);
        let row5 = res <= 1e-6 && psi_f <= 1e-2 && slope_ok;
        let sde = fine.sde_residual.unwrap();
        let row7 = sde <= 1e-8 + 5e-3;
        ok5 &= row5;
        ok7 &= row7;
        say(&format!(
            "  {} {:?} {}: |u+v-b| {res:.1e}, psi consistency {psi_f:.2e} (N/2: {psi_c:.2e}), SDE residual {sde:.2e} [{}{}]",
            tag.name(),
            c.h,
            drift_name(c.drift),
            if row5 { "c5 ok" } else { "c5 VIOLATED" },
            if row7 { ", c7 ok" } else { ", c7 VIOLATED" },
        ));
    }
    let all_tags = tags.len() == 5;
    say(&format!("  case tags covered: {}", tags.into_iter().collect::<Vec<_>>().join(", ")));
    let r7 = std::panic::catch_unwind(|| verdict(7, ok7, "SDE residual <= T tol + 5e-3 on the criterion 5 bundles"));
    verdict(5, ok5 && all_tags, "|u+v-b| <= 1e-6, psi consistency <= 1e-2 at N = 2048, shrinking under refinement");
    if let Err(e) = r7 {
        std::panic::resume_unwind(e);
    }
}

fn normalization_config(h: (f64, f64), drift: DriftConfig) -> ExperimentConfig {
    ExperimentConfig { h1: h.0, h2: h.1, steps: 128, paths: 100_000, seed: 6, drift, ..Default::default() }
}

#[test]
fn criterion_06_girsanov_normalization() {
    let mut ok = true;
    for h in [(0.5, 0.3), (0.3, 0.7)] {
        for (drift, gated) in [
            (DriftConfig::Constant { c: 1.0 }, true),
            (DriftConfig::Cosine { c: 1.0 }, true),
            (DriftConfig::Sign { c: 1.0 }, false),
        ] {
            let cfg = normalization_config(h, drift);
            let model = cfg.model().unwrap();
            let recs = girsanov_records(&model, cfg.paths, cfg.seed).unwrap();
            let ld: Vec<f64> = recs.iter().map(|r| r.log_density).collect();
            let dens = sample_mean(&ld.iter().map(|l| l.exp()).collect::<Vec<_>>()).unwrap();
            let z_mean = (dens.value - 1.0).abs() / dens.se();
            let mut line = format!(
                "  {} {h:?} {}: E[L_T] = {:.5} ± {:.5} ({z_mean:.2} SE)",
                model.case().tag.name(),
                drift_name(drift.spec()),
                dens.value,
                dens.se()
            );
            let mut row_ok = z_mean <= 3.0;
            for (k, hk) in [(0usize, h.0), (1, h.1)] {
                let mid: Vec<f64> = recs.iter().map(|r| r.shifted[k][0]).collect();
                let end: Vec<f64> = recs.iter().map(|r| r.shifted[k][1]).collect();
                let c = weighted_covariance(&mid, &end, &ld).unwrap();
                let want = fbm_covariance(hurst(hk), 0.5, 1.0);
                let z = (c.value - want).abs() / c.se();
                row_ok &= z <= 3.0;
                line += &format!(", Cov~B{}(T/2,T) {:.4} vs {want:.4} ({z:.2} sigma)", k + 1, c.value);
            }
            if gated {
                ok &= row_ok;
                line += if row_ok { " ok" } else { " VIOLATED" };
            } else {
                line += " [info, not gated]";
            }
            say(&line);
        }
    }
    verdict(6, ok, "E[L_T] within 3 SE of 1 and weighted covariances within 3 sigma, M = 1e5, N = 128");
}

#[test]
fn criterion_08_law_equality() {
    let cfg = ExperimentConfig { h1: 0.5, h2: 0.3, steps: 128, paths: 100_000, seed: 8, ..Default::default() };
    let model = cfg.model().unwrap();
    let l = law_report(&model, &cfg).unwrap();
    say(&format!("  direct Euler       {:.5} ± {:.5}", l.direct.value, l.direct.se()));
    say(&format!("  change of measure  {:.5} ± {:.5}", l.exact.value, l.exact.se()));
    say(&format!(
        "  info: verbatim 3/2-exponent {:.5} ± {:.5}, {:.1} sigma from change of measure{}",
        l.verbatim.value,
        l.verbatim.se(),
        l.verbatim_vs_exact_sigma,
        if l.verbatim_flagged { " (flagged)" } else { "" }
    ));
    verdict(
        8,
        l.direct_vs_exact_sigma <= 3.0,
        &format!("direct vs change of measure {:.2} sigma (tol 3)", l.direct_vs_exact_sigma),
    );
}

#[test]
fn criterion_09_krylov_ladder() {
    let cfg = ExperimentConfig { h1: 0.3, h2: 0.7, paths: 100_000, seed: 9, rho: 1.5, ..Default::default() };
    let model = cfg.model().unwrap();
    let k = krylov_report(&model, &cfg).unwrap();
    let mut ok = true;
    for row in &k.rows {
        let finite = row.ratio.is_some_and(f64::is_finite);
        ok &= finite && row.gaussian_sigma <= 3.0;
        say(&format!(
            "  eps = {}: ratio {:?}, Gaussian identity MC {:.5} vs {:.5} ({:.2} sigma)",
            row.window.width, row.ratio, row.gaussian_mc.value, row.gaussian_exact, row.gaussian_sigma
        ));
    }
    let spread = k.ratio_spread().unwrap_or(f64::INFINITY);
    ok &= spread <= 10.0;
    verdict(9, ok, &format!("ratios finite, max/min = {spread:.2} (tol 10), Gaussian identity within 3 sigma"));
}

#[test]
fn criterion_10_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: u64| {
        let cfg =
            ExperimentConfig { paths: 4, steps: 128, seed, output_dir: tmp.path().join(name), ..Default::default() };
        std::fs::create_dir_all(&cfg.output_dir).unwrap();
        let model = cfg.model().unwrap();
        emit_with_model(&cfg, &model, &cfg.output_dir).unwrap();
        (0..4).map(|p| std::fs::read(cfg.output_dir.join(format!("path_{p:06}.csv"))).unwrap()).collect::<Vec<_>>()
    };
    let (a, b, c) = (run("a", 10), run("b", 10), run("c", 11));
    let same = a == b;
    let differs = a.iter().zip(&c).all(|(x, y)| x != y);
    say(&format!("  identical seed byte-identical: {same}; different seed changes every table: {differs}"));
    verdict(10, same && differs, "CSV determinism");
}
