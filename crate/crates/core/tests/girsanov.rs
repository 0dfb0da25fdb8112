mod common;

use common::tanh_sinh;
use proptest::prelude::*;
use twofrac_core::drift::DriftSpec;
use twofrac_core::girsanov::*;
use twofrac_core::kernels::{variance_sigma2, Hurst};
use twofrac_core::noise::sample_wiener;
use twofrac_core::{Grid, GridFunction};

fn model(h1: f64, h2: f64, drift: DriftSpec, n: usize) -> WeakSolutionModel {
    WeakSolutionModel::new(ModelSetup {
        h1: Hurst::new(h1).unwrap(),
        h2: Hurst::new(h2).unwrap(),
        grid: Grid::unit(n),
        x0: 0.0,
        drift,
        tol: 1e-8,
    })
    .unwrap()
}

fn ensemble(m: &WeakSolutionModel, paths: u64, seed: u64) -> Vec<PathBundle> {
    (0..paths).map(|p| m.assemble(seed, p).unwrap()).collect()
}

#[test]
fn density_has_unit_mean_for_bounded_smooth_drifts() {
    for (h1, h2) in [(0.5, 0.3), (0.3, 0.7), (0.9, 0.6)] {
        for drift in [DriftSpec::Constant { c: 1.0 }, DriftSpec::Cosine { c: 1.0 }] {
            let m = model(h1, h2, drift, 64).tabulated().unwrap();
            let l: Vec<f64> = ensemble(&m, 20_000, 21).iter().map(|b| b.density()).collect();
            let e = sample_mean(&l).unwrap();
            assert!((e.value - 1.0).abs() <= 3.0 * e.se(), "({h1}, {h2}) {drift:?}: {} ± {}", e.value, e.se());
        }
    }
}

#[test]
fn shifted_fbm_matches_weighted_covariance() {
    let (h1, h2) = (0.3, 0.7);
    let m = model(h1, h2, DriftSpec::Cosine { c: 1.0 }, 64).tabulated().unwrap();
    let bundles = ensemble(&m, 20_000, 5);
    let ld: Vec<f64> = bundles.iter().map(|b| b.log_density).collect();
    for (k, h) in [(0, h1), (1, h2)] {
        let at = |i: usize| -> Vec<f64> {
            bundles
                .iter()
                .map(|b| {
                    let s = b.shifted.as_ref().unwrap();
                    if k == 0 {
                        s.b1.value(i)
                    } else {
                        s.b2.value(i)
                    }
                })
                .collect()
        };
        let (mid, end) = (at(32), at(64));
        for (x, y, s, t) in [(&mid, &end, 0.5f64, 1.0f64), (&end, &end, 1.0, 1.0), (&mid, &mid, 0.5, 0.5)] {
            let c = weighted_covariance(x, y, &ld).unwrap();
            let r = 0.5 * (s.powf(2.0 * h) + t.powf(2.0 * h) - (t - s).abs().powf(2.0 * h));
            assert!((c.value - r).abs() <= 3.0 * c.se(), "H = {h} ({s}, {t}): {} ± {} vs {r}", c.value, c.se());
        }
    }
}

#[test]
fn half_case_shifted_fbm_is_shifted_wiener() {
    for h2 in [0.3, 0.7] {
        let m = model(0.5, h2, DriftSpec::Sign { c: 1.0 }, 128);
        let b = m.assemble(2, 9).unwrap();
        let s = b.shifted.unwrap();
        assert!(s.b1.max_abs_diff(&s.w).unwrap() < 1e-12);
        assert!(s.representation_residuals[0] < 1e-12);
    }
}

#[test]
fn representation_residuals_decay_under_refinement() {
    for (h1, h2) in [(0.5, 0.3), (0.3, 0.7), (0.4, 0.1), (0.9, 0.6)] {
        let mut prev: Option<[f64; 2]> = None;
        for n in [128, 256, 512] {
            let b = model(h1, h2, DriftSpec::Constant { c: 1.0 }, n).assemble(1, 0).unwrap();
            let r = b.shifted.unwrap().representation_residuals;
            if let Some(p) = prev {
                for k in 0..2 {
                    assert!(r[k] < 1e-12 || p[k] / r[k] > 1.4, "({h1}, {h2}) N = {n}: {p:?} -> {r:?}");
                }
            }
            prev = Some(r);
        }
    }
}

#[test]
fn sde_residual_is_the_integrated_decomposition_residual() {
    for (h1, h2, drift) in [
        (0.5, 0.3, DriftSpec::Sign { c: 1.0 }),
        (0.3, 0.7, DriftSpec::LinearGrowth { c: 0.5 }),
        (0.4, 0.1, DriftSpec::Constant { c: 2.0 }),
        (0.9, 0.6, DriftSpec::Cosine { c: 1.0 }),
    ] {
        let m = model(h1, h2, drift, 256);
        let b = m.assemble(4, 2).unwrap();
        let d = &b.decomposition;
        let dt = 1.0 / 256.0;
        let (u, v, bp) = (d.u.values(), d.v.values(), b.drift_path.values_with_origin());
        let mut acc = 0.0f64;
        let mut worst = 0.0f64;
        let mut prev = u[0] + v[0] - bp[0];
        for i in 0..256 {
            let cur = u[i] + v[i] - bp[i + 1];
            acc += 0.5 * dt * (prev + cur);
            prev = cur;
            worst = worst.max(acc.abs());
        }
        let sde = b.sde_residual.unwrap();
        assert!((sde - worst).abs() < 1e-12, "{drift:?}: {sde} vs {worst}");
        assert!(sde <= d.residual + 0.5 * dt * (u[0] + v[0] - bp[0]).abs() + 1e-12);
    }
}

#[test]
fn mixed_sign_drift_smoke_test() {
    let m = model(0.3, 0.7, DriftSpec::Sign { c: 1.0 }, 128).tabulated().unwrap();
    let ens = WeightedEnsemble::from_bundles(8, ensemble(&m, 1000, 8)).unwrap();
    assert_eq!(ens.len(), 1000);
    assert!(ens.weights(Direction::PToQ).iter().all(|w| w.is_finite() && *w > 0.0));
    let tails = tail_diagnostics(ens.log_densities()).unwrap();
    assert!(tails.max_abs_log_density.is_finite() && tails.kurtosis > 0.0);
}

#[test]
fn assemblies_are_pathwise_deterministic() {
    let m = model(0.3, 0.7, DriftSpec::Sign { c: 1.0 }, 64);
    let w = sample_wiener(Grid::unit(64), 77, 3);
    let a = m.assemble_from(w.clone()).unwrap();
    let b = m.assemble_from(w).unwrap();
    assert_eq!(a.x.values(), b.x.values());
    assert_eq!(a.log_density.to_bits(), b.log_density.to_bits());
    let c = m.assemble(78, 3).unwrap();
    assert_ne!(a.x.values(), c.x.values());
}

#[test]
fn tabulated_and_direct_models_agree() {
    let direct = model(0.5, 0.3, DriftSpec::Cosine { c: 1.0 }, 64);
    let table = direct.clone().tabulated().unwrap();
    for p in 0..5 {
        let (a, b) = (direct.assemble(1, p).unwrap(), table.assemble(1, p).unwrap());
        assert!((a.log_density - b.log_density).abs() < 1e-8);
        assert!(a.psi().max_abs_diff(b.psi()).unwrap() < 1e-8);
    }
}

#[test]
fn zero_drift_law_estimators_coincide() {
    let m = model(0.5, 0.3, DriftSpec::Constant { c: 0.0 }, 32);
    let r = law_equality_check(|x: &GridFunction| if x.value(32) > 0.0 { 1.0 } else { 0.0 }, &m, 2000, 3).unwrap();
    assert_eq!(r.verbatim.value, r.exact.value);
    assert!(!r.verbatim_flagged);
    assert!(r.direct_vs_exact_sigma < 3.0);
}

#[test]
fn direct_simulation_agrees_with_change_of_measure() {
    for (h1, h2) in [(0.5, 0.3), (0.3, 0.7)] {
        let m = model(h1, h2, DriftSpec::Constant { c: 1.0 }, 64).tabulated().unwrap();
        let r =
            law_equality_check(|x: &GridFunction| if x.value(64) > 0.0 { 1.0 } else { 0.0 }, &m, 20_000, 17).unwrap();
        assert!(r.direct_vs_exact_sigma <= 3.0, "({h1}, {h2}): {r:?}");
        assert!(r.verbatim.value.is_finite());
    }
}

#[test]
fn reweighting_back_recovers_reference_mean() {
    let m = model(0.3, 0.7, DriftSpec::Constant { c: 1.0 }, 64).tabulated().unwrap();
    let ens = WeightedEnsemble::from_bundles(2, ensemble(&m, 5000, 2)).unwrap();
    let xt = |b: &PathBundle| b.x.value(64);
    let q = reweighted_expectation(xt, &ens, Direction::PToQ).unwrap();
    // under Q the drift b = 1 moves X_T by T
    assert!((q.value - 1.0).abs() <= 3.0 * q.se(), "{q:?}");
    let none = reweighted_expectation(xt, &ens, Direction::QToP).unwrap();
    assert!(none.value < q.value);
}

#[test]
fn gaussian_occupation_matches_independent_quadrature() {
    let m = model(0.3, 0.7, DriftSpec::Constant { c: 0.0 }, 64);
    let (k1, k2) = m.kernels();
    let w = IndicatorWindow { lower: -0.1, width: 0.3 };
    let mut probs = vec![1.0];
    for i in 1..=64 {
        let sd = variance_sigma2(k1, k2, i).unwrap().sqrt();
        let pdf = |y: f64| (-0.5 * (y / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        probs.push(tanh_sinh(pdf, w.lower, w.lower + w.width));
    }
    let want = (probs[0] + probs[64]) / 128.0 + probs[1..64].iter().sum::<f64>() / 64.0;
    assert!((gaussian_occupation(k1, k2, 0.0, w).unwrap() - want).abs() < 1e-10);
}

#[test]
fn krylov_ladder_is_bounded_and_gaussian_identity_holds() {
    let m = model(0.3, 0.7, DriftSpec::Constant { c: 1.0 }, 64).tabulated().unwrap();
    let windows: Vec<IndicatorWindow> =
        [0.5, 0.25, 0.1, 0.05].iter().map(|&e| IndicatorWindow { lower: -0.5 * e, width: e }).collect();
    let r = krylov_experiment(&m, 1.5, &windows, 20_000, 19).unwrap();
    assert!(r.ratio_spread().unwrap() <= 10.0);
    for row in &r.rows {
        assert!(row.ratio.unwrap().is_finite());
        assert!(row.gaussian_sigma <= 3.0, "{row:?}");
        assert!((row.rhs - row.window.width.powf(1.0 / 1.5)).abs() < 1e-15);
    }
    assert!(krylov_experiment(&m, 1.3, &windows, 10, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_density_is_quadratic_in_scale(a in -3.0f64..3.0, k in 0.0f64..5.0, seed in 0u64..1000) {
        let g = Grid::unit(64);
        let w = sample_wiener(g, seed, 0);
        let psi = GridFunction::from_fn(g, |t| (k * t).cos() + 0.5).unwrap();
        let l1 = girsanov_log_density(&psi, &w).unwrap();
        let lm = girsanov_log_density(&psi.scaled(-1.0), &w).unwrap();
        let la = girsanov_log_density(&psi.scaled(a), &w).unwrap();
        let (s, q) = (0.5 * (l1 - lm), -(l1 + lm));
        prop_assert!((la - (a * s - 0.5 * a * a * q)).abs() < 1e-10 * (1.0 + a * a * q.abs()));
    }

    #[test]
    fn self_normalization_ignores_weight_scale(shift in -50.0f64..50.0, seed in 0u64..100) {
        let v: Vec<f64> = (0..150).map(|i| ((i as u64 * 7 + seed) % 13) as f64).collect();
        let lw: Vec<f64> = (0..150).map(|i| ((i as f64 + seed as f64) * 0.3).sin()).collect();
        let shifted: Vec<f64> = lw.iter().map(|l| l + shift).collect();
        let a = self_normalized_mean(&v, &lw).unwrap();
        let b = self_normalized_mean(&v, &shifted).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-12);
        prop_assert!((a.se() - b.se()).abs() < 1e-12);
    }

    #[test]
    fn ensemble_weights_invert_between_directions(lds in proptest::collection::vec(-5.0f64..5.0, 1..40)) {
        let mut ens = WeightedEnsemble::new(0);
        for (i, l) in lds.iter().enumerate() {
            ens.push(i as u64, (), *l).unwrap();
        }
        for (p, q) in ens.weights(Direction::PToQ).iter().zip(ens.weights(Direction::QToP)) {
            prop_assert!((p * q - 1.0).abs() < 1e-12);
        }
    }
}
