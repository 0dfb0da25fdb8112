mod common;

use common::{gamma, rel, rl_integral_oracle, tanh_sinh};
use twofrac_core::frac_ops::riemann_liouville_derivative_by_difference;
use twofrac_core::{
    apply_chain, power_rule_value, riemann_liouville_derivative, riemann_liouville_integral, Atom, Grid, GridFunction,
    OperatorChain,
};

#[test]
fn oracle_quadrature_is_accurate() {
    assert!(rel(tanh_sinh(|s| s.powf(-0.5), 0.0, 1.0), 2.0) < 1e-10);
    assert!(rel(gamma(1.2), 0.918_168_742_399_760_6) < 1e-12);
}

#[test]
fn integral_of_t_at_half_order() {
    let want = rl_integral_oracle(|s| s, 0.5, 1.0);
    assert!((want - 0.752_252).abs() < 1e-6);
    assert!(rel(power_rule_value(0.5, 1.0, 1.0).unwrap(), want) < 1e-10);

    let g = Grid::unit(256);
    let f = GridFunction::from_fn(g, |t| t).unwrap();
    let got = riemann_liouville_integral(&f, 0.5).unwrap().value(256);
    assert!(rel(got, want) < 1e-10);

    let want = rl_integral_oracle(|s| s.powf(0.75), 0.25, 1.0);
    assert!((want - 0.919_063).abs() < 1e-6);
    assert!(rel(power_rule_value(0.25, 0.75, 1.0).unwrap(), want) < 1e-10);
}

#[test]
fn derivative_of_power_against_weil_quadrature() {
    // Weil form at t = 1 evaluated directly
    let alpha = 0.3;
    let hyper = tanh_sinh(|s| (1.0 - s.powf(0.3)) / (1.0 - s).powf(1.0 + alpha), 0.0, 1.0);
    let want = (1.0 + alpha * hyper) / gamma(1.0 - alpha);
    assert!((want - 0.897_471).abs() < 1e-6);

    let g = Grid::unit(512);
    let exact = GridFunction::power(g, 1.0, 0.3);
    let d = riemann_liouville_derivative(&exact, alpha).unwrap().value;
    assert!(rel(d.value(512), want) < 1e-10);

    // sampled route: only the piecewise-linear quadrature is exercised
    let sampled = exact.sampled();
    let d = riemann_liouville_derivative(&sampled, alpha).unwrap().value;
    assert!(rel(d.value(512), want) < 1e-3);
}

#[test]
fn chain_matches_nested_quadrature() {
    let (a1, a2) = (0.3, 0.1);
    let inner = |s: f64| s.powf(-a1 - a2) * rl_integral_oracle(|r| r.powf(a1), a1, s);
    let nested = rl_integral_oracle(inner, a2, 1.0);
    let closed = gamma(a1 - a2 + 1.0) / gamma(2.0 * a1 + 1.0);
    assert!(rel(nested, closed) < 1e-6, "{nested} vs {closed}");

    let g = Grid::unit(1024);
    let chain =
        OperatorChain::new(vec![Atom::Weight(a1 + a2), Atom::Integral(a2), Atom::Weight(-a1 - a2), Atom::Integral(a1)])
            .unwrap();
    let f = GridFunction::power(g, 1.0, a1);
    let out = apply_chain(&chain, &f).unwrap().value;
    assert!(rel(out.value(1024), nested) < 1e-10);
    let sampled = apply_chain(&chain, &f.sampled()).unwrap().value;
    assert!(rel(sampled.value(1024), nested) < 1e-3);
}

#[test]
fn weil_and_difference_forms_agree() {
    for &alpha in &[0.2, 0.45, 0.7] {
        let mut prev = f64::INFINITY;
        for &n in &[256usize, 1024] {
            let g = Grid::unit(n);
            let f = GridFunction::from_fn(g, |t| (2.0 * t).sin() + t * t).unwrap();
            let w = riemann_liouville_derivative(&f, alpha).unwrap().value;
            let d = riemann_liouville_derivative_by_difference(&f, alpha).unwrap();
            // compare away from the first node where the one-sided stencil is first order
            let err = (2..=n).map(|i| (w.value(i) - d.value(i)).abs()).fold(0.0, f64::max);
            let budget = 10.0 * g.dt().powf(1.0 - alpha);
            assert!(err < budget, "α = {alpha}, N = {n}: {err:e}");
            assert!(err < prev);
            prev = err;
        }
    }
}

#[test]
fn second_composition_formula() {
    let (a, b) = (0.2, 0.3);
    let mut errs = Vec::new();
    for &n in &[512usize, 2048] {
        let g = Grid::unit(n);
        // f = I^{α+β+ε} g with smooth g
        let f = riemann_liouville_integral(&GridFunction::from_fn(g, f64::cos).unwrap(), a + b + 0.2).unwrap();
        let lhs = riemann_liouville_derivative(&riemann_liouville_derivative(&f, b).unwrap().value, a).unwrap().value;
        let rhs = riemann_liouville_derivative(&f, a + b).unwrap().value;
        errs.push(lhs.max_abs_diff(&rhs).unwrap());
    }
    assert!(errs[1] < errs[0] && errs[1] < 1e-2, "{errs:?}");
}

#[test]
fn left_inverse_on_piecewise_smooth_input() {
    let mut errs = Vec::new();
    for &n in &[512usize, 1024, 2048] {
        let g = Grid::unit(n);
        let f = GridFunction::from_fn(g, |t| if t < 0.5 { t } else { 1.0 - t }).unwrap();
        let back = riemann_liouville_derivative(&riemann_liouville_integral(&f, 0.35).unwrap(), 0.35).unwrap().value;
        errs.push(back.max_abs_diff(&f).unwrap());
    }
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(errs[2] < 5e-3);
}

#[test]
fn power_rule_first_order_at_fixed_time() {
    // relative error at a fixed t is O(Δ); near t = Δ a sampled t^β is not
    // resolved at all, so the check is pointwise rather than uniform
    for &(alpha, beta) in &[(0.3, 0.5), (0.45, 0.2), (0.1, 1.5)] {
        let errs: Vec<f64> = [256usize, 512, 1024]
            .iter()
            .map(|&n| {
                let g = Grid::unit(n);
                let f = GridFunction::power(g, 1.0, beta).sampled();
                let got = riemann_liouville_integral(&f, alpha).unwrap();
                let i = n / 2;
                rel(got.value(i), power_rule_value(alpha, beta, g.node(i)).unwrap())
            })
            .collect();
        assert!(errs[2] < 1e-2 && errs[1] / errs[2] > 1.5, "α = {alpha}, β = {beta}: {errs:?}");
    }
}
