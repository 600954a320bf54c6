mod common;
use common::*;

#[test]
fn gauss_rule_integrates_polynomials() {
    let (x, w) = gauss_legendre(10);
    let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
    assert!((s - 2.0 / 19.0).abs() < 1e-14);
}

#[test]
fn log_gamma_matches_known_values() {
    assert!((ln_gamma(c(5.0, 0.0)).exp() - c(24.0, 0.0)).norm() < 1e-12);
    let g = ln_gamma(c(0.0, 1.0)).exp();
    assert!((g - c(-0.154_949_828_301_810_7, -0.498_015_668_118_356_0)).norm() < 1e-13);
}

#[test]
fn two_oracles_agree() {
    for (n, p, q) in [(1usize, c(3.0, 0.0), c(2.0, 0.0)), (1, c(3.0, 1.0), c(2.0, 0.5)), (2, c(2.0, 0.0), c(2.0, 0.0))] {
        let e: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        let g = gauss_two_center(n, p, q, &e);
        let cf = closed_form_two_center(n, p, q);
        eprintln!("{n} {p} {q}: gauss {g} closed {cf} rel {:.2e}", rel_err(g, cf));
        assert!(rel_err(g, cf) < 1e-7);
    }
}
