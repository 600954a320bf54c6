mod common;
use common::*;

use layerstrip::model_quadrature::{
    i_full_integral, j_converges, j_exponent, j_integral, t_exponent, t_limit_integral, t_limit_integral_towards,
    t_regularized_integral, ModelTerm, QuadratureError, QuadratureSpec,
};
use num_complex::Complex64;

fn library(case: Case) -> Complex64 {
    let spec = QuadratureSpec::default();
    match case {
        Case::T { l, n, sigma } => t_limit_integral(l, sigma, n, &spec).unwrap().value,
        Case::J { l, k, n, sigma } => j_integral(l, k, sigma, n, &spec).unwrap().value,
    }
}

#[test]
fn ten_case_matrix_against_both_oracles() {
    for case in case_matrix() {
        let (n, (p, q)) = (case.n(), case.exponents());
        let e: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
        let lib = library(case);
        let gauss = gauss_two_center(n, p, q, &e);
        let closed = closed_form_two_center(n, p, q);
        assert!(rel_err(lib, gauss) < 1e-5, "{case:?}: {lib} vs gauss {gauss}");
        assert!(rel_err(lib, closed) < 1e-6, "{case:?}: {lib} vs closed {closed}");
    }
}

#[test]
fn exponent_bookkeeping() {
    for case in case_matrix() {
        let (p, _) = case.exponents();
        let lib = match case {
            Case::T { l, n, sigma } => t_exponent(ModelTerm::from_index(l).unwrap(), sigma, n),
            Case::J { l, k, n, sigma } => c(j_exponent(l, k, sigma, n), 0.0),
        };
        assert!((lib - p).norm() < 1e-15, "{case:?}");
    }
}

#[test]
fn closed_values_at_sigma_two() {
    let spec = QuadratureSpec::default();
    let pi2 = std::f64::consts::PI.powi(2);
    let t2 = t_limit_integral(2, c(2.0, 0.0), 1, &spec).unwrap().value;
    let t1 = t_limit_integral(1, c(2.0, 0.0), 1, &spec).unwrap().value;
    assert!(rel_err(t2, c(pi2 / 4.0, 0.0)) < 1e-7, "{t2}");
    assert!(rel_err(t1, c(pi2 / 8.0, 0.0)) < 1e-7, "{t1}");
}

#[test]
fn rotation_of_the_second_center() {
    let spec = QuadratureSpec::default();
    let s = c(2.2, 0.3);
    let a = t_limit_integral_towards(2, s, &[1.0, 0.0], &spec).unwrap().value;
    let b = t_limit_integral_towards(2, s, &[0.0, 1.0], &spec).unwrap().value;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let d = t_limit_integral_towards(2, s, &[r, r], &spec).unwrap().value;
    assert!(rel_err(a, b) < 1e-7, "{a} {b}");
    assert!(rel_err(a, d) < 1e-6, "{a} {d}");
}

#[test]
fn schwarz_reflection() {
    let spec = QuadratureSpec::default();
    for l in [1, 2] {
        let s = c(2.4, 0.9);
        let a = t_limit_integral(l, s, 1, &spec).unwrap().value;
        let b = t_limit_integral(l, s.conj(), 1, &spec).unwrap().value;
        assert!(rel_err(b, a.conj()) < 1e-9);
    }
}

#[test]
fn scaling_identity_between_full_and_regularized_forms() {
    let spec = QuadratureSpec {
        abs_tol: 1e-300,
        ..QuadratureSpec::default()
    };
    for (l, s, z) in [(2u32, 0.7, 1.9), (1, 1.3, 0.6), (2, 0.2, 3.0)] {
        let sigma = c(2.0, 0.0);
        let full = i_full_integral(l, sigma, s, &[z], &spec).unwrap().value;
        let reg = t_regularized_integral(l, sigma, s, &[z], &spec).unwrap().value;
        let scale = (-sigma * s.ln() + (sigma * 2.0 - 5.0 + 2.0 * l as f64) * z.ln()).exp();
        assert!(rel_err(full * scale, reg) < 1e-6, "l={l} s={s} z={z}: {} vs {reg}", full * scale);
    }
}

#[test]
fn dominated_convergence_limit() {
    let spec = QuadratureSpec {
        abs_tol: 1e-300,
        ..QuadratureSpec::default()
    };
    for sigma in [c(2.0, 0.0), c(2.5, 0.0)] {
        for l in [1u32, 2] {
            let (s, z) = (1e-3, 1e3);
            let full = i_full_integral(l, sigma, s, &[z], &spec).unwrap().value;
            let scaled = full * (-sigma * s.ln() + (sigma * 2.0 - 5.0 + 2.0 * l as f64) * z.ln()).exp();
            let limit = t_limit_integral(l, sigma, 1, &QuadratureSpec::default()).unwrap().value;
            assert!(rel_err(scaled, limit) < 1e-2, "l={l} σ={sigma}: {scaled} vs {limit}");
        }
    }
}

#[test]
fn lemma_predicate_table() {
    let table = predicate_table();
    assert_eq!(table.len(), 50);
    for (l, k, s, n) in table {
        let sigma = c(s, 0.37);
        assert_eq!(j_converges(l, k, sigma, n), lemma(k, 2.0 * s, n as i64), "l={l} k={k} σ={s} n={n}");
    }
}

#[test]
fn divergent_j_is_refused() {
    let err = j_integral(1, 1, c(1.0, 0.0), 1, &QuadratureSpec::default()).unwrap_err();
    assert!(matches!(err, QuadratureError::NotConvergent { .. }));
    // Equality case l = 1, 2 Re σ = k + 2: log-divergent at infinity.
    let err = j_integral(1, 2, c(2.0, 0.0), 1, &QuadratureSpec::default()).unwrap_err();
    assert!(matches!(err, QuadratureError::NotConvergent { .. }), "{err:?}");
}

#[test]
fn complex_sigma_in_two_dimensions() {
    for sigma in [c(3.0298, -1.1289), c(3.0, -0.5), c(2.0, -1.13)] {
        let case = Case::T { l: 2, n: 2, sigma };
        let (p, q) = case.exponents();
        let closed = closed_form_two_center(2, p, q);
        let got = library(case);
        assert!(rel_err(got, closed) < 1e-6, "σ={sigma}: {got} vs {closed}");
    }
}
