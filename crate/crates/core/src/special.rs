//! Special functions on complex arguments.

use num_complex::Complex64;
use std::f64::consts::PI;

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_P: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Distance below which an argument is treated as sitting on a Gamma pole.
pub const POLE_TOL: f64 = 1e-12;

/// True when `z` is (numerically) one of 0, -1, -2, ...
pub fn is_gamma_pole(z: Complex64) -> bool {
    if z.im.abs() > POLE_TOL || z.re > POLE_TOL {
        return false;
    }
    (z.re - z.re.round()).abs() <= POLE_TOL
}

/// Γ(z) for complex `z`. Returns an infinite value on the poles.
pub fn gamma(z: Complex64) -> Complex64 {
    if is_gamma_pole(z) {
        return Complex64::new(f64::INFINITY, 0.0);
    }
    if z.re < 0.5 {
        // Γ(z)Γ(1−z) = π / sin(πz)
        let s = (z * PI).sin();
        return Complex64::new(PI, 0.0) / (s * gamma(Complex64::new(1.0, 0.0) - z));
    }
    let z = z - 1.0;
    let mut x = Complex64::new(LANCZOS_P[0], 0.0);
    for (i, p) in LANCZOS_P.iter().enumerate().skip(1) {
        x += *p / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * (t.ln() * (z + 0.5) - t).exp() * x
}

/// 1/Γ(z), an entire function: exactly zero on the Gamma poles.
pub fn recip_gamma(z: Complex64) -> Complex64 {
    if is_gamma_pole(z) {
        Complex64::new(0.0, 0.0)
    } else {
        gamma(z).inv()
    }
}

/// Gauss hypergeometric series ₂F₁(a, b; c; x) for real `0 ≤ x < 1`.
///
/// Summation stops once a term falls below `1e-17` of the running sum.
/// Panics when `c` is a Gamma pole, where the series is undefined.
pub fn hyp2f1(a: Complex64, b: Complex64, c: Complex64, x: f64) -> Complex64 {
    assert!((0.0..1.0).contains(&x), "hyp2f1 series needs 0 <= x < 1, got {x}");
    assert!(!is_gamma_pole(c), "hyp2f1: c must not be a nonpositive integer");
    let mut sum = Complex64::new(1.0, 0.0);
    let mut term = Complex64::new(1.0, 0.0);
    for k in 0..100_000 {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * x;
        sum += term;
        if term.norm() <= 1e-17 * sum.norm() && k > 2 {
            break;
        }
    }
    sum
}
