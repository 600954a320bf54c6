//! Independent reference values for the two-center model integral
//!
//! ```text
//! M = ∫₀^∞ ∫_{Rⁿ} u^p / ((u² + |v|²)^q (u² + |e − v|²)^q) dv du.
//! ```
//!
//! Two oracles live here, neither sharing code with the library:
//!
//! * a truncated tensor-product composite Gauss–Legendre rule on
//!   `[0, R] × [−R, R]ⁿ`, geometrically graded towards the singular
//!   coordinates, with Richardson extrapolation in `R ∈ {50, 100, 200}`;
//! * the closed form obtained with a Feynman parameter, evaluated with a
//!   local Stirling-series log-Gamma.

#![allow(dead_code)]

use num_complex::Complex64;
use std::f64::consts::PI;

const POINTS_PER_PANEL: usize = 10;
const GRADING_RATIO: f64 = 0.25;
const GRADING_LEVELS: usize = 13;
const RADII: [f64; 3] = [50.0, 100.0, 200.0];

/// Legendre polynomial `P_m(z)` and its derivative.
fn legendre(m: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    (p1, m as f64 * (z * p1 - p0) / (z * z - 1.0))
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` by Newton iteration.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(m);
    let mut w = Vec::with_capacity(m);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(m, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(m, z);
        x.push(z);
        w.push(2.0 / ((1.0 - z * z) * dp * dp));
    }
    (x, w)
}

struct Axis {
    x: Vec<f64>,
    w: Vec<f64>,
    /// 0 inside radius 50, 1 inside 100, 2 inside 200.
    shell: Vec<usize>,
}

impl Axis {
    fn push_panel(&mut self, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (t, wt) in rule.0.iter().zip(&rule.1) {
            let x = mid + half * t;
            self.x.push(x);
            self.w.push(half * wt);
            let shell = RADII.iter().position(|r| x.abs() <= *r).unwrap_or(2);
            self.shell.push(shell);
        }
    }

    /// Panels on `[a, b]` shrinking geometrically towards one end.
    fn push_graded(&mut self, a: f64, b: f64, towards_a: bool, rule: &(Vec<f64>, Vec<f64>)) {
        let d = b - a;
        let mut cuts: Vec<f64> = (0..=GRADING_LEVELS)
            .map(|k| GRADING_RATIO.powi(k as i32))
            .collect();
        cuts.push(0.0);
        cuts.reverse();
        for pair in cuts.windows(2) {
            if towards_a {
                self.push_panel(a + d * pair[0], a + d * pair[1], rule);
            } else {
                self.push_panel(b - d * pair[1], b - d * pair[0], rule);
            }
        }
    }

    /// Doubling panels from `start` outwards to 200, split at 50 and 100.
    fn push_far(&mut self, start: f64, sign: f64, rule: &(Vec<f64>, Vec<f64>)) {
        let mut cuts = vec![start];
        let mut width = 1.0;
        let mut x = start;
        while x + width < RADII[0] {
            x += width;
            cuts.push(x);
            width *= 2.0;
        }
        cuts.extend(RADII);
        for pair in cuts.windows(2) {
            let (a, b) = (sign * pair[0], sign * pair[1]);
            self.push_panel(a.min(b), a.max(b), rule);
        }
    }

    fn build(singular: &[f64], half_line: bool) -> Self {
        let rule = gauss_legendre(POINTS_PER_PANEL);
        let mut axis = Axis {
            x: Vec::new(),
            w: Vec::new(),
            shell: Vec::new(),
        };
        let mut pts: Vec<f64> = singular.to_vec();
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let lo = pts[0];
        let hi = pts[pts.len() - 1];
        // Core breakpoints with grading flags: (a, b, singular end is a?).
        let mut core: Vec<(f64, f64, bool)> = Vec::new();
        if !half_line {
            core.push((lo - 1.0, lo, false));
        }
        for pair in pts.windows(2) {
            let m = 0.5 * (pair[0] + pair[1]);
            core.push((pair[0], m, true));
            core.push((m, pair[1], false));
        }
        core.push((hi, hi + 1.0, true));
        for (a, b, towards_a) in core {
            axis.push_graded(a, b, towards_a, &rule);
        }
        axis.push_far(hi + 1.0, 1.0, &rule);
        if !half_line {
            axis.push_far(-(lo - 1.0), -1.0, &rule);
        }
        axis
    }
}

/// Truncated integrals at the three radii, one pass over the tensor grid.
pub fn truncated_two_center(n: usize, p: Complex64, q: Complex64, target: &[f64]) -> [Complex64; 3] {
    assert!(n == 1 || n == 2, "oracle supports n = 1, 2");
    let u_axis = Axis::build(&[0.0], true);
    let v_axes: Vec<Axis> = target.iter().map(|&e| Axis::build(&[0.0, e], false)).collect();
    let mut bins = [Complex64::new(0.0, 0.0); 3];
    let eval = |u: f64, v: &[f64]| -> Complex64 {
        let u2 = u * u;
        let mut a = u2;
        let mut b = u2;
        for (vi, ei) in v.iter().zip(target) {
            a += vi * vi;
            b += (ei - vi) * (ei - vi);
        }
        (p * u.ln() - q * (a.ln() + b.ln())).exp()
    };
    for (iu, &u) in u_axis.x.iter().enumerate() {
        let wu = u_axis.w[iu];
        let su = u_axis.shell[iu];
        let a0 = &v_axes[0];
        if n == 1 {
            for (i, &v) in a0.x.iter().enumerate() {
                let shell = su.max(a0.shell[i]);
                bins[shell] += eval(u, &[v]) * (wu * a0.w[i]);
            }
        } else {
            let a1 = &v_axes[1];
            for (i, &v0) in a0.x.iter().enumerate() {
                let w0 = wu * a0.w[i];
                let s0 = su.max(a0.shell[i]);
                let mut local = [Complex64::new(0.0, 0.0); 3];
                for (j, &v1) in a1.x.iter().enumerate() {
                    local[s0.max(a1.shell[j])] += eval(u, &[v0, v1]) * a1.w[j];
                }
                for k in 0..3 {
                    bins[k] += local[k] * w0;
                }
            }
        }
    }
    [bins[0], bins[0] + bins[1], bins[0] + bins[1] + bins[2]]
}

/// Gauss oracle: truncated integrals with the tails `R^{−a}` and `R^{−a−2}`
/// removed by two Richardson steps, `a = 4q − p − n − 1`. Odd far-field
/// terms cancel on the symmetric box.
pub fn gauss_two_center(n: usize, p: Complex64, q: Complex64, target: &[f64]) -> Complex64 {
    let i = truncated_two_center(n, p, q, target);
    let a = q * 4.0 - p - (n as f64 + 1.0);
    let r1 = (-a * 2f64.ln()).exp();
    let r2 = (-(a + 2.0) * 2f64.ln()).exp();
    let j0 = (i[1] - r1 * i[0]) / (1.0 - r1);
    let j1 = (i[2] - r1 * i[1]) / (1.0 - r1);
    (j1 - r2 * j0) / (1.0 - r2)
}

/// Complex log-Gamma by upward recurrence and the Stirling series.
pub fn ln_gamma(z: Complex64) -> Complex64 {
    let mut z = z;
    let mut shift = Complex64::new(0.0, 0.0);
    while z.re < 15.0 {
        shift += z.ln();
        z += 1.0;
    }
    let inv = z.inv();
    let inv2 = inv * inv;
    // Bernoulli terms B_{2k} / (2k(2k − 1) z^{2k−1}).
    let coeffs = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360360.0,
    ];
    let mut series = Complex64::new(0.0, 0.0);
    let mut pow = inv;
    for c in coeffs {
        series += pow * c;
        pow *= inv2;
    }
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + series - shift
}

/// Feynman-parameter closed form of the unregularised two-center integral:
/// `π^{n/2} Γ((p+1)/2) Γ(2q − (n+p+1)/2) Γ(a)² / (2 Γ(q)² Γ(2a))`,
/// `a = (p + 1 + n)/2 − q`.
pub fn closed_form_two_center(n: usize, p: Complex64, q: Complex64) -> Complex64 {
    let nf = n as f64;
    let a = (p + 1.0 + nf) / 2.0 - q;
    let log = ln_gamma((p + 1.0) / 2.0) + ln_gamma(q * 2.0 - (p + 1.0 + nf) / 2.0)
        + ln_gamma(a) * 2.0
        - ln_gamma(q) * 2.0
        - ln_gamma(a * 2.0);
    log.exp() * PI.powf(nf / 2.0) / 2.0
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn rel_err(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

/// One entry of the oracle comparison matrix.
#[derive(Debug, Clone, Copy)]
pub enum Case {
    /// `T_l(σ)` in dimension `n`.
    T { l: u32, n: usize, sigma: Complex64 },
    /// `J(l, k, σ)` in dimension `n`.
    J { l: u32, k: i64, n: usize, sigma: Complex64 },
}

impl Case {
    pub fn n(&self) -> usize {
        match *self {
            Case::T { n, .. } | Case::J { n, .. } => n,
        }
    }

    /// `(p, q)` of the two-center integral: `T_l` has `p = 2σ + 4 − 2l − n`,
    /// `q = σ`; `J` has `p = 2 Re σ + k + 3 − 2l − n`, `q = Re σ`.
    pub fn exponents(&self) -> (Complex64, Complex64) {
        match *self {
            Case::T { l, n, sigma } => (sigma * 2.0 + 4.0 - 2.0 * l as f64 - n as f64, sigma),
            Case::J { l, k, n, sigma } => (
                c(2.0 * sigma.re + k as f64 + 3.0 - 2.0 * l as f64 - n as f64, 0.0),
                c(sigma.re, 0.0),
            ),
        }
    }
}

/// Ten integrals covering both terms, n = 1, 2, real and complex σ.
pub fn case_matrix() -> Vec<Case> {
    vec![
        Case::T { l: 2, n: 1, sigma: c(2.0, 0.0) },
        Case::T { l: 1, n: 1, sigma: c(2.0, 0.0) },
        Case::T { l: 2, n: 1, sigma: c(2.5, 0.0) },
        Case::T { l: 1, n: 1, sigma: c(2.5, 0.5) },
        Case::T { l: 2, n: 2, sigma: c(2.0, 0.0) },
        Case::T { l: 1, n: 2, sigma: c(3.0, 0.0) },
        Case::T { l: 2, n: 2, sigma: c(2.3, 0.4) },
        Case::J { l: 2, k: 1, n: 1, sigma: c(2.0, 0.0) },
        Case::J { l: 1, k: 1, n: 2, sigma: c(2.5, 0.0) },
        Case::J { l: 2, k: 2, n: 1, sigma: c(3.0, 0.7) },
    ]
}

/// `k ≥ 1` and `2 Re σ ≥ max{n − k + 1, k + 2}`.
pub fn lemma(k: i64, two_re_sigma: f64, n: i64) -> bool {
    k >= 1 && two_re_sigma >= ((n - k + 1).max(k + 2)) as f64
}

/// Fifty `(l, k, Re σ, n)` rows, including exact equality cases.
pub fn predicate_table() -> Vec<(u32, i64, f64, usize)> {
    let mut rows = Vec::new();
    let sigmas = [1.5, 2.0, 2.5, 3.0, 3.5];
    for (i, &s) in sigmas.iter().enumerate() {
        for k in 1..=5i64 {
            let l = 1 + ((i + k as usize) % 2) as u32;
            let n = 1 + ((i * 5 + k as usize) % 3);
            rows.push((l, k, s, n));
        }
    }
    for (i, k) in (1..=5i64).enumerate() {
        let n = 1 + i % 3;
        let bound = ((n as i64 - k + 1).max(k + 2)) as f64;
        rows.push((1, k, bound / 2.0, n));
        rows.push((2, k, bound / 2.0 - 0.25, n));
        for j in 0..3 {
            rows.push((2, k, bound / 2.0 + 0.5 * j as f64 + 0.1, n));
        }
    }
    rows
}
