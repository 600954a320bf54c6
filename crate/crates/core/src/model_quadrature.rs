//! Hyperbolic-space model integrals.
//!
//! Every integral here is an instance of the two-center integral
//!
//! ```text
//! M = ∫₀^∞ ∫_{Rⁿ} u^p / ((u² + ε₀² + |v|²)^q (u² + ε₁² + |e − v|²)^q) dv du
//! ```
//!
//! with a unit target vector `e`. The limit integrals `T_l(σ)` use
//! `p = 2σ + 4 − 2l − n`, `q = σ`, `ε = 0`; the lemma integrals `J(l, k, σ)`
//! use `p = 2Re σ + k + 3 − 2l − n`, `q = Re σ`. The regularised form
//! `T_l(σ, s, z)` sets `ε₀ = s/|z|`, `ε₁ = 1/|z|` and `e = z/|z|`.
//!
//! The integral is nested. The inner `u` integral runs in `ln u`, where the
//! integrand is smooth with exponential tails even for complex exponents.
//! The outer integral runs over `v_i = tan φ_i` with cells split at
//! `φ_i ∈ {0, atan e_i}`, which puts the centers `v = 0` and `v = e` on cell
//! corners.

use crate::cubature::{self, CubatureOptions};
use crate::special::{gamma, is_gamma_pole};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::atomic::{AtomicUsize, Ordering};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("integral is not absolutely convergent: {reason}")]
    NotConvergent { reason: String },
    #[error(
        "quadrature did not reach tolerance: value {value}, estimated error {est_error:e} after {evals} evaluations"
    )]
    QuadratureFailure {
        value: Complex64,
        est_error: f64,
        evals: usize,
    },
    #[error("Gamma pole at argument {at}")]
    GammaPole { at: Complex64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Tolerances for the model integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-7,
            abs_tol: 1e-10,
            max_subdivisions: 400_000,
        }
    }
}

impl QuadratureSpec {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), QuadratureError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(QuadratureError::InvalidInput(
                "tolerances must be positive".into(),
            ));
        }
        if self.max_subdivisions < 1 {
            return Err(QuadratureError::InvalidInput(
                "max_subdivisions must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn options(&self) -> CubatureOptions {
        CubatureOptions {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_subdivisions: self.max_subdivisions,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelIntegralValue {
    pub value: Complex64,
    pub est_error: f64,
    pub converged: bool,
    pub n_evals: usize,
}

/// The two model terms: `l = 1` multiplies the metric correction `H`,
/// `l = 2` multiplies the potential correction `W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelTerm {
    Metric,
    Potential,
}

impl ModelTerm {
    pub fn from_index(l: u32) -> Result<Self, QuadratureError> {
        match l {
            1 => Ok(Self::Metric),
            2 => Ok(Self::Potential),
            other => Err(QuadratureError::InvalidInput(format!(
                "model term index must be 1 or 2, got {other}"
            ))),
        }
    }

    pub fn index(self) -> u32 {
        match self {
            Self::Metric => 1,
            Self::Potential => 2,
        }
    }

    fn l(self) -> f64 {
        self.index() as f64
    }
}

fn check_dim(n: usize) -> Result<(), QuadratureError> {
    if (1..=3).contains(&n) {
        Ok(())
    } else {
        Err(QuadratureError::InvalidInput(format!(
            "boundary dimension must be 1..=3, got {n}"
        )))
    }
}

/// Two-center integrand in `n + 1` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoCenterIntegral {
    pub n: usize,
    pub u_power: Complex64,
    pub center_power: Complex64,
    pub target: Vec<f64>,
    pub reg_origin_sq: f64,
    pub reg_target_sq: f64,
}

impl TwoCenterIntegral {
    pub fn new(n: usize, u_power: Complex64, center_power: Complex64) -> Self {
        let mut target = vec![0.0; n];
        target[0] = 1.0;
        Self {
            n,
            u_power,
            center_power,
            target,
            reg_origin_sq: 0.0,
            reg_target_sq: 0.0,
        }
    }

    /// Absolute convergence from power counting at `u → 0`, at the two
    /// centers (only when unregularised) and at infinity.
    pub fn check_convergence(&self) -> Result<(), QuadratureError> {
        let n = self.n as f64;
        let p = self.u_power.re;
        let q = self.center_power.re;
        if p <= -1.0 {
            return Err(QuadratureError::NotConvergent {
                reason: format!("u-exponent {p} must exceed -1"),
            });
        }
        let at_center = p - 2.0 * q + n;
        if (self.reg_origin_sq == 0.0 || self.reg_target_sq == 0.0) && at_center <= -1.0 {
            return Err(QuadratureError::NotConvergent {
                reason: format!("local exponent {at_center} at a center must exceed -1"),
            });
        }
        let decay = 4.0 * q - p;
        if decay <= n + 1.0 {
            return Err(QuadratureError::NotConvergent {
                reason: format!("decay exponent {decay} must exceed n + 1 = {}", n + 1.0),
            });
        }
        Ok(())
    }

    fn breakpoints(&self) -> Vec<Vec<f64>> {
        self.target
            .iter()
            .map(|&e| {
                let mut axis = vec![-FRAC_PI_2, 0.0, FRAC_PI_2];
                let c = e.atan();
                if c.abs() > 1e-12 {
                    axis.push(c);
                }
                axis.sort_by(f64::total_cmp);
                axis
            })
            .collect()
    }

    /// `∫₀^∞ u^p (u² + a₀)^{−q} (u² + a₁)^{−q} du` in `s = ln u`, with the
    /// tails beyond `ln √a ∓ INNER_MARGIN` added in closed form.
    fn inner(&self, a0: f64, a1: f64, opts: &CubatureOptions) -> cubature::CubatureResult {
        let (p1, q) = (self.u_power + 1.0, self.center_power);
        let (ln0, ln1) = (a0.ln(), a1.ln());
        let g = |s: f64| {
            let e2 = 2.0 * s;
            let log = p1 * s - q * (log_add(e2, ln0) + log_add(e2, ln1));
            Complex64::from_polar(log.re.exp(), log.im)
        };
        let (m0, m1) = (0.5 * ln0.min(ln1), 0.5 * ln0.max(ln1));
        let (lo, hi) = (m0 - INNER_MARGIN, m1 + INNER_MARGIN);
        let mut cuts = vec![lo, m0];
        if m1 - m0 > 1e-9 {
            cuts.push(m1);
        }
        cuts.push(hi);
        let mut r = cubature::integrate_line(&g, &cuts, opts);
        let left = (p1 * lo - q * (ln0 + ln1)).exp() / p1;
        let decay = p1 - q * 4.0;
        r.value += left - (decay * hi).exp() / decay;
        r
    }

    /// Outer integrand over `v_i = tan φ_i`, Jacobian included.
    fn eval(&self, phi: &[f64], opts: &CubatureOptions, evals: &AtomicUsize) -> Complex64 {
        let mut a0 = self.reg_origin_sq;
        let mut a1 = self.reg_target_sq;
        let mut jac = 1.0;
        for (ph, e) in phi.iter().zip(&self.target) {
            let v = ph.tan();
            let c = ph.cos();
            jac /= c * c;
            a0 += v * v;
            a1 += (v - e) * (v - e);
        }
        let r = self.inner(a0, a1, opts);
        evals.fetch_add(r.evals, Ordering::Relaxed);
        r.value * jac
    }

    pub fn integrate(&self, spec: &QuadratureSpec) -> Result<ModelIntegralValue, QuadratureError> {
        spec.validate()?;
        check_dim(self.n)?;
        if self.target.len() != self.n {
            return Err(QuadratureError::InvalidInput(
                "target vector length must equal n".into(),
            ));
        }
        let norm: f64 = self.target.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(QuadratureError::InvalidInput(format!(
                "target vector must be a unit vector, |e| = {norm}"
            )));
        }
        self.check_convergence()?;
        let outer = spec.options();
        let inner = CubatureOptions {
            rel_tol: 1e-2 * outer.rel_tol,
            abs_tol: 0.0,
            max_subdivisions: 2000,
        };
        let evals = AtomicUsize::new(0);
        let f = |x: &[f64]| self.eval(x, &inner, &evals);
        let axes = self.breakpoints();
        let mut r = if self.n == 1 {
            cubature::integrate_line(&|x: f64| f(&[x]), &axes[0], &outer)
        } else {
            cubature::integrate(&f, &axes, &outer)
        };
        r.evals = evals.into_inner();
        finish(r)
    }
}

/// Width in `ln u` beyond the outermost scale where the inner integrand is
/// replaced by its leading power.
const INNER_MARGIN: f64 = 12.0;

/// `ln(eˣ + eʸ)` without overflow.
fn log_add(x: f64, y: f64) -> f64 {
    let (hi, lo) = if x > y { (x, y) } else { (y, x) };
    hi + (lo - hi).exp().ln_1p()
}

fn finish(r: cubature::CubatureResult) -> Result<ModelIntegralValue, QuadratureError> {
    if r.converged {
        Ok(ModelIntegralValue {
            value: r.value,
            est_error: r.error,
            converged: true,
            n_evals: r.evals,
        })
    } else {
        Err(QuadratureError::QuadratureFailure {
            value: r.value,
            est_error: r.error,
            evals: r.evals,
        })
    }
}

/// The lemma hypothesis `2 Re σ ≥ max{n − k + 1, k + 2}` with `k ≥ 1`.
pub fn j_converges(l: u32, k: i64, sigma: Complex64, n: usize) -> bool {
    if !(l == 1 || l == 2) || k < 1 {
        return false;
    }
    let n = n as i64;
    let bound = (n - k + 1).max(k + 2) as f64;
    2.0 * sigma.re >= bound
}

/// u-exponent of `J(l, k, σ)`.
pub fn j_exponent(l: u32, k: i64, sigma: Complex64, n: usize) -> f64 {
    2.0 * sigma.re + k as f64 + 3.0 - 2.0 * l as f64 - n as f64
}

/// `J(l, k, σ)`, integrated with `Re σ` in place of σ.
pub fn j_integral(
    l: u32,
    k: i64,
    sigma: Complex64,
    n: usize,
    spec: &QuadratureSpec,
) -> Result<ModelIntegralValue, QuadratureError> {
    ModelTerm::from_index(l)?;
    check_dim(n)?;
    if !j_converges(l, k, sigma, n) {
        return Err(QuadratureError::NotConvergent {
            reason: format!(
                "2 Re σ = {} is below max{{n - k + 1, k + 2}} for l={l}, k={k}, n={n}",
                2.0 * sigma.re
            ),
        });
    }
    let p = Complex64::new(j_exponent(l, k, sigma, n), 0.0);
    let q = Complex64::new(sigma.re, 0.0);
    TwoCenterIntegral::new(n, p, q).integrate(spec)
}

/// u-exponent of the limit integral `T_l(σ)`: `2σ + 4 − 2l − n`.
pub fn t_exponent(term: ModelTerm, sigma: Complex64, n: usize) -> Complex64 {
    sigma * 2.0 + 4.0 - 2.0 * term.l() - n as f64
}

/// `T_l(σ)` with the second center at `e₁`.
pub fn t_limit_integral(
    l: u32,
    sigma: Complex64,
    n: usize,
    spec: &QuadratureSpec,
) -> Result<ModelIntegralValue, QuadratureError> {
    check_dim(n)?;
    let mut e = vec![0.0; n];
    e[0] = 1.0;
    t_limit_integral_towards(l, sigma, &e, spec)
}

/// `T_l(σ)` with the second center at an arbitrary unit vector.
pub fn t_limit_integral_towards(
    l: u32,
    sigma: Complex64,
    target: &[f64],
    spec: &QuadratureSpec,
) -> Result<ModelIntegralValue, QuadratureError> {
    let term = ModelTerm::from_index(l)?;
    let n = target.len();
    check_dim(n)?;
    let mut integral = TwoCenterIntegral::new(n, t_exponent(term, sigma, n), sigma);
    integral.target = target.to_vec();
    integral.integrate(spec)
}

/// The regularised integral `T_l(σ, s, z)` reached from `I_l` by the
/// substitution `|z| u = s/t`, `U = (t/s)|z| V`.
pub fn t_regularized_integral(
    l: u32,
    sigma: Complex64,
    s: f64,
    z: &[f64],
    spec: &QuadratureSpec,
) -> Result<ModelIntegralValue, QuadratureError> {
    let term = ModelTerm::from_index(l)?;
    let n = z.len();
    check_dim(n)?;
    let zn = norm(z);
    if !(s > 0.0) || zn == 0.0 {
        return Err(QuadratureError::InvalidInput(
            "need s > 0 and z ≠ 0".into(),
        ));
    }
    let mut integral = TwoCenterIntegral::new(n, t_exponent(term, sigma, n), sigma);
    integral.target = z.iter().map(|x| x / zn).collect();
    integral.reg_origin_sq = (s / zn).powi(2);
    integral.reg_target_sq = zn.powi(-2);
    integral.integrate(spec)
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `I_l(σ, s, z)` integrated in its own `(t, U)` variables.
///
/// `U` is rescaled as `U = (t c / s) W` with `c = max(|z|, 1)`, which pins
/// the peak of the second factor at the fixed point `W = z/c`; then
/// `t = τ tan θ` with `τ = s/(1 + |z|)` and `W_i = tan φ_i`.
pub fn i_full_integral(
    l: u32,
    sigma: Complex64,
    s: f64,
    z: &[f64],
    spec: &QuadratureSpec,
) -> Result<ModelIntegralValue, QuadratureError> {
    let term = ModelTerm::from_index(l)?;
    spec.validate()?;
    let n = z.len();
    check_dim(n)?;
    if !(s > 0.0) || !z.iter().all(|x| x.is_finite()) {
        return Err(QuadratureError::InvalidInput(
            "need s > 0 and finite z".into(),
        ));
    }
    // Same convergence gate as T_l.
    TwoCenterIntegral::new(n, t_exponent(term, sigma, n), sigma).check_convergence()?;

    let zn = norm(z);
    let c = zn.max(1.0);
    let tau = s / (1.0 + zn);
    let outer = sigma + 5.0 - 2.0 * term.l();
    let (ln_s, ln_c) = (s.ln(), c.ln());
    let nf = n as f64;
    let f = |x: &[f64]| {
        let (theta, phi) = x.split_first().expect("nonempty point");
        let ct = theta.cos();
        let t = tau * theta.tan();
        let mut jac = tau / (ct * ct);
        let stretch = t * c / s;
        let mut w2 = 0.0;
        let mut b = 1.0 + (s / t).powi(2);
        for (ph, zi) in phi.iter().zip(z) {
            let w = ph.tan();
            let cp = ph.cos();
            jac /= cp * cp;
            w2 += w * w;
            let d = zi - c * w;
            b += d * d;
        }
        let a = 1.0 + t * t + stretch * stretch * w2;
        let ln_t = t.ln();
        let log = sigma * ln_t - sigma * (a.ln() + b.ln()) + outer * (ln_s - ln_t) - ln_t
            + nf * (ln_t + ln_c - ln_s);
        let mag = log.re.exp() * jac;
        if mag == 0.0 || !mag.is_finite() {
            return Complex64::new(if mag.is_finite() { 0.0 } else { mag }, 0.0);
        }
        Complex64::from_polar(mag, log.im)
    };
    let mut axes = vec![vec![0.0, FRAC_PI_4, FRAC_PI_2]];
    for zi in z {
        let mut axis = vec![-FRAC_PI_2, 0.0, FRAC_PI_2];
        let w = (zi / c).atan();
        if w.abs() > 1e-12 {
            axis.push(w);
        }
        axis.sort_by(f64::total_cmp);
        axes.push(axis);
    }
    finish(cubature::integrate(&f, &axes, &spec.options()))
}

/// Normalising constant `π^{−n/2}/2 · Γ(σ)/Γ(σ − (n−2)/2)` of the Green kernel.
pub fn green_constant(sigma: Complex64, n: usize) -> Result<Complex64, QuadratureError> {
    let shifted = sigma - (n as f64 - 2.0) / 2.0;
    for at in [sigma, shifted] {
        if is_gamma_pole(at) {
            return Err(QuadratureError::GammaPole { at });
        }
    }
    Ok(PI.powf(-(n as f64) / 2.0) / 2.0 * gamma(sigma) / gamma(shifted))
}

/// Explicit scalar part of the Green kernel of `Δ₀ − σ(n − σ)`:
/// `const(σ) · s^σ / (1 + s² + |z|²)^σ`.
pub fn green_kernel(s: f64, z: &[f64], sigma: Complex64, n: usize) -> Result<Complex64, QuadratureError> {
    if !(s > 0.0) {
        return Err(QuadratureError::InvalidInput("need s > 0".into()));
    }
    if z.len() != n {
        return Err(QuadratureError::InvalidInput("z must have length n".into()));
    }
    let c = green_constant(sigma, n)?;
    let base = 1.0 + s * s + z.iter().map(|x| x * x).sum::<f64>();
    Ok(c * (sigma * (s.ln() - base.ln())).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn lemma_predicate_examples() {
        assert!(j_converges(1, 1, c(2.0, 0.0), 2));
        assert!(!j_converges(1, 1, c(1.4, 0.0), 2));
        // k = n + 1: max{0, n + 3}
        let n = 2;
        assert!(j_converges(2, 3, c(2.5, 0.0), n));
        assert!(!j_converges(2, 3, c(2.49, 0.0), n));
        assert!(!j_converges(1, 0, c(10.0, 0.0), 1));
        assert!(!j_converges(3, 1, c(10.0, 0.0), 1));
    }

    #[test]
    fn below_threshold_is_rejected_before_integrating() {
        let err = j_integral(1, 1, c(1.4, 0.0), 2, &QuadratureSpec::default()).unwrap_err();
        assert!(matches!(err, QuadratureError::NotConvergent { .. }));
    }

    #[test]
    fn limit_exponents() {
        // T₂ carries u^{2σ − n}; T₁ carries u^{2σ + 2 − n}.
        assert_eq!(t_exponent(ModelTerm::Potential, c(2.0, 0.5), 1), c(3.0, 1.0));
        assert_eq!(t_exponent(ModelTerm::Metric, c(2.0, 0.5), 1), c(5.0, 1.0));
        // T_l(σ) coincides with J(l, 1, σ) for real σ.
        for l in [1u32, 2] {
            let t = t_exponent(ModelTerm::from_index(l).unwrap(), c(2.3, 0.0), 2);
            assert!((t.re - j_exponent(l, 1, c(2.3, 0.0), 2)).abs() < 1e-15);
        }
    }

    #[test]
    fn convergence_gate_for_limit_integrals() {
        let spec = QuadratureSpec::default();
        // T₁ decays like R^{2 − 2σ} against volume R^{n}: needs 2 Re σ > 3.
        let err = t_limit_integral(1, c(1.5, 0.0), 1, &spec).unwrap_err();
        assert!(matches!(err, QuadratureError::NotConvergent { .. }));
        let err = t_limit_integral(2, c(0.4, 0.0), 1, &spec).unwrap_err();
        assert!(matches!(err, QuadratureError::NotConvergent { .. }));
    }

    #[test]
    fn green_constant_in_two_dimensions_is_one_over_two_pi() {
        for sigma in [c(1.3, 0.0), c(2.0, 0.7), c(3.5, -1.0)] {
            let k = green_constant(sigma, 2).unwrap();
            assert!((k - c(1.0 / (2.0 * PI), 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn green_kernel_on_the_unit_point() {
        let sigma = c(1.7, 0.2);
        let g = green_kernel(1.0, &[0.0], sigma, 1).unwrap();
        let expected = green_constant(sigma, 1).unwrap() * (-sigma * 2f64.ln()).exp();
        assert!((g - expected).norm() < 1e-15);
    }

    #[test]
    fn green_kernel_pole() {
        // n = 4 would shift by one; with n = 2, σ = 0 hits Γ(0).
        assert!(matches!(
            green_kernel(1.0, &[0.0, 0.0], c(0.0, 0.0), 2),
            Err(QuadratureError::GammaPole { .. })
        ));
        assert!(matches!(
            green_kernel(1.0, &[0.0], c(-0.5, 0.0), 1),
            Err(QuadratureError::GammaPole { .. })
        ));
    }

    #[test]
    fn green_kernel_decay_slope() {
        let sigma = c(1.8, 0.0);
        let zs = [10.0, 20.0, 40.0, 100.0];
        let pts: Vec<(f64, f64)> = zs
            .iter()
            .map(|&z| {
                let g = green_kernel(0.5, &[z, 0.0], sigma, 2).unwrap();
                (z.ln(), g.norm().ln())
            })
            .collect();
        let slope = (pts[3].1 - pts[0].1) / (pts[3].0 - pts[0].0);
        assert!((slope + 2.0 * sigma.re).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let spec = QuadratureSpec {
            rel_tol: 0.0,
            ..QuadratureSpec::default()
        };
        assert!(matches!(
            t_limit_integral(2, c(2.0, 0.0), 1, &spec),
            Err(QuadratureError::InvalidInput(_))
        ));
    }
}
