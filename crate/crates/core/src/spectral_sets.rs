//! Exceptional energies: the interval part of Ω in the λ²-plane, the
//! discrete family Ω′ where an indicial root reaches `(n − k)/2`, a
//! user-supplied exclusion list standing in for resolvent poles, and a
//! heuristic zero scan for the model-integral factors.

use crate::boundary_jets::BoundaryPatch;
use crate::boundary_jets::ComplexEnergy;
use crate::serde_util;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Display;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SetsError {
    #[error("evaluation failed at {at}: {message}")]
    EvaluationFailure { at: Complex64, message: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// An energy where `(σ − n/2)² = k²/4` at grid point `y_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePoint {
    pub k: u32,
    pub y_index: usize,
    pub lambda_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalSet {
    /// `[a, b]` in the λ²-plane.
    pub interval_lambda_sq: [f64; 2],
    pub mode_points: Vec<ModePoint>,
    #[serde(with = "serde_util::complex_vec")]
    pub user_excluded: Vec<Complex64>,
}

impl ExceptionalSet {
    pub fn from_patch(patch: &BoundaryPatch, k_max: u32, user_excluded: Vec<Complex64>) -> Self {
        Self {
            interval_lambda_sq: omega_interval(patch),
            mode_points: omega_prime_modes(patch, k_max),
            user_excluded,
        }
    }

    /// Union with another set: hull of the intervals, all modes, all exclusions.
    pub fn merged(&self, other: &Self) -> Self {
        let mut mode_points = self.mode_points.clone();
        mode_points.extend(other.mode_points.iter().cloned());
        let mut user_excluded = self.user_excluded.clone();
        user_excluded.extend(other.user_excluded.iter().copied());
        Self {
            interval_lambda_sq: [
                self.interval_lambda_sq[0].min(other.interval_lambda_sq[0]),
                self.interval_lambda_sq[1].max(other.interval_lambda_sq[1]),
            ],
            mode_points,
            user_excluded,
        }
    }

    /// Distinct mode values, sorted.
    pub fn distinct_mode_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.mode_points.iter().map(|m| m.lambda_sq).collect();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        v
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// `[min V₀ − α_M² n²/4 + n²/4, max V₀ − α_m² n²/4 + n²/4]`.
pub fn omega_interval(patch: &BoundaryPatch) -> [f64; 2] {
    let q = (patch.n() * patch.n()) as f64 / 4.0;
    let (a_min, a_max) = min_max(patch.alpha_field());
    let (v_min, v_max) = min_max(patch.v_field(0));
    [v_min - a_max * a_max * q + q, v_max - a_min * a_min * q + q]
}

/// Every grid point and every `0 ≤ k ≤ k_max` contributes
/// `λ² = V₀ − n²/4 + α²(n² − k²)/4`, where the indicial discriminant equals
/// `k²/4` and so `σ₋ = (n − k)/2`.
pub fn omega_prime_modes(patch: &BoundaryPatch, k_max: u32) -> Vec<ModePoint> {
    let nf = patch.n() as f64;
    let mut out = Vec::with_capacity(patch.len() * (k_max as usize + 1));
    for y_index in 0..patch.len() {
        let a2 = patch.alpha(y_index).powi(2);
        let v0 = patch.v(0, y_index);
        for k in 0..=k_max {
            let kf = k as f64;
            out.push(ModePoint {
                k,
                y_index,
                lambda_sq: v0 - nf * nf / 4.0 + a2 * (nf * nf - kf * kf) / 4.0,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolatedSet {
    OmegaInterval,
    OmegaPrimeMode,
    UserExcluded,
}

impl ViolatedSet {
    pub fn label(self) -> &'static str {
        match self {
            ViolatedSet::OmegaInterval => "omega-interval",
            ViolatedSet::OmegaPrimeMode => "omega-prime-mode",
            ViolatedSet::UserExcluded => "user-excluded (D)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub set: ViolatedSet,
    pub distance: f64,
    /// Index into `mode_points` or `user_excluded`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub admissible: bool,
    pub margin: f64,
    pub distance_to_interval: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_to_modes: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_to_excluded: Option<f64>,
    /// Violations, nearest first.
    pub violations: Vec<Violation>,
}

impl Admissibility {
    pub fn nearest_violation(&self) -> Option<&Violation> {
        self.violations.first()
    }

    pub fn summary(&self) -> String {
        match self.nearest_violation() {
            None => "admissible".to_string(),
            Some(v) => format!(
                "inadmissible: {} (distance {:.3e} ≤ margin {:.3e})",
                v.set.label(),
                v.distance,
                self.margin
            ),
        }
    }
}

fn distance_to_segment(z: Complex64, [a, b]: [f64; 2]) -> f64 {
    let x = z.re.clamp(a, b);
    Complex64::new(z.re - x, z.im).norm()
}

/// Admissible iff λ² is farther than `margin` from the interval and from
/// every mode value, and λ is farther than `margin` from every excluded point.
pub fn is_admissible(energy: &ComplexEnergy, es: &ExceptionalSet, margin: f64) -> Result<Admissibility, SetsError> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(SetsError::InvalidInput(format!("margin must be positive, got {margin}")));
    }
    let l2 = energy.lambda_sq();
    let mut violations = Vec::new();
    let d_interval = distance_to_segment(l2, es.interval_lambda_sq);
    if d_interval <= margin {
        violations.push(Violation {
            set: ViolatedSet::OmegaInterval,
            distance: d_interval,
            index: None,
        });
    }
    let mut d_modes: Option<f64> = None;
    for (i, m) in es.mode_points.iter().enumerate() {
        let d = (l2 - m.lambda_sq).norm();
        d_modes = Some(d_modes.map_or(d, |x| x.min(d)));
        if d <= margin {
            violations.push(Violation {
                set: ViolatedSet::OmegaPrimeMode,
                distance: d,
                index: Some(i),
            });
        }
    }
    let mut d_excluded: Option<f64> = None;
    for (i, p) in es.user_excluded.iter().enumerate() {
        let d = (energy.lambda() - p).norm();
        d_excluded = Some(d_excluded.map_or(d, |x| x.min(d)));
        if d <= margin {
            violations.push(Violation {
                set: ViolatedSet::UserExcluded,
                distance: d,
                index: Some(i),
            });
        }
    }
    violations.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    Ok(Admissibility {
        admissible: violations.is_empty(),
        margin,
        distance_to_interval: d_interval,
        distance_to_modes: d_modes,
        distance_to_excluded: d_excluded,
        violations,
    })
}

/// Axis-aligned rectangle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub re: [f64; 2],
    pub im: [f64; 2],
}

impl Region {
    pub fn new(re: [f64; 2], im: [f64; 2]) -> Self {
        Self { re, im }
    }

    fn clamp(&self, z: Complex64) -> Complex64 {
        Complex64::new(z.re.clamp(self.re[0], self.re[1]), z.im.clamp(self.im[0], self.im[1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroScanOptions {
    /// Refined minima with `|f|` above this are discarded.
    pub zero_tol: f64,
    /// Pattern-search iterations per candidate.
    pub max_refine: usize,
}

impl Default for ZeroScanOptions {
    fn default() -> Self {
        Self {
            zero_tol: 1e-8,
            max_refine: 80,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroEstimate {
    /// Grid node `(i_re, i_im)` where the local minimum was found.
    pub cell: [usize; 2],
    #[serde(with = "serde_util::complex")]
    pub z: Complex64,
    pub abs_value: f64,
}

/// Grid scan for zeros of `f` on `region` with spacing `step`.
///
/// Nodes where `|f|` is a local minimum over their 3×3 neighbourhood are
/// refined by a shrinking 3×3 pattern search on `|f|` and kept when the
/// refined `|f|` is below `zero_tol`. Zeros closer together than the grid
/// spacing may be merged or missed: completeness holds only up to the grid
/// resolution. Results are sorted by real part, then imaginary part.
pub fn zero_scan<F, E>(f: &F, region: Region, step: f64, opts: &ZeroScanOptions) -> Result<Vec<ZeroEstimate>, SetsError>
where
    F: Fn(Complex64) -> Result<Complex64, E> + Sync,
    E: Display,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(SetsError::InvalidInput(format!("step must be positive, got {step}")));
    }
    if !(region.re[0] <= region.re[1] && region.im[0] <= region.im[1]) {
        return Err(SetsError::InvalidInput("region bounds are reversed".into()));
    }
    let count = |lo: f64, hi: f64| ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let nr = count(region.re[0], region.re[1]);
    let ni = count(region.im[0], region.im[1]);
    if nr.saturating_mul(ni) > 4_000_000 {
        return Err(SetsError::InvalidInput("scan grid exceeds 4e6 nodes".into()));
    }
    let node = |i: usize, j: usize| Complex64::new(region.re[0] + i as f64 * step, region.im[0] + j as f64 * step);
    let eval = |z: Complex64| -> Result<f64, SetsError> {
        f(z).map(|v| v.norm()).map_err(|e| SetsError::EvaluationFailure {
            at: z,
            message: e.to_string(),
        })
    };
    let values: Vec<f64> = (0..nr * ni)
        .into_par_iter()
        .map(|k| eval(node(k / ni, k % ni)))
        .collect::<Result<_, _>>()?;
    let at = |i: usize, j: usize| values[i * ni + j];

    let mut candidates = Vec::new();
    for i in 0..nr {
        for j in 0..ni {
            let v = at(i, j);
            if !v.is_finite() {
                continue;
            }
            let mut is_min = true;
            let mut strict = false;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if a < 0 || b < 0 || a >= nr as i64 || b >= ni as i64 {
                        continue;
                    }
                    let w = at(a as usize, b as usize);
                    if w < v {
                        is_min = false;
                    } else if w > v {
                        strict = true;
                    }
                }
            }
            // Plateaus are reported once, at their first node.
            let first_on_plateau = !strict && (i > 0 && at(i - 1, j) == v || j > 0 && at(i, j - 1) == v);
            if is_min && (strict || v == 0.0) && !first_on_plateau {
                candidates.push([i, j]);
            }
        }
    }

    let refined: Vec<Option<ZeroEstimate>> = candidates
        .par_iter()
        .map(|&[i, j]| {
            let mut z = node(i, j);
            let mut best = at(i, j);
            let mut h = step / 2.0;
            for _ in 0..opts.max_refine {
                if best == 0.0 || h <= 1e-15 * (1.0 + z.norm()) {
                    break;
                }
                let mut moved = false;
                for (di, dj) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let trial = region.clamp(z + Complex64::new(di * h, dj * h));
                    let v = eval(trial)?;
                    if v < best {
                        best = v;
                        z = trial;
                        moved = true;
                    }
                }
                if !moved {
                    h *= 0.5;
                }
            }
            Ok((best <= opts.zero_tol).then_some(ZeroEstimate {
                cell: [i, j],
                z,
                abs_value: best,
            }))
        })
        .collect::<Result<_, SetsError>>()?;

    let mut zeros: Vec<ZeroEstimate> = refined.into_iter().flatten().collect();
    zeros.sort_by(|a, b| a.z.re.total_cmp(&b.z.re).then(a.z.im.total_cmp(&b.z.im)));
    let mut merged: Vec<ZeroEstimate> = Vec::with_capacity(zeros.len());
    for z in zeros {
        match merged.iter_mut().find(|m| (m.z - z.z).norm() < step / 2.0) {
            Some(m) if z.abs_value < m.abs_value => *m = z,
            Some(_) => {}
            None => merged.push(z),
        }
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary_jets::{indicial_root_at, FieldSpec, PatchSpec};
    use crate::special::{gamma, recip_gamma};
    use proptest::prelude::*;
    use std::convert::Infallible;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn patch(n: usize, alpha: &str, v0: &str) -> BoundaryPatch {
        let eye = (0..n)
            .map(|a| (0..n).map(|b| FieldSpec::Constant(if a == b { 1.0 } else { 0.0 })).collect())
            .collect();
        BoundaryPatch::from_spec(&PatchSpec {
            n,
            axes: vec![8; n],
            period: None,
            alpha: FieldSpec::Expression(alpha.into()),
            v_jet: vec![FieldSpec::Expression(v0.into())],
            h_jet: vec![eye],
        })
        .unwrap()
    }

    #[test]
    fn interval_examples() {
        assert_eq!(omega_interval(&patch(2, "1", "0")), [0.0, 0.0]);
        // α = 1.5 + 0.5 cos y hits 1 and 2 on an 8-point grid; V₀ spans [0, 1].
        let p = patch(2, "1.5 + 0.5*cos(y1)", "0.5 + 0.5*cos(y2)");
        let [a, b] = omega_interval(&p);
        assert!((a + 3.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14, "{a} {b}");
        // Raising max V₀ raises b.
        let q = patch(2, "1.5 + 0.5*cos(y1)", "0.5 + 0.7*cos(y2)");
        assert!(omega_interval(&q)[1] > b);
    }

    #[test]
    fn mode_examples_feed_back_to_half_integers() {
        let p = patch(2, "1", "0");
        let modes = omega_prime_modes(&p, 2);
        let k0 = modes.iter().find(|m| m.k == 0).unwrap().lambda_sq;
        let k2 = modes.iter().find(|m| m.k == 2).unwrap().lambda_sq;
        assert_eq!(k0, 0.0);
        assert_eq!(k2, -1.0);
        for (lsq, k) in [(k0, 0.0), (k2, 2.0)] {
            let lambda = c(lsq, 0.0).sqrt();
            let s = indicial_root_at(2, 1.0, 0.0, &ComplexEnergy::new(lambda)).unwrap();
            assert!(((c(2.0, 0.0) - s) - c((2.0 - k) / 2.0, 0.0)).norm() < 1e-8);
        }
        let es = ExceptionalSet::from_patch(&p, 0, vec![]);
        assert_eq!(es.distinct_mode_values().len(), 1);
    }

    #[test]
    fn admissibility_examples() {
        let es = ExceptionalSet::from_patch(&patch(2, "1", "0"), 3, vec![c(0.5, 2.0)]);
        let ok = is_admissible(&ComplexEnergy::new(c(0.0, 5.0)), &es, 0.1).unwrap();
        assert!(ok.admissible, "{}", ok.summary());

        let wide = ExceptionalSet {
            interval_lambda_sq: [-3.0, 1.0],
            ..es.clone()
        };
        let inside = is_admissible(&ComplexEnergy::new(c(0.5, 0.0)), &wide, 0.1).unwrap();
        assert!(!inside.admissible);
        assert_eq!(inside.nearest_violation().unwrap().set.label(), "omega-interval");

        let excluded = is_admissible(&ComplexEnergy::new(c(0.5, 2.0)), &es, 0.1).unwrap();
        assert!(!excluded.admissible);
        assert_eq!(excluded.nearest_violation().unwrap().set.label(), "user-excluded (D)");

        assert!(is_admissible(&ComplexEnergy::new(c(0.0, 5.0)), &es, 0.0).is_err());
    }

    #[test]
    fn linear_zero() {
        let f = |z: Complex64| Ok::<_, Infallible>(z - 3.0);
        let zeros = zero_scan(&f, Region::new([2.0, 4.0], [-1.0, 1.0]), 0.1, &ZeroScanOptions::default()).unwrap();
        assert_eq!(zeros.len(), 1);
        assert!((zeros[0].z - c(3.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn sine_zeros() {
        let f = |z: Complex64| Ok::<_, Infallible>(z.sin());
        let zeros = zero_scan(&f, Region::new([0.0, 10.0], [-0.5, 0.5]), 0.1, &ZeroScanOptions::default()).unwrap();
        let found: Vec<f64> = zeros.iter().map(|z| z.z.re).collect();
        assert_eq!(found.len(), 4, "{found:?}");
        for (z, k) in zeros.iter().zip(0..) {
            assert!((z.z - c(k as f64 * PI, 0.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn symbol_prefactor_has_no_zeros_right_of_half_n() {
        let f = |s: Complex64| Ok::<_, Infallible>(gamma(c(1.0, 0.0) - s) * recip_gamma(s - 1.0));
        let zeros = zero_scan(&f, Region::new([1.05, 4.0], [-1.0, 1.0]), 0.05, &ZeroScanOptions::default()).unwrap();
        assert!(zeros.is_empty(), "{zeros:?}");
        // Its reciprocal-Gamma factor vanishes at σ − 1 ∈ {0, −1, −2}.
        let g = |s: Complex64| Ok::<_, Infallible>(recip_gamma(s - 1.0));
        let zeros = zero_scan(&g, Region::new([-1.5, 1.5], [-0.5, 0.5]), 0.1, &ZeroScanOptions::default()).unwrap();
        let re: Vec<f64> = zeros.iter().map(|z| z.z.re).collect();
        assert_eq!(re.len(), 3, "{re:?}");
        for (x, e) in re.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((x - e).abs() < 1e-8);
        }
    }

    #[test]
    fn evaluation_failure_propagates() {
        let f = |z: Complex64| if z.re > 1.0 { Err("boom") } else { Ok(z) };
        let err = zero_scan(&f, Region::new([0.0, 2.0], [0.0, 0.0]), 0.5, &ZeroScanOptions::default()).unwrap_err();
        assert!(matches!(err, SetsError::EvaluationFailure { .. }));
    }

    proptest! {
        #[test]
        fn admissibility_is_monotone_in_margin(re in -3.0f64..3.0, im in -3.0f64..3.0, m in 0.01f64..2.0, shrink in 0.0f64..1.0) {
            let es = ExceptionalSet::from_patch(&patch(1, "1 + 0.3*cos(y)", "0.2*sin(y)"), 2, vec![c(1.0, 1.0)]);
            let e = ComplexEnergy::new(c(re, im));
            let big = is_admissible(&e, &es, m).unwrap();
            let small = is_admissible(&e, &es, m * (0.01 + 0.99 * shrink)).unwrap();
            prop_assert!(!big.admissible || small.admissible);
        }

        #[test]
        fn every_mode_reproduces_sigma_minus(k in 0u32..6) {
            let p = patch(3, "1 + 0.4*cos(y1)", "0.3*sin(y2)");
            for m in omega_prime_modes(&p, 6).iter().filter(|m| m.k == k) {
                let lambda = c(m.lambda_sq, 0.0).sqrt();
                let s = indicial_root_at(3, p.alpha(m.y_index), p.v(0, m.y_index), &ComplexEnergy::new(lambda)).unwrap();
                let minus = c(3.0, 0.0) - s;
                prop_assert!((minus - c((3.0 - k as f64) / 2.0, 0.0)).norm() < 1e-8);
            }
        }
    }
}
