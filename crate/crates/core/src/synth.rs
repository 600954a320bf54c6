//! Seeded synthetic patch pairs with known jets, for round-trip runs.

use crate::boundary_jets::{BoundaryPatch, ComplexEnergy, PatchError};
use crate::inversion::RecoveryReport;
use crate::serde_util;
use crate::spectral_sets::{is_admissible, ExceptionalSet};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Kind of spectral parameter drawn for a case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyKind {
    /// `λ = a + ib` with `a, b > 0`; `σ` is complex.
    Complex,
    /// `λ = iμ`; `σ` is real.
    Imaginary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub points_per_axis: usize,
    pub energy_kind: EnergyKind,
    /// Distance kept from the exceptional set.
    pub margin: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            points_per_axis: 4,
            energy_kind: EnergyKind::Complex,
            margin: 0.05,
        }
    }
}

/// Jets of the pair, per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub alpha_sq: Vec<f64>,
    pub v0: Vec<f64>,
    #[serde(with = "serde_util::matrix_vec")]
    pub h0: Vec<DMatrix<f64>>,
    /// `H = h₀⁻¹Lh₀⁻¹`, with `tr(h₀H) = 0`.
    #[serde(with = "serde_util::matrix_vec")]
    pub h: Vec<DMatrix<f64>>,
    pub w1: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub seed: u64,
    pub n: usize,
    pub patch1: BoundaryPatch,
    pub patch2: BoundaryPatch,
    pub energies: Vec<ComplexEnergy>,
    pub truth: GroundTruth,
}

fn sym(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.random_range(-scale..scale);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn draw_energy(rng: &mut ChaCha8Rng, kind: EnergyKind) -> ComplexEnergy {
    match kind {
        EnergyKind::Complex => ComplexEnergy::new(Complex64::new(rng.random_range(0.4..1.2), rng.random_range(1.0..2.5))),
        EnergyKind::Imaginary => ComplexEnergy::new(Complex64::new(0.0, rng.random_range(1.0..4.0))),
    }
}

impl SyntheticCase {
    /// Two patches that agree to order 0 and differ at order 1 by a metric
    /// correction with `tr(h₀⁻¹L) = 0` and a potential correction `W⁽¹⁾`;
    /// `α ∈ [0.5, 2]`, `V₀ ∈ [−1, 1]`.
    pub fn generate(seed: u64, n: usize, opts: &SynthOptions) -> Result<Self, PatchError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axes = vec![opts.points_per_axis; n];
        let len: usize = axes.iter().product();
        let point = |i: usize| -> Vec<f64> {
            let mut rest = i;
            let mut y = vec![0.0; n];
            for a in (0..n).rev() {
                y[a] = (rest % axes[a]) as f64 * TAU / axes[a] as f64;
                rest /= axes[a];
            }
            y
        };

        let a0 = rng.random_range(0.7..1.6);
        let a_eps = rng.random_range(0.0..0.2);
        let a_phase = rng.random_range(0.0..TAU);
        let v_mean = rng.random_range(-0.7..0.7);
        let v_amp = rng.random_range(0.0..0.3);
        let v_phase = rng.random_range(0.0..TAU);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.7..0.7));
        let h_base = &b * b.transpose() + DMatrix::identity(n, n) * 0.5;
        let h_wiggle = sym(&mut rng, n, 0.2 / n as f64);
        let h1_base = sym(&mut rng, n, 0.5);
        let v1_base = rng.random_range(-0.5..0.5);
        let g0 = sym(&mut rng, n, 1.0);
        let g1 = sym(&mut rng, n, 0.5);
        let w_mean = rng.random_range(-1.0..1.0);
        let w_amp = rng.random_range(0.0..0.5);

        let mut alpha = Vec::with_capacity(len);
        let mut v0 = Vec::with_capacity(len);
        let mut h0 = Vec::with_capacity(len);
        let mut h1 = Vec::with_capacity(len);
        let mut v1 = Vec::with_capacity(len);
        let mut h = Vec::with_capacity(len);
        let mut w1 = Vec::with_capacity(len);
        let mut h1_second = Vec::with_capacity(len);
        let mut v1_second = Vec::with_capacity(len);
        for i in 0..len {
            let y = point(i);
            let (first, last) = (y[0], y[n - 1]);
            alpha.push(a0 * (1.0 + a_eps * (first + a_phase).cos()));
            v0.push(v_mean + v_amp * (last + v_phase).sin());
            let hi = &h_base + &h_wiggle * first.cos();
            let inv = hi.clone().cholesky().expect("positive definite by construction").inverse();
            let g = &g0 + &g1 * last.sin();
            let trace = (&hi * &g).trace();
            let hh = g - &inv * (trace / n as f64);
            let l = &hi * &hh * &hi;
            let base1 = &h1_base * (1.0 + 0.3 * first.sin());
            let base_v1 = v1_base * (1.0 + 0.3 * last.cos());
            let wi = w_mean + w_amp * first.cos();
            h1_second.push(&base1 + l);
            v1_second.push(base_v1 + wi);
            h1.push(base1);
            v1.push(base_v1);
            h.push(hh);
            w1.push(wi);
            h0.push(hi);
        }
        let patch1 = BoundaryPatch::new(n, axes.clone(), TAU, alpha.clone(), vec![v0.clone(), v1], vec![h0.clone(), h1])?;
        let patch2 = BoundaryPatch::new(n, axes, TAU, alpha.clone(), vec![v0.clone(), v1_second], vec![h0.clone(), h1_second])?;

        let es = ExceptionalSet::from_patch(&patch1, 4, Vec::new());
        let admissible = |e: &ComplexEnergy| is_admissible(e, &es, opts.margin).map(|a| a.admissible).unwrap_or(false);
        let mut energies = Vec::with_capacity(2);
        while energies.len() < 2 {
            let e = draw_energy(&mut rng, opts.energy_kind);
            let distinct = energies
                .iter()
                .all(|o: &ComplexEnergy| (o.lambda_sq() - e.lambda_sq()).norm() > 0.5);
            if admissible(&e) && distinct {
                energies.push(e);
            }
        }

        Ok(Self {
            seed,
            n,
            patch1,
            patch2,
            energies,
            truth: GroundTruth {
                alpha_sq: alpha.iter().map(|a| a * a).collect(),
                v0,
                h0,
                h,
                w1,
            },
        })
    }
}

/// Largest absolute recovery errors against the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundTripErrors {
    pub alpha_sq: f64,
    pub v0: f64,
    pub h0: f64,
    pub h: f64,
    pub w1: f64,
}

impl RoundTripErrors {
    pub fn zeroth_order(&self) -> f64 {
        self.alpha_sq.max(self.v0).max(self.h0)
    }

    pub fn first_order(&self) -> f64 {
        self.h.max(self.w1)
    }
}

/// Compares every recovered quantity present in `report` with `truth`.
/// Missing stages count as infinite error.
pub fn compare(report: &RecoveryReport, truth: &GroundTruth) -> RoundTripErrors {
    let field = |got: &Option<Vec<f64>>, want: &[f64]| -> f64 {
        match got {
            Some(g) => g.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
            None => f64::INFINITY,
        }
    };
    let h0 = report
        .h0
        .iter()
        .zip(&truth.h0)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    let (mut h, mut w1) = if report.first_order.is_empty() { (f64::INFINITY, f64::INFINITY) } else { (0.0f64, 0.0f64) };
    for f in &report.first_order {
        h = h.max((&f.recovery.h - &truth.h[f.y_index]).amax());
        w1 = w1.max((f.recovery.w1 - truth.w1[f.y_index]).abs());
    }
    RoundTripErrors {
        alpha_sq: field(&report.alpha_sq, &truth.alpha_sq),
        v0: field(&report.v0, &truth.v0),
        h0,
        h,
        w1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_valid() {
        for n in 1..=3 {
            let a = SyntheticCase::generate(11, n, &SynthOptions::default()).unwrap();
            let b = SyntheticCase::generate(11, n, &SynthOptions::default()).unwrap();
            assert_eq!(a.truth, b.truth);
            assert_eq!(a.energies, b.energies);
            for (i, a2) in a.truth.alpha_sq.iter().enumerate() {
                assert!((0.25..=4.0).contains(a2), "{i}: {a2}");
                assert!(a.truth.v0[i].abs() <= 1.0);
                assert!((&a.truth.h0[i] * &a.truth.h[i]).trace().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn patches_agree_at_order_zero() {
        let c = SyntheticCase::generate(3, 2, &SynthOptions::default()).unwrap();
        for i in 0..c.patch1.len() {
            let pd = crate::boundary_jets::perturbation_coefficients(&c.patch1, &c.patch2, i).unwrap();
            assert!((&pd.h - &c.truth.h[i]).amax() < 1e-10);
            assert!((pd.w1() - c.truth.w1[i]).abs() < 1e-12);
            assert!(pd.t.abs() < 1e-10);
        }
    }
}
