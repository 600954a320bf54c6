//! Boundary jets of (α, V, h) and the pointwise algebra built on them:
//! indicial roots, first-order perturbation data and the density ratio.

pub mod expr;
pub mod patch;

pub use patch::{BoundaryPatch, FieldSpec, PatchError, PatchSpec};

use crate::serde_util;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Boundary fields of two patches must agree to this tolerance before
/// first-order data is formed.
pub const MATCH_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error(
        "square-root argument {arg} lies on the negative real axis at grid index {index}, y = {y:?}"
    )]
    BranchCut {
        index: usize,
        y: Vec<f64>,
        arg: Complex64,
    },
    #[error("boundary fields differ at grid index {index}: {field} differs by {diff:e}")]
    MismatchedBoundary {
        index: usize,
        field: &'static str,
        diff: f64,
    },
    #[error("patches do not share the same grid")]
    GridMismatch,
    #[error("grid index {index} is out of range for a patch of {len} points")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("first-order data needs jets up to order 1, but only order {available} is stored")]
    InsufficientJet { available: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Spectral parameter λ with its cached square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "EnergyRepr", into = "EnergyRepr")]
pub struct ComplexEnergy {
    lambda: Complex64,
    lambda_sq: Complex64,
}

#[derive(Serialize, Deserialize)]
struct EnergyRepr(#[serde(with = "serde_util::complex")] Complex64);

impl From<EnergyRepr> for ComplexEnergy {
    fn from(r: EnergyRepr) -> Self {
        ComplexEnergy::new(r.0)
    }
}

impl From<ComplexEnergy> for EnergyRepr {
    fn from(e: ComplexEnergy) -> Self {
        EnergyRepr(e.lambda)
    }
}

impl ComplexEnergy {
    pub fn new(lambda: Complex64) -> Self {
        Self {
            lambda,
            lambda_sq: lambda * lambda,
        }
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    pub fn lambda_sq(&self) -> Complex64 {
        self.lambda_sq
    }
}

/// The root is always `σ₊`, taken with the principal square root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Principal,
}

/// `σ(λ, y)` over the grid of a patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicialField {
    pub n: usize,
    #[serde(with = "serde_util::complex_vec")]
    pub sigma: Vec<Complex64>,
    pub branch: Branch,
}

impl IndicialField {
    /// The other root `σ₋ = n − σ₊` at grid index `i`.
    pub fn sigma_minus(&self, i: usize) -> Complex64 {
        Complex64::new(self.n as f64, 0.0) - self.sigma[i]
    }
}

/// Argument `(n/2)² + (V₀ − λ² − n²/4)/α²` of the square root in the
/// indicial formula.
pub fn indicial_discriminant(n: usize, alpha: f64, v0: f64, energy: &ComplexEnergy) -> Complex64 {
    let half = n as f64 / 2.0;
    let shifted = Complex64::new(v0 - half * half, 0.0) - energy.lambda_sq();
    Complex64::new(half * half, 0.0) + shifted / (alpha * alpha)
}

/// Pointwise indicial root `σ = n/2 + √((n/2)² + (V₀ − λ² − n²/4)/α²)`,
/// the root of `α²σ(n − σ) + V₀ − λ² − n²/4 = 0` with `Re σ ≥ n/2`.
///
/// Returns the offending discriminant when it sits on the negative real
/// axis. Discriminants within `1e-14` relative of zero collapse to zero.
pub fn indicial_root_at(
    n: usize,
    alpha: f64,
    v0: f64,
    energy: &ComplexEnergy,
) -> Result<Complex64, Complex64> {
    let mut arg = indicial_discriminant(n, alpha, v0, energy);
    let scale = 1.0 + (n * n) as f64 / 4.0 + (v0.abs() + energy.lambda_sq().norm()) / (alpha * alpha);
    let tiny = 1e-14 * scale;
    if arg.norm() <= tiny {
        arg = Complex64::new(0.0, 0.0);
    } else if arg.im.abs() <= tiny && arg.re < 0.0 {
        return Err(arg);
    }
    Ok(Complex64::new(n as f64 / 2.0, 0.0) + arg.sqrt())
}

/// Indicial roots over the whole patch.
pub fn indicial_root(patch: &BoundaryPatch, energy: &ComplexEnergy) -> Result<IndicialField, JetError> {
    let n = patch.n();
    let sigma = (0..patch.len())
        .map(|i| {
            indicial_root_at(n, patch.alpha(i), patch.v(0, i), energy).map_err(|arg| {
                JetError::BranchCut {
                    index: i,
                    y: patch.point(i),
                    arg,
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IndicialField {
        n,
        sigma,
        branch: Branch::Principal,
    })
}

/// Residual `α²σ(n − σ) + V₀ − λ² − n²/4` of the indicial equation.
pub fn indicial_residual(n: usize, alpha: f64, v0: f64, energy: &ComplexEnergy, sigma: Complex64) -> Complex64 {
    let nf = n as f64;
    sigma * (nf - sigma) * (alpha * alpha) + v0 - energy.lambda_sq() - nf * nf / 4.0
}

/// First-order difference data at one boundary point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationData {
    /// `h⁽¹⁾₂ − h⁽¹⁾₁`.
    #[serde(with = "serde_util::matrix")]
    pub l: DMatrix<f64>,
    /// `h₀⁻¹ L h₀⁻¹`.
    #[serde(with = "serde_util::matrix")]
    pub h: DMatrix<f64>,
    /// `tr(h₀⁻¹ L)`.
    pub t: f64,
    /// `W⁽ʲ⁾ = V⁽ʲ⁾₂ − V⁽ʲ⁾₁` for every order stored in both patches.
    pub w: Vec<f64>,
}

impl PerturbationData {
    /// Builds the data from `L`, `h₀` and the potential differences.
    pub fn from_metric(l: DMatrix<f64>, h0: &DMatrix<f64>, w: Vec<f64>) -> Result<Self, JetError> {
        let n = h0.nrows();
        if h0.ncols() != n || l.nrows() != n || l.ncols() != n {
            return Err(JetError::InvalidInput("L and h₀ must be n×n".into()));
        }
        let inv = h0
            .clone()
            .cholesky()
            .ok_or_else(|| JetError::InvalidInput("h₀ must be positive definite".into()))?
            .inverse();
        let h = &inv * &l * &inv;
        let h = (&h + h.transpose()) * 0.5;
        let t = (&inv * &l).trace();
        Ok(Self { l, h, t, w })
    }

    /// `W⁽¹⁾`, or 0 when only order 0 is stored.
    pub fn w1(&self) -> f64 {
        self.w.get(1).copied().unwrap_or(0.0)
    }
}

/// First-order difference data of two patches at grid index `index`.
pub fn perturbation_coefficients(
    patch1: &BoundaryPatch,
    patch2: &BoundaryPatch,
    index: usize,
) -> Result<PerturbationData, JetError> {
    if !patch1.same_grid(patch2) {
        return Err(JetError::GridMismatch);
    }
    if index >= patch1.len() {
        return Err(JetError::IndexOutOfRange {
            index,
            len: patch1.len(),
        });
    }
    let available = patch1.h_orders().min(patch2.h_orders()) - 1;
    if available < 1 {
        return Err(JetError::InsufficientJet { available });
    }
    let h0 = patch1.h(0, index);
    let checks = [
        ("h0", (h0 - patch2.h(0, index)).amax()),
        ("alpha", (patch1.alpha(index) - patch2.alpha(index)).abs()),
        ("v0", (patch1.v(0, index) - patch2.v(0, index)).abs()),
    ];
    for (field, diff) in checks {
        if diff > MATCH_TOL {
            return Err(JetError::MismatchedBoundary { index, field, diff });
        }
    }
    let l = patch2.h(1, index) - patch1.h(1, index);
    let orders = patch1.v_orders().min(patch2.v_orders());
    let w = (0..orders)
        .map(|j| patch2.v(j, index) - patch1.v(j, index))
        .collect();
    PerturbationData::from_metric(l, h0, w)
}

/// Order-x coefficient `T/4` of `δ₂^{1/4}/δ₁^{1/4}`.
pub fn density_ratio_coefficient(pd: &PerturbationData) -> f64 {
    pd.t / 4.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn constant_patch(n: usize, alpha: f64, v0: f64) -> BoundaryPatch {
        let axes = vec![4; n];
        let len = 4usize.pow(n as u32);
        BoundaryPatch::new(
            n,
            axes,
            TAU,
            vec![alpha; len],
            vec![vec![v0; len], vec![0.0; len]],
            vec![vec![DMatrix::identity(n, n); len], vec![DMatrix::zeros(n, n); len]],
        )
        .unwrap()
    }

    #[test]
    fn root_equals_n_when_shifted_potential_vanishes() {
        let e = ComplexEnergy::new(c(0.0, 0.8));
        let v0 = e.lambda_sq().re + 1.0;
        let f = indicial_root(&constant_patch(2, 1.0, v0), &e).unwrap();
        for s in &f.sigma {
            assert!((s - c(2.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_discriminant_gives_half_n() {
        // α = 2, n = 2: 1 + (V₀ − λ² − 1)/4 vanishes for λ² = V₀ + 3.
        let e = ComplexEnergy::new(c(3f64.sqrt(), 0.0));
        let f = indicial_root(&constant_patch(2, 2.0, 0.0), &e).unwrap();
        for s in &f.sigma {
            assert!((s - c(1.0, 0.0)).norm() < 1e-7);
        }
    }

    #[test]
    fn alpha_two_v_five_at_zero_energy() {
        // Discriminant 1 + 4/4 = 2.
        let s = indicial_root_at(2, 2.0, 5.0, &ComplexEnergy::new(c(0.0, 0.0))).unwrap();
        assert!((s - c(1.0 + 2f64.sqrt(), 0.0)).norm() < 1e-15);
        let r = indicial_residual(2, 2.0, 5.0, &ComplexEnergy::new(c(0.0, 0.0)), s);
        assert!(r.norm() < 1e-14);
    }

    #[test]
    fn variable_alpha_satisfies_the_indicial_equation() {
        let spec = PatchSpec {
            n: 3,
            axes: vec![4, 4, 4],
            period: None,
            alpha: FieldSpec::Expression("1 + 0.5*cos(y1)".into()),
            v_jet: vec![FieldSpec::Constant(0.3)],
            h_jet: vec![(0..3)
                .map(|a| {
                    (0..3)
                        .map(|b| FieldSpec::Constant(if a == b { 1.0 } else { 0.0 }))
                        .collect()
                })
                .collect()],
        };
        let p = BoundaryPatch::from_spec(&spec).unwrap();
        let e = ComplexEnergy::new(c(0.0, 2.0));
        let f = indicial_root(&p, &e).unwrap();
        for i in 0..p.len() {
            let s = f.sigma[i];
            let alpha = 1.0 + 0.5 * p.point(i)[0].cos();
            let r = s * (3.0 - s) * alpha * alpha + 0.3 - e.lambda_sq() - 2.25;
            assert!(r.norm() < 1e-12 * (1.0 + s.norm_sqr() * alpha * alpha));
            assert!(s.re >= 1.5);
        }
    }

    #[test]
    fn real_energy_in_the_cut_is_reported() {
        // n = 1, α = 1, V₀ = 0, λ = 1: discriminant 1/4 − 1/4 − 1 = −1.
        let p = constant_patch(1, 1.0, 0.0);
        let err = indicial_root(&p, &ComplexEnergy::new(c(1.0, 0.0))).unwrap_err();
        match err {
            JetError::BranchCut { index, y, arg } => {
                assert_eq!(index, 0);
                assert_eq!(y, vec![0.0]);
                assert!((arg - c(-1.0, 0.0)).norm() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hyperbolic_space_roots() {
        // α = 1, V₀ = 0: σ = n/2 ± iλ up to the branch.
        for n in 1..=3 {
            let lambda = c(0.4, -1.3);
            let s = indicial_root_at(n, 1.0, 0.0, &ComplexEnergy::new(lambda)).unwrap();
            let a = c(n as f64 / 2.0, 0.0) + c(0.0, 1.0) * lambda;
            let b = c(n as f64 / 2.0, 0.0) - c(0.0, 1.0) * lambda;
            assert!((s - a).norm() < 1e-14 || (s - b).norm() < 1e-14);
            assert!(s.re >= n as f64 / 2.0);
        }
    }

    fn pair(h0: DMatrix<f64>, l: DMatrix<f64>, w1: f64) -> (BoundaryPatch, BoundaryPatch) {
        let n = h0.nrows();
        let len = 4usize.pow(n as u32);
        let make = |h1: DMatrix<f64>, v1: f64| {
            BoundaryPatch::new(
                n,
                vec![4; n],
                TAU,
                vec![1.2; len],
                vec![vec![0.4; len], vec![v1; len]],
                vec![vec![h0.clone(); len], vec![h1; len]],
            )
            .unwrap()
        };
        (make(DMatrix::zeros(n, n), 0.1), make(l, 0.1 + w1))
    }

    #[test]
    fn perturbation_examples() {
        let (a, b) = pair(DMatrix::identity(2, 2), DMatrix::zeros(2, 2), 0.0);
        let pd = perturbation_coefficients(&a, &b, 3).unwrap();
        assert_eq!(pd.h, DMatrix::zeros(2, 2));
        assert_eq!(pd.t, 0.0);
        assert!(pd.w.iter().all(|w| *w == 0.0));

        let l = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -2.0]);
        let (a, b) = pair(DMatrix::identity(2, 2), l.clone(), 0.0);
        let pd = perturbation_coefficients(&a, &b, 0).unwrap();
        assert!((&pd.h - &l).amax() < 1e-15);
        assert!(pd.t.abs() < 1e-15);

        let h0 = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let l = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 1.0]);
        let (a, b) = pair(h0.clone(), l.clone(), 0.5);
        let pd = perturbation_coefficients(&a, &b, 5).unwrap();
        // Oracle: explicit inverse of a diagonal matrix.
        let inv = DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 1.0]);
        let expected = &inv * &l * &inv;
        assert!((&pd.h - &expected).amax() < 1e-14);
        assert!((&pd.h - DMatrix::from_row_slice(2, 2, &[0.25, 0.5, 0.5, 1.0])).amax() < 1e-14);
        assert!((pd.t - 2.0).abs() < 1e-14);
        assert!((&h0 * &pd.h * &h0 - &l).amax() < 1e-12);
        assert!((pd.w1() - 0.5).abs() < 1e-15);
        assert!((density_ratio_coefficient(&pd) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mismatched_boundary_is_rejected() {
        let (a, _) = pair(DMatrix::identity(2, 2), DMatrix::zeros(2, 2), 0.0);
        let (b, _) = pair(DMatrix::identity(2, 2) * 1.01, DMatrix::zeros(2, 2), 0.0);
        assert!(matches!(
            perturbation_coefficients(&a, &b, 0),
            Err(JetError::MismatchedBoundary { field: "h0", .. })
        ));
        let len = 16;
        let only_zeroth = BoundaryPatch::new(
            2,
            vec![4, 4],
            TAU,
            vec![1.2; len],
            vec![vec![0.4; len]],
            vec![vec![DMatrix::identity(2, 2); len]],
        )
        .unwrap();
        assert!(matches!(
            perturbation_coefficients(&only_zeroth, &only_zeroth, 0),
            Err(JetError::InsufficientJet { available: 0 })
        ));
    }

    #[test]
    fn energy_serializes_as_pair() {
        let e = ComplexEnergy::new(c(0.5, 3.0));
        let text = serde_json::to_string(&e).unwrap();
        assert_eq!(text, "[0.5,3.0]");
        let back: ComplexEnergy = serde_json::from_str(&text).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.lambda_sq(), c(0.5, 3.0) * c(0.5, 3.0));
    }

    fn spd(n: usize, seed: &[f64]) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |i, j| seed[(i * n + j) % seed.len()]);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    fn sym(n: usize, seed: &[f64]) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |i, j| seed[(i * 3 + j * 5) % seed.len()]);
        (&a + a.transpose()) * 0.5
    }

    proptest! {
        #[test]
        fn root_sum_and_product(
            n in 1usize..=3,
            alpha in 0.3f64..3.0,
            v0 in -2.0f64..2.0,
            re in -3.0f64..3.0,
            im in 0.2f64..4.0,
        ) {
            let e = ComplexEnergy::new(c(re, im));
            let s = indicial_root_at(n, alpha, v0, &e).unwrap();
            let nf = n as f64;
            let minus = c(nf, 0.0) - s;
            let product = -(c(v0 - nf * nf / 4.0, 0.0) - e.lambda_sq()) / (alpha * alpha);
            prop_assert!((s * minus - product).norm() <= 1e-12 * (1.0 + product.norm()));
            prop_assert!(s.re >= nf / 2.0);
        }

        #[test]
        fn perturbation_is_antisymmetric(seed in proptest::collection::vec(-1.0f64..1.0, 9), w1 in -1.0f64..1.0) {
            let h0 = spd(2, &seed);
            let l = sym(2, &seed[3..]);
            let (a, b) = pair(h0, l, w1);
            let ab = perturbation_coefficients(&a, &b, 1).unwrap();
            let ba = perturbation_coefficients(&b, &a, 1).unwrap();
            prop_assert!((&ab.l + &ba.l).amax() < 1e-14);
            prop_assert!((&ab.h + &ba.h).amax() < 1e-12);
            prop_assert!((ab.t + ba.t).abs() < 1e-12);
            for (x, y) in ab.w.iter().zip(&ba.w) {
                prop_assert!((x + y).abs() < 1e-14);
            }
        }

        #[test]
        fn density_coefficient_matches_determinant_derivative(
            n in 1usize..=3,
            seed in proptest::collection::vec(-1.0f64..1.0, 9),
        ) {
            let h0 = spd(n, &seed);
            let l = sym(n, &seed[2..]);
            let pd = PerturbationData::from_metric(l.clone(), &h0, vec![0.0]).unwrap();
            let ratio = |x: f64| ((&h0 + &l * x).determinant() / h0.determinant()).powf(0.25);
            let step = 1e-5;
            let fd = (ratio(step) - ratio(-step)) / (2.0 * step);
            prop_assert!((density_ratio_coefficient(&pd) - fd).abs() < 1e-6);
        }
    }
}
