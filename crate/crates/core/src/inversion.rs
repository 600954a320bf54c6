//! Recovery of boundary jets from scattering data.
//!
//! Zeroth order: `σ` and `|ξ|_{h₀}` from principal symbols, `h₀` by
//! polarization, `(α², V₀)` from two energies. First order: `(H, W⁽¹⁾)` from
//! leading-singularity samples by a minimum-norm least-squares solve.

use crate::boundary_jets::ComplexEnergy;
use crate::dataset::{DatasetError, FactorMode, SymbolDataset};
use crate::forward_scattering::{normalizing_map, radial_derivative_kernel, symbol_prefactor, vech_pair, ForwardError, SingularitySample};
use crate::model_quadrature::QuadratureError;
use crate::serde_util;
use crate::spectral_sets::is_admissible;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

/// Largest `|Im σ|` considered when unwrapping the logarithm.
pub const IM_SIGMA_MAX: f64 = 64.0;
/// Lattice mismatch accepted when matching branches across scales.
pub const BRANCH_TOL: f64 = 1e-6;
/// Singular values below this fraction of the largest span the kernel.
pub const KERNEL_TOL: f64 = 1e-10;
/// Allowed imaginary residue of recovered real quantities.
pub const REALNESS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Admissibility,
    Sigma,
    Metric,
    TwoEnergy,
    FirstOrder,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Admissibility => "admissibility",
            Stage::Sigma => "sigma",
            Stage::Metric => "metric",
            Stage::TwoEnergy => "two-energy",
            Stage::FirstOrder => "first-order",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InversionError {
    #[error("symbol value is zero")]
    ZeroSymbol,
    #[error("log branch ambiguous: {0}")]
    BranchAmbiguity(String),
    #[error("recovered quadratic form is not positive definite")]
    NotPositiveDefinite,
    #[error("energies have equal squares")]
    DegenerateEnergies,
    #[error("inconsistent data: {0}")]
    InconsistentData(String),
    #[error("integral factor {which} = {value} is below 1e-12")]
    ZeroIntegralFactor { which: &'static str, value: Complex64 },
    #[error("energy {lambda} refused: {summary}")]
    Inadmissible { lambda: Complex64, summary: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("stage {stage}{}: {source}", .y_index.map(|i| format!(" at point {i}")).unwrap_or_default())]
    Stage {
        stage: Stage,
        y_index: Option<usize>,
        source: Box<InversionError>,
    },
}

impl InversionError {
    fn at(self, stage: Stage, y_index: Option<usize>) -> Self {
        InversionError::Stage {
            stage,
            y_index,
            source: Box::new(self),
        }
    }

    /// The innermost error, past stage labels.
    pub fn root(&self) -> &InversionError {
        match self {
            InversionError::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaRecovery {
    #[serde(with = "serde_util::complex")]
    pub sigma: Complex64,
    pub xi_norm: f64,
    /// Worst lattice mismatch between scales (0 with a single scale).
    pub branch_residual: f64,
    /// `|Im log|ξ||` left after choosing the best branch.
    pub norm_residual: f64,
}

fn principal_sigma(n: usize, base: Complex64, scaled: Complex64, t: f64) -> Complex64 {
    Complex64::new(n as f64 / 2.0, 0.0) + (scaled / base).ln() / (2.0 * t.ln())
}

/// `σ = n/2 + log(S(tξ)/S(ξ))/(2 log t)`, then `|ξ|_{h₀}` from the symbol
/// formula.
///
/// With one scale the principal logarithm is used. With several scales the
/// branches `2πik` of each ratio are matched, which fixes `Im σ` up to
/// [`IM_SIGMA_MAX`].
pub fn recover_sigma_from_symbol(n: usize, base: Complex64, scaled: &[(f64, Complex64)]) -> Result<SigmaRecovery, InversionError> {
    if scaled.is_empty() {
        return Err(InversionError::InvalidInput("need at least one scaled sample".into()));
    }
    if base == Complex64::new(0.0, 0.0) || scaled.iter().any(|(_, v)| *v == Complex64::new(0.0, 0.0)) {
        return Err(InversionError::ZeroSymbol);
    }
    if scaled.iter().any(|&(t, _)| !(t > 0.0 && t != 1.0 && t.is_finite())) {
        return Err(InversionError::InvalidInput("scales must be positive and differ from 1".into()));
    }
    let estimates: Vec<(f64, Complex64)> = scaled.iter().map(|&(t, v)| (t, principal_sigma(n, base, v, t))).collect();
    // Anchor on the scale with the largest |log t|: finest lattice, least noise.
    let anchor = estimates
        .iter()
        .copied()
        .max_by(|a, b| a.0.ln().abs().total_cmp(&b.0.ln().abs()))
        .expect("non-empty");
    let (sigma, branch_residual) = if estimates.len() == 1 {
        (anchor.1, 0.0)
    } else {
        let step = |t: f64| PI / t.ln().abs();
        let kmax = (IM_SIGMA_MAX / step(anchor.0)).ceil() as i64;
        let mut scored: Vec<(f64, Complex64)> = (-kmax..=kmax)
            .map(|k| {
                let cand = anchor.1 + Complex64::new(0.0, k as f64 * step(anchor.0));
                let score = estimates
                    .iter()
                    .map(|&(t, est)| {
                        let d = (cand.im - est.im) / step(t);
                        let dim = (d - d.round()).abs() * step(t);
                        dim.max((cand.re - est.re).abs())
                    })
                    .fold(0.0, f64::max);
                (score, cand)
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        if scored[0].0 > BRANCH_TOL * (1.0 + scored[0].1.norm()) {
            return Err(InversionError::BranchAmbiguity(format!(
                "no branch matches all scales (best mismatch {:.3e})",
                scored[0].0
            )));
        }
        if scored.len() > 1 && scored[1].0 <= BRANCH_TOL * (1.0 + scored[1].1.norm()) {
            return Err(InversionError::BranchAmbiguity(format!(
                "branches {} and {} both match",
                scored[0].1, scored[1].1
            )));
        }
        (scored[0].1, scored[0].0)
    };
    if sigma.re < n as f64 / 2.0 - 1e-9 {
        return Err(InversionError::BranchAmbiguity(format!("Re σ = {} is below n/2", sigma.re)));
    }
    let (xi_norm, norm_residual) = xi_norm_from_symbol(n, sigma, base)?;
    Ok(SigmaRecovery {
        sigma,
        xi_norm,
        branch_residual,
        norm_residual,
    })
}

/// `|ξ|` solving `S = 2^{n−2σ}Γ(n/2 − σ)/Γ(σ − n/2)|ξ|^{2σ−n}`, choosing the
/// logarithm branch that makes `|ξ|` closest to real. Returns the residual
/// imaginary part of `log |ξ|`.
pub fn xi_norm_from_symbol(n: usize, sigma: Complex64, value: Complex64) -> Result<(f64, f64), InversionError> {
    if value == Complex64::new(0.0, 0.0) {
        return Err(InversionError::ZeroSymbol);
    }
    let d = sigma * 2.0 - n as f64;
    if d.re.abs() < 1e-12 {
        return Err(InversionError::BranchAmbiguity("Re σ = n/2 leaves |ξ| undetermined".into()));
    }
    let w = (value / symbol_prefactor(sigma, n)?).ln();
    let m = ((w.re * d.im / d.re - w.im) / (2.0 * PI)).round();
    let ratio = (w + Complex64::new(0.0, 2.0 * PI * m)) / d;
    Ok((ratio.re.exp(), ratio.im.abs()))
}

/// `h₀` from `|ξ|_{h₀}` at `ξ ∈ {e_i} ∪ {e_i + e_j : i < j}`, in that order.
///
/// `q(ξ) = |ξ|²` is polarized, `(h₀⁻¹)_ij = (q(e_i + e_j) − q(e_i) − q(e_j))/2`,
/// and inverted.
pub fn metric_boundary_recovery(n: usize, norms: &[f64]) -> Result<DMatrix<f64>, InversionError> {
    let expected = n + n * (n - 1) / 2;
    if norms.len() != expected {
        return Err(InversionError::InvalidInput(format!("expected {expected} norms, got {}", norms.len())));
    }
    if norms.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(InversionError::InvalidInput("norms must be positive".into()));
    }
    let q: Vec<f64> = norms.iter().map(|v| v * v).collect();
    let mut inv = DMatrix::zeros(n, n);
    for i in 0..n {
        inv[(i, i)] = q[i];
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            let off = (q[k] - q[i] - q[j]) / 2.0;
            inv[(i, j)] = off;
            inv[(j, i)] = off;
            k += 1;
        }
    }
    let chol = inv.cholesky().ok_or(InversionError::NotPositiveDefinite)?;
    let h0 = chol.inverse();
    Ok((&h0 + h0.transpose()) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoEnergyRecovery {
    pub alpha_sq: f64,
    pub v0: f64,
    pub alpha_sq_imag: f64,
    pub v0_imag: f64,
}

/// `(α², V₀)` from `α²σᵢ(n − σᵢ) + V₀ − λᵢ² − n²/4 = 0`, `i = 1, 2`:
/// `α² = (λ₁² − λ₂²)/(σ₁(n − σ₁) − σ₂(n − σ₂))`, `V₀ = λ₁² + n²/4 − α²σ₁(n − σ₁)`.
pub fn two_energy_recovery(
    sigma1: Complex64,
    sigma2: Complex64,
    e1: &ComplexEnergy,
    e2: &ComplexEnergy,
    n: usize,
) -> Result<TwoEnergyRecovery, InversionError> {
    let nf = n as f64;
    let (l1, l2) = (e1.lambda_sq(), e2.lambda_sq());
    let scale = 1.0 + l1.norm() + l2.norm();
    if (l1 - l2).norm() <= 1e-14 * scale {
        return Err(InversionError::DegenerateEnergies);
    }
    let p1 = sigma1 * (nf - sigma1);
    let p2 = sigma2 * (nf - sigma2);
    let den = p1 - p2;
    if den.norm() <= 1e-14 * (1.0 + p1.norm() + p2.norm()) {
        return Err(InversionError::InconsistentData("σ₁(n − σ₁) = σ₂(n − σ₂) with distinct energies".into()));
    }
    let a2 = (l1 - l2) / den;
    let v0 = l1 + nf * nf / 4.0 - a2 * p1;
    let tol = REALNESS_TOL * (1.0 + a2.norm());
    if a2.im.abs() > tol || v0.im.abs() > REALNESS_TOL * (1.0 + v0.norm()) {
        return Err(InversionError::InconsistentData(format!("complex result α² = {a2}, V₀ = {v0}")));
    }
    if a2.re <= 0.0 {
        return Err(InversionError::InconsistentData(format!("α² = {} is not positive", a2.re)));
    }
    Ok(TwoEnergyRecovery {
        alpha_sq: a2.re,
        v0: v0.re,
        alpha_sq_imag: a2.im,
        v0_imag: v0.im,
    })
}

/// `V₀ = λ² + n²/4 − α²σ(n − σ)` when `α²` is known. Returns `(V₀, Im)`.
pub fn single_energy_v0(sigma: Complex64, energy: &ComplexEnergy, alpha_sq: f64, n: usize) -> Result<(f64, f64), InversionError> {
    let nf = n as f64;
    let v0 = energy.lambda_sq() + nf * nf / 4.0 - sigma * (nf - sigma) * alpha_sq;
    if v0.im.abs() > REALNESS_TOL * (1.0 + v0.norm()) {
        return Err(InversionError::InconsistentData(format!("complex V₀ = {v0}")));
    }
    Ok((v0.re, v0.im))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDirection {
    #[serde(with = "serde_util::matrix")]
    pub h: DMatrix<f64>,
    pub w1: f64,
    pub singular_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderRecovery {
    #[serde(with = "serde_util::matrix")]
    pub h: DMatrix<f64>,
    pub w1: f64,
    pub design_rank: usize,
    pub unknowns: usize,
    pub singular_values: Vec<f64>,
    pub kernel_basis: Vec<KernelDirection>,
    /// `‖A v‖/‖v‖` for `v = (h₀⁻¹, W*)` with the best compensating `W*`,
    /// relative to the largest singular value. For `h₀ = I` this is the
    /// `H = cI` direction.
    pub identity_direction_gain: f64,
    /// `max |F(ω) − F̂(ω)|` over the probes.
    pub fit_residual: f64,
}

/// Real design matrix of `(vech H, W) ↦ (Re F(ω), Im F(ω))` over the probes,
/// with `F(ω) = t₁ Σ H̃_ab D_ab(ω̃) + t₂ (W − α²(1 − n) tr(h₀H)/4)`.
pub fn first_order_design(
    probes: &[Vec<f64>],
    sigma: Complex64,
    t1: Complex64,
    t2: Complex64,
    alpha_sq: f64,
    h0: &DMatrix<f64>,
) -> Result<DMatrix<f64>, InversionError> {
    let n = h0.nrows();
    let m = n * (n + 1) / 2;
    let a0 = normalizing_map(h0)?;
    let mut design = DMatrix::zeros(2 * probes.len(), m + 1);
    for (r, omega) in probes.iter().enumerate() {
        if omega.len() != n {
            return Err(InversionError::InvalidInput("probe dimension differs from n".into()));
        }
        let mut w = &a0 * DVector::from_column_slice(omega);
        w /= w.norm();
        let d = radial_derivative_kernel(w.as_slice(), sigma);
        // Σ_ab (A H Aᵀ)_ab D_ab = Σ_ij H_ij (Aᵀ D A)_ij.
        let a0c = a0.map(|v| Complex64::new(v, 0.0));
        let pulled = a0c.transpose() * d * &a0c;
        for c in 0..m {
            let (i, j) = vech_pair(n, c);
            let mult = if i == j { 1.0 } else { 2.0 };
            let trace_part = -alpha_sq * (1.0 - n as f64) * h0[(i, j)] / 4.0;
            let coef = (t1 * pulled[(i, j)] + t2 * trace_part) * mult;
            design[(2 * r, c)] = coef.re;
            design[(2 * r + 1, c)] = coef.im;
        }
        design[(2 * r, m)] = t2.re;
        design[(2 * r + 1, m)] = t2.im;
    }
    Ok(design)
}

fn unpack(n: usize, x: &DVector<f64>) -> (DMatrix<f64>, f64) {
    let m = n * (n + 1) / 2;
    let mut h = DMatrix::zeros(n, n);
    for c in 0..m {
        let (i, j) = vech_pair(n, c);
        h[(i, j)] = x[c];
        h[(j, i)] = x[c];
    }
    (h, x[m])
}

/// Minimum-norm least-squares `(H, W⁽¹⁾)` from samples `F(ω)` divided by
/// `prefactor`. Rank deficiency is reported, not raised.
#[allow(clippy::too_many_arguments)]
pub fn first_order_recovery(
    samples: &[SingularitySample],
    sigma: Complex64,
    t1: Complex64,
    t2: Complex64,
    alpha_sq: f64,
    h0: &DMatrix<f64>,
    prefactor: Complex64,
) -> Result<FirstOrderRecovery, InversionError> {
    for (which, value) in [("T1", t1), ("T2", t2)] {
        if value.norm() < 1e-12 {
            return Err(InversionError::ZeroIntegralFactor { which, value });
        }
    }
    if prefactor.norm() == 0.0 {
        return Err(InversionError::InvalidInput("prefactor is zero".into()));
    }
    if samples.is_empty() {
        return Err(InversionError::InvalidInput("no singularity samples".into()));
    }
    let n = h0.nrows();
    let m = n * (n + 1) / 2;
    let probes: Vec<Vec<f64>> = samples.iter().map(|s| s.omega.clone()).collect();
    let design = first_order_design(&probes, sigma, t1, t2, alpha_sq, h0)?;
    let mut rhs = DVector::zeros(2 * samples.len());
    for (r, s) in samples.iter().enumerate() {
        let v = s.value / prefactor;
        rhs[2 * r] = v.re;
        rhs[2 * r + 1] = v.im;
    }

    let cols = m + 1;
    let svd = design.clone().svd(true, true);
    let v_t = svd.v_t.as_ref().expect("requested");
    let u = svd.u.as_ref().expect("requested");
    let smax = svd.singular_values.max();
    let cutoff = KERNEL_TOL * smax;
    let mut x = DVector::zeros(cols);
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            rank += 1;
            let coef = u.column(k).dot(&rhs) / s;
            x += v_t.row(k).transpose() * coef;
        }
    }
    let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let mut kernel_basis = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff {
            let (h, w1) = unpack(n, &v_t.row(k).transpose());
            kernel_basis.push(KernelDirection { h, w1, singular_value: s });
        }
    }
    // With fewer equations than unknowns the thin SVD omits exact kernel directions.
    for v in svd_complement(v_t) {
        let (h, w1) = unpack(n, &v);
        kernel_basis.push(KernelDirection { h, w1, singular_value: 0.0 });
    }

    // Identity direction H = h₀⁻¹ (H̃ = I) with the best real W compensation.
    let inv = h0.clone().cholesky().ok_or(ForwardError::NotPositiveDefinite)?.inverse();
    let mut dir = DVector::zeros(cols);
    for c in 0..m {
        let (i, j) = vech_pair(n, c);
        dir[c] = inv[(i, j)];
    }
    let a_h = &design * &dir;
    let a_w = design.column(m).into_owned();
    let w_star = if a_w.norm_squared() > 0.0 { -a_h.dot(&a_w) / a_w.norm_squared() } else { 0.0 };
    dir[m] = w_star;
    let gain = (&design * &dir).norm() / dir.norm() / smax;

    let fit = &design * &x - &rhs;
    let fit_residual = (0..samples.len())
        .map(|r| Complex64::new(fit[2 * r], fit[2 * r + 1]).norm())
        .fold(0.0, f64::max);
    let (h, w1) = unpack(n, &x);
    Ok(FirstOrderRecovery {
        h,
        w1,
        design_rank: rank,
        unknowns: cols,
        singular_values,
        kernel_basis,
        identity_direction_gain: gain,
        fit_residual,
    })
}

/// Orthonormal complement of the row space of `v_t` in `R^cols`.
fn svd_complement(v_t: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let cols = v_t.ncols();
    if v_t.nrows() >= cols {
        return Vec::new();
    }
    let mut basis: Vec<DVector<f64>> = v_t.row_iter().map(|r| r.transpose()).collect();
    let mut out = Vec::new();
    for e in 0..cols {
        let mut v = DVector::zeros(cols);
        v[e] = 1.0;
        for b in &basis {
            let p = b.dot(&v);
            v -= b * p;
        }
        let nv = v.norm();
        if nv > 1e-8 {
            v /= nv;
            basis.push(v.clone());
            out.push(v);
        }
        if basis.len() == cols {
            break;
        }
    }
    out
}

/// Where the driver takes `T₁`, `T₂` from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum FactorSource {
    /// Injected values recorded in the dataset; quadrature at the recovered `σ`
    /// when the dataset used quadrature.
    #[default]
    Dataset,
    Override { factors: FactorMode },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverConfig {
    /// Known `α` per grid point (one value broadcasts). Enables single-energy mode.
    pub alpha_known: Option<Vec<f64>>,
    pub margin: f64,
    pub factors: FactorSource,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            alpha_known: None,
            margin: 1e-3,
            factors: FactorSource::Dataset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub stage: Stage,
    pub status: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    pub sigma_branch: f64,
    pub xi_norm_imag: f64,
    /// Largest entry difference between `h₀` recovered at different energies.
    pub h0_energy_mismatch: f64,
    pub alpha_sq_imag: f64,
    pub v0_imag: f64,
    pub first_order_fit: f64,
}

impl Residuals {
    fn merge(&mut self, o: &Residuals) {
        self.sigma_branch = self.sigma_branch.max(o.sigma_branch);
        self.xi_norm_imag = self.xi_norm_imag.max(o.xi_norm_imag);
        self.h0_energy_mismatch = self.h0_energy_mismatch.max(o.h0_energy_mismatch);
        self.alpha_sq_imag = self.alpha_sq_imag.max(o.alpha_sq_imag.abs());
        self.v0_imag = self.v0_imag.max(o.v0_imag.abs());
        self.first_order_fit = self.first_order_fit.max(o.first_order_fit);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFirstOrder {
    pub y_index: usize,
    #[serde(flatten)]
    pub recovery: FirstOrderRecovery,
    #[serde(with = "serde_util::complex")]
    pub t1: Complex64,
    #[serde(with = "serde_util::complex")]
    pub t2: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub n: usize,
    pub grid_len: usize,
    pub stages: Vec<StageStatus>,
    /// `σ(λ_e, y)` per energy.
    #[serde(with = "sigma_rows")]
    pub sigma: Vec<Vec<Complex64>>,
    pub alpha_sq: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
    #[serde(with = "serde_util::matrix_vec")]
    pub h0: Vec<DMatrix<f64>>,
    pub first_order: Vec<PointFirstOrder>,
    pub design_rank: Option<usize>,
    pub residuals: Residuals,
    pub higher_orders: String,
}

mod sigma_rows {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Row(#[serde(with = "crate::serde_util::complex_vec")] Vec<Complex64>);

    pub fn serialize<S: Serializer>(v: &[Vec<Complex64>], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|r| Row(r.clone())).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Complex64>>, D::Error> {
        Ok(Vec::<Row>::deserialize(d)?.into_iter().map(|r| r.0).collect())
    }
}

struct PointZeroth {
    sigma: Vec<Complex64>,
    h0: DMatrix<f64>,
    alpha_sq: Option<f64>,
    v0: Option<f64>,
    residuals: Residuals,
}

fn recover_point(ds: &SymbolDataset, y: usize, cfg: &DriverConfig) -> Result<PointZeroth, InversionError> {
    let n = ds.n;
    let mut residuals = Residuals::default();
    let mut sigma = Vec::with_capacity(ds.energies.len());
    let mut h0s = Vec::with_capacity(ds.energies.len());
    for e in 0..ds.energies.len() {
        let mut norms = Vec::with_capacity(ds.covectors.len());
        let mut sig_e: Option<Complex64> = None;
        for row in ds.block(e, y) {
            let scaled: Vec<(f64, Complex64)> = ds.scales.iter().zip(&row[1..]).map(|(&t, s)| (t, s.value)).collect();
            let rec = recover_sigma_from_symbol(n, row[0].value, &scaled).map_err(|err| err.at(Stage::Sigma, Some(y)))?;
            residuals.sigma_branch = residuals.sigma_branch.max(rec.branch_residual);
            residuals.xi_norm_imag = residuals.xi_norm_imag.max(rec.norm_residual);
            if let Some(s) = sig_e {
                residuals.sigma_branch = residuals.sigma_branch.max((s - rec.sigma).norm());
            } else {
                sig_e = Some(rec.sigma);
            }
            norms.push(rec.xi_norm);
        }
        sigma.push(sig_e.expect("at least one covector"));
        h0s.push(metric_boundary_recovery(n, &norms).map_err(|err| err.at(Stage::Metric, Some(y)))?);
    }
    for h in &h0s[1..] {
        residuals.h0_energy_mismatch = residuals.h0_energy_mismatch.max((h - &h0s[0]).amax());
    }
    let known = cfg.alpha_known.as_ref().map(|a| if a.len() == 1 { a[0] } else { a[y] });
    let (alpha_sq, v0) = if ds.energies.len() >= 2 {
        let r = two_energy_recovery(sigma[0], sigma[1], &ds.energies[0], &ds.energies[1], n).map_err(|err| err.at(Stage::TwoEnergy, Some(y)))?;
        residuals.alpha_sq_imag = r.alpha_sq_imag;
        residuals.v0_imag = r.v0_imag;
        (Some(r.alpha_sq), Some(r.v0))
    } else if let Some(alpha) = known {
        let a2 = alpha * alpha;
        let (v0, im) = single_energy_v0(sigma[0], &ds.energies[0], a2, n).map_err(|err| err.at(Stage::TwoEnergy, Some(y)))?;
        residuals.v0_imag = im;
        (Some(a2), Some(v0))
    } else {
        (None, None)
    };
    Ok(PointZeroth {
        sigma,
        h0: h0s.swap_remove(0),
        alpha_sq,
        v0,
        residuals,
    })
}

/// Runs the recovery stages over every grid point.
///
/// Stage order: admissibility of each energy against the dataset's
/// exceptional set, `σ` and `|ξ|` per energy, `h₀` by polarization, `(α², V₀)`
/// from two energies (or `V₀` from one energy with known `α`), then `(H, W⁽¹⁾)`
/// wherever singularity data is present. Jets of order two and higher are not
/// attempted.
pub fn layer_strip_driver(ds: &SymbolDataset, cfg: &DriverConfig) -> Result<RecoveryReport, InversionError> {
    ds.validate()?;
    if let Some(a) = &cfg.alpha_known {
        if a.len() != 1 && a.len() != ds.grid_len {
            return Err(InversionError::InvalidInput(format!("alpha_known has {} values for {} points", a.len(), ds.grid_len)));
        }
        if a.iter().any(|&v| !(v > 0.0)) {
            return Err(InversionError::InvalidInput("alpha_known must be positive".into()));
        }
    }
    let mut stages = Vec::new();
    for e in &ds.energies {
        let adm = is_admissible(e, &ds.exceptional_set, cfg.margin).map_err(|err| InversionError::InvalidInput(err.to_string()))?;
        if !adm.admissible {
            return Err(InversionError::Inadmissible {
                lambda: e.lambda(),
                summary: adm.summary(),
            }
            .at(Stage::Admissibility, None));
        }
    }
    stages.push(StageStatus {
        stage: Stage::Admissibility,
        status: "ok".into(),
    });
    log::info!("stage sigma: σ = n/2 + log(S(tξ)/S(ξ))/(2 log t), scales {:?}", ds.scales);

    let points = (0..ds.grid_len)
        .into_par_iter()
        .map(|y| recover_point(ds, y, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    stages.push(StageStatus {
        stage: Stage::Sigma,
        status: "ok".into(),
    });
    log::info!("stage metric: (h₀⁻¹)_ij = (q(e_i + e_j) − q(e_i) − q(e_j))/2");
    stages.push(StageStatus {
        stage: Stage::Metric,
        status: "ok".into(),
    });

    let mut residuals = Residuals::default();
    for p in &points {
        residuals.merge(&p.residuals);
    }
    let have_zeroth = points.iter().all(|p| p.alpha_sq.is_some());
    let (alpha_sq, v0): (Option<Vec<f64>>, Option<Vec<f64>>) = if have_zeroth {
        stages.push(StageStatus {
            stage: Stage::TwoEnergy,
            status: if ds.energies.len() >= 2 {
                log::info!("stage two-energy: α² = (λ₁² − λ₂²)/(σ₁(n − σ₁) − σ₂(n − σ₂))");
                "ok".into()
            } else {
                log::info!("stage two-energy: single energy with known α, V₀ = λ² + n²/4 − α²σ(n − σ)");
                "single energy with known alpha".into()
            },
        });
        (
            Some(points.iter().map(|p| p.alpha_sq.expect("checked")).collect()),
            Some(points.iter().map(|p| p.v0.expect("checked")).collect()),
        )
    } else {
        stages.push(StageStatus {
            stage: Stage::TwoEnergy,
            status: "skipped: one energy and alpha not known".into(),
        });
        (None, None)
    };

    let mut first_order = Vec::new();
    if ds.singularity.is_empty() {
        stages.push(StageStatus {
            stage: Stage::FirstOrder,
            status: "skipped: no singularity data".into(),
        });
    } else if let Some(a2s) = &alpha_sq {
        log::info!("stage first-order: F(ω) = t₁ Σ H_ij D_ij(ω) + t₂(W⁽¹⁾ − α²(1 − n)T/4), minimum-norm solve");
        first_order = ds
            .singularity
            .par_iter()
            .map(|b| -> Result<PointFirstOrder, InversionError> {
                let y = b.y_index;
                let sigma = points[y].sigma[b.energy_index];
                let mode = match &cfg.factors {
                    FactorSource::Dataset => &b.factors,
                    FactorSource::Override { factors } => factors,
                };
                let (t1, t2) = mode.factors(sigma, ds.n).map_err(|e| InversionError::from(e).at(Stage::FirstOrder, Some(y)))?;
                let recovery = first_order_recovery(&b.samples, sigma, t1, t2, a2s[y], &points[y].h0, ds.prefactor)
                    .map_err(|e| e.at(Stage::FirstOrder, Some(y)))?;
                Ok(PointFirstOrder { y_index: y, recovery, t1, t2 })
            })
            .collect::<Result<Vec<_>, _>>()?;
        for f in &first_order {
            residuals.first_order_fit = residuals.first_order_fit.max(f.recovery.fit_residual);
        }
        stages.push(StageStatus {
            stage: Stage::FirstOrder,
            status: "ok".into(),
        });
    } else {
        stages.push(StageStatus {
            stage: Stage::FirstOrder,
            status: "skipped: alpha not recovered".into(),
        });
    }

    Ok(RecoveryReport {
        n: ds.n,
        grid_len: ds.grid_len,
        stages,
        sigma: (0..ds.energies.len()).map(|e| points.iter().map(|p| p.sigma[e]).collect()).collect(),
        alpha_sq,
        v0,
        h0: points.into_iter().map(|p| p.h0).collect(),
        design_rank: first_order.iter().map(|f| f.recovery.design_rank).max(),
        first_order,
        residuals,
        higher_orders: "orders k >= 2 not attempted: unsupported by the available derivation".into(),
    })
}
