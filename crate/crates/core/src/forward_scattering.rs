//! Forward map: principal symbols of the scattering matrix, the leading
//! singularity coefficient of a scattering-matrix difference, probe sets and
//! projective blow-up charts.

use crate::boundary_jets::{indicial_root_at, BoundaryPatch, ComplexEnergy, JetError, PerturbationData};
use crate::serde_util;
use crate::special::{gamma, is_gamma_pole, recip_gamma};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForwardError {
    #[error("Gamma pole in the symbol prefactor at sigma = {0}")]
    GammaPole(Complex64),
    #[error("covector is zero")]
    ZeroCovector,
    #[error("expected a vector of length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("probe direction has norm {norm}, expected 1")]
    NotUnit { norm: f64 },
    #[error("metric is not positive definite")]
    NotPositiveDefinite,
    #[error("{chart} chart undefined: {reason}")]
    ChartUndefined { chart: &'static str, reason: &'static str },
    #[error(transparent)]
    Jet(#[from] JetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSample {
    pub y_index: usize,
    pub y: Vec<f64>,
    pub xi: Vec<f64>,
    #[serde(with = "serde_util::complex")]
    pub lambda: Complex64,
    #[serde(with = "serde_util::complex")]
    pub value: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularitySample {
    pub omega: Vec<f64>,
    #[serde(with = "serde_util::complex")]
    pub value: Complex64,
}

/// `2^{n−2σ} Γ(n/2 − σ) / Γ(σ − n/2)`.
pub fn symbol_prefactor(sigma: Complex64, n: usize) -> Result<Complex64, ForwardError> {
    let half = n as f64 / 2.0;
    if is_gamma_pole(sigma - half) || is_gamma_pole(-sigma + half) {
        return Err(ForwardError::GammaPole(sigma));
    }
    let pow2 = ((-sigma * 2.0 + n as f64) * std::f64::consts::LN_2).exp();
    Ok(pow2 * gamma(-sigma + half) * recip_gamma(sigma - half))
}

/// `√(ξᵀ h₀⁻¹ ξ)`.
pub fn covector_norm(h0: &DMatrix<f64>, xi: &[f64]) -> Result<f64, ForwardError> {
    let n = h0.nrows();
    if xi.len() != n {
        return Err(ForwardError::Dimension { expected: n, got: xi.len() });
    }
    let chol = h0.clone().cholesky().ok_or(ForwardError::NotPositiveDefinite)?;
    let v = DVector::from_column_slice(xi);
    let q = v.dot(&chol.solve(&v));
    if q <= 0.0 {
        return Err(ForwardError::ZeroCovector);
    }
    Ok(q.sqrt())
}

/// Symbol value for known `σ`, `h₀`.
pub fn principal_symbol_value(sigma: Complex64, h0: &DMatrix<f64>, xi: &[f64]) -> Result<Complex64, ForwardError> {
    let n = h0.nrows();
    if xi.iter().all(|&v| v == 0.0) {
        return Err(ForwardError::ZeroCovector);
    }
    let norm = covector_norm(h0, xi)?;
    let pre = symbol_prefactor(sigma, n)?;
    Ok(pre * ((sigma * 2.0 - n as f64) * norm.ln()).exp())
}

/// `2^{n−2σ} Γ(n/2 − σ)/Γ(σ − n/2) |ξ|^{2σ−n}` at grid point `y_index`,
/// with `σ = σ(λ, y)` and `|ξ|² = ξᵀh₀⁻¹ξ`.
pub fn principal_symbol(
    patch: &BoundaryPatch,
    y_index: usize,
    xi: &[f64],
    energy: &ComplexEnergy,
) -> Result<SymbolSample, ForwardError> {
    if y_index >= patch.len() {
        return Err(JetError::IndexOutOfRange {
            index: y_index,
            len: patch.len(),
        }
        .into());
    }
    let n = patch.n();
    if xi.len() != n {
        return Err(ForwardError::Dimension { expected: n, got: xi.len() });
    }
    let y = patch.point(y_index);
    let sigma = indicial_root_at(n, patch.alpha(y_index), patch.v(0, y_index), energy).map_err(|arg| {
        JetError::BranchCut {
            index: y_index,
            y: y.clone(),
            arg,
        }
    })?;
    let value = principal_symbol_value(sigma, patch.h(0, y_index), xi)?;
    Ok(SymbolSample {
        y_index,
        y,
        xi: xi.to_vec(),
        lambda: energy.lambda(),
        value,
    })
}

/// `D_ij(ω) = (3 − 2σ)(δ_ij + (1 − 2σ)ω_iω_j)`, the Hessian of `|Y|^{3−2σ}`
/// at `Y = ω` scaled by `|Y|^{2σ−1}`.
pub fn radial_derivative_kernel(omega: &[f64], sigma: Complex64) -> DMatrix<Complex64> {
    let n = omega.len();
    let a = -sigma * 2.0 + 3.0;
    let b = -sigma * 2.0 + 1.0;
    DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        a * (b * (omega[i] * omega[j]) + delta)
    })
}

/// Upper-triangular factor `A₀` with `A₀ᵀA₀ = h₀`. It maps `h₀` to the
/// identity: `|A₀Y| = |Y|_{h₀}`.
pub fn normalizing_map(h0: &DMatrix<f64>) -> Result<DMatrix<f64>, ForwardError> {
    let chol = h0.clone().cholesky().ok_or(ForwardError::NotPositiveDefinite)?;
    Ok(chol.l().transpose())
}

fn check_unit(omega: &[f64]) -> Result<(), ForwardError> {
    let norm = omega.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(ForwardError::NotUnit { norm });
    }
    Ok(())
}

/// `F(ω) = t₁ Σ H̃_ab D_ab(ω̃) + t₂ (W⁽¹⁾ − α²(1 − n)T/4)`, where the tilde
/// quantities live in the coordinates that make `h₀` the identity:
/// `ω̃ = A₀ω/|A₀ω|`, `H̃ = A₀HA₀ᵀ`. With `h₀ = I` this is the plain formula.
pub fn singularity_coefficient(
    pd: &PerturbationData,
    h0: &DMatrix<f64>,
    alpha: f64,
    sigma: Complex64,
    t1: Complex64,
    t2: Complex64,
    omega: &[f64],
) -> Result<SingularitySample, ForwardError> {
    let n = h0.nrows();
    if omega.len() != n {
        return Err(ForwardError::Dimension { expected: n, got: omega.len() });
    }
    if pd.h.nrows() != n {
        return Err(ForwardError::Dimension {
            expected: n,
            got: pd.h.nrows(),
        });
    }
    check_unit(omega)?;
    let a0 = normalizing_map(h0)?;
    let mut w = &a0 * DVector::from_column_slice(omega);
    w /= w.norm();
    let h_tilde = &a0 * &pd.h * a0.transpose();
    let d = radial_derivative_kernel(w.as_slice(), sigma);
    let mut contraction = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            contraction += d[(i, j)] * h_tilde[(i, j)];
        }
    }
    let scalar = pd.w1() - alpha * alpha * (1.0 - n as f64) * pd.t / 4.0;
    Ok(SingularitySample {
        omega: omega.to_vec(),
        value: t1 * contraction + t2 * scalar,
    })
}

/// Unit probe directions for the leading singularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub directions: Vec<Vec<f64>>,
}

impl ProbeSet {
    /// `{e_i} ∪ {(e_i ± e_j)/√2 : i < j}`.
    pub fn default_for(n: usize) -> Self {
        let e = |i: usize| -> Vec<f64> { (0..n).map(|k| if k == i { 1.0 } else { 0.0 }).collect() };
        let mut directions: Vec<Vec<f64>> = (0..n).map(e).collect();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..n {
            for j in i + 1..n {
                for sign in [1.0, -1.0] {
                    let mut v = vec![0.0; n];
                    v[i] = r;
                    v[j] = sign * r;
                    directions.push(v);
                }
            }
        }
        Self { directions }
    }

    pub fn new(directions: Vec<Vec<f64>>) -> Result<Self, ForwardError> {
        let n = directions.first().map_or(0, Vec::len);
        for d in &directions {
            if d.len() != n {
                return Err(ForwardError::Dimension { expected: n, got: d.len() });
            }
            check_unit(d)?;
        }
        Ok(Self { directions })
    }

    pub fn n(&self) -> usize {
        self.directions.first().map_or(0, Vec::len)
    }

    /// Rank of the rows `[vech(ωωᵀ), 1]`, out of `n(n+1)/2 + 1`.
    pub fn design_rank(&self) -> usize {
        let n = self.n();
        let cols = n * (n + 1) / 2 + 1;
        let rows = self.directions.len();
        if rows == 0 {
            return 0;
        }
        let m = DMatrix::from_fn(rows, cols, |r, c| {
            if c + 1 == cols {
                return 1.0;
            }
            let (i, j) = vech_pair(n, c);
            self.directions[r][i] * self.directions[r][j]
        });
        let sv = m.singular_values();
        let max = sv.max();
        sv.iter().filter(|&&s| s > 1e-10 * max).count()
    }
}

/// `(i, j)` with `i ≤ j` for position `c` of the row-wise upper triangle.
pub fn vech_pair(n: usize, c: usize) -> (usize, usize) {
    let mut k = c;
    for i in 0..n {
        let row = n - i;
        if k < row {
            return (i, i + k);
        }
        k -= row;
    }
    panic!("vech index {c} out of range for n = {n}");
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeftChart {
    pub s: f64,
    pub z: Vec<f64>,
    pub x_prime: f64,
    pub y_prime: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontChart {
    pub rho: f64,
    pub rho_prime: f64,
    pub r: f64,
    pub omega: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RightChart {
    pub t: f64,
    pub z_prime: Vec<f64>,
    pub x: f64,
    pub y: Vec<f64>,
}

/// Projective coordinates near the boundary diagonal, with `Y = y − y′`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowupCoordinates {
    pub left: Result<LeftChart, ForwardError>,
    pub front: Result<FrontChart, ForwardError>,
    pub right: Result<RightChart, ForwardError>,
    /// `√(x′² + x² + |Y|²)`.
    pub radius: f64,
}

pub fn blowup_coordinates(x: f64, x_prime: f64, y: &[f64], y_prime: &[f64]) -> Result<BlowupCoordinates, ForwardError> {
    if y.len() != y_prime.len() {
        return Err(ForwardError::Dimension {
            expected: y.len(),
            got: y_prime.len(),
        });
    }
    let big_y: Vec<f64> = y.iter().zip(y_prime).map(|(a, b)| a - b).collect();
    let ny = big_y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let left = if x_prime == 0.0 {
        Err(ForwardError::ChartUndefined {
            chart: "left",
            reason: "x' = 0",
        })
    } else {
        Ok(LeftChart {
            s: x / x_prime,
            z: big_y.iter().map(|v| v / x_prime).collect(),
            x_prime,
            y_prime: y_prime.to_vec(),
        })
    };
    let front = if ny == 0.0 {
        Err(ForwardError::ChartUndefined {
            chart: "front",
            reason: "|y - y'| = 0",
        })
    } else {
        Ok(FrontChart {
            rho: x / ny,
            rho_prime: x_prime / ny,
            r: ny,
            omega: big_y.iter().map(|v| v / ny).collect(),
            y: y.to_vec(),
        })
    };
    let right = if x == 0.0 {
        Err(ForwardError::ChartUndefined {
            chart: "right",
            reason: "x = 0",
        })
    } else {
        Ok(RightChart {
            t: x_prime / x,
            z_prime: big_y.iter().map(|v| -v / x).collect(),
            x,
            y: y.to_vec(),
        })
    };
    Ok(BlowupCoordinates {
        left,
        front,
        right,
        radius: (x_prime * x_prime + x * x + ny * ny).sqrt(),
    })
}
