//! Finite-difference model of the frozen normal operator on hyperbolic
//! half-space, in coordinates `τ = log s` and `z ∈ Rⁿ`.
//!
//! `Δ₀ = −∂τ² + n∂τ − e^{2τ}Δ_z`, discretized with second-order central
//! differences. Outer grid nodes act as the ghost layer.

use crate::boundary_jets::ComplexEnergy;
use crate::special::{hyp2f1, is_gamma_pole};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_POINTS_PER_AXIS: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("grid too coarse: axis {axis} has {points} points, need at least {MIN_POINTS_PER_AXIS}")]
    GridTooCoarse { axis: usize, points: usize },
    #[error("exclusion radius {radius} must exceed twice the largest spacing {spacing}")]
    ExclusionTooSmall { radius: f64, spacing: f64 },
    #[error("grid function has {got} values, grid has {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("kernel undefined for sigma = {0}")]
    KernelUndefined(Complex64),
}

/// Tensor grid over `[τ_min, τ_max] × [−Z, Z]ⁿ`, τ slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceGrid {
    n: usize,
    tau: [f64; 2],
    n_tau: usize,
    z_half_width: f64,
    n_z: usize,
    exclusion_radius: f64,
}

impl HalfSpaceGrid {
    pub fn new(
        n: usize,
        tau: [f64; 2],
        n_tau: usize,
        z_half_width: f64,
        n_z: usize,
        exclusion_radius: f64,
    ) -> Result<Self, ModelError> {
        if !(1..=3).contains(&n) {
            return Err(ModelError::InvalidGrid(format!("dimension {n} outside 1..=3")));
        }
        if !(tau[1] > tau[0]) || !(z_half_width > 0.0) || !tau.iter().all(|t| t.is_finite()) {
            return Err(ModelError::InvalidGrid("axis extents must be finite and increasing".into()));
        }
        if n_tau < MIN_POINTS_PER_AXIS {
            return Err(ModelError::GridTooCoarse { axis: 0, points: n_tau });
        }
        if n_z < MIN_POINTS_PER_AXIS {
            return Err(ModelError::GridTooCoarse { axis: 1, points: n_z });
        }
        let grid = Self {
            n,
            tau,
            n_tau,
            z_half_width,
            n_z,
            exclusion_radius,
        };
        let spacing = grid.tau_step().max(grid.z_step());
        if !(exclusion_radius > 2.0 * spacing) {
            return Err(ModelError::ExclusionTooSmall {
                radius: exclusion_radius,
                spacing,
            });
        }
        Ok(grid)
    }

    /// Same domain and exclusion ball with every spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            n_tau: 2 * self.n_tau - 1,
            n_z: 2 * self.n_z - 1,
            ..self.clone()
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau_step(&self) -> f64 {
        (self.tau[1] - self.tau[0]) / (self.n_tau - 1) as f64
    }

    pub fn z_step(&self) -> f64 {
        2.0 * self.z_half_width / (self.n_z - 1) as f64
    }

    pub fn max_spacing(&self) -> f64 {
        self.tau_step().max(self.z_step())
    }

    pub fn exclusion_radius(&self) -> f64 {
        self.exclusion_radius
    }

    pub fn len(&self) -> usize {
        self.n_tau * self.slab()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn slab(&self) -> usize {
        self.n_z.pow(self.n as u32)
    }

    fn multi_index(&self, index: usize) -> (usize, [usize; 3]) {
        let mut rest = index % self.slab();
        let mut zi = [0; 3];
        for a in (0..self.n).rev() {
            zi[a] = rest % self.n_z;
            rest /= self.n_z;
        }
        (index / self.slab(), zi)
    }

    /// `(τ, z)` of a node.
    pub fn coords(&self, index: usize) -> (f64, Vec<f64>) {
        let (it, zi) = self.multi_index(index);
        let tau = self.tau[0] + it as f64 * self.tau_step();
        let z = zi[..self.n]
            .iter()
            .map(|&k| -self.z_half_width + k as f64 * self.z_step())
            .collect();
        (tau, z)
    }

    pub fn is_interior(&self, index: usize) -> bool {
        let (it, zi) = self.multi_index(index);
        let inner = |k: usize, m: usize| k > 0 && k + 1 < m;
        inner(it, self.n_tau) && zi[..self.n].iter().all(|&k| inner(k, self.n_z))
    }

    /// Inside the ball `τ² + |z|² < r²` around the diagonal point `(s, z) = (1, 0)`.
    pub fn is_excluded(&self, index: usize) -> bool {
        let (tau, z) = self.coords(index);
        tau * tau + z.iter().map(|v| v * v).sum::<f64>() < self.exclusion_radius.powi(2)
    }

    /// Sample `f(s, z)` at every node.
    pub fn sample<F>(&self, f: F) -> GridFunction
    where
        F: Fn(f64, &[f64]) -> Complex64 + Sync,
    {
        let values = (0..self.len())
            .into_par_iter()
            .map(|i| {
                let (tau, z) = self.coords(i);
                f(tau.exp(), &z)
            })
            .collect();
        GridFunction { values }
    }

    /// Nodes of `self` that also belong to `coarse`, as pairs `(coarse, fine)`.
    /// `self` must be `coarse.refined()`.
    fn common_nodes(&self, coarse: &Self) -> Vec<(usize, usize)> {
        (0..coarse.len())
            .map(|ic| {
                let (it, zi) = coarse.multi_index(ic);
                let mut f = 2 * it;
                for &k in &zi[..self.n] {
                    f = f * self.n_z + 2 * k;
                }
                (ic, f)
            })
            .collect()
    }
}

/// Values at grid nodes, in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: Vec<Complex64>,
}

impl GridFunction {
    pub fn zeros(grid: &HalfSpaceGrid) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Largest modulus over interior nodes outside the exclusion ball.
    pub fn max_abs(&self, grid: &HalfSpaceGrid) -> f64 {
        (0..grid.len())
            .filter(|&i| grid.is_interior(i) && !grid.is_excluded(i))
            .map(|i| self.values[i].norm())
            .fold(0.0, f64::max)
    }
}

fn check_shape(f: &GridFunction, grid: &HalfSpaceGrid) -> Result<(), ModelError> {
    if f.values.len() != grid.len() {
        return Err(ModelError::ShapeMismatch {
            expected: grid.len(),
            got: f.values.len(),
        });
    }
    Ok(())
}

/// `Δ₀f` at interior nodes; boundary nodes of the result are zero.
pub fn hyperbolic_laplacian_apply(f: &GridFunction, grid: &HalfSpaceGrid) -> Result<GridFunction, ModelError> {
    check_shape(f, grid)?;
    let ht = grid.tau_step();
    let hz = grid.z_step();
    let nf = grid.n as f64;
    let slab = grid.slab();
    let mut strides = [0usize; 3];
    for (a, s) in strides.iter_mut().enumerate().take(grid.n) {
        *s = grid.n_z.pow((grid.n - 1 - a) as u32);
    }
    let mut out = GridFunction::zeros(grid);
    out.values
        .par_chunks_mut(slab)
        .enumerate()
        .for_each(|(it, chunk)| {
            if it == 0 || it + 1 == grid.n_tau {
                return;
            }
            let s2 = (2.0 * (grid.tau[0] + it as f64 * ht)).exp();
            for (local, slot) in chunk.iter_mut().enumerate() {
                let i = it * slab + local;
                if !grid.is_interior(i) {
                    continue;
                }
                let v = &f.values;
                let c = v[i];
                let (up, down) = (v[i + slab], v[i - slab]);
                let d_tt = (up - c * 2.0 + down) / (ht * ht);
                let d_t = (up - down) / (2.0 * ht);
                let mut lap_z = Complex64::new(0.0, 0.0);
                for &st in &strides[..grid.n] {
                    lap_z += (v[i + st] - c * 2.0 + v[i - st]) / (hz * hz);
                }
                *slot = -d_tt + d_t * nf - lap_z * s2;
            }
        });
    Ok(out)
}

/// `α_c²Δ₀f + (V₀ − λ² − n²/4)f`.
pub fn normal_operator_apply(
    f: &GridFunction,
    alpha_c: f64,
    v0_c: f64,
    energy: &ComplexEnergy,
    grid: &HalfSpaceGrid,
) -> Result<GridFunction, ModelError> {
    let mut out = hyperbolic_laplacian_apply(f, grid)?;
    let nf = grid.n as f64;
    let shift = Complex64::new(v0_c - nf * nf / 4.0, 0.0) - energy.lambda_sq();
    let a2 = alpha_c * alpha_c;
    for (i, o) in out.values.iter_mut().enumerate() {
        if grid.is_interior(i) {
            *o = *o * a2 + f.values[i] * shift;
        }
    }
    Ok(out)
}

/// `V₀ − λ² − n²/4 + α²σ(n − σ)`, which vanishes for the indicial root.
pub fn shifted_potential_residual(n: usize, alpha: f64, v0: f64, energy: &ComplexEnergy, sigma: Complex64) -> Complex64 {
    let nf = n as f64;
    Complex64::new(v0 - nf * nf / 4.0, 0.0) - energy.lambda_sq() + sigma * (nf - sigma) * (alpha * alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelForm {
    /// `s^σ (1 + s² + |z|²)^{−σ}`.
    LeadingTerm,
    /// `e^{−σd} ₂F₁(σ, n/2; σ − n/2 + 1; e^{−2d})`, with `d` the hyperbolic
    /// distance to `(1, 0)`.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralSign {
    /// `Δ₀ − σ(n − σ)`.
    Annihilating,
    /// `Δ₀ − σ(σ − n)`.
    Reversed,
}

/// `G_scalar(s, z) = s^σ (1 + s² + |z|²)^{−σ}`.
pub fn g_scalar(s: f64, z: &[f64], sigma: Complex64) -> Complex64 {
    let r2 = 1.0 + s * s + z.iter().map(|v| v * v).sum::<f64>();
    (sigma * (s.ln() - r2.ln())).exp()
}

/// Radial eigenfunction of `Δ₀` with eigenvalue `σ(n − σ)` that decays like `e^{−σd}`.
/// NaN at the singular point `d = 0`.
pub fn full_radial_kernel(s: f64, z: &[f64], sigma: Complex64, n: usize) -> Complex64 {
    let cosh_d = (1.0 + s * s + z.iter().map(|v| v * v).sum::<f64>()) / (2.0 * s);
    let e_minus_d = 1.0 / (cosh_d + (cosh_d * cosh_d - 1.0).max(0.0).sqrt());
    if e_minus_d >= 1.0 {
        return Complex64::new(f64::NAN, f64::NAN);
    }
    let half_n = n as f64 / 2.0;
    let c = sigma - half_n + 1.0;
    (sigma * e_minus_d.ln()).exp()
        * hyp2f1(sigma, Complex64::new(half_n, 0.0), c, e_minus_d * e_minus_d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridResidual {
    pub tau_step: f64,
    pub z_step: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenResidualReport {
    pub n: usize,
    #[serde(with = "crate::serde_util::complex")]
    pub sigma: Complex64,
    pub kernel: KernelForm,
    pub sign: SpectralSign,
    pub exclusion_radius: f64,
    pub coarse: GridResidual,
    pub fine: GridResidual,
    /// `coarse.max_residual / fine.max_residual`.
    pub refinement_ratio: f64,
    /// `log₂` of the ratio.
    pub observed_order: f64,
}

/// `(Δ₀ − c)K` on `grid` and on its refinement, with `c = σ(n − σ)` or
/// `σ(σ − n)`. Both maxima are taken over the nodes of the coarse grid, away
/// from the exclusion ball and the outer layer.
pub fn green_residual_check(
    sigma: Complex64,
    grid: &HalfSpaceGrid,
    kernel: KernelForm,
    sign: SpectralSign,
) -> Result<GreenResidualReport, ModelError> {
    let n = grid.n;
    let nf = n as f64;
    if kernel == KernelForm::Full && is_gamma_pole(sigma - nf / 2.0 + 1.0) {
        return Err(ModelError::KernelUndefined(sigma));
    }
    let shift = match sign {
        SpectralSign::Annihilating => sigma * (nf - sigma),
        SpectralSign::Reversed => sigma * (sigma - nf),
    };
    let residual = |g: &HalfSpaceGrid| -> Result<GridFunction, ModelError> {
        let f = match kernel {
            KernelForm::LeadingTerm => g.sample(|s, z| g_scalar(s, z, sigma)),
            KernelForm::Full => g.sample(|s, z| full_radial_kernel(s, z, sigma, n)),
        };
        let mut r = hyperbolic_laplacian_apply(&f, g)?;
        for (o, v) in r.values.iter_mut().zip(&f.values) {
            *o -= v * shift;
        }
        Ok(r)
    };
    let fine_grid = grid.refined();
    let r_coarse = residual(grid)?;
    let r_fine = residual(&fine_grid)?;
    let mut max_c: f64 = 0.0;
    let mut max_f: f64 = 0.0;
    for (ic, jf) in fine_grid.common_nodes(grid) {
        if grid.is_interior(ic) && !grid.is_excluded(ic) {
            max_c = max_c.max(r_coarse.values[ic].norm());
            max_f = max_f.max(r_fine.values[jf].norm());
        }
    }
    let ratio = max_c / max_f;
    Ok(GreenResidualReport {
        n,
        sigma,
        kernel,
        sign,
        exclusion_radius: grid.exclusion_radius,
        coarse: GridResidual {
            tau_step: grid.tau_step(),
            z_step: grid.z_step(),
            max_residual: max_c,
        },
        fine: GridResidual {
            tau_step: fine_grid.tau_step(),
            z_step: fine_grid.z_step(),
            max_residual: max_f,
        },
        refinement_ratio: ratio,
        observed_order: ratio.log2(),
    })
}
