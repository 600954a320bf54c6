//! Scattering datasets: principal-symbol samples at several energies and
//! leading-singularity samples over a probe set, synthesized from a pair of
//! boundary patches.

use crate::boundary_jets::{indicial_root, perturbation_coefficients, BoundaryPatch, ComplexEnergy};
use crate::forward_scattering::{principal_symbol, singularity_coefficient, ForwardError, ProbeSet, SingularitySample, SymbolSample};
use crate::model_quadrature::{t_limit_integral, QuadratureError, QuadratureSpec};
use crate::serde_util;
use crate::spectral_sets::ExceptionalSet;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scales `t` at which each base covector is resampled.
pub const DEFAULT_SCALES: [f64; 3] = [2.0, 3.0, 5.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("invalid forward configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed dataset: {0}")]
    Malformed(String),
}

/// How the integral factors `T₁(σ)`, `T₂(σ)` are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum FactorMode {
    Injected {
        #[serde(with = "serde_util::complex")]
        t1: Complex64,
        #[serde(with = "serde_util::complex")]
        t2: Complex64,
    },
    Quadrature { spec: QuadratureSpec },
}

impl FactorMode {
    pub fn unit() -> Self {
        FactorMode::Injected {
            t1: Complex64::new(1.0, 0.0),
            t2: Complex64::new(1.0, 0.0),
        }
    }

    /// `(T₁(σ), T₂(σ))`.
    pub fn factors(&self, sigma: Complex64, n: usize) -> Result<(Complex64, Complex64), QuadratureError> {
        match self {
            FactorMode::Injected { t1, t2 } => Ok((*t1, *t2)),
            FactorMode::Quadrature { spec } => {
                let t1 = t_limit_integral(1, sigma, n, spec)?;
                let t2 = t_limit_integral(2, sigma, n, spec)?;
                for v in [&t1, &t2] {
                    if !v.converged {
                        return Err(QuadratureError::QuadratureFailure {
                            value: v.value,
                            est_error: v.est_error,
                            evals: v.n_evals,
                        });
                    }
                }
                Ok((t1.value, t2.value))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardConfig {
    pub energies: Vec<ComplexEnergy>,
    pub scales: Vec<f64>,
    /// Defaults to [`ProbeSet::default_for`].
    pub probes: Option<ProbeSet>,
    /// Grid points with singularity data; `None` means every point.
    pub singularity_points: Option<Vec<usize>>,
    /// Energy index used for singularity data.
    pub singularity_energy: usize,
    pub factors: FactorMode,
    /// Overall constant `C(σ)` multiplying every `F(ω)`.
    #[serde(with = "serde_util::complex")]
    pub prefactor: Complex64,
    pub k_max: u32,
    #[serde(with = "serde_util::complex_vec")]
    pub user_excluded: Vec<Complex64>,
}

impl ForwardConfig {
    pub fn new(energies: Vec<ComplexEnergy>) -> Self {
        Self {
            energies,
            scales: DEFAULT_SCALES.to_vec(),
            probes: None,
            singularity_points: None,
            singularity_energy: 0,
            factors: FactorMode::unit(),
            prefactor: Complex64::new(1.0, 0.0),
            k_max: 4,
            user_excluded: Vec::new(),
        }
    }
}

/// Singularity samples at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityBlock {
    pub y_index: usize,
    pub energy_index: usize,
    pub factors: FactorMode,
    /// Factor values used to generate `samples`.
    #[serde(with = "serde_util::complex")]
    pub t1: Complex64,
    #[serde(with = "serde_util::complex")]
    pub t2: Complex64,
    pub samples: Vec<SingularitySample>,
}

/// Symbol samples are stored in the order energy, grid point, base
/// covector, then scale `1, scales…`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolDataset {
    pub n: usize,
    pub grid_len: usize,
    pub energies: Vec<ComplexEnergy>,
    pub covectors: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
    pub symbols: Vec<SymbolSample>,
    /// `σ(λ_e, y)` per energy, for reference.
    #[serde(with = "sigma_field_serde")]
    pub sigma_field: Vec<Vec<Complex64>>,
    pub singularity: Vec<SingularityBlock>,
    #[serde(with = "serde_util::complex")]
    pub prefactor: Complex64,
    pub exceptional_set: ExceptionalSet,
}

mod sigma_field_serde {
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

/// `{e_i} ∪ {e_i + e_j : i < j}`, the covectors used for polarization.
pub fn polarization_covectors(n: usize) -> Vec<Vec<f64>> {
    let e = |i: usize| -> Vec<f64> { (0..n).map(|k| if k == i { 1.0 } else { 0.0 }).collect() };
    let mut out: Vec<Vec<f64>> = (0..n).map(e).collect();
    for i in 0..n {
        for j in i + 1..n {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v[j] = 1.0;
            out.push(v);
        }
    }
    out
}

impl SymbolDataset {
    fn per_point(&self) -> usize {
        self.covectors.len() * (self.scales.len() + 1)
    }

    /// Symbol values at `(energy, y)`, indexed `[covector][scale]` with
    /// scale 0 the unscaled covector.
    pub fn block(&self, energy: usize, y_index: usize) -> Vec<&[SymbolSample]> {
        let per = self.per_point();
        let start = (energy * self.grid_len + y_index) * per;
        self.symbols[start..start + per].chunks(self.scales.len() + 1).collect()
    }

    /// Checks counts, ordering, covector scaling and energy labels.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::Malformed(m));
        if self.energies.is_empty() {
            return bad("no energies".into());
        }
        if self.covectors.iter().any(|c| c.len() != self.n) {
            return bad("covector dimension differs from n".into());
        }
        if self.scales.iter().any(|&t| !(t > 1.0)) || self.scales.is_empty() {
            return bad("scales must exceed 1".into());
        }
        let expected = self.energies.len() * self.grid_len * self.per_point();
        if self.symbols.len() != expected {
            return bad(format!("expected {expected} symbol samples, found {}", self.symbols.len()));
        }
        for e in 0..self.energies.len() {
            for y in 0..self.grid_len {
                for (ci, row) in self.block(e, y).iter().enumerate() {
                    for (si, s) in row.iter().enumerate() {
                        let t = if si == 0 { 1.0 } else { self.scales[si - 1] };
                        let want: Vec<f64> = self.covectors[ci].iter().map(|v| v * t).collect();
                        let off = s.xi.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                        if s.y_index != y || off > 1e-12 * t || s.lambda != self.energies[e].lambda() {
                            return bad(format!("sample out of order at energy {e}, point {y}, covector {ci}, scale {si}"));
                        }
                    }
                }
            }
        }
        for b in &self.singularity {
            if b.y_index >= self.grid_len || b.energy_index >= self.energies.len() {
                return bad(format!("singularity block at point {} out of range", b.y_index));
            }
        }
        Ok(())
    }
}

/// Samples the forward map. Symbols come from `patch1`; singularity data
/// comes from the first-order difference `patch2 − patch1`.
pub fn synthesize(patch1: &BoundaryPatch, patch2: Option<&BoundaryPatch>, config: &ForwardConfig) -> Result<SymbolDataset, DatasetError> {
    let n = patch1.n();
    if config.energies.is_empty() {
        return Err(DatasetError::InvalidConfig("at least one energy is required".into()));
    }
    if config.scales.iter().any(|&t| !(t > 1.0 && t.is_finite())) || config.scales.is_empty() {
        return Err(DatasetError::InvalidConfig("scales must be finite and greater than 1".into()));
    }
    if config.singularity_energy >= config.energies.len() {
        return Err(DatasetError::InvalidConfig("singularity energy index out of range".into()));
    }
    let covectors = polarization_covectors(n);
    let mut sigma_field = Vec::with_capacity(config.energies.len());
    for e in &config.energies {
        sigma_field.push(indicial_root(patch1, e).map_err(ForwardError::from)?.sigma);
    }

    let mut jobs = Vec::new();
    for e in 0..config.energies.len() {
        for y in 0..patch1.len() {
            for c in &covectors {
                jobs.push((e, y, c.clone()));
                for &t in &config.scales {
                    jobs.push((e, y, c.iter().map(|v| v * t).collect()));
                }
            }
        }
    }
    let symbols = jobs
        .par_iter()
        .map(|(e, y, xi)| principal_symbol(patch1, *y, xi, &config.energies[*e]))
        .collect::<Result<Vec<_>, _>>()?;

    let mut singularity = Vec::new();
    if let Some(patch2) = patch2 {
        let probes = config.probes.clone().unwrap_or_else(|| ProbeSet::default_for(n));
        if probes.n() != n {
            return Err(DatasetError::InvalidConfig("probe dimension differs from n".into()));
        }
        let points: Vec<usize> = config.singularity_points.clone().unwrap_or_else(|| (0..patch1.len()).collect());
        let e = config.singularity_energy;
        singularity = points
            .par_iter()
            .map(|&y| -> Result<SingularityBlock, DatasetError> {
                let pd = perturbation_coefficients(patch1, patch2, y).map_err(ForwardError::from)?;
                let sigma = sigma_field[e][y];
                let (t1, t2) = config.factors.factors(sigma, n)?;
                let samples = probes
                    .directions
                    .iter()
                    .map(|w| {
                        singularity_coefficient(&pd, patch1.h(0, y), patch1.alpha(y), sigma, t1, t2, w).map(|mut s| {
                            s.value *= config.prefactor;
                            s
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(SingularityBlock {
                    y_index: y,
                    energy_index: e,
                    factors: config.factors.clone(),
                    t1,
                    t2,
                    samples,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
    }

    Ok(SymbolDataset {
        n,
        grid_len: patch1.len(),
        energies: config.energies.clone(),
        covectors,
        scales: config.scales.clone(),
        symbols,
        sigma_field,
        singularity,
        prefactor: config.prefactor,
        exceptional_set: ExceptionalSet::from_patch(patch1, config.k_max, config.user_excluded.clone()),
    })
}
