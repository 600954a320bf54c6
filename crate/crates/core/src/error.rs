//! Crate-wide error with stable, module-qualified codes.

use crate::boundary_jets::{JetError, PatchError};
use crate::dataset::DatasetError;
use crate::forward_scattering::ForwardError;
use crate::hyperbolic_model::ModelError;
use crate::inversion::InversionError;
use crate::model_quadrature::QuadratureError;
use crate::spectral_sets::SetsError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Sets(#[from] SetsError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Inversion(#[from] InversionError),
}

fn patch_code(e: &PatchError) -> &'static str {
    match e {
        PatchError::Dimension(_) => "Dimension",
        PatchError::AxisCount { .. } => "AxisCount",
        PatchError::AxisTooShort { .. } => "AxisTooShort",
        PatchError::BadPeriod(_) => "BadPeriod",
        PatchError::FieldLength { .. } => "FieldLength",
        PatchError::NonFinite { .. } => "NonFinite",
        PatchError::NonPositiveAlpha { .. } => "NonPositiveAlpha",
        PatchError::NotSymmetric { .. } => "NotSymmetric",
        PatchError::NotPositiveDefinite { .. } => "NotPositiveDefinite",
        PatchError::EmptyJet { .. } => "EmptyJet",
        PatchError::MatrixShape { .. } => "MatrixShape",
        PatchError::Expr { .. } => "Expr",
        PatchError::CoordOutOfRange { .. } => "CoordOutOfRange",
        PatchError::Json(_) => "Json",
    }
}

fn jet_code(e: &JetError) -> &'static str {
    match e {
        JetError::BranchCut { .. } => "BranchCut",
        JetError::MismatchedBoundary { .. } => "MismatchedBoundary",
        JetError::GridMismatch => "GridMismatch",
        JetError::IndexOutOfRange { .. } => "IndexOutOfRange",
        JetError::InsufficientJet { .. } => "InsufficientJet",
        JetError::InvalidInput(_) => "InvalidInput",
    }
}

fn quadrature_code(e: &QuadratureError) -> &'static str {
    match e {
        QuadratureError::NotConvergent { .. } => "NotConvergent",
        QuadratureError::QuadratureFailure { .. } => "QuadratureFailure",
        QuadratureError::GammaPole { .. } => "GammaPole",
        QuadratureError::InvalidInput(_) => "InvalidInput",
    }
}

fn forward_code(e: &ForwardError) -> String {
    match e {
        ForwardError::GammaPole(_) => "forward_scattering::GammaPole".into(),
        ForwardError::ZeroCovector => "forward_scattering::ZeroCovector".into(),
        ForwardError::Dimension { .. } => "forward_scattering::Dimension".into(),
        ForwardError::NotUnit { .. } => "forward_scattering::NotUnit".into(),
        ForwardError::NotPositiveDefinite => "forward_scattering::NotPositiveDefinite".into(),
        ForwardError::ChartUndefined { .. } => "forward_scattering::ChartUndefined".into(),
        ForwardError::Jet(j) => format!("boundary_jets::{}", jet_code(j)),
    }
}

fn dataset_code(e: &DatasetError) -> String {
    match e {
        DatasetError::Forward(f) => forward_code(f),
        DatasetError::Quadrature(q) => format!("model_quadrature::{}", quadrature_code(q)),
        DatasetError::InvalidConfig(_) => "dataset::InvalidConfig".into(),
        DatasetError::Malformed(_) => "dataset::Malformed".into(),
    }
}

fn inversion_code(e: &InversionError) -> String {
    let leaf = |s: &str| format!("inversion::{s}");
    match e {
        InversionError::ZeroSymbol => leaf("ZeroSymbol"),
        InversionError::BranchAmbiguity(_) => leaf("BranchAmbiguity"),
        InversionError::NotPositiveDefinite => leaf("NotPositiveDefinite"),
        InversionError::DegenerateEnergies => leaf("DegenerateEnergies"),
        InversionError::InconsistentData(_) => leaf("InconsistentData"),
        InversionError::ZeroIntegralFactor { .. } => leaf("ZeroIntegralFactor"),
        InversionError::Inadmissible { .. } => leaf("Inadmissible"),
        InversionError::InvalidInput(_) => leaf("InvalidInput"),
        InversionError::Forward(f) => forward_code(f),
        InversionError::Quadrature(q) => format!("model_quadrature::{}", quadrature_code(q)),
        InversionError::Dataset(d) => dataset_code(d),
        InversionError::Stage { stage, source, .. } => format!("inversion[{stage}]/{}", inversion_code(source)),
    }
}

impl Error {
    /// For example `boundary_jets::BranchCut` or
    /// `inversion[sigma]/inversion::ZeroSymbol`.
    pub fn code(&self) -> String {
        match self {
            Error::Patch(e) => format!("boundary_jets::{}", patch_code(e)),
            Error::Jet(e) => format!("boundary_jets::{}", jet_code(e)),
            Error::Sets(e) => match e {
                SetsError::EvaluationFailure { .. } => "spectral_sets::EvaluationFailure".into(),
                SetsError::InvalidInput(_) => "spectral_sets::InvalidInput".into(),
            },
            Error::Quadrature(e) => format!("model_quadrature::{}", quadrature_code(e)),
            Error::Model(e) => match e {
                ModelError::GridTooCoarse { .. } => "hyperbolic_model::GridTooCoarse".into(),
                ModelError::ExclusionTooSmall { .. } => "hyperbolic_model::ExclusionTooSmall".into(),
                ModelError::ShapeMismatch { .. } => "hyperbolic_model::ShapeMismatch".into(),
                ModelError::InvalidGrid(_) => "hyperbolic_model::InvalidGrid".into(),
                ModelError::KernelUndefined(_) => "hyperbolic_model::KernelUndefined".into(),
            },
            Error::Forward(e) => forward_code(e),
            Error::Dataset(e) => dataset_code(e),
            Error::Inversion(e) => inversion_code(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inversion::Stage;
    use num_complex::Complex64;

    #[test]
    fn codes() {
        let e: Error = JetError::BranchCut {
            index: 0,
            y: vec![],
            arg: Complex64::new(-1.0, 0.0),
        }
        .into();
        assert_eq!(e.code(), "boundary_jets::BranchCut");
        let nested = InversionError::Stage {
            stage: Stage::Sigma,
            y_index: Some(2),
            source: Box::new(InversionError::ZeroSymbol),
        };
        assert_eq!(Error::from(nested).code(), "inversion[sigma]/inversion::ZeroSymbol");
    }
}
