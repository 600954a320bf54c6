pub mod boundary_jets;
pub mod cubature;
pub mod dataset;
pub mod error;
pub mod forward_scattering;
pub mod hyperbolic_model;
pub mod inversion;
pub mod model_quadrature;
pub mod serde_util;
pub mod special;
pub mod spectral_sets;
pub mod synth;

pub use error::Error;
