//! Bohl exponents, dichotomy spectra with prescribed uniformity dimensions,
//! spectral filtrations and decompositions, and dichotomy certificates for
//! discrete linear time-varying systems `x(n+1) = A(n) x(n)`.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`, see
//! [`Real`]); the aliases below fix it to `f64`, which is what the command
//! line driver and the report formats use.

pub mod bohl;
pub mod error;
pub mod grassmann;
pub mod propagation;
pub mod scalar;
pub mod spectrum;
pub mod systems;

pub use error::{Error, Result};
pub use scalar::{Extended, Real};

/// `f64` instantiations of the generic core.
pub type Sequence = systems::CoefficientSequence<f64>;
pub type Subspace = grassmann::Subspace<f64>;
pub type Splitting = grassmann::Splitting<f64>;
pub type Bounds = systems::SystemBounds<f64>;
pub type Estimate = bohl::BohlEstimate<f64>;
pub type Limiting = bohl::LimitingEstimate<f64>;
pub type Spectrum = spectrum::SpectrumReport<f64>;
pub type Certificate = spectrum::DichotomyCertificate<f64>;
pub type Uniformity = spectrum::MaximalUniformity<f64>;
