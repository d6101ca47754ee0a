//! Virtual vacuum-magnetic-birefringence polarimeter.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the CLI and the reference
//! numbers use.

// `!(x > 0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod birefringence;
pub mod error;
pub mod jones;
pub mod scalar;
pub mod signal;
pub mod units;

pub use error::{Error, Result};
pub use scalar::Real;

pub type PhysicalConstants = units::PhysicalConstants<f64>;
pub type NaturalUnitBridge = units::NaturalUnitBridge<f64>;
pub type BeamParams = birefringence::BeamParams<f64>;
pub type FieldRegion = birefringence::FieldRegion<f64>;
pub type BirefringenceModel = birefringence::BirefringenceModel<f64>;
pub type SignedBirefringence = birefringence::SignedBirefringence<f64>;
pub type JonesMatrix = jones::JonesMatrix<f64>;
pub type JonesVector = jones::JonesVector<f64>;
pub type MirrorParams = jones::MirrorParams<f64>;
pub type TimeSeries = signal::TimeSeries<f64>;
pub type SynthConfig = signal::SynthConfig<f64>;
pub type MagnetSpec = signal::MagnetSpec<f64>;
pub type SpectralTable = analysis::SpectralTable<f64>;
pub type RayleighFit = analysis::RayleighFit<f64>;
pub type LimitResult = analysis::LimitResult<f64>;
pub type ExclusionCurve = analysis::ExclusionCurve<f64>;
pub type ExperimentParams = analysis::ExperimentParams<f64>;
