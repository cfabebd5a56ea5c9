//! Function-space SOL-HMC sampling for measures with a density relative to a
//! Gaussian reference, discretized spectrally in the covariance eigenbasis.

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod integrators;
pub mod sampler;
pub mod sde;
pub mod spectral;
pub mod stats;
pub mod target;

pub use error::{Error, Result};
pub use spectral::{PhasePoint, SpectralPrior};
pub use target::TargetModel;
