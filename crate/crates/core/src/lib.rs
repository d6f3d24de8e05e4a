//! Coarse-grained harmonic environments from structured spectral densities.
//!
//! Frequencies and energies are in cm⁻¹, times in fs and temperatures in K.

pub mod bcf;
pub mod chainmap;
pub mod coarsegrain;
pub mod csvio;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod expansion;
pub mod model;
pub mod quad;
pub mod special;
pub mod units;

pub use bcf::{BathParameters, CorrelationFunction, FilteredSpectrum};
pub use dynamics::{AbsorptionSpectrum, DipoleCorrelation, PseudomodeConfig, TimeGrid};
pub use error::{Error, Result};
pub use model::{ArComponent, Delta, DisorderSpec, ElectronicSystem, Lorentzian, SpectralDensityModel};
