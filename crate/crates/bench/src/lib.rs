//! Shared inputs for the benchmarks.

use bathsmith_core::{data, BathParameters, ElectronicSystem, SpectralDensityModel};

pub fn full_model() -> SpectralDensityModel {
    data::fmo_full().expect("bundled model")
}

pub fn effective_model() -> SpectralDensityModel {
    data::fmo_effective().expect("bundled model")
}

/// 77 K over a 300 fs horizon, grid ending at the horizon.
pub fn short_horizon() -> BathParameters {
    BathParameters::new(77.0, 300.0).and_then(|p| p.with_t_max(300.0)).expect("valid parameters")
}

pub fn monomer(energy: f64) -> ElectronicSystem {
    ElectronicSystem::new("monomer", vec![energy], vec![vec![0.0]], vec![[1.0, 0.0, 0.0]]).expect("valid system")
}
