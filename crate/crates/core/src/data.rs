//! Bundled datasets.
//!
//! Files are compiled in; setting `BATHSMITH_DATA` to a directory makes any file
//! of the same name found there take precedence.

use crate::error::{Error, Result};
use crate::model::{parse_model, ElectronicSystem, SpectralDensityModel};
use std::path::PathBuf;

pub const DATA_ENV: &str = "BATHSMITH_DATA";

const FILES: &[(&str, &str)] = &[
    ("fmo_full.json", include_str!("../data/fmo_full.json")),
    ("fmo_modes.csv", include_str!("../data/fmo_modes.csv")),
    ("fmo_effective.json", include_str!("../data/fmo_effective.json")),
    ("fmo_conventional.json", include_str!("../data/fmo_conventional.json")),
    ("ar_pseudomode.json", include_str!("../data/ar_pseudomode.json")),
    ("fmo_system.json", include_str!("../data/fmo_system.json")),
    ("dimer_system.json", include_str!("../data/dimer_system.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    FILES.iter().map(|(n, _)| *n)
}

/// Path of the override file for `name`, if the override directory has one.
pub fn override_path(name: &str) -> Option<PathBuf> {
    let dir = std::env::var_os(DATA_ENV)?;
    let p = PathBuf::from(dir).join(name);
    p.is_file().then_some(p)
}

pub fn load_text(name: &str) -> Result<String> {
    if let Some(p) = override_path(name) {
        return std::fs::read_to_string(&p).map_err(|e| Error::Io { path: p.display().to_string(), source: e });
    }
    FILES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| t.to_string())
        .ok_or_else(|| Error::validation("dataset", format!("no bundled dataset named {name}")))
}

pub fn load_model(name: &str) -> Result<SpectralDensityModel> {
    parse_model(&load_text(name)?)
}

/// AR continuum plus the 62 intra-pigment Lorentzians.
pub fn fmo_full() -> Result<SpectralDensityModel> {
    load_model("fmo_full.json")
}

/// AR continuum plus the published 5-Lorentzian effective set.
pub fn fmo_effective() -> Result<SpectralDensityModel> {
    load_model("fmo_effective.json")
}

/// AR continuum plus one broad Lorentzian at 1000 cm⁻¹.
pub fn fmo_conventional() -> Result<SpectralDensityModel> {
    load_model("fmo_conventional.json")
}

/// Single damped mode standing in for the AR continuum.
pub fn ar_pseudomode() -> Result<SpectralDensityModel> {
    load_model("ar_pseudomode.json")
}

pub fn fmo_system() -> Result<ElectronicSystem> {
    ElectronicSystem::parse(&load_text("fmo_system.json")?)
}

pub fn dimer_system() -> Result<ElectronicSystem> {
    ElectronicSystem::parse(&load_text("dimer_system.json")?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_file_loads() {
        for name in names() {
            let text = load_text(name).unwrap();
            assert!(!text.is_empty());
        }
        assert!(load_text("nope.json").is_err());
        fmo_full().unwrap();
        fmo_effective().unwrap();
        fmo_conventional().unwrap();
        ar_pseudomode().unwrap();
        dimer_system().unwrap();
    }

    #[test]
    fn conventional_weight_conserves_table_reorganization() {
        let full = fmo_full().unwrap();
        let conv = fmo_conventional().unwrap();
        let table: f64 = full.lorentzians.iter().map(|l| l.omega * l.hr).sum();
        assert!((conv.lorentzians[0].hr - table / 1000.0).abs() < 1e-4);
    }
}
