use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Single-excitation electronic Hamiltonian plus transition dipoles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectronicSystem {
    #[serde(default)]
    pub label: String,
    #[serde(rename = "site_energies_cm1")]
    pub site_energies: Vec<f64>,
    #[serde(rename = "couplings_cm1")]
    pub couplings: Vec<Vec<f64>>,
    pub dipoles: Vec<[f64; 3]>,
}

impl ElectronicSystem {
    pub fn new(
        label: impl Into<String>,
        site_energies: Vec<f64>,
        couplings: Vec<Vec<f64>>,
        dipoles: Vec<[f64; 3]>,
    ) -> Result<Self> {
        let s = ElectronicSystem { label: label.into(), site_energies, couplings, dipoles };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.site_energies.len();
        if n == 0 {
            return Err(Error::validation("site_energies_cm1", "at least one site required"));
        }
        if self.dipoles.len() != n {
            return Err(Error::validation("dipoles", format!("expected {n} vectors, found {}", self.dipoles.len())));
        }
        if self.couplings.len() != n || self.couplings.iter().any(|r| r.len() != n) {
            return Err(Error::validation("couplings_cm1", format!("must be a {n}x{n} matrix")));
        }
        for i in 0..n {
            if self.couplings[i][i] != 0.0 {
                return Err(Error::validation("couplings_cm1", format!("diagonal entry {i} must be zero")));
            }
            for j in 0..i {
                if (self.couplings[i][j] - self.couplings[j][i]).abs() > 1e-12 {
                    return Err(Error::validation("couplings_cm1", format!("not symmetric at ({i},{j})")));
                }
            }
        }
        let finite = self.site_energies.iter().chain(self.couplings.iter().flatten()).chain(self.dipoles.iter().flatten());
        if finite.clone().any(|v| !v.is_finite()) {
            return Err(Error::validation("system", "non-finite entry"));
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.site_energies.len()
    }

    /// Σ_i |μ_i|².
    pub fn dipole_strength(&self) -> f64 {
        self.dipoles.iter().map(|d| d.iter().map(|x| x * x).sum::<f64>()).sum()
    }

    pub fn mean_energy(&self) -> f64 {
        self.site_energies.iter().sum::<f64>() / self.n_sites() as f64
    }

    /// Two degenerate sites with orthogonal unit dipoles, coupled by `v`.
    pub fn orthogonal_dimer(mean_energy: f64, v: f64) -> Self {
        ElectronicSystem {
            label: format!("dimer-v{v}"),
            site_energies: vec![mean_energy, mean_energy],
            couplings: vec![vec![0.0, v], vec![v, 0.0]],
            dipoles: vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }

    /// Same system with coupling `v` between sites `i` and `j`.
    pub fn with_coupling(&self, i: usize, j: usize, v: f64) -> Self {
        let mut s = self.clone();
        s.couplings[i][j] = v;
        s.couplings[j][i] = v;
        s
    }

    pub fn with_energies(&self, energies: Vec<f64>) -> Self {
        let mut s = self.clone();
        s.site_energies = energies;
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let s: ElectronicSystem =
            serde_json::from_str(text).map_err(|e| Error::parse(e.to_string(), Some(e.line())))?;
        s.validate()?;
        Ok(s)
    }

    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
        Self::parse(&text)
    }
}

/// Gaussian static disorder of the site energies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    /// Standard deviation, cm⁻¹.
    pub sigma: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl DisorderSpec {
    pub fn new(sigma: f64, n_samples: usize, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::validation("disorder.sigma", format!("must be >= 0, got {sigma}")));
        }
        if n_samples == 0 {
            return Err(Error::validation("disorder.n_samples", "must be >= 1"));
        }
        Ok(DisorderSpec { sigma, n_samples, seed })
    }

    pub fn none() -> Self {
        DisorderSpec { sigma: 0.0, n_samples: 1, seed: 0 }
    }
}
