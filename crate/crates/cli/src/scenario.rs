//! Absorption scenario files.

use crate::error::{CliError, CliResult};
use crate::output::Input;
use bathsmith_core::bcf::SpectrumGrid;
use bathsmith_core::dynamics::{pseudomodes_for, Engine, Pseudomode};
use bathsmith_core::{DisorderSpec, ElectronicSystem, PseudomodeConfig, SpectralDensityModel, TimeGrid};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub note: Option<String>,
    /// Electronic system file, relative to the scenario, or `bundled:<name>`.
    pub system: String,
    /// Spectral density applied to every site.
    pub environment: String,
    #[serde(rename = "temperature_K")]
    pub temperature: f64,
    #[serde(default)]
    pub disorder: Option<DisorderDoc>,
    pub grid: GridDoc,
    #[serde(default)]
    pub window_fs: Option<f64>,
    pub spectrum: SpectrumDoc,
    /// Two-site systems only: one spectrum per inter-site coupling.
    #[serde(default)]
    pub couplings_cm1: Option<Vec<f64>>,
    /// `complex` (default), `thermal`, or `cumulant` (single site only).
    #[serde(default)]
    pub engine: Option<String>,
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default)]
    pub matsubara: Option<usize>,
    #[serde(default)]
    pub fock_dim: Option<usize>,
    #[serde(default)]
    pub step_fs: Option<f64>,
    /// Keep only this many Lorentzians per site, largest reorganization first.
    #[serde(default)]
    pub modes_per_site: Option<usize>,
    #[serde(default)]
    pub check_convergence: Option<bool>,
    /// Two-site ensembles: interpolate on an energy-gap grid (default true).
    #[serde(default)]
    pub interpolate: Option<bool>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderDoc {
    pub sigma_cm1: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub dt_fs: f64,
    pub t_max_fs: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumDoc {
    pub lo_cm1: f64,
    pub hi_cm1: f64,
    pub step_cm1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Propagate(Engine),
    Cumulant,
}

/// A scenario with its referenced files loaded.
pub struct Loaded {
    pub scenario: Scenario,
    pub system: ElectronicSystem,
    pub environment: SpectralDensityModel,
    pub inputs: Vec<Input>,
    pub time: TimeGrid,
    pub spectrum: SpectrumGrid,
    pub method: Method,
}

impl Scenario {
    pub fn load(input: Input) -> CliResult<Loaded> {
        let scenario: Scenario = serde_json::from_str(&input.text)
            .map_err(|e| CliError::Input(format!("{}: {e}", input.name)))?;
        let base = input.dir.clone();
        let sys_in = Input::read_relative(&scenario.system, base.as_deref())?;
        let env_in = Input::read_relative(&scenario.environment, base.as_deref())?;
        let system = sys_in.system()?;
        let environment = env_in.model()?;
        let bad = |m: String| CliError::Input(format!("{}: {m}", input.name));
        let time = TimeGrid::new(scenario.grid.dt_fs, scenario.grid.t_max_fs).map_err(|e| bad(e.to_string()))?;
        let s = scenario.spectrum;
        let spectrum = SpectrumGrid::new(s.lo_cm1, s.hi_cm1, s.step_cm1).map_err(|e| bad(e.to_string()))?;
        let method = match scenario.engine.as_deref() {
            None => Method::Propagate(Engine::Complex),
            Some("cumulant") => Method::Cumulant,
            Some(other) => Method::Propagate(other.parse().map_err(|e: bathsmith_core::Error| bad(e.to_string()))?),
        };
        if method == Method::Cumulant && system.n_sites() != 1 {
            return Err(bad("the cumulant engine handles single-site systems only".into()));
        }
        if scenario.couplings_cm1.is_some() && system.n_sites() != 2 {
            return Err(bad("couplings_cm1 needs a two-site system".into()));
        }
        Ok(Loaded { scenario, system, environment, inputs: vec![input, sys_in, env_in], time, spectrum, method })
    }
}

impl Loaded {
    pub fn disorder(&self, seed: u64) -> CliResult<DisorderSpec> {
        match self.scenario.disorder {
            None => Ok(DisorderSpec::none()),
            Some(d) => Ok(DisorderSpec::new(d.sigma_cm1, d.samples, seed)?),
        }
    }

    /// Environment restricted to the `modes_per_site` strongest Lorentzians.
    pub fn site_environment(&self) -> SpectralDensityModel {
        let mut env = self.environment.clone();
        if let Some(k) = self.scenario.modes_per_site {
            env.lorentzians.sort_by(|a, b| b.reorganization().total_cmp(&a.reorganization()));
            env.lorentzians.truncate(k);
            env.lorentzians.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        }
        env
    }

    pub fn config(&self) -> CliResult<PseudomodeConfig> {
        let engine = match self.method {
            Method::Propagate(e) => e,
            Method::Cumulant => Engine::Complex,
        };
        let modes: Vec<Pseudomode> = pseudomodes_for(&self.site_environment())?;
        let s = &self.scenario;
        let mut cfg = PseudomodeConfig::uniform(self.system.n_sites(), modes, s.temperature).with_engine(engine);
        if let Some(d) = s.depth {
            cfg = cfg.with_depth(d);
        }
        if let Some(m) = s.matsubara {
            cfg.matsubara = m;
        }
        if let Some(f) = s.fock_dim {
            cfg.fock_dim = f;
        }
        if let Some(h) = s.step_fs {
            cfg = cfg.with_dt(h);
        }
        if let Some(c) = s.check_convergence {
            cfg = cfg.with_check(c);
        }
        cfg.validate(self.system.n_sites())?;
        Ok(cfg)
    }
}
