//! Non-perturbative propagation of the optical coherence with site-local modes.
//!
//! Two engines share one configuration. `Complex` expands each site's correlation
//! function into exponentials w·e^{−zt} (peak poles, bosonic terms, a white-noise
//! remainder) and gives every term an auxiliary mode with complex rate z and
//! coupling √w; the vacuum amplitude of the resulting non-Hermitian state reproduces
//! the Gaussian influence functional exactly up to the hierarchy depth. `Thermal`
//! is the damped-oscillator Lindblad picture: Fock-truncated modes coupled by Ω√S,
//! damped at 2Γ towards thermal occupation, starting from Bose populations.

use super::{DipoleCorrelation, TimeGrid};
use crate::data;
use crate::error::{Error, Result};
use crate::expansion::{bosonic_weight, lorentz_expansion, lorentz_poles, matsubara_frequency};
use crate::model::{ElectronicSystem, Lorentzian, SpectralDensityModel};
use crate::units::{angular, bose};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// A damped oscillator realizing one Lorentzian (or, with gamma = 0, one discrete mode).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pseudomode {
    #[serde(rename = "omega_cm1")]
    pub omega: f64,
    pub hr: f64,
    #[serde(rename = "gamma_cm1")]
    pub gamma: f64,
}

impl Pseudomode {
    pub fn new(omega: f64, hr: f64, gamma: f64) -> Result<Self> {
        if !(omega > 0.0 && hr > 0.0 && gamma >= 0.0 && omega.is_finite() && hr.is_finite() && gamma.is_finite()) {
            return Err(Error::Config(format!("bad pseudomode ({omega}, {hr}, {gamma})")));
        }
        Ok(Pseudomode { omega, hr, gamma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Complex,
    Thermal,
}

impl std::str::FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complex" => Ok(Engine::Complex),
            "thermal" => Ok(Engine::Thermal),
            _ => Err(Error::Config(format!("unknown engine {s:?}; expected complex or thermal"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudomodeConfig {
    /// Modes coupled to each site.
    pub sites: Vec<Vec<Pseudomode>>,
    /// K
    pub temperature: f64,
    #[serde(default)]
    pub engine: Engine,
    /// Largest total occupation kept by the complex engine.
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Explicit bosonic terms per site (complex engine).
    #[serde(default = "default_matsubara")]
    pub matsubara: usize,
    /// Fock states per mode (thermal engine).
    #[serde(default = "default_fock")]
    pub fock_dim: usize,
    /// Internal step, fs. `None` picks 0.25 (complex) or 0.05 (thermal).
    #[serde(default)]
    pub dt: Option<f64>,
    /// Exponential terms with |w|/|z|² below this are folded into the white-noise remainder.
    #[serde(default = "default_prune")]
    pub prune: f64,
    /// Repeat at half the step and fail if d(t) moves by more than 1e-5 of d(0).
    #[serde(default = "default_true")]
    pub check_convergence: bool,
    /// Largest number of complex amplitudes per propagation.
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_depth() -> usize {
    4
}
fn default_matsubara() -> usize {
    1
}
fn default_fock() -> usize {
    3
}
fn default_prune() -> f64 {
    1e-5
}
fn default_true() -> bool {
    true
}
fn default_budget() -> usize {
    10_000_000
}

/// Relative tolerance of the step-halving check.
pub const HALVING_TOLERANCE: f64 = 1e-5;

impl PseudomodeConfig {
    /// The same modes on each of `n_sites` sites.
    pub fn uniform(n_sites: usize, modes: Vec<Pseudomode>, temperature: f64) -> Self {
        PseudomodeConfig {
            sites: vec![modes; n_sites],
            temperature,
            engine: Engine::Complex,
            depth: default_depth(),
            matsubara: default_matsubara(),
            fock_dim: default_fock(),
            dt: None,
            prune: default_prune(),
            check_convergence: true,
            budget: default_budget(),
        }
    }

    pub fn from_model(model: &SpectralDensityModel, n_sites: usize, temperature: f64) -> Result<Self> {
        Ok(Self::uniform(n_sites, pseudomodes_for(model)?, temperature))
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_check(mut self, check: bool) -> Self {
        self.check_convergence = check;
        self
    }

    pub fn step(&self) -> f64 {
        self.dt.unwrap_or(match self.engine {
            Engine::Complex => 0.25,
            Engine::Thermal => 0.05,
        })
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        if self.sites.len() != n_sites {
            return Err(Error::Config(format!("{} mode lists for {n_sites} sites", self.sites.len())));
        }
        for m in self.sites.iter().flatten() {
            Pseudomode::new(m.omega, m.hr, m.gamma)?;
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("bath temperature must be >= 0, got {}", self.temperature)));
        }
        if self.fock_dim < 2 {
            return Err(Error::Config("fock_dim must be at least 2".into()));
        }
        let dt = self.step();
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("internal step must be positive, got {dt}")));
        }
        Ok(())
    }

    /// The configuration restricted to one site.
    pub(crate) fn single_site(&self, site: usize) -> Self {
        let mut c = self.clone();
        c.sites = vec![self.sites[site].clone()];
        c
    }
}

/// Pseudomodes for each component of a model: Lorentzians map one to one, discrete
/// modes become undamped oscillators and the FMO protein continuum is replaced by
/// its bundled single-pseudomode fit. Other continua are rejected.
pub fn pseudomodes_for(model: &SpectralDensityModel) -> Result<Vec<Pseudomode>> {
    let mut out = Vec::new();
    if let Some(ar) = model.ar {
        let known = data::fmo_full()?.ar;
        if known.is_none_or(|k| k != ar) {
            return Err(Error::Config(
                "no pseudomode realization for this continuum; replace it with Lorentzians".into(),
            ));
        }
        for l in data::ar_pseudomode()?.lorentzians {
            out.push(Pseudomode { omega: l.omega, hr: l.hr, gamma: l.gamma });
        }
    }
    for l in &model.lorentzians {
        out.push(Pseudomode { omega: l.omega, hr: l.hr, gamma: l.gamma });
    }
    for d in &model.deltas {
        out.push(Pseudomode { omega: d.omega, hr: d.hr, gamma: 0.0 });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub correlation: DipoleCorrelation,
    /// Amplitudes per propagated state.
    pub states: usize,
    /// Largest |d_h − d_{h/2}| / d(0), when checked.
    pub halving_change: Option<f64>,
    /// Thermal population outside the Fock truncation (thermal engine).
    pub discarded_population: f64,
    pub engine: Engine,
}

/// d(t) in the frame of the mean site energy.
pub fn pseudomode_propagate(system: &ElectronicSystem, cfg: &PseudomodeConfig, grid: &TimeGrid) -> Result<DipoleCorrelation> {
    Ok(pseudomode_run(system, cfg, grid)?.correlation)
}

pub fn pseudomode_run(system: &ElectronicSystem, cfg: &PseudomodeConfig, grid: &TimeGrid) -> Result<Propagation> {
    run_at(system, cfg, grid, system.mean_energy())
}

/// Propagation with an explicit carrier frequency.
pub(crate) fn run_at(system: &ElectronicSystem, cfg: &PseudomodeConfig, grid: &TimeGrid, carrier: f64) -> Result<Propagation> {
    system.validate()?;
    cfg.validate(system.n_sites())?;
    let (h, stride) = internal_step(cfg.step(), grid.dt);
    let n_out = grid.n_points();
    let run = |h: f64, stride: usize| -> Result<(Vec<Complex64>, usize, f64)> {
        match cfg.engine {
            Engine::Complex => {
                let eng = ComplexEngine::build(system, cfg, carrier)?;
                Ok((eng.propagate(system, h, stride, n_out), eng.len(), 0.0))
            }
            Engine::Thermal => {
                let eng = ThermalEngine::build(system, cfg, carrier)?;
                let lost = eng.discarded;
                Ok((eng.propagate(system, h, stride, n_out), eng.len(), lost))
            }
        }
    };
    let (values, states, discarded) = run(h, stride)?;
    let d0 = system.dipole_strength();
    let mut halving_change = None;
    if cfg.check_convergence && d0 > 0.0 {
        let (fine, _, _) = run(0.5 * h, 2 * stride)?;
        let change = values.iter().zip(&fine).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / d0;
        if change > HALVING_TOLERANCE {
            return Err(Error::Numeric(format!(
                "halving the step to {} fs changes d(t) by {change:.2e} of d(0)",
                0.5 * h
            )));
        }
        halving_change = Some(change);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite dipole correlation".into()));
    }
    let label = if system.label.is_empty() { "pseudomode".to_string() } else { system.label.clone() };
    Ok(Propagation {
        correlation: DipoleCorrelation::new(grid.dt, values, carrier, label),
        states,
        halving_change,
        discarded_population: discarded,
        engine: cfg.engine,
    })
}

/// Largest step ≤ `want` that divides the output spacing.
fn internal_step(want: f64, out: f64) -> (f64, usize) {
    let stride = (out / want - 1e-9).ceil().max(1.0) as usize;
    (out / stride as f64, stride)
}

/// Cartesian dipole components that are not identically zero.
fn dipole_components(system: &ElectronicSystem) -> Vec<usize> {
    (0..3).filter(|&c| system.dipoles.iter().any(|m| m[c] != 0.0)).collect()
}

/// One term w·e^{−zt} attached to a site.
#[derive(Debug, Clone, Copy)]
struct Channel {
    site: usize,
    weight: Complex64,
    rate: Complex64,
}

/// Exponential terms and white-noise remainder of one site's modes at temperature T.
fn site_channels(site: usize, modes: &[Pseudomode], cfg: &PseudomodeConfig) -> (Vec<Channel>, Complex64) {
    let t = cfg.temperature;
    let mut terms: Vec<(Complex64, Complex64)> = Vec::new();
    let mut remainder = Complex64::new(0.0, 0.0);
    let lorentz: Vec<Lorentzian> = modes
        .iter()
        .filter(|m| m.gamma > 0.0)
        .map(|m| Lorentzian { omega: m.omega, hr: m.hr, gamma: m.gamma })
        .collect();
    for m in modes.iter().filter(|m| m.gamma == 0.0) {
        let w2 = m.hr * m.omega * m.omega;
        let n = bose(m.omega, t);
        terms.push((Complex64::new(w2 * (n + 1.0), 0.0), Complex64::new(0.0, m.omega)));
        terms.push((Complex64::new(w2 * n, 0.0), Complex64::new(0.0, -m.omega)));
    }
    for l in &lorentz {
        for p in lorentz_poles(l, t) {
            terms.push((p.weight, p.rate));
        }
    }
    if !lorentz.is_empty() {
        if t > 0.0 {
            let nu1 = matsubara_frequency(1, t);
            for n in 1..=cfg.matsubara {
                let nu = matsubara_frequency(n, t);
                let w: f64 = lorentz.iter().map(|l| bosonic_weight(l, nu, nu1)).sum();
                terms.push((Complex64::new(w, 0.0), Complex64::new(nu, 0.0)));
            }
        }
        let m = if t > 0.0 { cfg.matsubara } else { 0 };
        remainder += lorentz.iter().map(|l| lorentz_expansion(l, t, m).markov_remainder).sum::<f64>();
    }
    let mut out = Vec::new();
    for (w, z) in terms {
        if w.norm() == 0.0 {
            continue;
        }
        if w.norm() < cfg.prune * z.norm_sqr() && z.re > 0.0 {
            remainder += w / z;
        } else if w.norm() >= cfg.prune * z.norm_sqr() {
            out.push(Channel { site, weight: w, rate: z });
        }
    }
    (out, remainder)
}

/// Occupation vectors with total ≤ depth and the table of raising moves.
struct Hierarchy {
    occupations: Vec<Vec<u8>>,
    /// (from, to, mode, √(n+1))
    moves: Vec<(u32, u32, u16, f64)>,
}

impl Hierarchy {
    fn build(n_modes: usize, depth: usize, limit: usize) -> Result<Self> {
        let mut occupations: Vec<Vec<u8>> = vec![vec![0; n_modes]];
        let mut index: HashMap<Vec<u8>, u32> = HashMap::new();
        index.insert(occupations[0].clone(), 0);
        let mut frontier = vec![0usize];
        for _ in 0..depth {
            let mut next = Vec::new();
            for &j in &frontier {
                // only raise modes at or after the last occupied one, so each vector is generated once
                let first = occupations[j].iter().rposition(|&n| n > 0).unwrap_or(0);
                for k in first..n_modes {
                    let mut o = occupations[j].clone();
                    o[k] += 1;
                    if index.contains_key(&o) {
                        continue;
                    }
                    if occupations.len() >= limit {
                        return Err(budget_error(limit));
                    }
                    index.insert(o.clone(), occupations.len() as u32);
                    next.push(occupations.len());
                    occupations.push(o);
                }
            }
            frontier = next;
        }
        let mut moves = Vec::new();
        for (j, o) in occupations.iter().enumerate() {
            let total: usize = o.iter().map(|&n| n as usize).sum();
            if total >= depth {
                continue;
            }
            let mut up = o.clone();
            for k in 0..n_modes {
                up[k] += 1;
                let r = index[&up];
                moves.push((j as u32, r, k as u16, (o[k] as f64 + 1.0).sqrt()));
                up[k] -= 1;
            }
        }
        Ok(Hierarchy { occupations, moves })
    }
}

fn budget_error(limit: usize) -> Error {
    Error::Config(format!(
        "propagation needs more than {limit} complex amplitudes ({} MB); reduce modes, depth or fock_dim",
        limit * 16 / 1_000_000
    ))
}

struct ComplexEngine {
    n_sites: usize,
    n_occ: usize,
    /// Diagonal generator (rad/fs) per state.
    diag: Vec<Complex64>,
    /// Mode couplings: (state a, state b, amplitude) with da += c·ψ_b and db += c·ψ_a.
    links: Vec<(u32, u32, Complex64)>,
    /// Electronic couplings −i·V (rad/fs).
    hops: Vec<(usize, usize, Complex64)>,
}

impl ComplexEngine {
    fn build(system: &ElectronicSystem, cfg: &PseudomodeConfig, carrier: f64) -> Result<Self> {
        let n_sites = system.n_sites();
        let mut channels = Vec::new();
        let mut remainders = Vec::new();
        for (e, modes) in cfg.sites.iter().enumerate() {
            let (c, r) = site_channels(e, modes, cfg);
            channels.extend(c);
            remainders.push(r);
        }
        if channels.len() > u16::MAX as usize {
            return Err(budget_error(cfg.budget));
        }
        let hier = Hierarchy::build(channels.len(), cfg.depth, cfg.budget / n_sites.max(1) + 1)?;
        let n_occ = hier.occupations.len();
        if n_occ * n_sites > cfg.budget {
            return Err(budget_error(cfg.budget));
        }
        let mut diag = Vec::with_capacity(n_occ * n_sites);
        for e in 0..n_sites {
            let base = I * (system.site_energies[e] - carrier) + remainders[e];
            for o in &hier.occupations {
                let mut z = base;
                for (k, &n) in o.iter().enumerate() {
                    if n > 0 {
                        z += channels[k].rate * n as f64;
                    }
                }
                diag.push(-angular(1.0) * z);
            }
        }
        let kappa: Vec<Complex64> = channels.iter().map(|c| -I * angular(1.0) * c.weight.sqrt()).collect();
        let links = hier
            .moves
            .iter()
            .map(|&(j, r, k, s)| {
                let e = channels[k as usize].site;
                let off = (e * n_occ) as u32;
                (j + off, r + off, kappa[k as usize] * s)
            })
            .collect();
        let mut hops = Vec::new();
        for e in 0..n_sites {
            for f in 0..n_sites {
                let v = system.couplings[e][f];
                if e != f && v != 0.0 {
                    hops.push((e, f, -I * angular(v)));
                }
            }
        }
        Ok(ComplexEngine { n_sites, n_occ, diag, links, hops })
    }

    fn len(&self) -> usize {
        self.diag.len()
    }

    /// Off-diagonal part of the generator.
    fn apply(&self, u: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for &(a, b, c) in &self.links {
            let (a, b) = (a as usize, b as usize);
            out[a] += c * u[b];
            out[b] += c * u[a];
        }
        for &(e, f, c) in &self.hops {
            let (oe, of) = (e * self.n_occ, f * self.n_occ);
            for j in 0..self.n_occ {
                out[oe + j] += c * u[of + j];
            }
        }
    }

    /// Evolve from `u`, calling `read` with each output index and state.
    fn evolve(&self, mut u: Vec<Complex64>, h: f64, stride: usize, n_out: usize, mut read: impl FnMut(usize, &[Complex64])) {
        let n = self.len();
        let half: Vec<Complex64> = self.diag.iter().map(|&d| (d * (0.5 * h)).exp()).collect();
        let full: Vec<Complex64> = half.iter().map(|e| e * e).collect();
        let zero = Complex64::new(0.0, 0.0);
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
            (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
        read(0, &u);
        for j in 1..n_out {
            for _ in 0..stride {
                // integrating-factor RK4 with the diagonal solved exactly
                self.apply(&u, &mut k1);
                for i in 0..n {
                    tmp[i] = half[i] * (u[i] + 0.5 * h * k1[i]);
                }
                self.apply(&tmp, &mut k2);
                for i in 0..n {
                    tmp[i] = half[i] * u[i] + 0.5 * h * k2[i];
                }
                self.apply(&tmp, &mut k3);
                for i in 0..n {
                    tmp[i] = full[i] * u[i] + h * half[i] * k3[i];
                }
                self.apply(&tmp, &mut k4);
                for i in 0..n {
                    u[i] = full[i] * u[i] + h / 6.0 * (full[i] * k1[i] + 2.0 * half[i] * (k2[i] + k3[i]) + k4[i]);
                }
            }
            read(j, &u);
        }
    }

    fn propagate(&self, system: &ElectronicSystem, h: f64, stride: usize, n_out: usize) -> Vec<Complex64> {
        let mut d = vec![Complex64::new(0.0, 0.0); n_out];
        for c in dipole_components(system) {
            let mut u = vec![Complex64::new(0.0, 0.0); self.len()];
            for e in 0..self.n_sites {
                u[e * self.n_occ] = Complex64::new(system.dipoles[e][c], 0.0);
            }
            self.evolve(u, h, stride, n_out, |j, u| {
                d[j] += (0..self.n_sites).map(|e| system.dipoles[e][c] * u[e * self.n_occ]).sum::<Complex64>();
            });
        }
        d
    }

    /// Vacuum amplitudes on every site after starting on `start`.
    fn from_site(&self, start: usize, h: f64, stride: usize, n_out: usize) -> Vec<Vec<Complex64>> {
        let mut u = vec![Complex64::new(0.0, 0.0); self.len()];
        u[start * self.n_occ] = Complex64::new(1.0, 0.0);
        let mut out = vec![vec![Complex64::new(0.0, 0.0); n_out]; self.n_sites];
        self.evolve(u, h, stride, n_out, |j, u| {
            for (e, o) in out.iter_mut().enumerate() {
                o[j] = u[e * self.n_occ];
            }
        });
        out
    }
}

/// Site-to-site amplitudes f[a][t] = ⟨a, vacuum| U(t) |start, vacuum⟩ (complex engine, no step check).
pub(crate) fn site_amplitudes(
    system: &ElectronicSystem,
    cfg: &PseudomodeConfig,
    grid: &TimeGrid,
    carrier: f64,
    start: usize,
) -> Result<Vec<Vec<Complex64>>> {
    cfg.validate(system.n_sites())?;
    let (h, stride) = internal_step(cfg.step(), grid.dt);
    let eng = ComplexEngine::build(system, cfg, carrier)?;
    let out = eng.from_site(start, h, stride, grid.n_points());
    if out.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite site amplitude".into()));
    }
    Ok(out)
}

struct ThermalEngine {
    n_sites: usize,
    /// Fock space dimension of all modes together.
    dim: usize,
    modes: Vec<ThermalMode>,
    /// Occupation of each mode in each Fock index.
    occ: Vec<Vec<u8>>,
    fock: usize,
    energies: Vec<f64>,
    hops: Vec<(usize, usize, Complex64)>,
    initial: Vec<f64>,
    discarded: f64,
}

struct ThermalMode {
    site: usize,
    stride: usize,
    omega: f64,
    coupling: f64,
    /// Lindblad rate 2Γ, rad/fs.
    rate: f64,
    nbar: f64,
}

impl ThermalEngine {
    fn build(system: &ElectronicSystem, cfg: &PseudomodeConfig, carrier: f64) -> Result<Self> {
        let n_sites = system.n_sites();
        let fock = cfg.fock_dim;
        let mut modes = Vec::new();
        let mut dim = 1usize;
        for (e, list) in cfg.sites.iter().enumerate() {
            for m in list {
                modes.push(ThermalMode {
                    site: e,
                    stride: dim,
                    omega: angular(m.omega),
                    coupling: angular(m.omega * m.hr.sqrt()),
                    rate: 2.0 * angular(m.gamma),
                    nbar: bose(m.omega, cfg.temperature),
                });
                dim = dim.checked_mul(fock).ok_or_else(|| budget_error(cfg.budget))?;
                if dim > cfg.budget {
                    return Err(budget_error(cfg.budget));
                }
            }
        }
        let entries = n_sites.checked_mul(dim).and_then(|v| v.checked_mul(dim)).ok_or_else(|| budget_error(cfg.budget))?;
        if entries > cfg.budget {
            return Err(budget_error(cfg.budget));
        }
        let occ: Vec<Vec<u8>> = (0..modes.len())
            .map(|k| (0..dim).map(|i| ((i / modes[k].stride) % fock) as u8).collect())
            .collect();
        // truncated Bose populations, renormalized
        let mut initial = vec![1.0; dim];
        let mut kept = 1.0;
        for (k, m) in modes.iter().enumerate() {
            let q = if m.nbar > 0.0 { m.nbar / (1.0 + m.nbar) } else { 0.0 };
            let p: Vec<f64> = (0..fock).map(|n| (1.0 - q) * q.powi(n as i32)).collect();
            let z: f64 = p.iter().sum();
            kept *= z;
            for i in 0..dim {
                initial[i] *= p[occ[k][i] as usize] / z;
            }
        }
        let energies = system.site_energies.iter().map(|e| angular(e - carrier)).collect();
        let mut hops = Vec::new();
        for e in 0..n_sites {
            for f in 0..n_sites {
                let v = system.couplings[e][f];
                if e != f && v != 0.0 {
                    hops.push((e, f, -I * angular(v)));
                }
            }
        }
        Ok(ThermalEngine { n_sites, dim, modes, occ, fock, energies, hops, initial, discarded: 1.0 - kept })
    }

    fn len(&self) -> usize {
        self.n_sites * self.dim * self.dim
    }

    fn derivative(&self, s: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        let top = (self.fock - 1) as u8;
        for e in 0..self.n_sites {
            let base = e * d * d;
            for i in 0..d {
                for j in 0..d {
                    let idx = base + i * d + j;
                    let x = s[idx];
                    let mut acc = -I * self.energies[e] * x;
                    for (k, m) in self.modes.iter().enumerate() {
                        let (ni, nj) = (self.occ[k][i], self.occ[k][j]);
                        acc += -I * m.omega * (ni as f64 - nj as f64) * x;
                        if m.site == e {
                            let mut ax = Complex64::new(0.0, 0.0);
                            if ni < top {
                                ax += (ni as f64 + 1.0).sqrt() * s[idx + m.stride * d];
                            }
                            if ni > 0 {
                                ax += (ni as f64).sqrt() * s[idx - m.stride * d];
                            }
                            acc += -I * m.coupling * ax;
                        }
                        if m.rate > 0.0 {
                            let (fi, fj) = (ni as f64, nj as f64);
                            let mut l = -0.5 * (m.nbar + 1.0) * (fi + fj) * x;
                            if ni < top && nj < top {
                                l += (m.nbar + 1.0) * ((fi + 1.0) * (fj + 1.0)).sqrt() * s[idx + m.stride * d + m.stride];
                            }
                            if m.nbar > 0.0 {
                                let up = |n: u8| if n < top { n as f64 + 1.0 } else { 0.0 };
                                l -= 0.5 * m.nbar * (up(ni) + up(nj)) * x;
                                if ni > 0 && nj > 0 {
                                    l += m.nbar * (fi * fj).sqrt() * s[idx - m.stride * d - m.stride];
                                }
                            }
                            acc += m.rate * l;
                        }
                    }
                    out[idx] = acc;
                }
            }
            for &(a, f, c) in &self.hops {
                if a != e {
                    continue;
                }
                let from = f * d * d;
                for q in 0..d * d {
                    out[base + q] += c * s[from + q];
                }
            }
        }
    }

    fn trace(&self, s: &[Complex64], e: usize) -> Complex64 {
        let d = self.dim;
        (0..d).map(|i| s[e * d * d + i * d + i]).sum()
    }

    fn propagate(&self, system: &ElectronicSystem, h: f64, stride: usize, n_out: usize) -> Vec<Complex64> {
        let n = self.len();
        let d = self.dim;
        let zero = Complex64::new(0.0, 0.0);
        let mut out = vec![zero; n_out];
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
            (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
        for c in dipole_components(system) {
            let mut s = vec![zero; n];
            for e in 0..self.n_sites {
                for i in 0..d {
                    s[e * d * d + i * d + i] = Complex64::new(system.dipoles[e][c] * self.initial[i], 0.0);
                }
            }
            let read = |s: &[Complex64]| -> Complex64 {
                (0..self.n_sites).map(|e| system.dipoles[e][c] * self.trace(s, e)).sum()
            };
            out[0] += read(&s);
            for j in 1..n_out {
                for _ in 0..stride {
                    self.derivative(&s, &mut k1);
                    for i in 0..n {
                        tmp[i] = s[i] + 0.5 * h * k1[i];
                    }
                    self.derivative(&tmp, &mut k2);
                    for i in 0..n {
                        tmp[i] = s[i] + 0.5 * h * k2[i];
                    }
                    self.derivative(&tmp, &mut k3);
                    for i in 0..n {
                        tmp[i] = s[i] + h * k3[i];
                    }
                    self.derivative(&tmp, &mut k4);
                    for i in 0..n {
                        s[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
                    }
                }
                out[j] += read(&s);
            }
        }
        out
    }
}
