//! Static-disorder ensembles of dipole correlations.
//!
//! Sample s draws its site energies from a ChaCha8 stream selected by (seed, s), so
//! any sample can be regenerated on its own and the result does not depend on the
//! number of worker threads. Samples are summed in index order.

use super::pseudomode::{run_at, site_amplitudes, Engine, PseudomodeConfig};
use super::{absorption_from_correlation, AbsorptionSpectrum, DipoleCorrelation, TimeGrid};
use crate::bcf::SpectrumGrid;
use crate::error::{Error, Result};
use crate::model::{DisorderSpec, ElectronicSystem};
use crate::units::angular;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Samples handed to the pool at a time.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    /// Spacing of the energy-gap grid used for two-site systems, cm⁻¹. `None` picks
    /// a spacing that keeps the phase change per node below 0.15 rad at t_max.
    pub gap_step: Option<f64>,
    /// Interpolate two-site samples on the gap grid instead of propagating each one.
    pub interpolate: bool,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions { gap_step: None, interpolate: true }
    }
}

impl EnsembleOptions {
    pub fn direct() -> Self {
        EnsembleOptions { gap_step: None, interpolate: false }
    }
}

/// Site energies of sample `s`.
pub fn sample_energies(means: &[f64], disorder: &DisorderSpec, s: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(disorder.seed);
    rng.set_stream(s as u64);
    means
        .iter()
        .map(|&e| {
            let z: f64 = StandardNormal.sample(&mut rng);
            e + disorder.sigma * z
        })
        .collect()
}

/// Mean of d(t) over the disorder samples, in the frame of the mean site energy.
pub fn disorder_ensemble(
    system: &ElectronicSystem,
    cfg: &PseudomodeConfig,
    disorder: &DisorderSpec,
    grid: &TimeGrid,
    opts: &EnsembleOptions,
) -> Result<DipoleCorrelation> {
    DisorderSpec::new(disorder.sigma, disorder.n_samples, disorder.seed)?;
    system.validate()?;
    cfg.validate(system.n_sites())?;
    let carrier = system.mean_energy();
    let n = grid.n_points();
    let n_samples = disorder.n_samples;
    let values = if disorder.sigma == 0.0 {
        run_at(system, cfg, grid, carrier)?.correlation.values
    } else if system.n_sites() == 1 {
        let f = run_at(system, cfg, grid, system.site_energies[0])?.correlation;
        let shift = system.site_energies[0] - carrier;
        let phases = averaged(n, n_samples, |s| {
            let e = sample_energies(&system.site_energies, disorder, s)[0];
            Ok(phase_series(e - system.site_energies[0] + shift, grid.dt, n))
        })?;
        f.values.iter().zip(phases).map(|(a, b)| a * b).collect()
    } else if system.couplings.iter().flatten().all(|&v| v == 0.0) {
        uncoupled(system, cfg, disorder, grid, carrier)?
    } else if system.n_sites() == 2 && opts.interpolate {
        gap_grid(system, cfg, disorder, grid, carrier, opts)?
    } else {
        run_at(system, cfg, grid, carrier)?;
        let quiet = cfg.clone().with_check(false);
        averaged(n, n_samples, |s| {
            let e = sample_energies(&system.site_energies, disorder, s);
            Ok(run_at(&system.with_energies(e), &quiet, grid, carrier)?.correlation.values)
        })?
    };
    let mut d = DipoleCorrelation::new(grid.dt, values, carrier, system.label.clone());
    d.n_samples = n_samples;
    d.seed = Some(disorder.seed);
    Ok(d)
}

/// (1/N) Σ_s f(s), evaluated in parallel and summed in sample order.
fn averaged(n: usize, n_samples: usize, f: impl Fn(usize) -> Result<Vec<Complex64>> + Sync) -> Result<Vec<Complex64>> {
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    let mut start = 0;
    while start < n_samples {
        let end = (start + CHUNK).min(n_samples);
        let parts: Vec<Vec<Complex64>> = (start..end).into_par_iter().map(&f).collect::<Result<_>>()?;
        for p in parts {
            for (a, v) in acc.iter_mut().zip(p) {
                *a += v;
            }
        }
        start = end;
    }
    let scale = 1.0 / n_samples as f64;
    acc.iter_mut().for_each(|v| *v *= scale);
    Ok(acc)
}

/// e^{−i·2πc·δ·t} on the grid.
fn phase_series(delta: f64, dt: f64, n: usize) -> Vec<Complex64> {
    let w = angular(delta) * dt;
    (0..n).map(|j| Complex64::from_polar(1.0, -w * j as f64)).collect()
}

/// Sites without electronic coupling absorb independently: one run per site, shifted per sample.
fn uncoupled(
    system: &ElectronicSystem,
    cfg: &PseudomodeConfig,
    disorder: &DisorderSpec,
    grid: &TimeGrid,
    carrier: f64,
) -> Result<Vec<Complex64>> {
    let n = grid.n_points();
    let mut lines = Vec::new();
    for e in 0..system.n_sites() {
        let strength: f64 = system.dipoles[e].iter().map(|x| x * x).sum();
        if strength == 0.0 {
            lines.push(vec![Complex64::new(0.0, 0.0); n]);
            continue;
        }
        let site = ElectronicSystem::new(
            format!("site-{e}"),
            vec![system.site_energies[e]],
            vec![vec![0.0]],
            vec![[strength.sqrt(), 0.0, 0.0]],
        )?;
        lines.push(run_at(&site, &cfg.single_site(e), grid, system.site_energies[e])?.correlation.values);
    }
    averaged(n, disorder.n_samples, |s| {
        let energies = sample_energies(&system.site_energies, disorder, s);
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (e, line) in lines.iter().enumerate() {
            let ph = phase_series(energies[e] - carrier, grid.dt, n);
            for j in 0..n {
                out[j] += line[j] * ph[j];
            }
        }
        Ok(out)
    })
}

/// Two coupled sites: d depends on the sample through the mean energy (a phase) and
/// the gap Δ = ε₁ − ε₂. Runs on a uniform Δ grid are interpolated with cubic
/// Lagrange weights. With the complex engine each node yields the four site-to-site
/// amplitudes; when both sites carry the same modes, swapping them flips Δ, so a
/// symmetric grid needs one propagation per node.
fn gap_grid(
    system: &ElectronicSystem,
    cfg: &PseudomodeConfig,
    disorder: &DisorderSpec,
    grid: &TimeGrid,
    carrier: f64,
    opts: &EnsembleOptions,
) -> Result<Vec<Complex64>> {
    let n = grid.n_points();
    let step = opts.gap_step.unwrap_or(0.3 / (angular(1.0) * grid.t_max));
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!("gap step must be positive, got {step}")));
    }
    let samples: Vec<(f64, f64)> = (0..disorder.n_samples)
        .map(|s| {
            let e = sample_energies(&system.site_energies, disorder, s);
            (0.5 * (e[0] + e[1]), e[0] - e[1])
        })
        .collect();
    let lo = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let symmetric = cfg.engine == Engine::Complex && cfg.sites[0] == cfg.sites[1];
    let (mut first, mut last) = ((lo / step).floor() as i64 - 1, (hi / step).floor() as i64 + 2);
    if symmetric {
        last = last.max(-first);
        first = -last;
    }
    let nodes: Vec<f64> = (first..=last).map(|k| k as f64 * step).collect();
    // the step check runs once, at the mean energies
    run_at(system, cfg, grid, carrier)?;
    let quiet = cfg.clone().with_check(false);
    let at = |gap: f64| system.with_energies(vec![carrier + 0.5 * gap, carrier - 0.5 * gap]);
    let runs: Vec<Vec<Complex64>> = if cfg.engine == Engine::Complex {
        let dot = |a: usize, b: usize| -> f64 { (0..3).map(|c| system.dipoles[a][c] * system.dipoles[b][c]).sum() };
        let (m00, m01, m11) = (dot(0, 0), dot(0, 1), dot(1, 1));
        let from0: Vec<Vec<Vec<Complex64>>> = nodes
            .par_iter()
            .map(|&gap| site_amplitudes(&at(gap), &quiet, grid, carrier, 0))
            .collect::<Result<_>>()?;
        let from1: Vec<Vec<Vec<Complex64>>> = if symmetric {
            // f_ab(Δ) = f_āb̄(−Δ)
            (0..nodes.len()).rev().map(|i| vec![from0[i][1].clone(), from0[i][0].clone()]).collect()
        } else {
            nodes
                .par_iter()
                .map(|&gap| site_amplitudes(&at(gap), &quiet, grid, carrier, 1))
                .collect::<Result<_>>()?
        };
        (0..nodes.len())
            .map(|i| {
                let (f0, f1) = (&from0[i], &from1[i]);
                (0..n).map(|j| m00 * f0[0][j] + m01 * (f0[1][j] + f1[0][j]) + m11 * f1[1][j]).collect()
            })
            .collect()
    } else {
        nodes
            .par_iter()
            .map(|&gap| Ok(run_at(&at(gap), &quiet, grid, carrier)?.correlation.values))
            .collect::<Result<_>>()?
    };
    averaged(n, disorder.n_samples, |s| {
        let (mean, gap) = samples[s];
        let x = gap / step - first as f64;
        let k = (x.floor() as usize).clamp(1, nodes.len() - 3);
        let u = x - k as f64;
        // cubic Lagrange on nodes k−1, k, k+1, k+2
        let w = [
            -u * (u - 1.0) * (u - 2.0) / 6.0,
            (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
            -(u + 1.0) * u * (u - 2.0) / 2.0,
            (u + 1.0) * u * (u - 1.0) / 6.0,
        ];
        let ph = phase_series(mean - carrier, grid.dt, n);
        Ok((0..n)
            .map(|j| {
                let f: Complex64 = (0..4).map(|q| w[q] * runs[k - 1 + q][j]).sum();
                f * ph[j]
            })
            .collect())
    })
}

/// Spectra of a two-site system for each coupling in `couplings`, with disorder and
/// an optional Gaussian window (fs).
#[allow(clippy::too_many_arguments)]
pub fn dimer_scan(
    base: &ElectronicSystem,
    couplings: &[f64],
    cfg: &PseudomodeConfig,
    disorder: &DisorderSpec,
    grid: &TimeGrid,
    window: Option<f64>,
    spectrum: &SpectrumGrid,
    opts: &EnsembleOptions,
) -> Result<Vec<AbsorptionSpectrum>> {
    if base.n_sites() != 2 {
        return Err(Error::Config(format!("dimer scan needs two sites, got {}", base.n_sites())));
    }
    couplings
        .iter()
        .map(|&v| {
            let mut sys = base.with_coupling(0, 1, v);
            sys.label = format!("{} V={v}", base.label);
            let mut d = disorder_ensemble(&sys, cfg, disorder, grid, opts)?;
            if let Some(s) = window {
                d = d.windowed(s)?;
            }
            absorption_from_correlation(&d, spectrum)
        })
        .collect()
}
