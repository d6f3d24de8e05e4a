use super::{absorption_from_correlation, AbsorptionSpectrum, DipoleCorrelation, TimeGrid};
use crate::bcf::SpectrumGrid;
use crate::error::{Error, Result};
use crate::expansion::{bosonic_weight, lorentz_expansion, lorentz_poles, matsubara_frequency, zero_temperature_rule, ExpTerm};
use crate::model::{Lorentzian, SpectralDensityModel, AR_CUTOFF};
use crate::quad::{self, Rule};
use crate::units::{angular, coth_factor, thermal_energy};
use num_complex::Complex64;
use rayon::prelude::*;

/// g(t) = ∫₀^∞ J/ω² [coth(ω/2k_BT)(1 − cos ωt) + i(sin ωt − ωt)] dω.
///
/// Deltas are closed-form. Lorentzians use their exponential expansion: the two
/// peak poles exactly, the bosonic terms explicitly up to twenty times the largest
/// peak scale, and the rest as a term linear in t. The continuum is integrated on
/// Gauss-Legendre panels refined until the result changes by < 1e-8 of max|g|.
pub fn cumulant_lineshape(model: &SpectralDensityModel, temperature: f64, grid: &TimeGrid) -> Result<Vec<Complex64>> {
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!("temperature must be non-negative, got {temperature}")));
    }
    let times = grid.times();
    let mut g = vec![Complex64::new(0.0, 0.0); times.len()];
    for d in &model.deltas {
        let c = coth_factor(d.omega, temperature);
        for (o, &t) in g.iter_mut().zip(&times) {
            let x = angular(d.omega) * t;
            let half = (0.5 * x).sin();
            *o += d.hr * Complex64::new(2.0 * c * half * half, x.sin() - x);
        }
    }
    if !model.lorentzians.is_empty() {
        lorentz_lineshape(&model.lorentzians, temperature, &times, &mut g);
    }
    if let Some(ar) = model.ar {
        let cont = SpectralDensityModel { label: String::new(), ar: Some(ar), lorentzians: vec![], deltas: vec![] };
        let c = continuum_lineshape(&cont, temperature, &times)?;
        for (o, v) in g.iter_mut().zip(c) {
            *o += v;
        }
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite lineshape sample".into()));
    }
    Ok(g)
}

fn lorentz_lineshape(ls: &[Lorentzian], temperature: f64, times: &[f64], g: &mut [Complex64]) {
    let mut terms: Vec<ExpTerm> = Vec::new();
    for l in ls {
        terms.extend(lorentz_poles(l, temperature));
    }
    let scale = ls.iter().map(|l| l.omega.max(l.gamma)).fold(0.0, f64::max);
    if temperature > 0.0 {
        let nu1 = matsubara_frequency(1, temperature);
        let n_min = ((20.0 * scale / nu1).ceil() as usize).max(64);
        // keep going until the neglected weights, which fall off as n⁻³, are negligible against C(0)
        let c0: f64 = terms.iter().map(|e| e.weight.norm()).sum();
        let mut n0 = 0;
        loop {
            n0 += 1;
            let nu = matsubara_frequency(n0, temperature);
            let w: f64 = ls.iter().map(|l| bosonic_weight(l, nu, nu1)).sum();
            terms.push(ExpTerm { weight: Complex64::new(w, 0.0), rate: Complex64::new(nu, 0.0) });
            if n0 >= n_min && (w.abs() * n0 as f64 <= 1e-10 * c0 || n0 >= 100_000) {
                break;
            }
        }
        let rest: f64 = ls.iter().map(|l| lorentz_expansion(l, temperature, n0).markov_remainder).sum();
        for (o, &t) in g.iter_mut().zip(times) {
            *o += rest * angular(t);
        }
    } else {
        for l in ls {
            let rule = zero_temperature_rule(l.omega.max(l.gamma));
            for (&nu, &q) in rule.nodes.iter().zip(&rule.weights) {
                terms.push(ExpTerm { weight: Complex64::new(bosonic_weight(l, nu, q), 0.0), rate: Complex64::new(nu, 0.0) });
            }
        }
    }
    let add: Vec<Complex64> = times.par_iter().map(|&t| terms.iter().map(|e| e.lineshape(t)).sum()).collect();
    for (o, v) in g.iter_mut().zip(add) {
        *o += v;
    }
}

fn continuum_lineshape(model: &SpectralDensityModel, temperature: f64, times: &[f64]) -> Result<Vec<Complex64>> {
    let cutoff = AR_CUTOFF.max(40.0 * thermal_energy(temperature));
    let t_last = times.last().copied().unwrap_or(0.0).max(1.0);
    let mut width = (12.0 / angular(t_last)).min(cutoff / 8.0);
    let rule_for = |width: f64| {
        let mut b = model.breakpoints();
        b.push(cutoff);
        let b = quad::normalize_breaks(b, 0.0, cutoff);
        Rule::composite(&quad::refine_breaks(&b, width), 32)
    };
    let eval = |rule: &Rule| -> Vec<Complex64> {
        let amps: Vec<(f64, f64, f64)> = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .filter(|(&w, _)| w > 0.0)
            .map(|(&w, &q)| (angular(w), q * model.j_coth(w, temperature) / (w * w), q * model.j(w) / (w * w)))
            .collect();
        times
            .par_iter()
            .map(|&t| {
                let mut acc = Complex64::new(0.0, 0.0);
                for &(w, a, b) in &amps {
                    let x = w * t;
                    let half = (0.5 * x).sin();
                    let odd = if x.abs() < 1e-3 { -x * x * x / 6.0 * (1.0 - x * x / 20.0) } else { x.sin() - x };
                    acc += Complex64::new(2.0 * a * half * half, b * odd);
                }
                acc
            })
            .collect()
    };
    let mut coarse = eval(&rule_for(width));
    for _ in 0..5 {
        width *= 0.5;
        let fine = eval(&rule_for(width));
        let scale = fine.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        let diff = coarse.iter().zip(&fine).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if diff <= 1e-8 * scale {
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(Error::Numeric("continuum lineshape quadrature did not converge".into()))
}

/// |μ|²·e^{−g(t)} at carrier ε.
pub fn cumulant_correlation(
    model: &SpectralDensityModel,
    temperature: f64,
    epsilon: f64,
    dipole_strength: f64,
    grid: &TimeGrid,
) -> Result<DipoleCorrelation> {
    let g = cumulant_lineshape(model, temperature, grid)?;
    let values = g.iter().map(|v| dipole_strength * (-v).exp()).collect();
    Ok(DipoleCorrelation::new(grid.dt, values, epsilon, model.label.clone()))
}

/// Single-site spectrum from the cumulant, with an optional Gaussian window.
pub fn monomer_absorption(
    model: &SpectralDensityModel,
    temperature: f64,
    epsilon: f64,
    window_sigma: Option<f64>,
    grid: &TimeGrid,
    omega: &SpectrumGrid,
) -> Result<AbsorptionSpectrum> {
    let mut d = cumulant_correlation(model, temperature, epsilon, 1.0, grid)?;
    if let Some(s) = window_sigma {
        d = d.windowed(s)?;
    }
    absorption_from_correlation(&d, omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data;
    use crate::dynamics::{spectral_overlap, TimeGrid};
    use crate::model::Delta;
    use crate::quad;

    /// Direct adaptive quadrature of the defining integral at one time.
    fn oracle(model: &SpectralDensityModel, temperature: f64, t: f64) -> Complex64 {
        let tau = angular(t);
        let re = |w: f64| {
            if w <= 0.0 {
                return 0.0;
            }
            let half = (0.5 * w * tau).sin();
            model.j_coth(w, temperature) / (w * w) * 2.0 * half * half
        };
        let im = |w: f64| if w <= 0.0 { 0.0 } else { model.j(w) / (w * w) * ((w * tau).sin() - w * tau) };
        let b = quad::refine_breaks(&quad::normalize_breaks(model.breakpoints(), 0.0, 4000.0), 10.0);
        let a = quad::adaptive_to_infinity(&re, &b, 1e-11, 1e-15).unwrap().value;
        let c = quad::adaptive_to_infinity(&im, &b, 1e-11, 1e-15).unwrap().value;
        Complex64::new(a, c)
    }

    /// Areas of `n` lines spaced by `spacing` from `first`, each integrated over ±spacing/2.
    pub(crate) fn line_areas(a: &AbsorptionSpectrum, first: f64, spacing: f64, n: usize) -> Vec<f64> {
        let h = a.omega[1] - a.omega[0];
        (0..n)
            .map(|k| {
                let c = first + k as f64 * spacing;
                a.omega
                    .iter()
                    .zip(&a.intensity)
                    .filter(|(w, _)| (**w - c).abs() < 0.5 * spacing)
                    .map(|(_, v)| v * h)
                    .sum()
            })
            .collect()
    }

    #[test]
    fn starts_flat() {
        let m = data::fmo_effective().unwrap();
        let grid = TimeGrid::new(0.01, 0.05).unwrap();
        let g = cumulant_lineshape(&m, 77.0, &grid).unwrap();
        assert_eq!(g[0], Complex64::new(0.0, 0.0));
        // g ≈ C(0)t²/2 near zero, so g(h)/h → 0
        assert!(g[1].norm() / 0.01 < 1e-3);
        assert!((g[2].norm() / g[1].norm() - 4.0).abs() < 0.01);
    }

    #[test]
    fn single_delta_at_zero_temperature() {
        let (w, s) = (600.0, 0.3);
        let m = SpectralDensityModel::single_delta(w, s).unwrap();
        let grid = TimeGrid::new(0.5, 200.0).unwrap();
        let g = cumulant_lineshape(&m, 0.0, &grid).unwrap();
        for (j, &t) in grid.times().iter().enumerate() {
            let x = angular(w) * t;
            let exact = Complex64::new(s * (1.0 - x.cos()), s * (x.sin() - x));
            assert!((g[j] - exact).norm() < 1e-12 * (1.0 + exact.norm()));
        }
    }

    #[test]
    fn lorentzian_matches_direct_quadrature() {
        for &temp in &[0.0, 77.0, 300.0] {
            let m = SpectralDensityModel::single_lorentzian(763.0, 0.133, 76.0).unwrap();
            let grid = TimeGrid::new(1.0, 300.0).unwrap();
            let g = cumulant_lineshape(&m, temp, &grid).unwrap();
            for &j in &[1usize, 10, 57, 300] {
                let o = oracle(&m, temp, j as f64);
                assert!((g[j] - o).norm() < 1e-6 * o.norm(), "T={temp} t={j}: {} vs {o}", g[j]);
            }
        }
    }

    #[test]
    fn continuum_matches_direct_quadrature() {
        let full = data::fmo_full().unwrap();
        let ar = SpectralDensityModel { label: "ar".into(), ar: full.ar, lorentzians: vec![], deltas: vec![] };
        let grid = TimeGrid::new(1.0, 300.0).unwrap();
        let g = cumulant_lineshape(&ar, 77.0, &grid).unwrap();
        for &j in &[1usize, 20, 150, 300] {
            let o = oracle(&ar, 77.0, j as f64);
            assert!((g[j] - o).norm() < 1e-6 * o.norm(), "t={j}: {} vs {o}", g[j]);
        }
    }

    #[test]
    fn continuum_dephasing_saturates() {
        // J ~ ω⁵ at low frequency, so Re g tends to ∫J coth/ω² dω instead of growing
        let full = data::fmo_full().unwrap();
        let ar = SpectralDensityModel { label: "ar".into(), ar: full.ar, lorentzians: vec![], deltas: vec![] };
        // the lower shape frequency is ~0.6 cm⁻¹, so the approach takes tens of ps
        let grid = TimeGrid::new(100.0, 20_000.0).unwrap();
        let g = cumulant_lineshape(&ar, 77.0, &grid).unwrap();
        let f = |w: f64| if w <= 0.0 { 0.0 } else { ar.j_coth(w, 77.0) / (w * w) };
        let limit = quad::adaptive(&f, &ar.breakpoints(), 1e-10, 0.0).unwrap().value;
        assert!((g.last().unwrap().re / limit - 1.0).abs() < 2e-3, "{} vs {limit}", g.last().unwrap().re);
        assert!(g[150].re > g[200].re);
    }

    #[test]
    fn ohmic_dephasing_grows_linearly() {
        // J ≈ cω near zero: d Re g/dt → π k_BT c
        let m = SpectralDensityModel::single_lorentzian(50.0, 0.5, 200.0).unwrap();
        let grid = TimeGrid::new(2.0, 2000.0).unwrap();
        let g = cumulant_lineshape(&m, 77.0, &grid).unwrap();
        let slope = (g[1000].re - g[800].re) / angular(400.0);
        let expected = std::f64::consts::PI * crate::units::thermal_energy(77.0) * m.lorentzians[0].j_over_omega(0.0);
        assert!((slope / expected - 1.0).abs() < 1e-3, "{slope} vs {expected}");
    }

    #[test]
    fn no_environment_gives_window_limited_line() {
        let m = SpectralDensityModel { label: "none".into(), ar: None, lorentzians: vec![], deltas: vec![] };
        let grid = TimeGrid::new(0.5, 600.0).unwrap();
        let sgrid = SpectrumGrid::new(12_000.0, 12_600.0, 0.5).unwrap();
        let a = monomer_absorption(&m, 77.0, 12_300.0, Some(100.0), &grid, &sgrid).unwrap();
        assert!((a.argmax() - 12_300.0).abs() < 0.5);
        assert!((a.integral() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn franck_condon_progression() {
        // peaks at ε − λ + nω₀ with Poisson weights; undamped, so use a window
        let (w0, s, eps) = (500.0, 0.3, 12_000.0);
        let m = SpectralDensityModel::new("fc", None, vec![], vec![Delta { omega: w0, hr: s }]).unwrap();
        let grid = TimeGrid::new(0.25, 1500.0).unwrap();
        let sgrid = SpectrumGrid::new(11_200.0, 13_700.0, 0.5).unwrap();
        let a = monomer_absorption(&m, 0.0, eps, Some(200.0), &grid, &sgrid).unwrap();
        let areas = line_areas(&a, eps - s * w0, w0, 4);
        for (n, area) in areas.iter().enumerate() {
            let poisson = (-s).exp() * s.powi(n as i32) / (1..=n).product::<usize>().max(1) as f64;
            assert!((area / poisson - 1.0).abs() < 0.01, "n={n}: {area} vs {poisson}");
        }
    }

    #[test]
    fn fmo_full_and_effective_monomers_agree() {
        let grid = TimeGrid::new(0.5, 600.0).unwrap();
        let sgrid = SpectrumGrid::new(10_800.0, 14_300.0, 1.0).unwrap();
        let a = monomer_absorption(&data::fmo_full().unwrap(), 77.0, 12_300.0, Some(100.0), &grid, &sgrid).unwrap();
        let b = monomer_absorption(&data::fmo_effective().unwrap(), 77.0, 12_300.0, Some(100.0), &grid, &sgrid).unwrap();
        assert!(spectral_overlap(&a, &b).unwrap() >= 0.99);
    }
}
