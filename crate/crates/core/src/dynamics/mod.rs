//! Linear absorption: cumulant lineshapes for single sites, pseudomode propagation
//! for aggregates, static-disorder ensembles and the transform to spectra.
//!
//! Dipole correlation functions are stored in a frame rotating at a carrier
//! frequency, d(t) = e^{−iω_c t}·values(t), so the time step only has to resolve
//! the spread of energies around the carrier.

mod cumulant;
mod ensemble;
mod pseudomode;

pub use cumulant::{cumulant_correlation, cumulant_lineshape, monomer_absorption};
pub use ensemble::{dimer_scan, disorder_ensemble, sample_energies, EnsembleOptions};
pub use pseudomode::{
    pseudomode_propagate, pseudomode_run, pseudomodes_for, Engine, Propagation, Pseudomode, PseudomodeConfig,
    HALVING_TOLERANCE,
};

use crate::bcf::{count_peaks, one_sided_transform, FilteredSpectrum, PeakCensus, SpectrumGrid};
use crate::error::{Error, Result};
use crate::units::RAD_PER_FS_PER_CM1;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Uniform time grid [0, t_max] with spacing dt (fs).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub t_max: f64,
}

impl TimeGrid {
    pub fn new(dt: f64, t_max: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        if !(t_max >= dt && t_max.is_finite()) {
            return Err(Error::Config(format!("time span {t_max} fs is shorter than the step {dt} fs")));
        }
        Ok(TimeGrid { dt, t_max })
    }

    pub fn n_points(&self) -> usize {
        (self.t_max / self.dt + 1e-9).floor() as usize + 1
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points()).map(|j| j as f64 * self.dt).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipoleCorrelation {
    pub dt: f64,
    /// Samples in the rotating frame.
    pub values: Vec<Complex64>,
    /// cm⁻¹
    pub carrier: f64,
    /// Width of the Gaussian window e^{−t²/2σ²} already applied, fs.
    pub window_sigma: Option<f64>,
    pub n_samples: usize,
    pub seed: Option<u64>,
    pub label: String,
}

impl DipoleCorrelation {
    pub fn new(dt: f64, values: Vec<Complex64>, carrier: f64, label: impl Into<String>) -> Self {
        DipoleCorrelation { dt, values, carrier, window_sigma: None, n_samples: 1, seed: None, label: label.into() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    /// d(t) in the laboratory frame.
    pub fn lab_value(&self, j: usize) -> Complex64 {
        self.values[j] * Complex64::from_polar(1.0, -RAD_PER_FS_PER_CM1 * self.carrier * self.time(j))
    }

    pub fn windowed(&self, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Domain(format!("window width must be positive, got {sigma}")));
        }
        let mut out = self.clone();
        for (j, v) in out.values.iter_mut().enumerate() {
            let t = j as f64 * self.dt;
            *v *= (-t * t / (2.0 * sigma * sigma)).exp();
        }
        out.window_sigma = Some(match self.window_sigma {
            Some(s0) => 1.0 / (1.0 / (s0 * s0) + 1.0 / (sigma * sigma)).sqrt(),
            None => sigma,
        });
        Ok(out)
    }

    /// Same samples expressed at another carrier.
    pub fn recentered(&self, carrier: f64) -> Self {
        let mut out = self.clone();
        let shift = RAD_PER_FS_PER_CM1 * (carrier - self.carrier);
        for (j, v) in out.values.iter_mut().enumerate() {
            *v *= Complex64::from_polar(1.0, shift * j as f64 * self.dt);
        }
        out.carrier = carrier;
        out
    }

    /// Pointwise sum; the other correlation is moved to this carrier.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() || (self.dt - other.dt).abs() > 1e-12 * self.dt {
            return Err(Error::Config("dipole correlations are on different time grids".into()));
        }
        let o = other.recentered(self.carrier);
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&o.values) {
            *a += b;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionSpectrum {
    pub omega: Vec<f64>,
    pub intensity: Vec<f64>,
    pub label: String,
    pub window_sigma: Option<f64>,
    pub n_samples: usize,
    pub seed: Option<u64>,
    /// Points below −10⁻³ of the maximum.
    pub ringing: usize,
    pub warnings: Vec<String>,
}

impl AbsorptionSpectrum {
    pub fn max(&self) -> f64 {
        self.intensity.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> f64 {
        let mut best = 0;
        for (i, &v) in self.intensity.iter().enumerate() {
            if v > self.intensity[best] {
                best = i;
            }
        }
        self.omega[best]
    }

    /// Trapezoidal ∫A dω.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.omega, &self.intensity)
    }

    /// Bands with prominence above `prominence`·max.
    pub fn bands(&self, prominence: f64) -> Result<PeakCensus> {
        let fs = FilteredSpectrum {
            omega: self.omega.clone(),
            values: self.intensity.clone(),
            filter_sigma: self.window_sigma,
            temperature: 0.0,
            label: self.label.clone(),
            warnings: vec![],
        };
        count_peaks(&fs, prominence)
    }
}

/// A(ω) = (1/π) Re ∫₀^∞ e^{iωt} d(t) dt on `grid`, by the trapezoidal rule.
pub fn absorption_from_correlation(d: &DipoleCorrelation, grid: &SpectrumGrid) -> Result<AbsorptionSpectrum> {
    if d.len() < 2 {
        return Err(Error::Config("dipole correlation needs at least two samples".into()));
    }
    let omega = grid.points();
    let nyquist = PI / (RAD_PER_FS_PER_CM1 * d.dt);
    let reach = omega.iter().map(|w| (w - d.carrier).abs()).fold(0.0, f64::max);
    if reach >= nyquist {
        return Err(Error::Config(format!(
            "frequency grid reaches {reach:.0} cm⁻¹ from the carrier; the time step allows {nyquist:.0}"
        )));
    }
    let intensity = one_sided_transform(&d.values, d.dt, &omega, d.carrier);
    let mut warnings = Vec::new();
    let tail = d.values.last().map_or(0.0, |v| v.norm());
    if tail > 1e-3 * d.values[0].norm() {
        warnings.push(format!("correlation has not decayed at the last time: |d| = {tail:.3e}"));
    }
    let max = intensity.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ringing = intensity.iter().filter(|&&v| v < -1e-3 * max).count();
    if ringing > 0 {
        warnings.push(format!("{ringing} points below -1e-3 of the maximum"));
    }
    Ok(AbsorptionSpectrum {
        omega,
        intensity,
        label: d.label.clone(),
        window_sigma: d.window_sigma,
        n_samples: d.n_samples,
        seed: d.seed,
        ringing,
        warnings,
    })
}

fn trapezoid(omega: &[f64], v: &[f64]) -> f64 {
    if omega.len() < 2 {
        return 0.0;
    }
    crate::bcf::trapezoid(v, omega[1] - omega[0])
}

/// O = ∫A₁A₂ / sqrt(∫A₁² ∫A₂²) on a shared grid.
pub fn spectral_overlap(a: &AbsorptionSpectrum, b: &AbsorptionSpectrum) -> Result<f64> {
    if a.omega.len() != b.omega.len() || a.omega.iter().zip(&b.omega).any(|(x, y)| (x - y).abs() > 1e-9) {
        return Err(Error::Config("spectra are on different frequency grids".into()));
    }
    let ab: Vec<f64> = a.intensity.iter().zip(&b.intensity).map(|(x, y)| x * y).collect();
    let aa: Vec<f64> = a.intensity.iter().map(|x| x * x).collect();
    let bb: Vec<f64> = b.intensity.iter().map(|x| x * x).collect();
    let t = |v: &[f64]| trapezoid(&a.omega, v);
    let den = (t(&aa) * t(&bb)).sqrt();
    if !(den > 0.0) {
        return Err(Error::Domain("overlap of an identically zero spectrum".into()));
    }
    Ok(t(&ab) / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::angular;

    fn line(center: f64, carrier: f64, sigma: f64) -> DipoleCorrelation {
        let grid = TimeGrid::new(0.25, 8.0 * sigma).unwrap();
        let values = grid
            .times()
            .iter()
            .map(|&t| Complex64::from_polar((-t * t / (2.0 * sigma * sigma)).exp(), -angular(center - carrier) * t))
            .collect();
        DipoleCorrelation::new(0.25, values, carrier, "line")
    }

    #[test]
    fn gaussian_line_at_its_frequency() {
        let d = line(12_400.0, 12_300.0, 100.0);
        let grid = SpectrumGrid::new(11_800.0, 13_000.0, 0.5).unwrap();
        let a = absorption_from_correlation(&d, &grid).unwrap();
        assert!((a.argmax() - 12_400.0).abs() <= 0.5);
        // area equals d(0)
        assert!((a.integral() - 1.0).abs() < 1e-6);
        // width: σ_ω = 1/(2πc σ_t)
        let s = 1.0 / angular(1.0) / 100.0;
        let expected = 1.0 / (s * (2.0 * PI).sqrt());
        assert!((a.max() / expected - 1.0).abs() < 1e-4);
        assert_eq!(a.ringing, 0);
    }

    #[test]
    fn transform_is_linear() {
        let grid = SpectrumGrid::new(11_800.0, 13_000.0, 1.0).unwrap();
        let a = line(12_200.0, 12_300.0, 80.0);
        let b = line(12_500.0, 12_400.0, 80.0);
        let sum = absorption_from_correlation(&a.add(&b).unwrap(), &grid).unwrap();
        let sa = absorption_from_correlation(&a, &grid).unwrap();
        let sb = absorption_from_correlation(&b, &grid).unwrap();
        let max = sum.max();
        for i in 0..sum.omega.len() {
            assert!((sum.intensity[i] - sa.intensity[i] - sb.intensity[i]).abs() < 1e-10 * max);
        }
    }

    #[test]
    fn window_in_time_is_convolution_in_frequency() {
        // two undamped lines, windowed at σ₁ then σ₂, equal one window of the combined width
        let sig1: f64 = 150.0;
        let sig2 = 200.0;
        let grid = TimeGrid::new(0.25, 1200.0).unwrap();
        let values = grid
            .times()
            .iter()
            .map(|&t| Complex64::from_polar(1.0, -angular(-80.0) * t) + 0.5 * Complex64::from_polar(1.0, -angular(150.0) * t))
            .collect();
        let d = DipoleCorrelation::new(0.25, values, 12_000.0, "two");
        let once = d.windowed(1.0 / (1.0 / (sig1 * sig1) + 1.0 / (sig2 * sig2)).sqrt()).unwrap();
        let twice = d.windowed(sig1).unwrap().windowed(sig2).unwrap();
        let sgrid = SpectrumGrid::new(11_700.0, 12_400.0, 0.5).unwrap();
        let a = absorption_from_correlation(&once, &sgrid).unwrap();
        let b = absorption_from_correlation(&twice, &sgrid).unwrap();
        let max = a.max();
        for i in 0..a.omega.len() {
            assert!((a.intensity[i] - b.intensity[i]).abs() < 1e-4 * max);
        }
        // and the windowed spectrum is the exact sum of Gaussians
        let s = 1.0 / angular(1.0) / twice.window_sigma.unwrap();
        for (i, &w) in a.omega.iter().enumerate() {
            let g = |c: f64, amp: f64| amp * (-(w - c).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
            let exact = g(11_920.0, 1.0) + g(12_150.0, 0.5);
            assert!((b.intensity[i] - exact).abs() < 1e-4 * max, "{w}: {} vs {exact}", b.intensity[i]);
        }
    }

    #[test]
    fn overlap_properties() {
        let grid = SpectrumGrid::new(11_800.0, 13_000.0, 1.0).unwrap();
        let a = absorption_from_correlation(&line(12_300.0, 12_300.0, 80.0), &grid).unwrap();
        let b = absorption_from_correlation(&line(12_500.0, 12_300.0, 80.0), &grid).unwrap();
        assert!((spectral_overlap(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let o = spectral_overlap(&a, &b).unwrap();
        assert!(o < 0.9 && o > 0.0);
        assert!((o - spectral_overlap(&b, &a).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn nyquist_is_enforced() {
        let d = line(12_300.0, 12_300.0, 50.0);
        let grid = SpectrumGrid::new(0.0, 90_000.0, 10.0).unwrap();
        assert!(matches!(absorption_from_correlation(&d, &grid), Err(Error::Config(_))));
    }

    #[test]
    fn truncated_correlation_warns() {
        let values = vec![Complex64::new(1.0, 0.0); 100];
        let d = DipoleCorrelation::new(1.0, values, 0.0, "flat");
        let a = absorption_from_correlation(&d, &SpectrumGrid::new(-100.0, 100.0, 1.0).unwrap()).unwrap();
        assert!(!a.warnings.is_empty());
    }
}
