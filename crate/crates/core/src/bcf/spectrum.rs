use super::CorrelationFunction;
use crate::error::{Error, Result};
use crate::units::{angular, RAD_PER_FS_PER_CM1};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Prominence threshold, as a fraction of the spectrum maximum, used by default
/// for the peak census.
pub const DEFAULT_PROMINENCE: f64 = 2.5e-4;

/// Uniform output frequency grid, cm⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl SpectrumGrid {
    /// [−ω_max/4, ω_max] at 0.5 cm⁻¹.
    pub fn up_to(omega_max: f64) -> Self {
        SpectrumGrid { lo: -omega_max / 4.0, hi: omega_max, step: 0.5 }
    }

    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let g = SpectrumGrid { lo, hi, step };
        if !(step > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) {
            return Err(Error::Config(format!("bad frequency grid [{lo}, {hi}] step {step}")));
        }
        Ok(g)
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.lo + k as f64 * self.step).collect()
    }
}

impl Default for SpectrumGrid {
    fn default() -> Self {
        SpectrumGrid::up_to(2000.0)
    }
}

/// Real spectrum samples on a frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredSpectrum {
    pub omega: Vec<f64>,
    pub values: Vec<f64>,
    pub filter_sigma: Option<f64>,
    pub temperature: f64,
    pub label: String,
    /// Non-fatal diagnostics, e.g. an undecayed tail.
    pub warnings: Vec<String>,
}

impl FilteredSpectrum {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn step(&self) -> f64 {
        if self.omega.len() > 1 {
            self.omega[1] - self.omega[0]
        } else {
            0.0
        }
    }

    /// Trapezoidal ∫S dω.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.step())
    }

    /// Frequency of the largest sample.
    pub fn argmax(&self) -> f64 {
        let (k, _) = self
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty spectrum");
        self.omega[k]
    }
}

pub(crate) fn trapezoid(v: &[f64], h: f64) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1]))
}

/// (2πc/π)·Re Σ_j w_j e^{i(ω−offset)t_j} v_j, trapezoidal weights w_j.
///
/// With this normalization a transform integrated over ω in cm⁻¹ returns v(0).
pub fn one_sided_transform(values: &[Complex64], dt: f64, omegas: &[f64], offset: f64) -> Vec<f64> {
    use rayon::prelude::*;
    let n = values.len();
    if n == 0 {
        return vec![0.0; omegas.len()];
    }
    let mut w: Vec<Complex64> = values.iter().map(|v| v * dt).collect();
    w[0] *= 0.5;
    if n > 1 {
        w[n - 1] *= 0.5;
    }
    let scale = RAD_PER_FS_PER_CM1 / PI;
    omegas
        .par_iter()
        .map(|&om| {
            let theta = angular(om - offset) * dt;
            let step = Complex64::from_polar(1.0, theta);
            let mut ph = Complex64::new(1.0, 0.0);
            let mut acc = 0.0;
            for (j, x) in w.iter().enumerate() {
                if j % 512 == 0 {
                    ph = Complex64::from_polar(1.0, theta * j as f64);
                }
                acc += x.re * ph.re - x.im * ph.im;
                ph *= step;
            }
            scale * acc
        })
        .collect()
}

/// One-sided transform of `c` on the default grid.
pub fn ft_spectrum(c: &CorrelationFunction) -> Result<FilteredSpectrum> {
    ft_spectrum_on(c, &SpectrumGrid::default())
}

pub fn ft_spectrum_on(c: &CorrelationFunction, grid: &SpectrumGrid) -> Result<FilteredSpectrum> {
    if c.len() < 2 {
        return Err(Error::Config("correlation function needs at least two samples".into()));
    }
    if grid.step > 1.0 {
        return Err(Error::Config(format!("frequency spacing {} exceeds 1 cm⁻¹", grid.step)));
    }
    let nyquist = PI / (RAD_PER_FS_PER_CM1 * c.dt);
    let reach = grid.hi.abs().max(grid.lo.abs());
    if reach > nyquist {
        return Err(Error::Config(format!(
            "frequency {reach} cm⁻¹ is beyond the grid limit {nyquist:.1} cm⁻¹ for dt = {} fs",
            c.dt
        )));
    }
    let omega = grid.points();
    let values = one_sided_transform(&c.values, c.dt, &omega, 0.0);
    let mut warnings = Vec::new();
    let c0 = c.values[0].norm();
    let tail = c.values[c.len() - 1].norm();
    if tail > 1e-4 * c0 {
        warnings.push(format!("correlation tail {:.2e} of C(0) at t = {} fs; spectrum has truncation ripple", tail / c0, c.t_max()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite spectrum sample".into()));
    }
    Ok(FilteredSpectrum {
        omega,
        values,
        filter_sigma: c.filter_sigma,
        temperature: c.temperature,
        label: c.label.clone(),
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: f64,
    pub height: f64,
    pub prominence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakCensus {
    /// Fraction of the maximum used as the prominence threshold.
    pub prominence: f64,
    /// Peaks with centre > 0, sorted by centre.
    pub peaks: Vec<Peak>,
}

impl PeakCensus {
    pub fn count(&self) -> usize {
        self.peaks.len()
    }

    /// Peaks at or above `omega_min`.
    pub fn above(&self, omega_min: f64) -> Vec<Peak> {
        self.peaks.iter().copied().filter(|p| p.center >= omega_min).collect()
    }
}

/// Local maxima with topographic prominence ≥ `prominence`·max.
///
/// Prominence is measured over the whole grid, including negative frequencies;
/// only maxima at ω > 0 are reported. Flat tops count once, at their middle.
pub fn count_peaks(spec: &FilteredSpectrum, prominence: f64) -> Result<PeakCensus> {
    if !(prominence > 0.0 && prominence < 1.0) {
        return Err(Error::Domain(format!("prominence must lie in (0, 1), got {prominence}")));
    }
    let y = &spec.values;
    let max = spec.max();
    let mut peaks = Vec::new();
    if !(max > 0.0) {
        return Ok(PeakCensus { prominence, peaks });
    }
    let threshold = prominence * max;
    for (i, p) in local_maxima(y) {
        let prom = topographic_prominence(y, i);
        if spec.omega[p] > 0.0 && prom >= threshold {
            peaks.push(Peak { center: spec.omega[p], height: y[p], prominence: prom });
        }
    }
    Ok(PeakCensus { prominence, peaks })
}

/// (first index of the top, reported index) for each strict local maximum or plateau.
fn local_maxima(y: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let n = y.len();
    let mut i = 1;
    while i + 1 < n {
        if y[i - 1] < y[i] {
            let mut k = i + 1;
            while k + 1 < n && y[k] == y[i] {
                k += 1;
            }
            if y[k] < y[i] {
                out.push((i, (i + k - 1) / 2));
                i = k;
                continue;
            }
        }
        i += 1;
    }
    out
}

fn topographic_prominence(y: &[f64], i: usize) -> f64 {
    let h = y[i];
    let mut left_min = h;
    for k in (0..i).rev() {
        if y[k] > h {
            break;
        }
        left_min = left_min.min(y[k]);
    }
    let mut right_min = h;
    let mut k = i + 1;
    while k < y.len() && y[k] <= h {
        right_min = right_min.min(y[k]);
        k += 1;
    }
    h - left_min.max(right_min)
}

#[cfg(test)]
mod tests {
    use super::super::{bcf_quadrature, gaussian_filter, BathParameters};
    use super::*;
    use crate::model::SpectralDensityModel;

    fn filtered_delta(w0: f64, s: f64, sigma: f64) -> CorrelationFunction {
        let m = SpectralDensityModel::single_delta(w0, s).unwrap();
        let p = BathParameters::new(0.0, 3.0 * sigma).unwrap();
        gaussian_filter(&bcf_quadrature(&m, &p).unwrap(), sigma).unwrap()
    }

    #[test]
    fn filtered_delta_gives_gaussian() {
        let (w0, s, sigma) = (800.0, 0.1, 100.0);
        let c = filtered_delta(w0, s, sigma);
        let spec = ft_spectrum(&c).unwrap();
        assert!(spec.warnings.is_empty());
        // standard deviation 1/σ in angular units
        let sd = 1.0 / angular(sigma);
        let amp = w0 * w0 * s / ((2.0 * PI).sqrt() * sd);
        let mut worst: f64 = 0.0;
        for (&w, &v) in spec.omega.iter().zip(&spec.values) {
            let g = amp * (-(w - w0).powi(2) / (2.0 * sd * sd)).exp();
            worst = worst.max((v - g).abs());
        }
        assert!(worst < 1e-4 * amp, "{}", worst / amp);
        assert!((spec.argmax() - w0).abs() <= spec.step());
        assert!(((spec.integral() - w0 * w0 * s) / (w0 * w0 * s)).abs() < 1e-6);
    }

    #[test]
    fn single_filtered_delta_has_one_peak() {
        let c = filtered_delta(600.0, 0.2, 100.0);
        let spec = ft_spectrum(&c).unwrap();
        let census = count_peaks(&spec, DEFAULT_PROMINENCE).unwrap();
        assert_eq!(census.count(), 1);
        assert!((census.peaks[0].center - 600.0).abs() <= spec.step());
    }

    #[test]
    fn zero_input_gives_zero_spectrum() {
        let c = CorrelationFunction::new(0.25, vec![Complex64::new(0.0, 0.0); 1000], 0.0, "zero");
        let spec = ft_spectrum(&c).unwrap();
        assert!(spec.values.iter().all(|&v| v == 0.0));
        assert_eq!(count_peaks(&spec, 0.1).unwrap().count(), 0);
    }

    #[test]
    fn grid_limits_are_enforced() {
        let c = filtered_delta(600.0, 0.2, 100.0);
        assert!(ft_spectrum_on(&c, &SpectrumGrid::new(0.0, 1000.0, 2.0).unwrap()).is_err());
        assert!(ft_spectrum_on(&c, &SpectrumGrid::new(0.0, 80000.0, 1.0).unwrap()).is_err());
        assert!(count_peaks(&ft_spectrum(&c).unwrap(), 1.5).is_err());
    }

    #[test]
    fn unfiltered_tail_warns() {
        let m = SpectralDensityModel::single_delta(600.0, 0.2).unwrap();
        let c = bcf_quadrature(&m, &BathParameters::new(0.0, 100.0).unwrap()).unwrap();
        assert!(!ft_spectrum(&c).unwrap().warnings.is_empty());
    }

    #[test]
    fn prominence_matches_hand_example() {
        // the middle peak is only 1 above its saddle
        let y = [0.0, 3.0, 1.0, 2.0, 0.5, 5.0, 0.0];
        let spec = FilteredSpectrum {
            omega: (1..=7).map(|k| k as f64).collect(),
            values: y.to_vec(),
            filter_sigma: None,
            temperature: 0.0,
            label: String::new(),
            warnings: vec![],
        };
        let all = count_peaks(&spec, 0.01).unwrap();
        let proms: Vec<f64> = all.peaks.iter().map(|p| p.prominence).collect();
        assert_eq!(proms, vec![2.5, 1.0, 5.0]);
        assert_eq!(count_peaks(&spec, 0.3).unwrap().count(), 2);
    }

    #[test]
    fn plateau_reported_once_at_middle() {
        let y = [0.0, 1.0, 2.0, 2.0, 2.0, 1.0, 0.0];
        assert_eq!(local_maxima(&y), vec![(2, 3)]);
        assert!(local_maxima(&[0.0, 1.0, 1.0]).is_empty());
    }
}
