//! Bath correlation functions, Gaussian filtering, filtered spectra and peak census.

mod spectrum;

pub(crate) use spectrum::trapezoid;

pub use spectrum::{
    count_peaks, ft_spectrum, ft_spectrum_on, one_sided_transform, FilteredSpectrum, Peak, PeakCensus,
    SpectrumGrid, DEFAULT_PROMINENCE,
};

use crate::error::{Error, Result};
use crate::expansion::lorentz_tail;
use crate::model::SpectralDensityModel;
use crate::quad::{self, Rule};
use crate::units::{angular, coth_factor, thermal_energy, RAD_PER_FS_PER_CM1};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Temperature, horizon, filter width and time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathParameters {
    /// K
    pub temperature: f64,
    /// Horizon τ = 3σ̃, fs.
    pub tau: f64,
    /// Filter standard deviation σ̃, fs.
    pub filter_sigma: f64,
    /// Grid spacing, fs.
    pub dt: f64,
    /// Last grid time, fs.
    pub t_max: f64,
}

impl BathParameters {
    /// Defaults: σ̃ = τ/3, dt = 0.25 fs, grid to 4τ.
    pub fn new(temperature: f64, tau: f64) -> Result<Self> {
        let p = BathParameters { temperature, tau, filter_sigma: tau / 3.0, dt: 0.25, t_max: 4.0 * tau };
        p.validate()?;
        Ok(p)
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        self.dt = dt;
        self.validate()?;
        Ok(self)
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        self.filter_sigma = sigma;
        self.validate()?;
        Ok(self)
    }

    pub fn with_t_max(mut self, t_max: f64) -> Result<Self> {
        self.t_max = t_max;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Domain(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.tau / self.dt < 64.0 - 1e-9 {
            return Err(Error::Config(format!("tau/dt = {} is below 64", self.tau / self.dt)));
        }
        if !(self.filter_sigma > 0.0) {
            return Err(Error::Config(format!("filter sigma must be positive, got {}", self.filter_sigma)));
        }
        if !(self.t_max >= self.dt) {
            return Err(Error::Config("grid must contain at least two points".into()));
        }
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        (self.t_max / self.dt + 1e-9).floor() as usize + 1
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points()).map(|j| j as f64 * self.dt).collect()
    }
}

/// Samples of C(t) on a uniform grid starting at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationFunction {
    pub dt: f64,
    pub values: Vec<Complex64>,
    pub temperature: f64,
    pub label: String,
    /// Standard deviation of the Gaussian filter already applied, if any.
    pub filter_sigma: Option<f64>,
}

impl CorrelationFunction {
    pub fn new(dt: f64, values: Vec<Complex64>, temperature: f64, label: impl Into<String>) -> Self {
        CorrelationFunction { dt, values, temperature, label: label.into(), filter_sigma: None }
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

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.time(j)).collect()
    }

    pub fn t_max(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    /// Samples with t ≤ `t_max`.
    pub fn truncated(&self, t_max: f64) -> Self {
        let n = ((t_max / self.dt + 1e-9).floor() as usize + 1).min(self.len());
        CorrelationFunction { values: self.values[..n].to_vec(), label: self.label.clone(), ..*self.shallow() }
    }

    fn shallow(&self) -> Box<CorrelationFunction> {
        Box::new(CorrelationFunction {
            dt: self.dt,
            values: vec![],
            temperature: self.temperature,
            label: String::new(),
            filter_sigma: self.filter_sigma,
        })
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.len() == other.len() && (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.same_grid(other) {
            return Err(Error::Config("correlation functions live on different grids".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(out)
    }
}

/// C(t) = ∫₀^∞ J(ω)[coth(ω/2k_BT) cos ωt − i sin ωt] dω plus closed-form delta terms.
///
/// The continuum is integrated with composite Gauss-Legendre panels fine enough to
/// follow the phase at the last grid time; panels are halved until the largest
/// change relative to C(0) is below 1e-7. Lorentzian tails beyond the cutoff are
/// added exactly.
pub fn bcf_quadrature(model: &SpectralDensityModel, params: &BathParameters) -> Result<CorrelationFunction> {
    params.validate()?;
    let n = params.n_points();
    let t = params.temperature;
    let mut values = vec![Complex64::new(0.0, 0.0); n];

    for d in &model.deltas {
        let w2s = d.omega * d.omega * d.hr;
        let c = coth_factor(d.omega, t);
        let step = Complex64::from_polar(1.0, -angular(d.omega) * params.dt);
        let mut ph = Complex64::new(1.0, 0.0);
        for (j, v) in values.iter_mut().enumerate() {
            if j % 256 == 0 {
                ph = Complex64::from_polar(1.0, -angular(d.omega) * params.dt * j as f64);
            }
            *v += w2s * Complex64::new(c * ph.re, ph.im);
            ph *= step;
        }
    }

    if model.has_continuum() {
        let cont = continuum_bcf(model, params)?;
        for (v, c) in values.iter_mut().zip(cont) {
            *v += c;
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite correlation function sample".into()));
    }
    Ok(CorrelationFunction::new(params.dt, values, t, model.label.clone()))
}

/// Cutoff beyond which the Lorentzian tails are added analytically.
fn tail_cutoff(model: &SpectralDensityModel, temperature: f64) -> f64 {
    let lmax = model.lorentzians.iter().map(|l| l.omega + 30.0 * l.gamma).fold(0.0, f64::max);
    let ar = if model.ar.is_some() { crate::model::AR_CUTOFF } else { 0.0 };
    lmax.max(ar).max(40.0 * thermal_energy(temperature)).max(1.0)
}

fn continuum_rule(model: &SpectralDensityModel, cutoff: f64, width: f64) -> Rule {
    let mut b = model.breakpoints();
    b.push(cutoff);
    let b = quad::normalize_breaks(b, 0.0, cutoff);
    Rule::composite(&quad::refine_breaks(&b, width), 32)
}

fn continuum_bcf(model: &SpectralDensityModel, params: &BathParameters) -> Result<Vec<Complex64>> {
    let n = params.n_points();
    let temp = params.temperature;
    let cutoff = tail_cutoff(model, temp);
    // phase span per panel at the last time ≤ 12 rad
    let t_last = params.dt * (n - 1) as f64;
    let mut width = (12.0 / angular(t_last.max(params.dt))).min(cutoff / 8.0);

    let eval = |rule: &Rule, stride: usize| -> Vec<Complex64> {
        let amps: Vec<(f64, f64, f64)> = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&w, &q)| (w, q * model.j_coth(w, temp), q * model.j(w)))
            .collect();
        accumulate(&amps, params.dt * stride as f64, (n - 1) / stride + 1)
    };

    let stride = 8;
    let mut coarse = eval(&continuum_rule(model, cutoff, width), stride);
    let mut fine;
    let mut level = 0;
    loop {
        width *= 0.5;
        let rule = continuum_rule(model, cutoff, width);
        fine = eval(&rule, 1);
        let scale = fine[0].norm().max(1e-300);
        let diff = coarse
            .iter()
            .enumerate()
            .map(|(k, c)| (c - fine[k * stride]).norm())
            .fold(0.0, f64::max);
        if diff <= 1e-7 * scale {
            break;
        }
        level += 1;
        if level > 4 {
            return Err(Error::Numeric(format!(
                "frequency quadrature not converged: change {:.3e} of C(0) with {} nodes",
                diff / scale,
                rule.len()
            )));
        }
        coarse = (0..(n - 1) / stride + 1).map(|k| fine[k * stride]).collect();
    }

    for l in &model.lorentzians {
        for (j, v) in fine.iter_mut().enumerate() {
            *v += lorentz_tail(l, cutoff, j as f64 * params.dt);
        }
    }
    Ok(fine)
}

/// Σ_nodes [a cos(ωt) − i b sin(ωt)] at t = k·dt, by phasor recurrence per node.
fn accumulate(amps: &[(f64, f64, f64)], dt: f64, n: usize) -> Vec<Complex64> {
    use rayon::prelude::*;
    let chunk = 256;
    amps.par_chunks(chunk)
        .map(|nodes| {
            let mut out = vec![Complex64::new(0.0, 0.0); n];
            for &(w, a, b) in nodes {
                if a == 0.0 && b == 0.0 {
                    continue;
                }
                let theta = w * RAD_PER_FS_PER_CM1 * dt;
                let step = Complex64::from_polar(1.0, -theta);
                let mut ph = Complex64::new(1.0, 0.0);
                for (k, o) in out.iter_mut().enumerate() {
                    if k % 512 == 0 {
                        ph = Complex64::from_polar(1.0, -theta * k as f64);
                    }
                    o.re += a * ph.re;
                    o.im += b * ph.im;
                    ph *= step;
                }
            }
            out
        })
        .reduce(
            || vec![Complex64::new(0.0, 0.0); n],
            |mut x, y| {
                for (a, b) in x.iter_mut().zip(y) {
                    *a += b;
                }
                x
            },
        )
}

/// Correlation function of `model`, filtered at σ̃ and transformed onto a grid
/// reaching 500 cm⁻¹ past the highest model frequency (at least 2000 cm⁻¹).
pub fn filtered_spectrum(model: &SpectralDensityModel, params: &BathParameters) -> Result<FilteredSpectrum> {
    let c = bcf_quadrature(model, params)?;
    let f = gaussian_filter(&c, params.filter_sigma)?;
    ft_spectrum_on(&f, &SpectrumGrid::up_to(spectrum_reach(model)))
}

/// Upper end of the default spectrum grid for `model`.
pub fn spectrum_reach(model: &SpectralDensityModel) -> f64 {
    let top = model
        .lorentzians
        .iter()
        .map(|l| l.omega)
        .chain(model.deltas.iter().map(|d| d.omega))
        .fold(0.0, f64::max);
    (top + 500.0).max(2000.0)
}

/// Multiply by e^{−t²/2σ²}.
pub fn gaussian_filter(c: &CorrelationFunction, sigma: f64) -> Result<CorrelationFunction> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("filter sigma must be positive, got {sigma}")));
    }
    let mut out = c.clone();
    for (j, v) in out.values.iter_mut().enumerate() {
        let t = j as f64 * c.dt;
        *v *= (-t * t / (2.0 * sigma * sigma)).exp();
    }
    out.filter_sigma = Some(match c.filter_sigma {
        Some(s0) => 1.0 / (1.0 / (s0 * s0) + 1.0 / (sigma * sigma)).sqrt(),
        None => sigma,
    });
    Ok(out)
}

/// sqrt(Σ w|a−b|² / Σ w|a|²) with w = e^{−t²/σ²}.
pub fn bcf_distance(a: &CorrelationFunction, b: &CorrelationFunction, sigma: f64) -> Result<f64> {
    if !a.same_grid(b) {
        return Err(Error::Config(format!(
            "grid mismatch: {} points at dt {} vs {} points at dt {}",
            a.len(),
            a.dt,
            b.len(),
            b.dt
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (j, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
        let t = j as f64 * a.dt;
        let w = (-t * t / (sigma * sigma)).exp();
        num += w * (x - y).norm_sqr();
        den += w * x.norm_sqr();
    }
    if den == 0.0 {
        return Err(Error::Domain("reference correlation function is zero".into()));
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data;
    use crate::expansion::lorentz_bcf;

    fn params(t: f64, tau: f64) -> BathParameters {
        BathParameters::new(t, tau).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(BathParameters::new(77.0, 300.0).is_ok());
        assert!(BathParameters::new(77.0, 300.0).unwrap().with_dt(0.0).is_err());
        assert!(BathParameters::new(77.0, 10.0).is_err()); // tau/dt = 40
        assert!(BathParameters::new(-1.0, 300.0).is_err());
    }

    #[test]
    fn single_delta_at_zero_temperature() {
        let m = SpectralDensityModel::single_delta(500.0, 0.2).unwrap();
        let p = params(0.0, 100.0);
        let c = bcf_quadrature(&m, &p).unwrap();
        for (j, v) in c.values.iter().enumerate() {
            let t = c.time(j);
            let e = 500.0 * 500.0 * 0.2 * Complex64::from_polar(1.0, -angular(500.0) * t);
            assert!((v - e).norm() < 1e-9 * 5e4, "t={t}");
        }
    }

    #[test]
    fn origin_is_real_and_matches_direct_integral() {
        let m = data::fmo_full().unwrap();
        let p = params(77.0, 300.0).with_t_max(300.0).unwrap();
        let c = bcf_quadrature(&m, &p).unwrap();
        assert!(c.values[0].im.abs() < 1e-8 * c.values[0].re);
        let f = |w: f64| m.j_coth(w, 77.0);
        let b = m.breakpoints();
        let direct = quad::adaptive_to_infinity(&f, &b, 1e-10, 0.0).unwrap().value;
        assert!(((c.values[0].re - direct) / direct).abs() < 1e-6, "{} {}", c.values[0].re, direct);
    }

    #[test]
    fn lorentzian_matches_closed_form() {
        let m = data::fmo_effective().unwrap().high_frequency_part().unwrap();
        let p = params(77.0, 300.0).with_t_max(600.0).unwrap();
        let c = bcf_quadrature(&m, &p).unwrap();
        let times = c.times();
        let mut exact = vec![Complex64::new(0.0, 0.0); times.len()];
        for l in &m.lorentzians {
            for (e, v) in exact.iter_mut().zip(lorentz_bcf(l, 77.0, &times)) {
                *e += v;
            }
        }
        let scale = exact[0].norm();
        for (j, (a, b)) in c.values.iter().zip(&exact).enumerate() {
            assert!((a - b).norm() < 1e-6 * scale, "t={} {a} {b}", c.time(j));
        }
    }

    #[test]
    fn envelope_decays_at_the_width() {
        let m = SpectralDensityModel::single_lorentzian(800.0, 0.1, 30.0).unwrap();
        let p = params(0.0, 300.0).with_t_max(400.0).unwrap();
        let c = bcf_quadrature(&m, &p).unwrap();
        // least-squares slope of ln|C| on t ∈ [50, 400]
        let pts: Vec<(f64, f64)> = (0..c.len())
            .filter(|&j| c.time(j) >= 50.0)
            .map(|j| (c.time(j), c.values[j].norm().ln()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        let expect = -angular(30.0);
        assert!(((slope - expect) / expect).abs() < 0.05, "{slope} {expect}");
    }

    #[test]
    fn linear_in_components() {
        let m = data::fmo_effective().unwrap();
        let p = params(77.0, 300.0).with_t_max(300.0).unwrap();
        let whole = bcf_quadrature(&m, &p).unwrap();
        let mut sum = bcf_quadrature(&m.components()[0], &p).unwrap();
        for part in &m.components()[1..] {
            sum = sum.add(&bcf_quadrature(part, &p).unwrap()).unwrap();
        }
        let scale = whole.values[0].norm();
        for (a, b) in whole.values.iter().zip(&sum.values) {
            assert!((a - b).norm() < 1e-6 * scale);
        }
    }

    #[test]
    fn origin_grows_with_temperature() {
        let m = data::fmo_full().unwrap();
        let c0: Vec<f64> = [0.0, 77.0, 300.0]
            .iter()
            .map(|&t| bcf_quadrature(&m, &params(t, 64.0).with_t_max(1.0).unwrap()).unwrap().values[0].re)
            .collect();
        assert!(c0[0] <= c0[1] && c0[1] <= c0[2], "{c0:?}");
    }

    #[test]
    fn halving_dt_is_stable() {
        let m = data::fmo_full().unwrap();
        let p = params(77.0, 300.0).with_t_max(300.0).unwrap();
        let a = bcf_quadrature(&m, &p).unwrap();
        let b = bcf_quadrature(&m, &p.with_dt(0.125).unwrap()).unwrap();
        let scale = a.values[0].norm();
        for (j, v) in a.values.iter().enumerate() {
            assert!((v - b.values[2 * j]).norm() < 1e-6 * scale);
        }
    }

    #[test]
    fn filter_identities() {
        let m = SpectralDensityModel::single_delta(300.0, 0.1).unwrap();
        let c = bcf_quadrature(&m, &params(0.0, 300.0)).unwrap();
        let s = 100.0;
        let f = gaussian_filter(&c, s).unwrap();
        assert_eq!(f.values[0], c.values[0]);
        let j = (3.0 * s / c.dt) as usize;
        let ratio = f.values[j].norm() / c.values[j].norm();
        assert!((ratio - (-4.5f64).exp()).abs() < 1e-12);
        let twice = gaussian_filter(&f, s).unwrap();
        let once = gaussian_filter(&c, s / 2f64.sqrt()).unwrap();
        for (a, b) in twice.values.iter().zip(&once.values) {
            assert!((a - b).norm() < 1e-12 * c.values[0].norm());
        }
        assert!((twice.filter_sigma.unwrap() - s / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn distance_edge_cases() {
        let m = SpectralDensityModel::single_delta(300.0, 0.1).unwrap();
        let c = bcf_quadrature(&m, &params(77.0, 300.0)).unwrap();
        assert_eq!(bcf_distance(&c, &c, 100.0).unwrap(), 0.0);
        let mut z = c.clone();
        z.values.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        assert!((bcf_distance(&c, &z, 100.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(bcf_distance(&c, &c.truncated(100.0), 100.0).is_err());
    }
}
