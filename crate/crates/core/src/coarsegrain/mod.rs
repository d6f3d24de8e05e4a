//! Effective environments: constrained Lorentzian fits to the filtered correlation
//! function, and the single-peak conventional baseline.

mod lm;

pub use lm::{minimize, LmOptions, LmResult, Problem};

use crate::bcf::{bcf_quadrature, count_peaks, filtered_spectrum, BathParameters, PeakCensus, DEFAULT_PROMINENCE};
use crate::error::{Error, Result};
use crate::expansion::LorentzKernel;
use crate::model::{ArComponent, Lorentzian, ModelDocument, SpectralDensityModel};
use crate::units::from_angular;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 2024;

/// Peaks below this are left to the continuum when one is present.
pub const CONTINUUM_EDGE: f64 = 100.0;

/// Starting point of the extra Lorentzian that stands in for the continuum.
pub const CONTINUUM_PEAK: (f64, f64, f64) = (160.0, 0.164, 133.0);

/// Number of Lorentzians to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakCount {
    Fixed(usize),
    /// As many as the peak census finds.
    Auto,
}

impl FromStr for PeakCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(PeakCount::Auto);
        }
        let k: usize = s.parse().map_err(|_| Error::Config(format!("peak count must be an integer or 'auto', got {s:?}")))?;
        if k == 0 {
            return Err(Error::Config("peak count must be at least 1".into()));
        }
        Ok(PeakCount::Fixed(k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub temperature: f64,
    /// Horizon τ; the weighting width is τ/3.
    pub tau: f64,
    pub peaks: PeakCount,
    /// Carry the continuum through unchanged instead of fitting it.
    pub keep_ar: bool,
    pub seed: u64,
    pub starts: usize,
    /// Half-width of the uniform jitter on initial centres, cm⁻¹.
    pub jitter: f64,
    pub gamma_bounds: (f64, f64),
    pub prominence: f64,
    pub lm: LmOptions,
}

impl FitOptions {
    pub fn new(temperature: f64, tau: f64, peaks: PeakCount) -> Self {
        FitOptions {
            temperature,
            tau,
            peaks,
            keep_ar: true,
            seed: DEFAULT_SEED,
            starts: 16,
            jitter: 20.0,
            gamma_bounds: (1.0, 300.0),
            prominence: DEFAULT_PROMINENCE,
            lm: LmOptions::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_keep_ar(mut self, keep: bool) -> Self {
        self.keep_ar = keep;
        self
    }

    pub fn with_starts(mut self, starts: usize) -> Self {
        self.starts = starts;
        self
    }

    fn validate(&self) -> Result<()> {
        if let PeakCount::Fixed(0) = self.peaks {
            return Err(Error::Config("peak count must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be non-negative, got {}", self.temperature)));
        }
        if self.starts == 0 {
            return Err(Error::Config("need at least one start".into()));
        }
        let (lo, hi) = self.gamma_bounds;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Config(format!("bad width bounds [{lo}, {hi}]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Weighted squared residual relative to the weighted norm of the target.
    pub objective: f64,
    /// Objective at the initial point of the winning start.
    pub initial_objective: f64,
    pub iterations: usize,
    pub best_start: usize,
    pub starts: usize,
    pub failed_starts: usize,
    pub seed: u64,
    #[serde(rename = "temperature_K")]
    pub temperature: f64,
    pub tau_fs: f64,
    pub peaks: usize,
}

/// What the `fit_report` block of a model document holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentReport {
    pub method: String,
    pub keep_ar: bool,
    pub target_reorg_cm1: f64,
    pub target_hr: f64,
    pub reorg_residual: f64,
    pub hr_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveEnvironment {
    pub label: String,
    pub keep_ar: bool,
    pub ar: Option<ArComponent>,
    pub lorentzians: Vec<Lorentzian>,
    /// Reorganization energy of the input model, cm⁻¹.
    pub target_reorg: f64,
    /// Total Huang-Rhys factor of the input model.
    pub target_hr: f64,
    pub fit_report: Option<FitReport>,
}

impl EffectiveEnvironment {
    pub fn to_model(&self) -> SpectralDensityModel {
        SpectralDensityModel {
            label: self.label.clone(),
            ar: self.ar,
            lorentzians: self.lorentzians.clone(),
            deltas: vec![],
        }
    }

    pub fn reorganization(&self) -> f64 {
        self.to_model().reorganization_exact()
    }

    pub fn huang_rhys(&self) -> f64 {
        self.to_model().huang_rhys_exact()
    }

    /// Relative deviation of the reorganization energy from the target.
    pub fn reorg_residual(&self) -> f64 {
        rel(self.reorganization(), self.target_reorg)
    }

    pub fn hr_residual(&self) -> f64 {
        rel(self.huang_rhys(), self.target_hr)
    }

    pub fn report(&self) -> EnvironmentReport {
        EnvironmentReport {
            method: if self.fit_report.is_some() { "fit" } else { "conventional" }.into(),
            keep_ar: self.keep_ar,
            target_reorg_cm1: self.target_reorg,
            target_hr: self.target_hr,
            reorg_residual: self.reorg_residual(),
            hr_residual: self.hr_residual(),
            fit: self.fit_report.clone(),
        }
    }

    pub fn to_document(&self) -> ModelDocument {
        let mut doc = ModelDocument::from_model(&self.to_model());
        doc.fit_report = Some(serde_json::to_value(self.report()).expect("report serializes"));
        doc
    }

    pub fn to_json(&self) -> String {
        self.to_document().to_json()
    }

    /// Read back a document written by [`EffectiveEnvironment::to_json`]. Plain model
    /// documents are accepted too, with the model's own totals as targets.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| Error::parse(e.to_string(), Some(e.line())))?;
        let report = doc.fit_report.take();
        let model = doc.into_model()?;
        if !model.deltas.is_empty() {
            return Err(Error::validation("deltas", "an effective environment holds only Lorentzians and the continuum"));
        }
        let report: Option<EnvironmentReport> = match report {
            Some(v) => Some(serde_json::from_value(v).map_err(|e| Error::parse(format!("fit_report: {e}"), None))?),
            None => None,
        };
        Ok(EffectiveEnvironment {
            label: model.label.clone(),
            keep_ar: report.as_ref().map_or(true, |r| r.keep_ar),
            ar: model.ar,
            lorentzians: model.lorentzians.clone(),
            target_reorg: report.as_ref().map_or_else(|| model.reorganization_exact(), |r| r.target_reorg_cm1),
            target_hr: report.as_ref().map_or_else(|| model.huang_rhys_exact(), |r| r.target_hr),
            fit_report: report.and_then(|r| r.fit),
        })
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Replace all Lorentzians and deltas by one peak at `omega` with width `gamma`,
/// its weight chosen to keep their reorganization energy. The Huang-Rhys total is
/// not conserved.
pub fn conventional_coarse_grain(model: &SpectralDensityModel, omega: f64, gamma: f64) -> Result<EffectiveEnvironment> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::Domain(format!("peak frequency must be positive, got {omega}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!("peak width must be positive, got {gamma}")));
    }
    let (reorg, _) = discrete_totals(model);
    if !(reorg > 0.0) {
        return Err(Error::Domain("model has no Lorentzians or deltas to coarse-grain".into()));
    }
    Ok(EffectiveEnvironment {
        label: format!("{}-conventional", model.label),
        keep_ar: true,
        ar: model.ar,
        lorentzians: vec![Lorentzian { omega, hr: reorg / omega, gamma }],
        target_reorg: model.reorganization_exact(),
        target_hr: model.huang_rhys_exact(),
        fit_report: None,
    })
}

/// (Σ ΩS, Σ S) over Lorentzians and deltas.
fn discrete_totals(model: &SpectralDensityModel) -> (f64, f64) {
    let reorg = model.lorentzians.iter().map(|l| l.omega * l.hr).sum::<f64>()
        + model.deltas.iter().map(|d| d.omega * d.hr).sum::<f64>();
    let hr = model.lorentzians.iter().map(|l| l.hr).sum::<f64>() + model.deltas.iter().map(|d| d.hr).sum::<f64>();
    (reorg, hr)
}

/// Peak census of the filtered spectrum of `model` at horizon `tau`.
pub fn peak_census(model: &SpectralDensityModel, temperature: f64, tau: f64, prominence: f64) -> Result<PeakCensus> {
    let params = BathParameters::new(temperature, tau)?;
    count_peaks(&filtered_spectrum(model, &params)?, prominence)
}

/// Fit Lorentzians to the filtered correlation function of `model`, conserving the
/// reorganization energy and Huang-Rhys total of the fitted part exactly.
pub fn fit_effective(model: &SpectralDensityModel, opts: &FitOptions) -> Result<EffectiveEnvironment> {
    opts.validate()?;
    model.validate()?;
    let has_ar = model.ar.is_some();
    let keep_ar = opts.keep_ar && has_ar;
    let fitted = if keep_ar {
        model.high_frequency_part().ok_or_else(|| Error::Domain("model has only a continuum; nothing to fit".into()))?
    } else {
        model.clone()
    };
    let (mut reorg, mut hr) = discrete_totals(model);
    if !keep_ar {
        if let Some(ar) = model.ar {
            reorg += ar.reorganization_exact();
            hr += ar.s_total;
        }
    }
    if !(reorg > 0.0 && hr > 0.0) {
        return Err(Error::Domain("fitted part has no weight".into()));
    }

    let census = peak_census(model, opts.temperature, opts.tau, opts.prominence)?;
    let edge = if has_ar { CONTINUUM_EDGE } else { 0.0 };
    let mut found = census.above(edge);
    found.retain(|p| p.center > 0.0);
    let k = match opts.peaks {
        PeakCount::Fixed(k) => k,
        PeakCount::Auto => found.len(),
    };
    if k == 0 {
        return Err(Error::Config("the peak census found no peaks; give the count explicitly".into()));
    }

    let sigma = opts.tau / 3.0;
    let gamma0 = from_angular(1.0 / sigma).clamp(opts.gamma_bounds.0, opts.gamma_bounds.1);
    let mut seeds = initial_peaks(&found, k, gamma0);
    if has_ar && !opts.keep_ar {
        seeds.push(CONTINUUM_PEAK);
    }

    let omega_hi = fitted
        .lorentzians
        .iter()
        .map(|l| l.omega + 3.0 * l.gamma)
        .chain(fitted.deltas.iter().map(|d| d.omega))
        .fold(CONTINUUM_PEAK.0, f64::max)
        + 200.0;
    let dt = (opts.tau / 64.0).min(1.0);
    let params = BathParameters::new(opts.temperature, opts.tau)?.with_dt(dt)?.with_t_max(4.0 * sigma)?;
    let target = bcf_quadrature(&fitted, &params)?;
    let times = target.times();
    let kernel = LorentzKernel::new(&times, opts.temperature, omega_hi);
    let weights: Vec<f64> = times.iter().map(|t| (-t * t / (sigma * sigma)).exp()).collect();
    let norm = weights.iter().zip(&target.values).map(|(w, c)| w * c.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::Numeric("target correlation function vanishes".into()));
    }
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt() / norm).collect();

    let starts: Vec<Option<(LmResult, Layout)>> = (0..opts.starts)
        .into_par_iter()
        .map(|start| {
            let mut init = seeds.clone();
            if start > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(start as u64);
                for p in &mut init {
                    p.0 = (p.0 + rng.random_range(-opts.jitter..=opts.jitter)).max(1.0);
                }
            }
            init.sort_by(|a, b| a.0.total_cmp(&b.0));
            let layout = Layout::new(init.len(), reorg, hr);
            let problem = FitProblem { kernel: &kernel, target: &target.values, sqrt_w: &sqrt_w, layout: &layout };
            let x0 = layout.start_vector(&init)?;
            let (lo, hi) = layout.bounds(omega_hi, opts.gamma_bounds);
            minimize(&problem, &x0, &lo, &hi, opts.lm).map(|r| (r, layout))
        })
        .collect();

    let failed = starts.iter().filter(|s| s.is_none()).count();
    let mut best: Option<(usize, &LmResult, &Layout)> = None;
    for (i, s) in starts.iter().enumerate() {
        if let Some((r, layout)) = s {
            if !r.cost.is_finite() {
                continue;
            }
            if best.map_or(true, |(_, b, _)| r.cost < b.cost) {
                best = Some((i, r, layout));
            }
        }
    }
    let Some((best_start, result, layout)) = best else {
        return Err(Error::Fit { starts: opts.starts, best_objective: f64::INFINITY });
    };
    let (omegas, gammas, hrs) = layout.expand(&result.x).ok_or(Error::Fit { starts: opts.starts, best_objective: result.cost })?;
    let mut lorentzians: Vec<Lorentzian> =
        (0..omegas.len()).map(|i| Lorentzian { omega: omegas[i], hr: hrs[i], gamma: gammas[i] }).collect();
    lorentzians.sort_by(|a, b| a.omega.total_cmp(&b.omega));

    let peaks = lorentzians.len();
    Ok(EffectiveEnvironment {
        label: format!("{}-effective", model.label),
        keep_ar,
        ar: if keep_ar { model.ar } else { None },
        lorentzians,
        target_reorg: model.reorganization_exact(),
        target_hr: model.huang_rhys_exact(),
        fit_report: Some(FitReport {
            objective: result.cost,
            initial_objective: result.initial_cost,
            iterations: result.iterations,
            best_start,
            starts: opts.starts,
            failed_starts: failed,
            seed: opts.seed,
            temperature: opts.temperature,
            tau_fs: opts.tau,
            peaks,
        }),
    })
}

/// (Ω, S share, Γ) for each of the `k` starting peaks. Missing peaks are placed in
/// the widest gaps between found ones.
fn initial_peaks(found: &[crate::bcf::Peak], k: usize, gamma0: f64) -> Vec<(f64, f64, f64)> {
    let mut by_height = found.to_vec();
    by_height.sort_by(|a, b| b.height.total_cmp(&a.height).then(a.center.total_cmp(&b.center)));
    by_height.truncate(k);
    let mut peaks: Vec<(f64, f64)> = by_height.iter().map(|p| (p.center, p.height / p.center.max(1.0))).collect();
    if peaks.is_empty() {
        peaks.push((500.0, 1.0));
    }
    while peaks.len() < k {
        peaks.sort_by(|a, b| a.0.total_cmp(&b.0));
        let share = peaks.iter().map(|p| p.1).sum::<f64>() / peaks.len() as f64;
        let mut gap = (0.0, peaks[0].0 + 50.0);
        for w in peaks.windows(2) {
            if w[1].0 - w[0].0 > gap.0 {
                gap = (w[1].0 - w[0].0, 0.5 * (w[0].0 + w[1].0));
            }
        }
        if gap.0 < 10.0 {
            gap.1 = peaks[peaks.len() - 1].0 + 50.0;
        }
        peaks.push((gap.1, share));
    }
    let total: f64 = peaks.iter().map(|p| p.1).sum();
    peaks.into_iter().map(|(w, s)| (w, s / total, gamma0)).collect()
}

/// Parameter vector: [Ω_0..Ω_{K−1}, Γ_0..Γ_{K−1}, S of the free peaks]. The weights
/// of the first and last peak follow from the two totals. With one peak, Ω and S are
/// both fixed and only Γ is free.
#[derive(Debug, Clone)]
struct Layout {
    k: usize,
    reorg: f64,
    hr: f64,
}

impl Layout {
    fn new(k: usize, reorg: f64, hr: f64) -> Self {
        Layout { k, reorg, hr }
    }

    fn n_params(&self) -> usize {
        if self.k == 1 {
            1
        } else {
            2 * self.k + self.k - 2
        }
    }

    fn free(&self) -> std::ops::Range<usize> {
        1..self.k - 1
    }

    /// Starting vector from (Ω, S share, Γ), sorted by Ω. Free weights are shrunk until
    /// the two solved weights are positive.
    fn start_vector(&self, init: &[(f64, f64, f64)]) -> Option<Vec<f64>> {
        if self.k == 1 {
            return Some(vec![init[0].2]);
        }
        let mut x = Vec::with_capacity(self.n_params());
        x.extend(init.iter().map(|p| p.0));
        x.extend(init.iter().map(|p| p.2));
        let base = x.len();
        x.extend(self.free().map(|i| init[i].1 * self.hr));
        for _ in 0..40 {
            if self.expand(&x).is_some() {
                return Some(x);
            }
            for v in &mut x[base..] {
                *v *= 0.5;
            }
        }
        None
    }

    fn bounds(&self, omega_hi: f64, gamma: (f64, f64)) -> (Vec<f64>, Vec<f64>) {
        if self.k == 1 {
            return (vec![gamma.0], vec![gamma.1]);
        }
        let mut lo = vec![1.0; self.k];
        let mut hi = vec![omega_hi; self.k];
        lo.extend(std::iter::repeat(gamma.0).take(self.k));
        hi.extend(std::iter::repeat(gamma.1).take(self.k));
        lo.extend(std::iter::repeat(0.0).take(self.k - 2));
        hi.extend(std::iter::repeat(self.hr).take(self.k - 2));
        (lo, hi)
    }

    /// (Ω, Γ, S) for every peak, or `None` where some weight is not positive.
    fn expand(&self, x: &[f64]) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let k = self.k;
        if k == 1 {
            return Some((vec![self.reorg / self.hr], vec![x[0]], vec![self.hr]));
        }
        let omega = x[..k].to_vec();
        let gamma = x[k..2 * k].to_vec();
        let mut s = vec![0.0; k];
        let (mut rh, mut rl) = (self.hr, self.reorg);
        for (j, i) in self.free().enumerate() {
            s[i] = x[2 * k + j];
            rh -= s[i];
            rl -= omega[i] * s[i];
        }
        let (wa, wb) = (omega[0], omega[k - 1]);
        if (wb - wa).abs() < 1e-9 * wb.abs().max(1.0) {
            return None;
        }
        s[k - 1] = (rl - wa * rh) / (wb - wa);
        s[0] = rh - s[k - 1];
        if s.iter().all(|&v| v > 0.0) {
            Some((omega, gamma, s))
        } else {
            None
        }
    }
}

struct FitProblem<'a> {
    kernel: &'a LorentzKernel,
    target: &'a [Complex64],
    sqrt_w: &'a [f64],
    layout: &'a Layout,
}

impl FitProblem<'_> {
    fn unit(&self, omega: f64, gamma: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.kernel.len()];
        self.kernel.unit_bcf(omega, gamma, &mut out);
        out
    }

    fn residual_of(&self, units: &[Vec<Complex64>], s: &[f64]) -> Vec<f64> {
        let n = self.target.len();
        let mut r = vec![0.0; 2 * n];
        for j in 0..n {
            let mut c = -self.target[j];
            for (u, &sk) in units.iter().zip(s) {
                c += sk * u[j];
            }
            r[j] = self.sqrt_w[j] * c.re;
            r[n + j] = self.sqrt_w[j] * c.im;
        }
        r
    }
}

impl Problem for FitProblem<'_> {
    fn residuals(&self, x: &[f64]) -> Option<Vec<f64>> {
        let (omega, gamma, s) = self.layout.expand(x)?;
        let units: Vec<Vec<Complex64>> = (0..omega.len()).map(|i| self.unit(omega[i], gamma[i])).collect();
        Some(self.residual_of(&units, &s))
    }

    fn jacobian(&self, x: &[f64], r: &[f64]) -> DMatrix<f64> {
        let layout = self.layout;
        let k = layout.k;
        let m = r.len();
        let n = self.target.len();
        let mut jac = DMatrix::zeros(m, x.len());
        let (omega, gamma, _) = layout.expand(x).expect("jacobian at a feasible point");
        let units: Vec<Vec<Complex64>> = (0..k).map(|i| self.unit(omega[i], gamma[i])).collect();

        // central differences in Ω and Γ, recomputing only the moved peak
        let shape_params = if k == 1 { 1 } else { 2 * k };
        for p in 0..shape_params {
            let h = 1e-6 * x[p].abs().max(1.0);
            let mut column = vec![0.0; m];
            let mut ok = true;
            for (sign, xs) in [(1.0, x[p] + h), (-1.0, x[p] - h)] {
                let mut xp = x.to_vec();
                xp[p] = xs;
                let Some((om, ga, sp)) = layout.expand(&xp) else {
                    ok = false;
                    break;
                };
                let peak = if k == 1 { 0 } else { p % k };
                let mut us = units.clone();
                us[peak] = self.unit(om[peak], ga[peak]);
                let rp = self.residual_of(&us, &sp);
                for (c, v) in column.iter_mut().zip(&rp) {
                    *c += sign * v / (2.0 * h);
                }
            }
            if !ok {
                // one-sided at a constraint edge
                let mut xp = x.to_vec();
                xp[p] += h;
                let sign = if layout.expand(&xp).is_some() { 1.0 } else { -1.0 };
                xp[p] = x[p] + sign * h;
                if let Some((om, ga, sp)) = layout.expand(&xp) {
                    let peak = if k == 1 { 0 } else { p % k };
                    let mut us = units.clone();
                    us[peak] = self.unit(om[peak], ga[peak]);
                    let rp = self.residual_of(&us, &sp);
                    for (i, c) in column.iter_mut().enumerate() {
                        *c = sign * (rp[i] - r[i]) / h;
                    }
                } else {
                    column.iter_mut().for_each(|c| *c = 0.0);
                }
            }
            for (i, c) in column.into_iter().enumerate() {
                jac[(i, p)] = c;
            }
        }

        // free weights enter linearly; the first and last weights absorb the change
        if k > 2 {
            let (wa, wb) = (omega[0], omega[k - 1]);
            for (jf, i) in layout.free().enumerate() {
                let db = -(omega[i] - wa) / (wb - wa);
                let da = -1.0 - db;
                let col = 2 * k + jf;
                for j in 0..n {
                    let d = units[i][j] + da * units[0][j] + db * units[k - 1][j];
                    jac[(j, col)] = self.sqrt_w[j] * d.re;
                    jac[(n + j, col)] = self.sqrt_w[j] * d.im;
                }
            }
        }
        jac
    }
}
