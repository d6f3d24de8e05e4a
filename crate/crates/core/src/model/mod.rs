//! Spectral-density models and electronic systems.

mod io;
mod system;

pub use io::{parse_mode_table, parse_model, parse_model_file, ModelDocument};
pub use system::{DisorderSpec, ElectronicSystem};

use crate::error::{Error, Result};
use crate::quad;
use crate::units::{self, j_coth, thermal_energy};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Upper cutoff for the stretched-exponential continuum.
pub const AR_CUTOFF: f64 = 8000.0;

/// Smooth low-frequency continuum J(ω) = S/(s1+s2) Σ s_i ω⁵ e^{−√(ω/ω_i)} / (7!·2·ω_i⁴).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArComponent {
    pub s_total: f64,
    pub s1: f64,
    pub s2: f64,
    /// cm⁻¹
    pub w1: f64,
    /// cm⁻¹
    pub w2: f64,
}

const FACT7: f64 = 5040.0;

impl ArComponent {
    pub fn new(s_total: f64, s1: f64, s2: f64, w1: f64, w2: f64) -> Result<Self> {
        for (name, v) in [("S", s_total), ("s1", s1), ("s2", s2), ("w1", w1), ("w2", w2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("ar.{name}"), format!("must be positive, got {v}")));
            }
        }
        Ok(ArComponent { s_total, s1, s2, w1, w2 })
    }

    /// Frequencies given in meV, as in the usual parametrization.
    pub fn from_mev(s_total: f64, s1: f64, s2: f64, w1_mev: f64, w2_mev: f64) -> Result<Self> {
        Self::new(s_total, s1, s2, units::mev_to_cm1(w1_mev), units::mev_to_cm1(w2_mev))
    }

    fn terms(&self) -> [(f64, f64); 2] {
        [(self.s1, self.w1), (self.s2, self.w2)]
    }

    pub fn j(&self, omega: f64) -> f64 {
        if omega <= 0.0 {
            return 0.0;
        }
        let pre = self.s_total / (self.s1 + self.s2);
        let w5 = omega.powi(5);
        pre * self
            .terms()
            .iter()
            .map(|&(s, wi)| s / (FACT7 * 2.0 * wi.powi(4)) * w5 * (-(omega / wi).sqrt()).exp())
            .sum::<f64>()
    }

    /// Closed-form ∫J/ω dω = S/(s1+s2) Σ s_i·72·ω_i.
    pub fn reorganization_exact(&self) -> f64 {
        self.s_total / (self.s1 + self.s2) * self.terms().iter().map(|&(s, w)| 72.0 * s * w).sum::<f64>()
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        for &(_, w) in &self.terms() {
            for x in [2.0, 4.0, 6.0, 9.0, 13.0, 20.0, 30.0, 45.0, 64.0] {
                b.push(w * x * x);
            }
        }
        quad::normalize_breaks(b, 0.0, AR_CUTOFF)
    }
}

/// Antisymmetrized Lorentzian peak
/// J(ω) = 4ΩSΓ(Ω²+Γ²)ω / (π((ω+Ω)²+Γ²)((ω−Ω)²+Γ²)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lorentzian {
    /// Centre, cm⁻¹.
    pub omega: f64,
    /// Huang-Rhys factor.
    pub hr: f64,
    /// Half-width, cm⁻¹.
    pub gamma: f64,
}

impl Lorentzian {
    pub fn new(omega: f64, hr: f64, gamma: f64) -> Result<Self> {
        let l = Lorentzian { omega, hr, gamma };
        l.validate("lorentzian")?;
        Ok(l)
    }

    pub(crate) fn validate(&self, path: &str) -> Result<()> {
        for (name, v) in [("omega_cm1", self.omega), ("hr", self.hr), ("gamma_cm1", self.gamma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{path}.{name}"), format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// J(ω)/ω, finite at ω = 0.
    pub fn j_over_omega(&self, omega: f64) -> f64 {
        let (o, g) = (self.omega, self.gamma);
        4.0 * o * self.hr * g * (o * o + g * g)
            / (PI * ((omega + o).powi(2) + g * g) * ((omega - o).powi(2) + g * g))
    }

    pub fn j(&self, omega: f64) -> f64 {
        if omega <= 0.0 {
            return 0.0;
        }
        omega * self.j_over_omega(omega)
    }

    /// Residue weight g² = S(Ω²+Γ²), so that J = (g²/π)[Γ/((ω−Ω)²+Γ²) − Γ/((ω+Ω)²+Γ²)].
    pub fn weight(&self) -> f64 {
        self.hr * (self.omega * self.omega + self.gamma * self.gamma)
    }

    /// Exact ∫J/ω dω = ΩS.
    pub fn reorganization(&self) -> f64 {
        self.omega * self.hr
    }

    /// ∫_{ω_lo}^∞ J/ω² dω by quadrature.
    ///
    /// The density is linear at small ω, so this grows like ln(1/ω_lo) as ω_lo → 0;
    /// the nominal `hr` is the finite part used for the total Huang-Rhys factor.
    pub fn hr_above(&self, omega_lo: f64) -> Result<f64> {
        let f = |w: f64| self.j_over_omega(w) / w;
        let mut b = vec![omega_lo];
        for k in [-64.0, -16.0, -4.0, -1.0, 0.0, 1.0, 4.0, 16.0, 64.0] {
            b.push(self.omega + k * self.gamma);
        }
        let hi = self.omega + 100.0 * self.gamma;
        let mut geo = omega_lo;
        while geo < hi {
            b.push(geo);
            geo *= 4.0;
        }
        let breaks = quad::normalize_breaks(b, omega_lo, hi);
        Ok(quad::adaptive_to_infinity(&f, &breaks, 1e-10, 0.0)?.value)
    }

    fn breakpoints(&self, out: &mut Vec<f64>) {
        for k in [-64.0, -16.0, -6.0, -2.0, -1.0, 0.0, 1.0, 2.0, 6.0, 16.0, 64.0] {
            out.push(self.omega + k * self.gamma);
        }
    }
}

/// Discrete undamped mode contributing ω²s δ(ω − ω₀).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub omega: f64,
    pub hr: f64,
}

impl Delta {
    pub fn new(omega: f64, hr: f64) -> Result<Self> {
        let d = Delta { omega, hr };
        d.validate("delta")?;
        Ok(d)
    }

    pub(crate) fn validate(&self, path: &str) -> Result<()> {
        for (name, v) in [("omega_cm1", self.omega), ("hr", self.hr)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{path}.{name}"), format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensityModel {
    pub label: String,
    pub ar: Option<ArComponent>,
    pub lorentzians: Vec<Lorentzian>,
    pub deltas: Vec<Delta>,
}

impl SpectralDensityModel {
    pub fn new(
        label: impl Into<String>,
        ar: Option<ArComponent>,
        lorentzians: Vec<Lorentzian>,
        deltas: Vec<Delta>,
    ) -> Result<Self> {
        let m = SpectralDensityModel { label: label.into(), ar, lorentzians, deltas };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ar.is_none() && self.lorentzians.is_empty() && self.deltas.is_empty() {
            return Err(Error::validation("model", "no components"));
        }
        if let Some(ar) = &self.ar {
            ArComponent::new(ar.s_total, ar.s1, ar.s2, ar.w1, ar.w2)?;
        }
        for (i, l) in self.lorentzians.iter().enumerate() {
            l.validate(&format!("lorentzians[{i}]"))?;
        }
        for (i, d) in self.deltas.iter().enumerate() {
            d.validate(&format!("deltas[{i}]"))?;
        }
        Ok(())
    }

    pub fn single_lorentzian(omega: f64, hr: f64, gamma: f64) -> Result<Self> {
        Self::new(format!("lorentzian-{omega}"), None, vec![Lorentzian::new(omega, hr, gamma)?], vec![])
    }

    pub fn single_delta(omega: f64, hr: f64) -> Result<Self> {
        Self::new(format!("delta-{omega}"), None, vec![], vec![Delta::new(omega, hr)?])
    }

    /// Pointwise density of the continuous parts; deltas are excluded.
    pub fn evaluate_j(&self, omega: f64) -> Result<f64> {
        if omega < 0.0 || omega.is_nan() {
            return Err(Error::Domain(format!("evaluate_j needs omega >= 0, got {omega}")));
        }
        Ok(self.j(omega))
    }

    pub(crate) fn j(&self, omega: f64) -> f64 {
        let ar = self.ar.map_or(0.0, |a| a.j(omega));
        ar + self.lorentzians.iter().map(|l| l.j(omega)).sum::<f64>()
    }

    /// J(ω)/ω of the continuous parts, finite at 0.
    pub(crate) fn j_over_omega(&self, omega: f64) -> f64 {
        let ar = match self.ar {
            Some(a) if omega > 0.0 => a.j(omega) / omega,
            _ => 0.0,
        };
        ar + self.lorentzians.iter().map(|l| l.j_over_omega(omega)).sum::<f64>()
    }

    /// J(ω)·coth(ω/2k_BT) for the continuous parts; J(ω) at T = 0.
    pub(crate) fn j_coth(&self, omega: f64, temperature: f64) -> f64 {
        j_coth(self.j(omega), self.j_over_omega(omega), omega, temperature)
    }

    pub fn has_continuum(&self) -> bool {
        self.ar.is_some() || !self.lorentzians.is_empty()
    }

    /// Panel boundaries on [0, hi] that isolate every peak of the continuum.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.ar.map(|a| a.breakpoints()).unwrap_or_else(|| vec![0.0]);
        for l in &self.lorentzians {
            l.breakpoints(&mut b);
        }
        let hi = self.finite_cutoff();
        quad::normalize_breaks(b, 0.0, hi)
    }

    /// Frequency beyond which the remaining weight is treated as an algebraic tail.
    pub fn finite_cutoff(&self) -> f64 {
        let lmax = self
            .lorentzians
            .iter()
            .map(|l| l.omega + 100.0 * l.gamma)
            .fold(0.0, f64::max);
        if self.ar.is_some() {
            lmax.max(AR_CUTOFF)
        } else {
            lmax.max(1.0)
        }
    }

    /// ∫₀^∞ J(ω)/ω dω plus Σ ω_k s_k.
    pub fn reorganization_energy(&self) -> Result<f64> {
        let mut total = self.deltas.iter().map(|d| d.omega * d.hr).sum::<f64>();
        if self.has_continuum() {
            let f = |w: f64| self.j_over_omega(w);
            let b = self.breakpoints();
            let r = if self.lorentzians.is_empty() {
                quad::adaptive(&f, &b, 1e-9, 0.0)?
            } else {
                quad::adaptive_to_infinity(&f, &b, 1e-9, 0.0)?
            };
            total += r.value;
        }
        Ok(total)
    }

    /// Closed-form reorganization energy (analytic per component).
    pub fn reorganization_exact(&self) -> f64 {
        self.ar.map_or(0.0, |a| a.reorganization_exact())
            + self.lorentzians.iter().map(|l| l.reorganization()).sum::<f64>()
            + self.deltas.iter().map(|d| d.omega * d.hr).sum::<f64>()
    }

    /// Total Huang-Rhys factor.
    ///
    /// The continuum without Lorentzians is integrated as ∫J/ω². A Lorentzian is
    /// Ohmic at small ω, so its ∫J/ω² diverges logarithmically; its nominal `hr`
    /// is used instead (see [`Lorentzian::hr_above`]).
    pub fn huang_rhys_total(&self) -> Result<f64> {
        let mut total: f64 = self.deltas.iter().map(|d| d.hr).sum();
        total += self.lorentzians.iter().map(|l| l.hr).sum::<f64>();
        if let Some(ar) = self.ar {
            let f = |w: f64| if w > 0.0 { ar.j(w) / (w * w) } else { 0.0 };
            total += quad::adaptive(&f, &ar.breakpoints(), 1e-10, 0.0)?.value;
        }
        Ok(total)
    }

    /// Huang-Rhys total with the closed-form continuum value (S of the AR part).
    pub fn huang_rhys_exact(&self) -> f64 {
        self.ar.map_or(0.0, |a| a.s_total)
            + self.lorentzians.iter().map(|l| l.hr).sum::<f64>()
            + self.deltas.iter().map(|d| d.hr).sum::<f64>()
    }

    /// J_β(ω) = sign(ω)·J(|ω|)·(1 + coth(ω/2k_BT))/2 on the whole real line.
    pub fn thermalized_density(&self, temperature: f64, omega: f64) -> Result<f64> {
        if !(temperature > 0.0) {
            return Err(Error::Domain(format!("thermalized density needs T > 0, got {temperature}")));
        }
        Ok(self.thermalized_unchecked(temperature, omega))
    }

    pub(crate) fn thermalized_unchecked(&self, temperature: f64, omega: f64) -> f64 {
        let a = omega.abs();
        let kt = thermal_energy(temperature);
        let x = a / kt;
        if x < 2e-3 {
            // (sign·J + J coth)/2 with coth expanded
            let sj = omega.signum() * self.j(a);
            return 0.5 * (sj + self.j_coth(a, temperature));
        }
        let n = 1.0 / x.exp_m1();
        if omega > 0.0 {
            self.j(a) * (n + 1.0)
        } else {
            self.j(a) * n
        }
    }

    /// Model with only the Lorentzians and deltas.
    pub fn high_frequency_part(&self) -> Option<SpectralDensityModel> {
        if self.lorentzians.is_empty() && self.deltas.is_empty() {
            return None;
        }
        Some(SpectralDensityModel {
            label: format!("{}-hf", self.label),
            ar: None,
            lorentzians: self.lorentzians.clone(),
            deltas: self.deltas.clone(),
        })
    }

    /// One model per component, for additivity checks.
    pub fn components(&self) -> Vec<SpectralDensityModel> {
        let mut out = Vec::new();
        if let Some(ar) = self.ar {
            out.push(SpectralDensityModel { label: "ar".into(), ar: Some(ar), lorentzians: vec![], deltas: vec![] });
        }
        for (i, l) in self.lorentzians.iter().enumerate() {
            out.push(SpectralDensityModel { label: format!("l{i}"), ar: None, lorentzians: vec![*l], deltas: vec![] });
        }
        for (i, d) in self.deltas.iter().enumerate() {
            out.push(SpectralDensityModel { label: format!("d{i}"), ar: None, lorentzians: vec![], deltas: vec![*d] });
        }
        out
    }

    /// Scale every Huang-Rhys weight by `c`.
    pub fn scaled(&self, c: f64) -> SpectralDensityModel {
        let mut m = self.clone();
        if let Some(ar) = m.ar.as_mut() {
            ar.s_total *= c;
        }
        for l in &mut m.lorentzians {
            l.hr *= c;
        }
        for d in &mut m.deltas {
            d.hr *= c;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data;

    fn fmo() -> SpectralDensityModel {
        data::fmo_full().unwrap()
    }

    #[test]
    fn bundled_fmo_shape() {
        let m = fmo();
        assert!(m.ar.is_some());
        assert_eq!(m.lorentzians.len(), 62);
        assert!(m.lorentzians.iter().all(|l| (l.gamma - 5.3088).abs() < 1e-3));
    }

    #[test]
    fn density_vanishes_at_zero() {
        assert_eq!(fmo().evaluate_j(0.0).unwrap(), 0.0);
        assert!(fmo().evaluate_j(-1.0).is_err());
    }

    #[test]
    fn broad_lorentzian_peak_is_near_centre() {
        let m = SpectralDensityModel::single_lorentzian(1000.0, 0.2093, 265.0).unwrap();
        let (mut best, mut arg) = (0.0, 0.0);
        for i in 0..40_000 {
            let w = i as f64 * 0.1;
            let v = m.j(w);
            if v > best {
                best = v;
                arg = w;
            }
        }
        assert!((arg - 1000.0).abs() < 265.0, "argmax {arg}");
    }

    #[test]
    fn low_frequency_is_dominated_by_first_mode() {
        let m = fmo();
        let w = 46.0;
        let first = m.lorentzians[0].j(w);
        let ar = m.ar.unwrap().j(w);
        let others: f64 = m.lorentzians[1..].iter().map(|l| l.j(w)).sum();
        // the lowest mode beats all other modes there; the continuum is still larger
        assert!(first > others, "{first} {others}");
        assert!(first > 0.2 * ar, "{first} {ar}");
    }

    #[test]
    fn delta_reorganization_and_hr() {
        let m = SpectralDensityModel::single_delta(100.0, 0.05).unwrap();
        assert!((m.reorganization_energy().unwrap() - 5.0).abs() < 1e-12);
        assert!((m.huang_rhys_total().unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn fmo_mode_sums() {
        let m = fmo();
        let hf = m.high_frequency_part().unwrap();
        let table: f64 = m.lorentzians.iter().map(|l| l.omega * l.hr).sum();
        let quad = hf.reorganization_energy().unwrap();
        assert!(((quad - table) / table).abs() < 1e-6, "{quad} vs {table}");
        assert!((table - 209.328).abs() < 1e-9);
        let conv = data::fmo_conventional().unwrap();
        let conv_hf = conv.high_frequency_part().unwrap().reorganization_energy().unwrap();
        assert!(((conv_hf - table) / table).abs() < 1e-3);
    }

    #[test]
    fn ar_reorganization_quadrature_vs_refined_grid() {
        let ar = fmo().ar.unwrap();
        let m = SpectralDensityModel::new("ar", Some(ar), vec![], vec![]).unwrap();
        let q = m.reorganization_energy().unwrap();
        // trapezoid on a uniform grid ten times finer than a 0.5 cm⁻¹ baseline
        let h = 0.05;
        let n = (AR_CUTOFF / h) as usize;
        let grid: f64 = (1..n).map(|i| ar.j(i as f64 * h) / (i as f64 * h)).sum::<f64>() * h;
        assert!(((q - grid) / q).abs() < 1e-5, "{q} {grid}");
        assert!(((q - ar.reorganization_exact()) / q).abs() < 1e-8);
    }

    #[test]
    fn ar_huang_rhys_is_its_scale() {
        let ar = fmo().ar.unwrap();
        let m = SpectralDensityModel::new("ar", Some(ar), vec![], vec![]).unwrap();
        let s = m.huang_rhys_total().unwrap();
        assert!((s - 0.29).abs() < 1e-8, "{s}");
    }

    #[test]
    fn lorentzian_huang_rhys_grows_logarithmically_below_peak() {
        let l = Lorentzian::new(247.0, 0.056, 53.0).unwrap();
        let a = l.hr_above(1.0).unwrap();
        let b = l.hr_above(0.01).unwrap();
        let c = l.hr_above(0.0001).unwrap();
        // equal increments per factor 100 in the cutoff
        let slope = l.j_over_omega(0.0);
        assert!(((b - a) - slope * 100f64.ln()).abs() < 1e-4 * slope * 100f64.ln());
        assert!(((c - b) - (b - a)).abs() < 1e-4 * (b - a));
        assert!(a > l.hr);
    }

    #[test]
    fn thermalized_limits() {
        let m = fmo();
        let t = 77.0;
        let w = 5000.0;
        assert!(((m.thermalized_density(t, w).unwrap() - m.j(w)) / m.j(w)).abs() < 1e-12);
        assert!(m.thermalized_density(0.0, 1.0).is_err());
        let at0 = m.thermalized_density(t, 0.0).unwrap();
        let near = m.thermalized_density(t, 1e-6).unwrap();
        assert!(at0 > 0.0 && ((at0 - near) / at0).abs() < 1e-5);
    }

    #[test]
    fn detailed_balance_on_grid() {
        let m = fmo();
        let t = 77.0;
        for i in 1..=1000 {
            let w = i as f64 * 2.0;
            let pos = m.thermalized_density(t, w).unwrap();
            let neg = m.thermalized_density(t, -w).unwrap();
            let expect = (-w / thermal_energy(t)).exp() * pos;
            if expect > 1e-300 {
                assert!(((neg - expect) / expect).abs() < 1e-10, "w={w}");
            }
        }
    }

    #[test]
    fn additivity_over_components() {
        let m = data::fmo_effective().unwrap();
        let parts = m.components();
        let sum: f64 = parts.iter().map(|p| p.reorganization_energy().unwrap()).sum();
        let whole = m.reorganization_energy().unwrap();
        assert!(((sum - whole) / whole).abs() < 1e-8);
        let hsum: f64 = parts.iter().map(|p| p.huang_rhys_total().unwrap()).sum();
        assert!((hsum - m.huang_rhys_total().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn nonnegative_on_dense_grid() {
        for m in [data::fmo_full().unwrap(), data::fmo_effective().unwrap(), data::fmo_conventional().unwrap()] {
            for i in 0..10_000 {
                let w = i as f64 * 0.3;
                assert!(m.j(w) >= 0.0);
            }
        }
    }
}
