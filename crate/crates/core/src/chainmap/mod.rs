//! Chain mapping: orthogonal-polynomial recurrence of a (thermalized) measure,
//! truncation for a time horizon, and the star form of the truncated chain.

use crate::bcf::{bcf_distance, CorrelationFunction};
use crate::csvio::{read_table, write_table, Metadata};
use crate::error::{Error, Result};
use crate::model::SpectralDensityModel;
use crate::quad::{self, Rule};
use crate::units::{angular, bose};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Hard limit on chain length in searches.
pub const MAX_CHAIN: usize = 1024;

/// A discrete measure Σ w_i δ(ω − x_i), usually a quadrature of a density.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Measure {
    pub fn from_points(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::Config("measure needs matching, nonempty nodes and weights".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("measure weights must be finite and nonnegative".into()));
        }
        Ok(Measure { nodes, weights })
    }

    /// Composite Gauss-Legendre discretization of `density` on `support`: 64 equal
    /// panels, split further at `breaks` and to at most `max_width`.
    pub fn from_density(
        density: &dyn Fn(f64) -> f64,
        support: (f64, f64),
        breaks: &[f64],
        max_width: f64,
    ) -> Result<Self> {
        let (lo, hi) = support;
        if !(hi > lo) {
            return Err(Error::Config(format!("empty support [{lo}, {hi}]")));
        }
        let mut b: Vec<f64> = (0..=64).map(|k| lo + (hi - lo) * k as f64 / 64.0).collect();
        b.extend(breaks.iter().copied().filter(|x| *x > lo && *x < hi));
        let b = quad::refine_breaks(&quad::normalize_breaks(b, lo, hi), max_width);
        let rule = Rule::composite(&b, 32);
        let weights: Vec<f64> = rule.nodes.iter().zip(&rule.weights).map(|(&x, &w)| w * density(x)).collect();
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("density is not finite on the support".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Domain("density is negative on the support".into()));
        }
        Measure::from_points(rule.nodes, weights)
    }

    /// The thermalized measure J_β(ω)dω of `model` on `support`, deltas included
    /// as point masses at ±ω_k. At T = 0 only the positive axis carries weight.
    pub fn thermalized(model: &SpectralDensityModel, temperature: f64, support: (f64, f64)) -> Result<Self> {
        if temperature < 0.0 {
            return Err(Error::Domain(format!("temperature must be >= 0, got {temperature}")));
        }
        let density = |w: f64| {
            if temperature > 0.0 {
                model.thermalized_unchecked(temperature, w)
            } else if w > 0.0 {
                model.j(w)
            } else {
                0.0
            }
        };
        let mut breaks = Vec::new();
        if model.has_continuum() {
            for b in model.breakpoints() {
                breaks.push(b);
                breaks.push(-b);
            }
        }
        let width = ((support.1 - support.0) / 64.0).min(2.5);
        let mut m = if model.has_continuum() {
            Measure::from_density(&density, support, &breaks, width)?
        } else {
            Measure { nodes: vec![], weights: vec![] }
        };
        for d in &model.deltas {
            let w2s = d.omega * d.omega * d.hr;
            let n = if temperature > 0.0 { bose(d.omega, temperature) } else { 0.0 };
            for (x, w) in [(d.omega, w2s * (n + 1.0)), (-d.omega, w2s * n)] {
                if w > 0.0 && x >= support.0 && x <= support.1 {
                    m.nodes.push(x);
                    m.weights.push(w);
                }
            }
        }
        Measure::from_points(m.nodes, m.weights)
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// ∫ω^k dμ.
    pub fn moment(&self, k: i32) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * x.powi(k)).sum()
    }

    fn support_points(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }
}

/// Site frequencies α_n, squared hoppings β_n (β₀ = total weight) and the
/// system coupling κ = √β₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCoefficients {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl ChainCoefficients {
    pub fn new(alphas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        let c = ChainCoefficients { alphas, betas };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.alphas.len() != self.betas.len() {
            return Err(Error::validation("chain", "alphas and betas must be nonempty and of equal length"));
        }
        if let Some(k) = self.betas.iter().position(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::validation(format!("betas[{k}]"), "must be positive"));
        }
        if let Some(k) = self.alphas.iter().position(|a| !a.is_finite()) {
            return Err(Error::validation(format!("alphas[{k}]"), "must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn kappa(&self) -> f64 {
        self.betas[0].sqrt()
    }

    /// First `n` sites.
    pub fn truncated(&self, n: usize) -> ChainCoefficients {
        let n = n.min(self.len());
        ChainCoefficients { alphas: self.alphas[..n].to_vec(), betas: self.betas[..n].to_vec() }
    }

    pub fn to_csv(&self, extra: Metadata) -> String {
        let meta = extra.with("kind", "chain").with("kappa_cm1", self.kappa());
        let rows = (0..self.len()).map(|n| vec![n as f64, self.alphas[n], self.betas[n]]);
        write_table(&meta, &["n", "alpha_cm1", "beta_cm2"], rows)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let t = read_table(text)?;
        ChainCoefficients::new(t.column("alpha_cm1")?, t.column("beta_cm2")?)
    }
}

/// Incremental Lanczos tridiagonalization of diag(nodes) with start vector √w,
/// with full reorthogonalization.
#[derive(Debug, Clone)]
pub struct Lanczos {
    nodes: Vec<f64>,
    basis: Vec<Vec<f64>>,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    exhausted: bool,
}

impl Lanczos {
    pub fn new(measure: &Measure) -> Result<Self> {
        let total = measure.total();
        if !(total > 0.0) {
            return Err(Error::Domain("measure has no weight".into()));
        }
        let q: Vec<f64> = measure.weights.iter().map(|w| (w / total).sqrt()).collect();
        Ok(Lanczos { nodes: measure.nodes.clone(), basis: vec![q], alphas: vec![], betas: vec![total], exhausted: false })
    }

    pub fn coefficients(&self) -> ChainCoefficients {
        let n = self.alphas.len();
        ChainCoefficients { alphas: self.alphas.clone(), betas: self.betas[..n].to_vec() }
    }

    /// Run until `n` coefficients are known or the measure is exhausted.
    pub fn extend_to(&mut self, n: usize, max_points: usize) -> Result<()> {
        while self.alphas.len() < n && !self.exhausted {
            let k = self.alphas.len();
            let q = &self.basis[k];
            let mut v: Vec<f64> = q.iter().zip(&self.nodes).map(|(a, x)| a * x).collect();
            let a: f64 = v.iter().zip(q).map(|(x, y)| x * y).sum();
            self.alphas.push(a);
            for _ in 0..2 {
                for b in &self.basis {
                    let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let norm2: f64 = v.iter().map(|x| x * x).sum();
            let scale = self.nodes.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
            if !norm2.is_finite() {
                return Err(Error::Numeric(format!("recurrence lost orthogonality at index {}", k + 1)));
            }
            if norm2 <= (1e-12 * scale).powi(2) {
                if self.alphas.len() >= max_points {
                    self.exhausted = true;
                    break;
                }
                return Err(Error::Numeric(format!(
                    "recurrence broke down at index {} (beta = {norm2:e})",
                    k + 1
                )));
            }
            let nrm = norm2.sqrt();
            self.betas.push(norm2);
            self.basis.push(v.into_iter().map(|x| x / nrm).collect());
        }
        Ok(())
    }
}

/// Recurrence coefficients of the measure (at most its number of support points).
pub fn lanczos_coefficients(measure: &Measure, n_coeffs: usize) -> Result<ChainCoefficients> {
    if n_coeffs == 0 {
        return Err(Error::Config("need at least one coefficient".into()));
    }
    let mut l = Lanczos::new(measure)?;
    l.extend_to(n_coeffs, measure.support_points())?;
    Ok(l.coefficients())
}

/// Recurrence coefficients of dμ = density(ω)dω on `support`.
pub fn recurrence_coefficients(
    density: &dyn Fn(f64) -> f64,
    support: (f64, f64),
    n_coeffs: usize,
) -> Result<ChainCoefficients> {
    let width = (support.1 - support.0) / 64.0;
    let m = Measure::from_density(density, support, &[], width)?;
    lanczos_coefficients(&m, n_coeffs)
}

/// Star-form discrete modes (ω_j, g_j) of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteEnvironment {
    /// (frequency cm⁻¹, may be negative; coupling cm⁻¹), sorted by frequency.
    pub modes: Vec<(f64, f64)>,
    pub chain_length: usize,
    pub horizon: Option<f64>,
    pub temperature: f64,
}

impl DiscreteEnvironment {
    pub fn total_weight(&self) -> f64 {
        self.modes.iter().map(|(_, g)| g * g).sum()
    }

    pub fn as_measure(&self) -> Result<Measure> {
        Measure::from_points(self.modes.iter().map(|m| m.0).collect(), self.modes.iter().map(|m| m.1 * m.1).collect())
    }

    pub fn to_csv(&self, extra: Metadata) -> String {
        let mut meta = extra
            .with("kind", "discrete-environment")
            .with("chain_length", self.chain_length)
            .with("temperature_K", self.temperature)
            .with("signed_frequencies", true);
        if let Some(h) = self.horizon {
            meta = meta.with("horizon_fs", h);
        }
        write_table(&meta, &["omega_cm1", "g_cm1"], self.modes.iter().map(|&(w, g)| vec![w, g]))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let t = read_table(text)?;
        let omega = t.column("omega_cm1")?;
        let g = t.column("g_cm1")?;
        let num = |k: &str| t.meta.get(k).and_then(|v| v.parse::<f64>().ok());
        Ok(DiscreteEnvironment {
            modes: omega.into_iter().zip(g).collect(),
            chain_length: num("chain_length").map_or(0, |v| v as usize),
            horizon: num("horizon_fs"),
            temperature: num("temperature_K").unwrap_or(0.0),
        })
    }

    /// Delta-component model of the positive-frequency modes, s_j = g_j²/ω_j².
    ///
    /// The star is a vacuum-state environment, so the model is meant for T = 0 use.
    /// Returns the model and the fraction of the total weight that sat at ω ≤ 0
    /// and was dropped.
    pub fn to_model(&self, label: &str) -> Result<(SpectralDensityModel, f64)> {
        let total = self.total_weight();
        let mut deltas = Vec::new();
        let mut dropped = 0.0;
        for &(w, g) in &self.modes {
            if w > 0.0 && g != 0.0 {
                deltas.push(crate::model::Delta::new(w, g * g / (w * w))?);
            } else {
                dropped += g * g;
            }
        }
        let m = SpectralDensityModel::new(label, None, vec![], deltas)?;
        Ok((m, if total > 0.0 { dropped / total } else { 0.0 }))
    }
}

/// Diagonalize the truncated chain; mode couplings are κ times the first
/// component of each eigenvector.
pub fn chain_to_star(chain: &ChainCoefficients) -> Result<DiscreteEnvironment> {
    chain.validate()?;
    let n = chain.len();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = chain.alphas[i];
        if i + 1 < n {
            let b = chain.betas[i + 1].sqrt();
            h[(i, i + 1)] = b;
            h[(i + 1, i)] = b;
        }
    }
    let eig = SymmetricEigen::try_new(h, 1e-15, 10_000)
        .ok_or_else(|| Error::Numeric(format!("eigensolver failed for chain of length {n}")))?;
    let kappa = chain.kappa();
    let mut modes: Vec<(f64, f64)> =
        (0..n).map(|j| (eig.eigenvalues[j], kappa * eig.eigenvectors[(0, j)].abs())).collect();
    modes.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(DiscreteEnvironment { modes, chain_length: n, horizon: None, temperature: 0.0 })
}

/// C(t) = Σ_j g_j² e^{−iω_j t} on `n` points spaced `dt`.
pub fn discrete_bcf(env: &DiscreteEnvironment, dt: f64, n: usize) -> CorrelationFunction {
    let mut values = vec![Complex64::new(0.0, 0.0); n];
    for &(w, g) in &env.modes {
        let g2 = g * g;
        let step = Complex64::from_polar(1.0, -angular(w) * dt);
        let mut ph = Complex64::new(1.0, 0.0);
        for (j, v) in values.iter_mut().enumerate() {
            if j % 256 == 0 {
                ph = Complex64::from_polar(1.0, -angular(w) * dt * j as f64);
            }
            *v += g2 * ph;
            ph *= step;
        }
    }
    CorrelationFunction::new(dt, values, env.temperature, format!("chain-{}", env.chain_length))
}

/// Outcome of a chain-length search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthSearch {
    pub length: usize,
    pub distance: f64,
    /// (length, distance) pairs evaluated, in order.
    pub trace: Vec<(usize, f64)>,
}

/// Smallest chain length whose star BCF is within `tol` of `reference` on [0, τ],
/// using the distance weight of width τ/3. Doubling, then bisection.
pub fn chain_length_for_horizon(
    measure: &Measure,
    reference: &CorrelationFunction,
    tau: f64,
    tol: f64,
) -> Result<LengthSearch> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Domain(format!("tolerance must lie in (0, 1), got {tol}")));
    }
    if !(tau >= reference.dt) {
        return Err(Error::Domain(format!("horizon {tau} fs is shorter than one step")));
    }
    let target = reference.truncated(tau);
    let sigma = tau / 3.0;
    let mut lanczos = Lanczos::new(measure)?;
    let max_points = measure.support_points();
    let mut trace = Vec::new();
    let mut eval = |n: usize, trace: &mut Vec<(usize, f64)>| -> Result<Option<f64>> {
        lanczos.extend_to(n, max_points)?;
        let chain = lanczos.coefficients().truncated(n);
        if chain.len() < n {
            return Ok(None);
        }
        let env = chain_to_star(&chain)?;
        let c = discrete_bcf(&env, target.dt, target.len());
        let d = bcf_distance(&target, &c, sigma)?;
        trace.push((n, d));
        Ok(Some(d))
    };
    let mut hi = 1;
    let mut d_hi;
    loop {
        match eval(hi, &mut trace)? {
            Some(d) if d < tol => {
                d_hi = d;
                break;
            }
            Some(d) if hi >= MAX_CHAIN => {
                return Err(Error::Numeric(format!(
                    "no chain up to {MAX_CHAIN} sites reaches distance {tol} (best {d:.3e})"
                )))
            }
            Some(_) => hi = (hi * 2).min(MAX_CHAIN),
            None => {
                return Err(Error::Numeric(format!(
                    "measure supports only {max_points} sites; distance {tol} not reached"
                )))
            }
        }
    }
    let mut lo = hi / 2;
    if hi > 1 {
        // invariant: lo fails, hi passes
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            match eval(mid, &mut trace)? {
                Some(d) if d < tol => {
                    hi = mid;
                    d_hi = d;
                }
                _ => lo = mid,
            }
        }
    }
    Ok(LengthSearch { length: hi, distance: d_hi, trace })
}
