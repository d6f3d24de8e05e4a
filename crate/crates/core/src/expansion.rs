//! Closed-form correlation function of a Lorentzian peak.
//!
//! For T > 0 the correlation function of one antisymmetrized Lorentzian is a sum of
//! two damped complex exponentials (the peak poles) and a series of real decaying
//! terms at the bosonic frequencies ν_n = 2πn k_BT. At T = 0 the series becomes an
//! integral over ν, evaluated here with a fixed rule. All rates are in cm⁻¹ and
//! enter as e^{−rate·2πc·t}.

use crate::model::Lorentzian;
use crate::quad::{self, Rule};
use crate::units::{angular, thermal_energy};
use num_complex::Complex64;
use std::f64::consts::PI;

/// One term w·e^{−z·2πc·t} of a correlation function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTerm {
    /// cm⁻²
    pub weight: Complex64,
    /// cm⁻¹; real part is the decay, imaginary part the oscillation frequency.
    pub rate: Complex64,
}

impl ExpTerm {
    pub fn eval(&self, t_fs: f64) -> Complex64 {
        self.weight * (-self.rate * angular(t_fs)).exp()
    }

    /// Second-order lineshape ∫₀^t ds ∫₀^s C(u) du of this term.
    pub fn lineshape(&self, t_fs: f64) -> Complex64 {
        let tau = angular(t_fs);
        let z = self.rate;
        let x = z * tau;
        if x.norm() < 1e-4 {
            // series of (x − 1 + e^{−x})/z²
            return self.weight * tau * tau * (0.5 - x / 6.0 + x * x / 24.0);
        }
        self.weight * (x - 1.0 + (-x).exp()) / (z * z)
    }
}

/// Bose function of a complex argument, n(z) = 1/(e^{z/k_BT} − 1).
pub fn bose_complex(z: Complex64, temperature: f64) -> Complex64 {
    if temperature <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let x = z / thermal_energy(temperature);
    if x.re > 700.0 {
        return Complex64::new(0.0, 0.0);
    }
    1.0 / (x.exp() - 1.0)
}

/// The two peak-pole terms of a Lorentzian at temperature T.
pub fn lorentz_poles(l: &Lorentzian, temperature: f64) -> [ExpTerm; 2] {
    let g2 = l.weight();
    let p = Complex64::new(l.omega, -l.gamma);
    let n = bose_complex(p, temperature);
    [
        ExpTerm { weight: g2 * (1.0 + n), rate: Complex64::new(l.gamma, l.omega) },
        ExpTerm { weight: g2 * n.conj(), rate: Complex64::new(l.gamma, -l.omega) },
    ]
}

/// n-th bosonic frequency 2πn k_BT in cm⁻¹.
pub fn matsubara_frequency(n: usize, temperature: f64) -> f64 {
    2.0 * PI * n as f64 * thermal_energy(temperature)
}

/// ν/D(ν) with D = (Ω²+Γ²−ν²)² + 4Ω²ν².
fn nu_over_d(omega: f64, gamma: f64, nu: f64) -> f64 {
    let r2 = omega * omega + gamma * gamma;
    let d = (r2 - nu * nu).powi(2) + 4.0 * omega * omega * nu * nu;
    nu / d
}

/// A = 4ΩSΓ(Ω²+Γ²)/π, the ω→0 slope of J times (Ω²+Γ²)².
fn slope_factor(l: &Lorentzian) -> f64 {
    4.0 * l.omega * l.gamma * l.weight() / PI
}

/// Weight of the n-th bosonic term, −2πA k_BT ν_n/D(ν_n) (negative).
pub fn matsubara_weight(l: &Lorentzian, n: usize, temperature: f64) -> f64 {
    let nu = matsubara_frequency(n, temperature);
    -2.0 * PI * thermal_energy(temperature) * slope_factor(l) * nu_over_d(l.omega, l.gamma, nu)
}

/// Weight of the real term at bosonic frequency ν carrying quadrature weight `q`
/// (q = 2πk_BT for a Matsubara term).
pub(crate) fn bosonic_weight(l: &Lorentzian, nu: f64, q: f64) -> f64 {
    -q * slope_factor(l) * nu_over_d(l.omega, l.gamma, nu)
}

/// Exponential representation with `n_explicit` bosonic terms kept and the rest
/// collapsed into a white-noise remainder Σ_{n>M} w_n/ν_n (cm⁻¹).
#[derive(Debug, Clone)]
pub struct LorentzExpansion {
    pub poles: [ExpTerm; 2],
    pub matsubara: Vec<ExpTerm>,
    pub markov_remainder: f64,
}

pub fn lorentz_expansion(l: &Lorentzian, temperature: f64, n_explicit: usize) -> LorentzExpansion {
    let poles = lorentz_poles(l, temperature);
    if temperature <= 0.0 {
        // The T = 0 branch cut has no discrete terms; only its integrated strength is kept.
        let rule = zero_temperature_rule(l.omega.max(l.gamma));
        let rem: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&nu, &w)| -w * slope_factor(l) * nu_over_d(l.omega, l.gamma, nu) / nu)
            .sum();
        return LorentzExpansion { poles, matsubara: vec![], markov_remainder: rem };
    }
    let matsubara = (1..=n_explicit)
        .map(|n| ExpTerm {
            weight: Complex64::new(matsubara_weight(l, n, temperature), 0.0),
            rate: Complex64::new(matsubara_frequency(n, temperature), 0.0),
        })
        .collect();
    let last = n_explicit + 100_000;
    let mut rem = 0.0;
    let mut term = 0.0;
    for n in n_explicit + 1..=last {
        term = matsubara_weight(l, n, temperature) / matsubara_frequency(n, temperature);
        rem += term;
    }
    // terms fall off as n⁻⁴
    rem += term * last as f64 / 3.0;
    LorentzExpansion { poles, matsubara, markov_remainder: rem }
}

/// ν-rule for the zero-temperature branch cut, scaled to frequencies up to `scale`.
pub(crate) fn zero_temperature_rule(scale: f64) -> Rule {
    let mut b = vec![0.0];
    let mut x = scale / 64.0;
    while x < 16.0 * scale {
        b.push(x);
        x *= 2.0;
    }
    b.push(16.0 * scale);
    let mut rule = Rule::composite(&b, 32);
    rule.extend(Rule::tail(16.0 * scale, 32));
    rule
}

/// Precomputed time-dependence for evaluating unit-Huang-Rhys Lorentzian correlation
/// functions on a fixed grid, for many (Ω, Γ).
#[derive(Debug, Clone)]
pub struct LorentzKernel {
    tau: Vec<f64>,
    temperature: f64,
    /// (ν, quadrature weight) of the explicit bosonic terms.
    nodes: Vec<(f64, f64)>,
    /// e^{−ν_m τ_j}, row-major by node.
    decay: Vec<f64>,
    /// Σ_{n>N} e^{−ν_n τ}/ν_n³ and Σ e^{−ν_n τ}/ν_n⁵ (finite T only).
    tail3: Vec<f64>,
    tail5: Vec<f64>,
}

impl LorentzKernel {
    /// `omega_scale` bounds the peak frequencies that will be evaluated.
    pub fn new(times_fs: &[f64], temperature: f64, omega_scale: f64) -> Self {
        let tau: Vec<f64> = times_fs.iter().map(|&t| angular(t)).collect();
        let mut nodes = Vec::new();
        let mut tail3 = vec![0.0; tau.len()];
        let mut tail5 = vec![0.0; tau.len()];
        if temperature > 0.0 {
            let nu1 = matsubara_frequency(1, temperature);
            let n0 = ((20.0 * omega_scale / nu1).ceil() as usize).max(64);
            for n in 1..=n0 {
                nodes.push((nu1 * n as f64, nu1));
            }
            for (j, &t) in tau.iter().enumerate() {
                let (mut s3, mut s5) = (0.0, 0.0);
                let mut n = n0 + 1;
                loop {
                    let nu = nu1 * n as f64;
                    let e = (-nu * t).exp();
                    let a = e / (nu * nu * nu);
                    s3 += a;
                    s5 += a / (nu * nu);
                    if a < 1e-18 * s3 || n > n0 + 200_000 {
                        if n > n0 + 200_000 {
                            // e^{−ντ} ≈ 1 here: Σ_{n>N} n⁻³ ≈ 1/(2N²)
                            let nf = n as f64;
                            s3 += 1.0 / (2.0 * nf * nf * nu1.powi(3));
                        }
                        break;
                    }
                    n += 1;
                }
                tail3[j] = s3;
                tail5[j] = s5;
            }
        } else {
            let rule = zero_temperature_rule(omega_scale);
            nodes = rule.nodes.iter().copied().zip(rule.weights.iter().copied()).collect();
        }
        let mut decay = Vec::with_capacity(nodes.len() * tau.len());
        for &(nu, _) in &nodes {
            decay.extend(tau.iter().map(|&t| (-nu * t).exp()));
        }
        LorentzKernel { tau, temperature, nodes, decay, tail3, tail5 }
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// Correlation function of a Lorentzian with S = 1, written into `out`.
    pub fn unit_bcf(&self, omega: f64, gamma: f64, out: &mut [Complex64]) {
        assert_eq!(out.len(), self.tau.len());
        let l = Lorentzian { omega, hr: 1.0, gamma };
        let [p0, p1] = lorentz_poles(&l, self.temperature);
        for (o, &t) in out.iter_mut().zip(&self.tau) {
            let damp = (-gamma * t).exp();
            let ph = Complex64::from_polar(damp, -omega * t);
            *o = p0.weight * ph + p1.weight * ph.conj();
        }
        let a = slope_factor(&l);
        let n_t = self.tau.len();
        for (m, &(nu, q)) in self.nodes.iter().enumerate() {
            let c = -a * q * nu_over_d(omega, gamma, nu);
            let row = &self.decay[m * n_t..(m + 1) * n_t];
            for (o, &e) in out.iter_mut().zip(row) {
                o.re += c * e;
            }
        }
        if self.temperature > 0.0 {
            let q = matsubara_frequency(1, self.temperature);
            let second = 2.0 * (gamma * gamma - omega * omega);
            for (j, o) in out.iter_mut().enumerate() {
                o.re += -a * q * (self.tail3[j] + second * self.tail5[j]);
            }
        }
    }
}

/// Closed-form correlation function of one Lorentzian at the given times.
pub fn lorentz_bcf(l: &Lorentzian, temperature: f64, times_fs: &[f64]) -> Vec<Complex64> {
    let k = LorentzKernel::new(times_fs, temperature, l.omega.max(l.gamma));
    let mut out = vec![Complex64::new(0.0, 0.0); times_fs.len()];
    k.unit_bcf(l.omega, l.gamma, &mut out);
    for v in &mut out {
        *v *= l.hr;
    }
    out
}

/// ∫_W^∞ J(ω) e^{−iωt} dω for one Lorentzian, exact through the exponential integral.
///
/// Beyond W ≫ k_BT the thermal factor is 1 to machine precision, so this is the
/// whole high-frequency tail of the correlation function.
pub fn lorentz_tail(l: &Lorentzian, cutoff: f64, t_fs: f64) -> Complex64 {
    let pre = l.weight() / PI;
    let (o, g, w) = (l.omega, l.gamma, cutoff);
    if t_fs == 0.0 {
        let v = (g / (w - o)).atan() - (g / (w + o)).atan();
        return Complex64::new(pre * v, 0.0);
    }
    let tau = angular(t_fs);
    // Γ/((ω−a)²+Γ²) = [1/(ω−q) − 1/(ω−q*)]/2i with q = a + iΓ, and
    // ∫_W^∞ e^{−iωτ}/(ω−q) dω = e^{−iWτ}·e^{z}E₁(z), z = iτ(W−q).
    let f = |a: f64, s: f64| {
        let q = Complex64::new(a, s * g);
        let z = Complex64::new(0.0, tau) * (w - q);
        crate::special::scaled_e1(z)
    };
    let bracket = (f(o, 1.0) - f(o, -1.0)) - (f(-o, 1.0) - f(-o, -1.0));
    let phase = Complex64::from_polar(1.0, -w * tau);
    pre * phase * bracket / Complex64::new(0.0, 2.0)
}

/// ∫_lo^hi J(ω) e^{−iωt} dω by adaptive quadrature, for checking tails.
#[doc(hidden)]
pub fn lorentz_band_quadrature(l: &Lorentzian, lo: f64, hi: f64, t_fs: f64) -> Complex64 {
    let tau = angular(t_fs);
    let re = |w: f64| l.j(w) * (w * tau).cos();
    let im = |w: f64| -l.j(w) * (w * tau).sin();
    let breaks = quad::refine_breaks(&[lo, hi], (4.0 / tau.max(1e-12)).min(hi - lo));
    let a = quad::adaptive(&re, &breaks, 1e-12, 1e-16).unwrap().value;
    let b = quad::adaptive(&im, &breaks, 1e-12, 1e-16).unwrap().value;
    Complex64::new(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::j_coth;

    fn brute_bcf(l: &Lorentzian, temperature: f64, t: f64) -> Complex64 {
        // ∫₀^W J(coth cos − i sin) on fine panels plus the exact tail
        let tau = angular(t);
        let w_hi = 40_000.0;
        let mut b = vec![0.0];
        for k in [-40.0, -10.0, -3.0, -1.0, 0.0, 1.0, 3.0, 10.0, 40.0] {
            b.push(l.omega + k * l.gamma);
        }
        let b = quad::normalize_breaks(b, 0.0, w_hi);
        let b = quad::refine_breaks(&b, 20.0);
        let rule = Rule::composite(&b, 32);
        let mut acc = Complex64::new(0.0, 0.0);
        for (&w, &q) in rule.nodes.iter().zip(&rule.weights) {
            let jc = j_coth(l.j(w), l.j_over_omega(w), w, temperature);
            acc += q * Complex64::new(jc * (w * tau).cos(), -l.j(w) * (w * tau).sin());
        }
        acc + lorentz_tail(l, w_hi, t)
    }

    #[test]
    fn closed_form_matches_frequency_integral() {
        for &(o, s, g) in &[(247.0, 0.056, 53.0), (1000.0, 0.2093, 265.44), (763.0, 0.133, 76.0)] {
            let l = Lorentzian::new(o, s, g).unwrap();
            for &temp in &[77.0, 300.0] {
                let times = [0.0, 0.5, 3.0, 20.0, 100.0, 250.0];
                let c = lorentz_bcf(&l, temp, &times);
                let scale = c[0].norm();
                for (k, &t) in times.iter().enumerate() {
                    let b = brute_bcf(&l, temp, t);
                    assert!((c[k] - b).norm() < 2e-8 * scale, "Ω={o} T={temp} t={t}: {} vs {}", c[k], b);
                }
            }
        }
    }

    #[test]
    fn zero_temperature_closed_form() {
        let l = Lorentzian::new(500.0, 0.1, 40.0).unwrap();
        let times = [0.0, 1.0, 10.0, 80.0];
        let c = lorentz_bcf(&l, 0.0, &times);
        for (k, &t) in times.iter().enumerate() {
            let b = brute_bcf(&l, 0.0, t);
            assert!((c[k] - b).norm() < 1e-7 * c[0].norm(), "t={t}");
        }
    }

    #[test]
    fn tail_differences_match_band_quadrature() {
        let l = Lorentzian::new(1000.0, 0.2, 265.0).unwrap();
        for &t in &[0.0, 0.01, 0.3, 2.0] {
            let a = lorentz_tail(&l, 6000.0, t) - lorentz_tail(&l, 30000.0, t);
            let b = lorentz_band_quadrature(&l, 6000.0, 30000.0, t);
            assert!((a - b).norm() < 1e-9 * lorentz_tail(&l, 6000.0, 0.0).norm(), "t={t}: {a} {b}");
        }
        // the tail vanishes as the cutoff grows
        assert!(lorentz_tail(&l, 1e7, 0.3).norm() < 1e-6 * lorentz_tail(&l, 6000.0, 0.0).norm());
    }

    #[test]
    fn expansion_reproduces_value_at_origin() {
        let l = Lorentzian::new(247.0, 0.056, 53.0).unwrap();
        let e = lorentz_expansion(&l, 77.0, 4000);
        let c0: Complex64 = e.poles.iter().chain(&e.matsubara).map(|x| x.weight).sum();
        let exact = lorentz_bcf(&l, 77.0, &[0.0])[0];
        assert!((c0 - exact).norm() < 1e-6 * exact.norm(), "{c0} {exact}");
        assert!(e.markov_remainder < 0.0);
    }

    #[test]
    fn term_lineshape_is_double_integral() {
        let term = ExpTerm { weight: Complex64::new(3.0, -1.0), rate: Complex64::new(40.0, 700.0) };
        let t = 37.0;
        // Simpson double integral
        let n = 4000;
        let h = t / n as f64;
        let mut inner = Complex64::new(0.0, 0.0);
        let mut outer = Complex64::new(0.0, 0.0);
        let mut prev = term.eval(0.0);
        for k in 1..=n {
            let cur = term.eval(k as f64 * h);
            let mid = term.eval((k as f64 - 0.5) * h);
            let next_inner = inner + (prev + 4.0 * mid + cur) * h / 6.0;
            outer += (inner + next_inner) * 0.5 * h;
            inner = next_inner;
            prev = cur;
        }
        let expect = term.lineshape(t) / (angular(1.0) * angular(1.0));
        assert!((outer - expect).norm() < 1e-5 * expect.norm(), "{outer} {expect}");
    }
}
