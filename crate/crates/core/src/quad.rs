//! Quadrature rules shared by the numeric modules.

use crate::error::{Error, Result};
use std::sync::OnceLock;

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (_, d) = legendre_and_derivative(n, z);
                dp = d;
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_and_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

pub(crate) fn gl32() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(32))
}

/// A fixed composite rule: ∫ f ≈ Σ w_i f(x_i).
#[derive(Debug, Clone, Default)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Gauss-Legendre with `order` nodes on every interval between consecutive breakpoints.
    pub fn composite(breaks: &[f64], order: usize) -> Rule {
        let owned;
        let (gx, gw) = if order == 32 {
            let r = gl32();
            (&r.0, &r.1)
        } else {
            owned = gauss_legendre(order);
            (&owned.0, &owned.1)
        };
        let mut rule = Rule::default();
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b <= a {
                continue;
            }
            let h = 0.5 * (b - a);
            let c = 0.5 * (a + b);
            for (x, w) in gx.iter().zip(gw) {
                rule.nodes.push(c + h * x);
                rule.weights.push(h * w);
            }
        }
        rule
    }

    /// Rule for [a, ∞) through ω = a / u, u ∈ (0, 1], with geometric panels in u.
    ///
    /// Weights absorb the Jacobian a/u². Suited to algebraic tails.
    pub fn tail(a: f64, order: usize) -> Rule {
        let ubreaks = [0.0, 1e-4, 1e-3, 1e-2, 0.1, 0.3, 1.0];
        let base = Rule::composite(&ubreaks, order);
        let mut rule = Rule::default();
        for (u, w) in base.nodes.iter().zip(&base.weights) {
            rule.nodes.push(a / u);
            rule.weights.push(w * a / (u * u));
        }
        rule
    }

    pub fn extend(&mut self, other: Rule) {
        self.nodes.extend(other.nodes);
        self.weights.extend(other.weights);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Split every interval of `breaks` so no panel is wider than `max_width`.
pub fn refine_breaks(breaks: &[f64], max_width: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(breaks.len());
    for pair in breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        out.push(a);
        let n = ((b - a) / max_width).ceil().max(1.0) as usize;
        for k in 1..n {
            out.push(a + (b - a) * k as f64 / n as f64);
        }
    }
    if let Some(&last) = breaks.last() {
        out.push(last);
    }
    out
}

/// Sort, clip to [lo, hi] and deduplicate a breakpoint list.
pub fn normalize_breaks(mut breaks: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    breaks.push(lo);
    breaks.push(hi);
    breaks.retain(|b| b.is_finite());
    for b in breaks.iter_mut() {
        *b = b.clamp(lo, hi);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    breaks
}

// Gauss-Kronrod 7-15 abscissae and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Globally adaptive Gauss-Kronrod on the panels given by `breaks`.
///
/// Bisects the panel with the largest error estimate until the total estimate is
/// below `rel_tol·|I|` (or `abs_tol`).
pub fn adaptive(
    f: &dyn Fn(f64) -> f64,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Integral> {
    const MAX_PANELS: usize = 20_000;
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut evaluations = 0;
    for pair in breaks.windows(2) {
        if pair[1] > pair[0] {
            let (v, e) = gk15(f, pair[0], pair[1]);
            evaluations += 15;
            panels.push((pair[0], pair[1], v, e));
        }
    }
    loop {
        let value: f64 = panels.iter().map(|p| p.2).sum();
        let error: f64 = panels.iter().map(|p| p.3).sum();
        if !value.is_finite() {
            return Err(Error::Numeric("non-finite integrand in adaptive quadrature".into()));
        }
        if error <= (rel_tol * value.abs()).max(abs_tol) {
            return Ok(Integral { value, error, evaluations });
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::Numeric(format!(
                "adaptive quadrature did not converge: value {value:e}, error estimate {error:e} after {evaluations} evaluations"
            )));
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (a, b, _, _) = panels.swap_remove(idx);
        let m = 0.5 * (a + b);
        let (v1, e1) = gk15(f, a, m);
        let (v2, e2) = gk15(f, m, b);
        evaluations += 30;
        panels.push((a, m, v1, e1));
        panels.push((m, b, v2, e2));
    }
}

/// Adaptive integral over [breaks[0], ∞): finite panels plus a mapped tail beyond the last break.
pub fn adaptive_to_infinity(
    f: &dyn Fn(f64) -> f64,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Integral> {
    let a = *breaks.last().expect("breakpoints");
    let tail = |u: f64| {
        if u <= 0.0 {
            0.0
        } else {
            let w = a / u;
            f(w) * a / (u * u)
        }
    };
    let head = adaptive(f, breaks, rel_tol, abs_tol)?;
    let ubreaks = [0.0, 1e-3, 1e-2, 0.1, 1.0];
    let t = adaptive(&tail, &ubreaks, rel_tol, abs_tol)?;
    Ok(Integral {
        value: head.value + t.value,
        error: head.error + t.error,
        evaluations: head.evaluations + t.evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(12);
        for deg in 0..24 {
            let num: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((num - exact).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn small_rules_match_closed_form() {
        let (x, w) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(3);
        assert!(x[1].abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_a_narrow_peak() {
        let g = 0.01;
        let f = |x: f64| g / std::f64::consts::PI / ((x - 0.3).powi(2) + g * g);
        let r = adaptive(&f, &[-1.0, 0.3, 1.0], 1e-10, 0.0).unwrap();
        let exact = ((0.7f64 / g).atan() + (1.3f64 / g).atan()) / std::f64::consts::PI;
        assert!((r.value - exact).abs() < 1e-9);
    }

    #[test]
    fn tail_mapping_integrates_algebraic_decay() {
        let f = |x: f64| 1.0 / (x * x * x);
        let r = adaptive_to_infinity(&f, &[1.0, 2.0], 1e-12, 0.0).unwrap();
        assert!((r.value - 0.5).abs() < 1e-11);
        let rule = Rule::tail(2.0, 32);
        assert!((rule.integrate(f) - 0.125).abs() < 1e-12);
    }

    #[test]
    fn refine_breaks_limits_width() {
        let b = refine_breaks(&[0.0, 1.0, 10.0], 2.0);
        assert_eq!(b.first(), Some(&0.0));
        assert_eq!(b.last(), Some(&10.0));
        assert!(b.windows(2).all(|p| p[1] - p[0] <= 2.0 + 1e-12));
    }
}
