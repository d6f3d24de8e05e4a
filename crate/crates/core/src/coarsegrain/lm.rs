//! Bounded Levenberg-Marquardt for small dense least-squares problems.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the relative cost decrease of an accepted step is below this.
    pub ftol: f64,
    /// Stop when the relative step size is below this.
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 300, ftol: 1e-12, xtol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub x: Vec<f64>,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
}

/// A residual vector with a Jacobian. `residuals` returns `None` where the model
/// is infeasible; such trial points are rejected.
pub trait Problem {
    fn residuals(&self, x: &[f64]) -> Option<Vec<f64>>;
    /// Column-major Jacobian at a feasible point.
    fn jacobian(&self, x: &[f64], r: &[f64]) -> DMatrix<f64>;
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimize ‖r(x)‖² over the box [lower, upper] by projected damped Gauss-Newton steps.
pub fn minimize(p: &dyn Problem, x0: &[f64], lower: &[f64], upper: &[f64], opts: LmOptions) -> Option<LmResult> {
    let n = x0.len();
    let mut x: Vec<f64> = (0..n).map(|i| x0[i].clamp(lower[i], upper[i])).collect();
    let mut r = p.residuals(&x)?;
    let mut f = cost(&r);
    let initial_cost = f;
    let mut mu = 1e-3;
    let mut iterations = 0;
    if n == 0 {
        return Some(LmResult { x, cost: f, initial_cost, iterations });
    }
    let mut jac = p.jacobian(&x, &r);
    while iterations < opts.max_iterations {
        iterations += 1;
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * rv;
        let mut accepted = false;
        let mut tiny_step = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += mu * jtj[(i, i)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                mu *= 4.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let trial: Vec<f64> = (0..n).map(|i| (x[i] + step[i]).clamp(lower[i], upper[i])).collect();
            let moved: f64 = (0..n).map(|i| (trial[i] - x[i]).powi(2)).sum::<f64>().sqrt();
            let size: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if moved <= opts.xtol * (size + opts.xtol) {
                tiny_step = true;
                break;
            }
            match p.residuals(&trial) {
                Some(rt) if cost(&rt) < f => {
                    let ft = cost(&rt);
                    let rel = (f - ft) / f.max(1e-300);
                    x = trial;
                    r = rt;
                    f = ft;
                    mu = (mu / 3.0).max(1e-12);
                    accepted = true;
                    if rel < opts.ftol {
                        tiny_step = true;
                    }
                    break;
                }
                _ => mu *= 2.0,
            }
        }
        if !accepted || tiny_step {
            break;
        }
        jac = p.jacobian(&x, &r);
    }
    Some(LmResult { x, cost: f, initial_cost, iterations })
}
