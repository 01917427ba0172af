//! Small dense Levenberg–Marquardt solver with forward-difference Jacobians.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iters: usize,
    /// Relative cost decrease below which the fit is considered converged.
    pub ftol: f64,
    /// Relative step size below which the fit is considered converged.
    pub xtol: f64,
    /// Relative perturbation used for finite differences.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            ftol: 1e-14,
            xtol: 1e-12,
            fd_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub x: Vec<f64>,
    /// `½‖r‖²` at `x`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `(JᵀJ)⁻¹` at the solution when it exists.
    pub jtj_inverse: Option<DMatrix<f64>>,
}

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn jacobian(f: &impl Fn(&[f64]) -> Option<Vec<f64>>, x: &[f64], r0: &[f64], h: f64) -> Option<DMatrix<f64>> {
    let mut j = DMatrix::zeros(r0.len(), x.len());
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        let dx = h * x[k].abs().max(1.0);
        xp[k] = x[k] + dx;
        let rp = f(&xp)?;
        xp[k] = x[k];
        for i in 0..r0.len() {
            j[(i, k)] = (rp[i] - r0[i]) / dx;
        }
    }
    Some(j)
}

/// Minimises `½‖f(x)‖²`. `f` returns `None` for parameter vectors outside its
/// domain; such trial steps are rejected like cost increases.
pub fn minimize(f: impl Fn(&[f64]) -> Option<Vec<f64>>, x0: &[f64], opts: LmOptions) -> Option<LmResult> {
    let mut x = x0.to_vec();
    let mut r = f(&x)?;
    let mut cost = cost_of(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = jacobian(&f, &x, &r, opts.fd_step)?;

    while iterations < opts.max_iters {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * DVector::from_column_slice(&r);
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..x.len() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-30);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if let Some(rn) = f(&xn) {
                let cn = cost_of(&rn);
                if cn.is_finite() && cn <= cost {
                    let dcost = cost - cn;
                    let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let small_step = step.norm() <= opts.xtol * (xnorm + opts.xtol);
                    x = xn;
                    r = rn;
                    cost = cn;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if dcost <= opts.ftol * cost || small_step || cost == 0.0 {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: a stationary point
            converged = g.norm() <= 1e-8 * (1.0 + cost.sqrt());
            break;
        }
        if converged {
            break;
        }
        jac = jacobian(&f, &x, &r, opts.fd_step)?;
    }
    let jac = jacobian(&f, &x, &r, opts.fd_step)?;
    let jtj_inverse = (jac.transpose() * &jac).try_inverse();
    Some(LmResult {
        x,
        cost,
        iterations,
        converged,
        jtj_inverse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_an_exponential() {
        let t: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.5 * (-1.3 * t).exp() + 0.2).collect();
        let f = |p: &[f64]| Some(t.iter().zip(&y).map(|(t, y)| p[0] * (-p[1] * t).exp() + p[2] - y).collect());
        let res = minimize(f, &[1.0, 0.5, 0.0], LmOptions::default()).unwrap();
        assert!(res.converged);
        assert!((res.x[0] - 2.5).abs() < 1e-7 && (res.x[1] - 1.3).abs() < 1e-7 && (res.x[2] - 0.2).abs() < 1e-7);
    }

    #[test]
    fn rosenbrock() {
        let f = |p: &[f64]| Some(vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]]);
        let res = minimize(f, &[-1.2, 1.0], LmOptions::default()).unwrap();
        assert!((res.x[0] - 1.0).abs() < 1e-6 && (res.x[1] - 1.0).abs() < 1e-6, "{:?}", res.x);
    }
}
