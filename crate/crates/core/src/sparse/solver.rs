//! ℓ1-regularised reconstruction in a sparsifying basis.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::basis::{SparseBasis, Transform};
use super::measurement::MeasurementSystem;
use super::shrink;
use crate::error::{Error, Result};
use crate::grid::WignerGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Monotone accelerated proximal gradient with backtracking on
    /// `λ‖w‖₁ + ½‖𝔸𝔹w − H‖²`.
    L1Min,
    /// Landweber update on the grid followed by soft thresholding of its
    /// basis coefficients, fixed step.
    IterativeThreshold,
}

impl SolverKind {
    fn key(&self) -> &'static str {
        match self {
            SolverKind::L1Min => "l1_min",
            SolverKind::IterativeThreshold => "iterative_threshold",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub max_iters: usize,
    /// Gradient step in units of `1/L`, where `L` is the power-iteration
    /// estimate of `‖𝔸‖²`. Must stay below 2 for `IterativeThreshold`.
    pub step: f64,
    pub lambda: f64,
    /// Required relative data residual `‖𝔸W − H‖/‖H‖`.
    pub tol: f64,
    /// Iterations without improving on the best objective before giving up.
    #[serde(default = "default_patience")]
    pub patience: usize,
}

fn default_patience() -> usize {
    50
}

/// Relative change of the iterate below which a run is stationary.
const STALL: f64 = 1e-7;
const MAX_BACKTRACKS: usize = 60;

#[derive(Deserialize)]
struct DefaultEntry {
    max_iters: usize,
    step: f64,
    lambda: f64,
    tol: f64,
}

fn defaults_table() -> &'static serde_json::Value {
    static TABLE: OnceLock<serde_json::Value> = OnceLock::new();
    TABLE.get_or_init(|| serde_json::from_str(include_str!("defaults.json")).expect("bundled solver defaults"))
}

impl SolverConfig {
    /// Stored defaults for a solver and basis.
    pub fn defaults(kind: SolverKind, basis: &SparseBasis) -> Self {
        let e: DefaultEntry = serde_json::from_value(defaults_table()[kind.key()][basis.name()].clone())
            .expect("bundled solver defaults cover every solver and basis");
        Self {
            kind,
            max_iters: e.max_iters,
            step: e.step,
            lambda: e.lambda,
            tol: e.tol,
            patience: default_patience(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.patience == 0 {
            return Err(Error::invalid("max_iters and patience must be positive"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid(format!("step must be > 0, got {}", self.step)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub solver: SolverKind,
    pub basis: SparseBasis,
    pub iterations: usize,
    /// Objective after each iteration, starting from the zero iterate.
    pub objective: Vec<f64>,
    pub relative_residual: f64,
    /// Estimate of `‖𝔸‖²`.
    pub lipschitz: f64,
    /// Absolute step in use at the end.
    pub final_step: f64,
    pub backtracks: usize,
    /// Stationary and within `tol` of the data.
    pub converged: bool,
}

impl SolveDiagnostics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diagnostics serialise")
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub grid: WignerGrid,
    pub diagnostics: SolveDiagnostics,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn l1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

fn half_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
}

fn rel_change(new: &[f64], old: &[f64]) -> f64 {
    let d: f64 = new.iter().zip(old).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    d / norm(new).max(1e-300)
}

pub fn solve(sys: &MeasurementSystem, basis: &SparseBasis, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    if sys.rhs.len() != sys.matrix.rows {
        return Err(Error::invalid("measurement system has no profiles attached"));
    }
    if sys.matrix.rows >= sys.matrix.cols {
        return Err(Error::invalid(format!(
            "{} measurements for {} unknowns is not an under-determined system",
            sys.matrix.rows, sys.matrix.cols
        )));
    }
    let t = basis.transform(sys.size_m)?;
    let lip = sys.matrix.norm_sq_estimate(100) * 1.01;
    if !(lip > 0.0) {
        return Err(Error::Numerical("measurement matrix is zero".into()));
    }
    let (values, mut diag) = match cfg.kind {
        SolverKind::L1Min => l1_min(sys, &t, cfg, lip)?,
        SolverKind::IterativeThreshold => iterative_threshold(sys, &t, cfg, lip)?,
    };
    diag.basis = *basis;
    diag.relative_residual = sys.relative_residual(&values);
    diag.converged = diag.converged && diag.relative_residual <= cfg.tol;
    Ok(SolveResult {
        grid: WignerGrid::with_values(sys.size_m, sys.extent, values)?,
        diagnostics: diag,
    })
}

fn diagnostics(kind: SolverKind, lip: f64) -> SolveDiagnostics {
    SolveDiagnostics {
        solver: kind,
        basis: SparseBasis::Dct2d,
        iterations: 0,
        objective: Vec::new(),
        relative_residual: f64::NAN,
        lipschitz: lip,
        final_step: 0.0,
        backtracks: 0,
        converged: false,
    }
}

fn l1_min(sys: &MeasurementSystem, t: &Transform, cfg: &SolverConfig, lip: f64) -> Result<(Vec<f64>, SolveDiagnostics)> {
    let a = &sys.matrix;
    let h = &sys.rhs;
    let fwd = |w: &[f64]| a.mul_vec(&t.synthesis(w));
    let k = t.coeff_len();
    let mut diag = diagnostics(cfg.kind, lip);

    let mut x = vec![0.0; k];
    let mut ax = vec![0.0; a.rows];
    let mut fx = half_sq_dist(&ax, h);
    let mut y = x.clone();
    let mut ay = ax.clone();
    let mut theta: f64 = 1.0;
    let mut step = cfg.step / lip;
    diag.objective.push(fx);

    for it in 1..=cfg.max_iters {
        let resid: Vec<f64> = ay.iter().zip(h).map(|(p, q)| p - q).collect();
        let grad = t.analysis(&a.mul_t_vec(&resid));
        let fy = half_sq_dist(&ay, h);
        let (z, az) = loop {
            let z: Vec<f64> = y.iter().zip(&grad).map(|(v, g)| shrink(v - step * g, step * cfg.lambda)).collect();
            let az = fwd(&z);
            let d: Vec<f64> = z.iter().zip(&y).map(|(p, q)| p - q).collect();
            let bound = fy + dot(&grad, &d) + dot(&d, &d) / (2.0 * step);
            if half_sq_dist(&az, h) <= bound * (1.0 + 1e-12) {
                break (z, az);
            }
            diag.backtracks += 1;
            if diag.backtracks > MAX_BACKTRACKS {
                return Err(Error::Numerical("step backtracking did not terminate".into()));
            }
            step *= 0.5;
        };
        let fz = cfg.lambda * l1(&z) + half_sq_dist(&az, h);
        if !fz.is_finite() {
            return Err(Error::Divergence(format!("objective became {fz} at iteration {it}")));
        }
        let moved = rel_change(&z, &y);
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let (x_new, ax_new, f_new) = if fz <= fx { (z.clone(), az.clone(), fz) } else { (x.clone(), ax.clone(), fx) };
        let c1 = theta / theta_next;
        let c2 = (theta - 1.0) / theta_next;
        let comb = |zv: &[f64], xn: &[f64], xo: &[f64]| -> Vec<f64> {
            zv.iter()
                .zip(xn)
                .zip(xo)
                .map(|((zz, n), o)| n + c1 * (zz - n) + c2 * (n - o))
                .collect()
        };
        y = comb(&z, &x_new, &x);
        ay = comb(&az, &ax_new, &ax);
        x = x_new;
        ax = ax_new;
        fx = f_new;
        theta = theta_next;
        diag.objective.push(fx);
        diag.iterations = it;
        if moved < STALL && it > 5 {
            diag.converged = true;
            break;
        }
    }
    diag.final_step = step;
    Ok((t.synthesis(&x), diag))
}

fn iterative_threshold(
    sys: &MeasurementSystem,
    t: &Transform,
    cfg: &SolverConfig,
    lip: f64,
) -> Result<(Vec<f64>, SolveDiagnostics)> {
    if cfg.step >= 2.0 {
        return Err(Error::invalid(format!(
            "step {} exceeds the stability limit 2/L of the Lipschitz estimate",
            cfg.step
        )));
    }
    let a = &sys.matrix;
    let h = &sys.rhs;
    let step = cfg.step / lip;
    let mut diag = diagnostics(cfg.kind, lip);
    diag.final_step = step;

    let mut x = vec![0.0; sys.size_m * sys.size_m];
    let mut ax = vec![0.0; a.rows];
    let mut best = half_sq_dist(&ax, h);
    let mut since_best = 0;
    diag.objective.push(best);

    for it in 1..=cfg.max_iters {
        let resid: Vec<f64> = ax.iter().zip(h).map(|(p, q)| p - q).collect();
        let back = a.mul_t_vec(&resid);
        let landweber: Vec<f64> = x.iter().zip(&back).map(|(v, g)| v - step * g).collect();
        let w: Vec<f64> = t.analysis(&landweber).into_iter().map(|c| shrink(c, step * cfg.lambda)).collect();
        let x_new = t.synthesis(&w);
        ax = a.mul_vec(&x_new);
        let f = cfg.lambda * l1(&t.analysis(&x_new)) + half_sq_dist(&ax, h);
        if !f.is_finite() {
            return Err(Error::Divergence(format!("objective became {f} at iteration {it}")));
        }
        diag.objective.push(f);
        diag.iterations = it;
        if f < best {
            best = f;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                return Err(Error::Divergence(format!(
                    "objective has not improved for {} iterations (at {it}: {f:.6e} vs best {best:.6e})",
                    cfg.patience
                )));
            }
        }
        let moved = rel_change(&x_new, &x);
        x = x_new;
        if moved < STALL && it > 5 {
            diag.converged = true;
            break;
        }
    }
    Ok((x, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{wigner_eval, GaussianParams};
    use crate::sparse::basis::dct2_synthesis;
    use crate::sparse::build_measurement;
    use crate::tomography::{fbp, gaussian_sinogram, refit_gaussian};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn angles(n: usize) -> Vec<f64> {
        (0..n).map(|i| 180.0 * i as f64 / n as f64).collect()
    }

    fn displaced_squeezed_thermal() -> GaussianParams {
        GaussianParams::from_parts(0.71, Complex64::new(0.16, -0.13), Complex64::new(0.55, 0.25)).unwrap()
    }

    fn system_for(p: &GaussianParams, n: usize) -> (MeasurementSystem, WignerGrid) {
        let truth = wigner_eval(p, 101, None).unwrap();
        let s = gaussian_sinogram(p, &angles(n), 101, truth.extent).unwrap();
        let sys = build_measurement(&angles(n), 101, truth.extent)
            .unwrap()
            .with_sinogram(&s)
            .unwrap();
        (sys, truth)
    }

    #[test]
    fn defaults_cover_all_combinations() {
        for kind in [SolverKind::L1Min, SolverKind::IterativeThreshold] {
            for b in [SparseBasis::Dct2d, SparseBasis::daubechies()] {
                SolverConfig::defaults(kind, &b).validate().unwrap();
            }
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let (sys, _) = system_for(&GaussianParams::vacuum(), 3);
        let mut cfg = SolverConfig::defaults(SolverKind::IterativeThreshold, &SparseBasis::Dct2d);
        cfg.step = 2.5;
        assert!(solve(&sys, &SparseBasis::Dct2d, &cfg).unwrap_err().is_validation());
        cfg.step = -1.0;
        assert!(solve(&sys, &SparseBasis::Dct2d, &cfg).is_err());
        let empty = build_measurement(&angles(3), 101, 4.0).unwrap();
        let cfg = SolverConfig::defaults(SolverKind::L1Min, &SparseBasis::Dct2d);
        assert!(solve(&empty, &SparseBasis::Dct2d, &cfg).is_err());
    }

    #[test]
    fn exact_sparsity_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let m = 101;
        let mut c = vec![0.0; m * m];
        let mut placed = 0;
        while placed < 20 {
            let i = rng.random_range(0..8) * m + rng.random_range(0..8);
            if c[i] == 0.0 {
                c[i] = rng.random_range(0.5..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
                placed += 1;
            }
        }
        let truth = dct2_synthesis(&c, m, 4.0).unwrap();
        let mut sys = build_measurement(&angles(9), m, 4.0).unwrap();
        // profiles of a signed test pattern are not densities, so bypass the sinogram checks
        sys.rhs = sys.project(&truth).unwrap();
        let cfg = SolverConfig {
            lambda: 1e-6,
            max_iters: 20000,
            tol: 1e-4,
            ..SolverConfig::defaults(SolverKind::L1Min, &SparseBasis::Dct2d)
        };
        let r = solve(&sys, &SparseBasis::Dct2d, &cfg).unwrap();
        let e = r.grid.nrmse(&truth).unwrap();
        assert!(e <= 1e-3, "nrmse {e}, iters {}", r.diagnostics.iterations);
    }

    #[test]
    fn l1_objective_is_monotone() {
        let (sys, _) = system_for(&displaced_squeezed_thermal(), 9);
        let cfg = SolverConfig {
            max_iters: 200,
            step: 4.0,
            ..SolverConfig::defaults(SolverKind::L1Min, &SparseBasis::Dct2d)
        };
        let r = solve(&sys, &SparseBasis::Dct2d, &cfg).unwrap();
        assert!(r.diagnostics.backtracks > 0);
        for w in r.diagnostics.objective[5..].windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn nine_angles_reconstruct_the_state() {
        let p = displaced_squeezed_thermal();
        let (sys, truth) = system_for(&p, 9);
        for kind in [SolverKind::L1Min, SolverKind::IterativeThreshold] {
            let cfg = SolverConfig::defaults(kind, &SparseBasis::Dct2d);
            let r = solve(&sys, &SparseBasis::Dct2d, &cfg).unwrap();
            let e = r.grid.nrmse(&truth).unwrap();
            assert!(e < 0.05, "{kind:?}: {e}");
            assert!(r.diagnostics.relative_residual <= cfg.tol, "{:?}", r.diagnostics.relative_residual);
            let q = refit_gaussian(&r.grid).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
            assert!(rel(q.n_thermal, p.n_thermal) < 0.1);
            assert!(rel(q.squeeze.r(), p.squeeze.r()) < 0.1);
            assert!(rel(q.alpha.norm(), p.alpha.norm()) < 0.1);
        }
    }

    #[test]
    fn dense_sampling_agrees_with_fbp() {
        let p = displaced_squeezed_thermal();
        let (sys, truth) = system_for(&p, 36);
        let s = gaussian_sinogram(&p, &angles(36), 101, truth.extent).unwrap();
        let f = fbp(&s, 101, truth.extent).unwrap();
        let r = solve(&sys, &SparseBasis::Dct2d, &SolverConfig::defaults(SolverKind::L1Min, &SparseBasis::Dct2d)).unwrap();
        assert!(r.grid.nrmse(&f).unwrap() <= 0.05);
    }

    /// Energy of `w` outside the ellipse `dᵀ Σ⁻¹ d ≤ 25` of the true state.
    fn energy_outside(w: &WignerGrid, p: &GaussianParams) -> f64 {
        let g = crate::gaussian::covariance(p);
        let inv = g.cov.try_inverse().unwrap();
        let mut out = 0.0;
        let mut total = 0.0;
        for ip in 0..w.size_m {
            for ix in 0..w.size_m {
                let d = nalgebra::Vector2::new(w.coord(ix), w.coord(ip)) - g.mean;
                let v = w.at(ix, ip).powi(2);
                total += v;
                if (d.transpose() * inv * d)[0] > 25.0 {
                    out += v;
                }
            }
        }
        out / total
    }

    #[test]
    #[ignore = "not reproduced: db4/3-level leaves less energy outside the ellipse than the DCT"]
    fn dct_has_fewer_spurious_features_than_wavelets() {
        let p = displaced_squeezed_thermal();
        let (sys, _) = system_for(&p, 9);
        let outside = |b: SparseBasis| {
            let r = solve(&sys, &b, &SolverConfig::defaults(SolverKind::L1Min, &b)).unwrap();
            energy_outside(&r.grid, &p)
        };
        let dct = outside(SparseBasis::Dct2d);
        let dwt = outside(SparseBasis::daubechies());
        assert!(dct < dwt, "dct {dct:.3e} wavelet {dwt:.3e}");
    }

    /// The search that produced the bundled defaults.
    #[test]
    #[ignore = "parameter search, minutes"]
    fn lambda_search() {
        let p = displaced_squeezed_thermal();
        let (sys, truth) = system_for(&p, 9);
        for b in [SparseBasis::Dct2d, SparseBasis::daubechies()] {
            for kind in [SolverKind::L1Min, SolverKind::IterativeThreshold] {
                for lambda in [1e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3] {
                    let cfg = SolverConfig { lambda, ..SolverConfig::defaults(kind, &b) };
                    let t0 = std::time::Instant::now();
                    match solve(&sys, &b, &cfg) {
                        Ok(r) => println!(
                            "{} {:?} {lambda:e}: nrmse {:.4} outside {:.2e} resid {:.2e} iters {} conv {} {:.1}s",
                            b.name(), kind, r.grid.nrmse(&truth).unwrap(), energy_outside(&r.grid, &p),
                            r.diagnostics.relative_residual, r.diagnostics.iterations, r.diagnostics.converged,
                            t0.elapsed().as_secs_f64()
                        ),
                        Err(e) => println!("{} {:?} {lambda:e}: {e}", b.name(), kind),
                    }
                }
            }
        }
    }

    #[test]
    fn diagnostics_serialise() {
        let (sys, _) = system_for(&GaussianParams::vacuum(), 5);
        let cfg = SolverConfig {
            max_iters: 10,
            ..SolverConfig::defaults(SolverKind::L1Min, &SparseBasis::daubechies())
        };
        let r = solve(&sys, &SparseBasis::daubechies(), &cfg).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.diagnostics.to_json()).unwrap();
        assert_eq!(v["solver"], "l1_min");
        assert_eq!(v["basis"]["kind"], "daubechies");
        assert_eq!(v["objective"].as_array().unwrap().len(), 11);
    }
}
