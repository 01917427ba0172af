//! Linear least-squares Gaussian-state regression from a few quadrature angles.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::gaussian::{GaussianParams, QuadratureStats, SqueezeParam};

/// Trigonometric fits `⟨X_φ⟩ = c cos φ + s sin φ` and
/// `⟨(ΔX_φ)²⟩ = a0 + a2c cos 2φ + a2s sin 2φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigFit {
    pub mean_coeffs: (f64, f64),
    pub var_coeffs: (f64, f64, f64),
}

impl TrigFit {
    pub fn modulation(&self) -> f64 {
        self.var_coeffs.1.hypot(self.var_coeffs.2)
    }

    pub fn mean_at(&self, angle_deg: f64) -> f64 {
        let p = angle_deg.to_radians();
        self.mean_coeffs.0 * p.cos() + self.mean_coeffs.1 * p.sin()
    }

    pub fn var_at(&self, angle_deg: f64) -> f64 {
        let p = 2.0 * angle_deg.to_radians();
        self.var_coeffs.0 + self.var_coeffs.1 * p.cos() + self.var_coeffs.2 * p.sin()
    }

    /// State whose quadrature statistics follow this fit. Sub-vacuum
    /// symplectic eigenvalues are clamped to `n̄_T = 0`.
    pub fn to_params(&self) -> Result<(GaussianParams, bool)> {
        let (a0, _, _) = self.var_coeffs;
        let amp = self.modulation();
        if !(a0 > amp) {
            return Err(Error::UnphysicalFit {
                reason: format!("variance offset {a0:.4} does not exceed modulation {amp:.4}"),
                fit: *self,
            });
        }
        let nn = (a0 * a0 - amp * amp).sqrt();
        let r = 0.5 * (amp / a0).atanh();
        let theta = if amp > 0.0 {
            (-self.var_coeffs.2).atan2(-self.var_coeffs.1)
        } else {
            0.0
        };
        let clamped = nn < 0.5;
        let alpha = Complex64::new(self.mean_coeffs.0, self.mean_coeffs.1) / SQRT_2;
        let p = GaussianParams::new((nn - 0.5).max(0.0), SqueezeParam::new(r, theta)?, alpha)?;
        Ok((p, clamped))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlsResult {
    pub params: GaussianParams,
    pub fit: TrigFit,
    /// Per-angle `(mean, variance)` residuals, data minus fit.
    pub residuals: Vec<(f64, f64)>,
    /// True when the fitted state was below the vacuum bound and clamped.
    pub clamped: bool,
}

fn solve(design: DMatrix<f64>, y: DVector<f64>, what: &str) -> Result<Vec<f64>> {
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-9 * smax) {
        return Err(Error::invalid(format!("{what}: degenerate angle set (singular design matrix)")));
    }
    Ok(svd
        .solve(&y, 0.0)
        .map_err(|e| Error::Numerical(e.to_string()))?
        .iter()
        .copied()
        .collect())
}

/// Fits the two trigonometric models independently and maps them to a state.
pub fn lls_fit(stats: &[QuadratureStats]) -> Result<LlsResult> {
    if stats.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 angles, got {}", stats.len())));
    }
    for s in stats {
        ensure_finite("angle", s.angle_deg)?;
        ensure_finite("mean", s.mean)?;
        ensure_finite("variance", s.variance)?;
    }
    let n = stats.len();
    let phi: Vec<f64> = stats.iter().map(|s| s.angle_deg.to_radians()).collect();
    let mc = solve(
        DMatrix::from_fn(n, 2, |i, j| if j == 0 { phi[i].cos() } else { phi[i].sin() }),
        DVector::from_iterator(n, stats.iter().map(|s| s.mean)),
        "mean system",
    )?;
    let vc = solve(
        DMatrix::from_fn(n, 3, |i, j| match j {
            0 => 1.0,
            1 => (2.0 * phi[i]).cos(),
            _ => (2.0 * phi[i]).sin(),
        }),
        DVector::from_iterator(n, stats.iter().map(|s| s.variance)),
        "variance system",
    )?;
    let fit = TrigFit {
        mean_coeffs: (mc[0], mc[1]),
        var_coeffs: (vc[0], vc[1], vc[2]),
    };
    let residuals = stats
        .iter()
        .map(|s| (s.mean - fit.mean_at(s.angle_deg), s.variance - fit.var_at(s.angle_deg)))
        .collect();
    let (params, clamped) = fit.to_params()?;
    Ok(LlsResult {
        params,
        fit,
        residuals,
        clamped,
    })
}
