//! Detector chain: beam-splitter photon statistics, their inversion to
//! quadrature statistics, unit conversions, the thermometer lineshape and
//! its calibration.

pub mod calibration;
pub mod faddeeva;
pub mod units;
pub mod voigt;

use std::f64::consts::{FRAC_PI_2, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::gaussian::{MomentSet, QuadratureStats};

pub use calibration::{apply_calibration, calibrate, CalibratedStats, CalibrationCurves, CalibrationSample, synthetic_samples};
pub use units::{db_to_linear, homodyne_photon_number, thermal_occupation};
pub use voigt::{fit_voigt, voigt_reflection, Spectrum, Sweep, VoigtFit, VoigtParams};

/// Beam splitter and line parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub gamma_t: f64,
    pub eta0_db: f64,
    pub eta1_db: f64,
    pub f0_hz: f64,
    pub fwhm_hz: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            gamma_t: 0.49,
            eta0_db: -6.5,
            eta1_db: -3.4,
            f0_hz: 8.43e9,
            fwhm_hz: 1.33e8,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [
            ("gamma_t", self.gamma_t),
            ("eta0_db", self.eta0_db),
            ("eta1_db", self.eta1_db),
            ("f0_hz", self.f0_hz),
            ("fwhm_hz", self.fwhm_hz),
        ] {
            ensure_finite(n, v)?;
        }
        check_gamma(self.gamma_t)?;
        if self.f0_hz <= 0.0 || self.fwhm_hz <= 0.0 {
            return Err(Error::invalid("f0_hz and fwhm_hz must be > 0"));
        }
        Ok(())
    }
}

fn check_gamma(g: f64) -> Result<()> {
    if g > 0.0 && g < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("transmissivity must be in (0,1), got {g}")))
    }
}

fn check_beta2(b: f64) -> Result<()> {
    if b.is_finite() && b > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("|beta|^2 must be > 0, got {b}")))
    }
}

/// Mean and variance of the photon number at the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonStats {
    pub mean: f64,
    pub variance: f64,
}

/// Large-|β| photon statistics.
///
/// `quad` holds the statistics of `X_{φ+90}` for homodyne phase `φ` and
/// `n_a` the mean photon number of the input.
pub fn combined_stats_approx(quad: &QuadratureStats, n_a: f64, gamma_t: f64, beta2: f64) -> Result<PhotonStats> {
    check_gamma(gamma_t)?;
    check_beta2(beta2)?;
    ensure_finite("n_a", n_a)?;
    let g = gamma_t;
    Ok(PhotonStats {
        mean: g * n_a + (1.0 - g) * beta2 + (2.0 * g * (1.0 - g) * beta2).sqrt() * quad.mean,
        variance: (1.0 - g) * beta2 * ((1.0 - g) + 2.0 * g * quad.variance),
    })
}

/// Exact photon statistics for a coherent homodyne field `β = |β|e^{iφ}`,
/// written in terms of the input moments.
pub fn combined_stats_exact(m: &MomentSet, gamma_t: f64, beta: Complex64) -> Result<PhotonStats> {
    check_gamma(gamma_t)?;
    ensure_finite("beta.re", beta.re)?;
    ensure_finite("beta.im", beta.im)?;
    m.check_invariants(1e-9)?;
    let g = gamma_t;
    let b = beta.norm();
    let b2 = beta.norm_sqr();
    let phi = beta.arg();
    let x_mean = m.quad_mean_rad(phi + FRAC_PI_2);
    let x_var = m.quad_var_rad(phi + FRAC_PI_2);
    let n_a = m.mean_number();
    let var_n = m.number_variance();
    let e = Complex64::from_polar(1.0, phi);

    let mean = g * n_a + (1.0 - g) * b2 + (2.0 * g * (1.0 - g)).sqrt() * b * x_mean;
    let third = Complex64::i() * g * (2.0 * m.m_adada * e - 2.0 * m.m_adaa * e.conj());
    let variance = (1.0 - g) * b2 * ((1.0 - g) + 2.0 * g * x_var)
        + g * g * var_n
        + g * (1.0 - g) * n_a
        + (g * (1.0 - g)).sqrt() * b * (third.re + SQRT_2 * (1.0 - 2.0 * g * n_a) * x_mean);
    Ok(PhotonStats { mean, variance })
}

fn wrap_deg(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    if w >= 360.0 - 1e-9 {
        0.0
    } else {
        w
    }
}

/// Rejects angle sets that do not sample a full period uniformly.
pub(crate) fn check_uniform_coverage(angles_deg: &[f64], period: f64) -> Result<()> {
    let n = angles_deg.len();
    if n < 2 {
        return Err(Error::invalid("need at least two angles"));
    }
    let mut a: Vec<f64> = angles_deg.iter().map(|x| x.rem_euclid(period)).collect();
    a.sort_by(f64::total_cmp);
    let step = period / n as f64;
    for i in 0..n {
        let next = if i + 1 < n { a[i + 1] } else { a[0] + period };
        if (next - a[i] - step).abs() > 1e-6 * period {
            return Err(Error::invalid(format!(
                "angles must uniformly cover {period} degrees; gap after {:.4} is {:.4}, expected {:.4}",
                a[i],
                next - a[i],
                step
            )));
        }
    }
    Ok(())
}

/// Inverts the large-|β| statistics to quadrature statistics.
///
/// Input angles are homodyne phases `φ`; output angles are the measured
/// quadrature angles `φ + 90°`, wrapped into `[0°, 360°)`. The mean is
/// obtained after subtracting the φ-average of `⟨n_c⟩`, so the input must
/// cover a full period uniformly.
pub fn extract_quadratures(
    series: &[(f64, PhotonStats)],
    cfg: &ChainConfig,
    beta2: f64,
) -> Result<Vec<QuadratureStats>> {
    cfg.validate()?;
    check_beta2(beta2)?;
    for (a, s) in series {
        ensure_finite("angle", *a)?;
        ensure_finite("photon mean", s.mean)?;
        ensure_finite("photon variance", s.variance)?;
    }
    let angles: Vec<f64> = series.iter().map(|(a, _)| *a).collect();
    check_uniform_coverage(&angles, 360.0)?;
    let g = cfg.gamma_t;
    let avg = series.iter().map(|(_, s)| s.mean).sum::<f64>() / series.len() as f64;
    let mean_scale = (2.0 * g * (1.0 - g) * beta2).sqrt();
    series
        .iter()
        .map(|(a, s)| {
            let variance = (s.variance / ((1.0 - g) * beta2) - (1.0 - g)) / (2.0 * g);
            if !(variance > 0.0) {
                return Err(Error::Numerical(format!(
                    "non-positive extracted variance {variance:.4} at homodyne angle {a} deg"
                )));
            }
            Ok(QuadratureStats {
                angle_deg: wrap_deg(a + 90.0),
                mean: (s.mean - avg) / mean_scale,
                variance,
            })
        })
        .collect()
}
