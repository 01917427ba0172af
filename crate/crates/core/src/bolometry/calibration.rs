//! Calibration curves linking the lineshape to photon statistics: a cubic
//! `⟨n_c⟩(μ)` and an affine `⟨(Δn_c)²⟩(σ²)`.
//!
//! Both polynomials are stored in scaled variables, `u = (μ − mu_ref)/mu_scale`
//! and `s = σ²/sigma2_scale`, with ascending coefficients.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{PhotonStats, VoigtParams};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub voigt: VoigtParams,
    pub stats: PhotonStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurves {
    pub mu_ref_hz: f64,
    pub mu_scale_hz: f64,
    pub n_of_mu: [f64; 4],
    pub sigma2_scale: f64,
    pub var_of_sigma2: [f64; 2],
    /// Calibrated `[min, max]` of μ.
    pub mu_range: [f64; 2],
    /// Calibrated `[min, max]` of σ².
    pub sigma2_range: [f64; 2],
    pub n_residual_rms: f64,
    pub var_residual_rms: f64,
    /// Coefficient covariance of the cubic fit (row-major 4×4).
    pub n_covariance: Vec<f64>,
    /// Coefficient covariance of the affine fit (row-major 2×2).
    pub var_covariance: Vec<f64>,
    /// Whether `⟨n_c⟩(μ)` is strictly monotone over `mu_range`.
    pub monotone: bool,
}

/// Calibrated statistics plus any extrapolation warnings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedStats {
    pub stats: PhotonStats,
    pub warnings: Vec<String>,
}

struct LinearFit {
    coeffs: Vec<f64>,
    covariance: DMatrix<f64>,
    residual_rms: f64,
}

fn least_squares(design: DMatrix<f64>, y: DVector<f64>, what: &str) -> Result<LinearFit> {
    let (n, k) = design.shape();
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::invalid(format!(
            "{what}: design matrix is rank deficient (singular values {smin:.2e}/{smax:.2e}); widen the calibration range"
        )));
    }
    let coeffs = svd.solve(&y, 0.0).map_err(|e| Error::Numerical(e.to_string()))?;
    let resid = &design * &coeffs - &y;
    let rss = resid.norm_squared();
    let dof = (n - k).max(1) as f64;
    let xtx_inv = (design.transpose() * &design)
        .try_inverse()
        .ok_or_else(|| Error::Numerical(format!("{what}: normal matrix not invertible")))?;
    Ok(LinearFit {
        coeffs: coeffs.iter().copied().collect(),
        covariance: xtx_inv * (rss / dof),
        residual_rms: (rss / n as f64).sqrt(),
    })
}

fn span(v: impl Iterator<Item = f64>) -> [f64; 2] {
    v.fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], x| [lo.min(x), hi.max(x)])
}

/// Least-squares calibration from samples with known photon statistics.
pub fn calibrate(samples: &[CalibrationSample]) -> Result<CalibrationCurves> {
    if samples.len() < 8 {
        return Err(Error::invalid(format!("calibration needs >= 8 samples, got {}", samples.len())));
    }
    for s in samples {
        s.voigt.validate()?;
        if !(s.stats.mean.is_finite() && s.stats.variance.is_finite()) {
            return Err(Error::invalid("calibration sample with non-finite photon statistics"));
        }
    }
    let mu_range = span(samples.iter().map(|s| s.voigt.mu_hz));
    let sigma2_range = span(samples.iter().map(|s| s.voigt.sigma2));
    let mu_ref_hz = 0.5 * (mu_range[0] + mu_range[1]);
    let mu_scale_hz = 0.5 * (mu_range[1] - mu_range[0]);
    let sigma2_scale = sigma2_range[1].abs();
    if !(mu_scale_hz > 0.0) || !(sigma2_scale > 0.0) {
        return Err(Error::invalid(
            "calibration design matrix is rank deficient: samples span no range in mu or sigma2",
        ));
    }
    let n = samples.len();
    let us: Vec<f64> = samples.iter().map(|s| (s.voigt.mu_hz - mu_ref_hz) / mu_scale_hz).collect();
    let cubic = least_squares(
        DMatrix::from_fn(n, 4, |i, j| us[i].powi(j as i32)),
        DVector::from_iterator(n, samples.iter().map(|s| s.stats.mean)),
        "cubic n(mu)",
    )?;
    let affine = least_squares(
        DMatrix::from_fn(n, 2, |i, j| (samples[i].voigt.sigma2 / sigma2_scale).powi(j as i32)),
        DVector::from_iterator(n, samples.iter().map(|s| s.stats.variance)),
        "affine var(sigma2)",
    )?;
    if !(affine.coeffs[1] > 0.0) {
        return Err(Error::Numerical(format!(
            "variance calibration slope must be positive, got {}",
            affine.coeffs[1]
        )));
    }
    let n_of_mu = [cubic.coeffs[0], cubic.coeffs[1], cubic.coeffs[2], cubic.coeffs[3]];
    Ok(CalibrationCurves {
        mu_ref_hz,
        mu_scale_hz,
        n_of_mu,
        sigma2_scale,
        var_of_sigma2: [affine.coeffs[0], affine.coeffs[1]],
        mu_range,
        sigma2_range,
        n_residual_rms: cubic.residual_rms,
        var_residual_rms: affine.residual_rms,
        n_covariance: cubic.covariance.transpose().iter().copied().collect(),
        var_covariance: affine.covariance.transpose().iter().copied().collect(),
        monotone: cubic_is_monotone(&n_of_mu, -1.0, 1.0),
    })
}

fn cubic_is_monotone(c: &[f64; 4], lo: f64, hi: f64) -> bool {
    let d = |u: f64| c[1] + 2.0 * c[2] * u + 3.0 * c[3] * u * u;
    let mut pts = vec![lo, hi];
    if c[3] != 0.0 {
        let crit = -c[2] / (3.0 * c[3]);
        if crit > lo && crit < hi {
            pts.push(crit);
        }
    }
    let vals: Vec<f64> = pts.into_iter().map(d).collect();
    vals.iter().all(|&v| v > 0.0) || vals.iter().all(|&v| v < 0.0)
}

impl CalibrationCurves {
    /// Curves used by the synthetic pipeline: `⟨n_c⟩ = 16 − 20u − 2u² − u³`
    /// with `u = (μ − 525 MHz)/25 MHz`, and `⟨(Δn_c)²⟩ = −0.5 + 16·σ²/10¹² Hz²`.
    pub fn reference() -> Self {
        Self {
            mu_ref_hz: 525e6,
            mu_scale_hz: 25e6,
            n_of_mu: [16.0, -20.0, -2.0, -1.0],
            sigma2_scale: 1e12,
            var_of_sigma2: [-0.5, 16.0],
            mu_range: [505e6, 545e6],
            sigma2_range: [0.05e12, 4e12],
            n_residual_rms: 0.0,
            var_residual_rms: 0.0,
            n_covariance: vec![0.0; 16],
            var_covariance: vec![0.0; 4],
            monotone: true,
        }
    }

    pub fn mean_at(&self, mu_hz: f64) -> f64 {
        let u = (mu_hz - self.mu_ref_hz) / self.mu_scale_hz;
        let c = &self.n_of_mu;
        c[0] + u * (c[1] + u * (c[2] + u * c[3]))
    }

    pub fn variance_at(&self, sigma2: f64) -> f64 {
        self.var_of_sigma2[0] + self.var_of_sigma2[1] * sigma2 / self.sigma2_scale
    }

    /// Resonance frequency producing photon mean `n`, searched inside the
    /// calibrated range.
    pub fn mu_for_mean(&self, n: f64) -> Result<f64> {
        if !self.monotone {
            return Err(Error::Numerical("cannot invert a non-monotone n(mu) curve".into()));
        }
        let [mut lo, mut hi] = self.mu_range;
        let (flo, fhi) = (self.mean_at(lo) - n, self.mean_at(hi) - n);
        if flo * fhi > 0.0 {
            return Err(Error::invalid(format!(
                "photon mean {n:.4} outside calibrated span [{:.4}, {:.4}]",
                self.mean_at(lo).min(self.mean_at(hi)),
                self.mean_at(lo).max(self.mean_at(hi))
            )));
        }
        let rising = fhi > flo;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (self.mean_at(mid) - n > 0.0) == rising {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-9 {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn sigma2_for_variance(&self, var: f64) -> Result<f64> {
        let s2 = (var - self.var_of_sigma2[0]) / self.var_of_sigma2[1] * self.sigma2_scale;
        if s2 < 0.0 {
            return Err(Error::invalid(format!("photon variance {var:.4} maps to negative sigma2")));
        }
        Ok(s2)
    }
}

/// Maps fitted lineshape parameters to photon statistics.
pub fn apply_calibration(p: &VoigtParams, c: &CalibrationCurves) -> Result<CalibratedStats> {
    p.validate()?;
    let mut warnings = Vec::new();
    let tol_mu = 1e-9 * c.mu_scale_hz;
    if p.mu_hz < c.mu_range[0] - tol_mu || p.mu_hz > c.mu_range[1] + tol_mu {
        warnings.push(format!(
            "mu {:.6e} Hz outside calibrated range [{:.6e}, {:.6e}]",
            p.mu_hz, c.mu_range[0], c.mu_range[1]
        ));
    }
    let tol_s = 1e-9 * c.sigma2_scale;
    if p.sigma2 < c.sigma2_range[0] - tol_s || p.sigma2 > c.sigma2_range[1] + tol_s {
        warnings.push(format!(
            "sigma2 {:.6e} Hz^2 outside calibrated range [{:.6e}, {:.6e}]",
            p.sigma2, c.sigma2_range[0], c.sigma2_range[1]
        ));
    }
    let variance = c.variance_at(p.sigma2);
    if variance < 0.0 {
        return Err(Error::Numerical(format!(
            "calibrated photon variance is negative ({variance:.4}) at sigma2 {:.4e}",
            p.sigma2
        )));
    }
    Ok(CalibratedStats {
        stats: PhotonStats {
            mean: c.mean_at(p.mu_hz),
            variance,
        },
        warnings,
    })
}

/// Samples of known curves: μ swept evenly over `mu_range`, σ² over
/// `sigma2_range` in a shuffled order, Gaussian noise of standard deviation
/// `noise` on both statistics.
pub fn synthetic_samples(c: &CalibrationCurves, count: usize, noise: f64, seed: u64) -> Result<Vec<CalibrationSample>> {
    if count < 2 {
        return Err(Error::invalid("need at least two calibration samples"));
    }
    let normal = Normal::new(0.0, noise).map_err(|_| Error::invalid(format!("noise must be >= 0, got {noise}")))?;
    let mut rng = rng::stream(seed, "calibration/samples");
    let last = (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            let mu = c.mu_range[0] + i as f64 / last * (c.mu_range[1] - c.mu_range[0]);
            // 7 is coprime to most counts, so the two fits decouple
            let s2 = c.sigma2_range[0] + ((i * 7) % count) as f64 / last * (c.sigma2_range[1] - c.sigma2_range[0]);
            CalibrationSample {
                voigt: VoigtParams::thermometer(mu, s2),
                stats: PhotonStats {
                    mean: c.mean_at(mu) + normal.sample(&mut rng),
                    variance: c.variance_at(s2) + normal.sample(&mut rng),
                },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples_from(c: &CalibrationCurves, count: usize, noise: f64, seed: u64) -> Vec<CalibrationSample> {
        synthetic_samples(c, count, noise, seed).unwrap()
    }

    #[test]
    fn recovers_known_curves_within_three_sigma() {
        let truth = CalibrationCurves::reference();
        let fit = calibrate(&samples_from(&truth, 40, 0.05, 3)).unwrap();
        // same scaled variable as the truth: the sample span equals the reference range
        assert!((fit.mu_ref_hz - truth.mu_ref_hz).abs() < 1.0);
        let su = fit.mu_scale_hz / truth.mu_scale_hz;
        let want = [truth.n_of_mu[0], truth.n_of_mu[1] * su, truth.n_of_mu[2] * su * su, truth.n_of_mu[3] * su.powi(3)];
        for k in 0..4 {
            let sd = fit.n_covariance[k * 4 + k].sqrt();
            assert!((fit.n_of_mu[k] - want[k]).abs() < 3.0 * sd, "n coeff {k}: {} vs {} (sd {sd})", fit.n_of_mu[k], want[k]);
        }
        let ss = fit.sigma2_scale / truth.sigma2_scale;
        let want = [truth.var_of_sigma2[0], truth.var_of_sigma2[1] * ss];
        for k in 0..2 {
            let sd = fit.var_covariance[k * 2 + k].sqrt();
            assert!((fit.var_of_sigma2[k] - want[k]).abs() < 3.0 * sd);
        }
        assert!(fit.monotone);
    }

    #[test]
    fn round_trip_within_fit_residual() {
        let samples = samples_from(&CalibrationCurves::reference(), 20, 0.02, 9);
        let fit = calibrate(&samples).unwrap();
        let mut rss = 0.0;
        for s in &samples {
            let out = apply_calibration(&s.voigt, &fit).unwrap();
            assert!(out.warnings.is_empty(), "{:?}", out.warnings);
            rss += (out.stats.mean - s.stats.mean).powi(2);
        }
        assert!((rss / samples.len() as f64).sqrt() <= fit.n_residual_rms + 1e-12);
    }

    #[test]
    fn identical_mu_is_rank_deficient() {
        let mut s = samples_from(&CalibrationCurves::reference(), 8, 0.0, 1);
        for (i, x) in s.iter_mut().enumerate() {
            x.voigt.mu_hz = if i % 2 == 0 { 520e6 } else { 530e6 };
            x.stats.mean = i as f64;
        }
        let err = calibrate(&s).unwrap_err();
        assert!(err.to_string().contains("rank deficient"), "{err}");
        assert!(calibrate(&s[..5]).is_err());
    }

    #[test]
    fn non_monotone_cubic_is_flagged() {
        let mut bumpy = CalibrationCurves::reference();
        bumpy.n_of_mu = [5.0, 0.0, 4.0, 0.0];
        bumpy.monotone = false;
        let fit = calibrate(&samples_from(&bumpy, 16, 0.0, 2)).unwrap();
        assert!(!fit.monotone);
        assert!(fit.mu_for_mean(6.0).is_err());
    }

    #[test]
    fn identity_curves_pass_through() {
        let id = CalibrationCurves {
            mu_ref_hz: 0.0,
            mu_scale_hz: 1.0,
            n_of_mu: [0.0, 1.0, 0.0, 0.0],
            sigma2_scale: 1.0,
            var_of_sigma2: [0.0, 1.0],
            mu_range: [0.0, 1e9],
            sigma2_range: [0.0, 1e13],
            ..CalibrationCurves::reference()
        };
        let p = VoigtParams::thermometer(5.2e8, 3.3e11);
        let out = apply_calibration(&p, &id).unwrap();
        assert_eq!(out.stats, PhotonStats { mean: 5.2e8, variance: 3.3e11 });
    }

    #[test]
    fn extrapolation_warns_and_negative_variance_errors() {
        let c = CalibrationCurves::reference();
        let out = apply_calibration(&VoigtParams::thermometer(548e6, 1e12), &c).unwrap();
        assert_eq!(out.warnings.len(), 1);
        let err = apply_calibration(&VoigtParams::thermometer(525e6, 0.01e12), &c).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn reference_inverse() {
        let c = CalibrationCurves::reference();
        for n in [1.0, 8.5, 20.0] {
            let mu = c.mu_for_mean(n).unwrap();
            assert!((c.mean_at(mu) - n).abs() < 1e-6);
        }
        let s2 = c.sigma2_for_variance(11.2).unwrap();
        assert!((c.variance_at(s2) - 11.2).abs() < 1e-12);
        assert!(c.mu_for_mean(100.0).is_err());
    }
}
