//! Closed-form model of single-mode Gaussian states.
//!
//! States are squeezed displaced thermal states `D(α) S(ζ) ρ_T S†(ζ) D†(α)`
//! with `ħ = 1`, so the vacuum quadrature variance is 1/2. The displacement
//! is applied last, hence `⟨a⟩ = α` exactly. Quadratures follow
//! `X_φ = (a† e^{iφ} + a e^{-iφ}) / √2` with `X_0 = x` and `X_90 = p`.
//!
//! Angles are taken in degrees at every public entry point and converted
//! to radians once.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2, TAU};

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::grid::WignerGrid;

/// Squeezing `ζ = r e^{iθ}` with `r ≥ 0` and `θ ∈ [0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezeParam {
    r: f64,
    theta: f64,
}

impl SqueezeParam {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        ensure_finite("squeeze r", r)?;
        ensure_finite("squeeze theta", theta)?;
        if r < 0.0 {
            return Err(Error::invalid(format!("squeeze magnitude must be >= 0, got {r}")));
        }
        Ok(Self {
            r,
            theta: wrap_tau(theta),
        })
    }

    pub fn none() -> Self {
        Self { r: 0.0, theta: 0.0 }
    }

    pub fn from_complex(z: Complex64) -> Result<Self> {
        Self::new(z.norm(), z.arg())
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::from_polar(self.r, self.theta)
    }
}

fn wrap_tau(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// The `(n̄_T, ζ, α)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsJson", into = "ParamsJson")]
pub struct GaussianParams {
    pub n_thermal: f64,
    pub squeeze: SqueezeParam,
    pub alpha: Complex64,
}

#[derive(Serialize, Deserialize)]
struct ParamsJson {
    n_thermal: f64,
    r: f64,
    theta_rad: f64,
    alpha_re: f64,
    alpha_im: f64,
}

impl TryFrom<ParamsJson> for GaussianParams {
    type Error = Error;

    fn try_from(j: ParamsJson) -> Result<Self> {
        GaussianParams::new(
            j.n_thermal,
            SqueezeParam::new(j.r, j.theta_rad)?,
            Complex64::new(j.alpha_re, j.alpha_im),
        )
    }
}

impl From<GaussianParams> for ParamsJson {
    fn from(p: GaussianParams) -> Self {
        ParamsJson {
            n_thermal: p.n_thermal,
            r: p.squeeze.r,
            theta_rad: p.squeeze.theta,
            alpha_re: p.alpha.re,
            alpha_im: p.alpha.im,
        }
    }
}

impl GaussianParams {
    pub fn new(n_thermal: f64, squeeze: SqueezeParam, alpha: Complex64) -> Result<Self> {
        ensure_finite("n_thermal", n_thermal)?;
        ensure_finite("alpha.re", alpha.re)?;
        ensure_finite("alpha.im", alpha.im)?;
        if n_thermal < 0.0 {
            return Err(Error::invalid(format!("n_thermal must be >= 0, got {n_thermal}")));
        }
        Ok(Self {
            n_thermal,
            squeeze,
            alpha,
        })
    }

    pub fn vacuum() -> Self {
        Self {
            n_thermal: 0.0,
            squeeze: SqueezeParam::none(),
            alpha: Complex64::new(0.0, 0.0),
        }
    }

    pub fn thermal(n_thermal: f64) -> Result<Self> {
        Self::new(n_thermal, SqueezeParam::none(), Complex64::new(0.0, 0.0))
    }

    pub fn coherent(alpha: Complex64) -> Result<Self> {
        Self::new(0.0, SqueezeParam::none(), alpha)
    }

    /// Convenience constructor from the complex squeezing parameter.
    pub fn from_parts(n_thermal: f64, zeta: Complex64, alpha: Complex64) -> Result<Self> {
        Self::new(n_thermal, SqueezeParam::from_complex(zeta)?, alpha)
    }

    fn half_plus_n(&self) -> f64 {
        self.n_thermal + 0.5
    }

    /// `⟨a†a⟩` of the centred (undisplaced) state.
    fn centred_number(&self) -> f64 {
        let r = self.squeeze.r;
        self.n_thermal * (2.0 * r).cosh() + r.sinh().powi(2)
    }

    /// `⟨a²⟩` of the centred state.
    fn centred_aa(&self) -> Complex64 {
        let r = self.squeeze.r;
        -Complex64::from_polar(self.half_plus_n() * (2.0 * r).sinh(), self.squeeze.theta)
    }

    pub(crate) fn quad_mean_rad(&self, phi: f64) -> f64 {
        SQRT_2 * (self.alpha * Complex64::from_polar(1.0, -phi)).re
    }

    pub(crate) fn quad_var_rad(&self, phi: f64) -> f64 {
        let r = self.squeeze.r;
        let nn = self.half_plus_n();
        nn * (2.0 * r).cosh() - nn * (2.0 * r).sinh() * (2.0 * phi - self.squeeze.theta).cos()
    }

    /// Mean photon number `⟨a†a⟩`.
    pub fn mean_photon_number(&self) -> f64 {
        self.alpha.norm_sqr() + self.centred_number()
    }
}

/// Mean and variance of one quadrature projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureStats {
    pub angle_deg: f64,
    pub mean: f64,
    pub variance: f64,
}

/// The eight normally ordered moments that enter the exact photon statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub m_a: Complex64,
    pub m_ad: Complex64,
    pub m_aa: Complex64,
    pub m_adad: Complex64,
    pub m_ada: Complex64,
    pub m_adada: Complex64,
    pub m_adaa: Complex64,
    pub m_adadaa: f64,
}

impl MomentSet {
    /// Checks the conjugation relations and positivity within `tol`.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("moment set violates {what}")));
        if (self.m_ad - self.m_a.conj()).norm() > tol {
            return bad("<a†> = conj<a>");
        }
        if (self.m_adad - self.m_aa.conj()).norm() > tol {
            return bad("<a†a†> = conj<aa>");
        }
        if (self.m_adada - self.m_adaa.conj()).norm() > tol {
            return bad("<a†a†a> = conj<a†aa>");
        }
        if self.m_ada.im.abs() > tol || self.m_ada.re < -tol {
            return bad("<a†a> real and non-negative");
        }
        if self.m_adadaa < -tol {
            return bad("<a†a†aa> >= 0");
        }
        Ok(())
    }

    pub fn mean_number(&self) -> f64 {
        self.m_ada.re
    }

    pub fn number_variance(&self) -> f64 {
        let n = self.m_ada.re;
        self.m_adadaa + n - n * n
    }

    /// `⟨X_φ⟩` computed from the moments.
    pub fn quad_mean_rad(&self, phi: f64) -> f64 {
        ((self.m_ad * Complex64::from_polar(1.0, phi) + self.m_a * Complex64::from_polar(1.0, -phi))
            * FRAC_1_SQRT_2)
            .re
    }

    /// `⟨(ΔX_φ)²⟩` computed from the moments.
    pub fn quad_var_rad(&self, phi: f64) -> f64 {
        let var_ad = self.m_adad - self.m_ad * self.m_ad;
        let var_a = self.m_aa - self.m_a * self.m_a;
        let e2 = Complex64::from_polar(1.0, 2.0 * phi);
        let cross = (self.m_ada - self.m_ad * self.m_a).re;
        ((var_ad * e2 + var_a * e2.conj()).re + 2.0 * cross + 1.0) / 2.0
    }
}

fn check_angle(angle_deg: f64) -> Result<f64> {
    ensure_finite("angle", angle_deg)?;
    Ok(angle_deg.to_radians())
}

/// `⟨X_φ⟩ = √2 Re(α e^{-iφ})`.
pub fn quad_mean(params: &GaussianParams, angle_deg: f64) -> Result<f64> {
    Ok(params.quad_mean_rad(check_angle(angle_deg)?))
}

/// `⟨(ΔX_φ)²⟩ = (n̄+½)[cosh 2r − sinh 2r cos(2φ − θ)]`.
pub fn quad_var(params: &GaussianParams, angle_deg: f64) -> Result<f64> {
    Ok(params.quad_var_rad(check_angle(angle_deg)?))
}

pub fn quadrature_stats(params: &GaussianParams, angle_deg: f64) -> Result<QuadratureStats> {
    let phi = check_angle(angle_deg)?;
    Ok(QuadratureStats {
        angle_deg,
        mean: params.quad_mean_rad(phi),
        variance: params.quad_var_rad(phi),
    })
}

/// Gaussian sufficient statistics `(mean, variance)` of the marginal `h_φ`.
pub fn marginal(params: &GaussianParams, angle_deg: f64) -> Result<(f64, f64)> {
    let s = quadrature_stats(params, angle_deg)?;
    Ok((s.mean, s.variance))
}

/// All eight moments, using Wick factorisation of the centred state.
pub fn moments(params: &GaussianParams) -> MomentSet {
    let a = params.alpha;
    let ac = a.conj();
    let ns = params.centred_number();
    let m = params.centred_aa();

    let m_aa = a * a + m;
    let m_adaa = ac * a * a + ac * m + 2.0 * a * ns;
    let m_adadaa = a.norm_sqr().powi(2)
        + 2.0 * (ac * ac * m).re
        + 4.0 * a.norm_sqr() * ns
        + m.norm_sqr()
        + 2.0 * ns * ns;

    MomentSet {
        m_a: a,
        m_ad: ac,
        m_aa,
        m_adad: m_aa.conj(),
        m_ada: Complex64::new(a.norm_sqr() + ns, 0.0),
        m_adada: m_adaa.conj(),
        m_adaa,
        m_adadaa,
    }
}

/// Mean vector and symmetrised covariance in `(x, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSpaceGaussian {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl PhaseSpaceGaussian {
    /// Standard deviation along the least-certain direction.
    pub fn max_std(&self) -> f64 {
        let e = SymmetricEigen::new(self.cov).eigenvalues;
        e.max().max(0.0).sqrt()
    }

    /// Density of the bivariate normal at `(x, p)`.
    pub fn density(&self, x: f64, p: f64) -> f64 {
        let det = self.cov.determinant();
        let inv = self.cov.try_inverse().unwrap_or_else(Matrix2::zeros);
        let d = Vector2::new(x, p) - self.mean;
        let q = (d.transpose() * inv * d)[(0, 0)];
        (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
    }
}

pub fn covariance(params: &GaussianParams) -> PhaseSpaceGaussian {
    let ns = params.centred_number();
    let m = params.centred_aa();
    let vxx = (2.0 * m.re + 2.0 * ns + 1.0) / 2.0;
    let vpp = (-2.0 * m.re + 2.0 * ns + 1.0) / 2.0;
    let vxp = m.im;
    PhaseSpaceGaussian {
        mean: Vector2::new(SQRT_2 * params.alpha.re, SQRT_2 * params.alpha.im),
        cov: Matrix2::new(vxx, vxp, vxp, vpp),
    }
}

/// Inverse of [`covariance`]. Determinants marginally below the vacuum
/// bound (within `1e-9`) are clamped to `n̄_T = 0`.
pub fn params_from_covariance(g: &PhaseSpaceGaussian) -> Result<GaussianParams> {
    let c = g.cov;
    if !(c[(0, 0)].is_finite() && c[(1, 1)].is_finite() && c[(0, 1)].is_finite()) {
        return Err(Error::Numerical("non-finite covariance".into()));
    }
    let det = c.determinant();
    if c[(0, 0)] <= 0.0 || det <= 0.0 {
        return Err(Error::Numerical(format!(
            "covariance is not positive definite (det {det:.3e})"
        )));
    }
    let nn = det.sqrt();
    let n_thermal = (nn - 0.5).max(0.0);
    // trace/2 = N cosh 2r ; (vxx - vpp)/2 = -N sinh 2r cos θ ; vxp = -N sinh 2r sin θ
    let half_tr = 0.5 * (c[(0, 0)] + c[(1, 1)]);
    let a2c = 0.5 * (c[(0, 0)] - c[(1, 1)]);
    let a2s = 0.5 * (c[(0, 1)] + c[(1, 0)]);
    let amp = a2c.hypot(a2s);
    let r = 0.5 * (amp / half_tr).clamp(0.0, 1.0 - 1e-15).atanh();
    let theta = if amp > 0.0 { (-a2s).atan2(-a2c) } else { 0.0 };
    GaussianParams::new(
        n_thermal,
        SqueezeParam::new(r, theta)?,
        Complex64::new(g.mean[0] / SQRT_2, g.mean[1] / SQRT_2),
    )
}

/// Default phase-space half-width: `max(4, |mean| + 5 σ_max)`.
pub fn default_extent(params: &GaussianParams) -> f64 {
    let g = covariance(params);
    (g.mean.norm() + 5.0 * g.max_std()).max(4.0)
}

/// Samples the Wigner function at the `size_m × size_m` cell centres.
///
/// `extent` defaults to [`default_extent`]. The grid is flagged when the
/// 5σ ellipse of the state does not fit in the window.
pub fn wigner_eval(
    params: &GaussianParams,
    size_m: usize,
    extent: Option<f64>,
) -> Result<WignerGrid> {
    let extent = extent.unwrap_or_else(|| default_extent(params));
    let g = covariance(params);
    let mut grid = WignerGrid::from_fn(size_m, extent, |x, p| g.density(x, p))?;
    let reach = g.mean[0].abs().max(g.mean[1].abs()) + 5.0 * g.max_std();
    if reach > extent {
        grid.warning = Some(format!(
            "state 5-sigma reach {reach:.3} exceeds window half-width {extent:.3}"
        ));
    }
    Ok(grid)
}

/// Uhlmann fidelity between two single-mode Gaussian states.
pub fn fidelity(a: &GaussianParams, b: &GaussianParams) -> f64 {
    let ga = covariance(a);
    let gb = covariance(b);
    let sum = ga.cov + gb.cov;
    let big_delta = 4.0 * sum.determinant();
    let small_delta =
        ((4.0 * ga.cov.determinant() - 1.0) * (4.0 * gb.cov.determinant() - 1.0)).max(0.0);
    let d = ga.mean - gb.mean;
    let inv = sum.try_inverse().unwrap_or_else(Matrix2::zeros);
    let q = (d.transpose() * inv * d)[(0, 0)];
    2.0 / ((big_delta + small_delta).sqrt() - small_delta.sqrt()) * (-0.5 * q).exp()
}

/// What the extreme quadrature variances of a Gaussian state say about it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceInference {
    pub n_thermal: f64,
    pub r: f64,
    /// `10 log10(e^{2r})`.
    pub squeezing_db: f64,
    /// Smallest variance minus the vacuum value ½.
    pub vacuum_gap: f64,
}

/// Inverts `v_max = (n̄+½)e^{2r}`, `v_min = (n̄+½)e^{−2r}`. Equal variances
/// describe an unsqueezed (thermal or coherent) state.
pub fn infer_from_variances(v_max: f64, v_min: f64) -> Result<VarianceInference> {
    ensure_finite("v_max", v_max)?;
    ensure_finite("v_min", v_min)?;
    if !(v_min > 0.0 && v_max >= v_min) {
        return Err(Error::invalid(format!("need v_max >= v_min > 0, got {v_max}, {v_min}")));
    }
    let nn = (v_max * v_min).sqrt();
    if nn < 0.5 {
        return Err(Error::invalid(format!(
            "variance product {:.4} is below the uncertainty bound 1/4",
            v_max * v_min
        )));
    }
    let r = 0.25 * (v_max / v_min).ln();
    Ok(VarianceInference {
        n_thermal: nn - 0.5,
        r,
        squeezing_db: 20.0 * r * std::f64::consts::LOG10_E,
        vacuum_gap: v_min - 0.5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn squeezed_thermal() -> GaussianParams {
        GaussianParams::new(0.73, SqueezeParam::new(0.19, 0.0).unwrap(), c(0.0, 0.0)).unwrap()
    }

    fn displaced_squeezed_thermal() -> GaussianParams {
        GaussianParams::from_parts(0.71, c(0.16, -0.13), c(0.55, 0.25)).unwrap()
    }

    #[test]
    fn zero_displacement_has_zero_mean() {
        let p = GaussianParams::from_parts(0.4, c(0.2, 0.1), c(0.0, 0.0)).unwrap();
        for a in [0.0, 17.0, 90.0, 233.0] {
            assert_eq!(quad_mean(&p, a).unwrap(), 0.0);
        }
    }

    #[test]
    fn quad_mean_at_zero_is_sqrt2_re_alpha() {
        let p = GaussianParams::coherent(c(0.55, 0.25)).unwrap();
        let v = quad_mean(&p, 0.0).unwrap();
        assert!((v - 0.777_817_459_305_202).abs() < 1e-12, "{v}");
    }

    #[test]
    fn coherent_mean_sweeps_cosine() {
        let alpha = c(-0.06, -0.36);
        let p = GaussianParams::coherent(alpha).unwrap();
        let amp = SQRT_2 * alpha.norm();
        assert!((amp - 0.516).abs() < 1e-3);
        let max = (0..3600)
            .map(|k| quad_mean(&p, k as f64 / 10.0).unwrap())
            .fold(f64::MIN, f64::max);
        assert!((max - amp).abs() < 1e-5);
        assert!((quad_mean(&p, 10.0).unwrap() - quad_mean(&p, 370.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(quad_mean(&GaussianParams::vacuum(), f64::NAN).is_err());
        assert!(GaussianParams::thermal(f64::INFINITY).is_err());
        assert!(GaussianParams::thermal(-0.1).is_err());
        assert!(SqueezeParam::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn vacuum_and_thermal_variances() {
        let v = GaussianParams::vacuum();
        let t = GaussianParams::thermal(0.45).unwrap();
        for a in [0.0, 33.0, 90.0, 271.0] {
            assert!((quad_var(&v, a).unwrap() - 0.5).abs() < 1e-15);
            assert!((quad_var(&t, a).unwrap() - 0.95).abs() < 1e-12);
        }
    }

    #[test]
    fn squeezed_extrema_match_the_measured_values() {
        let p = squeezed_thermal();
        let min = quad_var(&p, 0.0).unwrap();
        let max = quad_var(&p, 90.0).unwrap();
        assert!((max - 1.79).abs() < 0.01, "{max}");
        assert!((min - 0.85).abs() < 0.01, "{min}");
    }

    #[test]
    fn squeezing_minimum_sits_at_half_theta() {
        let p = GaussianParams::new(0.2, SqueezeParam::new(0.3, 1.2).unwrap(), c(0.0, 0.0)).unwrap();
        let best = (0..1800)
            .map(|k| k as f64 / 10.0)
            .min_by(|a, b| quad_var(&p, *a).unwrap().total_cmp(&quad_var(&p, *b).unwrap()))
            .unwrap();
        assert!((best - 0.6f64.to_degrees()).abs() < 0.1, "{best}");
    }

    #[test]
    fn vacuum_and_coherent_moments() {
        let m = moments(&GaussianParams::vacuum());
        assert_eq!(m.m_ada.re, 0.0);
        assert_eq!(m.m_adadaa, 0.0);
        assert_eq!(m.m_aa, c(0.0, 0.0));

        let m = moments(&GaussianParams::coherent(c(0.5, 0.0)).unwrap());
        assert!((m.m_a - c(0.5, 0.0)).norm() < 1e-15);
        assert!((m.m_ada.re - 0.25).abs() < 1e-15);
        assert!((m.m_adadaa - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn moment_quadratures_agree_with_closed_forms() {
        let p = displaced_squeezed_thermal();
        let m = moments(&p);
        for k in 0..24 {
            let phi = (k as f64 * 15.0).to_radians();
            assert!((m.quad_mean_rad(phi) - p.quad_mean_rad(phi)).abs() < 1e-12);
            assert!((m.quad_var_rad(phi) - p.quad_var_rad(phi)).abs() < 1e-12);
        }
    }

    #[test]
    fn vacuum_covariance() {
        let g = covariance(&GaussianParams::vacuum());
        assert_eq!(g.mean, Vector2::zeros());
        assert_eq!(g.cov, Matrix2::new(0.5, 0.0, 0.0, 0.5));
    }

    #[test]
    fn covariance_eigenvalues_match_the_squeezed_state() {
        let e = SymmetricEigen::new(covariance(&squeezed_thermal()).cov).eigenvalues;
        let (lo, hi) = (e.min(), e.max());
        assert!((lo - 0.85).abs() < 0.01 && (hi - 1.79).abs() < 0.01, "{lo} {hi}");
    }

    #[test]
    fn vacuum_wigner_peak() {
        let g = wigner_eval(&GaussianParams::vacuum(), 101, Some(4.0)).unwrap();
        assert!((g.at(50, 50) - 1.0 / PI).abs() < 1e-12);
        assert!((g.at(50, 30) - g.at(30, 50)).abs() < 1e-15);
        assert!((g.at(50, 30) - g.at(70, 50)).abs() < 1e-15);
        assert!(g.warning.is_none());
    }

    #[test]
    fn wigner_centre_and_normalisation() {
        let p = displaced_squeezed_thermal();
        let g = wigner_eval(&p, 101, None).unwrap();
        let (mean, _) = g.moments();
        assert!((mean[0] - 0.778).abs() < 1e-3 && (mean[1] - 0.354).abs() < 1e-3);
        let s = g.integral();
        assert!((0.999..=1.001).contains(&s), "{s}");
        assert!(g.values.iter().all(|&v| v <= 1.0 / PI));
    }

    #[test]
    fn small_window_is_flagged() {
        let g = wigner_eval(&displaced_squeezed_thermal(), 51, Some(2.0)).unwrap();
        assert!(g.warning.is_some());
    }

    #[test]
    fn wigner_columns_reproduce_zero_degree_marginal() {
        let p = displaced_squeezed_thermal();
        let g = wigner_eval(&p, 101, None).unwrap();
        let (mu, var) = marginal(&p, 0.0).unwrap();
        let d = g.step();
        let mut worst: f64 = 0.0;
        for ix in 0..g.size_m {
            let col: f64 = (0..g.size_m).map(|ip| g.at(ix, ip)).sum::<f64>() * d;
            let x = g.coord(ix);
            let want = (-(x - mu).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
            worst = worst.max((col - want).abs());
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn fidelity_of_identical_and_coherent_pairs() {
        let p = displaced_squeezed_thermal();
        assert!((fidelity(&p, &p) - 1.0).abs() < 1e-12);
        let a = GaussianParams::coherent(c(0.3, 0.1)).unwrap();
        let b = GaussianParams::coherent(c(-0.2, 0.4)).unwrap();
        let want = (-(c(0.3, 0.1) - c(-0.2, 0.4)).norm_sqr()).exp();
        assert!((fidelity(&a, &b) - want).abs() < 1e-12);
    }

    #[test]
    fn json_layout() {
        let p = displaced_squeezed_thermal();
        let s = serde_json::to_value(p).unwrap();
        for key in ["n_thermal", "r", "theta_rad", "alpha_re", "alpha_im"] {
            assert!(s.get(key).is_some(), "{key}");
        }
        let back: GaussianParams = serde_json::from_value(s).unwrap();
        assert!((back.alpha - p.alpha).norm() < 1e-15);
        let bad = serde_json::json!({"n_thermal": -1.0, "r": 0.0, "theta_rad": 0.0, "alpha_re": 0.0, "alpha_im": 0.0});
        assert!(serde_json::from_value::<GaussianParams>(bad).is_err());
    }

    fn arb_params() -> impl Strategy<Value = GaussianParams> {
        (0.0..1.0f64, 0.0..0.5f64, 0.0..TAU, 0.0..1.5f64, 0.0..TAU).prop_map(|(n, r, th, am, ph)| {
            GaussianParams::new(n, SqueezeParam::new(r, th).unwrap(), Complex64::from_polar(am, ph))
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn moments_are_conjugation_closed(p in arb_params()) {
            prop_assert!(moments(&p).check_invariants(1e-12).is_ok());
        }

        #[test]
        fn uncertainty_product(p in arb_params(), a in 0.0..360.0f64) {
            let v = quad_var(&p, a).unwrap() * quad_var(&p, a + 90.0).unwrap();
            prop_assert!(v >= 0.25 - 1e-12);
        }

        #[test]
        fn periodicities(p in arb_params(), a in 0.0..360.0f64) {
            prop_assert!((quad_var(&p, a).unwrap() - quad_var(&p, a + 180.0).unwrap()).abs() < 1e-12);
            prop_assert!((quad_mean(&p, a).unwrap() - quad_mean(&p, a + 360.0).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn mean_averages_to_zero_over_full_sweep(p in arb_params(), n in 3usize..40) {
            let s: f64 = (0..n).map(|k| quad_mean(&p, 360.0 * k as f64 / n as f64).unwrap()).sum();
            prop_assert!((s / n as f64).abs() < 1e-12);
        }

        #[test]
        fn unsqueezed_variance_is_isotropic(n in 0.0..2.0f64, am in 0.0..2.0f64, a in 0.0..360.0f64) {
            let p = GaussianParams::new(n, SqueezeParam::none(), c(am, -am)).unwrap();
            prop_assert!((quad_var(&p, a).unwrap() - quad_var(&p, 0.0).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn covariance_from_three_angles(p in arb_params()) {
            let g = covariance(&p);
            let v0 = quad_var(&p, 0.0).unwrap();
            let v45 = quad_var(&p, 45.0).unwrap();
            let v90 = quad_var(&p, 90.0).unwrap();
            // Var X_45 = (vxx + vpp)/2 + vxp
            prop_assert!((g.cov[(0, 0)] - v0).abs() < 1e-12);
            prop_assert!((g.cov[(1, 1)] - v90).abs() < 1e-12);
            prop_assert!((g.cov[(0, 1)] - (v45 - 0.5 * (v0 + v90))).abs() < 1e-12);
            prop_assert!(g.cov.determinant() >= 0.25 - 1e-12);
        }

        #[test]
        fn covariance_round_trip(p in arb_params()) {
            prop_assume!(p.squeeze.r() > 1e-3);
            let q = params_from_covariance(&covariance(&p)).unwrap();
            prop_assert!((q.n_thermal - p.n_thermal).abs() < 1e-9);
            prop_assert!((q.squeeze.as_complex() - p.squeeze.as_complex()).norm() < 1e-9);
            prop_assert!((q.alpha - p.alpha).norm() < 1e-12);
        }

        #[test]
        fn wigner_normalisation(p in arb_params()) {
            let g = wigner_eval(&p, 101, None).unwrap();
            prop_assert!(g.warning.is_none());
            let s = g.integral();
            prop_assert!((0.999..=1.001).contains(&s), "{}", s);
        }
    }

    #[test]
    fn variance_inference_inverts_the_closed_forms() {
        let p = GaussianParams::new(0.4, SqueezeParam::new(0.3, 1.1).unwrap(), c(0.2, 0.0)).unwrap();
        let e = SymmetricEigen::new(covariance(&p).cov).eigenvalues;
        let inf = infer_from_variances(e.max(), e.min()).unwrap();
        assert!((inf.n_thermal - 0.4).abs() < 1e-12);
        assert!((inf.r - 0.3).abs() < 1e-12);
        let coh = infer_from_variances(0.5, 0.5).unwrap();
        assert_eq!((coh.n_thermal, coh.r, coh.vacuum_gap), (0.0, 0.0, 0.0));
        assert!(infer_from_variances(0.4, 0.5).is_err());
        assert!(infer_from_variances(0.6, 0.3).unwrap_err().is_validation());
    }
}
