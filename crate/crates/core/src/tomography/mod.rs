//! Forward projection of Wigner grids and reconstruction by filtered
//! backprojection.

pub mod fbp;
pub mod projector;
pub mod sinogram;

use crate::error::{Error, Result};
use crate::gaussian::{params_from_covariance, quadrature_stats, GaussianParams, PhaseSpaceGaussian};
use crate::grid::WignerGrid;

pub use fbp::{fbp, fbp_with, FbpOptions, FbpReport, Interpolation, RampWindow};
pub use projector::Geometry;
pub use sinogram::{Profiles, Sinogram};

pub(crate) fn check_angles(angles_deg: &[f64]) -> Result<()> {
    if angles_deg.is_empty() {
        return Err(Error::invalid("empty angle list"));
    }
    for &a in angles_deg {
        if !(a.is_finite() && (0.0..180.0).contains(&a)) {
            return Err(Error::invalid(format!("projection angle {a} outside [0, 180)")));
        }
    }
    Ok(())
}

/// Line integrals of the grid along `x cos φ + p sin φ = t`, one profile per
/// angle, on `size_m` bins spanning the grid's extent.
pub fn radon(grid: &WignerGrid, angles_deg: &[f64]) -> Result<Sinogram> {
    check_angles(angles_deg)?;
    let geo = Geometry {
        size: grid.size_m,
        extent: grid.extent,
    };
    let rows = angles_deg
        .iter()
        .map(|a| projector::project(&geo, &grid.values, a.to_radians()))
        .collect();
    Ok(Sinogram {
        angles_deg: angles_deg.to_vec(),
        bins: grid.size_m,
        range: grid.extent,
        profiles: Profiles::Sampled(rows),
        warning: None,
    })
}

/// Analytic Gaussian marginals sampled on the bin centres.
pub fn gaussian_sinogram(params: &GaussianParams, angles_deg: &[f64], bins: usize, range: f64) -> Result<Sinogram> {
    check_angles(angles_deg)?;
    let stats = angles_deg
        .iter()
        .map(|&a| quadrature_stats(params, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(Sinogram::from_stats(&stats, bins, range)?.to_sampled())
}

/// Gaussian state with the grid's mean vector and covariance.
pub fn refit_gaussian(grid: &WignerGrid) -> Result<GaussianParams> {
    let total: f64 = grid.values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("grid has no positive mass".into()));
    }
    let (mean, cov) = grid.moments();
    if !(cov[(0, 0)] > 0.0 && cov.determinant() > 0.0) {
        return Err(Error::Numerical(format!(
            "grid covariance is not positive definite (det {:.3e})",
            cov.determinant()
        )));
    }
    params_from_covariance(&PhaseSpaceGaussian { mean, cov })
}
