//! Explicit projection matrix `H = 𝔸 W` for compressed sensing.

use crate::error::{Error, Result};
use crate::grid::WignerGrid;
use crate::tomography::projector::{for_each_ray_weight, Geometry};
use crate::tomography::{check_angles, Sinogram};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `Aᵀ y`.
    pub fn mul_t_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            for (j, v) in self.row(i) {
                out[j] += v * yi;
            }
        }
        out
    }

    /// Largest eigenvalue of `AᵀA` by power iteration from a flat start.
    pub fn norm_sq_estimate(&self, iters: usize) -> f64 {
        let mut x = vec![1.0 / (self.cols as f64).sqrt(); self.cols];
        let mut lambda = 0.0;
        for _ in 0..iters {
            let y = self.mul_t_vec(&self.mul_vec(&x));
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm;
            x = y.into_iter().map(|v| v / norm).collect();
        }
        lambda
    }
}

/// Stacked projection operators for a set of angles together with the
/// measured profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSystem {
    pub angles_deg: Vec<f64>,
    pub size_m: usize,
    pub extent: f64,
    /// `(N·M) × M²`; row `a·M + j` is bin `j` of angle `a`.
    pub matrix: CsrMatrix,
    /// Profiles as densities at the bin centres, stacked like the rows.
    pub rhs: Vec<f64>,
}

/// Builds the matrix only; `rhs` is left empty.
pub fn build_measurement(angles_deg: &[f64], size_m: usize, extent: f64) -> Result<MeasurementSystem> {
    check_angles(angles_deg)?;
    // validates size and extent
    WignerGrid::zeros(size_m, extent)?;
    let geo = Geometry { size: size_m, extent };
    let mut row_ptr = vec![0];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    for &a in angles_deg {
        let phi = a.to_radians();
        for j in 0..size_m {
            for_each_ray_weight(&geo, phi, geo.coord(j), |k, w| {
                col_idx.push(k);
                values.push(w);
            });
            row_ptr.push(col_idx.len());
        }
    }
    Ok(MeasurementSystem {
        angles_deg: angles_deg.to_vec(),
        size_m,
        extent,
        matrix: CsrMatrix {
            rows: angles_deg.len() * size_m,
            cols: size_m * size_m,
            row_ptr,
            col_idx,
            values,
        },
        rhs: Vec::new(),
    })
}

impl MeasurementSystem {
    /// Fills `rhs` from a sinogram with the same angles and bin layout.
    pub fn with_sinogram(mut self, s: &Sinogram) -> Result<Self> {
        s.validate()?;
        if s.angles_deg != self.angles_deg {
            return Err(Error::invalid("sinogram angles differ from the measurement angles"));
        }
        if s.bins != self.size_m || (s.range - self.extent).abs() > 1e-12 * self.extent {
            return Err(Error::invalid(format!(
                "sinogram has {} bins over +-{}, measurement expects {} over +-{}",
                s.bins, s.range, self.size_m, self.extent
            )));
        }
        self.rhs = s.sampled().concat();
        Ok(self)
    }

    pub fn project(&self, grid: &WignerGrid) -> Result<Vec<f64>> {
        if grid.size_m != self.size_m {
            return Err(Error::invalid("grid size differs from the measurement system"));
        }
        Ok(self.matrix.mul_vec(&grid.values))
    }

    /// `‖𝔸·vec(W) − H‖ / ‖H‖`.
    pub fn relative_residual(&self, values: &[f64]) -> f64 {
        let r = self.matrix.mul_vec(values);
        let num: f64 = r.iter().zip(&self.rhs).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = self.rhs.iter().map(|b| b * b).sum();
        (num / den).sqrt()
    }
}
