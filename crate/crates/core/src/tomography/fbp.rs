//! Filtered backprojection.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::sinogram::Sinogram;
use crate::error::{Error, Result};
use crate::grid::WignerGrid;

/// Apodisation applied to the ramp response in frequency space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RampWindow {
    /// Plain band-limited ramp.
    None,
    /// Raised cosine over the whole band.
    Hann,
    /// Flat up to `1 − taper` of Nyquist, raised-cosine roll-off above.
    Tukey { taper: f64 },
}

impl RampWindow {
    fn gain(&self, f: f64) -> f64 {
        match *self {
            RampWindow::None => 1.0,
            RampWindow::Hann => 0.5 * (1.0 + (PI * f).cos()),
            RampWindow::Tukey { taper } => {
                let start = 1.0 - taper;
                if f <= start || taper <= 0.0 {
                    1.0
                } else {
                    0.5 * (1.0 + (PI * (f - start) / taper).cos())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Linear,
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FbpOptions {
    pub window: RampWindow,
    pub interpolation: Interpolation,
    /// Rescale the result to unit integral.
    pub normalize: bool,
}

impl Default for FbpOptions {
    fn default() -> Self {
        Self {
            window: RampWindow::Tukey { taper: 0.5 },
            interpolation: Interpolation::Linear,
            normalize: true,
        }
    }
}

/// What was done to produce a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbpReport {
    pub options: FbpOptions,
    pub padded_len: usize,
    /// Integral of the raw backprojection before any rescaling.
    pub raw_integral: f64,
}

/// Ramp-filters each profile: `q = Δt · (h ∗ p)` with the band-limited
/// spatial ramp kernel `h`, evaluated by zero-padded FFT convolution.
///
/// The filtered profiles are returned over `extra` additional bins on each
/// side, since the ramp response of a compact profile is not compact.
fn ramp_filter(rows: &[Vec<f64>], dt: f64, window: RampWindow, extra: usize) -> (Vec<Vec<f64>>, usize) {
    let n = rows.first().map_or(0, Vec::len);
    let len = (2 * (n + extra)).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);

    let mut kernel = vec![Complex64::new(0.0, 0.0); len];
    for (i, k) in kernel.iter_mut().enumerate() {
        let m = if i <= len / 2 { i as i64 } else { i as i64 - len as i64 };
        let h = if m == 0 {
            1.0 / (4.0 * dt * dt)
        } else if m % 2 != 0 {
            -1.0 / ((m * m) as f64 * PI * PI * dt * dt)
        } else {
            0.0
        };
        *k = Complex64::new(h, 0.0);
    }
    fwd.process(&mut kernel);
    for (i, k) in kernel.iter_mut().enumerate() {
        let m = i.min(len - i) as f64;
        *k *= window.gain(m / (len as f64 / 2.0)) * dt / len as f64;
    }

    let filtered = rows
        .iter()
        .map(|row| {
            let mut buf: Vec<Complex64> = row.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            buf.resize(len, Complex64::new(0.0, 0.0));
            fwd.process(&mut buf);
            for (b, k) in buf.iter_mut().zip(&kernel) {
                *b *= k;
            }
            inv.process(&mut buf);
            (0..n + 2 * extra).map(|j| buf[(j + len - extra) % len].re).collect()
        })
        .collect();
    (filtered, len)
}

/// Reconstruction with the default options.
pub fn fbp(s: &Sinogram, size_m: usize, extent: f64) -> Result<WignerGrid> {
    fbp_with(s, size_m, extent, &FbpOptions::default()).map(|(g, _)| g)
}

pub fn fbp_with(s: &Sinogram, size_m: usize, extent: f64, opts: &FbpOptions) -> Result<(WignerGrid, FbpReport)> {
    s.validate()?;
    if s.len() < 2 {
        return Err(Error::invalid("filtered backprojection needs at least 2 angles"));
    }
    if let RampWindow::Tukey { taper } = opts.window {
        if !(0.0..=1.0).contains(&taper) {
            return Err(Error::invalid("Tukey taper must be in [0, 1]"));
        }
    }
    let geo = s.geometry();
    let dt = geo.step();
    // Bins needed beyond the sinogram range to reach the grid corners.
    let reach = 2f64.sqrt() * extent + dt;
    let extra = ((reach - geo.extent).max(0.0) / dt).ceil() as usize;
    let (filtered, padded_len) = ramp_filter(&s.sampled(), dt, opts.window, extra);

    let mut grid = WignerGrid::zeros(size_m, extent)?;
    let coords: Vec<f64> = (0..size_m).map(|i| grid.coord(i)).collect();
    let scale = PI / s.len() as f64;
    for (angle, q) in s.angles_deg.iter().zip(&filtered) {
        let (sn, cs) = angle.to_radians().sin_cos();
        for (ip, &p) in coords.iter().enumerate() {
            let row = &mut grid.values[ip * size_m..(ip + 1) * size_m];
            for (v, &x) in row.iter_mut().zip(&coords) {
                let fi = (x * cs + p * sn + geo.extent) / dt - 0.5 + extra as f64;
                *v += scale * sample(q, fi, opts.interpolation);
            }
        }
    }
    let raw_integral = grid.integral();
    if opts.normalize {
        if !(raw_integral.abs() > 1e-300) {
            return Err(Error::Numerical("reconstruction has zero integral; cannot normalise".into()));
        }
        grid.scale(1.0 / raw_integral);
    }
    Ok((
        grid,
        FbpReport {
            options: *opts,
            padded_len,
            raw_integral,
        },
    ))
}

fn sample(q: &[f64], fi: f64, interp: Interpolation) -> f64 {
    let n = q.len() as i64;
    match interp {
        Interpolation::Nearest => {
            let i = fi.round() as i64;
            if (0..n).contains(&i) {
                q[i as usize]
            } else {
                0.0
            }
        }
        Interpolation::Linear => {
            let i0 = fi.floor();
            let w = fi - i0;
            let i0 = i0 as i64;
            let at = |i: i64| if (0..n).contains(&i) { q[i as usize] } else { 0.0 };
            (1.0 - w) * at(i0) + w * at(i0 + 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{wigner_eval, GaussianParams};
    use crate::tomography::{gaussian_sinogram, radon};
    use std::f64::consts::FRAC_1_PI;

    fn angles(n: usize) -> Vec<f64> {
        (0..n).map(|i| 180.0 * i as f64 / n as f64).collect()
    }

    fn raw() -> FbpOptions {
        FbpOptions { normalize: false, ..FbpOptions::default() }
    }

    #[test]
    fn vacuum_round_trip() {
        let truth = wigner_eval(&GaussianParams::vacuum(), 101, Some(4.0)).unwrap();
        let s = radon(&truth, &angles(36)).unwrap();
        let rec = fbp(&s, 101, 4.0).unwrap();
        let e = rec.nrmse(&truth).unwrap();
        assert!(e <= 0.05, "nrmse {e}");
        let peak = rec.at(50, 50);
        assert!((peak - FRAC_1_PI).abs() <= 0.03 * FRAC_1_PI, "peak {peak}");
    }

    #[test]
    fn linear_beats_nearest_interpolation() {
        let truth = wigner_eval(&GaussianParams::vacuum(), 101, Some(4.0)).unwrap();
        let s = radon(&truth, &angles(36)).unwrap();
        let near = FbpOptions { interpolation: Interpolation::Nearest, ..FbpOptions::default() };
        let e_lin = fbp(&s, 101, 4.0).unwrap().nrmse(&truth).unwrap();
        let e_near = fbp_with(&s, 101, 4.0, &near).unwrap().0.nrmse(&truth).unwrap();
        assert!(e_lin < e_near, "linear {e_lin} nearest {e_near}");
    }

    #[test]
    fn few_angles_streak_and_quality_improves() {
        let p = GaussianParams::from_parts(0.71, Complex64::new(0.16, -0.13), Complex64::new(0.55, 0.25)).unwrap();
        let truth = wigner_eval(&p, 101, None).unwrap();
        let mut prev = f64::INFINITY;
        for n in [2, 4, 6, 9, 12, 18, 36] {
            let s = gaussian_sinogram(&p, &angles(n), 101, truth.extent).unwrap();
            let e = fbp(&s, 101, truth.extent).unwrap().nrmse(&truth).unwrap();
            assert!(e <= prev + 1e-12, "N={n}: {e} > {prev}");
            prev = e;
        }
    }

    #[test]
    fn linearity() {
        let a = GaussianParams::from_parts(0.3, Complex64::new(0.1, 0.0), Complex64::new(0.4, -0.2)).unwrap();
        let b = GaussianParams::thermal(0.8).unwrap();
        let s1 = gaussian_sinogram(&a, &angles(12), 61, 5.0).unwrap();
        let s2 = gaussian_sinogram(&b, &angles(12), 61, 5.0).unwrap();
        let mix = s1.combine(1.7, &s2, 0.6).unwrap();
        let r1 = fbp_with(&s1, 61, 5.0, &raw()).unwrap().0;
        let r2 = fbp_with(&s2, 61, 5.0, &raw()).unwrap().0;
        let rm = fbp_with(&mix, 61, 5.0, &raw()).unwrap().0;
        for k in 0..rm.values.len() {
            assert!((rm.values[k] - (1.7 * r1.values[k] + 0.6 * r2.values[k])).abs() < 1e-10);
        }
    }

    #[test]
    fn rotation_by_90_degrees() {
        let p = GaussianParams::from_parts(0.2, Complex64::new(0.3, 0.1), Complex64::new(0.8, -0.3)).unwrap();
        let s = gaussian_sinogram(&p, &angles(18), 81, 5.0).unwrap();
        let rec = fbp_with(&s, 81, 5.0, &raw()).unwrap().0;
        let rot = fbp_with(&s.rotated(90.0), 81, 5.0, &raw()).unwrap().0;
        let want = rec.rotated_90();
        for k in 0..rot.values.len() {
            assert!((rot.values[k] - want.values[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn dc_consistency() {
        let p = GaussianParams::from_parts(0.5, Complex64::new(0.2, 0.1), Complex64::new(0.3, 0.2)).unwrap();
        let s = gaussian_sinogram(&p, &angles(36), 101, 5.0).unwrap();
        let mass = s.integrals().iter().sum::<f64>() / s.len() as f64;
        let (rec, rep) = fbp_with(&s, 101, 5.0, &raw()).unwrap();
        assert!((rec.integral() - mass).abs() < 1e-2, "{} vs {mass}", rec.integral());
        assert_eq!(rep.padded_len, 256);
    }

    #[test]
    fn needs_two_angles() {
        let s = gaussian_sinogram(&GaussianParams::vacuum(), &[0.0], 21, 4.0).unwrap();
        assert!(fbp(&s, 21, 4.0).unwrap_err().is_validation());
    }
}
