//! Ray-driven line integrals through a square grid with linear interpolation
//! along the ray (Joseph's method). Used both for forward projection and for
//! the explicit measurement matrix, so the two agree by construction.

/// Geometry shared by a grid and its projections: `size` samples per axis
/// centred on `[-extent, extent]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub size: usize,
    pub extent: f64,
}

impl Geometry {
    pub fn step(&self) -> f64 {
        2.0 * self.extent / self.size as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.extent + (i as f64 + 0.5) * self.step()
    }

    /// Continuous sample index of coordinate `v`.
    fn index_of(&self, v: f64) -> f64 {
        (v + self.extent) / self.step() - 0.5
    }
}

/// Calls `f(pixel_index, weight)` for every pixel touched by the line
/// `x cos φ + p sin φ = t`. Pixel index is `ip * size + ix`.
pub fn for_each_ray_weight(g: &Geometry, phi_rad: f64, t: f64, mut f: impl FnMut(usize, f64)) {
    let m = g.size;
    let d = g.step();
    let (s, c) = phi_rad.sin_cos();
    let mut interp = |outer: usize, pos: f64, w: f64, x_major: bool| {
        let fi = g.index_of(pos);
        let i0 = fi.floor();
        let frac = fi - i0;
        let i0 = i0 as i64;
        for (i, wi) in [(i0, 1.0 - frac), (i0 + 1, frac)] {
            if wi != 0.0 && i >= 0 && (i as usize) < m {
                let idx = if x_major { outer * m + i as usize } else { i as usize * m + outer };
                f(idx, w * wi);
            }
        }
    };
    if c.abs() >= s.abs() {
        // march over rows p, interpolate along x
        let w = d / c.abs();
        for ip in 0..m {
            let p = g.coord(ip);
            interp(ip, (t - p * s) / c, w, true);
        }
    } else {
        let w = d / s.abs();
        for ix in 0..m {
            let x = g.coord(ix);
            interp(ix, (t - x * c) / s, w, false);
        }
    }
}

/// Line integrals of `values` at every detector bin for one angle.
pub fn project(g: &Geometry, values: &[f64], phi_rad: f64) -> Vec<f64> {
    (0..g.size)
        .map(|j| {
            let mut acc = 0.0;
            for_each_ray_weight(g, phi_rad, g.coord(j), |k, w| acc += w * values[k]);
            acc
        })
        .collect()
}
