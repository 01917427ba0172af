//! Square phase-space grids and their file formats.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `W(x, p)` sampled at the centres of an `M × M` grid over `[-extent, extent]²`.
///
/// Values are stored row-major with the row index running over `p` and the
/// column index over `x`, both ascending. With `M` odd the origin is a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub size_m: usize,
    pub extent: f64,
    pub values: Vec<f64>,
    /// Set when the grid is known to clip the state it represents.
    pub warning: Option<String>,
}

impl WignerGrid {
    pub fn zeros(size_m: usize, extent: f64) -> Result<Self> {
        if size_m.is_multiple_of(2) || size_m < 3 {
            return Err(Error::invalid(format!("grid size must be odd and >= 3, got {size_m}")));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::invalid(format!("grid extent must be > 0, got {extent}")));
        }
        Ok(Self {
            size_m,
            extent,
            values: vec![0.0; size_m * size_m],
            warning: None,
        })
    }

    pub fn from_fn(size_m: usize, extent: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut g = Self::zeros(size_m, extent)?;
        for ip in 0..size_m {
            let p = g.coord(ip);
            for ix in 0..size_m {
                g.values[ip * size_m + ix] = f(g.coord(ix), p);
            }
        }
        Ok(g)
    }

    pub fn with_values(size_m: usize, extent: f64, values: Vec<f64>) -> Result<Self> {
        let mut g = Self::zeros(size_m, extent)?;
        if values.len() != size_m * size_m {
            return Err(Error::invalid(format!(
                "expected {} grid values, got {}",
                size_m * size_m,
                values.len()
            )));
        }
        g.values = values;
        Ok(g)
    }

    /// Pixel pitch `Δx = Δp = 2·extent / M`.
    pub fn step(&self) -> f64 {
        2.0 * self.extent / self.size_m as f64
    }

    /// Coordinate of the centre of pixel `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        -self.extent + (i as f64 + 0.5) * self.step()
    }

    pub fn at(&self, ix: usize, ip: usize) -> f64 {
        self.values[ip * self.size_m + ix]
    }

    /// `Σ W Δx Δp`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.step().powi(2)
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// First and second moments of the grid treated as a density.
    pub fn moments(&self) -> (Vector2<f64>, Matrix2<f64>) {
        self.weighted_moments(|v| v)
    }

    pub(crate) fn weighted_moments(&self, w: impl Fn(f64) -> f64) -> (Vector2<f64>, Matrix2<f64>) {
        let m = self.size_m;
        let mut s0 = 0.0;
        let mut s1 = Vector2::zeros();
        for ip in 0..m {
            let p = self.coord(ip);
            for ix in 0..m {
                let v = w(self.values[ip * m + ix]);
                s0 += v;
                s1 += v * Vector2::new(self.coord(ix), p);
            }
        }
        let mean = s1 / s0;
        let mut s2 = Matrix2::zeros();
        for ip in 0..m {
            let p = self.coord(ip);
            for ix in 0..m {
                let v = w(self.values[ip * m + ix]);
                let d = Vector2::new(self.coord(ix), p) - mean;
                s2 += v * d * d.transpose();
            }
        }
        (mean, s2 / s0)
    }

    /// Root-mean-square difference over the peak-to-peak range of `reference`.
    pub fn nrmse(&self, reference: &WignerGrid) -> Result<f64> {
        if self.size_m != reference.size_m {
            return Err(Error::invalid("NRMSE between grids of different size"));
        }
        let n = self.values.len() as f64;
        let mse = self
            .values
            .iter()
            .zip(&reference.values)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / n;
        let (lo, hi) = reference
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Ok(mse.sqrt() / (hi - lo))
    }

    /// Rotates the sampled function by +90° about the origin: `W'(x, p) = W(p, -x)`.
    pub fn rotated_90(&self) -> WignerGrid {
        let m = self.size_m;
        let mut out = self.clone();
        for ip in 0..m {
            for ix in 0..m {
                // W'(x_ix, p_ip) = W(x = p_ip, p = -x_ix)
                out.values[ip * m + ix] = self.at(ip, m - 1 - ix);
            }
        }
        out
    }

    // ---- CSV ---------------------------------------------------------------

    pub fn to_csv_string(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# M={},extent={:?}", self.size_m, self.extent).unwrap();
        for row in self.values.chunks(self.size_m) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(s, "{}", line.join(",")).unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse_csv(std::io::BufReader::new(file), &path.display().to_string())
    }

    pub fn parse_csv(reader: impl BufRead, name: &str) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(format!("{name}:1"), "empty grid file"))??;
        let (size_m, extent) = parse_grid_header(&header)
            .ok_or_else(|| Error::format(format!("{name}:1"), "expected '# M=<odd>,extent=<real>'"))?;
        let mut values = Vec::with_capacity(size_m * size_m);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 2;
            let row: Vec<&str> = line.split(',').collect();
            if row.len() != size_m {
                return Err(Error::format(
                    format!("{name}:{lineno}"),
                    format!("expected {size_m} fields, found {}", row.len()),
                ));
            }
            for (j, f) in row.iter().enumerate() {
                let v: f64 = f.trim().parse().map_err(|_| {
                    Error::format(format!("{name}:{lineno}:{}", j + 1), format!("not a number: {f:?}"))
                })?;
                values.push(v);
            }
        }
        Self::with_values(size_m, extent, values)
            .map_err(|e| Error::format(name.to_string(), e.to_string()))
    }

    // ---- PGM ---------------------------------------------------------------

    /// 16-bit binary PGM, linearly scaled between the grid minimum and
    /// maximum. Increasing `p` points up in the image.
    pub fn to_pgm(&self) -> (Vec<u8>, PgmScale) {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let m = self.size_m;
        let mut out = format!("P5\n{m} {m}\n65535\n").into_bytes();
        for ip in (0..m).rev() {
            for ix in 0..m {
                let q = ((self.at(ix, ip) - lo) / span * 65535.0).round().clamp(0.0, 65535.0) as u16;
                out.extend_from_slice(&q.to_be_bytes());
            }
        }
        (
            out,
            PgmScale {
                min: lo,
                max: hi,
                size_m: m,
                extent: self.extent,
            },
        )
    }

    /// Writes `<path>` and the `<path>.json` sidecar holding the scale.
    pub fn write_pgm(&self, path: &Path) -> Result<PgmScale> {
        let (bytes, scale) = self.to_pgm();
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        let mut side = path.as_os_str().to_owned();
        side.push(".json");
        std::fs::write(side, serde_json::to_string_pretty(&scale)?)?;
        Ok(scale)
    }
}

/// Scale of a rendered PGM: pixel 0 maps to `min` and 65535 to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgmScale {
    pub min: f64,
    pub max: f64,
    pub size_m: usize,
    pub extent: f64,
}

fn parse_grid_header(h: &str) -> Option<(usize, f64)> {
    let h = h.trim().strip_prefix('#')?.trim();
    let mut m = None;
    let mut extent = None;
    for kv in h.split(',') {
        let (k, v) = kv.split_once('=')?;
        match k.trim() {
            "M" => m = v.trim().parse().ok(),
            "extent" => extent = v.trim().parse().ok(),
            _ => {}
        }
    }
    Some((m?, extent?))
}
