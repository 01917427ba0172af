//! Stacks of quadrature projections.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::projector::Geometry;
use crate::error::{ensure_finite, Error, Result};
use crate::gaussian::QuadratureStats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "rows", rename_all = "lowercase")]
pub enum Profiles {
    /// Sampled `h_φ(t)` at the bin centres.
    Sampled(Vec<Vec<f64>>),
    /// `(mean, variance)` of a Gaussian `h_φ`.
    Gaussian(Vec<(f64, f64)>),
}

/// Projections at angles in `[0°, 180°)` on `bins` detector bins spanning
/// `[-range, range]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sinogram {
    pub angles_deg: Vec<f64>,
    pub bins: usize,
    pub range: f64,
    pub profiles: Profiles,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

fn gaussian_pdf(t: f64, mean: f64, var: f64) -> f64 {
    (-(t - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

impl Sinogram {
    pub fn geometry(&self) -> Geometry {
        Geometry {
            size: self.bins,
            extent: self.range,
        }
    }

    pub fn bin_centres(&self) -> Vec<f64> {
        let g = self.geometry();
        (0..self.bins).map(|j| g.coord(j)).collect()
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }

    /// Checks shapes, angle range and profile positivity.
    pub fn validate(&self) -> Result<()> {
        if self.angles_deg.is_empty() {
            return Err(Error::invalid("sinogram has no angles"));
        }
        if self.bins < 2 || !(self.range.is_finite() && self.range > 0.0) {
            return Err(Error::invalid("sinogram needs >= 2 bins and a positive range"));
        }
        for &a in &self.angles_deg {
            ensure_finite("angle", a)?;
            if !(0.0..180.0).contains(&a) {
                return Err(Error::invalid(format!("projection angle {a} outside [0, 180)")));
            }
        }
        match &self.profiles {
            Profiles::Sampled(rows) => {
                if rows.len() != self.angles_deg.len() {
                    return Err(Error::invalid("one profile per angle required"));
                }
                for (a, row) in self.angles_deg.iter().zip(rows) {
                    if row.len() != self.bins {
                        return Err(Error::invalid(format!(
                            "profile at {a} deg has {} bins, expected {}",
                            row.len(),
                            self.bins
                        )));
                    }
                    if row.iter().any(|v| !v.is_finite() || *v < -1e-12) {
                        return Err(Error::invalid(format!("profile at {a} deg is negative or non-finite")));
                    }
                }
            }
            Profiles::Gaussian(stats) => {
                if stats.len() != self.angles_deg.len() {
                    return Err(Error::invalid("one (mean, variance) pair per angle required"));
                }
                if stats.iter().any(|(m, v)| !m.is_finite() || !(*v > 0.0)) {
                    return Err(Error::invalid("Gaussian profiles need finite means and positive variances"));
                }
            }
        }
        Ok(())
    }

    /// Gaussian profiles from quadrature statistics at angles in `[0°, 180°)`.
    pub fn from_stats(stats: &[QuadratureStats], bins: usize, range: f64) -> Result<Self> {
        let s = Self {
            angles_deg: stats.iter().map(|q| q.angle_deg).collect(),
            bins,
            range,
            profiles: Profiles::Gaussian(stats.iter().map(|q| (q.mean, q.variance)).collect()),
            warning: None,
        };
        s.validate()?;
        Ok(s.with_range_check())
    }

    /// Folds statistics covering a full turn onto `[0°, 180°)`.
    ///
    /// The projection at `φ + 180°` is the mirror image of the one at `φ`,
    /// so each pair is averaged with the sign of the mean flipped.
    pub fn fold_full_turn(stats: &[QuadratureStats], bins: usize, range: f64) -> Result<Self> {
        let n = stats.len();
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "folding needs an even number of angles over 360 deg, got {n}"
            )));
        }
        crate::bolometry::check_uniform_coverage(&stats.iter().map(|q| q.angle_deg).collect::<Vec<_>>(), 360.0)?;
        let mut sorted: Vec<QuadratureStats> = stats
            .iter()
            .map(|q| QuadratureStats {
                angle_deg: q.angle_deg.rem_euclid(360.0),
                ..*q
            })
            .collect();
        sorted.sort_by(|a, b| a.angle_deg.total_cmp(&b.angle_deg));
        let half = n / 2;
        let folded: Vec<QuadratureStats> = (0..half)
            .map(|i| {
                let (a, b) = (sorted[i], sorted[i + half]);
                QuadratureStats {
                    angle_deg: a.angle_deg,
                    mean: 0.5 * (a.mean - b.mean),
                    variance: 0.5 * (a.variance + b.variance),
                }
            })
            .collect();
        Self::from_stats(&folded, bins, range)
    }

    fn with_range_check(mut self) -> Self {
        if let Profiles::Gaussian(stats) = &self.profiles {
            let reach = stats
                .iter()
                .map(|(m, v)| m.abs() + 5.0 * v.sqrt())
                .fold(0.0, f64::max);
            if reach > self.range {
                self.warning = Some(format!(
                    "profile 5-sigma reach {reach:.3} exceeds detector half-width {:.3}",
                    self.range
                ));
            }
        }
        self
    }

    /// Profiles sampled on the bin centres. Gaussian profiles are evaluated
    /// analytically; sampled ones are returned as they are.
    pub fn sampled(&self) -> Vec<Vec<f64>> {
        match &self.profiles {
            Profiles::Sampled(rows) => rows.clone(),
            Profiles::Gaussian(stats) => {
                let t = self.bin_centres();
                stats
                    .iter()
                    .map(|&(m, v)| t.iter().map(|&x| gaussian_pdf(x, m, v)).collect())
                    .collect()
            }
        }
    }

    pub fn to_sampled(&self) -> Self {
        Self {
            profiles: Profiles::Sampled(self.sampled()),
            ..self.clone()
        }
    }

    /// `Σ h Δt` per angle.
    pub fn integrals(&self) -> Vec<f64> {
        let dt = self.geometry().step();
        self.sampled().iter().map(|r| r.iter().sum::<f64>() * dt).collect()
    }

    /// The same projections relabelled for a phase-space rotation by
    /// `delta_deg`. Angles leaving `[0°, 180°)` wrap with mirrored profiles.
    pub fn rotated(&self, delta_deg: f64) -> Self {
        let mut rows: Vec<(f64, Vec<f64>)> = self
            .angles_deg
            .iter()
            .zip(self.sampled())
            .map(|(&a, mut row)| {
                let b = a + delta_deg;
                let turns = (b / 180.0).floor();
                if (turns as i64) % 2 != 0 {
                    row.reverse();
                }
                (b - 180.0 * turns, row)
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            angles_deg: rows.iter().map(|r| r.0).collect(),
            profiles: Profiles::Sampled(rows.into_iter().map(|r| r.1).collect()),
            bins: self.bins,
            range: self.range,
            warning: self.warning.clone(),
        }
    }

    /// Element-wise `a·self + b·other` on sampled profiles.
    pub fn combine(&self, a: f64, other: &Sinogram, b: f64) -> Result<Self> {
        if self.angles_deg != other.angles_deg || self.bins != other.bins || self.range != other.range {
            return Err(Error::invalid("sinograms differ in geometry"));
        }
        let rows = self
            .sampled()
            .iter()
            .zip(other.sampled())
            .map(|(x, y)| x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect())
            .collect();
        Ok(Self {
            profiles: Profiles::Sampled(rows),
            warning: None,
            ..self.clone()
        })
    }

    // ---- CSV ---------------------------------------------------------------

    pub fn to_csv_string(&self) -> String {
        let mode = match self.profiles {
            Profiles::Sampled(_) => "sampled",
            Profiles::Gaussian(_) => "gaussian",
        };
        let mut s = format!(
            "# angles={},bins={},range={:?},mode={mode}\n",
            self.angles_deg.len(),
            self.bins,
            self.range
        );
        match &self.profiles {
            Profiles::Sampled(rows) => {
                for (a, row) in self.angles_deg.iter().zip(rows) {
                    write!(s, "{a:?}").unwrap();
                    for v in row {
                        write!(s, ",{v:?}").unwrap();
                    }
                    s.push('\n');
                }
            }
            Profiles::Gaussian(stats) => {
                for (a, (m, v)) in self.angles_deg.iter().zip(stats) {
                    writeln!(s, "{a:?},{m:?},{v:?}").unwrap();
                }
            }
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
            .ok_or_else(|| Error::format(format!("{name}:1"), "empty sinogram file"))??;
        let bad_header = || Error::format(format!("{name}:1"), "expected '# angles=<n>,bins=<n>,range=<real>,mode=sampled|gaussian'");
        let body = header.trim().strip_prefix('#').ok_or_else(bad_header)?;
        let (mut n, mut bins, mut range, mut mode) = (None, None, None, None);
        for kv in body.split(',') {
            let (k, v) = kv.split_once('=').ok_or_else(bad_header)?;
            let v = v.trim();
            match k.trim() {
                "angles" => n = v.parse::<usize>().ok(),
                "bins" => bins = v.parse::<usize>().ok(),
                "range" => range = v.parse::<f64>().ok(),
                "mode" => mode = Some(v.to_string()),
                _ => {}
            }
        }
        let (n, bins, range, mode) = (
            n.ok_or_else(bad_header)?,
            bins.ok_or_else(bad_header)?,
            range.ok_or_else(bad_header)?,
            mode.ok_or_else(bad_header)?,
        );
        let width = match mode.as_str() {
            "sampled" => bins + 1,
            "gaussian" => 3,
            other => return Err(Error::format(format!("{name}:1"), format!("unknown mode {other:?}"))),
        };
        let mut angles = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 2;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width {
                return Err(Error::format(
                    format!("{name}:{lineno}"),
                    format!("expected {width} fields, found {}", fields.len()),
                ));
            }
            let mut vals = Vec::with_capacity(width);
            for (j, f) in fields.iter().enumerate() {
                vals.push(f.trim().parse::<f64>().map_err(|_| {
                    Error::format(format!("{name}:{lineno}:{}", j + 1), format!("not a number: {f:?}"))
                })?);
            }
            angles.push(vals[0]);
            rows.push(vals[1..].to_vec());
        }
        if angles.len() != n {
            return Err(Error::format(name.to_string(), format!("header declares {n} angles, found {}", angles.len())));
        }
        let profiles = if mode == "sampled" {
            Profiles::Sampled(rows)
        } else {
            Profiles::Gaussian(rows.iter().map(|r| (r[0], r[1])).collect())
        };
        let s = Self {
            angles_deg: angles,
            bins,
            range,
            profiles,
            warning: None,
        };
        s.validate().map_err(|e| Error::format(name.to_string(), e.to_string()))?;
        Ok(s.with_range_check())
    }
}
