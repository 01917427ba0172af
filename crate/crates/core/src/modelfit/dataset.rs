//! Synthetic training sets: quadrature statistics of random Gaussian states.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{quadrature_stats, GaussianParams, SqueezeParam};
use crate::rng;

const MAGIC: &[u8; 8] = b"WCTDSET1";

/// Sampling box: `n̄_T` and `r` uniform on their intervals, `θ` uniform on
/// `[0, 2π)`, `α` uniform on the disc of radius `alpha_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub n_thermal: (f64, f64),
    pub r: (f64, f64),
    pub alpha_max: f64,
}

impl Default for ParamBox {
    fn default() -> Self {
        Self {
            n_thermal: (0.0, 1.0),
            r: (0.0, 0.5),
            alpha_max: 1.5,
        }
    }
}

impl ParamBox {
    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo;
        if !ok(self.n_thermal) || !ok(self.r) || !(self.alpha_max > 0.0 && self.alpha_max.is_finite()) {
            return Err(Error::invalid(format!("empty or invalid parameter box {self:?}")));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng) -> GaussianParams {
        let n = rng.random_range(self.n_thermal.0..self.n_thermal.1);
        let r = rng.random_range(self.r.0..self.r.1);
        let theta = rng.random_range(0.0..TAU);
        let rad = self.alpha_max * rng.random::<f64>().sqrt();
        let phase = rng.random_range(0.0..TAU);
        GaussianParams::new(
            n,
            SqueezeParam::new(r, theta).expect("sampled squeeze is valid"),
            Complex64::from_polar(rad, phase),
        )
        .expect("sampled state is valid")
    }
}

/// Gaussian noise added to the features: standard deviation of each mean and
/// each variance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureNoise {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub angles_deg: Vec<f64>,
    #[serde(default)]
    pub ranges: ParamBox,
    #[serde(default)]
    pub noise: FeatureNoise,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            angles_deg: vec![0.0, 60.0, 120.0],
            ranges: ParamBox::default(),
            noise: FeatureNoise::default(),
        }
    }
}

/// Stored alongside the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub count: usize,
    pub seed: u64,
    pub config: DatasetConfig,
    /// Names of the `f64` fields of one record, in order.
    pub fields: Vec<String>,
}

/// Labels are the generating states; features are `(mean, variance)` per
/// angle, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub labels: Vec<GaussianParams>,
    pub features: Vec<Vec<f64>>,
}

fn field_names(angles: &[f64]) -> Vec<String> {
    let mut f: Vec<String> = ["n_thermal", "r", "theta", "alpha_re", "alpha_im"].map(String::from).to_vec();
    for a in angles {
        f.push(format!("mean@{a}"));
        f.push(format!("var@{a}"));
    }
    f
}

/// Features of one state at the given angles, without noise.
pub fn features_of(params: &GaussianParams, angles_deg: &[f64]) -> Result<Vec<f64>> {
    let mut f = Vec::with_capacity(2 * angles_deg.len());
    for &a in angles_deg {
        let q = quadrature_stats(params, a)?;
        f.push(q.mean);
        f.push(q.variance);
    }
    Ok(f)
}

pub fn gen_dataset(count: usize, seed: u64, config: &DatasetConfig) -> Result<Dataset> {
    config.ranges.validate()?;
    if config.angles_deg.is_empty() {
        return Err(Error::invalid("dataset needs at least one angle"));
    }
    if !(config.noise.mean >= 0.0 && config.noise.variance >= 0.0) {
        return Err(Error::invalid("feature noise must be >= 0"));
    }
    let mut labels_rng = rng::stream(seed, "dataset/labels");
    let mut noise_rng = rng::stream(seed, "dataset/noise");
    let mean_noise = Normal::new(0.0, config.noise.mean).expect("checked above");
    let var_noise = Normal::new(0.0, config.noise.variance).expect("checked above");
    let mut labels = Vec::with_capacity(count);
    let mut features = Vec::with_capacity(count);
    for _ in 0..count {
        let p = config.ranges.sample(&mut labels_rng);
        let mut f = features_of(&p, &config.angles_deg)?;
        for pair in f.chunks_mut(2) {
            pair[0] += mean_noise.sample(&mut noise_rng);
            pair[1] += var_noise.sample(&mut noise_rng);
        }
        labels.push(p);
        features.push(f);
    }
    Ok(Dataset {
        header: DatasetHeader {
            version: 1,
            count,
            seed,
            config: config.clone(),
            fields: field_names(&config.angles_deg),
        },
        labels,
        features,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `MAGIC`, little-endian `u32` header length, header JSON, then one
    /// record of little-endian `f64`s per sample.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serialises");
        let mut out = Vec::with_capacity(12 + header.len() + self.len() * self.header.fields.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (p, f) in self.labels.iter().zip(&self.features) {
            let head = [p.n_thermal, p.squeeze.r(), p.squeeze.theta(), p.alpha.re, p.alpha.im];
            for v in head.iter().chain(f) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], name: &str) -> Result<Self> {
        let err = |msg: String| Error::format(name.to_string(), msg);
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(err("not a dataset file (bad magic)".into()));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = bytes.get(12..12 + hlen).ok_or_else(|| err("truncated header".into()))?;
        let header: DatasetHeader = serde_json::from_slice(body).map_err(|e| err(format!("header: {e}")))?;
        let width = header.fields.len();
        if width != 5 + 2 * header.config.angles_deg.len() {
            return Err(err(format!("{width} fields do not match the angle count")));
        }
        let data = &bytes[12 + hlen..];
        if data.len() != header.count * width * 8 {
            return Err(err(format!(
                "expected {} records of {width} values, found {} bytes",
                header.count,
                data.len()
            )));
        }
        let mut labels = Vec::with_capacity(header.count);
        let mut features = Vec::with_capacity(header.count);
        for (i, rec) in data.chunks(width * 8).enumerate() {
            let v: Vec<f64> = rec.chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let p = SqueezeParam::new(v[1], v[2])
                .and_then(|s| GaussianParams::new(v[0], s, Complex64::new(v[3], v[4])))
                .map_err(|e| err(format!("record {i}: {e}")))?;
            labels.push(p);
            features.push(v[5..].to_vec());
        }
        Ok(Self {
            header,
            labels,
            features,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_reproducible() {
        let cfg = DatasetConfig::default();
        assert!(gen_dataset(0, 1, &cfg).unwrap().is_empty());
        let a = gen_dataset(50, 9, &cfg).unwrap();
        let b = gen_dataset(50, 9, &cfg).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_ne!(a.to_bytes(), gen_dataset(50, 10, &cfg).unwrap().to_bytes());
    }

    #[test]
    fn rejects_empty_box() {
        let cfg = DatasetConfig {
            ranges: ParamBox {
                r: (0.3, 0.3),
                ..ParamBox::default()
            },
            ..DatasetConfig::default()
        };
        assert!(gen_dataset(10, 1, &cfg).unwrap_err().is_validation());
    }

    #[test]
    fn bytes_round_trip() {
        let cfg = DatasetConfig {
            noise: FeatureNoise {
                mean: 0.02,
                variance: 0.05,
            },
            ..DatasetConfig::default()
        };
        let d = gen_dataset(20, 3, &cfg).unwrap();
        let back = Dataset::from_bytes(&d.to_bytes(), "mem").unwrap();
        assert_eq!(back.features, d.features);
        for (a, b) in back.labels.iter().zip(&d.labels) {
            assert_eq!(a.n_thermal, b.n_thermal);
            assert_eq!(a.alpha, b.alpha);
            assert!((a.squeeze.as_complex() - b.squeeze.as_complex()).norm() < 1e-15);
        }
        let mut bad = d.to_bytes();
        bad.pop();
        assert!(Dataset::from_bytes(&bad, "mem").unwrap_err().is_io());
    }

    #[test]
    fn noiseless_features_match_the_closed_forms() {
        let d = gen_dataset(5, 4, &DatasetConfig::default()).unwrap();
        for (p, f) in d.labels.iter().zip(&d.features) {
            let q = quadrature_stats(p, 60.0).unwrap();
            assert_eq!(f[2], q.mean);
            assert_eq!(f[3], q.variance);
        }
    }
}
