//! Small dense network mapping quadrature statistics to state parameters.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gaussian::{GaussianParams, QuadratureStats};
use crate::rng;

pub const OUTPUTS: [&str; 5] = ["n_thermal", "zeta_re", "zeta_im", "alpha_re", "alpha_im"];
const FORMAT: &str = "wigner-ct-mlp";

/// Fully connected network, `tanh` on hidden layers and a linear output.
/// Parameters are stored flat, layer by layer, each as the row-major
/// `out × in` weight matrix followed by the biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub dims: Vec<usize>,
    pub params: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(dims: &[usize], rng: &mut impl Rng) -> Self {
        let mut params = Vec::new();
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-a..a)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            dims: dims.to_vec(),
            params,
        }
    }

    pub fn param_count(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut off = 0;
        self.dims.windows(2).map(move |w| {
            let o = off;
            off += w[0] * w[1] + w[1];
            (o, w[0], w[1])
        })
    }

    /// Activations of every layer, input first.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n_layers = self.dims.len() - 1;
        let mut acts = vec![x.to_vec()];
        for (l, (off, nin, nout)) in self.layers().enumerate() {
            let input = &acts[l];
            let w = &self.params[off..off + nin * nout];
            let b = &self.params[off + nin * nout..off + nin * nout + nout];
            let out: Vec<f64> = (0..nout)
                .map(|o| {
                    let z = b[o] + w[o * nin..(o + 1) * nin].iter().zip(input).map(|(a, c)| a * c).sum::<f64>();
                    if l + 1 < n_layers {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.activations(x).pop().unwrap()
    }

    /// Mean squared error over the batch and outputs, and its gradient.
    pub fn loss_and_grad(&self, xs: &[&[f64]], ts: &[&[f64]]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let n_out = *self.dims.last().unwrap();
        let scale = 1.0 / (xs.len() * n_out) as f64;
        let layers: Vec<(usize, usize, usize)> = self.layers().collect();
        let mut loss = 0.0;
        for (x, t) in xs.iter().zip(ts) {
            let acts = self.activations(x);
            let y = acts.last().unwrap();
            let mut delta: Vec<f64> = y.iter().zip(t.iter()).map(|(a, b)| 2.0 * scale * (a - b)).collect();
            loss += y.iter().zip(t.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * scale;
            for (l, &(off, nin, nout)) in layers.iter().enumerate().rev() {
                let input = &acts[l];
                for o in 0..nout {
                    let row = off + o * nin;
                    for i in 0..nin {
                        grad[row + i] += delta[o] * input[i];
                    }
                    grad[off + nin * nout + o] += delta[o];
                }
                if l > 0 {
                    let w = &self.params[off..off + nin * nout];
                    delta = (0..nin)
                        .map(|i| {
                            let back: f64 = (0..nout).map(|o| w[o * nin + i] * delta[o]).sum();
                            back * (1.0 - input[i] * input[i])
                        })
                        .collect();
                }
            }
        }
        (loss, grad)
    }

    pub fn loss(&self, xs: &[&[f64]], ts: &[&[f64]]) -> f64 {
        let n_out = *self.dims.last().unwrap();
        let s: f64 = xs
            .iter()
            .zip(ts)
            .map(|(x, t)| self.forward(x).iter().zip(t.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum();
        s / (xs.len() * n_out) as f64
    }
}

/// Per-component affine normalisation `(v − mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let n = rows.len() as f64;
        let width = rows[0].len();
        let mean: Vec<f64> = (0..width).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..width)
            .map(|j| {
                let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                // constant columns pass through unscaled
                if v > 1e-24 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (x - m) / s).collect()
    }

    fn invert(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| x * s + m).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate at the last epoch; cosine decay in between.
    pub final_learning_rate: f64,
    pub momentum: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            epochs: 60,
            batch_size: 64,
            learning_rate: 0.1,
            final_learning_rate: 5e-4,
            momentum: 0.9,
            validation_fraction: 0.1,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("layer widths, epochs and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.final_learning_rate > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Loss curves (normalised label units) and validation error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// Mean absolute error per output on the validation split, in physical units.
    pub validation_mae: Vec<f64>,
    pub train_count: usize,
    pub validation_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnModel {
    pub angles_deg: Vec<f64>,
    pub mlp: Mlp,
    pub features: Normalizer,
    pub labels: Normalizer,
    /// SHA-256 of the training configuration and dataset header.
    pub config_hash: String,
}

/// Regression targets for one state.
pub fn label_vector(p: &GaussianParams) -> [f64; 5] {
    let z = p.squeeze.as_complex();
    [p.n_thermal, z.re, z.im, p.alpha.re, p.alpha.im]
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn nn_train(ds: &Dataset, cfg: &TrainConfig) -> Result<(NnModel, TrainReport)> {
    cfg.validate()?;
    if ds.len() < 2 {
        return Err(Error::invalid("training needs at least 2 samples"));
    }
    let n_in = ds.features[0].len();
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut rng::stream(cfg.seed, "nn/split"));
    let n_val = ((ds.len() as f64) * cfg.validation_fraction).round() as usize;
    let (val_idx, train_idx) = idx.split_at(n_val);
    let mut train_idx = train_idx.to_vec();

    let raw_labels: Vec<Vec<f64>> = ds.labels.iter().map(|p| label_vector(p).to_vec()).collect();
    let train_feats: Vec<Vec<f64>> = train_idx.iter().map(|&i| ds.features[i].clone()).collect();
    let train_labels: Vec<Vec<f64>> = train_idx.iter().map(|&i| raw_labels[i].clone()).collect();
    let fnorm = Normalizer::fit(&train_feats);
    let lnorm = Normalizer::fit(&train_labels);
    let x: Vec<Vec<f64>> = ds.features.iter().map(|f| fnorm.apply(f)).collect();
    let t: Vec<Vec<f64>> = raw_labels.iter().map(|l| lnorm.apply(l)).collect();

    let mut dims = vec![n_in];
    dims.extend(&cfg.hidden);
    dims.push(OUTPUTS.len());
    let mut mlp = Mlp::new(&dims, &mut rng::stream(cfg.seed, "nn/init"));
    let mut velocity = vec![0.0; mlp.params.len()];
    let mut shuffle = rng::stream(cfg.seed, "nn/batches");

    let gather = |ids: &[usize]| -> (Vec<&[f64]>, Vec<&[f64]>) {
        (ids.iter().map(|&i| x[i].as_slice()).collect(), ids.iter().map(|&i| t[i].as_slice()).collect())
    };
    let mut report = TrainReport {
        train_loss: Vec::new(),
        validation_loss: Vec::new(),
        validation_mae: Vec::new(),
        train_count: train_idx.len(),
        validation_count: val_idx.len(),
    };
    for epoch in 0..cfg.epochs {
        let progress = epoch as f64 / (cfg.epochs.max(2) - 1) as f64;
        let lr = cfg.final_learning_rate
            + 0.5 * (cfg.learning_rate - cfg.final_learning_rate) * (1.0 + (std::f64::consts::PI * progress).cos());
        train_idx.shuffle(&mut shuffle);
        for (b, batch) in train_idx.chunks(cfg.batch_size).enumerate() {
            let (xs, ts) = gather(batch);
            let (loss, g) = mlp.loss_and_grad(&xs, &ts);
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "training loss became {loss} at epoch {epoch}, batch {b} (learning rate {lr:.3e})"
                )));
            }
            for ((p, v), gi) in mlp.params.iter_mut().zip(&mut velocity).zip(&g) {
                *v = cfg.momentum * *v - lr * gi;
                *p += *v;
            }
        }
        let (xs, ts) = gather(&train_idx);
        report.train_loss.push(mlp.loss(&xs, &ts));
        if !val_idx.is_empty() {
            let (xs, ts) = gather(val_idx);
            report.validation_loss.push(mlp.loss(&xs, &ts));
        }
    }

    let model = NnModel {
        angles_deg: ds.header.config.angles_deg.clone(),
        mlp,
        features: fnorm,
        labels: lnorm,
        config_hash: {
            let mut h = Sha256::new();
            h.update(serde_json::to_vec(cfg)?);
            h.update(serde_json::to_vec(&ds.header)?);
            hex(&h.finalize())
        },
    };
    if !val_idx.is_empty() {
        let mut mae = vec![0.0; OUTPUTS.len()];
        for &i in val_idx {
            let y = model.predict(&ds.features[i]);
            for (k, m) in mae.iter_mut().enumerate() {
                *m += (y[k] - raw_labels[i][k]).abs() / val_idx.len() as f64;
            }
        }
        report.validation_mae = mae;
    }
    Ok((model, report))
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    weights: String,
    biases: String,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    format: String,
    version: u32,
    angles_deg: Vec<f64>,
    layer_dims: Vec<usize>,
    activation: String,
    outputs: Vec<String>,
    layers: Vec<LayerJson>,
    feature_norm: Normalizer,
    label_norm: Normalizer,
    config_hash: String,
    weights_hash: String,
}

fn encode(v: &[f64]) -> String {
    B64.encode(v.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>())
}

fn decode(s: &str, expected: usize) -> std::result::Result<Vec<f64>, String> {
    let bytes = B64.decode(s).map_err(|e| e.to_string())?;
    if bytes.len() != 8 * expected {
        return Err(format!("expected {expected} values, found {} bytes", bytes.len()));
    }
    Ok(bytes.chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

impl NnModel {
    /// Raw network output in physical units, `OUTPUTS` order.
    pub fn predict(&self, features: &[f64]) -> Vec<f64> {
        self.labels.invert(&self.mlp.forward(&self.features.apply(features)))
    }

    /// SHA-256 over the little-endian parameter bytes.
    pub fn weights_hash(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.mlp.params {
            h.update(p.to_le_bytes());
        }
        hex(&h.finalize())
    }

    pub fn to_json(&self) -> String {
        let layers = self
            .mlp
            .layers()
            .map(|(off, nin, nout)| LayerJson {
                weights: encode(&self.mlp.params[off..off + nin * nout]),
                biases: encode(&self.mlp.params[off + nin * nout..off + nin * nout + nout]),
            })
            .collect();
        let doc = ModelJson {
            format: FORMAT.into(),
            version: 1,
            angles_deg: self.angles_deg.clone(),
            layer_dims: self.mlp.dims.clone(),
            activation: "tanh".into(),
            outputs: OUTPUTS.map(String::from).to_vec(),
            layers,
            feature_norm: self.features.clone(),
            label_norm: self.labels.clone(),
            config_hash: self.config_hash.clone(),
            weights_hash: self.weights_hash(),
        };
        serde_json::to_string_pretty(&doc).expect("model serialises")
    }

    pub fn from_json(s: &str, name: &str) -> Result<Self> {
        let err = |m: String| Error::format(name.to_string(), m);
        let doc: ModelJson = serde_json::from_str(s).map_err(|e| err(e.to_string()))?;
        if doc.format != FORMAT || doc.version != 1 {
            return Err(err(format!("unsupported model format {} v{}", doc.format, doc.version)));
        }
        let dims = doc.layer_dims;
        if dims.len() < 2 || dims.len() - 1 != doc.layers.len() || dims[dims.len() - 1] != OUTPUTS.len() {
            return Err(err("layer dimensions do not match the layer list".into()));
        }
        if dims[0] != 2 * doc.angles_deg.len() || doc.feature_norm.mean.len() != dims[0] {
            return Err(err("input width does not match the angle set".into()));
        }
        let mut params = Vec::with_capacity(Mlp::param_count(&dims));
        for (l, (layer, w)) in doc.layers.iter().zip(dims.windows(2)).enumerate() {
            params.extend(decode(&layer.weights, w[0] * w[1]).map_err(|e| err(format!("layer {l} weights: {e}")))?);
            params.extend(decode(&layer.biases, w[1]).map_err(|e| err(format!("layer {l} biases: {e}")))?);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(err("non-finite parameter".into()));
        }
        let model = Self {
            angles_deg: doc.angles_deg,
            mlp: Mlp { dims, params },
            features: doc.feature_norm,
            labels: doc.label_norm,
            config_hash: doc.config_hash,
        };
        if model.weights_hash() != doc.weights_hash {
            return Err(err("weights hash mismatch".into()));
        }
        Ok(model)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, &path.display().to_string())
    }
}

/// Parameters predicted from statistics at exactly the training angles.
pub fn nn_infer(model: &NnModel, stats: &[QuadratureStats]) -> Result<GaussianParams> {
    let mut features = Vec::with_capacity(2 * model.angles_deg.len());
    for &a in &model.angles_deg {
        let q = stats
            .iter()
            .find(|q| (q.angle_deg - a).abs() < 1e-9)
            .ok_or_else(|| Error::invalid(format!("model was trained at {:?} deg; no statistics at {a} deg", model.angles_deg)))?;
        features.push(q.mean);
        features.push(q.variance);
    }
    if stats.len() != model.angles_deg.len() {
        return Err(Error::invalid(format!(
            "model was trained on {} angles, got {}",
            model.angles_deg.len(),
            stats.len()
        )));
    }
    let y = model.predict(&features);
    GaussianParams::from_parts(y[0].max(0.0), Complex64::new(y[1], y[2]), Complex64::new(y[3], y[4]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelfit::dataset::{gen_dataset, DatasetConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..3 {
            let mlp = Mlp::new(&[6, 64, 64, 5], &mut rng);
            let xs: Vec<Vec<f64>> = (0..2).map(|_| (0..6).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let ts: Vec<Vec<f64>> = (0..2).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let xr: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let tr: Vec<&[f64]> = ts.iter().map(Vec::as_slice).collect();
            let (_, g) = mlp.loss_and_grad(&xr, &tr);
            let h = 1e-5;
            let mut worst: f64 = 0.0;
            for k in 0..mlp.params.len() {
                let mut p = mlp.clone();
                p.params[k] += h;
                let up = p.loss(&xr, &tr);
                p.params[k] -= 2.0 * h;
                let down = p.loss(&xr, &tr);
                let fd = (up - down) / (2.0 * h);
                // absolute floor for parameters the loss barely depends on
                let rel = (fd - g[k]).abs() / (fd.abs().max(g[k].abs()).max(1e-6));
                worst = worst.max(rel);
            }
            assert!(worst <= 1e-5, "trial {trial}: worst relative error {worst:e}");
        }
    }

    #[test]
    fn constant_labels_are_learned() {
        let cfg = DatasetConfig::default();
        let mut ds = gen_dataset(512, 2, &cfg).unwrap();
        let c = GaussianParams::from_parts(0.3, Complex64::new(0.1, 0.2), Complex64::new(-0.4, 0.5)).unwrap();
        ds.labels.iter_mut().for_each(|p| *p = c);
        let tc = TrainConfig {
            epochs: 300,
            final_learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let (model, report) = nn_train(&ds, &tc).unwrap();
        let l = &report.train_loss;
        assert!(*l.last().unwrap() < 1e-3 * l[0], "{l:?}");
        let y = model.predict(&ds.features[0]);
        for (a, b) in y.iter().zip(label_vector(&c)) {
            assert!((a - b).abs() < 1e-2, "{a} vs {b}");
        }
    }

    #[test]
    fn loss_decreases_and_model_round_trips() {
        let ds = gen_dataset(2000, 5, &DatasetConfig::default()).unwrap();
        let tc = TrainConfig {
            epochs: 15,
            ..TrainConfig::default()
        };
        let (model, report) = nn_train(&ds, &tc).unwrap();
        let l = &report.train_loss;
        assert!(l.last().unwrap() < &(0.5 * l[0]), "{l:?}");
        let decreasing = l.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(decreasing >= l.len() - 3, "{l:?}");

        let back = NnModel::from_json(&model.to_json(), "mem").unwrap();
        assert_eq!(back, model);
        let (again, _) = nn_train(&ds, &tc).unwrap();
        assert_eq!(again.weights_hash(), model.weights_hash());
        assert_eq!(again.config_hash, model.config_hash);

        let tampered = model.to_json().replace(&model.weights_hash(), &"0".repeat(64));
        assert!(NnModel::from_json(&tampered, "mem").is_err());
    }

    #[test]
    fn infer_checks_the_angle_set() {
        let ds = gen_dataset(64, 1, &DatasetConfig::default()).unwrap();
        let (model, _) = nn_train(
            &ds,
            &TrainConfig {
                epochs: 1,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let stats = |angles: &[f64]| -> Vec<QuadratureStats> {
            angles
                .iter()
                .map(|&a| crate::gaussian::quadrature_stats(&GaussianParams::vacuum(), a).unwrap())
                .collect()
        };
        assert!(nn_infer(&model, &stats(&[0.0, 60.0, 120.0])).is_ok());
        assert!(nn_infer(&model, &stats(&[120.0, 0.0, 60.0])).is_ok());
        assert!(nn_infer(&model, &stats(&[0.0, 45.0, 90.0])).unwrap_err().is_validation());
        assert!(nn_infer(&model, &stats(&[0.0, 60.0])).is_err());
    }

    #[test]
    fn nan_loss_aborts() {
        let ds = gen_dataset(64, 1, &DatasetConfig::default()).unwrap();
        let tc = TrainConfig {
            learning_rate: 1e200,
            final_learning_rate: 1e200,
            epochs: 5,
            ..TrainConfig::default()
        };
        assert!(matches!(nn_train(&ds, &tc), Err(Error::Numerical(_))));
    }
}
