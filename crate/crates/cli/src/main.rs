use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use wigner_ct::bolometry::{calibrate, CalibrationSample};
use wigner_ct::modelfit::{gen_dataset, nn_train, DatasetConfig, TrainConfig};
use wigner_ct::pipeline::{reconstruct, simulate, ExperimentConfig, Method, ReconstructOptions, Simulation};
use wigner_ct::sparse::SolverConfig;
use wigner_ct::{Error, Result, WignerGrid};

/// Synthetic homodyne-assisted bolometry and Wigner-function tomography.
#[derive(Parser)]
#[command(name = "wigner-ct", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the thermometer spectra of one experiment.
    Simulate {
        /// Experiment configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Overrides the noise seed of the configuration.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: Out,
    },
    /// Reconstruct the Wigner function from a simulated run.
    Reconstruct {
        /// Directory written by `simulate`.
        run: PathBuf,
        /// fbp, cs-dct, cs-wavelet, lls or nn; defaults to the run's method.
        #[arg(long)]
        method: Option<Method>,
        /// Trained model, required by `nn`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Solver settings for the compressed-sensing methods (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: Out,
    },
    /// Fit calibration curves to (lineshape, photon statistics) samples.
    Calibrate {
        /// JSON array of samples.
        samples: PathBuf,
        #[command(flatten)]
        out: Out,
    },
    /// Generate a training set and train the network.
    Train {
        /// Training job (JSON); defaults are used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: Out,
    },
    /// Render a grid CSV as a 16-bit PGM.
    Render {
        grid: PathBuf,
        #[command(flatten)]
        out: Out,
    },
}

#[derive(Args)]
struct Out {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct TrainJob {
    count: usize,
    seed: u64,
    dataset: DatasetConfig,
    train: TrainConfig,
}

impl Default for TrainJob {
    fn default() -> Self {
        Self {
            count: 32768,
            seed: 1,
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("{}:{}:{}", path.display(), e.line(), e.column()), e.to_string()))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)?).map_err(|e| Error::from(e).context(path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).context(dir.display()))
}

fn run(cmd: Cmd) -> Result<serde_json::Value> {
    match cmd {
        Cmd::Simulate { config, seed, out } => {
            let mut cfg: ExperimentConfig = read_json(&config)?;
            if let Some(s) = seed {
                cfg.noise.seed = s;
            }
            let sim = simulate(&cfg).map_err(|e| e.context("simulate"))?;
            sim.write(&out.out)?;
            Ok(serde_json::json!({ "angles": sim.manifest.angles.len(), "out": out.out }))
        }
        Cmd::Reconstruct {
            run,
            method,
            model,
            config,
            out,
        } => {
            let solver: Option<SolverConfig> = config.as_deref().map(read_json).transpose()?;
            let sim = Simulation::read(&run)?;
            let r = reconstruct(&sim, &ReconstructOptions { method, model, solver }).map_err(|e| e.context("reconstruct"))?;
            r.write(&out.out)?;
            Ok(serde_json::json!({ "method": r.report.method, "metrics": r.report.metrics, "warnings": r.report.warnings }))
        }
        Cmd::Calibrate { samples, out } => {
            let samples: Vec<CalibrationSample> = read_json(&samples)?;
            let curves = calibrate(&samples).map_err(|e| e.context("calibrate"))?;
            create_dir(&out.out)?;
            write_json(&out.out.join("curves.json"), &curves)?;
            Ok(serde_json::json!({
                "n_residual_rms": curves.n_residual_rms,
                "var_residual_rms": curves.var_residual_rms,
                "monotone": curves.monotone,
            }))
        }
        Cmd::Train { config, seed, out } => {
            let mut job: TrainJob = config.as_deref().map(read_json).transpose()?.unwrap_or_default();
            if let Some(s) = seed {
                job.seed = s;
            }
            job.train.seed = job.seed;
            job.train.validate()?;
            let ds = gen_dataset(job.count, job.seed, &job.dataset).map_err(|e| e.context("dataset"))?;
            let (model, report) = nn_train(&ds, &job.train).map_err(|e| e.context("train"))?;
            create_dir(&out.out)?;
            model.write(&out.out.join("model.json"))?;
            write_json(&out.out.join("train_report.json"), &report)?;
            Ok(serde_json::json!({
                "config_hash": model.config_hash,
                "weights_hash": model.weights_hash(),
                "validation_mae": report.validation_mae.last(),
            }))
        }
        Cmd::Render { grid, out } => {
            let g = WignerGrid::read_csv(&grid)?;
            create_dir(&out.out)?;
            let stem = grid.file_stem().map_or_else(|| "grid".into(), |s| s.to_string_lossy().into_owned());
            let path = out.out.join(format!("{stem}.pgm"));
            let scale = g.write_pgm(&path)?;
            Ok(serde_json::json!({ "image": path, "scale": scale }))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        2
    } else if e.is_io() {
        4
    } else {
        3
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
