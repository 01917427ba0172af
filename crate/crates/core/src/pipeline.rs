//! End-to-end synthetic experiment: state → homodyne-assisted bolometer
//! spectra → quadrature statistics → Wigner function.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bolometry::{
    apply_calibration, combined_stats_exact, extract_quadratures, fit_voigt, CalibrationCurves, ChainConfig,
    PhotonStats, Spectrum, Sweep, VoigtParams,
};
use crate::error::{ensure_finite, Error, Result};
use crate::gaussian::{default_extent, fidelity, moments, quadrature_stats, wigner_eval, GaussianParams, QuadratureStats};
use crate::grid::WignerGrid;
use crate::modelfit::{lls_fit, nn_infer, NnModel};
use crate::rng;
use crate::sparse::{build_measurement, solve, SolveDiagnostics, SolverConfig, SolverKind, SparseBasis};
use crate::tomography::{fbp_with, refit_gaussian, FbpOptions, FbpReport, Profiles, Sinogram};

pub const MANIFEST: &str = "manifest.json";
const SPECTRA_DIR: &str = "spectra";

/// Homodyne phases `start + k·(stop − start)/count`, `k = 0..count`. They
/// must cover 360° so that `count / 2` projection angles result after folding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSweep {
    pub start_deg: f64,
    pub stop_deg: f64,
    pub count: usize,
}

impl AngleSweep {
    /// Sweep giving `n` equally spaced projection angles from 0°.
    pub fn for_projections(n: usize) -> Self {
        Self {
            start_deg: -90.0,
            stop_deg: 270.0,
            count: 2 * n,
        }
    }

    pub fn phases(&self) -> Vec<f64> {
        let step = (self.stop_deg - self.start_deg) / self.count as f64;
        (0..self.count).map(|k| self.start_deg + k as f64 * step).collect()
    }

    fn validate(&self) -> Result<()> {
        ensure_finite("angles.start_deg", self.start_deg)?;
        ensure_finite("angles.stop_deg", self.stop_deg)?;
        if self.count < 4 || !self.count.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "angles.count must be even and >= 4 (two per projection), got {}",
                self.count
            )));
        }
        if ((self.stop_deg - self.start_deg) - 360.0).abs() > 1e-9 {
            return Err(Error::invalid("angles must span exactly one full turn (stop - start = 360)"));
        }
        Ok(())
    }
}

impl Default for AngleSweep {
    fn default() -> Self {
        Self::for_projections(36)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub size_m: usize,
    /// Half-width of the phase-space window; chosen from the state when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            size_m: 101,
            extent: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Per-component standard deviation of complex noise added to `S₁₁`.
    pub spectrum_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Fbp,
    CsDct,
    CsWavelet,
    Lls,
    Nn,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::invalid(format!("unknown method {s:?}; expected fbp, cs-dct, cs-wavelet, lls or nn")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub state: GaussianParams,
    #[serde(default)]
    pub chain: ChainConfig,
    pub beta2: f64,
    #[serde(default)]
    pub angles: AngleSweep,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default = "CalibrationCurves::reference")]
    pub calibration: CalibrationCurves,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub fbp: FbpOptions,
    /// Solver settings for the compressed-sensing methods; stored defaults
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(state: GaussianParams, beta2: f64) -> Self {
        Self {
            state,
            chain: ChainConfig::default(),
            beta2,
            angles: AngleSweep::default(),
            grid: GridSpec::default(),
            noise: NoiseSpec::default(),
            sweep: Sweep::default(),
            calibration: CalibrationCurves::reference(),
            method: Method::default(),
            fbp: FbpOptions::default(),
            solver: None,
            model: None,
            output_dir: None,
        }
    }

    pub fn from_json(s: &str, name: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::format(format!("{name}:{}:{}", e.line(), e.column()), e.to_string()))
    }

    /// Checks everything that can be checked before any work is done.
    pub fn validate(&self) -> Result<()> {
        self.chain.validate().map_err(|e| e.context("chain"))?;
        if !(self.beta2.is_finite() && self.beta2 > 0.0) {
            return Err(Error::invalid(format!("beta2 must be > 0, got {}", self.beta2)));
        }
        self.angles.validate()?;
        WignerGrid::zeros(self.grid.size_m, self.grid.extent.unwrap_or(1.0)).map_err(|e| e.context("grid"))?;
        if !(self.noise.spectrum_sigma >= 0.0 && self.noise.spectrum_sigma.is_finite()) {
            return Err(Error::invalid("noise.spectrum_sigma must be >= 0"));
        }
        if self.sweep.points < 50 || !(self.sweep.stop_hz > self.sweep.start_hz) {
            return Err(Error::invalid("sweep needs >= 50 points and stop_hz > start_hz"));
        }
        if let Some(s) = &self.solver {
            s.validate().map_err(|e| e.context("solver"))?;
        }
        self.method_ready()
    }

    fn method_ready(&self) -> Result<()> {
        let n = self.angles.count / 2;
        match self.method {
            Method::Nn if self.model.is_none() => Err(Error::invalid("method nn needs a model file")),
            Method::Lls | Method::Nn if n < 3 => Err(Error::invalid(format!("method needs >= 3 projections, got {n}"))),
            Method::CsDct | Method::CsWavelet if n >= self.grid.size_m => Err(Error::invalid(format!(
                "compressed sensing needs fewer projections ({n}) than grid rows ({})",
                self.grid.size_m
            ))),
            Method::Fbp if n < 2 => Err(Error::invalid("fbp needs >= 2 projections")),
            _ => Ok(()),
        }
    }

    fn extent(&self) -> f64 {
        self.grid.extent.unwrap_or_else(|| default_extent(&self.state))
    }
}

/// Everything computed for one homodyne phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRecord {
    pub homodyne_deg: f64,
    pub beta: [f64; 2],
    /// True statistics of the measured quadrature `X_{φ+90}`.
    pub quadrature: QuadratureStats,
    pub photon: PhotonStats,
    pub voigt: VoigtParams,
    pub spectrum_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// Configuration with the grid extent resolved.
    pub config: ExperimentConfig,
    pub truth: GaussianParams,
    pub angles: Vec<AngleRecord>,
    /// Run metadata; the only part of the output that varies between runs.
    pub metadata: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub manifest: Manifest,
    pub spectra: Vec<Spectrum>,
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    cfg.grid.extent = Some(cfg.extent());
    let m = moments(&cfg.state);
    let mut records = Vec::with_capacity(cfg.angles.count);
    let mut spectra = Vec::with_capacity(cfg.angles.count);
    for (i, phi) in cfg.angles.phases().into_iter().enumerate() {
        let at = |stage: &str| format!("{stage} at homodyne phase {phi} deg");
        let beta = Complex64::from_polar(cfg.beta2.sqrt(), phi.to_radians());
        let photon = combined_stats_exact(&m, cfg.chain.gamma_t, beta).map_err(|e| e.context(at("photon statistics")))?;
        let mu = cfg.calibration.mu_for_mean(photon.mean).map_err(|e| e.context(at("inverse calibration")))?;
        let sigma2 = cfg
            .calibration
            .sigma2_for_variance(photon.variance)
            .map_err(|e| e.context(at("inverse calibration")))?;
        let voigt = VoigtParams::thermometer(mu, sigma2);
        let mut spectrum = Spectrum::synthesize(&voigt, &cfg.sweep).map_err(|e| e.context(at("spectrum")))?;
        if cfg.noise.spectrum_sigma > 0.0 {
            spectrum.add_noise(cfg.noise.spectrum_sigma, &mut rng::stream(cfg.noise.seed, &format!("spectrum/{i}")));
        }
        let quad_angle = (phi + 90.0).rem_euclid(360.0);
        records.push(AngleRecord {
            homodyne_deg: phi,
            beta: [beta.re, beta.im],
            quadrature: quadrature_stats(&cfg.state, quad_angle)?,
            photon,
            voigt,
            spectrum_file: format!("{SPECTRA_DIR}/spectrum_{i:03}.csv"),
        });
        spectra.push(spectrum);
    }
    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(Simulation {
        manifest: Manifest {
            version: 1,
            truth: cfg.state,
            config: cfg,
            angles: records,
            metadata: serde_json::json!({ "created_unix": created, "generator": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") }),
        },
        spectra,
    })
}

impl Simulation {
    /// Writes the manifest and one CSV per spectrum under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join(SPECTRA_DIR))?;
        for (rec, s) in self.manifest.angles.iter().zip(&self.spectra) {
            s.write_csv(&dir.join(&rec.spectrum_file))?;
        }
        std::fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::from(e).context(path.display()))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("{}:{}:{}", path.display(), e.line(), e.column()), e.to_string()))?;
        let spectra = manifest
            .angles
            .iter()
            .map(|r| Spectrum::read_csv(&dir.join(&r.spectrum_file)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, spectra })
    }
}

/// Per-angle outcome of the spectrum analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedAngle {
    pub homodyne_deg: f64,
    pub voigt: VoigtParams,
    pub residual_norm: f64,
    pub photon: PhotonStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub nrmse: f64,
    /// Absent when no Gaussian could be fitted to the grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamErrors>,
}

/// Fitted minus true values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamErrors {
    pub fidelity: f64,
    pub n_thermal: f64,
    pub r: f64,
    pub alpha: [f64; 2],
}

impl ParamErrors {
    fn new(fit: &GaussianParams, truth: &GaussianParams) -> Self {
        Self {
            fidelity: fidelity(fit, truth),
            n_thermal: fit.n_thermal - truth.n_thermal,
            r: fit.squeeze.r() - truth.squeeze.r(),
            alpha: [fit.alpha.re - truth.alpha.re, fit.alpha.im - truth.alpha.im],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub method: Method,
    pub projections: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<GaussianParams>,
    /// Folded quadrature statistics at the projection angles.
    pub quadratures: Vec<QuadratureStats>,
    pub fits: Vec<FittedAngle>,
    pub metrics: Metrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fbp: Option<FbpReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolveDiagnostics>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub grid: WignerGrid,
    pub report: Report,
}

/// Options that may override the manifest's configuration.
#[derive(Debug, Clone, Default)]
pub struct ReconstructOptions {
    pub method: Option<Method>,
    pub model: Option<PathBuf>,
    pub solver: Option<SolverConfig>,
}

/// Spectra → Voigt fits → calibrated photon statistics → quadratures
/// folded onto `[0°, 180°)` → the selected reconstructor.
pub fn reconstruct(sim: &Simulation, opts: &ReconstructOptions) -> Result<Reconstruction> {
    let mut cfg = sim.manifest.config.clone();
    if let Some(m) = opts.method {
        cfg.method = m;
    }
    if opts.model.is_some() {
        cfg.model.clone_from(&opts.model);
    }
    if opts.solver.is_some() {
        cfg.solver = opts.solver;
    }
    cfg.validate()?;
    // load the model before the expensive stages so a bad path fails fast
    let model = match (cfg.method, &cfg.model) {
        (Method::Nn, Some(p)) => Some(NnModel::read(p).map_err(|e| e.context("model"))?),
        _ => None,
    };
    if sim.spectra.len() != sim.manifest.angles.len() {
        return Err(Error::invalid("manifest and spectra disagree in count"));
    }

    let mut warnings = Vec::new();
    let mut fits = Vec::with_capacity(sim.spectra.len());
    for (rec, s) in sim.manifest.angles.iter().zip(&sim.spectra) {
        let at = |stage: &str| format!("{stage} at homodyne phase {} deg", rec.homodyne_deg);
        let fit = fit_voigt(s).map_err(|e| e.context(at("voigt fit")))?;
        let cal = apply_calibration(&fit.params, &cfg.calibration).map_err(|e| e.context(at("calibration")))?;
        warnings.extend(cal.warnings.iter().map(|w| format!("{}: {w}", at("calibration"))));
        fits.push(FittedAngle {
            homodyne_deg: rec.homodyne_deg,
            voigt: fit.params,
            residual_norm: fit.residual_norm,
            photon: cal.stats,
        });
    }
    let series: Vec<(f64, PhotonStats)> = fits.iter().map(|f| (f.homodyne_deg, f.photon)).collect();
    let quads = extract_quadratures(&series, &cfg.chain, cfg.beta2).map_err(|e| e.context("quadrature extraction"))?;

    let m = cfg.grid.size_m;
    let extent = cfg.extent();
    let sino = Sinogram::fold_full_turn(&quads, m, extent).map_err(|e| e.context("folding"))?;
    warnings.extend(sino.warning.clone());
    let folded: Vec<QuadratureStats> = match &sino.profiles {
        Profiles::Gaussian(ms) => sino
            .angles_deg
            .iter()
            .zip(ms)
            .map(|(&angle_deg, &(mean, variance))| QuadratureStats {
                angle_deg,
                mean,
                variance,
            })
            .collect(),
        Profiles::Sampled(_) => unreachable!("folding yields Gaussian profiles"),
    };

    let mut fbp_report = None;
    let mut solver = None;
    let (grid, params) = match cfg.method {
        Method::Fbp => {
            let (g, r) = fbp_with(&sino, m, extent, &cfg.fbp).map_err(|e| e.context("fbp"))?;
            fbp_report = Some(r);
            let p = refit(&g, &mut warnings);
            (g, p)
        }
        Method::CsDct | Method::CsWavelet => {
            let basis = if cfg.method == Method::CsDct {
                SparseBasis::Dct2d
            } else {
                SparseBasis::daubechies()
            };
            let sc = cfg.solver.unwrap_or_else(|| SolverConfig::defaults(SolverKind::L1Min, &basis));
            let sys = build_measurement(&sino.angles_deg, m, extent)
                .and_then(|s| s.with_sinogram(&sino))
                .map_err(|e| e.context("measurement"))?;
            let r = solve(&sys, &basis, &sc).map_err(|e| e.context("compressed sensing"))?;
            if !r.diagnostics.converged {
                warnings.push(format!(
                    "solver stopped after {} iterations with relative residual {:.3e}",
                    r.diagnostics.iterations, r.diagnostics.relative_residual
                ));
            }
            solver = Some(r.diagnostics);
            let p = refit(&r.grid, &mut warnings);
            (r.grid, p)
        }
        Method::Lls => {
            let r = lls_fit(&folded).map_err(|e| e.context("lls"))?;
            if r.clamped {
                warnings.push("lls: fitted state clamped to the physical region".into());
            }
            (wigner_eval(&r.params, m, Some(extent))?, Some(r.params))
        }
        Method::Nn => {
            let p = nn_infer(model.as_ref().expect("loaded above"), &folded).map_err(|e| e.context("nn"))?;
            (wigner_eval(&p, m, Some(extent))?, Some(p))
        }
    };

    let truth = sim.manifest.truth;
    let truth_grid = wigner_eval(&truth, m, Some(extent))?;
    let metrics = Metrics {
        nrmse: grid.nrmse(&truth_grid)?,
        params: params.as_ref().map(|p| ParamErrors::new(p, &truth)),
    };
    Ok(Reconstruction {
        grid,
        report: Report {
            method: cfg.method,
            projections: folded.len(),
            params,
            quadratures: folded,
            fits,
            metrics,
            fbp: fbp_report,
            solver,
            warnings,
        },
    })
}

/// Grids from too few projections need not look like any Gaussian.
fn refit(grid: &WignerGrid, warnings: &mut Vec<String>) -> Option<GaussianParams> {
    refit_gaussian(grid)
        .map_err(|e| warnings.push(format!("refit: {e}")))
        .ok()
}

impl Reconstruction {
    /// `grid.csv`, `grid.pgm` (+ sidecar), `report.json` and, when a state
    /// was fitted, `params.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.grid.write_csv(&dir.join("grid.csv"))?;
        self.grid.write_pgm(&dir.join("grid.pgm"))?;
        if let Some(p) = &self.report.params {
            std::fs::write(dir.join("params.json"), serde_json::to_string_pretty(p)?)?;
        }
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&self.report)?)?;
        Ok(())
    }
}
