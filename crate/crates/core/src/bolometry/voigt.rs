//! Thermometer reflection lineshape: synthesis, fitting and spectrum files.

use std::f64::consts::{PI, TAU};
use std::io::BufRead;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::faddeeva::erfcx;
use crate::error::{ensure_finite, Error, Result};
use crate::lm::{self, LmOptions};

/// Parameters of the averaged thermometer reflection.
///
/// Decay rates are given as ordinary frequencies (`γ/2π` in Hz); `sigma2` is
/// the variance of the Gaussian frequency jitter in Hz².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoigtParams {
    pub mu_hz: f64,
    pub sigma2: f64,
    pub gamma_hz: f64,
    pub gamma_c_hz: f64,
    pub asym_rad: f64,
    /// Complex background multiplying the resonant response.
    pub baseline: Complex64,
}

impl VoigtParams {
    /// The reference thermometer: 1 MHz total and 0.45 MHz external decay.
    pub fn thermometer(mu_hz: f64, sigma2: f64) -> Self {
        Self {
            mu_hz,
            sigma2,
            gamma_hz: 1.0e6,
            gamma_c_hz: 0.45e6,
            asym_rad: 0.1,
            baseline: Complex64::new(1.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (n, v) in [
            ("mu_hz", self.mu_hz),
            ("sigma2", self.sigma2),
            ("gamma_hz", self.gamma_hz),
            ("gamma_c_hz", self.gamma_c_hz),
            ("asym_rad", self.asym_rad),
            ("baseline.re", self.baseline.re),
            ("baseline.im", self.baseline.im),
        ] {
            ensure_finite(n, v)?;
        }
        if self.sigma2 < 0.0 {
            return Err(Error::invalid("sigma2 must be >= 0"));
        }
        if !(self.gamma_c_hz > 0.0 && self.gamma_c_hz <= self.gamma_hz) {
            return Err(Error::invalid(format!(
                "need 0 < gamma_c <= gamma, got gamma_c={} gamma={}",
                self.gamma_c_hz, self.gamma_hz
            )));
        }
        Ok(())
    }

    fn uses_lorentzian(&self) -> bool {
        let half_gamma = PI * self.gamma_hz;
        TAU * TAU * self.sigma2 < 1e-6 * half_gamma * half_gamma
    }
}

fn response(p: &VoigtParams, f_probe_hz: f64) -> Complex64 {
    let gamma = TAU * p.gamma_hz;
    let gamma_c = TAU * p.gamma_c_hz;
    let delta = TAU * (p.mu_hz - f_probe_hz);
    let phase = Complex64::from_polar(1.0, p.asym_rad);
    let z = Complex64::new(gamma / 2.0, delta);
    let dip = if p.uses_lorentzian() {
        phase * gamma_c / z
    } else {
        let sigma = p.sigma2.sqrt();
        let u = z / (2.0 * 2f64.sqrt() * PI * sigma);
        phase * gamma_c / (2.0 * (2.0 * PI).sqrt() * sigma) * erfcx(u)
    };
    p.baseline * (1.0 - dip)
}

/// Averaged reflection coefficient `S₁₁` at probe frequency `f_probe_hz`.
pub fn voigt_reflection(p: &VoigtParams, f_probe_hz: f64) -> Result<Complex64> {
    p.validate()?;
    ensure_finite("probe frequency", f_probe_hz)?;
    Ok(response(p, f_probe_hz))
}

/// One sampled reflection spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub f_hz: Vec<f64>,
    pub s11: Vec<Complex64>,
}

/// Linear sweep, 500–550 MHz with 1001 points unless overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            start_hz: 500e6,
            stop_hz: 550e6,
            points: 1001,
        }
    }
}

impl Sweep {
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| self.start_hz + (self.stop_hz - self.start_hz) * i as f64 / (n - 1).max(1) as f64)
            .collect()
    }
}

impl Spectrum {
    pub fn synthesize(p: &VoigtParams, sweep: &Sweep) -> Result<Self> {
        p.validate()?;
        if sweep.points < 2 || !(sweep.stop_hz > sweep.start_hz) {
            return Err(Error::invalid("sweep needs >= 2 points and stop > start"));
        }
        let f_hz = sweep.frequencies();
        let s11 = f_hz.iter().map(|&f| response(p, f)).collect();
        Ok(Self { f_hz, s11 })
    }

    /// Adds circular complex Gaussian noise with per-component std `sigma`.
    pub fn add_noise(&mut self, sigma: f64, rng: &mut impl Rng) {
        for z in &mut self.s11 {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *z += Complex64::new(re, im) * sigma;
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("f_hz,re_s11,im_s11\n");
        for (f, z) in self.f_hz.iter().zip(&self.s11) {
            s.push_str(&format!("{f:?},{:?},{:?}\n", z.re, z.im));
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
            .ok_or_else(|| Error::format(format!("{name}:1"), "empty spectrum file"))??;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["f_hz", "re_s11", "im_s11"] {
            return Err(Error::format(format!("{name}:1"), "expected header f_hz,re_s11,im_s11"));
        }
        let mut f_hz = Vec::new();
        let mut s11 = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 2;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::format(
                    format!("{name}:{lineno}"),
                    format!("expected 3 fields, found {}", fields.len()),
                ));
            }
            let mut v = [0.0; 3];
            for (j, f) in fields.iter().enumerate() {
                v[j] = f.trim().parse().map_err(|_| {
                    Error::format(format!("{name}:{lineno}:{}", j + 1), format!("not a number: {f:?}"))
                })?;
            }
            f_hz.push(v[0]);
            s11.push(Complex64::new(v[1], v[2]));
        }
        Ok(Self { f_hz, s11 })
    }
}

/// Outcome of [`fit_voigt`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoigtFit {
    pub params: VoigtParams,
    /// `‖S₁₁,model − S₁₁,data‖₂` over real and imaginary parts.
    pub residual_norm: f64,
    pub iterations: usize,
}

// Internal parameter vector, scaled to O(1):
// [μ offset (MHz), ln σ (MHz), ln γ (MHz), ln γc (MHz), asym, Re b, Im b]
struct Packing {
    f_ref: f64,
}

const MHZ: f64 = 1e6;

impl Packing {
    fn unpack(&self, x: &[f64]) -> Option<VoigtParams> {
        if x.iter().any(|v| !v.is_finite()) || x[1] > 10.0 || x[2] > 10.0 || x[3] > x[2] {
            return None;
        }
        let sigma = x[1].exp() * MHZ;
        Some(VoigtParams {
            mu_hz: self.f_ref + x[0] * MHZ,
            sigma2: sigma * sigma,
            gamma_hz: x[2].exp() * MHZ,
            gamma_c_hz: x[3].exp() * MHZ,
            asym_rad: x[4],
            baseline: Complex64::new(x[5], x[6]),
        })
    }

    fn pack(&self, p: &VoigtParams) -> Vec<f64> {
        vec![
            (p.mu_hz - self.f_ref) / MHZ,
            (p.sigma2.sqrt().max(1.0) / MHZ).ln(),
            (p.gamma_hz / MHZ).ln(),
            (p.gamma_c_hz / MHZ).ln(),
            p.asym_rad,
            p.baseline.re,
            p.baseline.im,
        ]
    }
}

/// Initial guess from the data alone: background from the sweep edges,
/// resonance at the deepest point, widths from the half-depth span.
fn initial_guess(s: &Spectrum) -> Result<VoigtParams> {
    let n = s.f_hz.len();
    let edge = (n / 20).max(1);
    let bg = (s.s11[..edge].iter().sum::<Complex64>() + s.s11[n - edge..].iter().sum::<Complex64>())
        / (2 * edge) as f64;
    if bg.norm() == 0.0 {
        return Err(Error::invalid("spectrum has zero background"));
    }
    let depth: Vec<f64> = s.s11.iter().map(|z| (1.0 - z / bg).norm()).collect();
    let (imax, dmax) = depth
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
    // point-to-point scatter, insensitive to the smooth lineshape wings
    let noise = {
        let d2: f64 = depth.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).powi(2)).sum();
        (d2 / (6.0 * (n - 2) as f64)).sqrt()
    };
    if !(dmax > 1e-6) || dmax < 10.0 * noise {
        return Err(Error::FitNonConvergence {
            reason: format!("no resonance found (peak depth {dmax:.3e}, noise level {noise:.3e})"),
            best: Box::new(VoigtFit {
                params: VoigtParams::thermometer(s.f_hz[imax], 0.0),
                residual_norm: f64::NAN,
                iterations: 0,
            }),
        });
    }
    let half = dmax / 2.0;
    let mut lo = imax;
    while lo > 0 && depth[lo] > half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < n && depth[hi] > half {
        hi += 1;
    }
    let width = (s.f_hz[hi] - s.f_hz[lo]).max(s.f_hz[1] - s.f_hz[0]);
    // split the observed width evenly between the two broadening mechanisms
    let gamma_hz = width / 2.0;
    let sigma = width / 4.0;
    let z0 = 1.0 - s.s11[imax] / bg;
    // Lorentzian estimate of the external rate from the on-resonance depth
    let gamma_c_hz = (z0.norm() * gamma_hz / 2.0).min(0.9 * gamma_hz);
    Ok(VoigtParams {
        mu_hz: s.f_hz[imax],
        sigma2: sigma * sigma,
        gamma_hz,
        gamma_c_hz,
        asym_rad: z0.arg(),
        baseline: bg,
    })
}

/// Nonlinear least-squares fit of all lineshape parameters to a spectrum,
/// using real and imaginary parts jointly.
pub fn fit_voigt(s: &Spectrum) -> Result<VoigtFit> {
    let n = s.f_hz.len();
    if n < 50 || s.s11.len() != n {
        return Err(Error::invalid(format!("need >= 50 matched spectrum points, got {n}")));
    }
    if s.f_hz.iter().chain(s.s11.iter().flat_map(|z| [&z.re, &z.im])).any(|v| !v.is_finite()) {
        return Err(Error::invalid("spectrum contains non-finite values"));
    }
    let guess = initial_guess(s)?;
    let pk = Packing {
        f_ref: 0.5 * (s.f_hz[0] + s.f_hz[n - 1]),
    };
    let residuals = |x: &[f64]| -> Option<Vec<f64>> {
        let p = pk.unpack(x)?;
        let mut r = Vec::with_capacity(2 * n);
        for (f, z) in s.f_hz.iter().zip(&s.s11) {
            let d = response(&p, *f) - z;
            r.push(d.re);
            r.push(d.im);
        }
        r.iter().all(|v| v.is_finite()).then_some(r)
    };
    let opts = LmOptions {
        max_iters: 300,
        ..LmOptions::default()
    };
    let res = lm::minimize(residuals, &pk.pack(&guess), opts)
        .ok_or_else(|| Error::Numerical("Voigt model undefined at the initial guess".into()))?;
    let params = pk.unpack(&res.x).expect("accepted iterates are in the domain");
    let fit = VoigtFit {
        params,
        residual_norm: (2.0 * res.cost).sqrt(),
        iterations: res.iterations,
    };
    if !res.converged {
        return Err(Error::FitNonConvergence {
            reason: format!("no convergence after {} iterations", res.iterations),
            best: Box::new(fit),
        });
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn thermometer() -> VoigtParams {
        VoigtParams::thermometer(523.4e6, 0.72e12)
    }

    #[test]
    fn dip_sits_at_resonance() {
        let mut p = thermometer();
        p.asym_rad = 0.0;
        let sweep = Sweep::default();
        let s = Spectrum::synthesize(&p, &sweep).unwrap();
        let imin = (0..s.s11.len())
            .min_by(|&a, &b| s.s11[a].norm().total_cmp(&s.s11[b].norm()))
            .unwrap();
        let step = (sweep.stop_hz - sweep.start_hz) / (sweep.points - 1) as f64;
        assert!((s.f_hz[imin] - p.mu_hz).abs() <= step);
    }

    #[test]
    fn rejects_unphysical_rates() {
        let mut p = thermometer();
        p.gamma_c_hz = 2.0 * p.gamma_hz;
        assert!(voigt_reflection(&p, 5e8).unwrap_err().is_validation());
    }

    #[test]
    fn approaches_lorentzian_and_branch_is_continuous() {
        let mut p = thermometer();
        let lorentz = |p: &VoigtParams, f: f64| {
            let z = Complex64::new(PI * p.gamma_hz, TAU * (p.mu_hz - f));
            1.0 - Complex64::from_polar(1.0, p.asym_rad) * TAU * p.gamma_c_hz / z
        };
        // threshold: (2πσ)² = 1e-6 (πγ)²  ⇒  σ = 5e-4 γ
        let s_thr = 5e-4 * p.gamma_hz;
        for s in [s_thr * 1.0001, s_thr * 0.9999] {
            p.sigma2 = s * s;
            for f in [p.mu_hz - 2e6, p.mu_hz, p.mu_hz + 0.3e6] {
                let d = (voigt_reflection(&p, f).unwrap() - lorentz(&p, f)).norm();
                assert!(d < 1e-3, "sigma {s}: {d}");
            }
        }
        p.sigma2 = 1e-4 * p.gamma_hz * p.gamma_hz;
        let d = (voigt_reflection(&p, p.mu_hz).unwrap() - lorentz(&p, p.mu_hz)).norm();
        assert!(d < 0.05);
    }

    #[test]
    fn translation_invariance() {
        let p = thermometer();
        let mut q = p;
        q.mu_hz += 3.7e6;
        for df in [-2e6, 0.0, 0.4e6] {
            let a = voigt_reflection(&p, p.mu_hz + df).unwrap();
            let b = voigt_reflection(&q, q.mu_hz + df).unwrap();
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn noiseless_round_trip() {
        for (mu, s2) in [(523.4e6, 0.72e12), (512.0e6, 0.2e12), (540.0e6, 2.5e12)] {
            let p = VoigtParams::thermometer(mu, s2);
            let s = Spectrum::synthesize(&p, &Sweep::default()).unwrap();
            let fit = fit_voigt(&s).unwrap();
            // thermometer linewidth of order 1 MHz
            assert!((fit.params.mu_hz - mu).abs() <= 1e-4 * 1e6, "{:?}", fit.params);
            assert!((fit.params.sigma2 - s2).abs() <= 5e-3 * s2, "{:?}", fit.params);
        }
    }

    #[test]
    fn noisy_fits_are_unbiased() {
        let p = thermometer();
        let clean = Spectrum::synthesize(&p, &Sweep::default()).unwrap();
        // 30 dB below the dip depth
        let depth = clean.s11.iter().map(|z| (1.0 - z).norm()).fold(0.0, f64::max);
        let sigma = depth * 10f64.powf(-30.0 / 20.0) / 2f64.sqrt();
        let mut bias = 0.0;
        let seeds = 100;
        for seed in 0..seeds {
            let mut s = clean.clone();
            s.add_noise(sigma, &mut ChaCha8Rng::seed_from_u64(seed));
            bias += fit_voigt(&s).unwrap().params.mu_hz - p.mu_hz;
        }
        bias /= seeds as f64;
        assert!(bias.abs() <= 0.01 * p.gamma_hz, "bias {bias} Hz");
    }

    #[test]
    fn flat_spectrum_does_not_fit() {
        let f_hz: Vec<f64> = (0..200).map(|i| 5e8 + i as f64 * 1e5).collect();
        let s = Spectrum {
            s11: vec![Complex64::new(0.9, 0.1); 200],
            f_hz,
        };
        assert!(matches!(fit_voigt(&s), Err(Error::FitNonConvergence { .. })));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let s = Spectrum::synthesize(&thermometer(), &Sweep { points: 11, ..Sweep::default() }).unwrap();
        let back = Spectrum::parse_csv(s.to_csv_string().as_bytes(), "s").unwrap();
        assert_eq!(back, s);
        let bad = "f_hz,re_s11,im_s11\n1,2,3\n1,2,zz\n";
        let err = Spectrum::parse_csv(bad.as_bytes(), "spec.csv").unwrap_err();
        assert!(err.to_string().contains("spec.csv:3:3"), "{err}");
    }
}
