//! Conversions between lab quantities and photon numbers.

use super::ChainConfig;
use crate::error::{ensure_finite, Error, Result};

pub const PLANCK: f64 = 6.62607015e-34;
pub const BOLTZMANN: f64 = 1.380649e-23;

/// Power ratio for a decibel value.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Thermal occupation at the splitter input: `η₀ / (exp(h f₀ / k_B T) − 1)`.
pub fn thermal_occupation(t_kelvin: f64, cfg: &ChainConfig) -> Result<f64> {
    ensure_finite("temperature", t_kelvin)?;
    if t_kelvin <= 0.0 {
        return Err(Error::invalid(format!("temperature must be > 0 K, got {t_kelvin}")));
    }
    let x = PLANCK * cfg.f0_hz / (BOLTZMANN * t_kelvin);
    Ok(db_to_linear(cfg.eta0_db) / x.exp_m1())
}

/// Homodyne photon number `|β|² = η₁ P_h / (FWHM · h f₀)` for a power in dBm.
pub fn homodyne_photon_number(p_h_dbm: f64, cfg: &ChainConfig) -> Result<f64> {
    if p_h_dbm.is_nan() || p_h_dbm == f64::INFINITY {
        return Err(Error::invalid(format!("homodyne power must be finite, got {p_h_dbm}")));
    }
    let watts = 1e-3 * db_to_linear(p_h_dbm);
    Ok(db_to_linear(cfg.eta1_db) * watts / (cfg.fwhm_hz * PLANCK * cfg.f0_hz))
}
