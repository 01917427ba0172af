//! Scaled complementary error function of complex argument.
//!
//! `erfcx(u) = exp(u²)·erfc(u) = w(iu)` with `w` the Faddeeva function. The
//! evaluation uses Weideman's rational expansion (40 terms), which is valid
//! throughout the upper half-plane of `w` and therefore for `Re u ≥ 0`; the
//! left half-plane follows from `erfcx(−u) = 2·exp(u²) − erfcx(u)`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use rustfft::FftPlanner;

const TERMS: usize = 40;

struct Weideman {
    l: f64,
    // coefficient of Z^k, k = 0..TERMS
    coeffs: Vec<f64>,
}

fn weideman() -> &'static Weideman {
    static TABLE: OnceLock<Weideman> = OnceLock::new();
    TABLE.get_or_init(|| {
        let m = 2 * TERMS;
        let m2 = 2 * m;
        let l = (TERMS as f64 / 2f64.sqrt()).sqrt();
        // f sampled at k = -M+1 .. M-1 with a leading zero, then fft-shifted
        let mut f = vec![0.0; m2];
        for (i, k) in (-(m as i64) + 1..m as i64).enumerate() {
            let theta = k as f64 * PI / m as f64;
            let t = l * (theta / 2.0).tan();
            f[i + 1] = (-t * t).exp() * (l * l + t * t);
        }
        let mut buf: Vec<Complex64> = (0..m2)
            .map(|j| Complex64::new(f[(j + m) % m2], 0.0))
            .collect();
        FftPlanner::new().plan_fft_forward(m2).process(&mut buf);
        let coeffs = (1..=TERMS).map(|k| buf[k].re / m2 as f64).collect();
        Weideman { l, coeffs }
    })
}

/// Faddeeva function `w(z) = exp(−z²)·erfc(−iz)` for `Im z ≥ 0`.
fn faddeeva_upper(z: Complex64) -> Complex64 {
    let tab = weideman();
    let iz = Complex64::i() * z;
    let lm = tab.l - iz;
    let zz = (tab.l + iz) / lm;
    let p = tab
        .coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &a| acc * zz + a);
    2.0 * p / (lm * lm) + (1.0 / PI.sqrt()) / lm
}

/// `exp(u²)·erfc(u)` for complex `u`.
pub fn erfcx(u: Complex64) -> Complex64 {
    if u.re >= 0.0 {
        faddeeva_upper(Complex64::i() * u)
    } else {
        2.0 * (u * u).exp() - faddeeva_upper(-Complex64::i() * u)
    }
}

#[cfg(test)]
#[path = "faddeeva_oracle.rs"]
pub(crate) mod oracle;
