//! Truncated Fock-space oracle.
//!
//! Builds density matrices for squeezed displaced thermal states by explicit
//! unitary conjugation and evaluates expectation values by brute force. It
//! exists to check the closed forms in [`crate::gaussian`] and
//! [`crate::bolometry`]; nothing in the reconstruction path depends on it.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::bolometry::PhotonStats;
use crate::error::{ensure_finite, Error, Result};
use crate::gaussian::{GaussianParams, MomentSet, SqueezeParam};

pub type CMatrix = DMatrix<Complex64>;

/// Default truncation dimension.
pub const DEFAULT_DIM: usize = 60;

/// Population allowed to leave the basis during a unitary, and in the top
/// [`TAIL_LEVELS`] states of a beam-splitter input.
pub const LEAK_TOLERANCE: f64 = 1e-10;
pub const TAIL_LEVELS: usize = 5;

const THERMAL_LEAK_TOLERANCE: f64 = 1e-6;
const PADE_ORDER: usize = 8;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Debug, Clone)]
pub struct FockState {
    rho: CMatrix,
}

impl FockState {
    pub fn from_matrix(rho: CMatrix) -> Result<Self> {
        if !rho.is_square() || rho.nrows() < 2 {
            return Err(Error::invalid("density matrix must be square with dim >= 2"));
        }
        Ok(Self { rho })
    }

    pub fn vacuum(dim: usize) -> Result<Self> {
        let mut rho = CMatrix::zeros(dim, dim);
        rho[(0, 0)] = c(1.0, 0.0);
        Self::from_matrix(rho)
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn rho(&self) -> &CMatrix {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    /// Population in the top [`TAIL_LEVELS`] basis states.
    pub fn tail_mass(&self) -> f64 {
        let d = self.dim();
        (d.saturating_sub(TAIL_LEVELS)..d).map(|n| self.rho[(n, n)].re).sum()
    }

    /// Hermiticity, trace and positivity checks.
    pub fn validate(&self) -> Result<()> {
        let herm = (&self.rho - self.rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > 1e-12 {
            return Err(Error::Numerical(format!("density matrix not Hermitian ({herm:.2e})")));
        }
        let tr = self.trace();
        if !(1.0 - 1e-6..=1.0 + 1e-12).contains(&tr) {
            return Err(Error::Numerical(format!("density matrix trace {tr}")));
        }
        let h = (&self.rho + self.rho.adjoint()).scale(0.5);
        let min = SymmetricEigen::new(h).eigenvalues.min();
        if min < -1e-10 {
            return Err(Error::Numerical(format!("density matrix not PSD (min eig {min:.2e})")));
        }
        Ok(())
    }

    /// `Tr(ρ O)`.
    pub fn expect_op(&self, op: &CMatrix) -> Complex64 {
        // Tr(ρ O) = Σ_ij ρ_ij O_ji
        let d = self.dim();
        let mut s = c(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                s += self.rho[(i, j)] * op[(j, i)];
            }
        }
        s
    }

    /// `U ρ U†` with `U` built on a basis of twice the dimension, then
    /// projected back. The population pushed out of the basis is reported
    /// as leakage; the trace of the result drops by that amount.
    fn conjugate(&self, make_u: impl Fn(usize) -> CMatrix, what: &str) -> Result<Self> {
        let d = self.dim();
        let dw = 2 * d;
        let mut big = CMatrix::zeros(dw, dw);
        big.view_mut((0, 0), (d, d)).copy_from(&self.rho);
        let u = make_u(dw);
        let out = &u * big * u.adjoint();
        let edge: f64 = (dw - TAIL_LEVELS..dw).map(|n| out[(n, n)].re).sum();
        let rho = out.view((0, 0), (d, d)).into_owned();
        let leaked = self.trace() - rho.trace().re;
        if leaked > LEAK_TOLERANCE || edge > LEAK_TOLERANCE {
            return Err(Error::Truncation {
                what: what.to_string(),
                tail_mass: leaked.max(edge),
                dim: d,
            });
        }
        Ok(Self { rho })
    }
}

/// Truncated annihilation operator, `a|n⟩ = √n |n−1⟩`.
pub fn annihilation(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = c((n as f64).sqrt(), 0.0);
    }
    a
}

/// Thermal state with Boltzmann weights renormalised on the truncated basis.
pub fn make_thermal(n_thermal: f64, dim: usize) -> Result<FockState> {
    ensure_finite("n_thermal", n_thermal)?;
    if n_thermal < 0.0 {
        return Err(Error::invalid("n_thermal must be >= 0"));
    }
    if dim < 2 {
        return Err(Error::invalid("truncation dimension must be >= 2"));
    }
    let q = n_thermal / (n_thermal + 1.0);
    let tail = q.powi(dim as i32);
    if tail > THERMAL_LEAK_TOLERANCE {
        return Err(Error::Truncation {
            what: format!("thermal state n={n_thermal}"),
            tail_mass: tail,
            dim,
        });
    }
    let weights: Vec<f64> = (0..dim).map(|n| q.powi(n as i32)).collect();
    let z: f64 = weights.iter().sum();
    let mut rho = CMatrix::zeros(dim, dim);
    for (n, w) in weights.iter().enumerate() {
        rho[(n, n)] = c(w / z, 0.0);
    }
    FockState::from_matrix(rho)
}

/// `D(α) = exp(α a† − α* a)`.
pub fn displacement_operator(alpha: Complex64, dim: usize) -> CMatrix {
    let a = annihilation(dim);
    let gen = a.adjoint().scale(1.0) * alpha - &a * alpha.conj();
    expm(&gen)
}

/// `S(ζ) = exp[(ζ* a² − ζ a†²)/2]`.
pub fn squeeze_operator(zeta: SqueezeParam, dim: usize) -> CMatrix {
    let z = zeta.as_complex();
    let a = annihilation(dim);
    let aa = &a * &a;
    let adad = aa.adjoint();
    let gen = (aa * z.conj() - adad * z) * c(0.5, 0.0);
    expm(&gen)
}

pub fn apply_displacement(state: &FockState, alpha: Complex64) -> Result<FockState> {
    ensure_finite("alpha.re", alpha.re)?;
    ensure_finite("alpha.im", alpha.im)?;
    if alpha.norm() == 0.0 {
        return Ok(state.clone());
    }
    state.conjugate(|d| displacement_operator(alpha, d), "displacement")
}

pub fn apply_squeeze(state: &FockState, zeta: SqueezeParam) -> Result<FockState> {
    if zeta.r() == 0.0 {
        return Ok(state.clone());
    }
    state.conjugate(|d| squeeze_operator(zeta, d), "squeezing")
}

/// `D(α) S(ζ) ρ_T S†(ζ) D†(α)` on a `dim`-level basis.
pub fn gaussian_state(params: &GaussianParams, dim: usize) -> Result<FockState> {
    let t = make_thermal(params.n_thermal, dim)?;
    let s = apply_squeeze(&t, params.squeeze)?;
    apply_displacement(&s, params.alpha)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé approximant.
pub fn expm(m: &CMatrix) -> CMatrix {
    expm_with_order(m, PADE_ORDER)
}

pub fn expm_with_order(m: &CMatrix, order: usize) -> CMatrix {
    let n = m.nrows();
    let norm1 = (0..n)
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 {
        (norm1 / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let b = m * c(0.5f64.powi(squarings), 0.0);

    let mut num = CMatrix::identity(n, n);
    let mut den = CMatrix::identity(n, n);
    let mut power = CMatrix::identity(n, n);
    let mut coef = 1.0;
    let q = order as f64;
    for k in 1..=order {
        let kf = k as f64;
        coef *= (q - kf + 1.0) / (kf * (2.0 * q - kf + 1.0));
        power = &power * &b;
        let term = &power * c(coef, 0.0);
        num += &term;
        if k % 2 == 0 {
            den += &term;
        } else {
            den -= &term;
        }
    }
    let mut r = den
        .lu()
        .solve(&num)
        .expect("Padé denominator is invertible for scaled norm <= 0.5");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Identifier of one of the eight normally ordered moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MomentId {
    A,
    Ad,
    AA,
    AdAd,
    AdA,
    AdAdA,
    AdAA,
    AdAdAA,
}

impl MomentId {
    pub const ALL: [MomentId; 8] = [
        MomentId::A,
        MomentId::Ad,
        MomentId::AA,
        MomentId::AdAd,
        MomentId::AdA,
        MomentId::AdAdA,
        MomentId::AdAA,
        MomentId::AdAdAA,
    ];

    fn word(self) -> &'static str {
        match self {
            MomentId::A => "a",
            MomentId::Ad => "ad",
            MomentId::AA => "aa",
            MomentId::AdAd => "adad",
            MomentId::AdA => "ada",
            MomentId::AdAdA => "adada",
            MomentId::AdAA => "adaa",
            MomentId::AdAdAA => "adadaa",
        }
    }
}

impl fmt::Display for MomentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

impl FromStr for MomentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MomentId::ALL
            .into_iter()
            .find(|m| m.word() == s)
            .ok_or_else(|| Error::invalid(format!("unknown moment id {s:?}")))
    }
}

fn moment_operator(which: MomentId, dim: usize) -> CMatrix {
    let a = annihilation(dim);
    let ad = a.adjoint();
    match which {
        MomentId::A => a,
        MomentId::Ad => ad,
        MomentId::AA => &a * &a,
        MomentId::AdAd => &ad * &ad,
        MomentId::AdA => &ad * &a,
        MomentId::AdAdA => &ad * &ad * &a,
        MomentId::AdAA => &ad * &a * &a,
        MomentId::AdAdAA => &ad * &ad * &a * &a,
    }
}

/// `Tr(ρ O)` for the requested normally ordered moment.
pub fn expect(state: &FockState, which: MomentId) -> Complex64 {
    state.expect_op(&moment_operator(which, state.dim()))
}

pub fn moment_set(state: &FockState) -> MomentSet {
    let e = |w| expect(state, w);
    MomentSet {
        m_a: e(MomentId::A),
        m_ad: e(MomentId::Ad),
        m_aa: e(MomentId::AA),
        m_adad: e(MomentId::AdAd),
        m_ada: e(MomentId::AdA),
        m_adada: e(MomentId::AdAdA),
        m_adaa: e(MomentId::AdAA),
        m_adadaa: e(MomentId::AdAdAA).re,
    }
}

/// Brute-force `(⟨X_φ⟩, ⟨(ΔX_φ)²⟩)`.
pub fn quadrature_stats(state: &FockState, angle_deg: f64) -> (f64, f64) {
    let phi = angle_deg.to_radians();
    let a = annihilation(state.dim());
    let x = (a.adjoint() * Complex64::from_polar(1.0, phi) + &a * Complex64::from_polar(1.0, -phi))
        * c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mean = state.expect_op(&x).re;
    let sq = state.expect_op(&(&x * &x)).re;
    (mean, sq - mean * mean)
}

/// Photon statistics of `c = √Γ a + i√(1−Γ) b` with `b` in the coherent state `|β⟩`.
///
/// The vacuum fluctuations of `b` drop out of normally ordered products, so
/// every normally ordered moment of `c` equals that of the single-mode
/// operator `Ã = √Γ a + i√(1−Γ) β`. The variance is then
/// `⟨Ã†²Ã²⟩ + ⟨Ã†Ã⟩ − ⟨Ã†Ã⟩²`, evaluated as matrix traces.
pub fn beam_split(state: &FockState, beta: Complex64, gamma_t: f64) -> Result<PhotonStats> {
    if !(gamma_t > 0.0 && gamma_t < 1.0) {
        return Err(Error::invalid(format!("transmissivity must be in (0,1), got {gamma_t}")));
    }
    ensure_finite("beta.re", beta.re)?;
    ensure_finite("beta.im", beta.im)?;
    let tail = state.tail_mass();
    if tail > LEAK_TOLERANCE {
        return Err(Error::Truncation {
            what: "beam splitter input".into(),
            tail_mass: tail,
            dim: state.dim(),
        });
    }
    let d = state.dim();
    let shift = c(0.0, (1.0 - gamma_t).sqrt()) * beta;
    let at = annihilation(d) * c(gamma_t.sqrt(), 0.0) + CMatrix::identity(d, d) * shift;
    let atd = at.adjoint();
    let n_op = &atd * &at;
    let nn_op = &atd * &atd * &at * &at;
    let mean = state.expect_op(&n_op).re;
    let g2 = state.expect_op(&nn_op).re;
    Ok(PhotonStats {
        mean,
        variance: g2 + mean - mean * mean,
    })
}

/// Product state `ρ_a ⊗ |β⟩⟨β|` held as a full two-mode matrix.
///
/// Only for small dimensions: it cross-checks the normal-ordering shortcut
/// used by [`beam_split`].
#[derive(Debug, Clone)]
pub struct TwoModeFockState {
    pub dim_a: usize,
    pub dim_b: usize,
    rho: CMatrix,
}

impl TwoModeFockState {
    pub fn with_coherent_b(a: &FockState, beta: Complex64, dim_b: usize) -> Result<Self> {
        let amps: Vec<Complex64> = {
            let mut v = Vec::with_capacity(dim_b);
            let mut amp = c((-0.5 * beta.norm_sqr()).exp(), 0.0);
            for n in 0..dim_b {
                if n > 0 {
                    amp = amp * beta / (n as f64).sqrt();
                }
                v.push(amp);
            }
            v
        };
        let tail: f64 = amps[dim_b.saturating_sub(TAIL_LEVELS)..].iter().map(|z| z.norm_sqr()).sum();
        if tail > LEAK_TOLERANCE {
            return Err(Error::Truncation {
                what: "coherent homodyne mode".into(),
                tail_mass: tail,
                dim: dim_b,
            });
        }
        let ket = nalgebra::DVector::from_vec(amps);
        let rho_b = &ket * ket.adjoint();
        Ok(Self {
            dim_a: a.dim(),
            dim_b,
            rho: a.rho().kronecker(&rho_b),
        })
    }

    /// `⟨n_c⟩` and `⟨(Δn_c)²⟩` computed with the full two-mode operator `c`.
    pub fn output_stats(&self, gamma_t: f64) -> PhotonStats {
        let ia = CMatrix::identity(self.dim_a, self.dim_a);
        let ib = CMatrix::identity(self.dim_b, self.dim_b);
        let cop = annihilation(self.dim_a).kronecker(&ib) * c(gamma_t.sqrt(), 0.0)
            + ia.kronecker(&annihilation(self.dim_b)) * c(0.0, (1.0 - gamma_t).sqrt());
        let n = cop.adjoint() * &cop;
        let n2 = &n * &n;
        let tr = |op: &CMatrix| (&self.rho * op).trace().re;
        let mean = tr(&n);
        PhotonStats {
            mean,
            variance: tr(&n2) - mean * mean,
        }
    }
}

/// Oracle evaluation of one parameter set, for golden files.
#[derive(Debug, Clone, Serialize)]
pub struct OracleRecord {
    pub params: GaussianParams,
    pub dim: usize,
    pub tail_mass: f64,
    pub moments: MomentSet,
}

pub fn oracle_record(params: &GaussianParams, dim: usize) -> Result<OracleRecord> {
    let s = gaussian_state(params, dim)?;
    Ok(OracleRecord {
        params: *params,
        dim,
        tail_mass: s.tail_mass(),
        moments: moment_set(&s),
    })
}
