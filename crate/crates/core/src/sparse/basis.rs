//! Orthonormal sparsifying transforms: 2D DCT-II and periodised Daubechies
//! wavelets.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::WignerGrid;

/// Daubechies scaling (reconstruction low-pass) filters, orders 1 to 6.
const DAUBECHIES: [&[f64]; 6] = [
    &[FRAC_1_SQRT_2, FRAC_1_SQRT_2],
    &[0.48296291314453416, 0.8365163037378079, 0.2241438680420134, -0.12940952255126037],
    &[
        0.33267055295008263,
        0.8068915093110925,
        0.45987750211849154,
        -0.13501102001025458,
        -0.08544127388202666,
        0.03522629188570953,
    ],
    &[
        0.2303778133088965,
        0.7148465705529157,
        0.6308807679298589,
        -0.027983769416859854,
        -0.18703481171909309,
        0.030841381835560764,
        0.0328830116668852,
        -0.010597401785069032,
    ],
    &[
        0.16010239797419293,
        0.6038292697971896,
        0.7243085284377729,
        0.13842814590132074,
        -0.24229488706638203,
        -0.032244869584638375,
        0.07757149384004572,
        -0.006241490212798274,
        -0.012580751999081999,
        0.0033357252854737712,
    ],
    &[
        0.11154074335010947,
        0.49462389039845306,
        0.7511339080210954,
        0.31525035170919763,
        -0.22626469396543983,
        -0.12976686756726194,
        0.09750160558732304,
        0.027522865530305727,
        -0.03158203931748603,
        0.0005538422011614961,
        0.004777257510945511,
        -0.0010773010853084796,
    ],
];

pub fn scaling_filter(order: usize) -> Result<&'static [f64]> {
    DAUBECHIES
        .get(order.wrapping_sub(1))
        .copied()
        .ok_or_else(|| Error::invalid(format!("Daubechies order must be 1..=6, got {order}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SparseBasis {
    #[default]
    Dct2d,
    Daubechies { order: usize, levels: usize },
}

impl SparseBasis {
    pub fn daubechies() -> Self {
        SparseBasis::Daubechies { order: 4, levels: 3 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SparseBasis::Dct2d => "dct2d",
            SparseBasis::Daubechies { .. } => "daubechies",
        }
    }

    /// The transform for `size_m × size_m` grids.
    pub fn transform(&self, size_m: usize) -> Result<Transform> {
        match *self {
            SparseBasis::Dct2d => Ok(Transform::Dct(dct_matrix(size_m))),
            SparseBasis::Daubechies { order, levels } => {
                let filter = scaling_filter(order)?;
                let padded = size_m.next_power_of_two();
                if levels == 0 || levels > padded.trailing_zeros() as usize {
                    return Err(Error::invalid(format!(
                        "{levels} wavelet levels do not fit a {padded}-point padded grid"
                    )));
                }
                Ok(Transform::Dwt {
                    filter,
                    levels,
                    size_m,
                    padded,
                })
            }
        }
    }
}

/// A basis bound to a grid size. Coefficients are stored row-major.
#[derive(Debug, Clone)]
pub enum Transform {
    Dct(DMatrix<f64>),
    Dwt {
        filter: &'static [f64],
        levels: usize,
        size_m: usize,
        /// Dyadic side length the grid is zero-padded to.
        padded: usize,
    },
}

impl Transform {
    pub fn coeff_len(&self) -> usize {
        match self {
            Transform::Dct(c) => c.nrows() * c.nrows(),
            Transform::Dwt { padded, .. } => padded * padded,
        }
    }

    pub fn analysis(&self, values: &[f64]) -> Vec<f64> {
        match self {
            Transform::Dct(c) => {
                let m = c.nrows();
                let x = DMatrix::from_row_slice(m, m, values);
                row_major(&(c * x * c.transpose()))
            }
            Transform::Dwt {
                filter,
                levels,
                size_m,
                padded,
            } => {
                let mut buf = embed(values, *size_m, *padded);
                dwt2(&mut buf, *padded, filter, *levels, true);
                buf
            }
        }
    }

    pub fn synthesis(&self, coeffs: &[f64]) -> Vec<f64> {
        match self {
            Transform::Dct(c) => {
                let m = c.nrows();
                let x = DMatrix::from_row_slice(m, m, coeffs);
                row_major(&(c.transpose() * x * c))
            }
            Transform::Dwt {
                filter,
                levels,
                size_m,
                padded,
            } => {
                let mut buf = coeffs.to_vec();
                dwt2(&mut buf, *padded, filter, *levels, false);
                crop(&buf, *size_m, *padded)
            }
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Orthonormal DCT-II matrix, `C[k, n] = s_k cos(π (n + ½) k / M)`.
fn dct_matrix(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |k, n| {
        let s = if k == 0 { (1.0 / m as f64).sqrt() } else { (2.0 / m as f64).sqrt() };
        s * (PI * (n as f64 + 0.5) * k as f64 / m as f64).cos()
    })
}

fn pad_before(size_m: usize, padded: usize) -> usize {
    (padded - size_m) / 2
}

fn embed(values: &[f64], m: usize, padded: usize) -> Vec<f64> {
    let off = pad_before(m, padded);
    let mut out = vec![0.0; padded * padded];
    for (r, row) in values.chunks(m).enumerate() {
        let start = (r + off) * padded + off;
        out[start..start + m].copy_from_slice(row);
    }
    out
}

fn crop(values: &[f64], m: usize, padded: usize) -> Vec<f64> {
    let off = pad_before(m, padded);
    (0..m)
        .flat_map(|r| {
            let start = (r + off) * padded + off;
            values[start..start + m].iter().copied()
        })
        .collect()
}

/// One level of the periodised transform on `x`: approximation in the first
/// half, detail in the second.
fn dwt1_step(x: &[f64], h: &[f64], out: &mut [f64]) {
    let n = x.len();
    let half = n / 2;
    let l = h.len();
    for k in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for (j, &hj) in h.iter().enumerate() {
            let v = x[(2 * k + j) % n];
            a += hj * v;
            let g = if j % 2 == 0 { h[l - 1 - j] } else { -h[l - 1 - j] };
            d += g * v;
        }
        out[k] = a;
        out[half + k] = d;
    }
}

/// Transpose of [`dwt1_step`].
fn idwt1_step(c: &[f64], h: &[f64], out: &mut [f64]) {
    let n = c.len();
    let half = n / 2;
    let l = h.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..half {
        let (a, d) = (c[k], c[half + k]);
        for (j, &hj) in h.iter().enumerate() {
            let g = if j % 2 == 0 { h[l - 1 - j] } else { -h[l - 1 - j] };
            out[(2 * k + j) % n] += hj * a + g * d;
        }
    }
}

/// Multi-level separable 2D transform of an `n × n` row-major buffer, in place.
fn dwt2(buf: &mut [f64], n: usize, h: &[f64], levels: usize, forward: bool) {
    let sizes: Vec<usize> = (0..levels).map(|l| n >> l).collect();
    let order: Vec<usize> = if forward { sizes } else { sizes.into_iter().rev().collect() };
    let mut line = vec![0.0; n];
    let mut out = vec![0.0; n];
    for s in order {
        let step = |x: &[f64], o: &mut [f64]| {
            if forward {
                dwt1_step(x, h, o)
            } else {
                idwt1_step(x, h, o)
            }
        };
        // rows then columns forward; columns then rows inverse
        let passes: [bool; 2] = if forward { [true, false] } else { [false, true] };
        for rows in passes {
            for i in 0..s {
                for j in 0..s {
                    line[j] = if rows { buf[i * n + j] } else { buf[j * n + i] };
                }
                step(&line[..s], &mut out[..s]);
                for j in 0..s {
                    if rows {
                        buf[i * n + j] = out[j];
                    } else {
                        buf[j * n + i] = out[j];
                    }
                }
            }
        }
    }
}

/// Orthonormal 2D DCT-II of the grid.
pub fn dct2_analysis(grid: &WignerGrid) -> Vec<f64> {
    Transform::Dct(dct_matrix(grid.size_m)).analysis(&grid.values)
}

pub fn dct2_synthesis(coeffs: &[f64], size_m: usize, extent: f64) -> Result<WignerGrid> {
    if coeffs.len() != size_m * size_m {
        return Err(Error::invalid("DCT coefficient count does not match the grid size"));
    }
    WignerGrid::with_values(size_m, extent, Transform::Dct(dct_matrix(size_m)).synthesis(coeffs))
}

/// Wavelet coefficients of the zero-padded grid, `padded × padded` row-major.
pub fn dwt2_analysis(grid: &WignerGrid, order: usize, levels: usize) -> Result<Vec<f64>> {
    Ok(SparseBasis::Daubechies { order, levels }
        .transform(grid.size_m)?
        .analysis(&grid.values))
}

pub fn dwt2_synthesis(coeffs: &[f64], order: usize, levels: usize, size_m: usize, extent: f64) -> Result<WignerGrid> {
    let t = SparseBasis::Daubechies { order, levels }.transform(size_m)?;
    if coeffs.len() != t.coeff_len() {
        return Err(Error::invalid(format!(
            "expected {} wavelet coefficients, got {}",
            t.coeff_len(),
            coeffs.len()
        )));
    }
    WignerGrid::with_values(size_m, extent, t.synthesis(coeffs))
}
