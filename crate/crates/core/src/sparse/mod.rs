//! Compressed-sensing reconstruction from few projections.

pub mod basis;
pub mod measurement;
pub mod solver;

use crate::error::{Error, Result};

pub use basis::{dct2_analysis, dct2_synthesis, dwt2_analysis, dwt2_synthesis, SparseBasis, Transform};
pub use measurement::{build_measurement, CsrMatrix, MeasurementSystem};
pub use solver::{solve, SolveDiagnostics, SolveResult, SolverConfig, SolverKind};

/// `sign(v)·max(|v| − λ, 0)` elementwise.
pub fn soft_threshold(v: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("threshold must be >= 0, got {lambda}")));
    }
    Ok(v.iter().map(|&x| shrink(x, lambda)).collect())
}

#[inline]
pub(crate) fn shrink(x: f64, lambda: f64) -> f64 {
    x.signum() * (x.abs() - lambda).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[3.0, -0.5, -4.0], 1.0).unwrap(), vec![2.0, 0.0, -3.0]);
        let v = [0.3, -1.2, 0.0];
        assert_eq!(soft_threshold(&v, 0.0).unwrap(), v.to_vec());
        assert!(soft_threshold(&v, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn soft_threshold_is_nonexpansive(a in -10.0..10.0f64, b in -10.0..10.0f64, l in 0.0..5.0f64) {
            prop_assert!((shrink(a, l) - shrink(b, l)).abs() <= (a - b).abs() + 1e-15);
            prop_assert!(shrink(a, l).abs() <= a.abs());
        }
    }
}
