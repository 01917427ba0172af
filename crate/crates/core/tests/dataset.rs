//! The training distribution: uniform over the parameter box.

use statrs::distribution::{ChiSquared, ContinuousCDF};
use wigner_ct::modelfit::{gen_dataset, Dataset, DatasetConfig};

const BINS: usize = 20;

/// p-value of the χ² goodness-of-fit test of `u ∈ [0, 1)` against uniform.
fn uniform_p_value(u: impl Iterator<Item = f64>) -> f64 {
    let mut counts = [0usize; BINS];
    let mut total = 0;
    for x in u {
        assert!((0.0..1.0).contains(&x), "{x}");
        counts[(x * BINS as f64) as usize] += 1;
        total += 1;
    }
    let expected = total as f64 / BINS as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((BINS - 1) as f64).unwrap().cdf(chi2)
}

#[test]
fn labels_are_uniform_over_the_box() {
    let ds = gen_dataset(20000, 3, &DatasetConfig::default()).unwrap();
    let b = ds.header.config.ranges;
    let scaled = |v: f64, (lo, hi): (f64, f64)| (v - lo) / (hi - lo);
    let checks = [
        ("n_thermal", uniform_p_value(ds.labels.iter().map(|p| scaled(p.n_thermal, b.n_thermal)))),
        ("r", uniform_p_value(ds.labels.iter().map(|p| scaled(p.squeeze.r(), b.r)))),
        ("theta", uniform_p_value(ds.labels.iter().map(|p| p.squeeze.theta() / std::f64::consts::TAU))),
        // uniform on a disc: |α|² is uniform and arg α is uniform
        ("|alpha|^2", uniform_p_value(ds.labels.iter().map(|p| p.alpha.norm_sqr() / (b.alpha_max * b.alpha_max)))),
        ("arg alpha", uniform_p_value(ds.labels.iter().map(|p| p.alpha.arg().rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU))),
    ];
    for (name, p) in checks {
        assert!(p > 1e-3, "{name}: p = {p:.2e}");
    }
}

#[test]
fn same_seed_same_bytes_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = DatasetConfig::default();
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    gen_dataset(300, 12, &cfg).unwrap().write(&a).unwrap();
    gen_dataset(300, 12, &cfg).unwrap().write(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(Dataset::read(&a).unwrap().len(), 300);
}
