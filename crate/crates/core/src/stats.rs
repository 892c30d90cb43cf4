//! Goodness-of-fit helpers for simulation reports.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

/// Pearson chi-square of `observed` counts against `expected` probabilities.
///
/// Panics if the slices differ in length, hold fewer than two categories, or
/// any expected probability is zero.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> ChiSquare {
    assert_eq!(observed.len(), expected.len(), "category count mismatch");
    assert!(observed.len() >= 2, "need at least two categories");
    let n: u64 = observed.iter().sum();
    let n = n as f64;
    let statistic = observed
        .iter()
        .zip(expected)
        .map(|(&o, &p)| {
            assert!(p > 0.0, "expected probability must be positive");
            let e = n * p;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let df = observed.len() - 1;
    let dist = ChiSquared::new(df as f64).expect("df > 0");
    ChiSquare { statistic, degrees_of_freedom: df, p_value: dist.sf(statistic) }
}

/// Binomial standard deviation of a count: `sqrt(n p (1 - p))`.
pub fn binomial_sigma(n: u64, p: f64) -> f64 {
    (n as f64 * p * (1.0 - p)).sqrt()
}
