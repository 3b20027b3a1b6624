//! Shared fixtures for the criterion benchmarks: deterministic datasets
//! and optimizer configurations sized so a single run takes microseconds
//! to low milliseconds.

use ndarray::Array1;

use dpopt_core::{sample_unit_ball, Dataset, RngStream, SgdConfig, SpiderConfig};

/// Deterministic unit-ball dataset; panics on invalid shapes, which is
/// fine for benchmark setup.
pub fn fixture_data(d: usize, n: usize) -> Dataset {
    sample_unit_ball(d, n, &RngStream::new(2718, 0)).expect("benchmark dataset")
}

/// A mid-sized noisy SGD configuration over the radius-2 ball.
pub fn fixture_sgd(iterations: usize, n: usize, d: usize) -> SgdConfig {
    SgdConfig::new(iterations, n, 0.01, 0.5, Array1::zeros(d)).with_projection(2.0)
}

/// A matching variance-reduced configuration with refreshes every 5 steps.
pub fn fixture_spider(iterations: usize, n: usize, d: usize) -> SpiderConfig {
    SpiderConfig::new(iterations, 5, n, n, 0.01, 0.5, 0.1, 0.2, Array1::zeros(d))
        .with_projection(2.0)
}
