//! Shared inputs for the benchmarks.

use zakai_core::model::build_model;
use zakai_core::paths::{sample_observation_p1, StreamFamily, StreamTag};
use zakai_core::{DerivedCoefficients, ObservationPath, TimeGrid};

pub fn ou_tanh() -> DerivedCoefficients {
    DerivedCoefficients::derive(&build_model("ou-tanh", &Default::default()).unwrap()).unwrap()
}

/// A fixed ℙ₁ observation path on `steps` steps of `[0, T]`.
pub fn observation(horizon: f64, steps: usize) -> ObservationPath {
    let grid = TimeGrid::new(horizon, steps).unwrap();
    sample_observation_p1(&grid, StreamFamily::new(1, StreamTag::ObservationNoise, 0).stream(0)).unwrap()
}
