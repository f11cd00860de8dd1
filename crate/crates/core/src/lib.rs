//! Small-time approximation of the Zakai equation by a degenerate
//! Kolmogorov-type PDE, with Monte Carlo and grid solvers for both sides of
//! the error estimate and a harness that measures it.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod experiments;
pub mod fk;
pub mod kolmogorov_pde;
pub mod model;
pub mod paths;
pub mod stats;

pub use error::{Error, Result};
pub use bounds::{constant_C, kappa, TheoremParams};
pub use experiments::{ConvergenceReport, ErrorRecord, ExperimentConfig};
pub use kolmogorov_pde::{Axis, Grid2D, PDESolution};
pub use model::{DerivedCoefficients, FilteringModel, ModelConstants};
pub use paths::{ObservationPath, RngStream, StreamFamily, StreamId, StreamTag, TimeGrid};
