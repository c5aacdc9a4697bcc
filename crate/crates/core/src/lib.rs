//! Polyhazard survival models anchored to population mortality.
//!
//! Disease-specific survival is fitted jointly with general-population
//! survival so that extrapolated hazards stay consistent with background
//! mortality. The crate covers mortality projection, Bayesian fitting with a
//! No-U-Turn sampler, extrapolation methods and the usual cost-effectiveness
//! estimands.

pub mod datasets;
pub mod error;
pub mod estimands;
pub mod extrapolate;
pub mod hazard;
pub mod inference;
pub mod io;
pub mod model;
pub mod mortality;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
