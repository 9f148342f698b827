//! Simulation, estimation and fitting toolkit for motional-state expansion of a levitated
//! particle in an inverted harmonic potential, limited by white-noise heating and
//! shot-to-shot displacement noise.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod retrodiction;

pub use error::{Error, Result};
