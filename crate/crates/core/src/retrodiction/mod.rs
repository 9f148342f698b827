//! Estimation of the recapture state from the noisy position record of the harmonic trap.
//!
//! A Kalman filter runs forward over the record and a Rauch–Tung–Striebel pass carries the
//! information back to the first sample, which is the state at recapture.

mod kalman;
mod model;

use rayon::prelude::*;

use crate::error::Result;
use crate::model::GaussianState;

pub use kalman::{estimate_recapture_state, kalman_forward, ljung_box, rts_smooth, KalmanOutput, Prior};
pub use model::OscillatorModel;

/// Estimates many traces in parallel; results keep the input order.
pub fn estimate_many(traces: &[Vec<f64>], model: &OscillatorModel, prior: &Prior) -> Result<Vec<GaussianState>> {
    traces
        .par_iter()
        .map(|t| estimate_recapture_state(t, model, prior))
        .collect()
}
