//! Per-shot stochastic simulation of the release, expansion and recapture protocol.
//!
//! Every phase is a linear SDE stepped exactly, so the ensemble statistics serve as an
//! independent check of the closed forms in [`crate::model`].

mod rng;
mod sde;
mod shot;
mod trace;

pub use rng::{stream, Purpose};
pub use sde::{Discretization, LinearSde2};
pub use shot::{
    draw_shot, expand_from, run_ensemble, run_ensemble_with, Displacement, EnsembleOptions,
    Phase1Cooling, ProtocolTimeline, ShotConfig, ShotRecord, ShotSimulator,
    DEFAULT_DETECTOR_PSD,
};
pub use trace::{
    cooling_steady_state_variance, feedback_damping_for, simulate_phase1_cooling,
    simulate_recapture_trace,
};
