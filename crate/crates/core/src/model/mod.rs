//! Closed-form Gaussian-moment model of the expansion protocol.

mod coherence;
mod params;
mod propagation;
mod requirements;
pub mod special;
mod state;

pub use coherence::{coherence_length, purity, xi_max, xi_max_with, xi_of_tau, Purity, XiMax, XiMaxSearch};
pub use params::{
    CorrelationModel, InitialState, NoiseBudget, PhysicalParams, ELEMENTARY_CHARGE, HBAR,
};
pub use propagation::{
    coherent_variance, ensemble_state, growth_exponent, propagate_covariance, shot_covariance, symplectic_map,
    whitenoise_covariance, MAX_GROWTH_EXPONENT,
};
pub use requirements::{
    required_force_noise, required_position_noise, required_voltage_noise, sigma_disp_from_budget,
};
pub use special::SERIES_THRESHOLD;
pub use state::{Cov2, GaussianState, PhasePoint};
