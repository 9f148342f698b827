use nalgebra::Vector2;

use crate::error::{ensure_non_negative, invalid, Error, Result};
use crate::model::{PhasePoint, PhysicalParams};

use super::rng::{stream, Purpose};
use super::sde::LinearSde2;
use super::shot::{ShotConfig, ShotRecord, ShotSimulator};

/// Sampled detector record of the recapture phase, starting at the recapture instant.
pub fn simulate_recapture_trace(record: &ShotRecord, config: &ShotConfig) -> Result<Vec<f64>> {
    Ok(ShotSimulator::new(config)?.trace(record))
}

/// Stationary position variance under ideal velocity damping, `ħΓ/(m omega_trap γ)`.
pub fn cooling_steady_state_variance(params: &PhysicalParams, damping: f64) -> Result<f64> {
    params.validate()?;
    if !(damping > 0.0 && damping.is_finite()) {
        return Err(invalid("feedback_damping", "must be finite and > 0"));
    }
    Ok(params.hbar * params.heating_rate / (params.mass * params.omega_trap * damping))
}

/// Damping rate whose stationary state has position spread `sigma_0`.
pub fn feedback_damping_for(params: &PhysicalParams, sigma_0: f64) -> Result<f64> {
    params.validate()?;
    if !(sigma_0 > 0.0 && sigma_0.is_finite()) {
        return Err(invalid("sigma_0", "must be finite and > 0"));
    }
    if params.heating_rate == 0.0 {
        return Err(Error::Domain(
            "without heating, cold damping drives the state to rest".into(),
        ));
    }
    Ok(params.hbar * params.heating_rate / (params.mass * params.omega_trap * sigma_0 * sigma_0))
}

/// Cold-damped, heated evolution in the confining trap from `start` for `duration`.
/// The state is relative to the combined-trap equilibrium.
pub fn simulate_phase1_cooling(
    config: &ShotConfig,
    start: PhasePoint,
    duration: f64,
    shot_index: u64,
) -> Result<PhasePoint> {
    config.validate()?;
    ensure_non_negative("duration", duration)?;
    if !(config.feedback_damping > 0.0) {
        return Err(invalid("feedback_damping", "phase-1 cooling needs a positive rate"));
    }
    let p = &config.params;
    let n = ((p.omega_trap * duration).ceil() as usize).max(1);
    let disc = LinearSde2::oscillator(
        p.mass,
        -p.mass * p.omega_trap * p.omega_trap,
        config.feedback_damping,
        p.force_noise_intensity(),
    )
    .discretize(duration / n as f64);
    let mut rng = stream(config.seed, Purpose::Cooling, shot_index);
    let mut x = Vector2::new(start.z, start.p);
    for _ in 0..n {
        x = disc.step(x, &mut rng);
    }
    Ok(PhasePoint::new(x[0], x[1]))
}
