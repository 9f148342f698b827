use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, Result};
use crate::model::PhysicalParams;

/// Linear-Gaussian state-space form of the harmonic recapture trap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorModel {
    /// Trap angular frequency, rad/s.
    pub omega: f64,
    /// kg.
    pub mass: f64,
    /// Two-sided white force-noise intensity, N²/Hz.
    pub process_noise_psd: f64,
    /// One-sided detector position-noise PSD, m²/Hz.
    pub measurement_noise_psd: f64,
    /// s.
    pub sample_interval: f64,
}

/// Exactly discretized model in scaled coordinates `(z, p/(m omega))`, both in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Discrete {
    pub cos: f64,
    pub sin: f64,
    /// Process-noise covariance `(q00, q01, q11)`.
    pub q: (f64, f64, f64),
    /// Measurement-noise variance per sample.
    pub r: f64,
    /// `m omega`, converting scaled momentum back to SI.
    pub momentum_scale: f64,
}

impl OscillatorModel {
    /// Recapture-trap model with the heating calibration of `params`.
    pub fn from_params(params: &PhysicalParams, detector_noise_psd: f64, sample_rate: f64) -> Result<Self> {
        params.validate()?;
        ensure_positive("sample_rate", sample_rate)?;
        let m = Self {
            omega: params.omega_trap,
            mass: params.mass,
            process_noise_psd: params.force_noise_intensity(),
            measurement_noise_psd: detector_noise_psd,
            sample_interval: 1.0 / sample_rate,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("omega", self.omega)?;
        ensure_positive("mass", self.mass)?;
        ensure_non_negative("process_noise_psd", self.process_noise_psd)?;
        ensure_non_negative("measurement_noise_psd", self.measurement_noise_psd)?;
        ensure_positive("sample_interval", self.sample_interval)
    }

    /// Variance of one detector sample, `S/(2 dt)`.
    pub fn measurement_variance(&self) -> f64 {
        self.measurement_noise_psd / (2.0 * self.sample_interval)
    }

    pub(crate) fn discrete(&self) -> Discrete {
        let th = self.omega * self.sample_interval;
        let mw = self.mass * self.omega;
        // In scaled coordinates the force noise enters the second component with
        // intensity D/(m omega)², and the response integrals are closed-form.
        let k = self.process_noise_psd / (mw * mw) / (4.0 * self.omega);
        let two = 2.0 * th;
        let q00 = k * two_theta_minus_sin(two);
        let q11 = k * (two + two.sin());
        let q01 = k * 2.0 * th.sin().powi(2);
        Discrete {
            cos: th.cos(),
            sin: th.sin(),
            q: (q00, q01, q11),
            r: self.measurement_variance(),
            momentum_scale: mw,
        }
    }
}

/// `y − sin y` without cancellation at small `y`.
fn two_theta_minus_sin(y: f64) -> f64 {
    if y.abs() < 0.1 {
        let y2 = y * y;
        y * y2 * (1.0 / 6.0 - y2 * (1.0 / 120.0 - y2 * (1.0 / 5040.0 - y2 / 362_880.0)))
    } else {
        y - y.sin()
    }
}
