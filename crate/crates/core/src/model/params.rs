use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, invalid, Result};

use super::state::Cov2;

/// Reduced Planck constant (CODATA 2018, exact-to-print value), J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Physical parameters of the z mode.
///
/// `omega_trap` is the net confining frequency of phases (i) and (iii), i.e. the optical
/// trap with the always-on inverted electrical potential superposed. `omega_inv` is the
/// curvature of the inverted potential, with equation of motion `z'' = omega_inv² z`.
/// All angular frequencies are in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Particle mass, kg.
    pub mass: f64,
    /// Net confining angular frequency, rad/s.
    pub omega_trap: f64,
    /// Inverted-potential angular frequency, rad/s.
    pub omega_inv: f64,
    /// White-noise heating rate in phonons of the confining potential per second, rad/s.
    pub heating_rate: f64,
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// Net charge magnitude, C. Only needed for the voltage-noise requirement.
    pub charge: Option<f64>,
    /// Electrode distance, m. Only needed for the voltage-noise requirement.
    pub electrode_distance: Option<f64>,
}

impl PhysicalParams {
    pub fn new(mass: f64, omega_trap: f64, omega_inv: f64, heating_rate: f64) -> Result<Self> {
        let params = Self {
            mass,
            omega_trap,
            omega_inv,
            heating_rate,
            hbar: HBAR,
            charge: None,
            electrode_distance: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_charge(mut self, charge: f64) -> Result<Self> {
        ensure_positive("charge", charge)?;
        self.charge = Some(charge);
        Ok(self)
    }

    pub fn with_electrode_distance(mut self, distance: f64) -> Result<Self> {
        ensure_positive("electrode_distance", distance)?;
        self.electrode_distance = Some(distance);
        Ok(self)
    }

    /// Overrides ħ. Intended for unit tests in natural units.
    pub fn with_hbar(mut self, hbar: f64) -> Result<Self> {
        ensure_positive("hbar", hbar)?;
        self.hbar = hbar;
        Ok(self)
    }

    pub fn with_heating_rate(mut self, heating_rate: f64) -> Result<Self> {
        ensure_non_negative("heating_rate", heating_rate)?;
        self.heating_rate = heating_rate;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("mass", self.mass)?;
        ensure_positive("omega_trap", self.omega_trap)?;
        ensure_positive("omega_inv", self.omega_inv)?;
        ensure_non_negative("heating_rate", self.heating_rate)?;
        ensure_positive("hbar", self.hbar)?;
        if let Some(q) = self.charge {
            ensure_positive("charge", q)?;
        }
        if let Some(d) = self.electrode_distance {
            ensure_positive("electrode_distance", d)?;
        }
        let r = self.ratio();
        if !(r.is_finite() && r > 0.0) {
            return Err(invalid("omega_trap", format!("frequency ratio {r} is not finite")));
        }
        Ok(())
    }

    /// Frequency ratio `r = omega_trap / omega_inv`.
    pub fn ratio(&self) -> f64 {
        self.omega_trap / self.omega_inv
    }

    /// Bare curvature of the confining potential alone, `sqrt(omega_trap² + omega_inv²)`.
    pub fn omega_bare(&self) -> f64 {
        self.omega_trap.hypot(self.omega_inv)
    }

    /// Ground-state position spread `sqrt(ħ / (2 m omega_trap))`.
    pub fn zero_point_size(&self) -> f64 {
        (self.hbar / (2.0 * self.mass * self.omega_trap)).sqrt()
    }

    /// Two-sided white force-noise intensity `2 m ħ omega_trap Γ` (N²·s), fixed so that the
    /// added position variance in the inverted potential reproduces the heating formula.
    pub fn force_noise_intensity(&self) -> f64 {
        2.0 * self.mass * self.hbar * self.omega_trap * self.heating_rate
    }

    /// Equilibrium of the combined trap relative to the optical center when the inverted
    /// potential is centered at `displacement`.
    pub fn combined_equilibrium(&self, displacement: f64) -> f64 {
        -displacement * (self.omega_inv / self.omega_trap).powi(2)
    }

    /// Amplification of a displacement into the recapture trajectory, `1 + r⁻²`.
    pub fn displacement_gain(&self) -> f64 {
        1.0 + (self.omega_inv / self.omega_trap).powi(2)
    }
}

/// How the momentum spread and correlation of the initial state follow from `sigma_0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationModel {
    /// `var_p = (m omega_trap sigma_0)²`, `cov_zp = 0`.
    #[default]
    ThermalEquipartition,
}

/// Feedback-cooled state at release.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    /// Position standard deviation in the confining trap, m.
    pub sigma_0: f64,
    #[serde(default)]
    pub correlation_model: CorrelationModel,
}

impl InitialState {
    pub fn thermal(sigma_0: f64) -> Self {
        Self {
            sigma_0,
            correlation_model: CorrelationModel::ThermalEquipartition,
        }
    }

    pub fn validate(&self, params: &PhysicalParams) -> Result<()> {
        ensure_positive("sigma_0", self.sigma_0)?;
        let zpf = params.zero_point_size();
        // A relative slack of a few ulps admits sigma_0 == zpf computed elsewhere.
        if self.sigma_0 < zpf * (1.0 - 1e-12) {
            return Err(invalid(
                "sigma_0",
                format!(
                    "{:e} m is below the zero-point size {zpf:e} m of the confining trap",
                    self.sigma_0
                ),
            ));
        }
        Ok(())
    }

    /// Phase-space covariance at release.
    pub fn covariance(&self, params: &PhysicalParams) -> Cov2 {
        match self.correlation_model {
            CorrelationModel::ThermalEquipartition => {
                let var_z = self.sigma_0 * self.sigma_0;
                let sp = params.mass * params.omega_trap * self.sigma_0;
                Cov2::new(var_z, 0.0, sp * sp)
            }
        }
    }
}

/// Shot-to-shot noise inputs of the displacement budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    /// Stray-force standard deviation, N.
    pub sigma_sf: f64,
    /// Chip-position standard deviation, m.
    pub sigma_zeta: f64,
}

impl NoiseBudget {
    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("sigma_sf", self.sigma_sf)?;
        ensure_non_negative("sigma_zeta", self.sigma_zeta)
    }
}
