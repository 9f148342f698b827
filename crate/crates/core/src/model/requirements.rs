//! Technical requirements derived from the noise model.

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};

use super::params::{NoiseBudget, PhysicalParams};

/// Effective displacement spread `sqrt(σ_sf² (m omega_inv²)⁻² + σ_ζ²)`.
pub fn sigma_disp_from_budget(budget: &NoiseBudget, params: &PhysicalParams) -> Result<f64> {
    params.validate()?;
    budget.validate()?;
    let stiffness = params.mass * params.omega_inv * params.omega_inv;
    Ok((budget.sigma_sf / stiffness).hypot(budget.sigma_zeta))
}

/// Voltage-noise spectral density `2 d² Γ ħ m omega_trap / q²` (V²/Hz) that produces the
/// heating rate `target_gamma`.
pub fn required_voltage_noise(params: &PhysicalParams, target_gamma: f64) -> Result<f64> {
    params.validate()?;
    ensure_non_negative("target_gamma", target_gamma)?;
    let q = params.charge.ok_or(Error::MissingField("charge"))?;
    let d = params
        .electrode_distance
        .ok_or(Error::MissingField("electrode_distance"))?;
    Ok(2.0 * d * d * target_gamma * params.hbar * params.mass * params.omega_trap / (q * q))
}

/// Low-frequency position-noise level `2 τ_ex σ²` (m²/Hz) that keeps chip-position
/// fluctuations below `sigma_target` over an expansion of `tau_ex`.
pub fn required_position_noise(tau_ex: f64, sigma_target: f64) -> Result<f64> {
    ensure_positive("tau_ex", tau_ex)?;
    ensure_non_negative("sigma_target", sigma_target)?;
    Ok(2.0 * tau_ex * sigma_target * sigma_target)
}

/// Low-frequency stray-force level `2 τ_ex (m omega_inv² σ)²` (N²/Hz).
pub fn required_force_noise(params: &PhysicalParams, tau_ex: f64, sigma_target: f64) -> Result<f64> {
    params.validate()?;
    ensure_positive("tau_ex", tau_ex)?;
    ensure_non_negative("sigma_target", sigma_target)?;
    let f = params.mass * params.omega_inv * params.omega_inv * sigma_target;
    Ok(2.0 * tau_ex * f * f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ELEMENTARY_CHARGE;
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    fn discussion_params() -> PhysicalParams {
        PhysicalParams::new(4.4e-18, TAU * 40e3, TAU * 10e3, TAU)
            .unwrap()
            .with_charge(100.0 * ELEMENTARY_CHARGE)
            .unwrap()
            .with_electrode_distance(1e-3)
            .unwrap()
    }

    #[test]
    fn budget_without_stray_force_is_chip_noise() {
        let p = PhysicalParams::new(4.4e-18, TAU * 44e3, TAU * 7.6e3, 0.0).unwrap();
        let b = NoiseBudget { sigma_sf: 0.0, sigma_zeta: 834e-12 };
        assert_eq!(sigma_disp_from_budget(&b, &p).unwrap(), 834e-12);
    }

    #[test]
    fn budget_at_fitted_values() {
        // Extended-precision evaluation: 1.3696004646230129 nm at omega_inv = 2π·7.6 kHz.
        let p = PhysicalParams::new(4.4e-18, TAU * 44e3, TAU * 7.6e3, 0.0).unwrap();
        let b = NoiseBudget { sigma_sf: 10.9e-18, sigma_zeta: 834e-12 };
        assert_relative_eq!(
            sigma_disp_from_budget(&b, &p).unwrap(),
            1.369_600_464_623_013e-9,
            max_relative = 1e-12
        );
    }

    #[test]
    fn stray_force_term_vanishes_at_stiff_potential() {
        let b = NoiseBudget { sigma_sf: 10.9e-18, sigma_zeta: 834e-12 };
        let at = |f: f64| {
            let p = PhysicalParams::new(4.4e-18, TAU * 1e9, TAU * f, 0.0).unwrap();
            sigma_disp_from_budget(&b, &p).unwrap().powi(2) - b.sigma_zeta.powi(2)
        };
        // Variance excess falls as omega_inv⁻⁴.
        assert_relative_eq!(at(1e4) / at(2e4), 16.0, max_relative = 1e-6);
        assert_relative_eq!(at(1e8).sqrt() + b.sigma_zeta, b.sigma_zeta, max_relative = 1e-9);
    }

    #[test]
    fn voltage_noise_scalings() {
        let p = discussion_params();
        assert_eq!(required_voltage_noise(&p, 0.0).unwrap(), 0.0);
        let base = required_voltage_noise(&p, TAU).unwrap();
        // 5.7089701668025957e-18 V²/Hz from an extended-precision evaluation.
        assert_relative_eq!(base, 5.708_970_166_802_596e-18, max_relative = 1e-12);
        let doubled = p.with_charge(200.0 * ELEMENTARY_CHARGE).unwrap();
        assert_relative_eq!(required_voltage_noise(&doubled, TAU).unwrap(), base / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn voltage_noise_needs_charge_and_distance() {
        let p = PhysicalParams::new(4.4e-18, TAU * 40e3, TAU * 10e3, TAU).unwrap();
        assert!(matches!(required_voltage_noise(&p, TAU), Err(Error::MissingField("charge"))));
    }

    #[test]
    fn position_and_force_noise() {
        let p = discussion_params();
        assert_relative_eq!(required_position_noise(100e-6, 0.5e-12).unwrap(), 5e-29, max_relative = 1e-14);
        let f = required_force_noise(&p, 100e-6, 0.5e-12).unwrap();
        assert!(f > 1e-44 && f < 2e-44);
        assert_eq!(required_position_noise(100e-6, 0.0).unwrap(), 0.0);
        assert_eq!(required_force_noise(&p, 100e-6, 0.0).unwrap(), 0.0);
        assert!(required_position_noise(0.0, 1e-12).is_err());
    }
}
