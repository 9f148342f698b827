//! Closed-form moment propagation through the inverted potential.
//!
//! Phase (ii) obeys `z' = p/m`, `p' = m omega_inv² z + f(t)` with white force noise of
//! intensity `2 m ħ omega_trap Γ`. Displacement noise enters as a per-shot shift of the
//! inverted-potential center that is constant within a shot; positions are referenced to
//! the per-shot equilibrium of the combined trap.

use nalgebra::Matrix2;

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};

use super::params::{InitialState, PhysicalParams};
use super::special::{heating_kernel, one_minus_cosh, sinh_sq_minus_sq};
use super::state::{Cov2, GaussianState};

/// Largest admissible `omega_inv·tau`. The position spread grows by about `e^30 ≈ 10^13`.
pub const MAX_GROWTH_EXPONENT: f64 = 30.0;

/// Validates `tau` and returns `omega_inv·tau`.
pub fn growth_exponent(params: &PhysicalParams, tau: f64) -> Result<f64> {
    ensure_non_negative("tau", tau)?;
    let x = params.omega_inv * tau;
    if x > MAX_GROWTH_EXPONENT * (1.0 + 4.0 * f64::EPSILON) {
        return Err(Error::Domain(format!(
            "omega_inv·tau = {x} exceeds the overflow guard {MAX_GROWTH_EXPONENT}"
        )));
    }
    Ok(x)
}

/// Homogeneous solution matrix of the inverted oscillator over `tau`.
pub fn symplectic_map(params: &PhysicalParams, tau: f64) -> Result<Matrix2<f64>> {
    params.validate()?;
    let x = growth_exponent(params, tau)?;
    let mw = params.mass * params.omega_inv;
    let (s, c) = (x.sinh(), x.cosh());
    Ok(Matrix2::new(c, s / mw, mw * s, c))
}

/// Expanded variance of the initial thermal state, `σ0²[cosh² + r² sinh²]`.
pub fn coherent_variance(params: &PhysicalParams, sigma_0: f64, tau: f64) -> Result<f64> {
    params.validate()?;
    ensure_positive("sigma_0", sigma_0)?;
    let x = growth_exponent(params, tau)?;
    let r = params.ratio();
    let (s, c) = (x.sinh(), x.cosh());
    Ok(sigma_0 * sigma_0 * (c * c + r * r * s * s))
}

/// Covariance added by white-noise heating during the inverted evolution.
pub fn whitenoise_covariance(params: &PhysicalParams, tau: f64) -> Result<Cov2> {
    params.validate()?;
    let x = growth_exponent(params, tau)?;
    let omega = params.omega_inv;
    let m = params.mass;
    let kernel = heating_kernel(omega, tau);
    let zz = params.ratio() * params.hbar * params.heating_rate / (m * omega) * kernel;
    let d = params.force_noise_intensity();
    let s = x.sinh();
    let pp = 0.5 * d * (kernel + 2.0 * tau);
    let zp = d * s * s / (2.0 * m * omega * omega);
    Ok(Cov2::new(zz, zp, pp))
}

/// Rank-one covariance of the per-shot mean trajectory under displacement noise.
pub fn shot_covariance(params: &PhysicalParams, sigma_disp: f64, tau: f64) -> Result<Cov2> {
    params.validate()?;
    ensure_non_negative("sigma_disp", sigma_disp)?;
    let x = growth_exponent(params, tau)?;
    let gain = params.displacement_gain();
    let k2 = sigma_disp * sigma_disp * gain * gain;
    let omc = one_minus_cosh(x);
    let mws = params.mass * params.omega_inv * x.sinh();
    Ok(Cov2::new(k2 * omc * omc, -k2 * omc * mws, k2 * mws * mws))
}

/// Propagates an arbitrary initial covariance through phase (ii) and adds both noise
/// contributions. The returned state carries a determinant computed in the eigenbasis of
/// the inverted oscillator, where no catastrophic cancellation occurs.
pub fn propagate_covariance(
    params: &PhysicalParams,
    initial: &Cov2,
    sigma_disp: f64,
    tau: f64,
) -> Result<GaussianState> {
    params.validate()?;
    if !initial.is_psd(1e-12) {
        return Err(Error::Domain(format!(
            "initial covariance {initial:?} is not positive semidefinite"
        )));
    }
    let map = symplectic_map(params, tau)?;
    let cov = initial.congruence(&map)
        + whitenoise_covariance(params, tau)?
        + shot_covariance(params, sigma_disp, tau)?;

    let det = stable_determinant(params, initial, sigma_disp, tau)?;
    GaussianState::with_determinant(0.0, 0.0, cov, det)
}

/// Ensemble state at recapture for a thermal initial state.
pub fn ensemble_state(
    params: &PhysicalParams,
    init: &InitialState,
    sigma_disp: f64,
    tau: f64,
) -> Result<GaussianState> {
    init.validate(params)?;
    let mut state = propagate_covariance(params, &init.covariance(params), sigma_disp, tau)?;
    // Pin the position entry to the sum of the three closed forms.
    let var_z = coherent_variance(params, init.sigma_0, tau)?
        + whitenoise_covariance(params, tau)?.zz
        + shot_covariance(params, sigma_disp, tau)?.zz;
    let cov = Cov2::new(var_z, state.cov_zp(), state.var_p());
    state = GaussianState::with_determinant(0.0, 0.0, cov, state.det())?;
    Ok(state)
}

/// Determinant of the total covariance.
///
/// With `p̃ = p / (m omega_inv)`, the coordinates `u = (z + p̃)/√2`, `v = (z − p̃)/√2`
/// diagonalize the flow as `diag(e^x, e^-x)`. Each contribution is written in that basis and
/// the determinant is assembled from `det(A + B) = det A + det B + A_uu B_vv + A_vv B_uu −
/// 2 A_uv B_uv` and, for the rank-one shot term, `det(A + σ² g gᵀ) = det A + σ² gᵀ adj(A) g`.
fn stable_determinant(
    params: &PhysicalParams,
    initial: &Cov2,
    sigma_disp: f64,
    tau: f64,
) -> Result<f64> {
    let x = growth_exponent(params, tau)?;
    let omega = params.omega_inv;
    let w = params.mass * omega;

    // Initial covariance in (z, p̃) and then (u, v).
    let a_zz = initial.zz;
    let a_zp = initial.zp / w;
    let a_pp = initial.pp / (w * w);
    let uu0 = 0.5 * (a_zz + 2.0 * a_zp + a_pp);
    let vv0 = 0.5 * (a_zz - 2.0 * a_zp + a_pp);
    let uv0 = 0.5 * (a_zz - a_pp);
    let det0 = initial.det() / (w * w);

    let e2 = (2.0 * x).exp();
    let (p_uu, p_vv, p_uv) = (uu0 * e2, vv0 / e2, uv0);

    // White-noise contribution: noise enters p̃ with intensity D / w².
    let half_d = 0.5 * params.force_noise_intensity() / (w * w);
    let w_uu = half_d * (2.0 * x).exp_m1() / (2.0 * omega);
    let w_vv = -half_d * (-2.0 * x).exp_m1() / (2.0 * omega);
    let w_uv = -half_d * tau;
    let det_w = (half_d / omega).powi(2) * sinh_sq_minus_sq(x);

    let det_a = det0 + det_w + p_uu * w_vv + p_vv * w_uu - 2.0 * p_uv * w_uv;
    let (a_uu, a_vv, a_uv) = (p_uu + w_uu, p_vv + w_vv, p_uv + w_uv);

    // Shot term: per-shot displacement d maps to (u, v) = d·g.
    let gain = params.displacement_gain();
    let g_u = -gain * x.exp_m1() / std::f64::consts::SQRT_2;
    let g_v = -gain * (-x).exp_m1() / std::f64::consts::SQRT_2;
    let quad = a_vv * g_u * g_u + a_uu * g_v * g_v - 2.0 * a_uv * g_u * g_v;

    Ok(w * w * (det_a + sigma_disp * sigma_disp * quad))
}
