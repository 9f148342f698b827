//! C interface to the expansion model, requirement formulas and fits.
//!
//! All quantities are SI with angular frequencies in rad/s. Every function returns an
//! [`ExpStatus`]; on failure a message is kept per thread and can be read with
//! [`exp_last_error_message`]. Output pointers are written only on success.
//!
//! # Safety
//!
//! Pointers must be null or valid and properly aligned for the duration of the call.
//! Array arguments must hold at least `n` elements. A model handle must come from
//! [`exp_model_new`] and must not be used after [`exp_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use expansion_core::analysis::{fit_expansion, fit_noise_budget, BudgetPoint, CurveKind, CurvePoint, ExpansionCurve, FitResult};
use expansion_core::model::{
    coherence_length, ensemble_state, required_force_noise, required_position_noise,
    required_voltage_noise, sigma_disp_from_budget, xi_max, InitialState, NoiseBudget,
    PhysicalParams,
};
use expansion_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    InvalidData = 3,
    Domain = 4,
    Unbounded = 5,
    NotConverged = 6,
    DegenerateDesign = 7,
    Panic = 8,
}

/// Trap, noise and initial-state parameters.
pub struct ExpModel {
    params: PhysicalParams,
    init: InitialState,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExpGaussianState {
    pub var_z: f64,
    pub cov_zp: f64,
    pub var_p: f64,
    pub det: f64,
    pub purity: f64,
    pub xi: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExpRequirements {
    /// V²/Hz.
    pub s_v: f64,
    /// m²/Hz.
    pub s_zeta: f64,
    /// N²/Hz.
    pub s_sf: f64,
}

/// Two-parameter fit: `(σ_0, σ_disp)` for expansion curves, `(σ_sf, σ_ζ)` for budgets.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExpFit {
    pub values: [f64; 2],
    pub errors: [f64; 2],
    pub covariance: [f64; 4],
    pub chi2: f64,
    pub dof: u32,
    pub converged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ExpStatus {
    match e {
        Error::InvalidParameter { .. } | Error::MissingField(_) | Error::Config(_) => ExpStatus::InvalidParameter,
        Error::InvalidData(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => ExpStatus::InvalidData,
        Error::Domain(_) => ExpStatus::Domain,
        Error::Unbounded => ExpStatus::Unbounded,
        Error::NotConverged(_) => ExpStatus::NotConverged,
        Error::DegenerateDesign(_) => ExpStatus::DegenerateDesign,
    }
}

/// Runs `f`, turning errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), ExpStatusError>) -> ExpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ExpStatus::Ok,
        Ok(Err(ExpStatusError::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            ExpStatus::NullPointer
        }
        Ok(Err(ExpStatusError::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            ExpStatus::Panic
        }
    }
}

enum ExpStatusError {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for ExpStatusError {
    fn from(e: Error) -> Self {
        ExpStatusError::Core(e)
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, ExpStatusError> {
    unsafe { p.as_ref() }.ok_or(ExpStatusError::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, ExpStatusError> {
    unsafe { p.as_mut() }.ok_or(ExpStatusError::Null(what))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], ExpStatusError> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(ExpStatusError::Null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, n) })
}

/// Message of the last failed call on this thread, or null. The pointer stays valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn exp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Creates a model with a thermal initial state of position spread `sigma_0`.
///
/// # Safety
/// `model` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn exp_model_new(
    mass: f64,
    omega_trap: f64,
    omega_inv: f64,
    heating_rate: f64,
    sigma_0: f64,
    model: *mut *mut ExpModel,
) -> ExpStatus {
    guard(|| {
        let slot = unsafe { out(model, "model") }?;
        let params = PhysicalParams::new(mass, omega_trap, omega_inv, heating_rate)?;
        let init = InitialState::thermal(sigma_0);
        init.validate(&params)?;
        *slot = Box::into_raw(Box::new(ExpModel { params, init }));
        Ok(())
    })
}

/// Sets the particle charge (C) and electrode distance (m) used by the voltage-noise
/// requirement.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn exp_model_set_electrodes(model: *mut ExpModel, charge: f64, distance: f64) -> ExpStatus {
    guard(|| {
        let m = unsafe { out(model, "model") }?;
        m.params = m.params.with_charge(charge)?.with_electrode_distance(distance)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn exp_model_free(model: *mut ExpModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Ensemble covariance, purity and coherence length after expanding for `tau`.
///
/// # Safety
/// `model` must be a live handle and `state` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn exp_ensemble_state(
    model: *const ExpModel,
    sigma_disp: f64,
    tau: f64,
    state: *mut ExpGaussianState,
) -> ExpStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let dst = unsafe { out(state, "state") }?;
        let s = ensemble_state(&m.params, &m.init, sigma_disp, tau)?;
        let xi = coherence_length(&s, m.params.hbar)?;
        *dst = ExpGaussianState {
            var_z: s.var_z(),
            cov_zp: s.cov_zp(),
            var_p: s.var_p(),
            det: s.det(),
            purity: m.params.hbar / (2.0 * s.det().sqrt()),
            xi,
        };
        Ok(())
    })
}

/// Maximum coherence length over expansion times and the time where it occurs.
///
/// # Safety
/// `model` must be a live handle; `tau_star` and `xi` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn exp_xi_max(
    model: *const ExpModel,
    sigma_disp: f64,
    tau_star: *mut f64,
    xi: *mut f64,
) -> ExpStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let t = unsafe { out(tau_star, "tau_star") }?;
        let x = unsafe { out(xi, "xi") }?;
        let r = xi_max(&m.params, &m.init, sigma_disp)?;
        *t = r.tau_star;
        *x = r.xi_max;
        Ok(())
    })
}

/// Displacement spread produced by a stray-force spread (N) and a chip-position spread (m).
///
/// # Safety
/// `model` must be a live handle and `sigma_disp` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn exp_sigma_disp_from_budget(
    model: *const ExpModel,
    sigma_sf: f64,
    sigma_zeta: f64,
    sigma_disp: *mut f64,
) -> ExpStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let dst = unsafe { out(sigma_disp, "sigma_disp") }?;
        *dst = sigma_disp_from_budget(&NoiseBudget { sigma_sf, sigma_zeta }, &m.params)?;
        Ok(())
    })
}

/// Noise spectral densities that allow heating rate `target_gamma` and keep the added
/// spread below `sigma_target` over an expansion of `tau_ex`.
///
/// # Safety
/// `model` must be a live handle with electrodes set, `result` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn exp_requirements(
    model: *const ExpModel,
    target_gamma: f64,
    tau_ex: f64,
    sigma_target: f64,
    result: *mut ExpRequirements,
) -> ExpStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let dst = unsafe { out(result, "result") }?;
        *dst = ExpRequirements {
            s_v: required_voltage_noise(&m.params, target_gamma)?,
            s_zeta: required_position_noise(tau_ex, sigma_target)?,
            s_sf: required_force_noise(&m.params, tau_ex, sigma_target)?,
        };
        Ok(())
    })
}

fn to_ffi(f: &FitResult) -> ExpFit {
    ExpFit {
        values: [f.parameters[0], f.parameters[1]],
        errors: [f.errors[0], f.errors[1]],
        covariance: [f.covariance[0][0], f.covariance[0][1], f.covariance[1][0], f.covariance[1][1]],
        chi2: f.chi2,
        dof: f.dof as u32,
        converged: f.converged,
    }
}

/// Fits `(σ_0, σ_disp)` to `n` points of a measured σ_z(τ) curve. The model's own
/// `sigma_0` is not used.
///
/// # Safety
/// `tau`, `sigma_z` and `err` must hold `n` values; `fit` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn exp_fit_expansion(
    model: *const ExpModel,
    tau: *const f64,
    sigma_z: *const f64,
    err: *const f64,
    n: usize,
    fit: *mut ExpFit,
) -> ExpStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let (t, v, e) = unsafe { (slice(tau, n, "tau")?, slice(sigma_z, n, "sigma_z")?, slice(err, n, "err")?) };
        let dst = unsafe { out(fit, "fit") }?;
        let points = (0..n)
            .map(|i| CurvePoint { tau: t[i], value: v[i], err: e[i] })
            .collect();
        let curve = ExpansionCurve::new(CurveKind::SigmaZ, points)?;
        *dst = to_ffi(&fit_expansion(&curve, &m.params)?);
        Ok(())
    })
}

/// Fits `(σ_sf, σ_ζ)` to `n` displacement spreads measured at inverted frequencies
/// `omega_inv` (rad/s).
///
/// # Safety
/// `omega_inv`, `sigma_disp` and `err` must hold `n` values; `fit` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn exp_fit_noise_budget(
    mass: f64,
    omega_inv: *const f64,
    sigma_disp: *const f64,
    err: *const f64,
    n: usize,
    fit: *mut ExpFit,
) -> ExpStatus {
    guard(|| {
        let (w, s, e) = unsafe { (slice(omega_inv, n, "omega_inv")?, slice(sigma_disp, n, "sigma_disp")?, slice(err, n, "err")?) };
        let dst = unsafe { out(fit, "fit") }?;
        let points: Vec<BudgetPoint> = (0..n)
            .map(|i| BudgetPoint { omega_inv: w[i], sigma_disp: s[i], err: e[i] })
            .collect();
        *dst = to_ffi(&fit_noise_budget(&points, mass)?);
        Ok(())
    })
}
