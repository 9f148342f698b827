use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::{InitialState, PhysicalParams};
use super::propagation::{ensemble_state, MAX_GROWTH_EXPONENT};
use super::state::GaussianState;

/// Purity of a Gaussian state. `unphysical` marks values above 1 (beyond the Heisenberg
/// bound), which only arise from sampled or user-supplied covariances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Purity {
    pub value: f64,
    pub unphysical: bool,
}

/// `ħ / (2 sqrt(det Σ))`.
pub fn purity(state: &GaussianState, hbar: f64) -> Result<Purity> {
    let det = state.det();
    if !(det > 0.0 && det.is_finite()) {
        return Err(Error::Domain(format!(
            "purity undefined for covariance determinant {det:e}"
        )));
    }
    let value = hbar / (2.0 * det.sqrt());
    Ok(Purity {
        value,
        unphysical: value > 1.0 + 1e-9,
    })
}

/// `sqrt(8)·P·σ_z`.
pub fn coherence_length(state: &GaussianState, hbar: f64) -> Result<f64> {
    let p = purity(state, hbar)?;
    Ok(8f64.sqrt() * p.value * state.sigma_z())
}

/// Coherence length of the ensemble state after expanding for `tau`.
pub fn xi_of_tau(
    params: &PhysicalParams,
    init: &InitialState,
    sigma_disp: f64,
    tau: f64,
) -> Result<f64> {
    let state = ensemble_state(params, init, sigma_disp, tau)?;
    coherence_length(&state, params.hbar)
}

/// Search settings for [`xi_max`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiMaxSearch {
    /// Upper end of the scan in units of `1/omega_inv`.
    pub cap_exponent: f64,
    /// Number of log-spaced scan points.
    pub scan_points: usize,
    /// Lowest scan point relative to the cap.
    pub scan_floor: f64,
}

impl Default for XiMaxSearch {
    fn default() -> Self {
        Self {
            cap_exponent: MAX_GROWTH_EXPONENT,
            scan_points: 400,
            scan_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiMax {
    /// Expansion time at which the maximum is reached, s.
    pub tau_star: f64,
    /// Maximal coherence length, m.
    pub xi_max: f64,
}

/// Global maximum of `xi_of_tau` over `[0, cap_exponent/omega_inv]`.
pub fn xi_max(params: &PhysicalParams, init: &InitialState, sigma_disp: f64) -> Result<XiMax> {
    xi_max_with(params, init, sigma_disp, &XiMaxSearch::default())
}

pub fn xi_max_with(
    params: &PhysicalParams,
    init: &InitialState,
    sigma_disp: f64,
    search: &XiMaxSearch,
) -> Result<XiMax> {
    params.validate()?;
    init.validate(params)?;
    if params.heating_rate == 0.0 && sigma_disp == 0.0 {
        return Err(Error::Unbounded);
    }
    if search.scan_points < 3 || !(search.cap_exponent > 0.0) {
        return Err(Error::InvalidParameter {
            name: "search",
            reason: "need at least 3 scan points and a positive cap".into(),
        });
    }
    let cap = search.cap_exponent.min(MAX_GROWTH_EXPONENT) / params.omega_inv;
    let xi = |tau: f64| xi_of_tau(params, init, sigma_disp, tau);

    // tau = 0 followed by a log-spaced grid ending at the cap.
    let n = search.scan_points;
    let log_lo = (cap * search.scan_floor).ln();
    let log_hi = cap.ln();
    let mut taus = Vec::with_capacity(n + 1);
    taus.push(0.0);
    for i in 0..n {
        let f = i as f64 / (n - 1) as f64;
        taus.push((log_lo + f * (log_hi - log_lo)).exp().min(cap));
    }
    let values = taus.iter().map(|&t| xi(t)).collect::<Result<Vec<_>>>()?;

    let (best, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });

    let lo = taus[best.saturating_sub(1)];
    let hi = taus[(best + 1).min(taus.len() - 1)];
    let (tau_ref, xi_ref) = golden_section_max(&xi, lo, hi)?;

    if xi_ref >= values[best] {
        Ok(XiMax {
            tau_star: tau_ref,
            xi_max: xi_ref,
        })
    } else {
        Ok(XiMax {
            tau_star: taus[best],
            xi_max: values[best],
        })
    }
}

fn golden_section_max<F>(f: &F, mut a: f64, mut b: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..200 {
        if (b - a) <= 1e-12 * b.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc > fd { (c, fc) } else { (d, fd) })
}
