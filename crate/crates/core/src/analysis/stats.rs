use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{coherence_length, purity, Cov2, GaussianState, PhasePoint};
use crate::montecarlo::{stream, Purpose};

/// Sub-seed of the bootstrap streams, fixed so that error bars are reproducible.
pub const BOOTSTRAP_SEED: u64 = 0x5eed_b007;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsOptions {
    /// Number of bootstrap resamples; 0 disables error estimation.
    pub bootstrap_resamples: usize,
    pub seed: u64,
    /// Known covariance of the per-shot estimation error, subtracted from the sample
    /// covariance when the points are estimates rather than true states.
    pub estimator_covariance: Option<Cov2>,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            bootstrap_resamples: 1000,
            seed: BOOTSTRAP_SEED,
            estimator_covariance: None,
        }
    }
}

impl StatsOptions {
    pub fn no_bootstrap() -> Self {
        Self {
            bootstrap_resamples: 0,
            ..Self::default()
        }
    }
}

/// Bootstrap standard errors of the ensemble statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatErrors {
    pub mean_z: f64,
    pub mean_p: f64,
    pub sigma_z: f64,
    pub sigma_p: f64,
    pub cov_zp: f64,
    pub purity: Option<f64>,
    pub xi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_shots: usize,
    pub mean_z: f64,
    pub mean_p: f64,
    pub sigma_z: f64,
    pub sigma_p: f64,
    pub cov_zp: f64,
    /// `None` when the covariance is singular.
    pub purity: Option<f64>,
    pub xi: Option<f64>,
    /// Purity above 1, possible only for sampled or deconvolved covariances.
    pub unphysical: bool,
    /// Zero variance, or a covariance that is singular or indefinite.
    pub degenerate: bool,
    pub errors: Option<StatErrors>,
}

impl EnsembleStats {
    pub fn covariance(&self) -> Cov2 {
        Cov2::new(self.sigma_z.powi(2), self.cov_zp, self.sigma_p.powi(2))
    }
}

struct Moments {
    mean_z: f64,
    mean_p: f64,
    cov: Cov2,
}

fn moments<I>(points: &[PhasePoint], idx: I) -> Moments
where
    I: Iterator<Item = usize> + Clone,
{
    let n = idx.clone().count() as f64;
    let (sz, sp) = idx
        .clone()
        .fold((0.0, 0.0), |(a, b), i| (a + points[i].z, b + points[i].p));
    let (mz, mp) = (sz / n, sp / n);
    let (mut zz, mut zp, mut pp) = (0.0, 0.0, 0.0);
    for i in idx {
        let (dz, dp) = (points[i].z - mz, points[i].p - mp);
        zz += dz * dz;
        zp += dz * dp;
        pp += dp * dp;
    }
    let k = 1.0 / (n - 1.0);
    Moments {
        mean_z: mz,
        mean_p: mp,
        cov: Cov2::new(zz * k, zp * k, pp * k),
    }
}

struct Derived {
    cov: Cov2,
    purity: Option<f64>,
    xi: Option<f64>,
    unphysical: bool,
    degenerate: bool,
}

fn derive(m: &Moments, hbar: f64, estimator: Option<Cov2>) -> Derived {
    let cov = match estimator {
        Some(e) => m.cov - e,
        None => m.cov,
    };
    let state = GaussianState::new(m.mean_z, m.mean_p, cov)
        .ok()
        .filter(|s| s.det() > 0.0);
    let degenerate = state.is_none() || cov.zz <= 0.0 || cov.pp <= 0.0;
    let (purity, xi, unphysical) = match state {
        Some(s) if !degenerate => {
            let p = purity(&s, hbar).ok();
            let xi = coherence_length(&s, hbar).ok();
            (p.map(|p| p.value), xi, p.is_some_and(|p| p.unphysical))
        }
        _ => (None, None, false),
    };
    Derived {
        cov,
        purity,
        xi,
        unphysical,
        degenerate,
    }
}

fn std_dev(values: impl Iterator<Item = f64> + Clone) -> Option<f64> {
    let n = values.clone().count();
    if n < 2 {
        return None;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss = values.map(|v| (v - mean).powi(2)).sum::<f64>();
    Some((ss / (n - 1) as f64).sqrt())
}

/// Ensemble moments with unbiased (n−1) estimators and bootstrap standard errors.
pub fn compute_stats(points: &[PhasePoint], hbar: f64, options: &StatsOptions) -> Result<EnsembleStats> {
    let n = points.len();
    if n < 2 {
        return Err(invalid("points", "ensemble statistics need at least 2 shots"));
    }
    if points.iter().any(|p| !p.z.is_finite() || !p.p.is_finite()) {
        return Err(invalid("points", "non-finite phase-space point"));
    }
    let m = moments(points, 0..n);
    let d = derive(&m, hbar, options.estimator_covariance);

    let errors = (options.bootstrap_resamples >= 2).then(|| {
        let resamples: Vec<(Moments, Derived)> = (0..options.bootstrap_resamples as u64)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream(options.seed, Purpose::Bootstrap, b);
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let m = moments(points, idx.iter().copied());
                let d = derive(&m, hbar, options.estimator_covariance);
                (m, d)
            })
            .collect();
        let se = |f: &dyn Fn(&(Moments, Derived)) -> f64| {
            std_dev(resamples.iter().map(f)).unwrap_or(f64::NAN)
        };
        StatErrors {
            mean_z: se(&|r| r.0.mean_z),
            mean_p: se(&|r| r.0.mean_p),
            sigma_z: se(&|r| r.1.cov.zz.max(0.0).sqrt()),
            sigma_p: se(&|r| r.1.cov.pp.max(0.0).sqrt()),
            cov_zp: se(&|r| r.1.cov.zp),
            purity: std_dev(resamples.iter().filter_map(|r| r.1.purity)),
            xi: std_dev(resamples.iter().filter_map(|r| r.1.xi)),
        }
    });

    Ok(EnsembleStats {
        n_shots: n,
        mean_z: m.mean_z,
        mean_p: m.mean_p,
        sigma_z: d.cov.zz.max(0.0).sqrt(),
        sigma_p: d.cov.pp.max(0.0).sqrt(),
        cov_zp: d.cov.zp,
        purity: d.purity,
        xi: d.xi,
        unphysical: d.unphysical,
        degenerate: d.degenerate,
        errors,
    })
}
