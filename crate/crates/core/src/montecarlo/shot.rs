use nalgebra::Vector2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::stats::{compute_stats, EnsembleStats, StatsOptions};
use crate::error::{ensure_non_negative, ensure_positive, invalid, Error, Result};
use crate::model::{
    growth_exponent, InitialState, NoiseBudget, PhasePoint, PhysicalParams,
};

use super::rng::{stream, Purpose};
use super::sde::{Discretization, LinearSde2};
use super::trace;

/// Default one-sided detector position-noise PSD, m²/Hz.
pub const DEFAULT_DETECTOR_PSD: f64 = 1e-24;

/// Timing of one realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolTimeline {
    /// Feedback switched off this long before release, s.
    pub t_fb_off: f64,
    /// Time spent in the inverted potential, s.
    pub tau: f64,
    /// Length of the recorded recapture trace, s.
    pub recapture_duration: f64,
    /// Detector sampling rate, Hz.
    pub sample_rate: f64,
}

impl ProtocolTimeline {
    pub fn validate(&self, params: &PhysicalParams) -> Result<()> {
        ensure_non_negative("t_fb_off", self.t_fb_off)?;
        ensure_non_negative("tau", self.tau)?;
        ensure_non_negative("recapture_duration", self.recapture_duration)?;
        ensure_positive("sample_rate", self.sample_rate)?;
        let nyquist = 2.0 * params.omega_trap / std::f64::consts::TAU;
        if self.sample_rate <= nyquist {
            return Err(invalid(
                "sample_rate",
                format!("{} Hz must exceed twice the trap frequency ({nyquist} Hz)", self.sample_rate),
            ));
        }
        Ok(())
    }

    /// Number of trace samples, `recapture_duration·sample_rate` rounded.
    pub fn trace_len(&self) -> usize {
        (self.recapture_duration * self.sample_rate).round() as usize
    }
}

/// Source of the per-shot displacement of the inverted potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Displacement {
    /// `d ~ N(0, sigma_disp²)`.
    Direct { sigma_disp: f64 },
    /// `d = F/(m omega_inv²) + zeta` with independent Gaussian stray force and chip position.
    Budget(NoiseBudget),
}

impl Displacement {
    pub fn sigma_disp(&self, params: &PhysicalParams) -> Result<f64> {
        match self {
            Displacement::Direct { sigma_disp } => {
                ensure_non_negative("sigma_disp", *sigma_disp)?;
                Ok(*sigma_disp)
            }
            Displacement::Budget(b) => crate::model::sigma_disp_from_budget(b, params),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, params: &PhysicalParams, rng: &mut R) -> f64 {
        match self {
            Displacement::Direct { sigma_disp } => sigma_disp * rng.sample::<f64, _>(StandardNormal),
            Displacement::Budget(b) => {
                let k = params.mass * params.omega_inv * params.omega_inv;
                let force: f64 = b.sigma_sf * rng.sample::<f64, _>(StandardNormal);
                let zeta: f64 = b.sigma_zeta * rng.sample::<f64, _>(StandardNormal);
                force / k + zeta
            }
        }
    }
}

/// Optional simulation of the feedback-cooled phase before release.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase1Cooling {
    /// Cooling time before feedback is switched off, s.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotConfig {
    pub params: PhysicalParams,
    pub init: InitialState,
    pub displacement: Displacement,
    pub timeline: ProtocolTimeline,
    /// Cold-damping rate in phase (i), 1/s.
    pub feedback_damping: f64,
    /// One-sided detector PSD, m²/Hz.
    pub detector_noise_psd: f64,
    pub seed: u64,
    /// Number of exact sub-steps across the inverted evolution.
    #[serde(default = "one")]
    pub expansion_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase1: Option<Phase1Cooling>,
}

fn one() -> usize {
    1
}

impl ShotConfig {
    /// Config with the default detector noise and the cold-damping rate that realizes
    /// `init.sigma_0` (zero when there is no heating).
    pub fn new(
        params: PhysicalParams,
        init: InitialState,
        displacement: Displacement,
        timeline: ProtocolTimeline,
        seed: u64,
    ) -> Self {
        let feedback_damping = trace::feedback_damping_for(&params, init.sigma_0).unwrap_or(0.0);
        Self {
            params,
            init,
            displacement,
            timeline,
            feedback_damping,
            detector_noise_psd: DEFAULT_DETECTOR_PSD,
            seed,
            expansion_steps: 1,
            phase1: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.init.validate(&self.params)?;
        self.displacement.sigma_disp(&self.params)?;
        self.timeline.validate(&self.params)?;
        ensure_non_negative("feedback_damping", self.feedback_damping)?;
        ensure_non_negative("detector_noise_psd", self.detector_noise_psd)?;
        if self.expansion_steps == 0 {
            return Err(invalid("expansion_steps", "must be at least 1"));
        }
        growth_exponent(&self.params, self.timeline.tau)?;
        if let Some(p1) = &self.phase1 {
            ensure_non_negative("phase1.duration", p1.duration)?;
            if !(self.feedback_damping > 0.0) {
                return Err(invalid("feedback_damping", "phase-1 cooling needs a positive rate"));
            }
        }
        Ok(())
    }
}

/// Outcome of one realization. Positions are relative to the per-shot equilibrium of the
/// combined trap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot_index: u64,
    /// Displacement of the inverted potential, m.
    pub displacement: f64,
    pub initial: PhasePoint,
    /// True state at recapture.
    pub final_state: PhasePoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
}

/// Precomputed exact discretizations for one configuration.
#[derive(Debug, Clone)]
pub struct ShotSimulator {
    config: ShotConfig,
    expansion: Discretization,
    pub(crate) recapture: Discretization,
    cooling: Option<(Discretization, usize)>,
    free_before_release: Discretization,
}

impl ShotSimulator {
    pub fn new(config: &ShotConfig) -> Result<Self> {
        config.validate()?;
        let p = &config.params;
        let d = p.force_noise_intensity();
        let m = p.mass;
        let k_inv = m * p.omega_inv * p.omega_inv;
        let k_trap = -m * p.omega_trap * p.omega_trap;

        let steps = config.expansion_steps;
        let expansion = LinearSde2::oscillator(m, k_inv, 0.0, d)
            .discretize(config.timeline.tau / steps as f64);
        let recapture = LinearSde2::oscillator(m, k_trap, 0.0, d)
            .discretize(1.0 / config.timeline.sample_rate);
        let free_before_release =
            LinearSde2::oscillator(m, k_trap, 0.0, d).discretize(config.timeline.t_fb_off);
        let cooling = config.phase1.map(|p1| {
            // Sub-steps of at most one radian of trap phase.
            let n = ((p.omega_trap * p1.duration).ceil() as usize).max(1);
            let disc = LinearSde2::oscillator(m, k_trap, config.feedback_damping, d)
                .discretize(p1.duration / n as f64);
            (disc, n)
        });
        Ok(Self {
            config: config.clone(),
            expansion,
            recapture,
            cooling,
            free_before_release,
        })
    }

    pub fn config(&self) -> &ShotConfig {
        &self.config
    }

    /// Draws one realization; traces are added only when `with_trace` is set.
    pub fn draw(&self, shot_index: u64, with_trace: bool) -> ShotRecord {
        let mut rng = stream(self.config.seed, Purpose::Shot, shot_index);
        let p = &self.config.params;
        let displacement = self.config.displacement.draw(p, &mut rng);
        let initial = match self.cooling {
            Some(_) => self.cooled_release_state(shot_index),
            None => {
                let cov = self.config.init.covariance(p);
                let l = super::sde::psd_factor(&cov.to_matrix());
                let xi = Vector2::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                );
                let x = l * xi;
                PhasePoint::new(x[0], x[1])
            }
        };
        let final_state = self.expand(initial, displacement, &mut rng);
        let mut record = ShotRecord {
            shot_index,
            displacement,
            initial,
            final_state,
            trace: None,
        };
        if with_trace {
            record.trace = Some(self.trace(&record));
        }
        record
    }

    /// Inverted evolution from `start` (relative to the combined-trap equilibrium) with the
    /// inverted potential centered at `displacement`.
    pub(crate) fn expand<R: Rng + ?Sized>(
        &self,
        start: PhasePoint,
        displacement: f64,
        rng: &mut R,
    ) -> PhasePoint {
        let p = &self.config.params;
        let z_eq = p.combined_equilibrium(displacement);
        // Deviation from the apex of the inverted potential.
        let mut y = Vector2::new(start.z + z_eq - displacement, start.p);
        for _ in 0..self.config.expansion_steps {
            y = self.expansion.step(y, rng);
        }
        PhasePoint::new(y[0] + displacement - z_eq, y[1])
    }

    /// Phase (i): cold damping from rest, then free evolution with feedback off.
    pub(crate) fn cooled_release_state(&self, shot_index: u64) -> PhasePoint {
        let mut rng = stream(self.config.seed, Purpose::Cooling, shot_index);
        let mut x = Vector2::zeros();
        if let Some((disc, n)) = &self.cooling {
            for _ in 0..*n {
                x = disc.step(x, &mut rng);
            }
        }
        x = self.free_before_release.step(x, &mut rng);
        PhasePoint::new(x[0], x[1])
    }

    /// Phase (iii) detector record: first sample at recapture, spacing `1/sample_rate`.
    pub fn trace(&self, record: &ShotRecord) -> Vec<f64> {
        let mut rng = stream(self.config.seed, Purpose::Trace, record.shot_index);
        let n = self.config.timeline.trace_len();
        let noise_sd =
            (self.config.detector_noise_psd * self.config.timeline.sample_rate / 2.0).sqrt();
        let mut x = Vector2::new(record.final_state.z, record.final_state.p);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            if i > 0 {
                x = self.recapture.step(x, &mut rng);
            }
            let noise = if noise_sd > 0.0 {
                noise_sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            out.push(x[0] + noise);
        }
        out
    }
}

/// Evolves a given release state through the inverted potential.
pub fn expand_from(
    config: &ShotConfig,
    start: PhasePoint,
    displacement: f64,
    shot_index: u64,
) -> Result<PhasePoint> {
    let sim = ShotSimulator::new(config)?;
    let mut rng = stream(config.seed, Purpose::Shot, shot_index);
    Ok(sim.expand(start, displacement, &mut rng))
}

pub fn draw_shot(config: &ShotConfig, shot_index: u64) -> Result<ShotRecord> {
    Ok(ShotSimulator::new(config)?.draw(shot_index, false))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnsembleOptions {
    pub with_traces: bool,
    pub stats: StatsOptions,
}

pub fn run_ensemble(config: &ShotConfig, n_shots: usize) -> Result<(EnsembleStats, Vec<ShotRecord>)> {
    run_ensemble_with(config, n_shots, &EnsembleOptions::default())
}

/// Runs `n_shots` realizations in parallel. Records are ordered by shot index and do not
/// depend on the number of worker threads.
pub fn run_ensemble_with(
    config: &ShotConfig,
    n_shots: usize,
    options: &EnsembleOptions,
) -> Result<(EnsembleStats, Vec<ShotRecord>)> {
    if n_shots < 2 {
        return Err(invalid("n_shots", "an ensemble needs at least 2 shots"));
    }
    let sim = ShotSimulator::new(config)?;
    let records: Vec<ShotRecord> = (0..n_shots as u64)
        .into_par_iter()
        .map(|i| sim.draw(i, options.with_traces))
        .collect();
    let points: Vec<PhasePoint> = records.iter().map(|r| r.final_state).collect();
    let stats = compute_stats(&points, config.params.hbar, &options.stats)?;
    if stats.n_shots != n_shots {
        return Err(Error::Domain("ensemble size mismatch".into()));
    }
    Ok((stats, records))
}
