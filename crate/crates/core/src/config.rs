//! Run configuration for the command-line tool.
//!
//! Frequencies are ordinary frequencies in Hz and are converted to angular frequencies
//! here; every other quantity is SI with the unit in the key name.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::DEFAULT_LEVELS;
use crate::error::{Error, Result};
use crate::model::{CorrelationModel, InitialState, NoiseBudget, PhysicalParams, HBAR};
use crate::montecarlo::{Displacement, ProtocolTimeline, DEFAULT_DETECTOR_PSD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub physical: PhysicalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<DisplacementConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeline: Option<TimelineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict: Option<PredictConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirements: Option<RequirementsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrodict: Option<RetrodictConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConfig {
    pub mass_kg: f64,
    pub trap_frequency_hz: f64,
    pub inverted_frequency_hz: f64,
    /// Heating rate Γ/2π.
    #[serde(default)]
    pub heating_rate_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charge_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub electrode_distance_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbar_js: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub sigma_0_m: f64,
    #[serde(default)]
    pub correlation_model: CorrelationModel,
}

/// Either `sigma_disp_m`, or the budget pair `sigma_sf_n` and `sigma_zeta_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplacementConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_disp_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_sf_n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_zeta_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineConfig {
    #[serde(default = "default_t_fb_off")]
    pub t_fb_off_s: f64,
    pub recapture_duration_s: f64,
    pub sample_rate_hz: f64,
}

fn default_t_fb_off() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    /// Explicit τ grid; otherwise `points` values spaced evenly on `[0, tau_max_s]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taus_s: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_max_s: Option<f64>,
    #[serde(default = "default_predict_points")]
    pub points: usize,
}

fn default_predict_points() -> usize {
    101
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub taus_s: Vec<f64>,
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default = "default_psd")]
    pub detector_noise_psd_m2_per_hz: f64,
    /// Cold-damping rate; by default the rate whose steady state has spread `sigma_0_m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback_damping_per_s: Option<f64>,
    /// Simulate feedback cooling for this long instead of sampling the release state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase1_duration_s: Option<f64>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_steps")]
    pub expansion_steps: usize,
}

fn default_shots() -> usize {
    200
}
fn default_psd() -> f64 {
    DEFAULT_DETECTOR_PSD
}
fn default_bootstrap() -> usize {
    1000
}
fn default_steps() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Columns `tau_s`, `sigma_z_m`, `err_m`.
    pub curve_csv: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    /// Columns `inverted_frequency_hz`, `sigma_disp_m`, `err_m`.
    pub points_csv: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossPoint {
    pub sigma_disp_m: f64,
    pub heating_rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    /// Log-spaced, m.
    pub sigma_disp_m: GridAxis,
    /// Log-spaced Γ/2π, Hz.
    pub heating_rate_hz: GridAxis,
    #[serde(default = "default_levels")]
    pub levels_m: Vec<f64>,
    /// Extra single-point evaluations, such as the operating point of a measurement.
    #[serde(default)]
    pub cross: Vec<CrossPoint>,
}

fn default_levels() -> Vec<f64> {
    DEFAULT_LEVELS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementsConfig {
    /// Target Γ/2π for the voltage-noise requirement.
    pub target_heating_rate_hz: f64,
    pub tau_ex_s: f64,
    pub sigma_target_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrodictConfig {
    /// Columns `time_s`, `position_m`; the first sample is the recapture instant.
    pub trace_csv: PathBuf,
    #[serde(default = "default_psd")]
    pub detector_noise_psd_m2_per_hz: f64,
}

fn config_error(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

/// Re-labels a parameter error with the config key it came from.
fn at<T>(path: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidParameter { reason, .. } => config_error(path, reason),
        Error::MissingField(f) => config_error(path, format!("missing `{f}`")),
        other => config_error(path, other),
    })
}

fn positive(path: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(config_error(path, format!("must be finite and > 0, got {v}")))
    }
}

impl RunConfig {
    /// Reads a `.toml` or `.json` file. Relative input paths are resolved against the
    /// directory of the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg = if is_json {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("{}: {}", e.path(), e.inner().message())))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("{}: {}", e.path(), e.inner())))
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(f) = &mut self.fit {
            fix(&mut f.curve_csv);
        }
        if let Some(b) = &mut self.budget {
            fix(&mut b.points_csv);
        }
        if let Some(r) = &mut self.retrodict {
            fix(&mut r.trace_csv);
        }
    }

    /// Checks every section that is present.
    pub fn validate(&self) -> Result<()> {
        let params = self.params()?;
        if self.initial.is_some() {
            self.initial_state(&params)?;
        }
        if self.displacement.is_some() {
            self.displacement()?;
        }
        if let Some(p) = &self.predict {
            self.predict_taus(p)?;
        }
        if let Some(s) = &self.simulate {
            if s.shots < 2 {
                return Err(config_error("simulate.shots", "need at least 2 shots"));
            }
            if s.taus_s.is_empty() {
                return Err(config_error("simulate.taus_s", "must not be empty"));
            }
            for (i, &t) in s.taus_s.iter().enumerate() {
                at(&format!("simulate.taus_s[{i}]"), crate::model::growth_exponent(&params, t))?;
            }
            if s.expansion_steps == 0 {
                return Err(config_error("simulate.expansion_steps", "must be at least 1"));
            }
            if !(s.detector_noise_psd_m2_per_hz >= 0.0) {
                return Err(config_error("simulate.detector_noise_psd_m2_per_hz", "must be >= 0"));
            }
            self.initial_state(&params)?;
            self.displacement()?;
            self.timeline(0.0)?;
        }
        if let Some(m) = &self.map {
            self.map_axes(m)?;
            for (i, l) in m.levels_m.iter().enumerate() {
                positive(&format!("map.levels_m[{i}]"), *l)?;
            }
            for (i, c) in m.cross.iter().enumerate() {
                positive(&format!("map.cross[{i}].sigma_disp_m"), c.sigma_disp_m)?;
                positive(&format!("map.cross[{i}].heating_rate_hz"), c.heating_rate_hz)?;
            }
            self.initial_state(&params)?;
        }
        if let Some(r) = &self.requirements {
            if !(r.target_heating_rate_hz >= 0.0) {
                return Err(config_error("requirements.target_heating_rate_hz", "must be >= 0"));
            }
            positive("requirements.tau_ex_s", r.tau_ex_s)?;
            if !(r.sigma_target_m >= 0.0) {
                return Err(config_error("requirements.sigma_target_m", "must be >= 0"));
            }
        }
        if let Some(r) = &self.retrodict {
            if !(r.detector_noise_psd_m2_per_hz >= 0.0) {
                return Err(config_error("retrodict.detector_noise_psd_m2_per_hz", "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<PhysicalParams> {
        let p = &self.physical;
        let mut params = at(
            "physical",
            PhysicalParams::new(
                positive("physical.mass_kg", p.mass_kg)?,
                TAU * positive("physical.trap_frequency_hz", p.trap_frequency_hz)?,
                TAU * positive("physical.inverted_frequency_hz", p.inverted_frequency_hz)?,
                TAU * p.heating_rate_hz,
            ),
        )?;
        if let Some(q) = p.charge_c {
            params = at("physical.charge_c", params.with_charge(q))?;
        }
        if let Some(d) = p.electrode_distance_m {
            params = at("physical.electrode_distance_m", params.with_electrode_distance(d))?;
        }
        params = at("physical.hbar_js", params.with_hbar(p.hbar_js.unwrap_or(HBAR)))?;
        Ok(params)
    }

    pub fn initial_state(&self, params: &PhysicalParams) -> Result<InitialState> {
        let i = self
            .initial
            .as_ref()
            .ok_or_else(|| config_error("initial", "section is required"))?;
        let s = InitialState {
            sigma_0: i.sigma_0_m,
            correlation_model: i.correlation_model,
        };
        at("initial.sigma_0_m", s.validate(params))?;
        Ok(s)
    }

    pub fn displacement(&self) -> Result<Displacement> {
        let d = self
            .displacement
            .as_ref()
            .ok_or_else(|| config_error("displacement", "section is required"))?;
        let nonneg = |path: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(config_error(path, format!("must be finite and >= 0, got {v}")))
            }
        };
        match (d.sigma_disp_m, d.sigma_sf_n, d.sigma_zeta_m) {
            (Some(s), None, None) => Ok(Displacement::Direct {
                sigma_disp: nonneg("displacement.sigma_disp_m", s)?,
            }),
            (None, Some(sf), Some(z)) => Ok(Displacement::Budget(NoiseBudget {
                sigma_sf: nonneg("displacement.sigma_sf_n", sf)?,
                sigma_zeta: nonneg("displacement.sigma_zeta_m", z)?,
            })),
            _ => Err(config_error(
                "displacement",
                "give either sigma_disp_m or both sigma_sf_n and sigma_zeta_m",
            )),
        }
    }

    pub fn sigma_disp(&self, params: &PhysicalParams) -> Result<f64> {
        at("displacement", self.displacement()?.sigma_disp(params))
    }

    pub fn timeline(&self, tau: f64) -> Result<ProtocolTimeline> {
        let t = self
            .timeline
            .as_ref()
            .ok_or_else(|| config_error("timeline", "section is required"))?;
        let tl = ProtocolTimeline {
            t_fb_off: t.t_fb_off_s,
            tau,
            recapture_duration: t.recapture_duration_s,
            sample_rate: t.sample_rate_hz,
        };
        at("timeline", tl.validate(&self.params()?))?;
        Ok(tl)
    }

    pub fn predict_taus(&self, p: &PredictConfig) -> Result<Vec<f64>> {
        let params = self.params()?;
        let taus = match (&p.taus_s, p.tau_max_s) {
            (Some(t), None) => t.clone(),
            (None, Some(max)) => {
                if p.points < 2 {
                    return Err(config_error("predict.points", "need at least 2 points"));
                }
                let max = positive("predict.tau_max_s", max)?;
                (0..p.points)
                    .map(|i| max * i as f64 / (p.points - 1) as f64)
                    .collect()
            }
            _ => return Err(config_error("predict", "give either taus_s or tau_max_s")),
        };
        if taus.is_empty() {
            return Err(config_error("predict.taus_s", "must not be empty"));
        }
        for (i, &t) in taus.iter().enumerate() {
            at(&format!("predict.taus_s[{i}]"), crate::model::growth_exponent(&params, t))?;
        }
        Ok(taus)
    }

    /// `(sigma_disp, heating_rate)` axes in SI (m, rad/s).
    pub fn map_axes(&self, m: &MapConfig) -> Result<(Vec<f64>, Vec<f64>)> {
        let axis = |name: &str, a: &GridAxis, factor: f64| -> Result<Vec<f64>> {
            if a.points == 0 {
                return Err(config_error(&format!("map.{name}.points"), "must be at least 1"));
            }
            positive(&format!("map.{name}.min"), a.min)?;
            positive(&format!("map.{name}.max"), a.max)?;
            at(&format!("map.{name}"), crate::analysis::log_grid(a.min * factor, a.max * factor, a.points))
        };
        Ok((axis("sigma_disp_m", &m.sigma_disp_m, 1.0)?, axis("heating_rate_hz", &m.heating_rate_hz, TAU)?))
    }
}
