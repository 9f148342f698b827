//! Subcommands of the `expansion` binary.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::analysis::{
    compute_stats, fit_expansion, fit_noise_budget, ximax_map, BudgetPoint, CurveKind, CurvePoint,
    EnsembleStats, ExpansionCurve, FitResult, StatsOptions,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{read_table, write_csv, write_json, Cell};
use crate::model::{
    coherence_length, ensemble_state, required_force_noise, required_position_noise,
    required_voltage_noise, xi_max, xi_of_tau, Cov2, GaussianState, PhasePoint, PhysicalParams,
};
use crate::montecarlo::{run_ensemble_with, EnsembleOptions, Phase1Cooling, ShotConfig, ShotRecord};
use crate::retrodiction::{estimate_many, estimate_recapture_state, kalman_forward, ljung_box, OscillatorModel, Prior};

#[derive(Debug, Parser)]
#[command(name = "expansion", version, about = "Expansion of levitated-particle states in inverted potentials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration, TOML or JSON.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory; overrides the configured one (default `out`).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; all outputs are independent of this value.
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form σ_z(τ) and ξ(τ), with and without displacement noise.
    Predict(Common),
    /// Monte Carlo ensembles over the configured τ list.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the recapture traces.
        #[arg(long)]
        with_traces: bool,
        /// Estimate every recapture state from its trace.
        #[arg(long)]
        retrodict: bool,
    },
    /// Fits σ_0 and σ_disp to a measured σ_z(τ) curve.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Curve CSV; overrides `fit.curve_csv`.
        input: Option<PathBuf>,
    },
    /// Fits σ_sf and σ_ζ to σ_disp(Ω_inv) points.
    Budget {
        #[command(flatten)]
        common: Common,
        /// Points CSV; overrides `budget.points_csv`.
        input: Option<PathBuf>,
    },
    /// ξ_max over a (σ_disp, Γ) grid with contour lines.
    Map(Common),
    /// Noise levels needed for a target heating rate and expansion.
    Requirements(Common),
    /// Estimates the recapture state from a measured trace.
    Retrodict {
        #[command(flatten)]
        common: Common,
        /// Trace CSV; overrides `retrodict.trace_csv`.
        input: Option<PathBuf>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Predict(c) | Command::Map(c) | Command::Requirements(c) => c,
            Command::Simulate { common, .. }
            | Command::Fit { common, .. }
            | Command::Budget { common, .. }
            | Command::Retrodict { common, .. } => common,
        }
    }
}

/// Loads the configuration, applies command-line overrides and runs the command.
/// Returns the files written.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let common = cli.command.common();
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    // The output location is not part of the provenance record.
    cfg.out = None;
    std::fs::create_dir_all(&out)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Predict(_) => cmd_predict(&cfg, &out),
        Command::Simulate {
            with_traces,
            retrodict,
            ..
        } => cmd_simulate(&cfg, &out, *with_traces, *retrodict),
        Command::Fit { input, .. } => {
            let path = input_path(input, cfg.fit.as_ref().map(|f| &f.curve_csv), "fit.curve_csv")?;
            cmd_fit(&cfg, &path, &out)
        }
        Command::Budget { input, .. } => {
            let path = input_path(input, cfg.budget.as_ref().map(|b| &b.points_csv), "budget.points_csv")?;
            cmd_budget(&cfg, &path, &out)
        }
        Command::Map(_) => cmd_map(&cfg, &out),
        Command::Requirements(_) => cmd_requirements(&cfg, &out),
        Command::Retrodict { input, .. } => {
            let path = input_path(input, cfg.retrodict.as_ref().map(|r| &r.trace_csv), "retrodict.trace_csv")?;
            cmd_retrodict(&cfg, &path, &out)
        }
    })
}

fn input_path(arg: &Option<PathBuf>, configured: Option<&PathBuf>, key: &str) -> Result<PathBuf> {
    arg.clone()
        .or_else(|| configured.cloned())
        .ok_or_else(|| Error::Config(format!("{key}: no input file given")))
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref()
        .ok_or_else(|| Error::Config(format!("{name}: section is required for this command")))
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'static str,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<&'a Path>,
    result: T,
}

fn manifest<T: Serialize>(out: &Path, command: &'static str, config: &RunConfig, input: Option<&Path>, result: T) -> Result<PathBuf> {
    let path = out.join(format!("{command}.json"));
    write_json(&path, &Manifest { command, config, input, result })?;
    Ok(path)
}

pub fn cmd_predict(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let params = cfg.params()?;
    let init = cfg.initial_state(&params)?;
    let sigma_disp = cfg.sigma_disp(&params)?;
    let taus = cfg.predict_taus(section(&cfg.predict, "predict")?)?;

    let sigma0_sq = ensemble_state(&params, &init, sigma_disp, 0.0)?.var_z();
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in &taus {
        let full = ensemble_state(&params, &init, sigma_disp, tau)?;
        let wn = ensemble_state(&params, &init, 0.0, tau)?;
        rows.push(vec![
            Cell::F(tau),
            Cell::F(full.sigma_z()),
            Cell::F(wn.sigma_z()),
            Cell::F(coherence_length(&full, params.hbar)?),
            Cell::F(coherence_length(&wn, params.hbar)?),
            Cell::F(10.0 * (full.var_z() / sigma0_sq).log10()),
        ]);
    }
    let csv = out.join("predict.csv");
    write_csv(
        &csv,
        &["tau_s", "sigma_z_m", "sigma_z_wnonly_m", "xi_m", "xi_wnonly_m", "gain_db"],
        rows,
    )?;
    let best = match xi_max(&params, &init, sigma_disp) {
        Ok(b) => Some(b),
        Err(Error::Unbounded) => None,
        Err(e) => return Err(e),
    };
    let json = manifest(
        out,
        "predict",
        cfg,
        None,
        json!({ "sigma_disp_m": sigma_disp, "xi_max": best }),
    )?;
    Ok(vec![csv, json])
}

const STATS_HEADER: [&str; 21] = [
    "tau_s",
    "n_shots",
    "mean_z_m",
    "mean_z_err_m",
    "mean_p_kg_m_per_s",
    "mean_p_err_kg_m_per_s",
    "sigma_z_m",
    "sigma_z_err_m",
    "sigma_p_kg_m_per_s",
    "sigma_p_err_kg_m_per_s",
    "cov_zp_kg_m2_per_s",
    "cov_zp_err_kg_m2_per_s",
    "purity",
    "purity_err",
    "xi_m",
    "xi_err_m",
    "unphysical",
    "degenerate",
    "model_sigma_z_m",
    "model_sigma_p_kg_m_per_s",
    "model_xi_m",
];

fn stats_row(tau: f64, s: &EnsembleStats, model: &GaussianState, hbar: f64) -> Result<Vec<Cell>> {
    let e = s.errors;
    Ok(vec![
        Cell::F(tau),
        Cell::I(s.n_shots as u64),
        Cell::F(s.mean_z),
        e.map(|e| e.mean_z).into(),
        Cell::F(s.mean_p),
        e.map(|e| e.mean_p).into(),
        Cell::F(s.sigma_z),
        e.map(|e| e.sigma_z).into(),
        Cell::F(s.sigma_p),
        e.map(|e| e.sigma_p).into(),
        Cell::F(s.cov_zp),
        e.map(|e| e.cov_zp).into(),
        s.purity.into(),
        e.and_then(|e| e.purity).into(),
        s.xi.into(),
        e.and_then(|e| e.xi).into(),
        Cell::B(s.unphysical),
        Cell::B(s.degenerate),
        Cell::F(model.sigma_z()),
        Cell::F(model.sigma_p()),
        Cell::F(coherence_length(model, hbar)?),
    ])
}

#[derive(Serialize)]
struct ShotEstimate {
    shot_index: u64,
    z_m: f64,
    p_kg_m_per_s: f64,
    var_z_m2: f64,
    cov_zp_kg_m2_per_s: f64,
    var_p_kg2_m2_per_s2: f64,
    true_z_m: f64,
    true_p_kg_m_per_s: f64,
}

#[derive(Serialize)]
struct TauEstimates {
    tau_s: f64,
    seed: u64,
    shots: Vec<ShotEstimate>,
}

#[derive(Serialize)]
struct TauSummary {
    tau_s: f64,
    seed: u64,
    stats: EnsembleStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    retrodicted: Option<EnsembleStats>,
}

/// Builds the shot configuration for one expansion time. The `k`-th τ uses seed `seed + k`
/// so that different τ are independent ensembles.
pub fn shot_config(cfg: &RunConfig, tau_index: usize) -> Result<ShotConfig> {
    let sim = section(&cfg.simulate, "simulate")?;
    let params = cfg.params()?;
    let tau = sim.taus_s[tau_index];
    let mut c = ShotConfig::new(
        params,
        cfg.initial_state(&params)?,
        cfg.displacement()?,
        cfg.timeline(tau)?,
        cfg.seed.wrapping_add(tau_index as u64),
    );
    c.detector_noise_psd = sim.detector_noise_psd_m2_per_hz;
    c.expansion_steps = sim.expansion_steps;
    if let Some(g) = sim.feedback_damping_per_s {
        c.feedback_damping = g;
    }
    c.phase1 = sim.phase1_duration_s.map(|duration| Phase1Cooling { duration });
    c.validate()
        .map_err(|e| Error::Config(format!("simulate (tau index {tau_index}): {e}")))?;
    Ok(c)
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path, with_traces: bool, retrodict: bool) -> Result<Vec<PathBuf>> {
    let sim = section(&cfg.simulate, "simulate")?;
    let params = cfg.params()?;
    let init = cfg.initial_state(&params)?;
    let sigma_disp = cfg.sigma_disp(&params)?;

    let mut stats_rows = Vec::new();
    let mut retro_rows = Vec::new();
    let mut shot_rows = Vec::new();
    let mut trace_rows = Vec::new();
    let mut summaries = Vec::new();
    let mut estimates = Vec::new();

    for (k, &tau) in sim.taus_s.iter().enumerate() {
        let c = shot_config(cfg, k)?;
        let opts = EnsembleOptions {
            with_traces: with_traces || retrodict,
            stats: StatsOptions {
                bootstrap_resamples: sim.bootstrap_resamples,
                seed: c.seed,
                estimator_covariance: None,
            },
        };
        let (stats, records) = run_ensemble_with(&c, sim.shots, &opts)?;
        let model_state = ensemble_state(&params, &init, sigma_disp, tau)?;
        stats_rows.push(stats_row(tau, &stats, &model_state, params.hbar)?);

        for r in &records {
            shot_rows.push(vec![
                Cell::F(tau),
                Cell::I(r.shot_index),
                Cell::F(r.displacement),
                Cell::F(r.initial.z),
                Cell::F(r.initial.p),
                Cell::F(r.final_state.z),
                Cell::F(r.final_state.p),
            ]);
        }
        if with_traces {
            let dt = 1.0 / c.timeline.sample_rate;
            for r in &records {
                for (i, x) in r.trace.as_deref().unwrap_or_default().iter().enumerate() {
                    trace_rows.push(vec![
                        Cell::F(tau),
                        Cell::I(r.shot_index),
                        Cell::F(i as f64 * dt),
                        Cell::F(*x),
                    ]);
                }
            }
        }

        let mut retrodicted = None;
        if retrodict {
            let (est_stats, shots) = retrodict_ensemble(&c, &records, sim.bootstrap_resamples)?;
            retro_rows.push(stats_row(tau, &est_stats, &model_state, params.hbar)?);
            retrodicted = Some(est_stats);
            estimates.push(TauEstimates { tau_s: tau, seed: c.seed, shots });
        }
        summaries.push(TauSummary {
            tau_s: tau,
            seed: c.seed,
            stats,
            retrodicted,
        });
    }

    let mut written = Vec::new();
    let path = out.join("stats.csv");
    write_csv(&path, &STATS_HEADER, stats_rows)?;
    written.push(path);
    let path = out.join("shots.csv");
    write_csv(
        &path,
        &["tau_s", "shot_index", "displacement_m", "z0_m", "p0_kg_m_per_s", "z_m", "p_kg_m_per_s"],
        shot_rows,
    )?;
    written.push(path);
    if with_traces {
        let path = out.join("traces.csv");
        write_csv(&path, &["tau_s", "shot_index", "time_s", "position_m"], trace_rows)?;
        written.push(path);
    }
    if retrodict {
        let path = out.join("stats_retrodicted.csv");
        write_csv(&path, &STATS_HEADER, retro_rows)?;
        written.push(path);
        let path = out.join("estimates.json");
        write_json(&path, &json!({ "config": cfg, "taus": estimates }))?;
        written.push(path);
    }
    written.push(manifest(out, "simulate", cfg, None, summaries)?);
    Ok(written)
}

/// Smoothed recapture estimates for every shot, and ensemble statistics of the estimates
/// with the mean estimator covariance removed.
fn retrodict_ensemble(c: &ShotConfig, records: &[ShotRecord], resamples: usize) -> Result<(EnsembleStats, Vec<ShotEstimate>)> {
    let model = OscillatorModel::from_params(&c.params, c.detector_noise_psd, c.timeline.sample_rate)?;
    let traces: Vec<Vec<f64>> = records
        .iter()
        .map(|r| r.trace.clone().unwrap_or_default())
        .collect();
    let est = estimate_many(&traces, &model, &Prior::Diffuse)?;
    let n = est.len() as f64;
    let mut mean_cov = Cov2::new(0.0, 0.0, 0.0);
    for e in &est {
        let s = e.covariance();
        mean_cov = Cov2::new(mean_cov.zz + s.zz / n, mean_cov.zp + s.zp / n, mean_cov.pp + s.pp / n);
    }
    let points: Vec<PhasePoint> = est.iter().map(|e| e.mean()).collect();
    let stats = compute_stats(
        &points,
        c.params.hbar,
        &StatsOptions {
            bootstrap_resamples: resamples,
            seed: c.seed,
            estimator_covariance: Some(mean_cov),
        },
    )?;
    let shots = est
        .iter()
        .zip(records)
        .map(|(e, r)| ShotEstimate {
            shot_index: r.shot_index,
            z_m: e.mean_z(),
            p_kg_m_per_s: e.mean_p(),
            var_z_m2: e.var_z(),
            cov_zp_kg_m2_per_s: e.cov_zp(),
            var_p_kg2_m2_per_s2: e.var_p(),
            true_z_m: r.final_state.z,
            true_p_kg_m_per_s: r.final_state.p,
        })
        .collect();
    Ok((stats, shots))
}

fn print_fit(fit: &FitResult, units: &[&str]) {
    for ((name, (v, e)), unit) in fit.names.iter().zip(fit.parameters.iter().zip(&fit.errors)).zip(units) {
        println!("{name} = {v:.4e} ± {e:.2e} {unit}");
    }
    println!("chi2 = {:.4} for {} degrees of freedom", fit.chi2, fit.dof);
}

pub fn read_curve(path: &Path) -> Result<ExpansionCurve> {
    let t = read_table(path)?;
    let kind = if t.column("sigma_z_m").is_some() {
        CurveKind::SigmaZ
    } else if t.column("xi_m").is_some() {
        CurveKind::Xi
    } else {
        return Err(Error::InvalidData(format!("{}: need a `sigma_z_m` column", path.display())));
    };
    let value = t.require(if kind == CurveKind::SigmaZ { "sigma_z_m" } else { "xi_m" }, path)?;
    let tau = t.require("tau_s", path)?;
    let err = t.require("err_m", path)?;
    let points = tau
        .iter()
        .zip(&value)
        .zip(&err)
        .map(|((&tau, &value), &err)| CurvePoint { tau, value, err })
        .collect();
    ExpansionCurve::new(kind, points)
}

pub fn cmd_fit(cfg: &RunConfig, input: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let params = cfg.params()?;
    let curve = read_curve(input)?;
    let fit = fit_expansion(&curve, &params)?;
    print_fit(&fit, &["m", "m"]);
    Ok(vec![manifest(out, "fit", cfg, Some(input), &fit)?])
}

pub fn read_budget_points(path: &Path) -> Result<Vec<BudgetPoint>> {
    let t = read_table(path)?;
    let f = t.require("inverted_frequency_hz", path)?;
    let s = t.require("sigma_disp_m", path)?;
    let e = t.require("err_m", path)?;
    Ok(f.iter()
        .zip(&s)
        .zip(&e)
        .map(|((&f, &sigma_disp), &err)| BudgetPoint {
            omega_inv: TAU * f,
            sigma_disp,
            err,
        })
        .collect())
}

pub fn cmd_budget(cfg: &RunConfig, input: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let params = cfg.params()?;
    let points = read_budget_points(input)?;
    let fit = fit_noise_budget(&points, params.mass)?;
    print_fit(&fit, &["N", "m"]);
    Ok(vec![manifest(out, "budget", cfg, Some(input), &fit)?])
}

pub fn cmd_map(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let m = section(&cfg.map, "map")?;
    let params = cfg.params()?;
    let init = cfg.initial_state(&params)?;
    let (sd, gamma) = cfg.map_axes(m)?;
    let map = ximax_map(&sd, &gamma, &params, &init)?;

    let grid = out.join("map.csv");
    let rows = map.heating_rate.iter().zip(&map.cells).flat_map(|(g, row)| {
        map.sigma_disp.iter().zip(row).map(move |(s, c)| {
            vec![Cell::F(g / TAU), Cell::F(*s), Cell::F(c.xi_max), Cell::F(c.tau_star)]
        })
    });
    write_csv(&grid, &["heating_rate_hz", "sigma_disp_m", "xi_max_m", "tau_star_s"], rows)?;

    let contours = map.contours(&m.levels_m);
    let path = out.join("contours.csv");
    let rows = contours.iter().flat_map(|c| {
        c.lines.iter().enumerate().flat_map(move |(l, line)| {
            line.iter().enumerate().map(move |(v, &(s, g))| {
                vec![Cell::F(c.level), Cell::I(l as u64), Cell::I(v as u64), Cell::F(s), Cell::F(g / TAU)]
            })
        })
    });
    write_csv(&path, &["level_m", "line", "vertex", "sigma_disp_m", "heating_rate_hz"], rows)?;

    let cross = m
        .cross
        .iter()
        .map(|c| {
            let p = params.with_heating_rate(TAU * c.heating_rate_hz)?;
            let best = xi_max(&p, &init, c.sigma_disp_m)?;
            Ok(json!({
                "sigma_disp_m": c.sigma_disp_m,
                "heating_rate_hz": c.heating_rate_hz,
                "xi_max_m": best.xi_max,
                "tau_star_s": best.tau_star,
                "xi_0_m": xi_of_tau(&p, &init, c.sigma_disp_m, 0.0)?,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let lines: Vec<_> = contours
        .iter()
        .map(|c| json!({ "level_m": c.level, "lines": c.lines.len() }))
        .collect();
    let json = manifest(out, "map", cfg, None, json!({ "cross": cross, "contours": lines }))?;
    Ok(vec![grid, path, json])
}

pub fn requirements(params: &PhysicalParams, target_gamma: f64, tau_ex: f64, sigma_target: f64) -> Result<serde_json::Value> {
    let s_v = required_voltage_noise(params, target_gamma)?;
    Ok(json!({
        "s_v_v2_per_hz": s_v,
        "sqrt_s_v_v_per_sqrt_hz": s_v.sqrt(),
        "s_zeta_m2_per_hz": required_position_noise(tau_ex, sigma_target)?,
        "s_sf_n2_per_hz": required_force_noise(params, tau_ex, sigma_target)?,
    }))
}

pub fn cmd_requirements(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let r = section(&cfg.requirements, "requirements")?;
    let params = cfg.params()?;
    let result = requirements(&params, TAU * r.target_heating_rate_hz, r.tau_ex_s, r.sigma_target_m)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(vec![manifest(out, "requirements", cfg, None, result)?])
}

/// Sample rate of a uniformly sampled time column.
fn sample_rate(time: &[f64], path: &Path) -> Result<f64> {
    if time.len() < 2 {
        return Err(Error::InvalidData(format!("{}: need at least 2 samples", path.display())));
    }
    let dt = (time[time.len() - 1] - time[0]) / (time.len() - 1) as f64;
    let uniform = dt > 0.0
        && time
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt);
    if !uniform {
        return Err(Error::InvalidData(format!("{}: time_s must be uniformly increasing", path.display())));
    }
    Ok(1.0 / dt)
}

pub fn cmd_retrodict(cfg: &RunConfig, input: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let params = cfg.params()?;
    let psd = cfg
        .retrodict
        .as_ref()
        .map_or(crate::montecarlo::DEFAULT_DETECTOR_PSD, |r| r.detector_noise_psd_m2_per_hz);
    let t = read_table(input)?;
    let time = t.require("time_s", input)?;
    let trace = t.require("position_m", input)?;
    let fs = sample_rate(&time, input)?;
    let model = OscillatorModel::from_params(&params, psd, fs)?;
    let est = estimate_recapture_state(&trace, &model, &Prior::Diffuse)?;
    let prior = Prior::Diffuse.resolve(&trace, &model)?;
    let innovations = kalman_forward(&trace, &model, &prior)?.normalized_innovations();
    let lags = (innovations.len() / 5).min(20);
    let whiteness = if lags >= 1 {
        Some(json!({ "lags": lags, "ljung_box": ljung_box(&innovations, lags)? }))
    } else {
        None
    };
    let result = json!({
        "sample_rate_hz": fs,
        "samples": trace.len(),
        "z_m": est.mean_z(),
        "p_kg_m_per_s": est.mean_p(),
        "var_z_m2": est.var_z(),
        "cov_zp_kg_m2_per_s": est.cov_zp(),
        "var_p_kg2_m2_per_s2": est.var_p(),
        "innovation_whiteness": whiteness,
    });
    println!(
        "z = {:.4e} ± {:.2e} m, p = {:.4e} ± {:.2e} kg m/s",
        est.mean_z(),
        est.sigma_z(),
        est.mean_p(),
        est.sigma_p()
    );
    Ok(vec![manifest(out, "retrodict", cfg, Some(input), result)?])
}
