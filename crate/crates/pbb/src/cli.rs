//! Command-line front end. The binary is a thin wrapper around
//! [`run`]; every subcommand is a library call plus file I/O.
//!
//! Exit codes: 0 ok, 2 config/input error, 3 numerical failure.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::maxwell_bloch::{self, SolveOptions};
use crate::qjmc;
use crate::steady;
use crate::telegraph::{self, ThresholdSpec};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "PBB_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "pbb",
    version,
    about = "Driven cavity-transmon bistability: trajectories, semiclassical phase maps, telegraph analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads (default: PBB_WORKERS or all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the configured RNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a quantum-jump trajectory ensemble and write per-trajectory CSV,
    /// a concatenated photon series, jump logs and a manifest.
    Simulate(ConfigArgs),
    /// Dense-Liouvillian steady state: writes observables as JSON.
    Steady(ConfigArgs),
    /// Semiclassical bistability branches versus drive strength.
    MbCurve(ConfigArgs),
    /// Semiclassical phase map on the Δ-η grid of the config.
    PhaseDiagram(ConfigArgs),
    /// Dwell-time statistics of series files or run directories; adds the
    /// half-filling crossing when drive strengths are known.
    Analyze {
        /// Series CSV files or run directories with manifest.json.
        paths: Vec<PathBuf>,
        /// TOML config providing the threshold settings (optional).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Drive strengths in Hz matched to the inputs by position
        /// (overrides manifest metadata).
        #[arg(long, value_delimiter = ',')]
        etas: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Power-law fits of half-filling observables versus g/κ.
    Scaling {
        /// CSV with a g_over_kappa column plus value columns.
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a transmission scan and calibrate the drive line.
    Calibrate {
        /// CSV with freq_hz and s21_mag columns.
        input: PathBuf,
        /// Fixed-port coupling in Hz.
        #[arg(long)]
        kappa_fixed_hz: f64,
        /// Internal loss in Hz.
        #[arg(long, default_value_t = 0.0)]
        kappa_int_hz: f64,
        /// Input power in W; when given, n̄_cav and η are reported.
        #[arg(long)]
        p_in_watts: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Err(e) = init_workers(cli.workers) {
        eprintln!("error: {e}");
        return 2;
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_workers(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(v.parse::<usize>().map_err(|_| {
                Error::InvalidInput(format!("{WORKERS_ENV} must be a positive integer, got {v}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::InvalidInput("worker count must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Steady(args) => cmd_steady(&args),
        Command::MbCurve(args) => cmd_mb_curve(&args),
        Command::PhaseDiagram(args) => cmd_phase_diagram(&args),
        Command::Analyze {
            paths,
            config,
            etas,
            out,
        } => cmd_analyze(&paths, config.as_deref(), etas.as_deref(), out.as_deref()),
        Command::Scaling { input, out } => cmd_scaling(&input, out.as_deref()),
        Command::Calibrate {
            input,
            kappa_fixed_hz,
            kappa_int_hz,
            p_in_watts,
            out,
        } => cmd_calibrate(&input, kappa_fixed_hz, kappa_int_hz, p_in_watts, out.as_deref()),
    }
}

fn load_config(args: &ConfigArgs) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.trajectory.seed = seed;
    }
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    std::fs::create_dir_all(&out_dir)?;
    Ok((cfg, out_dir))
}

fn config_hash(cfg: &RunConfig) -> Result<String> {
    Ok(io::sha256_hex(cfg.to_toml_string()?.as_bytes()))
}

pub fn cmd_simulate(args: &ConfigArgs) -> Result<()> {
    let started = Instant::now();
    let (cfg, out_dir) = load_config(args)?;
    let params = cfg.system_params();
    params.validate()?;
    let dims = cfg.dims()?;
    let tc = cfg.trajectory_config();
    tc.validate()?;
    let n_traj = cfg.trajectory.n_trajectories;
    let seed_base = cfg.trajectory.seed;

    let records = qjmc::run_ensemble(&params, dims, &tc, n_traj, seed_base)?;

    let mut outputs = Vec::new();
    let mut warnings = Vec::new();
    for (k, rec) in records.iter().enumerate() {
        let traj_name = format!("traj_{k:03}.csv");
        let jumps_name = format!("jumps_{k:03}.csv");
        io::write_trajectory_csv(&out_dir.join(&traj_name), rec)?;
        io::write_jumps_csv(&out_dir.join(&jumps_name), rec)?;
        outputs.push(traj_name);
        outputs.push(jumps_name);
        if rec.truncation_flag {
            warnings.push(format!(
                "trajectory {k}: top Fock level exceeded 1e-6 population (n_fock = {})",
                dims.n_fock()
            ));
        }
    }
    let series = qjmc::concatenate(&records, cfg.discard_initial())?;
    io::write_series_csv(&out_dir.join("series.csv"), &series)?;
    outputs.push("series.csv".into());

    let manifest = io::RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config_hash(&cfg)?,
        seed_base,
        seeds: (0..n_traj as u64).map(|k| qjmc::derive_seed(seed_base, k)).collect(),
        g_over_kappa: cfg.g_over_kappa(),
        nu_eta: cfg.system.nu_eta,
        n_fock: dims.n_fock(),
        wall_time_s: started.elapsed().as_secs_f64(),
        truncation_warnings: warnings,
        outputs: io::RunManifest::digest_outputs(&out_dir, &outputs)?,
    };
    manifest.write(&io::manifest_path(&out_dir))?;
    println!(
        "simulate: {n_traj} trajectories, dim {} ({} levels x {} Fock), {} -> {}",
        dims.total(),
        dims.n_levels(),
        dims.n_fock(),
        format_args!("t_final {:.3e} s", tc.t_final),
        out_dir.display()
    );
    Ok(())
}

pub fn cmd_steady(args: &ConfigArgs) -> Result<()> {
    let (cfg, out_dir) = load_config(args)?;
    let params = cfg.system_params();
    let dims = cfg.dims()?;
    let rho = steady::steady_state_dense(&params, dims)?;
    let alpha = rho.field_amplitude();
    let report = serde_json::json!({
        "n_photon": rho.photon_number(),
        "re_alpha": alpha.re,
        "im_alpha": alpha.im,
        "populations": (0..dims.n_levels()).map(|u| rho.level_population(u)).collect::<Vec<_>>(),
        "n_fock": dims.n_fock(),
        "trace": rho.trace().re,
    });
    let path = out_dir.join("steady.json");
    std::fs::write(&path, format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    println!("steady: <a†a> = {:.6e} -> {}", rho.photon_number(), path.display());
    Ok(())
}

pub fn cmd_mb_curve(args: &ConfigArgs) -> Result<()> {
    let (cfg, out_dir) = load_config(args)?;
    let base = cfg.mb_params();
    let etas = cfg.eta_grid();
    let n_scan = cfg.mb.n_scan;

    let path = out_dir.join("mb_curve.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["nu_eta_hz", "intensity", "stability", "residual", "limit_cycle"])?;
    for eta in etas {
        let mut p = base.clone();
        p.eta = eta;
        let i_max = 4.0 * (eta / p.kappa_field).powi(2) + 10.0;
        let branches = maxwell_bloch::solve_branches_with(&p, i_max, n_scan, &SolveOptions::default())?;
        for b in branches {
            w.write_record([
                (eta / (2.0 * std::f64::consts::PI)).to_string(),
                b.intensity.to_string(),
                b.stability.label().to_string(),
                b.residual.to_string(),
                b.limit_cycle.to_string(),
            ])?;
        }
    }
    w.flush()?;
    println!("mb-curve -> {}", path.display());
    Ok(())
}

pub fn cmd_phase_diagram(args: &ConfigArgs) -> Result<()> {
    let (cfg, out_dir) = load_config(args)?;
    let params = cfg.mb_params();
    let map = maxwell_bloch::phase_diagram(
        &cfg.delta_grid(),
        &cfg.eta_grid(),
        &params,
        &cfg.phase_options(),
    )?;
    let path = out_dir.join("phase_diagram.csv");
    io::write_phase_diagram_csv(&path, &map)?;
    println!(
        "phase-diagram: {} x {} grid -> {}",
        map.deltas.len(),
        map.etas.len(),
        path.display()
    );
    Ok(())
}

/// Resolve one analyze input to (label, series path, η in Hz if known).
fn resolve_analysis_input(path: &Path) -> Result<(String, PathBuf, Option<f64>)> {
    let label = path.display().to_string();
    if path.is_dir() {
        let manifest = io::RunManifest::load(&io::manifest_path(path))?;
        Ok((label, path.join("series.csv"), Some(manifest.nu_eta)))
    } else {
        Ok((label, path.to_path_buf(), None))
    }
}

pub fn cmd_analyze(
    paths: &[PathBuf],
    config: Option<&Path>,
    etas: Option<&[f64]>,
    out: Option<&Path>,
) -> Result<()> {
    if paths.is_empty() {
        return Err(Error::InvalidInput("analyze: no input files".into()));
    }
    let (spec, n_sections) = match config {
        Some(p) => {
            let cfg = RunConfig::load(p)?;
            (cfg.threshold_spec(), cfg.analysis.n_sections)
        }
        None => (ThresholdSpec::default(), 5),
    };
    if let Some(e) = etas {
        if e.len() != paths.len() {
            return Err(Error::InvalidInput(format!(
                "analyze: {} etas for {} inputs",
                e.len(),
                paths.len()
            )));
        }
    }

    let mut rows = Vec::new();
    let mut sweep: Vec<(f64, telegraph::DwellStatistics)> = Vec::new();
    for (i, path) in paths.iter().enumerate() {
        let (label, series_path, manifest_eta) = resolve_analysis_input(path)?;
        let series = io::read_series_csv(&series_path)?;
        let intervals = telegraph::detect_switches(&series, &spec)?;
        let stats = telegraph::dwell_statistics(&intervals, n_sections)?;
        let nu_eta = etas.map(|e| e[i]).or(manifest_eta);
        if let Some(eta) = nu_eta {
            sweep.push((eta, stats.clone()));
        }
        rows.push(io::DwellReportRow::new(label, nu_eta, &stats));
    }

    let out_dir = out.unwrap_or(Path::new(".")).to_path_buf();
    std::fs::create_dir_all(&out_dir)?;
    let report_path = out_dir.join("dwell_report.csv");
    io::write_dwell_report_csv(&report_path, &rows)?;
    for r in &rows {
        println!(
            "{}: t_dim = {}, t_bright = {}, switches = {}, filling = {:.4}",
            r.source,
            r.t_dim_s.map(|v| format!("{v:.6e} s")).unwrap_or_else(|| "n/a".into()),
            r.t_bright_s.map(|v| format!("{v:.6e} s")).unwrap_or_else(|| "n/a".into()),
            r.n_switches,
            r.filling
        );
    }

    if sweep.len() >= 2 {
        let hf = telegraph::half_filling(&sweep)?;
        if !hf.monotonic {
            eprintln!("warning: dwell times are not monotonic across the sweep");
        }
        let hf_path = out_dir.join("half_filling.json");
        let report = serde_json::json!({
            "nu_eta_star_hz": hf.eta_star,
            "t_star_s": hf.t_star,
            "monotonic": hf.monotonic,
        });
        std::fs::write(&hf_path, format!("{}\n", serde_json::to_string_pretty(&report)?))?;
        println!(
            "half-filling: eta* = {:.6e} Hz, t* = {:.6e} s -> {}",
            hf.eta_star,
            hf.t_star,
            hf_path.display()
        );
    }
    println!("analyze -> {}", report_path.display());
    Ok(())
}

pub fn cmd_scaling(input: &Path, out: Option<&Path>) -> Result<()> {
    let (xs, cols) = io::read_scaling_csv(input)?;
    if xs.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "scaling: need at least 3 rows, got {}",
            xs.len()
        )));
    }
    let mut fits = Vec::new();
    for (name, ys) in cols {
        let fit = telegraph::fit_power_law(&xs, &ys, None)?;
        println!(
            "{name}: exponent {:.6} ± {}, prefactor {:.6e}",
            fit.exponent,
            fit.exponent_stderr
                .map(|s| format!("{s:.6}"))
                .unwrap_or_else(|| "n/a".into()),
            fit.prefactor
        );
        fits.push((name, fit));
    }
    let out_dir = out.unwrap_or(Path::new(".")).to_path_buf();
    std::fs::create_dir_all(&out_dir)?;
    let path = out_dir.join("scaling_report.csv");
    io::write_scaling_report_csv(&path, &fits)?;
    println!("scaling -> {}", path.display());
    Ok(())
}

pub fn cmd_calibrate(
    input: &Path,
    kappa_fixed_hz: f64,
    kappa_int_hz: f64,
    p_in_watts: Option<f64>,
    out: Option<&Path>,
) -> Result<()> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = csv::Reader::from_path(input)?;
    let headers = r.headers()?.clone();
    let f_col = headers
        .iter()
        .position(|h| h == "freq_hz")
        .ok_or_else(|| Error::InvalidInput(format!("{}: no freq_hz column", input.display())))?;
    let m_col = headers
        .iter()
        .position(|h| h == "s21_mag")
        .ok_or_else(|| Error::InvalidInput(format!("{}: no s21_mag column", input.display())))?;
    let mut freqs = Vec::new();
    let mut mags = Vec::new();
    for (idx, record) in r.records().enumerate() {
        let record = record?;
        let line = idx + 2;
        let get = |col: usize| -> Result<f64> {
            record
                .get(col)
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::InvalidInput(format!("{}:{line}: bad value", input.display()))
                })
        };
        freqs.push(two_pi * get(f_col)?);
        mags.push(get(m_col)?);
    }

    let fit = crate::calibrate::fit_s21(&freqs, &mags, two_pi * kappa_fixed_hz, two_pi * kappa_int_hz)?;
    let mut report = serde_json::json!({
        "nu_r_hz": fit.omega_r / two_pi,
        "nu_kappa_vary_hz": fit.kappa_vary / two_pi,
        "nu_kappa_total_hz": fit.kappa_total / two_pi,
        "residual_norm": fit.residual_norm,
    });
    if let Some(p_in) = p_in_watts {
        let cal = crate::calibrate::drive_calibration(
            p_in,
            fit.omega_r,
            two_pi * kappa_fixed_hz,
            fit.kappa_total,
        )?;
        report["n_cav"] = serde_json::json!(cal.n_cav);
        report["nu_eta_hz"] = serde_json::json!(cal.eta / two_pi);
    }
    let out_dir = out.unwrap_or(Path::new(".")).to_path_buf();
    std::fs::create_dir_all(&out_dir)?;
    let path = out_dir.join("calibration.json");
    std::fs::write(&path, format!("{}\n", serde_json::to_string_pretty(&report)?))?;
    println!(
        "calibrate: nu_r = {:.6e} Hz, kappa = {:.6e} Hz -> {}",
        fit.omega_r / two_pi,
        fit.kappa_total / two_pi,
        path.display()
    );
    Ok(())
}

/// Helper for tests and examples: run a subcommand from argv-style strings.
pub fn run_from_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            eprint!("{e}");
            2
        }
    }
}
