//! CSV schemas and the run manifest.
//!
//! All files are plain RFC-4180 CSV with '.' decimals. Floats are written
//! with Rust's shortest round-trip formatting, which is deterministic, so
//! reruns with the same configuration and seeds produce byte-identical
//! files.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::maxwell_bloch::{PhaseClass, PhaseDiagram};
use crate::qjmc::TrajectoryRecord;
use crate::telegraph::{DwellStatistics, ScalingFit, SeriesUnit, TimeSeries};

/// Trajectory CSV: time_s, n_photon, pop_0..pop_{L-1}, re_alpha, im_alpha.
pub fn write_trajectory_csv(path: &Path, rec: &TrajectoryRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let n_levels = rec.n_levels();
    let mut header = vec!["time_s".to_string(), "n_photon".to_string()];
    for u in 0..n_levels {
        header.push(format!("pop_{u}"));
    }
    header.push("re_alpha".into());
    header.push("im_alpha".into());
    w.write_record(&header)?;
    for i in 0..rec.times.len() {
        let mut row = vec![rec.times[i].to_string(), rec.n_photon[i].to_string()];
        for u in 0..n_levels {
            row.push(rec.populations[u][i].to_string());
        }
        row.push(rec.alpha[i].re.to_string());
        row.push(rec.alpha[i].im.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Jump log CSV: time_s, channel.
pub fn write_jumps_csv(path: &Path, rec: &TrajectoryRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time_s", "channel"])?;
    for (t, ch) in &rec.jumps {
        w.write_record([t.to_string(), ch.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Series CSV: time_s, value (header names the unit).
pub fn write_series_csv(path: &Path, series: &TimeSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time_s", series.unit().label()])?;
    for (i, v) in series.values().iter().enumerate() {
        let t = series.t0() + i as f64 * series.dt();
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a series CSV. Accepts the 2-column series schema and the trajectory
/// schema (the `n_photon` column is used). Non-finite values are rejected
/// with their line number.
pub fn read_series_csv(path: &Path) -> Result<TimeSeries> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let time_col = headers
        .iter()
        .position(|h| h == "time_s")
        .ok_or_else(|| Error::InvalidInput(format!("{}: no time_s column", path.display())))?;
    let (value_col, unit) = headers
        .iter()
        .position(|h| h == "n_photon" || h == "photons")
        .map(|c| (c, SeriesUnit::Photons))
        .or_else(|| {
            headers
                .iter()
                .position(|h| h == "watts")
                .map(|c| (c, SeriesUnit::Watts))
        })
        .or_else(|| {
            // otherwise take the first non-time column
            headers
                .iter()
                .position(|h| h != "time_s")
                .map(|c| (c, SeriesUnit::Arbitrary))
        })
        .ok_or_else(|| Error::InvalidInput(format!("{}: no value column", path.display())))?;

    let mut times = Vec::new();
    let mut values = Vec::new();
    for (row_idx, record) in r.records().enumerate() {
        let record = record?;
        let line = row_idx + 2; // header is line 1
        let parse = |col: usize| -> Result<f64> {
            let raw = record.get(col).ok_or_else(|| {
                Error::InvalidInput(format!("{}:{line}: missing column {col}", path.display()))
            })?;
            let v: f64 = raw.parse().map_err(|_| {
                Error::InvalidInput(format!(
                    "{}:{line}: cannot parse \"{raw}\" as a number",
                    path.display()
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{}:{line}: non-finite value \"{raw}\"",
                    path.display()
                )));
            }
            Ok(v)
        };
        times.push(parse(time_col)?);
        values.push(parse(value_col)?);
    }
    if times.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{}: need at least 2 samples",
            path.display()
        )));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!(
            "{}: non-increasing time axis",
            path.display()
        )));
    }
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
            return Err(Error::InvalidInput(format!(
                "{}:{}: non-uniform sampling ({} vs {})",
                path.display(),
                i + 3,
                w[1] - w[0],
                dt
            )));
        }
    }
    Ok(TimeSeries::new(times[0], dt, values, unit))
}

/// Phase-map CSV: header `delta_hz` then one column per η value (in Hz);
/// cells are D/B/X.
pub fn write_phase_diagram_csv(path: &Path, map: &PhaseDiagram) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["delta_hz".to_string()];
    for eta in &map.etas {
        header.push((eta / (2.0 * std::f64::consts::PI)).to_string());
    }
    w.write_record(&header)?;
    for (i, delta) in map.deltas.iter().enumerate() {
        let mut row = vec![(delta / (2.0 * std::f64::consts::PI)).to_string()];
        for j in 0..map.etas.len() {
            row.push(map.classes[i * map.etas.len() + j].code().to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_phase_diagram_csv`].
pub fn read_phase_diagram_csv(path: &Path) -> Result<PhaseDiagram> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let etas: Vec<f64> = headers
        .iter()
        .skip(1)
        .map(|h| {
            h.parse::<f64>()
                .map(|v| v * 2.0 * std::f64::consts::PI)
                .map_err(|_| {
                    Error::InvalidInput(format!("{}: bad η header \"{h}\"", path.display()))
                })
        })
        .collect::<Result<_>>()?;
    let mut deltas = Vec::new();
    let mut classes = Vec::new();
    for (row_idx, record) in r.records().enumerate() {
        let record = record?;
        let line = row_idx + 2;
        let delta: f64 = record
            .get(0)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| {
                Error::InvalidInput(format!("{}:{line}: bad Δ value", path.display()))
            })?;
        deltas.push(delta * 2.0 * std::f64::consts::PI);
        for j in 0..etas.len() {
            let cell = record.get(j + 1).unwrap_or("");
            let class = cell
                .chars()
                .next()
                .and_then(PhaseClass::from_code)
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "{}:{line}: bad phase code \"{cell}\"",
                        path.display()
                    ))
                })?;
            classes.push(class);
        }
    }
    Ok(PhaseDiagram {
        deltas,
        etas,
        classes,
    })
}

/// One row of a dwell-statistics report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DwellReportRow {
    pub source: String,
    /// Drive strength in Hz when known.
    pub nu_eta: Option<f64>,
    pub t_dim_s: Option<f64>,
    pub t_bright_s: Option<f64>,
    pub stderr_dim_s: Option<f64>,
    pub stderr_bright_s: Option<f64>,
    pub n_switches: usize,
    pub filling: f64,
}

impl DwellReportRow {
    pub fn new(source: String, nu_eta: Option<f64>, stats: &DwellStatistics) -> Self {
        DwellReportRow {
            source,
            nu_eta,
            t_dim_s: stats.t_dim,
            t_bright_s: stats.t_bright,
            stderr_dim_s: stats.stderr_dim,
            stderr_bright_s: stats.stderr_bright,
            n_switches: stats.n_switches,
            filling: stats.filling,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Dwell report CSV: one row per analyzed series; empty cells mean
/// "unavailable".
pub fn write_dwell_report_csv(path: &Path, rows: &[DwellReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "source",
        "nu_eta_hz",
        "t_dim_s",
        "t_bright_s",
        "stderr_dim_s",
        "stderr_bright_s",
        "n_switches",
        "filling",
    ])?;
    for r in rows {
        w.write_record([
            r.source.clone(),
            opt(r.nu_eta),
            opt(r.t_dim_s),
            opt(r.t_bright_s),
            opt(r.stderr_dim_s),
            opt(r.stderr_bright_s),
            r.n_switches.to_string(),
            r.filling.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Scaling input CSV: a `g_over_kappa` column plus any of `t_star`,
/// `n_star`, `eta_star_over_g` (extra columns are fitted too). Returns the
/// abscissa and the named ordinate columns.
pub fn read_scaling_csv(path: &Path) -> Result<(Vec<f64>, Vec<(String, Vec<f64>)>)> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let x_col = headers
        .iter()
        .position(|h| h == "g_over_kappa")
        .ok_or_else(|| {
            Error::InvalidInput(format!("{}: no g_over_kappa column", path.display()))
        })?;
    let value_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != x_col)
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    if value_cols.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no value columns to fit",
            path.display()
        )));
    }
    let mut xs = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); value_cols.len()];
    for (row_idx, record) in r.records().enumerate() {
        let record = record?;
        let line = row_idx + 2;
        let parse = |col: usize| -> Result<f64> {
            record
                .get(col)
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "{}:{line}: bad value in column {col}",
                        path.display()
                    ))
                })
        };
        xs.push(parse(x_col)?);
        for (k, (col, _)) in value_cols.iter().enumerate() {
            cols[k].push(parse(*col)?);
        }
    }
    Ok((
        xs,
        value_cols
            .into_iter()
            .map(|(_, name)| name)
            .zip(cols)
            .collect(),
    ))
}

/// Scaling report CSV: column, exponent, exponent_stderr, prefactor.
pub fn write_scaling_report_csv(path: &Path, fits: &[(String, ScalingFit)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["column", "exponent", "exponent_stderr", "prefactor"])?;
    for (name, fit) in fits {
        w.write_record([
            name.clone(),
            fit.exponent.to_string(),
            opt(fit.exponent_stderr),
            fit.prefactor.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// SHA-256 of a file, hex-encoded.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Digest of one output file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Manifest emitted next to every run's outputs. Reruns with the same
/// config hash and seeds reproduce the listed files byte-identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// SHA-256 over the canonical TOML serialization of the config.
    pub config_hash: String,
    pub seed_base: u64,
    pub seeds: Vec<u64>,
    pub g_over_kappa: f64,
    /// Drive strength in Hz (for sweep analysis).
    pub nu_eta: f64,
    pub n_fock: usize,
    pub wall_time_s: f64,
    pub truncation_warnings: Vec<String>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        let json = serde_json::to_string_pretty(self)?;
        f.write_all(json.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Check every listed output against its recorded digest.
    pub fn verify_outputs(&self, base_dir: &Path) -> Result<()> {
        for f in &self.outputs {
            let p = base_dir.join(&f.path);
            let got = sha256_file(&p)?;
            if got != f.sha256 {
                return Err(Error::InvalidInput(format!(
                    "{}: digest mismatch (recorded {}, found {got})",
                    p.display(),
                    f.sha256
                )));
            }
        }
        Ok(())
    }

    pub fn digest_outputs(base_dir: &Path, names: &[String]) -> Result<Vec<FileDigest>> {
        names
            .iter()
            .map(|name| {
                let p = base_dir.join(name);
                Ok(FileDigest {
                    path: name.clone(),
                    sha256: sha256_file(&p)?,
                    bytes: std::fs::metadata(&p)?.len(),
                })
            })
            .collect()
    }
}

/// `manifest.json` filename convention next to run outputs.
pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}
