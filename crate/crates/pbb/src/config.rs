//! Run configuration: all user-facing frequencies are ν = ω/2π in Hz, and
//! the conversion to angular rates happens exactly once here.
//!
//! The linewidth convention: `nu_kappa_fwhm` is the total cavity linewidth
//! (FWHM) in Hz; the internal field decay rate is `kappa_field = π·ν_κ`,
//! i.e. half the angular FWHM. The reported control parameter g/κ is
//! `nu_g / nu_kappa_fwhm`. Every other frequency ν converts as 2π·ν.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hilbert::Dims;
use crate::maxwell_bloch::{self, MbParams, PhaseOptions, SolveOptions};
use crate::model::{DephasingSpec, SystemParams};
use crate::qjmc::TrajectoryConfig;
use crate::telegraph::{ThresholdMode, ThresholdSpec};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub hilbert: HilbertConfig,
    #[serde(default)]
    pub trajectory: TrajectorySection,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub mb: MbConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Coupling ν_g of the 0-1 transition (Hz).
    pub nu_g: f64,
    /// Total cavity linewidth, FWHM (Hz).
    pub nu_kappa_fwhm: f64,
    /// Transmon relaxation rate per adjacent transition (Hz).
    #[serde(default)]
    pub nu_gamma1: f64,
    /// Level-1 dephasing parameter (Hz).
    #[serde(default = "default_nu_gamma_phi1")]
    pub nu_gamma_phi1: f64,
    /// Drive strength (Hz).
    pub nu_eta: f64,
    /// Drive detuning (Hz, signed).
    #[serde(default)]
    pub nu_delta: f64,
    /// Anharmonicity (Hz, signed; negative for a transmon).
    #[serde(default = "default_nu_delta_an")]
    pub nu_delta_an: f64,
    /// Thermal photon number.
    #[serde(default)]
    pub n_th: f64,
    #[serde(default = "default_n_levels")]
    pub n_levels: usize,
    #[serde(default)]
    pub dephasing: DephasingConfig,
}

fn default_nu_gamma_phi1() -> f64 {
    50e3
}

fn default_nu_delta_an() -> f64 {
    -418e6
}

fn default_n_levels() -> usize {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DephasingConfig {
    None,
    FluxLinear {
        #[serde(default = "default_divisor")]
        divisor: f64,
    },
    ChargeDispersion {
        ej_hz: f64,
        ec_hz: f64,
        #[serde(default = "default_true")]
        include_ground: bool,
    },
}

fn default_divisor() -> f64 {
    8.0
}

fn default_true() -> bool {
    true
}

impl Default for DephasingConfig {
    fn default() -> Self {
        DephasingConfig::FluxLinear { divisor: 8.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HilbertConfig {
    /// Explicit Fock truncation; when absent it is chosen as
    /// ceil(fock_multiplier × expected bright photon number).
    #[serde(default)]
    pub n_fock: Option<usize>,
    #[serde(default = "default_fock_multiplier")]
    pub fock_multiplier: f64,
}

fn default_fock_multiplier() -> f64 {
    3.0
}

impl Default for HilbertConfig {
    fn default() -> Self {
        HilbertConfig {
            n_fock: None,
            fock_multiplier: 3.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySection {
    /// Total propagation time per trajectory (s).
    #[serde(default = "default_t_final")]
    pub t_final_s: f64,
    /// Observable sampling interval (s); default 1/kappa_field.
    #[serde(default)]
    pub sample_interval_s: Option<f64>,
    #[serde(default = "default_step_tolerance")]
    pub step_tolerance: f64,
    /// Step-size cap (s); default is the sample interval.
    #[serde(default)]
    pub dt_max_s: Option<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_n_trajectories")]
    pub n_trajectories: usize,
    /// Leading span dropped from each trajectory before concatenation (s);
    /// default 10/kappa_field.
    #[serde(default)]
    pub discard_initial_s: Option<f64>,
}

fn default_t_final() -> f64 {
    1e-4
}

fn default_step_tolerance() -> f64 {
    1e-6
}

fn default_seed() -> u64 {
    1
}

fn default_n_trajectories() -> usize {
    8
}

impl Default for TrajectorySection {
    fn default() -> Self {
        TrajectorySection {
            t_final_s: default_t_final(),
            sample_interval_s: None,
            step_tolerance: default_step_tolerance(),
            dt_max_s: None,
            seed: default_seed(),
            n_trajectories: default_n_trajectories(),
            discard_initial_s: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_threshold_mode")]
    pub threshold_mode: String,
    #[serde(default)]
    pub reference_high: Option<f64>,
    #[serde(default = "default_k_sigma")]
    pub k_sigma: f64,
    #[serde(default = "default_debounce")]
    pub debounce: usize,
    #[serde(default = "default_n_sections")]
    pub n_sections: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_threshold_mode() -> String {
    "half-amplitude".into()
}

fn default_k_sigma() -> f64 {
    5.0
}

fn default_debounce() -> usize {
    1
}

fn default_n_sections() -> usize {
    5
}

fn default_bins() -> usize {
    100
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            threshold_mode: default_threshold_mode(),
            reference_high: None,
            k_sigma: default_k_sigma(),
            debounce: default_debounce(),
            n_sections: default_n_sections(),
            bins: default_bins(),
        }
    }
}

/// Semiclassical scan grids and phase-classification settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MbConfig {
    /// 2 or 3 semiclassical levels; default follows system.n_levels.
    #[serde(default)]
    pub levels: Option<usize>,
    #[serde(default = "default_eta_min")]
    pub nu_eta_min: f64,
    #[serde(default = "default_eta_max")]
    pub nu_eta_max: f64,
    #[serde(default = "default_eta_points")]
    pub eta_points: usize,
    #[serde(default = "default_delta_min")]
    pub nu_delta_min: f64,
    #[serde(default = "default_delta_max")]
    pub nu_delta_max: f64,
    #[serde(default = "default_delta_points")]
    pub delta_points: usize,
    #[serde(default = "default_i_dim")]
    pub i_dim_threshold: f64,
    #[serde(default = "default_i_bright")]
    pub i_bright_threshold: f64,
    #[serde(default = "default_n_scan")]
    pub n_scan: usize,
}

fn default_eta_min() -> f64 {
    5e6
}

fn default_eta_max() -> f64 {
    300e6
}

fn default_eta_points() -> usize {
    40
}

fn default_delta_min() -> f64 {
    -40e6
}

fn default_delta_max() -> f64 {
    40e6
}

fn default_delta_points() -> usize {
    21
}

fn default_i_dim() -> f64 {
    1.0
}

fn default_i_bright() -> f64 {
    10.0
}

fn default_n_scan() -> usize {
    1500
}

impl Default for MbConfig {
    fn default() -> Self {
        MbConfig {
            levels: None,
            nu_eta_min: default_eta_min(),
            nu_eta_max: default_eta_max(),
            eta_points: default_eta_points(),
            nu_delta_min: default_delta_min(),
            nu_delta_max: default_delta_max(),
            delta_points: default_delta_points(),
            i_dim_threshold: default_i_dim(),
            i_bright_threshold: default_i_bright(),
            n_scan: default_n_scan(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub directory: String,
}

fn default_out_dir() -> String {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: default_out_dir(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        let field = |name: &str, msg: String| Error::InvalidInput(format!("{name}: {msg}"));
        if !(s.nu_kappa_fwhm > 0.0) {
            return Err(field(
                "system.nu_kappa_fwhm",
                format!("must be > 0, got {}", s.nu_kappa_fwhm),
            ));
        }
        if s.nu_g < 0.0 {
            return Err(field("system.nu_g", format!("must be >= 0, got {}", s.nu_g)));
        }
        if s.nu_gamma1 < 0.0 {
            return Err(field(
                "system.nu_gamma1",
                format!("must be >= 0, got {}", s.nu_gamma1),
            ));
        }
        if s.nu_gamma_phi1 < 0.0 {
            return Err(field(
                "system.nu_gamma_phi1",
                format!("must be >= 0, got {}", s.nu_gamma_phi1),
            ));
        }
        if s.nu_eta < 0.0 {
            return Err(field(
                "system.nu_eta",
                format!("must be >= 0, got {}", s.nu_eta),
            ));
        }
        if s.n_th < 0.0 {
            return Err(field("system.n_th", format!("must be >= 0, got {}", s.n_th)));
        }
        if s.n_levels < 2 {
            return Err(field(
                "system.n_levels",
                format!("must be >= 2, got {}", s.n_levels),
            ));
        }
        if let DephasingConfig::FluxLinear { divisor } = &s.dephasing {
            if !(*divisor > 0.0) {
                return Err(field(
                    "system.dephasing.divisor",
                    format!("must be > 0, got {divisor}"),
                ));
            }
        }
        if let DephasingConfig::ChargeDispersion { ej_hz, ec_hz, .. } = &s.dephasing {
            if *ej_hz <= 0.0 || *ec_hz <= 0.0 {
                return Err(field(
                    "system.dephasing",
                    format!("EJ and EC must be > 0, got {ej_hz}, {ec_hz}"),
                ));
            }
        }
        if let Some(n_fock) = self.hilbert.n_fock {
            if n_fock < 2 {
                return Err(field(
                    "hilbert.n_fock",
                    format!("must be >= 2, got {n_fock}"),
                ));
            }
        }
        if !(self.hilbert.fock_multiplier > 0.0) {
            return Err(field(
                "hilbert.fock_multiplier",
                format!("must be > 0, got {}", self.hilbert.fock_multiplier),
            ));
        }
        let t = &self.trajectory;
        if !(t.t_final_s > 0.0) {
            return Err(field(
                "trajectory.t_final_s",
                format!("must be > 0, got {}", t.t_final_s),
            ));
        }
        if !(t.step_tolerance > 0.0 && t.step_tolerance < 1e-2) {
            return Err(field(
                "trajectory.step_tolerance",
                format!("must be in (0, 1e-2), got {}", t.step_tolerance),
            ));
        }
        if t.n_trajectories == 0 {
            return Err(field("trajectory.n_trajectories", "must be >= 1".into()));
        }
        match self.analysis.threshold_mode.as_str() {
            "half-amplitude" | "variance-multiple" => {}
            other => {
                return Err(field(
                    "analysis.threshold_mode",
                    format!("must be \"half-amplitude\" or \"variance-multiple\", got \"{other}\""),
                ))
            }
        }
        if !(self.analysis.k_sigma > 0.0) {
            return Err(field(
                "analysis.k_sigma",
                format!("must be > 0, got {}", self.analysis.k_sigma),
            ));
        }
        if self.analysis.debounce == 0 {
            return Err(field("analysis.debounce", "must be >= 1".into()));
        }
        if self.analysis.n_sections < 2 {
            return Err(field("analysis.n_sections", "must be >= 2".into()));
        }
        if let Some(levels) = self.mb.levels {
            if !(2..=3).contains(&levels) {
                return Err(field("mb.levels", format!("must be 2 or 3, got {levels}")));
            }
        }
        if self.mb.n_scan < 1000 {
            return Err(field("mb.n_scan", "must be >= 1000".into()));
        }
        Ok(())
    }

    /// Angular-rate system parameters; kappa_field = π·ν_κ, others 2π·ν.
    pub fn system_params(&self) -> SystemParams {
        let s = &self.system;
        let dephasing = match &s.dephasing {
            DephasingConfig::None => DephasingSpec::None,
            DephasingConfig::FluxLinear { divisor } => DephasingSpec::FluxLinear {
                divisor: *divisor,
            },
            DephasingConfig::ChargeDispersion {
                ej_hz,
                ec_hz,
                include_ground,
            } => DephasingSpec::ChargeDispersion {
                ej_hz: *ej_hz,
                ec_hz: *ec_hz,
                include_ground: *include_ground,
            },
        };
        SystemParams {
            g1: 2.0 * PI * s.nu_g,
            kappa_field: PI * s.nu_kappa_fwhm,
            gamma1: 2.0 * PI * s.nu_gamma1,
            gamma_phi1: 2.0 * PI * s.nu_gamma_phi1,
            eta: 2.0 * PI * s.nu_eta,
            delta: 2.0 * PI * s.nu_delta,
            delta_an: 2.0 * PI * s.nu_delta_an,
            n_th: s.n_th,
            n_levels: s.n_levels,
            dephasing,
        }
    }

    /// Reported control parameter g/κ (both linewidths in Hz).
    pub fn g_over_kappa(&self) -> f64 {
        self.system.nu_g / self.system.nu_kappa_fwhm
    }

    /// Expected bright-state photon number, from the largest semiclassical
    /// branch intensity with the empty-cavity response as fallback.
    pub fn bright_photon_estimate(&self) -> f64 {
        let params = self.system_params();
        let empty = (params.eta / params.kappa_field).powi(2);
        if params.g1 == 0.0 || params.eta == 0.0 {
            return empty.max(1.0);
        }
        let mb = self.mb_params();
        let i_max = 4.0 * empty + 10.0;
        match maxwell_bloch::root_intensities(&mb, i_max, 2000, &SolveOptions::default()) {
            Ok(roots) if !roots.is_empty() => {
                roots.iter().cloned().fold(0.0f64, f64::max).max(1.0)
            }
            _ => empty.max(1.0),
        }
    }

    /// Hilbert dimensions: explicit n_fock, or
    /// ceil(fock_multiplier × bright photon estimate).
    pub fn dims(&self) -> Result<Dims> {
        let n_fock = match self.hilbert.n_fock {
            Some(n) => n,
            None => {
                let n = (self.hilbert.fock_multiplier * self.bright_photon_estimate()).ceil()
                    as usize;
                n.max(4)
            }
        };
        Dims::new(self.system.n_levels, n_fock)
    }

    pub fn trajectory_config(&self) -> TrajectoryConfig {
        let params = self.system_params();
        let t = &self.trajectory;
        let sample_interval = t
            .sample_interval_s
            .unwrap_or(1.0 / params.kappa_field)
            .min(t.t_final_s);
        TrajectoryConfig {
            t_final: t.t_final_s,
            sample_interval,
            step_tolerance: t.step_tolerance,
            dt_max: t.dt_max_s.unwrap_or(sample_interval),
            seed: t.seed,
            initial_state: 0,
        }
    }

    /// Leading span dropped from every trajectory before concatenation.
    pub fn discard_initial(&self) -> f64 {
        self.trajectory
            .discard_initial_s
            .unwrap_or(10.0 / self.system_params().kappa_field)
    }

    pub fn threshold_spec(&self) -> ThresholdSpec {
        let a = &self.analysis;
        ThresholdSpec {
            mode: if a.threshold_mode == "variance-multiple" {
                ThresholdMode::VarianceMultiple
            } else {
                ThresholdMode::HalfAmplitude
            },
            reference_high: a.reference_high,
            k_sigma: a.k_sigma,
            debounce: a.debounce,
        }
    }

    /// Semiclassical parameters; the level count follows mb.levels when
    /// set, otherwise system.n_levels clamped to {2, 3}.
    pub fn mb_params(&self) -> MbParams {
        let mut params = self.system_params();
        if let Some(levels) = self.mb.levels {
            params.n_levels = levels;
        }
        params.n_levels = params.n_levels.clamp(2, 3);
        MbParams::from_system(&params).expect("validated config")
    }

    pub fn phase_options(&self) -> PhaseOptions {
        PhaseOptions {
            i_dim_threshold: self.mb.i_dim_threshold,
            i_bright_threshold: self.mb.i_bright_threshold,
            n_scan: self.mb.n_scan,
            ..PhaseOptions::default()
        }
    }

    /// Linearly spaced detuning grid (angular rad/s).
    pub fn delta_grid(&self) -> Vec<f64> {
        linspace(
            2.0 * PI * self.mb.nu_delta_min,
            2.0 * PI * self.mb.nu_delta_max,
            self.mb.delta_points,
        )
    }

    /// Geometrically spaced drive grid (angular rad/s).
    pub fn eta_grid(&self) -> Vec<f64> {
        let lo = (2.0 * PI * self.mb.nu_eta_min).max(1e-6);
        let hi = 2.0 * PI * self.mb.nu_eta_max;
        let n = self.mb.eta_points;
        if n == 1 {
            return vec![lo];
        }
        (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
            .collect()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}
