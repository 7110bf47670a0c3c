//! Semiclassical Maxwell-Bloch steady states and phase diagrams.
//!
//! The three-level equations couple the field amplitude α to the transmon
//! coherences s_ge, s_ef, s_gf and populations s_gg, s_ee, s_ff:
//!
//! ```text
//! α̇    = (iΔ - κ)α + η - g1 s_ge - g2 s_ef
//! ṡ_ge = (iΔ - γ1) s_ge - g1 (s_ee - s_gg) α - g2 s_gf α*
//! ṡ_gg = γ1 s_ee - 2 g1 Re{α* s_ge}
//! ṡ_ef = (i[Δ - Δf] - [γ1 + 4(γφ1 + γφ2)]) s_ef + g2 (s_ee - s_ff) α + g1 α* s_gf
//! ṡ_ee = 2 g1 Re{α* s_ge} - 2 g2 Re{α* s_ef} - γ1 s_ee + γ1 s_ff
//! ṡ_gf = (i[2Δ - Δf] - [γ1 + 4 γφ2]) s_gf - g1 α s_ef + g2 α s_ge
//! ```
//!
//! with s_gg + s_ee + s_ff = 1. The two-level reduction drops the f-state
//! equations and every g2 term. Steady states come from the implicit
//! intensity equation I·|Σ(I) + (iΔ - κ)|² = η², where Σ(I) is the complex
//! dispersive shift: the polarizations are eliminated in favor of the
//! populations, which then only depend on the intensity I = |α|².

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{dephasing_rates, SystemParams};

/// Number of transmon levels kept in the semiclassical description.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbLevels {
    Two,
    Three,
}

/// Parameters of the Maxwell-Bloch system (all rates angular, rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct MbParams {
    pub g1: f64,
    /// Coupling of the e-f transition; √2 · g1 for a transmon ladder.
    pub g2: f64,
    pub kappa_field: f64,
    pub gamma1: f64,
    /// γ_φ,1 as it enters the equations.
    pub gamma_phi1: f64,
    /// γ_φ,2 as it enters the equations.
    pub gamma_phi2: f64,
    pub eta: f64,
    pub delta: f64,
    /// Detuning of the e-f transition in the rotating frame; equals the
    /// anharmonicity for a transmon ladder but is kept independent.
    pub delta_f: f64,
    pub levels: MbLevels,
}

impl MbParams {
    /// Map the quantum-model parameters onto the semiclassical system:
    /// g2 = √2 g1, Δf = Δ_an, and the per-level dephasing rates of the
    /// configured dephasing model.
    pub fn from_system(params: &SystemParams) -> Result<Self> {
        params.validate()?;
        let rates = dephasing_rates(params)?;
        let levels = if params.n_levels == 2 {
            MbLevels::Two
        } else {
            MbLevels::Three
        };
        Ok(MbParams {
            g1: params.g1,
            g2: 2.0f64.sqrt() * params.g1,
            kappa_field: params.kappa_field,
            gamma1: params.gamma1,
            gamma_phi1: rates.get(1).copied().unwrap_or(0.0),
            gamma_phi2: rates.get(2).copied().unwrap_or(0.0),
            eta: params.eta,
            delta: params.delta,
            delta_f: params.delta_an,
            levels,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_field > 0.0) {
            return Err(Error::InvalidInput(format!(
                "kappa_field must be > 0, got {}",
                self.kappa_field
            )));
        }
        if self.gamma1 < 0.0 || self.gamma_phi1 < 0.0 || self.gamma_phi2 < 0.0 {
            return Err(Error::InvalidInput(
                "decay rates must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    fn is_two_level(&self) -> bool {
        self.levels == MbLevels::Two
    }

    /// The polarization elimination loses rank when γ1 = 0; the two-level
    /// system then closes on the Bloch-sphere constraint instead.
    fn is_neoclassical(&self) -> bool {
        self.is_two_level() && self.gamma1 == 0.0
    }
}

/// Semiclassical state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MbState {
    pub alpha: Complex64,
    pub s_ge: Complex64,
    pub s_ef: Complex64,
    pub s_gf: Complex64,
    pub s_gg: f64,
    pub s_ee: f64,
    pub s_ff: f64,
}

impl MbState {
    pub fn vacuum() -> Self {
        MbState {
            alpha: Complex64::ZERO,
            s_ge: Complex64::ZERO,
            s_ef: Complex64::ZERO,
            s_gf: Complex64::ZERO,
            s_gg: 1.0,
            s_ee: 0.0,
            s_ff: 0.0,
        }
    }

    pub fn intensity(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    fn to_array(self) -> [f64; 11] {
        [
            self.alpha.re,
            self.alpha.im,
            self.s_ge.re,
            self.s_ge.im,
            self.s_ef.re,
            self.s_ef.im,
            self.s_gf.re,
            self.s_gf.im,
            self.s_gg,
            self.s_ee,
            self.s_ff,
        ]
    }

    fn from_array(v: &[f64; 11]) -> Self {
        MbState {
            alpha: Complex64::new(v[0], v[1]),
            s_ge: Complex64::new(v[2], v[3]),
            s_ef: Complex64::new(v[4], v[5]),
            s_gf: Complex64::new(v[6], v[7]),
            s_gg: v[8],
            s_ee: v[9],
            s_ff: v[10],
        }
    }
}

/// Right-hand side of the Maxwell-Bloch system. For the two-level variant
/// the f-state equations and g2 terms vanish identically.
pub fn mb_rhs(state: &MbState, params: &MbParams) -> MbState {
    let i = Complex64::i();
    let two_level = params.is_two_level();
    let g1 = params.g1;
    let g2 = if two_level { 0.0 } else { params.g2 };
    let kappa = params.kappa_field;
    let gamma1 = params.gamma1;
    let delta = params.delta;
    let a = state.alpha;
    let s_ge = state.s_ge;
    let s_ef = if two_level { Complex64::ZERO } else { state.s_ef };
    let s_gf = if two_level { Complex64::ZERO } else { state.s_gf };

    let d_alpha = (i * delta - kappa) * a + params.eta - g1 * s_ge - g2 * s_ef;
    let d_sge = (i * delta - gamma1) * s_ge - g1 * (state.s_ee - state.s_gg) * a
        - g2 * s_gf * a.conj();
    let d_sgg = gamma1 * state.s_ee - 2.0 * g1 * (a.conj() * s_ge).re;

    if two_level {
        let d_see = 2.0 * g1 * (a.conj() * s_ge).re - gamma1 * state.s_ee;
        return MbState {
            alpha: d_alpha,
            s_ge: d_sge,
            s_ef: Complex64::ZERO,
            s_gf: Complex64::ZERO,
            s_gg: d_sgg,
            s_ee: d_see,
            s_ff: 0.0,
        };
    }

    let gamma_ef = gamma1 + 4.0 * (params.gamma_phi1 + params.gamma_phi2);
    let gamma_gf = gamma1 + 4.0 * params.gamma_phi2;
    let d_sef = (i * (delta - params.delta_f) - gamma_ef) * s_ef
        + g2 * (state.s_ee - state.s_ff) * a
        + g1 * a.conj() * s_gf;
    let d_see = 2.0 * g1 * (a.conj() * s_ge).re - 2.0 * g2 * (a.conj() * s_ef).re
        - gamma1 * state.s_ee
        + gamma1 * state.s_ff;
    let d_sgf =
        (i * (2.0 * delta - params.delta_f) - gamma_gf) * s_gf - g1 * a * s_ef + g2 * a * s_ge;
    // completeness: ṡ_ff balances the other two populations
    let d_sff = 2.0 * g2 * (a.conj() * s_ef).re - gamma1 * state.s_ff;

    MbState {
        alpha: d_alpha,
        s_ge: d_sge,
        s_ef: d_sef,
        s_gf: d_sgf,
        s_gg: d_sgg,
        s_ee: d_see,
        s_ff: d_sff,
    }
}

/// Steady-state coherences and populations at a given field amplitude,
/// found by the polarization-elimination linear solve. The amplitude may
/// carry an arbitrary phase; only |α|² enters the eliminated system.
pub fn steady_state_at_alpha(alpha: Complex64, params: &MbParams) -> Result<MbState> {
    params.validate()?;
    let intensity = alpha.norm_sqr();
    if params.is_neoclassical() {
        return neoclassical_state(alpha, params, NeoclassicalBranch::GroundLike);
    }
    let g1 = params.g1;

    if params.is_two_level() {
        // s_ge = x1 α with c1 x1 = g1 (s_ee - s_gg)
        let c1 = Complex64::new(-params.gamma1, params.delta);
        if c1.norm() == 0.0 {
            return Err(Error::Numerical(format!(
                "two-level polarization coefficient vanishes at intensity {intensity:.6e}"
            )));
        }
        // population balance: γ1 s_ee = 2 g1 I Re{x1}, x1 = g1 w / c1,
        // w = s_ee - s_gg, s_gg + s_ee = 1
        let q = 2.0 * g1 * g1 * intensity * (Complex64::new(1.0, 0.0) / c1).re;
        // γ1 s_ee - q (2 s_ee - 1) = 0
        let denom = params.gamma1 - 2.0 * q;
        if denom.abs() <= 1e-300 {
            return Err(Error::Numerical(format!(
                "two-level population system singular at intensity {intensity:.6e}"
            )));
        }
        let s_ee = -q / denom;
        let s_gg = 1.0 - s_ee;
        let w = s_ee - s_gg;
        let x1 = g1 * w / c1;
        return Ok(MbState {
            alpha,
            s_ge: x1 * alpha,
            s_ef: Complex64::ZERO,
            s_gf: Complex64::ZERO,
            s_gg,
            s_ee,
            s_ff: 0.0,
        });
    }

    // three levels: solve the polarization system for x = (x1, x2, x3) with
    // s_ge = x1 α, s_ef = x2 α, s_gf = x3 α², driven by W1 = s_ee - s_gg
    // and W2 = s_ee - s_ff:
    //   c1 x1            - g2 I x3 = g1 W1
    //   c2 x2            + g1 I x3 = -g2 W2
    //   g2 x1 - g1 x2 + c3 x3      = 0
    let g2 = params.g2;
    let c1 = Complex64::new(-params.gamma1, params.delta);
    let gamma_ef = params.gamma1 + 4.0 * (params.gamma_phi1 + params.gamma_phi2);
    let gamma_gf = params.gamma1 + 4.0 * params.gamma_phi2;
    let c2 = Complex64::new(-gamma_ef, params.delta - params.delta_f);
    let c3 = Complex64::new(-gamma_gf, 2.0 * params.delta - params.delta_f);

    let m = nalgebra::Matrix3::new(
        c1,
        Complex64::ZERO,
        Complex64::new(-g2 * intensity, 0.0),
        Complex64::ZERO,
        c2,
        Complex64::new(g1 * intensity, 0.0),
        Complex64::new(g2, 0.0),
        Complex64::new(-g1, 0.0),
        c3,
    );
    let lu = m.lu();
    let solve = |w1: f64, w2: f64| -> Option<nalgebra::Vector3<Complex64>> {
        let rhs = nalgebra::Vector3::new(
            Complex64::new(g1 * w1, 0.0),
            Complex64::new(-g2 * w2, 0.0),
            Complex64::ZERO,
        );
        lu.solve(&rhs)
    };
    let xu = solve(1.0, 0.0).ok_or_else(|| {
        Error::Numerical(format!(
            "polarization system singular at intensity {intensity:.6e}"
        ))
    })?;
    let xv = solve(0.0, 1.0).ok_or_else(|| {
        Error::Numerical(format!(
            "polarization system singular at intensity {intensity:.6e}"
        ))
    })?;

    // population equations as linear functions of n = (s_gg, s_ee, s_ff):
    // W1 = s_ee - s_gg, W2 = s_ee - s_ff
    // (9c): γ1 s_ee - 2 g1 I Re{x1(n)} = 0
    // (9e): 2 g1 I Re{x1} - 2 g2 I Re{x2} - γ1 s_ee + γ1 s_ff = 0
    // completeness: s_gg + s_ee + s_ff = 1
    let re_x1 = (xu[0].re, xv[0].re); // coefficients of (W1, W2)
    let re_x2 = (xu[1].re, xv[1].re);
    let gamma1 = params.gamma1;
    let i2 = 2.0 * intensity;
    // row coefficients in n-space: W1 = -s_gg + s_ee, W2 = s_ee - s_ff
    let row1 = [
        -g1 * i2 * (-re_x1.0),
        gamma1 - g1 * i2 * (re_x1.0 + re_x1.1),
        -g1 * i2 * (-re_x1.1),
    ];
    let row2 = [
        (g1 * i2 * re_x1.0 - g2 * i2 * re_x2.0) * -1.0,
        g1 * i2 * (re_x1.0 + re_x1.1) - g2 * i2 * (re_x2.0 + re_x2.1) - gamma1,
        -(g1 * i2 * re_x1.1 - g2 * i2 * re_x2.1) * 1.0 + gamma1,
    ];
    let a = nalgebra::Matrix3::new(
        row1[0], row1[1], row1[2], row2[0], row2[1], row2[2], 1.0, 1.0, 1.0,
    );
    let b = nalgebra::Vector3::new(0.0, 0.0, 1.0);
    let n = a.lu().solve(&b).ok_or_else(|| {
        Error::Numerical(format!(
            "population system singular at intensity {intensity:.6e}"
        ))
    })?;
    let (s_gg, s_ee, s_ff) = (n[0], n[1], n[2]);
    let w1 = s_ee - s_gg;
    let w2 = s_ee - s_ff;
    let x1 = xu[0] * w1 + xv[0] * w2;
    let x2 = xu[1] * w1 + xv[1] * w2;
    let x3 = xu[2] * w1 + xv[2] * w2;

    Ok(MbState {
        alpha,
        s_ge: x1 * alpha,
        s_ef: x2 * alpha,
        s_gf: x3 * alpha * alpha,
        s_gg,
        s_ee,
        s_ff,
    })
}

/// Branch selector for the γ1 = 0 two-level closure, where the linear
/// population balance degenerates and the pure-state (Bloch-sphere)
/// constraint w² + 4|s_ge|² = 1 closes the system instead. Both signs of
/// the inversion satisfy it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeoclassicalBranch {
    /// w ≤ 0 at Δ > 0 (connects to the ground state).
    GroundLike,
    /// The opposite inversion sign.
    Inverted,
}

fn neoclassical_state(
    alpha: Complex64,
    params: &MbParams,
    branch: NeoclassicalBranch,
) -> Result<MbState> {
    let g1 = params.g1;
    let intensity = alpha.norm_sqr();
    let r = (params.delta * params.delta + 4.0 * g1 * g1 * intensity).sqrt();
    if r == 0.0 {
        return Err(Error::Numerical(
            "neoclassical closure undefined at zero intensity and zero detuning".into(),
        ));
    }
    let sign = match branch {
        NeoclassicalBranch::GroundLike => -1.0,
        NeoclassicalBranch::Inverted => 1.0,
    };
    // Σ = i σ g² / r with w = -σ Δ / r and s_ge = -Σ α / g
    let sigma_shift = Complex64::new(0.0, sign * g1 * g1 / r);
    let w = -sign * params.delta / r;
    Ok(MbState {
        alpha,
        s_ge: -sigma_shift * alpha / g1,
        s_ef: Complex64::ZERO,
        s_gf: Complex64::ZERO,
        s_gg: (1.0 - w) / 2.0,
        s_ee: (1.0 + w) / 2.0,
        s_ff: 0.0,
    })
}

fn dispersive_shift_of_state(state: &MbState, params: &MbParams) -> Complex64 {
    let g2 = if params.is_two_level() { 0.0 } else { params.g2 };
    -(params.g1 * state.s_ge + g2 * state.s_ef) / state.alpha
}

/// Complex dispersive shift Σ(I) = -(g1 s_ge + g2 s_ef)/α at intensity I.
/// Σ depends only on |α|², so the amplitude is taken real here.
pub fn dispersive_shift(intensity: f64, params: &MbParams) -> Result<Complex64> {
    if intensity < 0.0 {
        return Err(Error::InvalidInput(format!(
            "intensity must be >= 0, got {intensity}"
        )));
    }
    if params.g1 == 0.0 {
        return Ok(Complex64::ZERO);
    }
    if intensity == 0.0 {
        return dispersive_shift_zero(params);
    }
    let alpha = Complex64::new(intensity.sqrt(), 0.0);
    let state = steady_state_at_alpha(alpha, params)?;
    Ok(dispersive_shift_of_state(&state, params))
}

/// Σ in the zero-intensity limit (coherences-per-α stay finite).
fn dispersive_shift_zero(params: &MbParams) -> Result<Complex64> {
    if params.is_neoclassical() {
        return Err(Error::Numerical(
            "neoclassical dispersive shift diverges at zero intensity".into(),
        ));
    }
    // reuse the linear solve at a vanishing amplitude
    let eps = Complex64::new(1e-150, 0.0);
    let state = steady_state_at_alpha(eps, params)?;
    Ok(dispersive_shift_of_state(&state, params))
}

/// Residual of the implicit intensity equation:
/// I·|Σ(I) + (iΔ - κ)|² - η²; zero iff I is a steady-state intensity.
pub fn intensity_residual(intensity: f64, params: &MbParams) -> Result<f64> {
    if intensity < 0.0 {
        return Err(Error::InvalidInput(format!(
            "intensity must be >= 0, got {intensity}"
        )));
    }
    if intensity == 0.0 {
        return Ok(-params.eta * params.eta);
    }
    if params.is_neoclassical() {
        return Ok(neoclassical_residual(intensity, params));
    }
    let sigma = dispersive_shift(intensity, params)?;
    let denom = sigma + Complex64::new(-params.kappa_field, params.delta);
    Ok(intensity * denom.norm_sqr() - params.eta * params.eta)
}

/// γ1 = 0 two-level residual; both inversion signs give
/// Σ = ± i g²/√(Δ² + 4g²I), and the residual is evaluated for the branch
/// whose |Σ + iΔ - κ| is smaller/larger respectively. The ground-like
/// branch is used here; `solve_branches` scans both.
fn neoclassical_residual_branch(
    intensity: f64,
    params: &MbParams,
    branch: NeoclassicalBranch,
) -> f64 {
    let g = params.g1;
    let r = (params.delta * params.delta + 4.0 * g * g * intensity).sqrt();
    let sign = match branch {
        NeoclassicalBranch::GroundLike => -1.0,
        NeoclassicalBranch::Inverted => 1.0,
    };
    let sigma = Complex64::new(0.0, sign * g * g / r);
    let denom = sigma + Complex64::new(-params.kappa_field, params.delta);
    intensity * denom.norm_sqr() - params.eta * params.eta
}

fn neoclassical_residual(intensity: f64, params: &MbParams) -> f64 {
    neoclassical_residual_branch(intensity, params, NeoclassicalBranch::GroundLike)
}

/// Stability classification of a steady-state branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    /// Intensity decreasing with drive strength (slope test).
    Unphysical,
}

impl Stability {
    pub fn label(&self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Unphysical => "unphysical",
        }
    }
}

/// One steady-state intensity branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    /// |α|² in photons.
    pub intensity: f64,
    pub stability: Stability,
    /// Max |mb_rhs| over all equations at the reconstructed state,
    /// normalized by max(κ, g1).
    pub residual: f64,
    /// Set when the perturbed dynamics neither reconverges nor diverges
    /// (bounded oscillation).
    pub limit_cycle: bool,
}

/// Options for the branch scan and stability tests.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Lower end of the log-spaced intensity scan (photons). The scan floor
    /// is additionally lowered adaptively to capture dim branches below it.
    pub i_min: f64,
    /// Relative bisection width for root polishing.
    pub bisect_rel: f64,
    /// Roots closer than this relative distance are merged.
    pub dedup_rel: f64,
    /// Horizon of the dynamical stability test in units of 1/κ.
    pub stability_horizon_over_kappa: f64,
    /// Relative size of the stability perturbation.
    pub perturbation: f64,
    /// Re-convergence criterion (relative intensity).
    pub convergence_rel: f64,
    /// Relative η step of the slope test.
    pub slope_step_rel: f64,
    /// Seed of the perturbation noise.
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            i_min: 1e-6,
            bisect_rel: 1e-10,
            dedup_rel: 1e-6,
            stability_horizon_over_kappa: 50.0,
            perturbation: 1e-3,
            convergence_rel: 1e-4,
            slope_step_rel: 1e-3,
            seed: 0x5EED,
        }
    }
}

/// Root intensities of the implicit intensity equation over (0, i_max],
/// found by bracketing sign changes of the residual on a log-spaced grid
/// and bisecting. In the γ1 = 0 two-level case both inversion branches are
/// scanned.
pub fn root_intensities(
    params: &MbParams,
    i_max: f64,
    n_scan: usize,
    options: &SolveOptions,
) -> Result<Vec<f64>> {
    params.validate()?;
    if !(i_max > 0.0) {
        return Err(Error::InvalidInput(format!(
            "i_max must be > 0, got {i_max}"
        )));
    }
    if n_scan < 1000 {
        return Err(Error::InvalidInput(format!(
            "n_scan must be >= 1000, got {n_scan}"
        )));
    }
    if params.eta == 0.0 {
        return Ok(Vec::new());
    }

    let mut roots = Vec::new();
    if params.is_neoclassical() {
        for branch in [NeoclassicalBranch::GroundLike, NeoclassicalBranch::Inverted] {
            let f = |i: f64| -> Result<f64> { Ok(neoclassical_residual_branch(i, params, branch)) };
            scan_for_roots(&f, params, i_max, n_scan, options, &mut roots)?;
        }
    } else {
        let f = |i: f64| intensity_residual(i, params);
        scan_for_roots(&f, params, i_max, n_scan, options, &mut roots)?;
    }

    roots.sort_by(f64::total_cmp);
    // deduplicate
    let mut merged: Vec<f64> = Vec::new();
    for r in roots {
        match merged.last() {
            Some(last) if (r - last).abs() <= options.dedup_rel * r.abs().max(*last) => {}
            _ => merged.push(r),
        }
    }
    Ok(merged)
}

fn scan_for_roots<F: Fn(f64) -> Result<f64>>(
    f: &F,
    params: &MbParams,
    i_max: f64,
    n_scan: usize,
    options: &SolveOptions,
    roots: &mut Vec<f64>,
) -> Result<()> {
    // dim branches can sit far below the nominal floor; estimate the dim
    // intensity from Σ(0) and extend the scan if needed
    let mut i_lo = options.i_min.min(i_max / 2.0);
    if !params.is_neoclassical() && params.g1 > 0.0 {
        if let Ok(sigma0) = dispersive_shift_zero(params) {
            let denom = sigma0 + Complex64::new(-params.kappa_field, params.delta);
            let i_dim_est = params.eta * params.eta / denom.norm_sqr();
            if i_dim_est.is_finite() && i_dim_est > 0.0 {
                i_lo = i_lo.min(i_dim_est / 100.0);
            }
        }
    }

    let log_lo = i_lo.ln();
    let log_hi = i_max.ln();
    let step = (log_hi - log_lo) / (n_scan - 1) as f64;

    let mut prev_i = i_lo;
    let mut prev_v = match f(prev_i) {
        Ok(v) => v,
        Err(_) => f64::NAN,
    };
    for k in 1..n_scan {
        let i_k = (log_lo + k as f64 * step).exp();
        let v_k = match f(i_k) {
            Ok(v) => v,
            Err(_) => {
                prev_i = i_k;
                prev_v = f64::NAN;
                continue;
            }
        };
        if prev_v.is_finite() && v_k.is_finite() && prev_v.signum() != v_k.signum() {
            let root = bisect_root(f, prev_i, i_k, prev_v, options.bisect_rel)?;
            roots.push(root);
        }
        prev_i = i_k;
        prev_v = v_k;
    }
    Ok(())
}

fn bisect_root<F: Fn(f64) -> Result<f64>>(
    f: &F,
    mut lo: f64,
    mut hi: f64,
    f_lo: f64,
    rel_width: f64,
) -> Result<f64> {
    let mut sign_lo = f_lo.signum();
    while (hi - lo) > rel_width * hi {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if v.signum() == sign_lo {
            lo = mid;
            sign_lo = v.signum();
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Reconstruct the full steady state at a root intensity, with the physical
/// field phase α = η/(κ - iΔ - Σ).
pub fn reconstruct_fixed_point(intensity: f64, params: &MbParams) -> Result<MbState> {
    if params.is_neoclassical() {
        // pick the branch whose residual vanishes at this intensity
        let mut best: Option<(f64, MbState)> = None;
        for branch in [NeoclassicalBranch::GroundLike, NeoclassicalBranch::Inverted] {
            let res = neoclassical_residual_branch(intensity, params, branch).abs();
            let alpha0 = Complex64::new(intensity.sqrt(), 0.0);
            let trial = neoclassical_state(alpha0, params, branch)?;
            let sigma = dispersive_shift_of_state(&trial, params);
            let alpha = params.eta
                / (Complex64::new(params.kappa_field, -params.delta) - sigma);
            let state = neoclassical_state(alpha, params, branch)?;
            if best.as_ref().map(|(r, _)| res < *r).unwrap_or(true) {
                best = Some((res, state));
            }
        }
        return Ok(best.expect("two branches evaluated").1);
    }
    let sigma = dispersive_shift(intensity, params)?;
    let alpha = params.eta / (Complex64::new(params.kappa_field, -params.delta) - sigma);
    steady_state_at_alpha(alpha, params)
}

/// Max |mb_rhs| over all equations, normalized by max(κ, g1).
pub fn fixed_point_residual(state: &MbState, params: &MbParams) -> f64 {
    let rhs = mb_rhs(state, params);
    let scale = params.kappa_field.max(params.g1).max(1e-300);
    let vals = [
        rhs.alpha.norm(),
        rhs.s_ge.norm(),
        rhs.s_ef.norm(),
        rhs.s_gf.norm(),
        rhs.s_gg.abs(),
        rhs.s_ee.abs(),
        rhs.s_ff.abs(),
    ];
    vals.into_iter().fold(0.0f64, f64::max) / scale
}

/// Fixed-step RK4 integration of the Maxwell-Bloch flow.
pub fn integrate_mb(
    state: &MbState,
    params: &MbParams,
    t_final: f64,
    dt: f64,
) -> MbState {
    let mut y = state.to_array();
    let steps = (t_final / dt).ceil() as usize;
    let h = t_final / steps as f64;
    let deriv = |v: &[f64; 11]| -> [f64; 11] {
        let d = mb_rhs(&MbState::from_array(v), params);
        d.to_array()
    };
    for _ in 0..steps {
        let k1 = deriv(&y);
        let mut y2 = y;
        for i in 0..11 {
            y2[i] = y[i] + 0.5 * h * k1[i];
        }
        let k2 = deriv(&y2);
        for i in 0..11 {
            y2[i] = y[i] + 0.5 * h * k2[i];
        }
        let k3 = deriv(&y2);
        for i in 0..11 {
            y2[i] = y[i] + h * k3[i];
        }
        let k4 = deriv(&y2);
        for i in 0..11 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    MbState::from_array(&y)
}

/// Integrate until the intensity settles (relative change below `settle_rel`
/// between windows of 20/κ) or `max_kappa_time`/κ elapses. Returns the final
/// state.
pub fn integrate_to_attractor(
    state: &MbState,
    params: &MbParams,
    max_kappa_time: f64,
    settle_rel: f64,
) -> MbState {
    let window = 20.0 / params.kappa_field;
    // the step must resolve the fastest intensity the flow can reach, not
    // just the starting one
    let i_cap = state
        .intensity()
        .max(4.0 * (params.eta / params.kappa_field).powi(2))
        .max(1.0);
    let dt = mb_time_step(params, i_cap);
    let mut current = *state;
    let mut elapsed = 0.0;
    let mut prev_i = current.intensity();
    while elapsed < max_kappa_time / params.kappa_field {
        current = integrate_mb(&current, params, window, dt);
        elapsed += window;
        let i_now = current.intensity();
        if (i_now - prev_i).abs() <= settle_rel * i_now.max(1e-12) {
            // confirm over a second window
            let confirm = integrate_mb(&current, params, window, dt);
            if (confirm.intensity() - i_now).abs() <= settle_rel * i_now.max(1e-12) {
                return confirm;
            }
            current = confirm;
            elapsed += window;
        }
        prev_i = current.intensity();
    }
    current
}

/// Asymptotic intensity of the attractor reached from `state`: integrate
/// into a basin, then Newton-polish onto the fixed point (relaxation rates
/// far below κ would otherwise need impractically long integrations). The
/// refinement is discarded when it jumps away from the integration
/// endpoint, which covers non-fixed-point attractors.
pub fn attractor_intensity(
    state: &MbState,
    params: &MbParams,
    max_kappa_time: f64,
    settle_rel: f64,
) -> f64 {
    let end = integrate_to_attractor(state, params, max_kappa_time, settle_rel);
    let i_end = end.intensity();
    match refine_fixed_point(&end, params) {
        Ok(refined) => {
            let i_ref = refined.intensity();
            // distinct basins sit orders of magnitude apart; a factor-3
            // window rejects cross-basin hops while accepting a polish
            // from a still-decaying endpoint
            if i_ref >= i_end / 3.0 - 1e-9 && i_ref <= 3.0 * i_end + 1e-9 {
                i_ref
            } else {
                i_end
            }
        }
        Err(_) => i_end,
    }
}

/// Newton refinement of a fixed point from a nearby state, used to polish
/// slowly converging attractor integrations onto the asymptotic steady
/// state. The population trace is conserved by the flow (and the two-level
/// reduction also freezes the f-state), so Newton runs on the reduced
/// coordinate set with the dependent populations eliminated.
pub fn refine_fixed_point(state: &MbState, params: &MbParams) -> Result<MbState> {
    let two_level = params.is_two_level();
    let n = if two_level { 5 } else { 10 };
    let pack = |s: &MbState| -> Vec<f64> {
        let mut v = vec![
            s.alpha.re, s.alpha.im, s.s_ge.re, s.s_ge.im, s.s_gg,
        ];
        if !two_level {
            v.extend_from_slice(&[s.s_ef.re, s.s_ef.im, s.s_gf.re, s.s_gf.im, s.s_ee]);
        }
        v
    };
    let unpack = |v: &[f64]| -> MbState {
        if two_level {
            MbState {
                alpha: Complex64::new(v[0], v[1]),
                s_ge: Complex64::new(v[2], v[3]),
                s_ef: Complex64::ZERO,
                s_gf: Complex64::ZERO,
                s_gg: v[4],
                s_ee: 1.0 - v[4],
                s_ff: 0.0,
            }
        } else {
            MbState {
                alpha: Complex64::new(v[0], v[1]),
                s_ge: Complex64::new(v[2], v[3]),
                s_ef: Complex64::new(v[5], v[6]),
                s_gf: Complex64::new(v[7], v[8]),
                s_gg: v[4],
                s_ee: v[9],
                s_ff: 1.0 - v[4] - v[9],
            }
        }
    };
    let residual = |v: &[f64]| -> Vec<f64> {
        let d = mb_rhs(&unpack(v), params);
        let mut r = vec![d.alpha.re, d.alpha.im, d.s_ge.re, d.s_ge.im, d.s_gg];
        if !two_level {
            r.extend_from_slice(&[d.s_ef.re, d.s_ef.im, d.s_gf.re, d.s_gf.im, d.s_ee]);
        }
        r
    };

    let scale = params.kappa_field.max(params.g1);
    let mut y = pack(state);
    for _ in 0..40 {
        let r = residual(&y);
        let rnorm = r.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        if rnorm <= 1e-13 * scale {
            return Ok(unpack(&y));
        }
        let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let h = 1e-7 * y[j].abs().max(1e-4);
            let mut yp = y.clone();
            yp[j] += h;
            let mut ym = y.clone();
            ym[j] -= h;
            let rp = residual(&yp);
            let rm = residual(&ym);
            for i in 0..n {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let rhs = nalgebra::DVector::from_column_slice(&r);
        let step = jac.lu().solve(&rhs).ok_or_else(|| {
            Error::Numerical("singular Jacobian in fixed-point refinement".into())
        })?;
        for i in 0..n {
            y[i] -= step[i];
        }
    }
    let r = residual(&y);
    let rnorm = r.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    if rnorm <= 1e-10 * scale {
        Ok(unpack(&y))
    } else {
        Err(Error::Numerical(format!(
            "fixed-point refinement did not converge (residual {rnorm:.3e})"
        )))
    }
}

/// Stable integration step for the MB flow: resolves both the Rabi scale
/// g√(1+I) and the dissipative scales.
fn mb_time_step(params: &MbParams, intensity_scale: f64) -> f64 {
    let rabi = params.g1 * (1.0 + intensity_scale).sqrt();
    let fastest = rabi
        .max(params.kappa_field)
        .max(params.delta.abs())
        .max(params.delta_f.abs())
        .max(params.eta);
    0.1 / fastest.max(1e-300)
}

/// Outcome of the dynamical stability test.
#[derive(Debug, Clone, Copy)]
pub struct StabilityReport {
    pub stability: Stability,
    pub limit_cycle: bool,
}

/// Classify a branch: slope test (dI/dη < 0 ⇒ unphysical) plus a dynamical
/// test integrating the perturbed fixed point; the dynamical test wins when
/// they disagree.
pub fn classify_stability(
    intensity: f64,
    params: &MbParams,
    options: &SolveOptions,
) -> Result<StabilityReport> {
    // slope test: track the root under a small η change
    let slope_negative = {
        let rel = options.slope_step_rel;
        let mut up = params.clone();
        up.eta = params.eta * (1.0 + rel);
        let mut down = params.clone();
        down.eta = params.eta * (1.0 - rel);
        let i_up = track_root(intensity, &up, options);
        let i_down = track_root(intensity, &down, options);
        match (i_up, i_down) {
            (Some(u), Some(d)) => u < d,
            _ => false,
        }
    };

    // dynamical test: perturb the reconstructed fixed point and integrate
    let state = reconstruct_fixed_point(intensity, params)?;
    let mut rng = ChaCha12Rng::seed_from_u64(options.seed);
    let mut draws = [0.0f64; 9];
    for d in &mut draws {
        *d = 2.0 * rng.random::<f64>() - 1.0;
    }
    let rel = |k: usize| 1.0 + options.perturbation * draws[k];
    let scale = state.alpha.norm().max(1e-6);
    let perturbed = MbState {
        alpha: state.alpha * rel(0)
            + Complex64::new(
                options.perturbation * scale * draws[7],
                options.perturbation * scale * draws[8],
            ),
        s_ge: state.s_ge * rel(1),
        s_ef: state.s_ef * rel(2),
        s_gf: state.s_gf * rel(3),
        s_gg: state.s_gg * rel(4),
        s_ee: state.s_ee * rel(5),
        s_ff: state.s_ff * rel(6),
    };
    let horizon = options.stability_horizon_over_kappa / params.kappa_field;
    let dt = mb_time_step(params, intensity);
    let mid = integrate_mb(&perturbed, params, 0.5 * horizon, dt);
    let end = integrate_mb(&mid, params, 0.5 * horizon, dt);

    let i_ref = intensity.max(1e-12);
    let rel_start = (perturbed.intensity() - intensity).abs() / i_ref;
    let rel_end = (end.intensity() - intensity).abs() / i_ref;

    if rel_end <= options.convergence_rel {
        return Ok(StabilityReport {
            stability: Stability::Stable,
            limit_cycle: false,
        });
    }
    let escaped = rel_end > 0.5 || rel_end > 20.0 * rel_start.max(options.perturbation);
    if escaped {
        return Ok(StabilityReport {
            stability: if slope_negative {
                Stability::Unphysical
            } else {
                Stability::Unstable
            },
            limit_cycle: false,
        });
    }

    // Bounded but unresolved within the horizon. This happens when a
    // relaxation rate is orders of magnitude below κ, so the perturbation
    // survives the integration window even at a stable fixed point; the
    // linearization decides. A genuinely oscillatory non-convergent branch
    // keeps an unstable eigenvalue and is flagged as a limit cycle.
    let max_re = jacobian_max_real_eigenvalue(&state, params);
    let tol = 1e-9 * params.kappa_field.max(params.g1);
    if max_re <= tol {
        return Ok(StabilityReport {
            stability: Stability::Stable,
            limit_cycle: false,
        });
    }
    Ok(StabilityReport {
        stability: if slope_negative {
            Stability::Unphysical
        } else {
            Stability::Unstable
        },
        limit_cycle: true,
    })
}

/// Largest real part over the eigenvalues of the MB flow linearized at the
/// given state (central-difference Jacobian).
fn jacobian_max_real_eigenvalue(state: &MbState, params: &MbParams) -> f64 {
    let y0 = state.to_array();
    let scale = params.kappa_field.max(params.g1);
    let mut jac = nalgebra::DMatrix::<f64>::zeros(11, 11);
    for j in 0..11 {
        let h = 1e-7 * y0[j].abs().max(1e-3);
        let mut yp = y0;
        yp[j] += h;
        let mut ym = y0;
        ym[j] -= h;
        let fp = mb_rhs(&MbState::from_array(&yp), params).to_array();
        let fm = mb_rhs(&MbState::from_array(&ym), params).to_array();
        for i in 0..11 {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac.complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
        .min(scale * 1e6) // guard against differencing blowups
}

/// Follow a root under a slightly changed η by local bisection around the
/// old intensity.
fn track_root(intensity: f64, params: &MbParams, options: &SolveOptions) -> Option<f64> {
    let f = |i: f64| -> Option<f64> {
        if params.is_neoclassical() {
            let g = neoclassical_residual_branch(i, params, NeoclassicalBranch::GroundLike);
            let v = neoclassical_residual_branch(i, params, NeoclassicalBranch::Inverted);
            // follow whichever branch the root sat on
            if g.abs() < v.abs() {
                Some(g)
            } else {
                Some(v)
            }
        } else {
            intensity_residual(i, params).ok()
        }
    };
    // expand a bracket around the old root
    let mut width = 0.02;
    for _ in 0..12 {
        let lo = intensity * (1.0 - width);
        let hi = intensity * (1.0 + width);
        let (f_lo, f_hi) = (f(lo)?, f(hi)?);
        if f_lo.signum() != f_hi.signum() {
            let wrapped = |i: f64| -> Result<f64> {
                f(i).ok_or_else(|| Error::Numerical("residual evaluation failed".into()))
            };
            return bisect_root(&wrapped, lo, hi, f_lo, options.bisect_rel).ok();
        }
        width *= 2.0;
        if width > 0.9 {
            break;
        }
    }
    None
}

/// All steady-state branches at the given parameters, classified.
pub fn solve_branches(params: &MbParams, i_max: f64, n_scan: usize) -> Result<Vec<Branch>> {
    solve_branches_with(params, i_max, n_scan, &SolveOptions::default())
}

pub fn solve_branches_with(
    params: &MbParams,
    i_max: f64,
    n_scan: usize,
    options: &SolveOptions,
) -> Result<Vec<Branch>> {
    let roots = root_intensities(params, i_max, n_scan, options)?;
    let mut branches = Vec::with_capacity(roots.len());
    for root in roots {
        let state = reconstruct_fixed_point(root, params)?;
        let residual = fixed_point_residual(&state, params);
        let report = classify_stability(root, params, options)?;
        branches.push(Branch {
            intensity: root,
            stability: report.stability,
            residual,
            limit_cycle: report.limit_cycle,
        });
    }
    Ok(branches)
}

/// Phase classification of one (Δ, η) point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseClass {
    Dim,
    Bright,
    Bistable,
}

impl PhaseClass {
    pub fn code(&self) -> char {
        match self {
            PhaseClass::Dim => 'D',
            PhaseClass::Bright => 'B',
            PhaseClass::Bistable => 'X',
        }
    }

    pub fn from_code(c: char) -> Option<PhaseClass> {
        match c {
            'D' => Some(PhaseClass::Dim),
            'B' => Some(PhaseClass::Bright),
            'X' => Some(PhaseClass::Bistable),
            _ => None,
        }
    }
}

/// Options for phase classification.
#[derive(Debug, Clone)]
pub struct PhaseOptions {
    /// Stable intensities below this are dim (photons).
    pub i_dim_threshold: f64,
    /// Stable intensities above this are bright (photons).
    pub i_bright_threshold: f64,
    /// Scan resolution per point.
    pub n_scan: usize,
    /// Intensity ceiling as a multiple of the empty-cavity response η²/κ².
    pub i_max_factor: f64,
    pub solve: SolveOptions,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        PhaseOptions {
            i_dim_threshold: 1.0,
            i_bright_threshold: 10.0,
            n_scan: 1500,
            i_max_factor: 4.0,
            solve: SolveOptions::default(),
        }
    }
}

/// Classify one point of the Δ-η plane. Bistable requires stable branches
/// on opposite sides of both thresholds; when every stable branch sits
/// between the thresholds the point is split at their geometric mean, and
/// when no stable branch exists the vacuum-started flow decides.
pub fn phase_point(
    delta: f64,
    eta: f64,
    params: &MbParams,
    options: &PhaseOptions,
) -> Result<PhaseClass> {
    let mut p = params.clone();
    p.delta = delta;
    p.eta = eta;
    if eta == 0.0 {
        return Ok(PhaseClass::Dim);
    }
    let i_empty = (eta / p.kappa_field).powi(2);
    let i_max = (options.i_max_factor * i_empty).max(100.0);
    // isolated solver singularities fall through to the dynamical
    // classification below
    let stable: Vec<f64> = solve_branches_with(&p, i_max, options.n_scan, &options.solve)
        .map(|branches| {
            branches
                .iter()
                .filter(|b| b.stability == Stability::Stable)
                .map(|b| b.intensity)
                .collect()
        })
        .unwrap_or_default();

    if !stable.is_empty() {
        let has_dim = stable.iter().any(|i| *i < options.i_dim_threshold);
        let has_bright = stable.iter().any(|i| *i > options.i_bright_threshold);
        if has_dim && has_bright {
            return Ok(PhaseClass::Bistable);
        }
        if stable.iter().all(|i| *i < options.i_dim_threshold) {
            return Ok(PhaseClass::Dim);
        }
        if stable.iter().all(|i| *i > options.i_bright_threshold) {
            return Ok(PhaseClass::Bright);
        }
        let split = (options.i_dim_threshold * options.i_bright_threshold).sqrt();
        let max_stable = stable.iter().cloned().fold(0.0f64, f64::max);
        return Ok(if max_stable >= split {
            PhaseClass::Bright
        } else {
            PhaseClass::Dim
        });
    }

    // no stable branch found: integrate from vacuum and classify the
    // long-time intensity
    let horizon = options.solve.stability_horizon_over_kappa / p.kappa_field;
    let dt = mb_time_step(&p, i_empty);
    let end = integrate_mb(&MbState::vacuum(), &p, horizon, dt);
    let split = (options.i_dim_threshold * options.i_bright_threshold).sqrt();
    Ok(if end.intensity() >= split {
        PhaseClass::Bright
    } else {
        PhaseClass::Dim
    })
}

/// Row-major phase map over the product grid.
#[derive(Debug, Clone)]
pub struct PhaseDiagram {
    pub deltas: Vec<f64>,
    pub etas: Vec<f64>,
    /// `classes[i_delta * etas.len() + i_eta]`.
    pub classes: Vec<PhaseClass>,
}

/// Evaluate [`phase_point`] on the product grid, in parallel with
/// deterministic row-major assembly.
pub fn phase_diagram(
    delta_grid: &[f64],
    eta_grid: &[f64],
    params: &MbParams,
    options: &PhaseOptions,
) -> Result<PhaseDiagram> {
    for grid in [delta_grid, eta_grid] {
        for w in grid.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidInput(
                    "phase diagram grids must be strictly increasing".into(),
                ));
            }
        }
    }
    let points: Vec<(usize, usize)> = (0..delta_grid.len())
        .flat_map(|i| (0..eta_grid.len()).map(move |j| (i, j)))
        .collect();
    let classes: Vec<PhaseClass> = points
        .par_iter()
        .map(|(i, j)| phase_point(delta_grid[*i], eta_grid[*j], params, options))
        .collect::<Result<_>>()?;
    Ok(PhaseDiagram {
        deltas: delta_grid.to_vec(),
        etas: eta_grid.to_vec(),
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn fig5_like_params() -> MbParams {
        // g/κ ≈ 132 with the device coupling 344 MHz
        let nu_g = 344e6;
        let nu_kappa = nu_g / 132.0;
        MbParams {
            g1: 2.0 * PI * nu_g,
            g2: 2.0f64.sqrt() * 2.0 * PI * nu_g,
            kappa_field: PI * nu_kappa,
            gamma1: 2.0 * PI * 1e3,
            gamma_phi1: 2.0 * PI * 50e3,
            gamma_phi2: 2.0 * PI * 100e3,
            eta: 2.0 * PI * 100e6,
            delta: -2.0 * PI * 10e6,
            delta_f: -2.0 * PI * 418e6,
            levels: MbLevels::Three,
        }
    }

    fn empty_cavity(eta: f64, delta: f64) -> MbParams {
        MbParams {
            g1: 0.0,
            g2: 0.0,
            kappa_field: PI * 8e6,
            gamma1: 2.0 * PI * 1e4,
            gamma_phi1: 0.0,
            gamma_phi2: 0.0,
            eta,
            delta,
            delta_f: 0.0,
            levels: MbLevels::Two,
        }
    }

    #[test]
    fn vacuum_is_a_fixed_point_without_drive() {
        let mut p = fig5_like_params();
        p.eta = 0.0;
        let d = mb_rhs(&MbState::vacuum(), &p);
        assert_eq!(d.alpha, Complex64::ZERO);
        assert_eq!(d.s_gg, 0.0);
        assert_eq!(d.s_ee, 0.0);
        assert_eq!(d.s_ff, 0.0);
    }

    #[test]
    fn decoupled_field_equation() {
        let mut p = fig5_like_params();
        p.g1 = 0.0;
        p.g2 = 0.0;
        let state = MbState {
            alpha: Complex64::new(1.3, -0.4),
            ..MbState::vacuum()
        };
        let d = mb_rhs(&state, &p);
        let expected = (Complex64::new(-p.kappa_field, p.delta)) * state.alpha + p.eta;
        assert!((d.alpha - expected).norm() < 1e-9 * expected.norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn population_flow_is_conserved(
            are in -3.0f64..3.0, aim in -3.0f64..3.0,
            ge_re in -0.5f64..0.5, ge_im in -0.5f64..0.5,
            ef_re in -0.5f64..0.5, ef_im in -0.5f64..0.5,
            gf_re in -0.5f64..0.5, gf_im in -0.5f64..0.5,
            pg in 0.0f64..1.0, pe in 0.0f64..1.0,
        ) {
            let p = fig5_like_params();
            let s_ff = (1.0 - pg - pe).max(-0.5);
            let state = MbState {
                alpha: Complex64::new(are, aim),
                s_ge: Complex64::new(ge_re, ge_im),
                s_ef: Complex64::new(ef_re, ef_im),
                s_gf: Complex64::new(gf_re, gf_im),
                s_gg: pg,
                s_ee: pe,
                s_ff,
            };
            let d = mb_rhs(&state, &p);
            let total = d.s_gg + d.s_ee + d.s_ff;
            let scale = [d.s_gg.abs(), d.s_ee.abs(), d.s_ff.abs(), 1.0]
                .into_iter().fold(0.0f64, f64::max);
            prop_assert!(total.abs() <= 1e-12 * scale.max(p.g1));
        }
    }

    #[test]
    fn dispersive_shift_vanishes_without_coupling() {
        let p = empty_cavity(1e6, 0.0);
        assert_eq!(dispersive_shift(3.0, &p).unwrap(), Complex64::ZERO);
    }

    #[test]
    fn dispersive_shift_saturates_at_high_intensity() {
        let p = fig5_like_params();
        let s8 = dispersive_shift(1e8, &p).unwrap().norm();
        let s10 = dispersive_shift(1e10, &p).unwrap().norm();
        assert!(s10 < s8, "|Σ| must decrease: {s10} vs {s8}");
        let p2 = MbParams {
            levels: MbLevels::Two,
            ..fig5_like_params()
        };
        let t8 = dispersive_shift(1e8, &p2).unwrap().norm();
        let t10 = dispersive_shift(1e10, &p2).unwrap().norm();
        assert!(t10 < t8);
    }

    #[test]
    fn eliminated_state_is_a_fixed_point() {
        // back-substitution residual of the linear solve
        for levels in [MbLevels::Two, MbLevels::Three] {
            let p = MbParams {
                levels,
                ..fig5_like_params()
            };
            for intensity in [1e-4f64, 1.0, 50.0, 2e3] {
                let alpha = Complex64::new(intensity.sqrt(), 0.0);
                let state = steady_state_at_alpha(alpha, &p).unwrap();
                let rhs = mb_rhs(&state, &p);
                let scale = p.kappa_field.max(p.g1);
                // the polarization and population equations are solved
                // exactly; only the field equation keeps a residual
                for v in [rhs.s_ge.norm(), rhs.s_ef.norm(), rhs.s_gf.norm(),
                          rhs.s_gg.abs(), rhs.s_ee.abs(), rhs.s_ff.abs()] {
                    assert!(v <= 1e-8 * scale, "residual {v:.3e} at I={intensity}");
                }
            }
        }
    }

    #[test]
    fn dispersive_shift_is_phase_invariant() {
        // independent oracle: solve the raw steady-state linear system in
        // (s_ge, s_ef, s_gf, populations) at a phased amplitude
        let p = fig5_like_params();
        let intensity = 37.0;
        let sigma_ref = dispersive_shift(intensity, &p).unwrap();
        let s = intensity.sqrt();
        // quarter-turn phases keep |α|² bit-identical, so the strict bound
        // applies; Σ is a small difference of large terms, hence the
        // term-scale normalization
        for alpha in [
            Complex64::new(0.0, s),
            Complex64::new(-s, 0.0),
            Complex64::new(0.0, -s),
        ] {
            let state = steady_state_at_alpha(alpha, &p).unwrap();
            let sigma = -(p.g1 * state.s_ge + p.g2 * state.s_ef) / alpha;
            let term_scale =
                (p.g1 * state.s_ge.norm() + p.g2 * state.s_ef.norm()) / alpha.norm();
            assert!(
                (sigma - sigma_ref).norm() <= 1e-12 * term_scale,
                "Σ changed with the field phase: {:.3e} vs scale {:.3e}",
                (sigma - sigma_ref).norm(),
                term_scale
            );
            let rhs = mb_rhs(&state, &p);
            assert!(rhs.s_ge.norm() <= 1e-8 * p.g1);
        }
        // generic phases perturb |α|² at the ulp level, amplified by the
        // conditioning of the eliminated system
        for phi in [0.3, 1.2, 2.9, 4.4, 5.9] {
            let alpha = Complex64::from_polar(s, phi);
            let state = steady_state_at_alpha(alpha, &p).unwrap();
            let sigma = -(p.g1 * state.s_ge + p.g2 * state.s_ef) / alpha;
            assert!(
                (sigma - sigma_ref).norm() <= 1e-6 * sigma_ref.norm(),
                "Σ drifted far beyond conditioning: {:.3e}",
                (sigma - sigma_ref).norm()
            );
        }
    }

    #[test]
    fn residual_limits() {
        let p = empty_cavity(0.4 * PI * 8e6, 0.0);
        // I = 0 with drive → -η²
        assert_relative_eq!(
            intensity_residual(0.0, &p).unwrap(),
            -p.eta * p.eta,
            max_relative = 1e-12
        );
        // unique zero at (η/κ)²
        let i_root = (p.eta / p.kappa_field).powi(2);
        let r = intensity_residual(i_root, &p).unwrap();
        assert!(r.abs() <= 1e-9 * p.eta * p.eta);
    }

    #[test]
    fn empty_cavity_has_exactly_one_branch() {
        let p = empty_cavity(0.7 * PI * 8e6, 2.0 * PI * 1.5e6);
        let branches = solve_branches(&p, 100.0, 1500).unwrap();
        assert_eq!(branches.len(), 1);
        let expected = p.eta * p.eta / (p.kappa_field.powi(2) + p.delta.powi(2));
        assert_relative_eq!(branches[0].intensity, expected, max_relative = 1e-8);
        assert_eq!(branches[0].stability, Stability::Stable);
        assert!(branches[0].residual < 1e-8);
    }

    #[test]
    fn fig5_regime_has_three_branches_two_stable() {
        // the bistable window of the 3-level semiclassical system at these
        // rates sits near η/2π ≈ 40-60 MHz
        let mut p = fig5_like_params();
        p.eta = 2.0 * PI * 50e6;
        let i_max = 4.0 * (p.eta / p.kappa_field).powi(2);
        let branches = solve_branches(&p, i_max, 2000).unwrap();
        assert_eq!(
            branches.len(),
            3,
            "expected threefold solution, got {branches:?}"
        );
        let stable = branches
            .iter()
            .filter(|b| b.stability == Stability::Stable)
            .count();
        assert_eq!(stable, 2, "expected two stable branches: {branches:?}");
        // the middle branch is the rejected one
        assert_ne!(branches[1].stability, Stability::Stable);
        for b in &branches {
            assert!(b.residual < 1e-8, "branch residual {:.3e}", b.residual);
        }
    }

    #[test]
    fn neoclassical_critical_drive() {
        // two-level, γ = 0, Δ = 0: the bright root exists only above
        // η/g = 0.5, at I = (η² - g²/4)/κ²
        let g1 = 2.0 * PI * 100e6;
        let p = |eta: f64| MbParams {
            g1,
            g2: 0.0,
            kappa_field: PI * 2e6,
            gamma1: 0.0,
            gamma_phi1: 0.0,
            gamma_phi2: 0.0,
            eta,
            delta: 0.0,
            delta_f: 0.0,
            levels: MbLevels::Two,
        };
        let below = root_intensities(&p(0.45 * g1), 1e8, 2000, &SolveOptions::default()).unwrap();
        assert!(below.is_empty(), "no root below the critical drive: {below:?}");
        let above = root_intensities(&p(0.55 * g1), 1e8, 2000, &SolveOptions::default()).unwrap();
        assert_eq!(above.len(), 1, "one bright root above: {above:?}");
        let eta = 0.55 * g1;
        let expected = (eta * eta - g1 * g1 / 4.0) / (PI * 2e6).powi(2);
        assert_relative_eq!(above[0], expected, max_relative = 1e-6);
    }

    #[test]
    fn two_level_reduction_matches_independent_transcription() {
        // independent oracle: the two-level equations written out directly
        let oracle = |state: &MbState, p: &MbParams| -> (Complex64, Complex64, f64, f64) {
            let i = Complex64::i();
            let da = (i * p.delta - p.kappa_field) * state.alpha + p.eta - p.g1 * state.s_ge;
            let dge = (i * p.delta - p.gamma1) * state.s_ge
                - p.g1 * (state.s_ee - state.s_gg) * state.alpha;
            let dgg = p.gamma1 * state.s_ee - 2.0 * p.g1 * (state.alpha.conj() * state.s_ge).re;
            let dee = 2.0 * p.g1 * (state.alpha.conj() * state.s_ge).re - p.gamma1 * state.s_ee;
            (da, dge, dgg, dee)
        };
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let p = MbParams {
            levels: MbLevels::Two,
            ..fig5_like_params()
        };
        for _ in 0..50 {
            let mut r = || 2.0 * rng.random::<f64>() - 1.0;
            let state = MbState {
                alpha: Complex64::new(3.0 * r(), 3.0 * r()),
                s_ge: Complex64::new(0.5 * r(), 0.5 * r()),
                s_ef: Complex64::ZERO,
                s_gf: Complex64::ZERO,
                s_gg: 0.5 + 0.5 * r(),
                s_ee: 0.5 + 0.5 * r(),
                s_ff: 0.0,
            };
            let d = mb_rhs(&state, &p);
            let (da, dge, dgg, dee) = oracle(&state, &p);
            let scale = p.g1 * 4.0;
            assert!((d.alpha - da).norm() <= 1e-10 * scale);
            assert!((d.s_ge - dge).norm() <= 1e-10 * scale);
            assert!((d.s_gg - dgg).abs() <= 1e-10 * scale);
            assert!((d.s_ee - dee).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn stable_branches_are_attractors() {
        // 10 random parameter draws: the stable-branch set equals the
        // attractor set reached from random initial conditions
        let mut rng = ChaCha12Rng::seed_from_u64(4242);
        let mut checked = 0;
        for draw in 0..10 {
            let nu_kappa = 2e6 + 6e6 * rng.random::<f64>();
            let kappa = PI * nu_kappa;
            let g_over_k = 3.0 + 17.0 * rng.random::<f64>();
            let g1 = 2.0 * PI * nu_kappa * g_over_k;
            let levels = if draw % 2 == 0 {
                MbLevels::Two
            } else {
                MbLevels::Three
            };
            let p = MbParams {
                g1,
                g2: 2.0f64.sqrt() * g1,
                kappa_field: kappa,
                gamma1: kappa * (0.2 + 0.3 * rng.random::<f64>()),
                gamma_phi1: kappa * 0.1 * rng.random::<f64>(),
                gamma_phi2: kappa * 0.1 * rng.random::<f64>(),
                eta: g1 * (0.05 + 0.25 * rng.random::<f64>()),
                delta: g1 * 0.05 * (2.0 * rng.random::<f64>() - 1.0),
                delta_f: -2.0 * PI * 418e6,
                levels,
            };
            let i_max = 4.0 * (p.eta / p.kappa_field).powi(2) + 10.0;
            let mut opts = SolveOptions::default();
            opts.stability_horizon_over_kappa = 200.0;
            let branches = solve_branches_with(&p, i_max, 1500, &opts).unwrap();
            let stable: Vec<f64> = branches
                .iter()
                .filter(|b| b.stability == Stability::Stable)
                .map(|b| b.intensity)
                .collect();
            if stable.is_empty() {
                continue;
            }
            checked += 1;

            let mut reached: Vec<f64> = Vec::new();
            for _ in 0..20 {
                // log-uniform intensities cover basins that live at
                // log-spaced scales
                let r_i = i_max * 10f64.powf(-7.0 * rng.random::<f64>());
                let phase = 2.0 * PI * rng.random::<f64>();
                let pg = rng.random::<f64>();
                let state = MbState {
                    alpha: Complex64::from_polar(r_i.sqrt(), phase),
                    s_ge: Complex64::new(
                        0.2 * (2.0 * rng.random::<f64>() - 1.0),
                        0.2 * (2.0 * rng.random::<f64>() - 1.0),
                    ),
                    s_ef: Complex64::ZERO,
                    s_gf: Complex64::ZERO,
                    s_gg: pg,
                    s_ee: 1.0 - pg,
                    s_ff: 0.0,
                };
                reached.push(attractor_intensity(&state, &p, 2000.0, 1e-10));
            }
            for i_final in &reached {
                let matched = stable
                    .iter()
                    .any(|s| (i_final - s).abs() <= 1e-6 * s.max(1e-9) + 1e-9);
                assert!(
                    matched,
                    "draw {draw}: trajectory ended at {i_final:.6e}, stable set {stable:?}"
                );
            }
            for s in &stable {
                let hit = reached
                    .iter()
                    .any(|i_final| (i_final - s).abs() <= 1e-6 * s.max(1e-9) + 1e-9);
                assert!(
                    hit,
                    "draw {draw}: stable branch {s:.6e} never reached; finals {reached:?}"
                );
            }
        }
        assert!(checked >= 5, "too few draws with stable branches");
    }

    #[test]
    fn perturbed_stable_branch_decays() {
        let p = empty_cavity(0.6 * PI * 8e6, 0.0);
        let branches = solve_branches(&p, 100.0, 1500).unwrap();
        let i0 = branches[0].intensity;
        let state = reconstruct_fixed_point(i0, &p).unwrap();
        let perturbed = MbState {
            alpha: state.alpha * 1.001,
            ..state
        };
        let dt = mb_time_step(&p, i0);
        let d_start = (perturbed.intensity() - i0).abs();
        let mid = integrate_mb(&perturbed, &p, 10.0 / p.kappa_field, dt);
        let end = integrate_mb(&mid, &p, 10.0 / p.kappa_field, dt);
        let d_mid = (mid.intensity() - i0).abs();
        let d_end = (end.intensity() - i0).abs();
        assert!(d_mid < d_start);
        assert!(d_end < d_mid);
    }

    #[test]
    fn phase_point_limits() {
        let p = fig5_like_params();
        let opts = PhaseOptions::default();
        // η → 0 is dim
        assert_eq!(
            phase_point(p.delta, 1e-3 * p.kappa_field, &p, &opts).unwrap(),
            PhaseClass::Dim
        );
        // the empty cavity is bright above threshold and never bistable
        let pe = empty_cavity(20.0 * PI * 8e6, 0.0);
        assert_eq!(
            phase_point(0.0, pe.eta, &pe, &opts).unwrap(),
            PhaseClass::Bright
        );
    }

    #[test]
    fn phase_diagram_single_point_matches_phase_point() {
        let p = fig5_like_params();
        let opts = PhaseOptions::default();
        let map = phase_diagram(&[p.delta], &[p.eta], &p, &opts).unwrap();
        assert_eq!(map.classes.len(), 1);
        assert_eq!(
            map.classes[0],
            phase_point(p.delta, p.eta, &p, &opts).unwrap()
        );
    }

    #[test]
    fn phase_diagram_refinement_is_consistent() {
        let p = fig5_like_params();
        let opts = PhaseOptions::default();
        let coarse_d: Vec<f64> = vec![-2.0 * PI * 10e6, 0.0];
        let coarse_e: Vec<f64> = vec![p.eta * 0.5, p.eta];
        let fine_d: Vec<f64> = vec![-2.0 * PI * 10e6, -PI * 10e6, 0.0];
        let fine_e: Vec<f64> = vec![p.eta * 0.5, p.eta * 0.75, p.eta];
        let coarse = phase_diagram(&coarse_d, &coarse_e, &p, &opts).unwrap();
        let fine = phase_diagram(&fine_d, &fine_e, &p, &opts).unwrap();
        for (ic, dc) in coarse_d.iter().enumerate() {
            for (jc, ec) in coarse_e.iter().enumerate() {
                let i_f = fine_d.iter().position(|v| v == dc).unwrap();
                let j_f = fine_e.iter().position(|v| v == ec).unwrap();
                assert_eq!(
                    coarse.classes[ic * coarse_e.len() + jc],
                    fine.classes[i_f * fine_e.len() + j_f]
                );
            }
        }
    }
}
