//! Rotating-frame Hamiltonian and dissipation channels for a driven cavity
//! mode coupled to a multi-level transmon.
//!
//! All rates are angular (rad/s). `kappa_field` is the field (amplitude)
//! decay rate of the mode: half the angular FWHM linewidth. User-facing
//! linewidths in Hz convert as `kappa_field = π · ν_κ` (see the config
//! module); every other rate ν converts as `2π · ν`.

use num_complex::Complex64;
use std::fmt;

use crate::error::{Error, Result};
use crate::hilbert::{
    fock_annihilation, fock_number, level_transition, tensor, transmon_lowering, Dims,
    SparseOperator,
};

/// Ratio EJ/EC below which the asymptotic charge-dispersion formula is
/// outside its validity range.
pub const CHARGE_DISPERSION_EJ_EC_MIN: f64 = 20.0;

/// Per-level dephasing model.
#[derive(Debug, Clone, PartialEq)]
pub enum DephasingSpec {
    /// No dephasing channels (baseline).
    None,
    /// Rates grow linearly with the level index: γ_φ,v = v · γ_φ1 / divisor,
    /// γ_φ,0 = 0. The conventional divisor is 8; it is exposed because the
    /// convention is not uniquely determined.
    FluxLinear { divisor: f64 },
    /// Rates proportional to the charge dispersion of the transmon levels,
    /// normalized to level 1: γ_φ,v = γ_φ1 · |ε_v/ε_1|. The ground level has
    /// ε_0 ≠ 0 and gets its own channel unless `include_ground` is false.
    ChargeDispersion {
        /// Josephson energy in Hz·h (i.e. E_J/h).
        ej_hz: f64,
        /// Charging energy in Hz·h (i.e. E_C/h).
        ec_hz: f64,
        include_ground: bool,
    },
}

impl Default for DephasingSpec {
    fn default() -> Self {
        DephasingSpec::FluxLinear { divisor: 8.0 }
    }
}

/// Physical parameters of the driven mode + transmon system.
///
/// The 0-1 transmon transition is taken resonant with the mode; `delta` is
/// the drive detuning from that common frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Coupling rate of the 0-1 transition (rad/s); higher transitions
    /// couple as g_{u+1} = √(u+1) g1.
    pub g1: f64,
    /// Field (amplitude) decay rate of the mode (rad/s), = π · ν_κ for a
    /// linewidth ν_κ in Hz.
    pub kappa_field: f64,
    /// Transmon relaxation rate, equal for every adjacent-level transition
    /// (rad/s).
    pub gamma1: f64,
    /// Dephasing rate parameter of level 1 (rad/s); the per-level rates are
    /// derived from it according to `dephasing`.
    pub gamma_phi1: f64,
    /// Drive strength (rad/s).
    pub eta: f64,
    /// Drive detuning Δ = ω - ω_R (rad/s).
    pub delta: f64,
    /// Anharmonicity Δ_an = h2 - 2 h1 (rad/s), negative for a transmon.
    /// Unused when n_levels = 2.
    pub delta_an: f64,
    /// Thermal photon number of the mode bath.
    pub n_th: f64,
    /// Number of transmon levels kept.
    pub n_levels: usize,
    pub dephasing: DephasingSpec,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_field > 0.0) {
            return Err(Error::InvalidInput(format!(
                "kappa_field must be > 0, got {}",
                self.kappa_field
            )));
        }
        if self.gamma1 < 0.0 {
            return Err(Error::InvalidInput(format!(
                "gamma1 must be >= 0, got {}",
                self.gamma1
            )));
        }
        if self.gamma_phi1 < 0.0 {
            return Err(Error::InvalidInput(format!(
                "gamma_phi1 must be >= 0, got {}",
                self.gamma_phi1
            )));
        }
        if self.n_th < 0.0 {
            return Err(Error::InvalidInput(format!(
                "n_th must be >= 0, got {}",
                self.n_th
            )));
        }
        if self.n_levels < 2 {
            return Err(Error::InvalidInput(format!(
                "n_levels must be >= 2, got {}",
                self.n_levels
            )));
        }
        if let DephasingSpec::FluxLinear { divisor } = self.dephasing {
            if !(divisor > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "flux-linear dephasing divisor must be > 0, got {divisor}"
                )));
            }
        }
        if let DephasingSpec::ChargeDispersion { ej_hz, ec_hz, .. } = self.dephasing {
            if ej_hz <= 0.0 || ec_hz <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "charge-dispersion dephasing needs EJ, EC > 0, got EJ={ej_hz}, EC={ec_hz}"
                )));
            }
        }
        Ok(())
    }
}

/// Label of a dissipation channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Photon loss L = √(2(n_th+1)κ) a.
    CavityDecay,
    /// Thermal photon absorption L = √(2 n_th κ) a†; present only for n_th > 0.
    CavityExcitation,
    /// Transmon relaxation |upper-1⟩⟨upper|.
    Relaxation { upper: usize },
    /// π phase flip of the given level.
    Dephasing { level: usize },
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::CavityDecay => write!(f, "cavity-decay"),
            Channel::CavityExcitation => write!(f, "cavity-excitation"),
            Channel::Relaxation { upper } => write!(f, "relax-{}-{}", upper, upper - 1),
            Channel::Dephasing { level } => write!(f, "dephase-{level}"),
        }
    }
}

/// A jump operator together with its channel label.
#[derive(Debug, Clone)]
pub struct JumpOperator {
    pub op: SparseOperator,
    pub channel: Channel,
}

/// Rotating-frame diagonal energy of transmon level u:
/// -uΔ + Δ_an · u(u-1)/2, which reproduces -Δ at u=1 and -2Δ+Δ_an at u=2.
pub fn transmon_diagonal(params: &SystemParams, u: usize) -> Result<f64> {
    if u >= params.n_levels {
        return Err(Error::InvalidDimension(format!(
            "level index {u} outside {} levels",
            params.n_levels
        )));
    }
    let uf = u as f64;
    Ok(-uf * params.delta + params.delta_an * uf * (uf - 1.0) / 2.0)
}

/// Time-independent rotating-frame Hamiltonian:
/// Σ_u d_u |u⟩⟨u| + i Σ_u (g_{u+1} a|u+1⟩⟨u| - h.c.) - Δ a†a + iη(a† - a).
pub fn build_hamiltonian(params: &SystemParams, dims: Dims) -> Result<SparseOperator> {
    params.validate()?;
    if dims.n_levels() != params.n_levels {
        return Err(Error::DimensionMismatch(format!(
            "dims carry {} transmon levels but params ask for {}",
            dims.n_levels(),
            params.n_levels
        )));
    }
    let nl = dims.n_levels();
    let nf = dims.n_fock();
    let i = Complex64::i();

    let id_t = SparseOperator::identity(nl);
    let id_f = SparseOperator::identity(nf);
    let a = fock_annihilation(nf)?;
    let n_op = fock_number(nf)?;

    // transmon diagonal
    let diag: Vec<Complex64> = (0..nl)
        .map(|u| Complex64::new(transmon_diagonal(params, u).expect("u in range"), 0.0))
        .collect();
    let mut h = tensor(&SparseOperator::diagonal(&diag), &id_f);

    // mode detuning -Δ a†a
    h = h.add(&tensor(&id_t, &n_op).scaled(Complex64::new(-params.delta, 0.0)))?;

    // interaction i Σ (g_{u+1} a |u+1⟩⟨u| - h.c.) with raise = S†
    if params.g1 > 0.0 {
        let lower = transmon_lowering(nl, params.g1)?;
        let raise = lower.adjoint();
        let int = tensor(&raise, &a)
            .scaled(i)
            .add(&tensor(&lower, &a.adjoint()).scaled(-i))?;
        h = h.add(&int)?;
    }

    // drive iη(a† - a), η real
    if params.eta != 0.0 {
        let eta = Complex64::new(params.eta, 0.0);
        let drive = tensor(&id_t, &a.adjoint())
            .scaled(i * eta)
            .add(&tensor(&id_t, &a).scaled(-i * eta.conj()))?;
        h = h.add(&drive)?;
    }

    Ok(h)
}

/// Per-level dephasing rates γ_φ,v for v = 0..n_levels-1 according to the
/// chosen model.
pub fn dephasing_rates(params: &SystemParams) -> Result<Vec<f64>> {
    let nl = params.n_levels;
    match &params.dephasing {
        DephasingSpec::None => Ok(vec![0.0; nl]),
        DephasingSpec::FluxLinear { divisor } => Ok((0..nl)
            .map(|v| v as f64 * params.gamma_phi1 / divisor)
            .collect()),
        DephasingSpec::ChargeDispersion {
            ej_hz,
            ec_hz,
            include_ground,
        } => {
            let weights = charge_dispersion_weights(*ej_hz, *ec_hz, nl)?;
            let mut rates: Vec<f64> = weights.iter().map(|w| params.gamma_phi1 * w).collect();
            if !include_ground {
                rates[0] = 0.0;
            }
            Ok(rates)
        }
    }
}

/// Jump operators of the three dissipation channels. Channels with zero rate
/// are omitted.
pub fn build_jump_operators(params: &SystemParams, dims: Dims) -> Result<Vec<JumpOperator>> {
    params.validate()?;
    if dims.n_levels() != params.n_levels {
        return Err(Error::DimensionMismatch(format!(
            "dims carry {} transmon levels but params ask for {}",
            dims.n_levels(),
            params.n_levels
        )));
    }
    let nl = dims.n_levels();
    let nf = dims.n_fock();
    let id_t = SparseOperator::identity(nl);
    let id_f = SparseOperator::identity(nf);
    let a = fock_annihilation(nf)?;

    let mut jumps = Vec::new();

    // mode decay L- = √(2(n_th+1)κ) a
    let rate_down = 2.0 * (params.n_th + 1.0) * params.kappa_field;
    jumps.push(JumpOperator {
        op: tensor(&id_t, &a).scaled(Complex64::new(rate_down.sqrt(), 0.0)),
        channel: Channel::CavityDecay,
    });

    // thermal absorption L+ = √(2 n_th κ) a†, only when n_th > 0
    if params.n_th > 0.0 {
        let rate_up = 2.0 * params.n_th * params.kappa_field;
        jumps.push(JumpOperator {
            op: tensor(&id_t, &a.adjoint()).scaled(Complex64::new(rate_up.sqrt(), 0.0)),
            channel: Channel::CavityExcitation,
        });
    }

    // transmon relaxation, one operator per adjacent pair, equal rates
    if params.gamma1 > 0.0 {
        let amp = Complex64::new(params.gamma1.sqrt(), 0.0);
        for upper in 1..nl {
            let op = tensor(&level_transition(nl, upper - 1, upper)?, &id_f).scaled(amp);
            jumps.push(JumpOperator {
                op,
                channel: Channel::Relaxation { upper },
            });
        }
    }

    // dephasing L_φ,v = √γ_φ,v (1 - 2|v⟩⟨v|)
    let rates = dephasing_rates(params)?;
    for (v, &rate) in rates.iter().enumerate() {
        if rate > 0.0 {
            let proj = level_transition(nl, v, v)?;
            let flip = SparseOperator::identity(nl)
                .add(&proj.scaled(Complex64::new(-2.0, 0.0)))?;
            jumps.push(JumpOperator {
                op: tensor(&flip, &id_f).scaled(Complex64::new(rate.sqrt(), 0.0)),
                channel: Channel::Dephasing { level: v },
            });
        }
    }

    Ok(jumps)
}

/// Non-Hermitian effective Hamiltonian H_eff = H - (i/2) Σ L†L.
pub fn effective_hamiltonian(h: &SparseOperator, jumps: &[JumpOperator]) -> Result<SparseOperator> {
    let mut h_eff = h.clone();
    let half_i = Complex64::new(0.0, -0.5);
    for j in jumps {
        if j.op.rows() != h.rows() || j.op.cols() != h.cols() {
            return Err(Error::DimensionMismatch(format!(
                "jump operator {}x{} vs Hamiltonian {}x{}",
                j.op.rows(),
                j.op.cols(),
                h.rows(),
                h.cols()
            )));
        }
        let ll = j.op.adjoint().matmul(&j.op)?;
        h_eff = h_eff.add(&ll.scaled(half_i))?;
    }
    Ok(h_eff)
}

/// Relative charge-dispersion weights |ε_v/ε_1| for v = 0..n_levels-1,
/// from the asymptotic transmon formula
/// ε_m ∝ (-1)^m (2^(4m+5)/m!) √(2/π) (EJ/2EC)^(m/2+3/4) e^(-√(8 EJ/EC)),
/// evaluated in log space. Level 1 normalizes to exactly 1.
pub fn charge_dispersion_weights(ej_hz: f64, ec_hz: f64, n_levels: usize) -> Result<Vec<f64>> {
    if ej_hz <= 0.0 || ec_hz <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "charge dispersion needs EJ, EC > 0, got EJ={ej_hz}, EC={ec_hz}"
        )));
    }
    let ratio = ej_hz / (2.0 * ec_hz); // EJ/2EC
    let ln2 = std::f64::consts::LN_2;
    let ln_eps = |m: usize| -> f64 {
        let mf = m as f64;
        let ln_fact: f64 = (1..=m).map(|k| (k as f64).ln()).sum();
        (4.0 * mf + 5.0) * ln2 - ln_fact + (mf / 2.0 + 0.75) * ratio.ln()
        // the √(2/π) and e^(-√(8EJ/EC)) factors cancel in the ratio to ε_1
    };
    let ln_e1 = ln_eps(1);
    Ok((0..n_levels).map(|m| (ln_eps(m) - ln_e1).exp()).collect())
}

/// Whether the asymptotic charge-dispersion formula is inside its validity
/// range (EJ/EC > 20). Callers surface a warning when this is false.
pub fn charge_dispersion_asymptotic_ok(ej_hz: f64, ec_hz: f64) -> bool {
    ec_hz > 0.0 && ej_hz / ec_hz > CHARGE_DISPERSION_EJ_EC_MIN
}
