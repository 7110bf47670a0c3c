//! Adaptive quantum-jump Monte Carlo trajectory engine.
//!
//! A trajectory propagates |ψ⟩ under the non-Hermitian H_eff with an
//! embedded Dormand-Prince 5(4) stepper. A uniform deviate r ∈ (0,1) is
//! drawn; when ‖ψ‖² crosses r the jump time is located by bisection inside
//! the accepted step, a channel i is selected with probability
//! ⟨ψ|L_i†L_i|ψ⟩ / Σ_j ⟨ψ|L_j†L_j|ψ⟩, L_i is applied, the state is
//! renormalized and r redrawn. Observables are recorded on a uniform grid.
//!
//! Reproducibility: each trajectory owns a ChaCha12 stream seeded with a
//! single u64; ensembles derive trajectory k's seed as
//! `seed_base ^ splitmix64(k)`, so results are independent of worker count
//! and execution order. The generator choice is pinned and never silently
//! changed.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::{
    fock_annihilation, fock_number, level_transition, tensor, top_fock_population, Dims,
    SparseOperator, TRUNCATION_POPULATION_LIMIT,
};
use crate::model::{build_hamiltonian, build_jump_operators, effective_hamiltonian, Channel,
    JumpOperator, SystemParams};
use crate::telegraph::{SeriesUnit, TimeSeries};

/// Norm² below which propagation without a resolved jump is aborted.
const NORM_UNDERFLOW: f64 = 1e-150;

/// Settings for one trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryConfig {
    /// Total propagation time (s).
    pub t_final: f64,
    /// Observable sampling interval (s); the conventional choice is
    /// 1/kappa_field.
    pub sample_interval: f64,
    /// Relative per-step propagation error tolerance on the unnormalized
    /// state.
    pub step_tolerance: f64,
    /// Hard cap on the step size (s).
    pub dt_max: f64,
    /// Seed of the trajectory's RNG stream.
    pub seed: u64,
    /// Initial basis state index (u * n_fock + n); ground ⊗ vacuum is 0.
    pub initial_state: usize,
}

impl TrajectoryConfig {
    /// Defaults for the given system: sampling at 1/kappa_field,
    /// tolerance 1e-6, dt_max = sample interval.
    pub fn for_params(params: &SystemParams, t_final: f64, seed: u64) -> Self {
        let sample_interval = 1.0 / params.kappa_field;
        TrajectoryConfig {
            t_final,
            sample_interval,
            step_tolerance: 1e-6,
            dt_max: sample_interval,
            seed,
            initial_state: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) {
            return Err(Error::InvalidInput(format!(
                "t_final must be > 0, got {}",
                self.t_final
            )));
        }
        if !(self.sample_interval > 0.0) || self.sample_interval > self.t_final {
            return Err(Error::InvalidInput(format!(
                "sample_interval must be in (0, t_final], got {}",
                self.sample_interval
            )));
        }
        if !(self.step_tolerance > 0.0 && self.step_tolerance < 1e-2) {
            return Err(Error::InvalidInput(format!(
                "step_tolerance must be in (0, 1e-2), got {}",
                self.step_tolerance
            )));
        }
        if !(self.dt_max > 0.0) {
            return Err(Error::InvalidInput(format!(
                "dt_max must be > 0, got {}",
                self.dt_max
            )));
        }
        Ok(())
    }
}

/// Sampled observables and jump log of one trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    /// Sample times (s), uniformly spaced by the sample interval.
    pub times: Vec<f64>,
    /// ⟨a†a⟩ at each sample.
    pub n_photon: Vec<f64>,
    /// Per-level populations, indexed `populations[u][sample]`.
    pub populations: Vec<Vec<f64>>,
    /// ⟨a⟩ at each sample.
    pub alpha: Vec<Complex64>,
    /// (time, channel) of every applied jump.
    pub jumps: Vec<(f64, Channel)>,
    /// Set when the top Fock level held more than 1e-6 population at any
    /// sample (truncation leakage).
    pub truncation_flag: bool,
}

impl TrajectoryRecord {
    pub fn n_levels(&self) -> usize {
        self.populations.len()
    }
}

/// splitmix64 mixing function; trajectory k of an ensemble uses seed
/// `seed_base ^ splitmix64(k)`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trajectory `k` in an ensemble with base seed `seed_base`.
pub fn derive_seed(seed_base: u64, k: u64) -> u64 {
    seed_base ^ splitmix64(k)
}

struct Rk45Workspace {
    k: [Vec<Complex64>; 7],
    tmp: Vec<Complex64>,
    y_new: Vec<Complex64>,
    y_err: Vec<Complex64>,
}

impl Rk45Workspace {
    fn new(dim: usize) -> Self {
        Rk45Workspace {
            k: std::array::from_fn(|_| vec![Complex64::ZERO; dim]),
            tmp: vec![Complex64::ZERO; dim],
            y_new: vec![Complex64::ZERO; dim],
            y_err: vec![Complex64::ZERO; dim],
        }
    }
}

// Dormand-Prince 5(4) tableau (time-independent generator, so the c
// nodes are not needed)
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Adaptive propagator for dψ/dt = G ψ with G = -i H_eff.
struct Propagator<'a> {
    gen: &'a SparseOperator,
    tol: f64,
    dt_max: f64,
    h_next: f64,
}

impl<'a> Propagator<'a> {
    fn new(gen: &'a SparseOperator, tol: f64, dt_max: f64) -> Self {
        Propagator {
            gen,
            tol,
            dt_max,
            h_next: dt_max,
        }
    }

    /// Initial step from the generator's action on the state.
    fn prime(&mut self, y: &[Complex64], ws: &mut Rk45Workspace) {
        self.gen.apply_into(y, &mut ws.k[0]);
        let ynorm = norm(y).max(1e-300);
        let fnorm = norm(&ws.k[0]);
        let scale = if fnorm > 0.0 { ynorm / fnorm } else { self.dt_max };
        self.h_next = (0.01 * scale).min(self.dt_max);
    }

    /// One accepted RK45 step from `y` of size at most `h_cap`; returns the
    /// step actually taken. `y` is advanced in place.
    fn step(&mut self, y: &mut Vec<Complex64>, h_cap: f64, ws: &mut Rk45Workspace) -> f64 {
        let dim = y.len();
        let mut h = self.h_next.min(h_cap).min(self.dt_max);
        loop {
            self.gen.apply_into(y, &mut ws.k[0]);
            for stage in 1..7 {
                for i in 0..dim {
                    let mut acc = Complex64::ZERO;
                    for (j, a) in DP_A[stage].iter().enumerate().take(stage) {
                        if *a != 0.0 {
                            acc += ws.k[j][i] * *a;
                        }
                    }
                    ws.tmp[i] = y[i] + acc * h;
                }
                let (head, tail) = ws.k.split_at_mut(stage);
                let _ = head;
                self.gen.apply_into(&ws.tmp, &mut tail[0]);
            }
            // 5th-order solution is the last stage evaluation point
            ws.y_new.copy_from_slice(&ws.tmp);
            for i in 0..dim {
                let mut e = Complex64::ZERO;
                for (j, c) in DP_E.iter().enumerate() {
                    if *c != 0.0 {
                        e += ws.k[j][i] * *c;
                    }
                }
                ws.y_err[i] = e * h;
            }
            let err = norm(&ws.y_err) / norm(&ws.y_new).max(1e-300);
            if err <= self.tol {
                let grow = if err > 0.0 {
                    0.9 * (self.tol / err).powf(0.2)
                } else {
                    5.0
                };
                self.h_next = (h * grow.clamp(0.2, 5.0)).min(self.dt_max);
                std::mem::swap(y, &mut ws.y_new);
                return h;
            }
            let shrink = 0.9 * (self.tol / err).powf(0.2);
            h *= shrink.clamp(0.1, 0.9);
            if !(h > 0.0) || !h.is_finite() {
                // degenerate step control; fall back to a tiny step
                h = h_cap * 1e-12;
            }
        }
    }
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn norm_sq(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

/// Uniform deviate in the open interval (0, 1).
fn open_unit(rng: &mut ChaCha12Rng) -> f64 {
    loop {
        let r: f64 = rng.random();
        if r > 0.0 {
            return r;
        }
    }
}

struct Observables {
    n_op: SparseOperator,
    a_op: SparseOperator,
    projectors: Vec<SparseOperator>,
}

impl Observables {
    fn new(dims: Dims) -> Result<Self> {
        let id_t = SparseOperator::identity(dims.n_levels());
        let id_f = SparseOperator::identity(dims.n_fock());
        let n_op = tensor(&id_t, &fock_number(dims.n_fock())?);
        let a_op = tensor(&id_t, &fock_annihilation(dims.n_fock())?);
        let projectors = (0..dims.n_levels())
            .map(|u| Ok(tensor(&level_transition(dims.n_levels(), u, u)?, &id_f)))
            .collect::<Result<_>>()?;
        Ok(Observables {
            n_op,
            a_op,
            projectors,
        })
    }
}

fn record_sample(
    t: f64,
    psi: &[Complex64],
    obs: &Observables,
    dims: Dims,
    record: &mut TrajectoryRecord,
    scratch: &mut Vec<Complex64>,
) {
    let nsq = norm_sq(psi).max(1e-300);
    record.times.push(t);

    obs.n_op.apply_into(psi, scratch);
    let n_val: Complex64 = psi.iter().zip(scratch.iter()).map(|(a, b)| a.conj() * b).sum();
    record.n_photon.push(n_val.re / nsq);

    obs.a_op.apply_into(psi, scratch);
    let a_val: Complex64 = psi.iter().zip(scratch.iter()).map(|(a, b)| a.conj() * b).sum();
    record.alpha.push(a_val / nsq);

    for (u, p) in obs.projectors.iter().enumerate() {
        p.apply_into(psi, scratch);
        let pop: Complex64 = psi.iter().zip(scratch.iter()).map(|(a, b)| a.conj() * b).sum();
        record.populations[u].push(pop.re / nsq);
    }

    if top_fock_population(dims, psi) / nsq > TRUNCATION_POPULATION_LIMIT {
        record.truncation_flag = true;
    }
}

/// Run one quantum-jump Monte Carlo trajectory.
pub fn run_trajectory(
    params: &SystemParams,
    dims: Dims,
    config: &TrajectoryConfig,
) -> Result<TrajectoryRecord> {
    let h = build_hamiltonian(params, dims)?;
    let jumps = build_jump_operators(params, dims)?;
    run_trajectory_with_ops(&h, &jumps, dims, config).map(|(rec, _)| rec)
}

/// Trajectory propagation from prebuilt operators. Also returns ‖ψ‖² at
/// every sample (between jumps the norm is nonincreasing).
pub(crate) fn run_trajectory_with_ops(
    h: &SparseOperator,
    jumps: &[JumpOperator],
    dims: Dims,
    config: &TrajectoryConfig,
) -> Result<(TrajectoryRecord, Vec<f64>)> {
    config.validate()?;
    let dim = dims.total();
    if config.initial_state >= dim {
        return Err(Error::InvalidInput(format!(
            "initial state index {} outside dimension {dim}",
            config.initial_state
        )));
    }

    let h_eff = effective_hamiltonian(h, jumps)?;
    let gen = h_eff.scaled(Complex64::new(0.0, -1.0)); // dψ/dt = -i H_eff ψ
    let obs = Observables::new(dims)?;

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut psi = vec![Complex64::ZERO; dim];
    psi[config.initial_state] = Complex64::new(1.0, 0.0);

    let n_samples = (config.t_final / config.sample_interval).floor() as usize + 1;
    let mut record = TrajectoryRecord {
        times: Vec::with_capacity(n_samples),
        n_photon: Vec::with_capacity(n_samples),
        populations: vec![Vec::with_capacity(n_samples); dims.n_levels()],
        alpha: Vec::with_capacity(n_samples),
        jumps: Vec::new(),
        truncation_flag: false,
    };
    let mut norms = Vec::with_capacity(n_samples);

    let mut ws = Rk45Workspace::new(dim);
    let mut scratch = vec![Complex64::ZERO; dim];
    let mut prop = Propagator::new(&gen, config.step_tolerance, config.dt_max);
    prop.prime(&psi, &mut ws);

    let mut t = 0.0f64;
    record_sample(t, &psi, &obs, dims, &mut record, &mut scratch);
    norms.push(norm_sq(&psi));

    let mut r_threshold = open_unit(&mut rng);
    let mut sample_idx = 1usize;

    while sample_idx < n_samples {
        let t_sample = sample_idx as f64 * config.sample_interval;

        // propagate to the next sample boundary, handling jumps on the way
        while t < t_sample {
            let h_cap = t_sample - t;
            let psi_before = psi.clone();
            let t_before = t;
            let taken = prop.step(&mut psi, h_cap, &mut ws);
            t += taken;

            let nsq = norm_sq(&psi);
            if nsq < NORM_UNDERFLOW {
                return Err(Error::Numerical(format!(
                    "state norm underflow at t = {t:.3e} s without jump resolution"
                )));
            }
            if nsq < r_threshold {
                // jump inside (t_before, t]: bisect on ‖ψ‖² - r
                let (t_jump, psi_jump) = locate_jump(
                    &mut prop,
                    &mut ws,
                    &psi_before,
                    t_before,
                    taken,
                    r_threshold,
                    config.step_tolerance,
                );
                let channel = select_channel(&psi_jump, jumps, &mut rng, &mut scratch)?;
                psi = jumps[channel].op.apply(&psi_jump);
                let jn = norm(&psi);
                if jn <= 0.0 {
                    return Err(Error::Numerical(format!(
                        "jump produced a zero state at t = {t_jump:.3e} s"
                    )));
                }
                for v in &mut psi {
                    *v /= jn;
                }
                record.jumps.push((t_jump, jumps[channel].channel));
                t = t_jump;
                r_threshold = open_unit(&mut rng);
                prop.prime(&psi, &mut ws);
            }
        }

        record_sample(t_sample, &psi, &obs, dims, &mut record, &mut scratch);
        norms.push(norm_sq(&psi));
        sample_idx += 1;
    }

    Ok((record, norms))
}

/// Bisection for the time where ‖ψ‖² crosses `r` inside an accepted step,
/// to within `tol · step`. Returns the state at the left bracket edge
/// (norm² still ≥ r).
fn locate_jump(
    prop: &mut Propagator,
    ws: &mut Rk45Workspace,
    psi_start: &[Complex64],
    t_start: f64,
    step: f64,
    r: f64,
    tol: f64,
) -> (f64, Vec<Complex64>) {
    let mut lo = 0.0f64;
    let mut hi = step;
    let mut psi_lo = psi_start.to_vec();
    let target_width = (tol * step).max(f64::EPSILON * step);
    while hi - lo > target_width {
        let mid = 0.5 * (lo + hi);
        // integrate from the left bracket state to mid
        let mut psi_mid = psi_lo.clone();
        let mut remaining = mid - lo;
        prop.prime(&psi_mid, ws);
        while remaining > 0.0 {
            let taken = prop.step(&mut psi_mid, remaining, ws);
            remaining -= taken;
        }
        if norm_sq(&psi_mid) >= r {
            lo = mid;
            psi_lo = psi_mid;
        } else {
            hi = mid;
        }
    }
    (t_start + lo, psi_lo)
}

/// Pick a jump channel with probability ∝ ⟨ψ|L_i†L_i|ψ⟩ = ‖L_i ψ‖².
fn select_channel(
    psi: &[Complex64],
    jumps: &[JumpOperator],
    rng: &mut ChaCha12Rng,
    scratch: &mut Vec<Complex64>,
) -> Result<usize> {
    let mut weights = Vec::with_capacity(jumps.len());
    let mut total = 0.0;
    for j in jumps {
        j.op.apply_into(psi, scratch);
        let w = norm_sq(scratch);
        weights.push(w);
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::Numerical(
            "norm crossed the jump threshold but all channel rates vanish".into(),
        ));
    }
    let draw = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if draw < acc {
            return Ok(i);
        }
    }
    Ok(weights.len() - 1)
}

/// Run `n_trajectories` independent trajectories in parallel. Trajectory k
/// uses seed `derive_seed(seed_base, k)`; records come back in index order
/// regardless of worker count.
pub fn run_ensemble(
    params: &SystemParams,
    dims: Dims,
    config: &TrajectoryConfig,
    n_trajectories: usize,
    seed_base: u64,
) -> Result<Vec<TrajectoryRecord>> {
    if n_trajectories == 0 {
        return Err(Error::InvalidInput(
            "n_trajectories must be >= 1".into(),
        ));
    }
    let h = build_hamiltonian(params, dims)?;
    let jumps = build_jump_operators(params, dims)?;
    (0..n_trajectories)
        .into_par_iter()
        .map(|k| {
            let mut cfg = config.clone();
            cfg.seed = derive_seed(seed_base, k as u64);
            run_trajectory_with_ops(&h, &jumps, dims, &cfg).map(|(rec, _)| rec)
        })
        .collect()
}

/// Join the photon-number series of several records end-to-end, dropping
/// the first `discard_initial` seconds of each (ground-state initialization
/// biases the early samples toward the dim state). The time axis is re-based
/// to be continuous.
pub fn concatenate(records: &[TrajectoryRecord], discard_initial: f64) -> Result<TimeSeries> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to concatenate".into()));
    }
    let dt = records[0]
        .times
        .get(1)
        .map(|t1| t1 - records[0].times[0])
        .ok_or_else(|| Error::InvalidInput("records must hold at least 2 samples".into()))?;
    let mut values = Vec::new();
    for (idx, rec) in records.iter().enumerate() {
        let rdt = rec
            .times
            .get(1)
            .map(|t1| t1 - rec.times[0])
            .ok_or_else(|| Error::InvalidInput("records must hold at least 2 samples".into()))?;
        if (rdt - dt).abs() > 1e-9 * dt {
            return Err(Error::DimensionMismatch(format!(
                "record {idx} sampled at {rdt:.6e} s, expected {dt:.6e} s"
            )));
        }
        let skip = (discard_initial / dt).ceil() as usize;
        if skip >= rec.n_photon.len() {
            return Err(Error::InvalidInput(format!(
                "discard_initial = {discard_initial:.3e} s drops all {} samples of record {idx}",
                rec.n_photon.len()
            )));
        }
        values.extend_from_slice(&rec.n_photon[skip..]);
    }
    Ok(TimeSeries::new(0.0, dt, values, SeriesUnit::Photons))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DephasingSpec;
    use crate::steady::{propagate_master_equation, steady_state_dense};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn empty_cavity_params(eta: f64, delta: f64) -> SystemParams {
        SystemParams {
            g1: 0.0,
            kappa_field: PI * 8e6,
            gamma1: 0.0,
            gamma_phi1: 0.0,
            eta,
            delta,
            delta_an: 0.0,
            n_th: 0.0,
            n_levels: 2,
            dephasing: DephasingSpec::None,
        }
    }

    #[test]
    fn splitmix_reference_vector() {
        // reference sequence of splitmix64 from state 0
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(derive_seed(0, 0), 0xE220_A839_7B1D_CDAF);
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
    }

    #[test]
    fn dark_initial_state_stays_dark() {
        let p = empty_cavity_params(0.0, 0.0);
        let dims = Dims::new(2, 3).unwrap();
        let cfg = TrajectoryConfig::for_params(&p, 20.0 / p.kappa_field, 7);
        let rec = run_trajectory(&p, dims, &cfg).unwrap();
        assert!(rec.jumps.is_empty());
        assert!(rec.n_photon.iter().all(|n| n.abs() < 1e-12));
        assert!(!rec.truncation_flag);
        assert_eq!(rec.times.len(), 21);
    }

    #[test]
    fn driven_empty_cavity_reaches_coherent_steady_state() {
        let p = empty_cavity_params(0.4 * PI * 8e6, 0.0);
        let dims = Dims::new(2, 8).unwrap();
        let cfg = TrajectoryConfig::for_params(&p, 40.0 / p.kappa_field, 11);
        let rec = run_trajectory(&p, dims, &cfg).unwrap();
        let expected = (p.eta / p.kappa_field).powi(2);
        // discard the ring-up transient
        let tail: Vec<f64> = rec.n_photon[15..].to_vec();
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let var = tail.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / tail.len() as f64;
        let se = (var / tail.len() as f64).sqrt();
        // driven coherent states are eigenstates of the jump operator, so
        // the spread collapses to numerical noise; keep an absolute floor
        assert!(
            (mean - expected).abs() <= (3.0 * se).max(1e-6 * expected),
            "mean {mean} vs expected {expected} (se {se})"
        );
    }

    #[test]
    fn photon_decay_jump_times_are_exponential() {
        // single photon with η = 0: survival probability e^(-2κt)
        let p = empty_cavity_params(0.0, 0.0);
        let dims = Dims::new(2, 3).unwrap();
        let n_seeds = 400;
        let mut jump_times = Vec::with_capacity(n_seeds);
        for k in 0..n_seeds {
            let mut cfg = TrajectoryConfig::for_params(&p, 12.0 / p.kappa_field, 0);
            cfg.seed = derive_seed(0xDECAF, k as u64);
            cfg.initial_state = dims.index(0, 1);
            let rec = run_trajectory(&p, dims, &cfg).unwrap();
            assert_eq!(rec.jumps.len(), 1, "exactly one decay expected");
            jump_times.push(rec.jumps[0].0);
        }
        jump_times.sort_by(f64::total_cmp);
        let rate = 2.0 * p.kappa_field;
        let n = jump_times.len() as f64;
        let mut d = 0.0f64;
        for (i, t) in jump_times.iter().enumerate() {
            let cdf = 1.0 - (-rate * t).exp();
            let lo = i as f64 / n;
            let hi = (i + 1) as f64 / n;
            d = d.max((cdf - lo).abs()).max((cdf - hi).abs());
        }
        // Kolmogorov-Smirnov critical value at the 1% level
        let crit = 1.628 / (n.sqrt() + 0.12 + 0.11 / n.sqrt());
        assert!(d < crit, "KS statistic {d} exceeds 1% critical value {crit}");
    }

    #[test]
    fn trajectories_are_deterministic_and_ensemble_matches() {
        let p = empty_cavity_params(0.3 * PI * 8e6, 0.5e6);
        let dims = Dims::new(2, 6).unwrap();
        let cfg = TrajectoryConfig::for_params(&p, 10.0 / p.kappa_field, 0);

        let recs = run_ensemble(&p, dims, &cfg, 3, 42).unwrap();
        let mut cfg0 = cfg.clone();
        cfg0.seed = derive_seed(42, 0);
        let direct = run_trajectory(&p, dims, &cfg0).unwrap();
        assert_eq!(recs[0].n_photon, direct.n_photon);
        assert_eq!(recs[0].jumps, direct.jumps);

        // identical output for any worker count
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let r1 = pool1.install(|| run_ensemble(&p, dims, &cfg, 4, 42)).unwrap();
        let r4 = pool4.install(|| run_ensemble(&p, dims, &cfg, 4, 42)).unwrap();
        for (a, b) in r1.iter().zip(&r4) {
            assert_eq!(a.n_photon, b.n_photon);
            assert_eq!(a.jumps, b.jumps);
        }
    }

    #[test]
    fn norm_is_monotone_between_jumps() {
        // weakly coupled regime so the cavity actually fills and jumps
        let mut p = empty_cavity_params(1.5 * PI * 8e6, 0.0);
        p.g1 = 2.0 * PI * 4e6;
        p.gamma1 = 2.0 * PI * 2e5;
        let dims = Dims::new(2, 10).unwrap();
        let cfg = TrajectoryConfig::for_params(&p, 30.0 / p.kappa_field, 5);
        let h = build_hamiltonian(&p, dims).unwrap();
        let jumps = build_jump_operators(&p, dims).unwrap();
        let (rec, norms) = run_trajectory_with_ops(&h, &jumps, dims, &cfg).unwrap();
        // samples with no jump in between must have nonincreasing norm²
        for i in 1..norms.len() {
            let t_lo = rec.times[i - 1];
            let t_hi = rec.times[i];
            let jumped = rec.jumps.iter().any(|(tj, _)| *tj > t_lo && *tj <= t_hi);
            if !jumped {
                assert!(
                    norms[i] <= norms[i - 1] * (1.0 + 1e-9),
                    "norm increased between samples without a jump"
                );
            }
        }
        assert!(!rec.jumps.is_empty());
    }

    #[test]
    fn jump_channel_frequencies_match_rates() {
        // driven two-level system with three channels; expected relative
        // frequencies are the steady-state rates tr(ρ L†L)
        let mut p = empty_cavity_params(0.6 * PI * 8e6, 0.0);
        p.g1 = 2.0 * PI * 8e6;
        p.gamma1 = 2.0 * PI * 1e6;
        p.gamma_phi1 = 2.0 * PI * 1e6;
        p.dephasing = DephasingSpec::FluxLinear { divisor: 1.0 };
        let dims = Dims::new(2, 8).unwrap();

        let rho = steady_state_dense(&p, dims).unwrap();
        let jumps = build_jump_operators(&p, dims).unwrap();
        let rates: Vec<f64> = jumps
            .iter()
            .map(|j| {
                rho.expectation(&j.op.adjoint().matmul(&j.op).unwrap())
                    .unwrap()
                    .re
            })
            .collect();
        let total_rate: f64 = rates.iter().sum();

        let cfg = TrajectoryConfig::for_params(&p, 400.0 / p.kappa_field, 0);
        let recs = run_ensemble(&p, dims, &cfg, 8, 99).unwrap();
        let mut counts = vec![0usize; jumps.len()];
        for rec in &recs {
            for (_, ch) in &rec.jumps {
                let idx = jumps.iter().position(|j| j.channel == *ch).unwrap();
                counts[idx] += 1;
            }
        }
        let n_total: usize = counts.iter().sum();
        assert!(n_total > 500, "need statistics, got {n_total} jumps");
        let mut chi2 = 0.0;
        for (c, r) in counts.iter().zip(&rates) {
            let expected = n_total as f64 * r / total_rate;
            chi2 += (*c as f64 - expected).powi(2) / expected;
        }
        // χ² with 2 degrees of freedom at the 1% level
        assert!(chi2 < 9.21, "chi2 = {chi2}, counts {counts:?}, rates {rates:?}");
    }

    #[test]
    fn tolerance_refinement_shifts_jumps_within_budget() {
        let mut p = empty_cavity_params(0.5 * PI * 8e6, 0.0);
        p.g1 = 2.0 * PI * 16e6;
        let dims = Dims::new(2, 8).unwrap();
        let mut cfg = TrajectoryConfig::for_params(&p, 20.0 / p.kappa_field, 1234);
        cfg.step_tolerance = 1e-6;
        let coarse = run_trajectory(&p, dims, &cfg).unwrap();
        cfg.step_tolerance = 5e-7;
        let fine = run_trajectory(&p, dims, &cfg).unwrap();

        assert_eq!(coarse.jumps.len(), fine.jumps.len());
        for ((tc, _), (tf, _)) in coarse.jumps.iter().zip(&fine.jumps) {
            assert!(
                (tc - tf).abs() < 1e-2 / p.kappa_field,
                "jump time shifted from {tc} to {tf}"
            );
        }
        for (a, b) in coarse.n_photon.iter().zip(&fine.n_photon) {
            assert!((a - b).abs() < 1e-3 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn ensemble_mean_matches_master_equation() {
        let mut p = empty_cavity_params(0.5 * PI * 8e6, 0.0);
        p.g1 = 2.0 * PI * 24e6;
        p.gamma1 = 2.0 * PI * 2e5;
        let dims = Dims::new(2, 8).unwrap();
        let t_final = 6.0 / p.kappa_field;
        let cfg = TrajectoryConfig::for_params(&p, t_final, 0);
        let n_traj = 300;
        let recs = run_ensemble(&p, dims, &cfg, n_traj, 7).unwrap();

        let h = build_hamiltonian(&p, dims).unwrap();
        let jumps = build_jump_operators(&p, dims).unwrap();
        let mut rho0 = nalgebra::DMatrix::<Complex64>::zeros(dims.total(), dims.total());
        rho0[(0, 0)] = Complex64::new(1.0, 0.0);

        // compare excited-level population at a mid-evolution sample
        let sample = recs[0].times.len() / 2;
        let t_cmp = recs[0].times[sample];
        let n_steps = ((t_cmp * p.g1) as usize * 8).max(400);
        let rho = propagate_master_equation(dims, &h, &jumps, rho0, t_cmp, n_steps).unwrap();
        let expected = rho.level_population(1);

        let vals: Vec<f64> = recs.iter().map(|r| r.populations[1][sample]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        let se = (var / vals.len() as f64).sqrt();
        assert!(
            (mean - expected).abs() <= 3.0 * se.max(1e-6),
            "population mean {mean} vs master equation {expected} (se {se})"
        );
    }

    #[test]
    fn populations_sum_to_one() {
        let mut p = empty_cavity_params(0.4 * PI * 8e6, 1e6);
        p.g1 = 2.0 * PI * 20e6;
        p.n_levels = 3;
        p.delta_an = -2.0 * PI * 418e6;
        p.gamma1 = 2.0 * PI * 1e5;
        let dims = Dims::new(3, 6).unwrap();
        let cfg = TrajectoryConfig::for_params(&p, 15.0 / p.kappa_field, 3);
        let rec = run_trajectory(&p, dims, &cfg).unwrap();
        for s in 0..rec.times.len() {
            let total: f64 = (0..3).map(|u| rec.populations[u][s]).sum();
            assert!((total - 1.0).abs() < 1e-9, "population sum {total}");
            assert!(rec.n_photon[s] >= -1e-12 && rec.n_photon[s] <= 5.0);
        }
    }

    #[test]
    fn truncation_flag_fires_on_overdriven_cavity() {
        let p = empty_cavity_params(2.0 * PI * 8e6, 0.0); // n ≈ 4 ≫ n_fock
        let dims = Dims::new(2, 3).unwrap();
        let cfg = TrajectoryConfig::for_params(&p, 10.0 / p.kappa_field, 1);
        let rec = run_trajectory(&p, dims, &cfg).unwrap();
        assert!(rec.truncation_flag);
    }

    #[test]
    fn concatenate_joins_and_rebases() {
        let p = empty_cavity_params(0.0, 0.0);
        let dims = Dims::new(2, 3).unwrap();
        let cfg = TrajectoryConfig::for_params(&p, 10.0 / p.kappa_field, 0);
        let recs = run_ensemble(&p, dims, &cfg, 2, 5).unwrap();
        let n = recs[0].n_photon.len();

        let joined = concatenate(&recs, 0.0).unwrap();
        assert_eq!(joined.values().len(), 2 * n);
        assert_relative_eq!(joined.dt(), cfg.sample_interval, max_relative = 1e-12);

        // discarding everything is an error
        assert!(concatenate(&recs, cfg.t_final + cfg.sample_interval).is_err());

        let partial = concatenate(&recs, 3.0 * cfg.sample_interval).unwrap();
        assert_eq!(partial.values().len(), 2 * (n - 3));
    }

    #[test]
    fn qjmc_time_average_matches_dense_steady_state() {
        // weak-drive blockaded system; ensemble time-average vs null-space
        let mut p = empty_cavity_params(0.5 * PI * 8e6, 0.0);
        p.g1 = 2.0 * PI * 32e6;
        let dims = Dims::new(2, 6).unwrap();
        let rho = steady_state_dense(&p, dims).unwrap();
        let expected = rho.photon_number();

        let cfg = TrajectoryConfig::for_params(&p, 50.0 / p.kappa_field, 0);
        let recs = run_ensemble(&p, dims, &cfg, 200, 2024).unwrap();
        let discard = 10;
        let means: Vec<f64> = recs
            .iter()
            .map(|r| {
                let tail = &r.n_photon[discard..];
                tail.iter().sum::<f64>() / tail.len() as f64
            })
            .collect();
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>()
            / (means.len() - 1) as f64;
        let se = (var / means.len() as f64).sqrt();
        assert!(
            (mean - expected).abs() <= 3.0 * se.max(1e-9),
            "QJMC mean {mean:.3e} vs dense {expected:.3e} (se {se:.3e})"
        );
    }
}
