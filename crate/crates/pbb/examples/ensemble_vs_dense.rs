//! Cross-check of the two steady-state routes: the time-averaged
//! quantum-jump ensemble against the dense Liouvillian null space.
//!
//! ```bash
//! cargo run --release -p pbb --example ensemble_vs_dense
//! ```

use pbb::hilbert::Dims;
use pbb::model::{DephasingSpec, SystemParams};
use pbb::qjmc::{run_ensemble, TrajectoryConfig};
use pbb::steady::steady_state_dense;
use std::f64::consts::PI;

fn main() -> pbb::Result<()> {
    let kappa_field = PI * 8e6;
    let params = SystemParams {
        g1: 2.0 * PI * 32e6,
        kappa_field,
        gamma1: 0.0,
        gamma_phi1: 0.0,
        eta: 2.0 * kappa_field,
        delta: 0.0,
        delta_an: 0.0,
        n_th: 0.0,
        n_levels: 2,
        dephasing: DephasingSpec::None,
    };
    let dims = Dims::new(2, 15)?;

    let dense = steady_state_dense(&params, dims)?.photon_number();

    let config = TrajectoryConfig::for_params(&params, 50.0 / kappa_field, 0);
    let n_traj = 200;
    let records = run_ensemble(&params, dims, &config, n_traj, 42)?;
    let means: Vec<f64> = records
        .iter()
        .map(|r| {
            let tail = &r.n_photon[10..];
            tail.iter().sum::<f64>() / tail.len() as f64
        })
        .collect();
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    let se = (var / means.len() as f64).sqrt();

    println!("dense steady state:  <a†a> = {dense:.6e}");
    println!("QJMC ensemble:       <a†a> = {mean:.6e} ± {se:.1e} ({n_traj} trajectories)");
    println!("difference: {:+.2} standard errors", (mean - dense) / se);
    Ok(())
}
