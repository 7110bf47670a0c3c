//! Weak-drive transmission spectrum of the resonantly coupled system:
//! the single excitation splits into two polaritons at ±g and the bare
//! cavity frequency goes dark (photon blockade).
//!
//! ```bash
//! cargo run --release -p pbb --example vacuum_rabi
//! ```

use pbb::hilbert::Dims;
use pbb::model::{DephasingSpec, SystemParams};
use pbb::steady::steady_state_dense;
use std::f64::consts::PI;

fn main() -> pbb::Result<()> {
    let g1 = 2.0 * PI * 64e6;
    let kappa_field = PI * 8e6;
    let dims = Dims::new(2, 4)?;

    println!("# delta_over_g  transmission  (normalized to the polariton peak)");
    let mut curve = Vec::new();
    for i in 0..81 {
        let delta = -1.3 * g1 + 2.6 * g1 * i as f64 / 80.0;
        let params = SystemParams {
            g1,
            kappa_field,
            gamma1: 0.0,
            gamma_phi1: 0.0,
            eta: 0.05 * kappa_field,
            delta,
            delta_an: 0.0,
            n_th: 0.0,
            n_levels: 2,
            dephasing: DephasingSpec::None,
        };
        let rho = steady_state_dense(&params, dims)?;
        curve.push((delta / g1, rho.field_amplitude().norm_sqr()));
    }
    let peak = curve.iter().map(|(_, t)| *t).fold(0.0f64, f64::max);
    for (x, t) in &curve {
        let bar = "#".repeat((40.0 * t / peak) as usize);
        println!("{x:>7.3}  {:.3e}  {bar}", t / peak);
    }

    let dip = curve
        .iter()
        .min_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
        .unwrap();
    println!(
        "\nblockade: transmission at the bare frequency is {:.1} dB below the polaritons",
        10.0 * (peak / dip.1).log10()
    );
    Ok(())
}
