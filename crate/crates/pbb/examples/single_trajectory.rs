//! One quantum-jump trajectory of the driven system in a switching regime,
//! written to `trajectory.csv` next to a printed summary.
//!
//! ```bash
//! cargo run --release -p pbb --example single_trajectory
//! ```

use pbb::hilbert::Dims;
use pbb::io::write_trajectory_csv;
use pbb::model::{DephasingSpec, SystemParams};
use pbb::qjmc::{run_trajectory, TrajectoryConfig};
use std::f64::consts::PI;
use std::path::Path;

fn main() -> pbb::Result<()> {
    // moderate coupling keeps the run at a few seconds
    let kappa_field = PI * 18.1e6;
    let params = SystemParams {
        g1: 2.0 * PI * 344e6,
        kappa_field,
        gamma1: 0.0,
        gamma_phi1: 2.0 * PI * 50e3,
        eta: 2.0 * PI * 60e6,
        delta: 0.0,
        delta_an: -2.0 * PI * 418e6,
        n_th: 0.0,
        n_levels: 3,
        dephasing: DephasingSpec::FluxLinear { divisor: 1.0 },
    };
    let dims = Dims::new(3, 80)?;
    let config = TrajectoryConfig::for_params(&params, 400.0 / kappa_field, 7);

    let record = run_trajectory(&params, dims, &config)?;
    let n_max = record.n_photon.iter().cloned().fold(0.0f64, f64::max);
    let mean = record.n_photon.iter().sum::<f64>() / record.n_photon.len() as f64;
    println!(
        "samples: {}   jumps: {}   mean <n>: {mean:.2}   max <n>: {n_max:.1}",
        record.times.len(),
        record.jumps.len()
    );
    // a crude strip chart of the photon number
    for chunk in record.n_photon.chunks(record.n_photon.len() / 60 + 1) {
        let avg = chunk.iter().sum::<f64>() / chunk.len() as f64;
        println!("{:>8.2} {}", avg, "#".repeat((30.0 * avg / n_max.max(1.0)) as usize));
    }

    write_trajectory_csv(Path::new("trajectory.csv"), &record)?;
    println!("wrote trajectory.csv");
    if record.truncation_flag {
        println!("warning: top Fock level was populated; enlarge the Fock space");
    }
    Ok(())
}
