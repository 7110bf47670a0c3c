//! The full pipeline at desk scale: quantum-jump trajectories of the
//! driven three-level system, concatenated into one long photon-number
//! record, thresholded into a telegraph signal, and reduced to dwell-time
//! statistics and a bimodality check.
//!
//! Takes a few minutes single-threaded.
//!
//! ```bash
//! cargo run --release -p pbb --example telegraph_from_qjmc
//! ```

use pbb::hilbert::Dims;
use pbb::model::{DephasingSpec, SystemParams};
use pbb::qjmc::{concatenate, run_ensemble, TrajectoryConfig};
use pbb::telegraph::{
    detect_bimodality, detect_switches, dwell_statistics, Histogram1D, ThresholdSpec,
};
use std::f64::consts::PI;

fn main() -> pbb::Result<()> {
    let kappa_field = PI * 18.1e6;
    let params = SystemParams {
        g1: 2.0 * PI * 344e6,
        kappa_field,
        gamma1: 0.0,
        gamma_phi1: 2.0 * PI * 50e3,
        eta: 2.0 * PI * 62e6,
        delta: 0.0,
        delta_an: -2.0 * PI * 418e6,
        n_th: 0.0,
        n_levels: 3,
        dephasing: DephasingSpec::FluxLinear { divisor: 1.0 },
    };
    let dims = Dims::new(3, 110)?;
    let config = TrajectoryConfig::for_params(&params, 800.0 / kappa_field, 0);

    eprintln!("running 4 trajectories of {:.1} µs ...", config.t_final * 1e6);
    let records = run_ensemble(&params, dims, &config, 4, 0xCAFE)?;
    let series = concatenate(&records, 10.0 / kappa_field)?;

    let high = series.values().iter().cloned().fold(0.0f64, f64::max);
    let spec = ThresholdSpec {
        reference_high: Some(high),
        debounce: 3,
        ..ThresholdSpec::default()
    };
    let intervals = detect_switches(&series, &spec)?;
    let stats = dwell_statistics(&intervals, 5)?;
    println!(
        "telegraph: {} switches, filling {:.3}",
        stats.n_switches, stats.filling
    );
    if let (Some(d), Some(b)) = (stats.t_dim, stats.t_bright) {
        println!("dwell means: dim {:.3e} s, bright {:.3e} s", d, b);
    }

    let hist = Histogram1D::from_values(series.values(), 100, None)?;
    let bim = detect_bimodality(&hist)?;
    println!(
        "photon-number histogram bimodal: {} (peaks near {:?})",
        bim.is_bimodal,
        bim.peak_locations
            .iter()
            .map(|p| format!("{p:.1}"))
            .collect::<Vec<_>>()
    );
    Ok(())
}
