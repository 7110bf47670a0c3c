//! Small semiclassical phase map on the detuning-drive plane, printed as
//! an ASCII grid (D dim, X bistable, B bright).
//!
//! ```bash
//! cargo run --release -p pbb --example phase_map
//! ```

use pbb::maxwell_bloch::{phase_diagram, MbLevels, MbParams, PhaseOptions};
use std::f64::consts::PI;

fn main() -> pbb::Result<()> {
    let nu_g = 344e6;
    let nu_kappa = nu_g / 132.0;
    let params = MbParams {
        g1: 2.0 * PI * nu_g,
        g2: 2.0f64.sqrt() * 2.0 * PI * nu_g,
        kappa_field: PI * nu_kappa,
        gamma1: 2.0 * PI * 1e3,
        gamma_phi1: 2.0 * PI * 50e3,
        gamma_phi2: 2.0 * PI * 100e3,
        eta: 0.0,
        delta: 0.0,
        delta_f: -2.0 * PI * 418e6,
        levels: MbLevels::Three,
    };

    let deltas: Vec<f64> = (0..9).map(|i| 2.0 * PI * (-40e6 + 10e6 * i as f64)).collect();
    let etas: Vec<f64> = (0..10)
        .map(|i| 2.0 * PI * 10e6 * (12f64).powf(i as f64 / 9.0))
        .collect();
    let mut options = PhaseOptions::default();
    options.solve.stability_horizon_over_kappa = 20.0;

    let map = phase_diagram(&deltas, &etas, &params, &options)?;

    print!("{:>12}", "Δ/2π [MHz]");
    for eta in &etas {
        print!("{:>7.0}", eta / (2.0 * PI * 1e6));
    }
    println!("   ← η/2π [MHz]");
    for (i, delta) in map.deltas.iter().enumerate() {
        print!("{:>12.0}", delta / (2.0 * PI * 1e6));
        for j in 0..etas.len() {
            print!("{:>7}", map.classes[i * etas.len() + j].code());
        }
        println!();
    }
    Ok(())
}
