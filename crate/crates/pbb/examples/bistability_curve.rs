//! Semiclassical intensity branches versus drive strength in the
//! strong-coupling regime: the S-shaped threefold solution with its
//! rejected middle branch.
//!
//! ```bash
//! cargo run --release -p pbb --example bistability_curve
//! ```

use pbb::maxwell_bloch::{solve_branches, MbLevels, MbParams};
use std::f64::consts::PI;

fn main() -> pbb::Result<()> {
    let nu_g = 344e6;
    let nu_kappa = nu_g / 132.0;
    let base = MbParams {
        g1: 2.0 * PI * nu_g,
        g2: 2.0f64.sqrt() * 2.0 * PI * nu_g,
        kappa_field: PI * nu_kappa,
        gamma1: 2.0 * PI * 1e3,
        gamma_phi1: 2.0 * PI * 50e3,
        gamma_phi2: 2.0 * PI * 100e3,
        eta: 0.0,
        delta: -2.0 * PI * 10e6,
        delta_f: -2.0 * PI * 418e6,
        levels: MbLevels::Three,
    };

    println!("# eta/2pi [MHz]   branches (intensity [photons] : stability)");
    for k in 0..16 {
        let nu_eta = 1e6 * (100f64).powf(k as f64 / 15.0); // 1 .. 100 MHz
        let mut p = base.clone();
        p.eta = 2.0 * PI * nu_eta;
        let i_max = 4.0 * (p.eta / p.kappa_field).powi(2) + 10.0;
        let branches = solve_branches(&p, i_max, 2000)?;
        let cells: Vec<String> = branches
            .iter()
            .map(|b| format!("{:.3e}:{}", b.intensity, b.stability.label()))
            .collect();
        println!("{:>10.3}   {}", nu_eta / 1e6, cells.join("   "));
    }
    println!("\nthe middle branch of each threefold solution decreases with drive and is rejected");
    Ok(())
}
