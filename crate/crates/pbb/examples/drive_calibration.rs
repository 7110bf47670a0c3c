//! Resonance fitting and drive-line calibration: recover the cavity
//! linewidth from a synthetic transmission scan, then convert an input
//! power to an intra-cavity photon number and drive strength.
//!
//! ```bash
//! cargo run --release -p pbb --example drive_calibration
//! ```

use pbb::calibrate::{drive_calibration, fit_s21, s21_model, HBAR};
use std::f64::consts::PI;

fn main() -> pbb::Result<()> {
    let two_pi = 2.0 * PI;
    let w0 = two_pi * 10.4725e9;
    let kappa_fixed = two_pi * 0.5e6;
    let kappa_vary = two_pi * 7e6;
    let kappa_int = two_pi * 0.6e6;

    // synthetic scan across the resonance
    let span = two_pi * 80e6;
    let freqs: Vec<f64> = (0..301)
        .map(|i| w0 - span / 2.0 + span * i as f64 / 300.0)
        .collect();
    let mags: Vec<f64> = freqs
        .iter()
        .map(|w| s21_model(*w, w0, kappa_fixed, kappa_vary, kappa_int).norm())
        .collect();

    let fit = fit_s21(&freqs, &mags, kappa_fixed, kappa_int)?;
    println!(
        "fit: ν_R = {:.6} GHz, κ_vary/2π = {:.3} MHz, κ/2π = {:.3} MHz (residual {:.1e})",
        fit.omega_r / two_pi / 1e9,
        fit.kappa_vary / two_pi / 1e6,
        fit.kappa_total / two_pi / 1e6,
        fit.residual_norm
    );

    for p_dbm in [-140.0f64, -130.0, -120.0] {
        let p_in = 1e-3 * 10f64.powf(p_dbm / 10.0);
        let cal = drive_calibration(p_in, fit.omega_r, kappa_fixed, fit.kappa_total)?;
        println!(
            "P_in = {p_dbm:>6.1} dBm: n̄_cav = {:.3e}, η/2π = {:.3} MHz",
            cal.n_cav,
            cal.eta / two_pi / 1e6
        );
    }
    println!(
        "(one photon corresponds to {:.1} dBm at these rates)",
        10.0 * (HBAR * w0 * fit.kappa_total.powi(2) / (4.0 * kappa_fixed) / 1e-3).log10()
    );
    Ok(())
}
