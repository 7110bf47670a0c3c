//! Telegraph-signal analysis on synthetic data: threshold detection,
//! dwell-time means with sectioned standard errors, and the half-filling
//! crossing of a drive sweep.
//!
//! ```bash
//! cargo run --release -p pbb --example dwell_statistics
//! ```

use pbb::telegraph::{
    detect_switches, dwell_statistics, half_filling, DwellStatistics, SeriesUnit, ThresholdSpec,
    TimeSeries,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Random telegraph signal with exponential dwells.
fn rts(mean_dim: f64, mean_bright: f64, n_switches: usize, seed: u64) -> TimeSeries {
    let dt = 2.5e-6;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut values = Vec::new();
    let mut bright = false;
    for _ in 0..n_switches {
        let mean = if bright { mean_bright } else { mean_dim };
        let dwell = -mean * rng.random::<f64>().max(1e-12).ln();
        let n = (dwell / dt).round().max(1.0) as usize;
        values.extend(std::iter::repeat(if bright { 5.0 } else { 0.0 }).take(n));
        bright = !bright;
    }
    // SNR-5 measurement noise
    for v in &mut values {
        let (u1, u2): (f64, f64) = (rng.random::<f64>().max(1e-12), rng.random());
        *v += (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    }
    TimeSeries::new(0.0, dt, values, SeriesUnit::Arbitrary)
}

fn main() -> pbb::Result<()> {
    let spec = ThresholdSpec {
        reference_high: Some(5.0),
        debounce: 3,
        ..ThresholdSpec::default()
    };

    let series = rts(1e-3, 3e-3, 1000, 1);
    let stats = dwell_statistics(&detect_switches(&series, &spec)?, 5)?;
    println!("single trace (true means 1 ms / 3 ms):");
    println!(
        "  t_dim = {:.3e} ± {:.1e} s, t_bright = {:.3e} ± {:.1e} s, filling = {:.3}, switches = {}",
        stats.t_dim.unwrap(),
        stats.stderr_dim.unwrap(),
        stats.t_bright.unwrap(),
        stats.stderr_bright.unwrap(),
        stats.filling,
        stats.n_switches
    );

    // a sweep whose dwell times scale as a power of the drive crosses at
    // the construction point
    println!("\ndrive sweep:");
    let mut sweep: Vec<(f64, DwellStatistics)> = Vec::new();
    for (k, nu_eta) in [60e6f64, 75e6, 95e6, 120e6, 150e6].iter().enumerate() {
        let t_dim = 2e-3 * (90e6 / nu_eta).powf(3.0);
        let t_bright = 2e-3 * (nu_eta / 90e6).powf(3.0);
        let series = rts(t_dim, t_bright, 600, 10 + k as u64);
        let stats = dwell_statistics(&detect_switches(&series, &spec)?, 5)?;
        println!(
            "  η/2π = {:>5.0} MHz: t_dim = {:.3e} s, t_bright = {:.3e} s",
            nu_eta / 1e6,
            stats.t_dim.unwrap(),
            stats.t_bright.unwrap()
        );
        sweep.push((*nu_eta, stats));
    }
    let hf = half_filling(&sweep)?;
    println!(
        "  half-filling: η*/2π = {:.1} MHz, t* = {:.3e} s (construction: 90 MHz, 2e-3 s)",
        hf.eta_star / 1e6,
        hf.t_star
    );
    Ok(())
}
