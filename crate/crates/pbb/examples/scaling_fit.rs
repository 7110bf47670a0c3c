//! Power-law scaling fits: recovering exponents from synthetic
//! half-filling observables with known noise.
//!
//! ```bash
//! cargo run --release -p pbb --example scaling_fit
//! ```

use pbb::telegraph::fit_power_law;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn main() -> pbb::Result<()> {
    let g_over_kappa = [19.0f64, 24.0, 30.0, 39.0, 62.0, 88.0, 132.0, 287.0];
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let mut noisy = |exp: f64, pref: f64| -> (Vec<f64>, Vec<f64>) {
        let ys = g_over_kappa
            .iter()
            .map(|x| {
                let (u1, u2): (f64, f64) = (rng.random::<f64>().max(1e-12), rng.random());
                let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                pref * x.powf(exp) * (0.08 * g).exp()
            })
            .collect::<Vec<_>>();
        let errs = ys.iter().map(|y| 0.08 * y).collect();
        (ys, errs)
    };

    for (name, exp_true, pref) in [
        ("dwell time [s]", 5.4, 3e-11),
        ("bright photon number", 0.96, 2.0),
        ("drive / coupling", -0.52, 0.5),
    ] {
        let (ys, errs) = noisy(exp_true, pref);
        let fit = fit_power_law(&g_over_kappa, &ys, Some(&errs))?;
        println!(
            "{name:<22} exponent {:+.3} ± {:.3}   (true {exp_true:+.2})",
            fit.exponent,
            fit.exponent_stderr.unwrap()
        );
    }
    Ok(())
}
