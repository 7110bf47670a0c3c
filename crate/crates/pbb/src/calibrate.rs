//! Cavity transmission model, resonance fitting and drive-line calibration.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Input-output transmission of a two-port cavity,
/// S21 = √(κ_fixed κ_vary) / (κ/2 - i(ω - ω_R)) with
/// κ = κ_fixed + κ_vary + κ_int (angular FWHM linewidths).
pub fn s21_model(
    omega: f64,
    omega_r: f64,
    kappa_fixed: f64,
    kappa_vary: f64,
    kappa_int: f64,
) -> Complex64 {
    let kappa = kappa_fixed + kappa_vary + kappa_int;
    Complex64::new((kappa_fixed * kappa_vary).sqrt(), 0.0)
        / Complex64::new(kappa / 2.0, -(omega - omega_r))
}

/// Result of a resonance fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S21Fit {
    pub omega_r: f64,
    pub kappa_vary: f64,
    pub kappa_total: f64,
    /// Root-mean-square magnitude residual of the fit.
    pub residual_norm: f64,
}

/// Nonlinear least squares of |s21_model| against measured magnitudes with
/// κ_fixed and κ_int known. Initial guesses come from the peak location and
/// the half-maximum width; refinement is Levenberg-Marquardt on
/// (ω_R, κ_vary).
pub fn fit_s21(
    freqs: &[f64],
    s21_mag: &[f64],
    kappa_fixed: f64,
    kappa_int: f64,
) -> Result<S21Fit> {
    if freqs.len() != s21_mag.len() {
        return Err(Error::DimensionMismatch(format!(
            "fit_s21: {} frequencies vs {} magnitudes",
            freqs.len(),
            s21_mag.len()
        )));
    }
    if freqs.len() < 5 {
        return Err(Error::InvalidInput(
            "fit_s21 needs at least 5 points spanning the resonance".into(),
        ));
    }
    if kappa_fixed <= 0.0 || kappa_int < 0.0 {
        return Err(Error::InvalidInput(
            "fit_s21 needs kappa_fixed > 0 and kappa_int >= 0".into(),
        ));
    }

    // peak detection guard
    let (peak_idx, peak_val) = s21_mag
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| {
            if *v > acc.1 {
                (i, *v)
            } else {
                acc
            }
        });
    let mut sorted = s21_mag.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if !(peak_val > 2.0 * median) {
        return Err(Error::Numerical(format!(
            "fit_s21: no discernible resonance peak (max {peak_val:.3e}, median {median:.3e})"
        )));
    }

    // half-maximum width for the κ guess
    let half = peak_val / 2.0;
    let mut lo = freqs[0];
    for i in (0..peak_idx).rev() {
        if s21_mag[i] < half {
            lo = freqs[i];
            break;
        }
    }
    let mut hi = freqs[freqs.len() - 1];
    for i in peak_idx..freqs.len() {
        if s21_mag[i] < half {
            hi = freqs[i];
            break;
        }
    }
    let kappa_guess = (hi - lo).abs().max(1e-6 * freqs[peak_idx].abs().max(1.0));
    let mut omega_r = freqs[peak_idx];
    let mut kappa_vary = (kappa_guess - kappa_fixed - kappa_int).max(0.01 * kappa_guess);

    // Levenberg-Marquardt on the magnitude residuals
    let model = |w: f64, om: f64, kv: f64| -> f64 {
        s21_model(w, om, kappa_fixed, kv.max(0.0), kappa_int).norm()
    };
    let chi2 = |om: f64, kv: f64| -> f64 {
        freqs
            .iter()
            .zip(s21_mag)
            .map(|(w, m)| (model(*w, om, kv) - m).powi(2))
            .sum()
    };
    let mut lambda = 1e-3;
    let mut cost = chi2(omega_r, kappa_vary);
    for _ in 0..200 {
        // numerical Jacobian, 2 columns
        let h_om = 1e-7 * kappa_guess.max(1.0);
        let h_kv = 1e-7 * kappa_vary.max(kappa_guess * 1e-3);
        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for (w, m) in freqs.iter().zip(s21_mag) {
            let f0 = model(*w, omega_r, kappa_vary);
            let d_om = (model(*w, omega_r + h_om, kappa_vary) - f0) / h_om;
            let d_kv = (model(*w, omega_r, kappa_vary + h_kv) - f0) / h_kv;
            let r = m - f0;
            jtj[0][0] += d_om * d_om;
            jtj[0][1] += d_om * d_kv;
            jtj[1][1] += d_kv * d_kv;
            jtr[0] += d_om * r;
            jtr[1] += d_kv * r;
        }
        jtj[1][0] = jtj[0][1];

        let a00 = jtj[0][0] * (1.0 + lambda);
        let a11 = jtj[1][1] * (1.0 + lambda);
        let det = a00 * a11 - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let d_om = (jtr[0] * a11 - jtj[0][1] * jtr[1]) / det;
        let d_kv = (a00 * jtr[1] - jtj[1][0] * jtr[0]) / det;

        let trial_om = omega_r + d_om;
        let trial_kv = (kappa_vary + d_kv).max(1e-12 * kappa_guess);
        let trial_cost = chi2(trial_om, trial_kv);
        if trial_cost < cost {
            let improvement = (cost - trial_cost) / cost.max(1e-300);
            omega_r = trial_om;
            kappa_vary = trial_kv;
            cost = trial_cost;
            lambda = (lambda * 0.3).max(1e-12);
            if improvement < 1e-14 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    Ok(S21Fit {
        omega_r,
        kappa_vary,
        kappa_total: kappa_fixed + kappa_vary + kappa_int,
        residual_norm: (cost / freqs.len() as f64).sqrt(),
    })
}

/// Calibrated drive parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveCalibration {
    /// Equivalent empty-cavity photon number on resonance.
    pub n_cav: f64,
    /// Drive strength η (rad/s).
    pub eta: f64,
}

/// Drive-line calibration from the applied input power:
/// n̄_cav = (P_in/ħω_R)·(4κ_fixed/κ²) and η = √(n̄_cav)·κ/2, with κ the
/// total angular FWHM linewidth.
pub fn drive_calibration(
    p_in: f64,
    omega_r: f64,
    kappa_fixed: f64,
    kappa_total_fwhm: f64,
) -> Result<DriveCalibration> {
    if p_in <= 0.0 || omega_r <= 0.0 || kappa_fixed <= 0.0 || kappa_total_fwhm <= 0.0 {
        return Err(Error::InvalidInput(
            "drive_calibration needs positive power, frequency and rates".into(),
        ));
    }
    let n_cav = p_in / (HBAR * omega_r) * 4.0 * kappa_fixed / (kappa_total_fwhm * kappa_total_fwhm);
    let eta = n_cav.sqrt() * kappa_total_fwhm / 2.0;
    Ok(DriveCalibration { n_cav, eta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn matched_symmetric_cavity_transmits_fully() {
        let k = 2.0 * PI * 1e6;
        let s = s21_model(5e9, 5e9, k, k, 0.0);
        assert_relative_eq!(s.norm(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn half_power_at_half_linewidth() {
        let kf = 2.0 * PI * 0.5e6;
        let kv = 2.0 * PI * 3e6;
        let ki = 2.0 * PI * 0.6e6;
        let k = kf + kv + ki;
        let w0 = 2.0 * PI * 10.4725e9;
        let peak = s21_model(w0, w0, kf, kv, ki).norm_sqr();
        for sign in [-1.0, 1.0] {
            let p = s21_model(w0 + sign * k / 2.0, w0, kf, kv, ki).norm_sqr();
            assert_relative_eq!(p, peak / 2.0, max_relative = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn peak_height_and_width_identities(
            kf_mhz in 0.05f64..5.0,
            kv_mhz in 0.05f64..30.0,
            ki_mhz in 0.0f64..2.0,
        ) {
            let kf = 2.0 * PI * kf_mhz * 1e6;
            let kv = 2.0 * PI * kv_mhz * 1e6;
            let ki = 2.0 * PI * ki_mhz * 1e6;
            let k = kf + kv + ki;
            let w0 = 2.0 * PI * 10e9;
            let peak = s21_model(w0, w0, kf, kv, ki).norm();
            prop_assert!((peak - 2.0 * (kf * kv).sqrt() / k).abs() <= 1e-12 * peak);
            let half = s21_model(w0 + k / 2.0, w0, kf, kv, ki).norm_sqr();
            prop_assert!((half - peak * peak / 2.0).abs() <= 1e-12 * peak * peak);
        }
    }

    fn synth_scan(
        w0: f64,
        kf: f64,
        kv: f64,
        ki: f64,
        n: usize,
        span: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let freqs: Vec<f64> = (0..n)
            .map(|i| w0 - span / 2.0 + span * i as f64 / (n - 1) as f64)
            .collect();
        let mags = freqs
            .iter()
            .map(|w| s21_model(*w, w0, kf, kv, ki).norm())
            .collect();
        (freqs, mags)
    }

    #[test]
    fn noiseless_fit_round_trips() {
        let w0 = 2.0 * PI * 10.4725e9;
        let kf = 2.0 * PI * 0.5e6;
        let kv = 2.0 * PI * 7e6;
        let ki = 2.0 * PI * 0.6e6;
        let (freqs, mags) = synth_scan(w0, kf, kv, ki, 401, 2.0 * PI * 80e6);
        let fit = fit_s21(&freqs, &mags, kf, ki).unwrap();
        assert_relative_eq!(fit.omega_r, w0, max_relative = 1e-9);
        assert_relative_eq!(fit.kappa_vary, kv, max_relative = 1e-9);
        assert_relative_eq!(fit.kappa_total, kf + kv + ki, max_relative = 1e-9);
        assert!(fit.residual_norm < 1e-9);
    }

    #[test]
    fn noisy_fit_recovers_linewidth() {
        use rand::Rng;
        use rand::SeedableRng;
        let w0 = 2.0 * PI * 10.4725e9;
        let kf = 2.0 * PI * 0.5e6;
        let kv = 2.0 * PI * 4e6;
        let ki = 2.0 * PI * 0.6e6;
        let mut worst: f64 = 0.0;
        for seed in 0..20u64 {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let (freqs, mut mags) = synth_scan(w0, kf, kv, ki, 301, 2.0 * PI * 60e6);
            let peak = mags.iter().cloned().fold(0.0f64, f64::max);
            for m in &mut mags {
                // 1% amplitude noise relative to the peak
                *m += 0.01 * peak * (2.0 * rng.random::<f64>() - 1.0);
            }
            let fit = fit_s21(&freqs, &mags, kf, ki).unwrap();
            worst = worst.max((fit.kappa_total - (kf + kv + ki)).abs() / (kf + kv + ki));
        }
        assert!(worst < 0.02, "worst κ error {worst:.4}");
    }

    #[test]
    fn flat_input_is_a_fit_failure() {
        let freqs: Vec<f64> = (0..50).map(|i| 1e9 + i as f64 * 1e6).collect();
        let mags = vec![0.3; 50];
        match fit_s21(&freqs, &mags, 1e6, 0.0) {
            Err(Error::Numerical(_)) => {}
            other => panic!("expected fit failure, got {other:?}"),
        }
    }

    #[test]
    fn calibration_inversion_identity() {
        let w0 = 2.0 * PI * 10.4725e9;
        let kf = 2.0 * PI * 0.5e6;
        let k = 2.0 * PI * 8e6;
        // the power that corresponds to exactly one photon
        let p_one = HBAR * w0 * k * k / (4.0 * kf);
        let cal = drive_calibration(p_one, w0, kf, k).unwrap();
        assert!((cal.n_cav - 1.0).abs() < 1e-12);
        assert!((cal.eta - k / 2.0).abs() < 1e-12 * k);
    }

    #[test]
    fn four_photons_drive_at_kappa() {
        // n_cav = 4 with κ/2π = 8 MHz gives η/2π = 8 MHz
        let w0 = 2.0 * PI * 10.4725e9;
        let kf = 2.0 * PI * 0.5e6;
        let k = 2.0 * PI * 8e6;
        let p4 = 4.0 * HBAR * w0 * k * k / (4.0 * kf);
        let cal = drive_calibration(p4, w0, kf, k).unwrap();
        assert_relative_eq!(cal.n_cav, 4.0, max_relative = 1e-12);
        assert_relative_eq!(cal.eta, 2.0 * PI * 8e6, max_relative = 1e-12);
    }

    #[test]
    fn doubling_linewidth_quarters_photon_number() {
        let w0 = 2.0 * PI * 10e9;
        let kf = 2.0 * PI * 0.5e6;
        let p = 1e-12;
        let c1 = drive_calibration(p, w0, kf, 2.0 * PI * 8e6).unwrap();
        let c2 = drive_calibration(p, w0, kf, 2.0 * PI * 16e6).unwrap();
        assert_relative_eq!(c1.n_cav / c2.n_cav, 4.0, max_relative = 1e-12);
    }
}
