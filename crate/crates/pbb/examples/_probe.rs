use pbb::hilbert::Dims;
use pbb::model::{DephasingSpec, SystemParams};
use pbb::qjmc::{concatenate, run_ensemble, TrajectoryConfig};
use pbb::telegraph::{detect_switches, dwell_statistics, ThresholdSpec};
use std::f64::consts::PI;

fn main() {
    let kf = PI * 18.1e6;
    for nu_eta in [60e6f64, 70e6, 80e6, 90e6, 100e6] {
        let p = SystemParams {
            g1: 2.0 * PI * 344e6,
            kappa_field: kf,
            gamma1: 0.0,
            gamma_phi1: 2.0 * PI * 50e3,
            eta: 2.0 * PI * nu_eta,
            delta: 0.0,
            delta_an: -2.0 * PI * 418e6,
            n_th: 0.0,
            n_levels: 3,
            dephasing: DephasingSpec::FluxLinear { divisor: 1.0 },
        };
        let dims = Dims::new(3, 110).unwrap();
        let cfg = TrajectoryConfig::for_params(&p, 1000.0 / kf, 0);
        let t0 = std::time::Instant::now();
        let recs = run_ensemble(&p, dims, &cfg, 2, 0xD0 + nu_eta as u64).unwrap();
        let series = concatenate(&recs, 10.0 / kf).unwrap();
        let high = series.values().iter().cloned().fold(0.0f64, f64::max);
        let spec = ThresholdSpec { reference_high: Some(high), debounce: 3, ..ThresholdSpec::default() };
        let st = dwell_statistics(&detect_switches(&series, &spec).unwrap(), 5).unwrap();
        let trunc = recs.iter().any(|r| r.truncation_flag);
        println!(
            "nu_eta {:>5.0} MHz: filling {:.3}, switches {}, t_dim {:?}, t_bright {:?}, max n {:.0}, trunc {}, wall {:?}",
            nu_eta / 1e6, st.filling, st.n_switches, st.t_dim, st.t_bright, high, trunc, t0.elapsed()
        );
    }
}
