//! scratch: criterion-3 style recovery probe
use std::time::Instant;
use zeroer::features::estimate_shared_correlation;
use zeroer::model::{fit_no_transitivity, FitOptions};
use zeroer::synth::{generate, SynthSpec};

fn main() {
    let spec = SynthSpec::well_separated(2000, 6, 0.05, 20260809);
    let data = generate(&spec).unwrap();
    let fs = spec.feature_schema();
    for (name, r) in [
        ("true R  ", spec.correlation()),
        ("pooled R", estimate_shared_correlation(&data.x, &fs)),
    ] {
        let t0 = Instant::now();
        let out = fit_no_transitivity(&data.x, &r, &FitOptions::default()).unwrap();
        let mut mu_err: f64 = 0.0;
        for j in 0..spec.d {
            mu_err = mu_err.max((out.params.mu_m[j] - spec.mu_m[j]).abs());
            mu_err = mu_err.max((out.params.mu_u[j] - spec.mu_u[j]).abs());
        }
        let predicted = out.posteriors.matches();
        let tp = predicted.iter().filter(|&&i| data.labels[i]).count();
        let fp = predicted.len() - tp;
        let fn_ = data.labels.iter().filter(|&&l| l).count() - tp;
        let f1 = 2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64);
        println!(
            "{name}: pi_err {:.5} mu_err {:.5} f1 {:.5} iters {} conv {} wall {:?}",
            (out.params.pi_m - spec.pi_m).abs(), mu_err, f1,
            out.report.iterations, out.report.converged, t0.elapsed()
        );
    }
}
