//! scratch probe: EM objective monotonicity, well-separated grouped instances
use rand::{Rng, SeedableRng};
use zeroer::features::estimate_shared_correlation;
use zeroer::model::{fit_no_transitivity, FitOptions, Regularization};
use zeroer::synth::{generate, SynthSpec};

fn main() {
    let mut worst_reg: f64 = 0.0;
    let mut worst_plain: f64 = 0.0;
    for seed in 0..50u64 {
        let mut meta = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let d = [4, 6, 8][(seed % 3) as usize];
        let n = 1500 + (seed % 4) as usize * 500;
        let pi = 0.02 + 0.13 * meta.random::<f64>();
        let mut spec = SynthSpec::well_separated(n, d, pi, seed);
        for j in 0..d {
            spec.mu_m[j] = 0.70 + 0.20 * meta.random::<f64>();
            spec.mu_u[j] = 0.08 + 0.20 * meta.random::<f64>();
            spec.lambda_m[j] = 0.05 + 0.07 * meta.random::<f64>();
            spec.lambda_u[j] = 0.05 + 0.07 * meta.random::<f64>();
        }
        spec.within_group_corr = 0.2 + 0.4 * meta.random::<f64>();
        let data = generate(&spec).unwrap();
        let fs = spec.feature_schema();
        let _r_pooled = estimate_shared_correlation(&data.x, &fs);
        let r = spec.correlation();
        for kappa_prime in [0.0, 0.01] {
            let opts = FitOptions {
                regularization: Regularization::Adaptive { kappa_prime },
                ..Default::default()
            };
            match fit_no_transitivity(&data.x, &r, &opts) {
                Ok(out) => {
                    let mut worst = 0.0f64;
                    for w in out.report.trace.windows(2) {
                        worst = worst.max(w[0] - w[1]);
                    }
                    if kappa_prime == 0.0 { worst_plain = worst_plain.max(worst); }
                    else { worst_reg = worst_reg.max(worst); }
                    if worst > 1e-8 {
                        println!("seed {seed} kp {kappa_prime}: WORST DECREASE {worst:.3e} iters {}", out.report.iterations);
                    }
                }
                Err(e) => println!("seed {seed} kp {kappa_prime}: ERROR {e}"),
            }
        }
    }
    println!("worst plain decrease: {worst_plain:.3e}");
    println!("worst reg decrease:   {worst_reg:.3e}");
}
