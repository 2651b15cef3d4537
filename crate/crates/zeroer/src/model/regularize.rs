//! Adaptive variance regularization.
//!
//! Every feature receives its own additive variance term chosen so the
//! overlap between the two class distributions, measured by the
//! Bhattacharyya coefficient, increases by the same amount on all
//! features. Dominating near-degenerate features are flattened hard while
//! already-broad features are barely touched.

/// Bhattacharyya coefficient of two 1-D Gaussians; 1 = identical, 0 = disjoint.
///
/// Closed form over (mean, variance) pairs:
/// `exp[-ln((vm/vu + vu/vm + 2)/4)/4 - (dm)^2 / (4 (vm + vu))]`.
pub fn bhattacharyya_coefficient(mu_m: f64, var_m: f64, mu_u: f64, var_u: f64) -> f64 {
    const TINY: f64 = 1e-300;
    if var_m <= TINY && var_u <= TINY {
        // two point masses: full overlap iff they coincide
        return if mu_m == mu_u { 1.0 } else { 0.0 };
    }
    if var_m <= TINY || var_u <= TINY {
        // a point mass against a spread distribution: the ln term diverges
        return 0.0;
    }
    let ln_term = 0.25 * ((var_m / var_u + var_u / var_m + 2.0) / 4.0).ln();
    let mean_term = 0.25 * (mu_m - mu_u).powi(2) / (var_m + var_u);
    (-ln_term - mean_term).exp()
}

/// d/dkappa of `bhattacharyya_coefficient(mu_m, var_m + k, mu_u, var_u + k)`.
fn bc_derivative(mu_m: f64, var_m: f64, mu_u: f64, var_u: f64, k: f64) -> f64 {
    let a = var_m + k;
    let b = var_u + k;
    let bc = bhattacharyya_coefficient(mu_m, a, mu_u, b);
    let dm2 = (mu_m - mu_u).powi(2);
    let dl = 4.0 / (a + b) - 1.0 / a - 1.0 / b;
    let dd = -2.0 * dm2 / (a + b).powi(2);
    -0.25 * bc * (dl + dd)
}

/// Outcome of the per-feature regularizer solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveOutcome {
    /// The target `BC + kappa_prime` was reached exactly.
    Solved,
    /// The target was at or above 1; the variance bump drives BC to
    /// `1 - 1e-6` instead (or the feature already sits there).
    Saturated,
}

const RESIDUAL_TOL: f64 = 1e-10;
const MAX_ITER: usize = 100;

/// Solve `BC(var_m + k, var_u + k) = target` for `k >= 0` by
/// Newton-Raphson with a bisection safeguard. The BC is monotone
/// nondecreasing in `k`, so a bracket always exists.
fn solve_to_target(mu_m: f64, var_m: f64, mu_u: f64, var_u: f64, target: f64) -> f64 {
    let bc_at = |k: f64| bhattacharyya_coefficient(mu_m, var_m + k, mu_u, var_u + k);
    let g = |k: f64| bc_at(k) - target;

    if g(0.0) >= 0.0 {
        return 0.0;
    }

    // grow the bracket until BC overshoots the target
    let mut hi = (var_m + var_u).max(1e-12);
    let mut grow = 0;
    while g(hi) < 0.0 {
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            // target numerically unreachable (BC plateaus below it)
            return hi;
        }
    }
    let mut lo = 0.0f64;

    let mut k = (var_m + var_u).clamp(lo, hi);
    for _ in 0..MAX_ITER {
        let gk = g(k);
        if gk.abs() < RESIDUAL_TOL {
            return k;
        }
        if gk < 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let dg = bc_derivative(mu_m, var_m, mu_u, var_u, k);
        let newton = if dg > 0.0 { k - gk / dg } else { f64::NAN };
        k = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    k
}

/// Solve the per-feature regularizer for every feature.
///
/// `kappa_prime` is the uniform BC increase. Features whose target
/// overlap `BC_j + kappa_prime` reaches 1 are saturated: they get the
/// variance that drives their BC to `1 - 1e-6` and are reported so the
/// caller can warn.
pub fn solve_regularizers(
    mu_m: &[f64],
    var_m: &[f64],
    mu_u: &[f64],
    var_u: &[f64],
    kappa_prime: f64,
) -> (Vec<f64>, Vec<SolveOutcome>) {
    let d = mu_m.len();
    if kappa_prime == 0.0 {
        return (vec![0.0; d], vec![SolveOutcome::Solved; d]);
    }
    let mut kappa = vec![0.0f64; d];
    let mut outcomes = vec![SolveOutcome::Solved; d];
    for j in 0..d {
        let bc = bhattacharyya_coefficient(mu_m[j], var_m[j], mu_u[j], var_u[j]);
        let raw_target = bc + kappa_prime;
        let (target, outcome) = if raw_target >= 1.0 {
            (1.0 - 1e-6, SolveOutcome::Saturated)
        } else {
            (raw_target, SolveOutcome::Solved)
        };
        kappa[j] = solve_to_target(mu_m[j], var_m[j], mu_u[j], var_u[j], target);
        // keep the regularized variance bounded away from zero so the
        // covariance stays invertible even for fully degenerate features
        let floor = 1e-8;
        let min_var = var_m[j].min(var_u[j]);
        if min_var + kappa[j] < floor {
            kappa[j] = floor - min_var;
        }
        outcomes[j] = outcome;
    }
    (kappa, outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn identical_distributions_give_one() {
        assert_eq!(bhattacharyya_coefficient(0.3, 0.04, 0.3, 0.04), 1.0);
    }

    #[test]
    fn hand_value_e_to_minus_half() {
        // mu 1 vs 0, both variances 0.25: ln term vanishes, mean term = 1/2
        let bc = bhattacharyya_coefficient(1.0, 0.25, 0.0, 0.25);
        assert_abs_diff_eq!(bc, (-0.5f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn far_apart_means_vanish() {
        let bc = bhattacharyya_coefficient(1e6, 0.25, 0.0, 0.25);
        assert!(bc < 1e-30);
    }

    #[test]
    fn zero_variance_conventions() {
        assert_eq!(bhattacharyya_coefficient(0.5, 0.0, 0.5, 0.0), 1.0);
        assert_eq!(bhattacharyya_coefficient(0.5, 0.0, 0.1, 0.0), 0.0);
        assert_eq!(bhattacharyya_coefficient(0.5, 0.0, 0.5, 0.2), 0.0);
    }

    #[test]
    fn quadrature_oracle_matches_closed_form() {
        // BC = integral of sqrt(p_M(x) p_U(x)) dx, by composite Simpson
        let cases = [
            (1.0, 0.25, 0.0, 0.25),
            (0.9, 0.01, 0.1, 0.04),
            (0.5, 0.3, 0.45, 0.02),
        ];
        for (mm, vm, mu, vu) in cases {
            let bc = bhattacharyya_coefficient(mm, vm, mu, vu);
            let oracle = bc_quadrature(mm, vm, mu, vu);
            assert_abs_diff_eq!(bc, oracle, epsilon = 1e-9);
        }
    }

    fn bc_quadrature(mu_m: f64, var_m: f64, mu_u: f64, var_u: f64) -> f64 {
        let sm = var_m.sqrt();
        let su = var_u.sqrt();
        let lo = (mu_m - 12.0 * sm).min(mu_u - 12.0 * su);
        let hi = (mu_m + 12.0 * sm).max(mu_u + 12.0 * su);
        let n = 200_001;
        let h = (hi - lo) / (n - 1) as f64;
        let pdf = |x: f64, mu: f64, var: f64| {
            (-0.5 * (x - mu).powi(2) / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
        };
        let f = |x: f64| (pdf(x, mu_m, var_m) * pdf(x, mu_u, var_u)).sqrt();
        let mut s = f(lo) + f(hi);
        for i in 1..n - 1 {
            let x = lo + i as f64 * h;
            s += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn zero_kappa_prime_is_identity() {
        let (k, _) = solve_regularizers(&[0.9, 0.1], &[0.01, 0.2], &[0.1, 0.3], &[0.02, 0.1], 0.0);
        assert_eq!(k, vec![0.0, 0.0]);
    }

    #[test]
    fn solved_kappa_matches_bisection_oracle() {
        // mu 1 vs 0, vars 0.25, kappa' = 0.01: BC' must equal ~0.6165
        let (mm, vm, mu, vu) = (1.0, 0.25, 0.0, 0.25);
        let target = bhattacharyya_coefficient(mm, vm, mu, vu) + 0.01;
        let (k, out) = solve_regularizers(&[mm], &[vm], &[mu], &[vu], 0.01);
        assert_eq!(out[0], SolveOutcome::Solved);
        let bc_after = bhattacharyya_coefficient(mm, vm + k[0], mu, vu + k[0]);
        assert_abs_diff_eq!(bc_after, target, epsilon = 1e-9);
        assert_abs_diff_eq!(bc_after, 0.6165307, epsilon = 1e-4);

        // independent pure-bisection oracle
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if bhattacharyya_coefficient(mm, vm + mid, mu, vu + mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_abs_diff_eq!(k[0], 0.5 * (lo + hi), epsilon = 1e-7);
    }

    #[test]
    fn degenerate_feature_gets_larger_kappa() {
        // a near-degenerate and a broad feature receive the same BC
        // increase, which costs the degenerate one far more variance
        let mu_m = [1.0, 0.8];
        let var_m = [1e-8, 0.04];
        let mu_u = [0.0, 0.2];
        let var_u = [1e-8, 0.05];
        let kp = 0.05;
        let (k, out) = solve_regularizers(&mu_m, &var_m, &mu_u, &var_u, kp);
        assert_eq!(out, vec![SolveOutcome::Solved; 2]);
        assert!(k[0] > k[1], "degenerate {} <= broad {}", k[0], k[1]);
        for j in 0..2 {
            let before = bhattacharyya_coefficient(mu_m[j], var_m[j], mu_u[j], var_u[j]);
            let after =
                bhattacharyya_coefficient(mu_m[j], var_m[j] + k[j], mu_u[j], var_u[j] + k[j]);
            assert_abs_diff_eq!(after - before, kp, epsilon = 1e-8);
        }
    }

    #[test]
    fn saturated_feature_lands_just_below_one() {
        // overlap already 0.995: +0.01 overshoots 1, solver saturates
        let (mm, vm, mu, vu) = (0.5, 0.1, 0.5005, 0.1);
        let bc = bhattacharyya_coefficient(mm, vm, mu, vu);
        assert!(bc + 0.01 >= 1.0);
        let (k, out) = solve_regularizers(&[mm], &[vm], &[mu], &[vu], 0.01);
        assert_eq!(out[0], SolveOutcome::Saturated);
        let after = bhattacharyya_coefficient(mm, vm + k[0], mu, vu + k[0]);
        assert!(after >= 1.0 - 2e-6);
    }

    #[test]
    fn equal_bc_increase_across_random_draws() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let mm: f64 = rng.random_range(0.0..1.0);
            let mu: f64 = rng.random_range(0.0..1.0);
            let vm: f64 = rng.random_range(1e-6..0.3);
            let vu: f64 = rng.random_range(1e-6..0.3);
            let kp: f64 = rng.random_range(0.001..0.05);
            let before = bhattacharyya_coefficient(mm, vm, mu, vu);
            let (k, out) = solve_regularizers(&[mm], &[vm], &[mu], &[vu], kp);
            if out[0] == SolveOutcome::Solved {
                let after = bhattacharyya_coefficient(mm, vm + k[0], mu, vu + k[0]);
                assert!(
                    ((after - before) - kp).abs() < 1e-8,
                    "increase {} != {kp}",
                    after - before
                );
            }
        }
    }
}
