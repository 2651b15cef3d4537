//! The two-component Gaussian generative model and its EM fitter.
//!
//! The match and unmatch densities share one correlation matrix R (fixed
//! during EM, estimated upstream) and keep class-specific means and
//! per-feature standard deviations, so the model carries `4d + 1` free
//! parameters. Every M-step rebuilds the covariances as
//! `Sigma_C = Lambda_C R Lambda_C + K` where the diagonal K comes from the
//! adaptive regularizer.

pub mod regularize;

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocking::Scope;
use crate::error::{Error, Result};
use crate::features::{CorrelationMatrix, FeatureMatrix};
use regularize::{solve_regularizers, SolveOutcome};

/// Posteriors are clamped into `[GAMMA_FLOOR, 1 - GAMMA_FLOOR]` so the
/// free energy and the transitivity projections never divide by zero.
pub const GAMMA_FLOOR: f64 = 1e-10;

pub fn clamp_gamma(g: f64) -> f64 {
    g.clamp(GAMMA_FLOOR, 1.0 - GAMMA_FLOOR)
}

/// Per-pair match posteriors for one scope.
#[derive(Debug, Clone)]
pub struct PosteriorVector {
    pub scope: Scope,
    gamma: Vec<f64>,
}

impl PosteriorVector {
    pub fn new(scope: Scope, gamma: Vec<f64>) -> PosteriorVector {
        PosteriorVector {
            scope,
            gamma: gamma.into_iter().map(clamp_gamma).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.gamma
    }

    pub fn get(&self, i: usize) -> f64 {
        self.gamma[i]
    }

    pub fn set(&mut self, i: usize, g: f64) {
        self.gamma[i] = clamp_gamma(g);
    }

    /// Row indices predicted as matches at the 0.5 threshold.
    pub fn matches(&self) -> Vec<usize> {
        self.gamma
            .iter()
            .enumerate()
            .filter_map(|(i, &g)| (g > 0.5).then_some(i))
            .collect()
    }
}

/// One Gaussian component with its cached factorization.
#[derive(Debug, Clone)]
struct Component {
    mu: Vec<f64>,
    /// Lower Cholesky factor of the regularized covariance.
    chol: DMatrix<f64>,
    /// `-(d/2) ln(2 pi) - 1/2 ln det Sigma`
    log_norm: f64,
    /// Diagonal of `Sigma^{-1}` (for the regularization trace term).
    inv_diag: Vec<f64>,
}

impl Component {
    fn build(mu: Vec<f64>, sigma: DMatrix<f64>) -> Result<Component> {
        let d = mu.len();
        let chol = nalgebra::Cholesky::new(sigma).ok_or_else(|| {
            Error::Numerical("covariance matrix is not positive definite".into())
        })?;
        let l = chol.l();
        let mut log_det = 0.0;
        for j in 0..d {
            log_det += l[(j, j)].ln();
        }
        let log_norm = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - log_det;
        let inv = chol.inverse();
        let inv_diag = (0..d).map(|j| inv[(j, j)]).collect();
        Ok(Component {
            mu,
            chol: l.into(),
            log_norm,
            inv_diag,
        })
    }

    /// Log density via forward substitution on the Cholesky factor.
    fn log_density(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        let d = self.mu.len();
        let mut quad = 0.0;
        for i in 0..d {
            let mut z = x[i] - self.mu[i];
            for k in 0..i {
                z -= self.chol[(i, k)] * scratch[k];
            }
            z /= self.chol[(i, i)];
            scratch[i] = z;
            quad += z * z;
        }
        self.log_norm - 0.5 * quad
    }
}

/// Covariance structure used by the M-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMode {
    /// Grouped features with the shared correlation matrix (the model).
    GroupedSharedCorrelation,
    /// Ablation: diagonal covariance shared between the two classes.
    DiagonalSharedCovariance,
}

/// Variance regularization applied after the covariance rebuild.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularization {
    /// Per-feature variance chosen to raise every feature's Bhattacharyya
    /// coefficient by `kappa_prime`.
    Adaptive { kappa_prime: f64 },
    /// Ablation: one constant added to every variance.
    Uniform { kappa: f64 },
}

impl Regularization {
    pub fn kappa_prime(&self) -> f64 {
        match self {
            Regularization::Adaptive { kappa_prime } => *kappa_prime,
            Regularization::Uniform { .. } => 0.0,
        }
    }
}

/// EM fitting options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Initialization threshold on the scaled feature mean.
    pub epsilon: f64,
    pub regularization: Regularization,
    pub covariance: CovarianceMode,
    /// Convergence threshold on the objective delta.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            epsilon: 0.5,
            regularization: Regularization::Adaptive { kappa_prime: 0.01 },
            covariance: CovarianceMode::GroupedSharedCorrelation,
            tol: 1e-5,
            max_iter: 200,
        }
    }
}

/// All model parameters plus the cached covariance factorizations.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub pi_m: f64,
    pub mu_m: Vec<f64>,
    pub mu_u: Vec<f64>,
    /// Per-feature standard deviations (the diagonal of Lambda_C).
    pub lambda_m: Vec<f64>,
    pub lambda_u: Vec<f64>,
    /// Diagonal regularizer K added to both covariances.
    pub kappa: Vec<f64>,
    comp_m: Component,
    comp_u: Component,
    /// Effective class counts from the M-step that produced the params.
    pub n_m: f64,
    pub n_u: f64,
}

impl ModelParams {
    pub fn d(&self) -> usize {
        self.mu_m.len()
    }

    pub fn log_densities(&self, x: &[f64]) -> (f64, f64) {
        let mut scratch = vec![0.0; self.d()];
        (
            self.comp_m.log_density(x, &mut scratch),
            self.comp_u.log_density(x, &mut scratch),
        )
    }

    /// `(ln pi_M + ln p(x|M), ln pi_U + ln p(x|U))`
    pub fn log_weights(&self, x: &[f64]) -> (f64, f64) {
        let (lm, lu) = self.log_densities(x);
        (self.pi_m.ln() + lm, (1.0 - self.pi_m).ln() + lu)
    }

    /// Rebuild parameters (and factorizations) from raw values, e.g. when
    /// loading a checkpoint.
    pub fn from_raw(
        pi_m: f64,
        mu_m: Vec<f64>,
        mu_u: Vec<f64>,
        lambda_m: Vec<f64>,
        lambda_u: Vec<f64>,
        kappa: Vec<f64>,
        r: &CorrelationMatrix,
    ) -> Result<ModelParams> {
        let sigma_m = assemble_sigma(&lambda_m, r, &kappa);
        let sigma_u = assemble_sigma(&lambda_u, r, &kappa);
        let comp_m = Component::build(mu_m.clone(), sigma_m)?;
        let comp_u = Component::build(mu_u.clone(), sigma_u)?;
        Ok(ModelParams {
            pi_m,
            mu_m,
            mu_u,
            lambda_m,
            lambda_u,
            kappa,
            comp_m,
            comp_u,
            n_m: 0.0,
            n_u: 0.0,
        })
    }
}

fn assemble_sigma(lambda: &[f64], r: &CorrelationMatrix, kappa: &[f64]) -> DMatrix<f64> {
    let d = lambda.len();
    let mut m = DMatrix::zeros(d, d);
    for (range, block) in &r.blocks {
        for i in 0..range.len() {
            for j in 0..range.len() {
                let gi = range.start + i;
                let gj = range.start + j;
                m[(gi, gj)] = lambda[gi] * block[i][j] * lambda[gj];
            }
        }
    }
    for j in 0..d {
        m[(j, j)] += kappa[j];
    }
    m
}

/// Log density of a multivariate Gaussian, evaluated through a fresh
/// triangular factorization; the determinant is never materialized.
pub fn gaussian_log_density(x: &[f64], mu: &[f64], sigma: &DMatrix<f64>) -> Result<f64> {
    let comp = Component::build(mu.to_vec(), sigma.clone())?;
    let mut scratch = vec![0.0; mu.len()];
    Ok(comp.log_density(x, &mut scratch))
}

/// Threshold the scaled feature mean to produce hard initial posteriors.
///
/// A row lands in the match class when its mean feature value exceeds
/// `epsilon`. Errors if every row falls on one side: EM cannot separate
/// two clusters from a single-class start.
pub fn init_posteriors(x: &FeatureMatrix, epsilon: f64) -> Result<PosteriorVector> {
    let mut gamma = Vec::with_capacity(x.n);
    let mut n_hi = 0usize;
    for i in 0..x.n {
        let mean = x.row(i).iter().sum::<f64>() / x.d.max(1) as f64;
        if mean > epsilon {
            n_hi += 1;
            gamma.push(1.0);
        } else {
            gamma.push(0.0);
        }
    }
    if n_hi == 0 || n_hi == x.n {
        return Err(Error::DegenerateInit(format!(
            "epsilon {epsilon} assigns all {} rows to the {} class",
            x.n,
            if n_hi == 0 { "U" } else { "M" }
        )));
    }
    Ok(PosteriorVector::new(x.scope, gamma))
}

/// Posterior update: Bayes rule per row in log space.
pub fn e_step(x: &FeatureMatrix, theta: &ModelParams) -> PosteriorVector {
    e_step_with_weights(x, theta).0
}

/// E-step that also returns the per-row log weights
/// `(ln pi_C + ln p(x_i | theta_C))` needed by the transitivity pass.
pub fn e_step_with_weights(
    x: &FeatureMatrix,
    theta: &ModelParams,
) -> (PosteriorVector, Vec<(f64, f64)>) {
    let weights: Vec<(f64, f64)> = (0..x.n)
        .into_par_iter()
        .map(|i| theta.log_weights(x.row(i)))
        .collect();
    let gamma = weights
        .iter()
        .map(|&(lm, lu)| {
            let hi = lm.max(lu);
            let denom = (lm - hi).exp() + (lu - hi).exp();
            clamp_gamma((lm - hi).exp() / denom)
        })
        .collect();
    (PosteriorVector::new(x.scope, gamma), weights)
}

/// Closed-form M-step with feature grouping, correlation sharing, and the
/// variance regularizer. Returns the number of saturated features (those
/// whose Bhattacharyya target was capped just below 1).
pub fn m_step(
    x: &FeatureMatrix,
    gamma: &PosteriorVector,
    r: &CorrelationMatrix,
    opts: &FitOptions,
) -> Result<ModelParams> {
    let n = x.n;
    let d = x.d;
    assert_eq!(gamma.len(), n, "posterior/feature row mismatch");

    let g = gamma.values();
    let n_m: f64 = g.iter().sum();
    let n_u = n as f64 - n_m;
    for (count, class) in [(n_m, 'M'), (n_u, 'U')] {
        if count < 1e-6 {
            return Err(Error::DegenerateClass { class, count });
        }
    }

    let mut mu_m = vec![0.0f64; d];
    let mut mu_u = vec![0.0f64; d];
    for i in 0..n {
        let row = x.row(i);
        let w = g[i];
        for j in 0..d {
            mu_m[j] += w * row[j];
            mu_u[j] += (1.0 - w) * row[j];
        }
    }
    for j in 0..d {
        mu_m[j] /= n_m;
        mu_u[j] /= n_u;
    }

    let mut var_m = vec![0.0f64; d];
    let mut var_u = vec![0.0f64; d];
    for i in 0..n {
        let row = x.row(i);
        let w = g[i];
        for j in 0..d {
            let dm = row[j] - mu_m[j];
            let du = row[j] - mu_u[j];
            var_m[j] += w * dm * dm;
            var_u[j] += (1.0 - w) * du * du;
        }
    }
    for j in 0..d {
        var_m[j] /= n_m;
        var_u[j] /= n_u;
    }

    // covariance structure
    let (lambda_m, lambda_u, structure_r);
    let identity;
    match opts.covariance {
        CovarianceMode::GroupedSharedCorrelation => {
            lambda_m = var_m.iter().map(|v| v.sqrt()).collect::<Vec<_>>();
            lambda_u = var_u.iter().map(|v| v.sqrt()).collect::<Vec<_>>();
            structure_r = r;
        }
        CovarianceMode::DiagonalSharedCovariance => {
            // one diagonal covariance for both classes
            let pooled: Vec<f64> = (0..d)
                .map(|j| ((n_m * var_m[j] + n_u * var_u[j]) / n as f64).sqrt())
                .collect();
            lambda_m = pooled.clone();
            lambda_u = pooled;
            identity =
                CorrelationMatrix::identity(d, &r.blocks.iter().map(|(r, _)| r.clone()).collect::<Vec<_>>());
            structure_r = &identity;
        }
    }

    // regularizer on the reconstructed variances
    let reg_var_m: Vec<f64> = lambda_m.iter().map(|l| l * l).collect();
    let reg_var_u: Vec<f64> = lambda_u.iter().map(|l| l * l).collect();
    let kappa = match opts.regularization {
        Regularization::Adaptive { kappa_prime } => {
            let (kappa, outcomes) =
                solve_regularizers(&mu_m, &reg_var_m, &mu_u, &reg_var_u, kappa_prime);
            let saturated = outcomes
                .iter()
                .filter(|o| **o == SolveOutcome::Saturated)
                .count();
            if saturated > 0 {
                log::warn!(
                    "{saturated} feature(s) saturated the Bhattacharyya target; capped at 1-1e-6"
                );
            }
            kappa
        }
        Regularization::Uniform { kappa } => vec![kappa; d],
    };

    let sigma_m = assemble_sigma(&lambda_m, structure_r, &kappa);
    let sigma_u = assemble_sigma(&lambda_u, structure_r, &kappa);
    let comp_m = Component::build(mu_m.clone(), sigma_m)?;
    let comp_u = Component::build(mu_u.clone(), sigma_u)?;

    Ok(ModelParams {
        pi_m: n_m / n as f64,
        mu_m,
        mu_u,
        lambda_m,
        lambda_u,
        kappa,
        comp_m,
        comp_u,
        n_m,
        n_u,
    })
}

/// The EM objective with posteriors as explicit variables:
/// `sum_i sum_C gamma_iC (ln pi_C + ln p(x_i|theta_C) - ln gamma_iC)`.
pub fn free_energy(x: &FeatureMatrix, gamma: &PosteriorVector, theta: &ModelParams) -> f64 {
    let terms: Vec<f64> = (0..x.n)
        .into_par_iter()
        .map(|i| {
            let (lm, lu) = theta.log_weights(x.row(i));
            let g = gamma.get(i);
            g * (lm - g.ln()) + (1.0 - g) * (lu - (1.0 - g).ln())
        })
        .collect();
    terms.iter().sum()
}

/// Free energy with the variance-regularization penalty
/// `-(1/2) tr(K (N_M Sigma_M^{-1} + N_U Sigma_U^{-1}))`. Equal to the
/// plain free energy whenever K = 0.
pub fn regularized_free_energy(
    x: &FeatureMatrix,
    gamma: &PosteriorVector,
    theta: &ModelParams,
) -> f64 {
    let f = free_energy(x, gamma, theta);
    let n_m: f64 = gamma.values().iter().sum();
    let n_u = x.n as f64 - n_m;
    let trace: f64 = theta
        .kappa
        .iter()
        .enumerate()
        .map(|(j, &k)| k * (n_m * theta.comp_m.inv_diag[j] + n_u * theta.comp_u.inv_diag[j]))
        .sum();
    f - 0.5 * trace
}

/// Why the EM loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalRule {
    LikelihoodDelta,
    MaxIterations,
}

/// Convergence record of one fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    /// Objective value after each iteration (regularized free energy).
    pub trace: Vec<f64>,
    pub converged: bool,
    pub terminal: TerminalRule,
}

/// A fitted model with its posteriors and convergence report.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: ModelParams,
    pub posteriors: PosteriorVector,
    pub report: FitReport,
}

/// How many trailing posterior vectors are averaged when EM hits the
/// iteration cap without converging.
pub const TAIL_AVERAGE_WINDOW: usize = 20;

pub(crate) fn average_tail(history: &VecDeque<Vec<f64>>, scope: Scope) -> PosteriorVector {
    let n = history.front().map(|v| v.len()).unwrap_or(0);
    let mut avg = vec![0.0f64; n];
    for g in history {
        for (a, &v) in avg.iter_mut().zip(g.iter()) {
            *a += v;
        }
    }
    let count = history.len().max(1) as f64;
    for a in &mut avg {
        *a /= count;
    }
    PosteriorVector::new(scope, avg)
}

/// EM without transitivity: alternate the closed-form M-step and the
/// Bayes-rule E-step from thresholded initial posteriors until the
/// objective delta drops below `tol` or the iteration cap is hit. On a
/// cap exit the returned posteriors are the element-wise mean of the last
/// 20 iterations, which damps oscillating tails.
pub fn fit_no_transitivity(
    x: &FeatureMatrix,
    r: &CorrelationMatrix,
    opts: &FitOptions,
) -> Result<FitOutcome> {
    if x.n < 2 || x.d == 0 {
        return Err(Error::DegenerateInit(format!(
            "need at least 2 rows and 1 feature, got {}x{}",
            x.n, x.d
        )));
    }
    let mut gamma = init_posteriors(x, opts.epsilon)?;
    let mut trace = Vec::new();
    let mut history: VecDeque<Vec<f64>> = VecDeque::with_capacity(TAIL_AVERAGE_WINDOW);
    let mut prev_obj = f64::NEG_INFINITY;
    let mut converged = false;
    let mut params: Option<ModelParams> = None;

    for _ in 0..opts.max_iter {
        let theta = m_step(x, &gamma, r, opts)?;
        gamma = e_step(x, &theta);
        let obj = regularized_free_energy(x, &gamma, &theta);
        trace.push(obj);
        if history.len() == TAIL_AVERAGE_WINDOW {
            history.pop_front();
        }
        history.push_back(gamma.values().to_vec());
        params = Some(theta);
        if prev_obj.is_finite() && (obj - prev_obj).abs() < opts.tol {
            converged = true;
            break;
        }
        prev_obj = obj;
    }

    let params = params.expect("max_iter >= 1");
    let terminal = if converged {
        TerminalRule::LikelihoodDelta
    } else {
        gamma = average_tail(&history, x.scope);
        TerminalRule::MaxIterations
    };
    let report = FitReport {
        iterations: trace.len(),
        trace,
        converged,
        terminal,
    };
    Ok(FitOutcome {
        params,
        posteriors: gamma,
        report,
    })
}

/// Self-describing model checkpoint.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub d: usize,
    /// Feature-group layout as (start, end) index ranges.
    pub groups: Vec<(usize, usize)>,
    pub pi_m: f64,
    pub mu_m: Vec<f64>,
    pub mu_u: Vec<f64>,
    pub lambda_m: Vec<f64>,
    pub lambda_u: Vec<f64>,
    pub kappa: Vec<f64>,
    pub r: CorrelationMatrix,
}

impl Checkpoint {
    pub const VERSION: u32 = 1;

    pub fn from_params(params: &ModelParams, r: &CorrelationMatrix) -> Checkpoint {
        Checkpoint {
            version: Self::VERSION,
            d: params.d(),
            groups: r.blocks.iter().map(|(r, _)| (r.start, r.end)).collect(),
            pi_m: params.pi_m,
            mu_m: params.mu_m.clone(),
            mu_u: params.mu_u.clone(),
            lambda_m: params.lambda_m.clone(),
            lambda_u: params.lambda_u.clone(),
            kappa: params.kappa.clone(),
            r: r.clone(),
        }
    }

    pub fn to_params(&self) -> Result<ModelParams> {
        ModelParams::from_raw(
            self.pi_m,
            self.mu_m.clone(),
            self.mu_u.clone(),
            self.lambda_m.clone(),
            self.lambda_u.clone(),
            self.kappa.clone(),
            &self.r,
        )
    }

    /// Number of free model parameters; R and K are derived, not free.
    pub fn free_parameter_count(&self) -> usize {
        1 + self.mu_m.len() + self.mu_u.len() + self.lambda_m.len() + self.lambda_u.len()
    }
}
