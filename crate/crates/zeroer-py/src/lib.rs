//! Python bindings exposing the main types and operations: table loading,
//! candidate generation, featurization, the EM fitters, and evaluation.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use zeroer::blocking::{block_candidates, cross_join, BlockingConfig, Scope};
use zeroer::error::Error;
use zeroer::eval::{evaluate as eval_pairs, GoldLabels};
use zeroer::features::{
    build_feature_schema, estimate_shared_correlation, featurize, FeatureMatrix,
};
use zeroer::ingest::{align_schemas, load_table};
use zeroer::model::{
    fit_no_transitivity, regularize, FitOptions, Regularization,
};
use zeroer::synth::{generate, SynthSpec};
use zeroer::transitivity::{fit_full, ScopeData};

fn err(e: Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// An immutable loaded relation.
#[pyclass(name = "Table", frozen)]
struct PyTable {
    inner: zeroer::ingest::Table,
}

#[pymethods]
impl PyTable {
    /// Load a delimited UTF-8 file with a header row.
    #[staticmethod]
    #[pyo3(signature = (path, id_column="id", delimiter=","))]
    fn load(path: PathBuf, id_column: &str, delimiter: &str) -> PyResult<PyTable> {
        if delimiter.len() != 1 {
            return Err(PyValueError::new_err("delimiter must be one character"));
        }
        let inner = load_table(&path, id_column, delimiter.as_bytes()[0]).map_err(err)?;
        Ok(PyTable { inner })
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn attributes(&self) -> Vec<String> {
        self.inner.attributes.clone()
    }

    fn ids(&self) -> Vec<String> {
        (0..self.inner.len())
            .map(|i| self.inner.id_of(i).to_string())
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Table(name={:?}, rows={}, attributes={})",
            self.inner.name,
            self.inner.len(),
            self.inner.attributes.len()
        )
    }
}

/// Result of a fit: predicted matches and convergence data.
#[pyclass(name = "MatchResult", frozen)]
struct PyMatchResult {
    #[pyo3(get)]
    matches: Vec<(String, String, f64)>,
    #[pyo3(get)]
    gamma: Vec<f64>,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    trace: Vec<f64>,
    #[pyo3(get)]
    pi_m: f64,
}

#[pymethods]
impl PyMatchResult {
    fn __repr__(&self) -> String {
        format!(
            "MatchResult(matches={}, converged={}, iterations={})",
            self.matches.len(),
            self.converged,
            self.iterations
        )
    }
}

/// Bhattacharyya coefficient of two 1-D Gaussians.
#[pyfunction]
fn bhattacharyya_coefficient(mu_m: f64, var_m: f64, mu_u: f64, var_u: f64) -> f64 {
    regularize::bhattacharyya_coefficient(mu_m, var_m, mu_u, var_u)
}

/// Per-feature variance regularizers achieving a uniform BC increase.
#[pyfunction]
fn solve_regularizers(
    mu_m: Vec<f64>,
    var_m: Vec<f64>,
    mu_u: Vec<f64>,
    var_u: Vec<f64>,
    kappa_prime: f64,
) -> PyResult<Vec<f64>> {
    if mu_m.len() != var_m.len() || mu_m.len() != mu_u.len() || mu_m.len() != var_u.len() {
        return Err(PyValueError::new_err("parameter vectors must share length"));
    }
    let (kappa, _) = regularize::solve_regularizers(&mu_m, &var_m, &mu_u, &var_u, kappa_prime);
    Ok(kappa)
}

fn fit_options(epsilon: f64, kappa_prime: f64, tol: f64, max_iter: usize) -> FitOptions {
    FitOptions {
        epsilon,
        regularization: Regularization::Adaptive { kappa_prime },
        tol,
        max_iter,
        ..FitOptions::default()
    }
}

/// End-to-end matching of two loaded tables (or one table against itself
/// for deduplication when `right` is None).
#[pyfunction]
#[pyo3(signature = (left, right=None, transitivity=true, epsilon=0.5, kappa_prime=0.01,
                    tol=1e-5, max_iter=200, blocking_attribute=None, blocking_bands=8,
                    blocking_rows=4, blocking_seed=0x5eed_b10c))]
#[allow(clippy::too_many_arguments)]
fn match_tables(
    left: &PyTable,
    right: Option<&PyTable>,
    transitivity: bool,
    epsilon: f64,
    kappa_prime: f64,
    tol: f64,
    max_iter: usize,
    blocking_attribute: Option<String>,
    blocking_bands: usize,
    blocking_rows: usize,
    blocking_seed: u64,
) -> PyResult<PyMatchResult> {
    let lt = &left.inner;
    let dedup = right.is_none();
    let rt = right.map(|r| &r.inner).unwrap_or(lt);

    let schema = align_schemas(lt, rt, None).map_err(err)?;
    let fs = build_feature_schema(&schema);

    let candidates = |scope: Scope| -> PyResult<zeroer::blocking::CandidateSet> {
        match &blocking_attribute {
            Some(attr) => block_candidates(
                lt,
                rt,
                scope,
                &BlockingConfig {
                    attribute: attr.clone(),
                    q: 3,
                    bands: blocking_bands,
                    rows_per_band: blocking_rows,
                    seed: blocking_seed,
                },
            )
            .map_err(err),
            None => Ok(cross_join(lt, rt, scope)),
        }
    };

    let opts = fit_options(epsilon, kappa_prime, tol, max_iter);
    let scope0 = if dedup { Scope::Left } else { Scope::Cross };
    let cands = candidates(scope0)?;
    let x = featurize(&cands, lt, rt, &fs).map_err(err)?;
    let r = estimate_shared_correlation(&x, &fs);

    let ids = |t: &zeroer::ingest::Table, row: u32| t.id_of(row as usize).to_string();

    if transitivity {
        let (wl, wr, xl, xr, rl, rr);
        let (left_scope, right_scope) = if dedup {
            (None, None)
        } else {
            wl = candidates(Scope::Left)?;
            xl = featurize(&wl, lt, rt, &fs).map_err(err)?;
            rl = estimate_shared_correlation(&xl, &fs);
            wr = candidates(Scope::Right)?;
            xr = featurize(&wr, lt, rt, &fs).map_err(err)?;
            rr = estimate_shared_correlation(&xr, &fs);
            (
                Some(ScopeData {
                    x: &xl,
                    r: &rl,
                    pairs: &wl.pairs,
                }),
                Some(ScopeData {
                    x: &xr,
                    r: &rr,
                    pairs: &wr.pairs,
                }),
            )
        };
        let out = fit_full(
            ScopeData {
                x: &x,
                r: &r,
                pairs: &cands.pairs,
            },
            left_scope,
            right_scope,
            dedup,
            &opts,
        )
        .map_err(err)?;
        let matches = out
            .matches
            .iter()
            .map(|&row| {
                let (a, b) = cands.pairs[row];
                (ids(lt, a), ids(rt, b), out.state.cross.gamma.get(row))
            })
            .collect();
        Ok(PyMatchResult {
            matches,
            gamma: out.state.cross.gamma.values().to_vec(),
            converged: out.report.converged,
            iterations: out.report.iterations,
            trace: out.report.trace.clone(),
            pi_m: out
                .state
                .cross
                .params
                .as_ref()
                .map(|p| p.pi_m)
                .unwrap_or(f64::NAN),
        })
    } else {
        let out = fit_no_transitivity(&x, &r, &opts).map_err(err)?;
        let matches = out
            .posteriors
            .matches()
            .into_iter()
            .map(|row| {
                let (a, b) = cands.pairs[row];
                (ids(lt, a), ids(rt, b), out.posteriors.get(row))
            })
            .collect();
        Ok(PyMatchResult {
            matches,
            gamma: out.posteriors.values().to_vec(),
            converged: out.report.converged,
            iterations: out.report.iterations,
            trace: out.report.trace.clone(),
            pi_m: out.params.pi_m,
        })
    }
}

/// Draw labeled feature rows from a seeded two-component Gaussian.
#[pyfunction]
#[pyo3(signature = (n, d, pi_m, seed))]
fn generate_synthetic(n: usize, d: usize, pi_m: f64, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<bool>)> {
    let spec = SynthSpec::well_separated(n, d, pi_m, seed);
    let data = generate(&spec).map_err(err)?;
    let rows = (0..n).map(|i| data.x.row(i).to_vec()).collect();
    Ok((rows, data.labels))
}

/// Fit the generative model on a dense feature matrix (rows in [0,1]).
#[pyfunction]
#[pyo3(signature = (rows, group_sizes, epsilon=0.5, kappa_prime=0.01, tol=1e-5, max_iter=200))]
fn fit_features(
    rows: Vec<Vec<f64>>,
    group_sizes: Vec<usize>,
    epsilon: f64,
    kappa_prime: f64,
    tol: f64,
    max_iter: usize,
) -> PyResult<PyMatchResult> {
    let n = rows.len();
    let d = rows.first().map(|r| r.len()).unwrap_or(0);
    if group_sizes.iter().sum::<usize>() != d {
        return Err(PyValueError::new_err("group sizes must sum to the row width"));
    }
    let mut values = Vec::with_capacity(n * d);
    for r in &rows {
        if r.len() != d {
            return Err(PyValueError::new_err("ragged feature rows"));
        }
        values.extend_from_slice(r);
    }
    let x = FeatureMatrix::from_scaled(Scope::Cross, n, d, values);
    let mut ranges = Vec::new();
    let mut start = 0;
    for &g in &group_sizes {
        ranges.push(start..start + g);
        start += g;
    }
    let fs_schema = {
        // structural grouping only; the correlation estimate needs ranges
        use zeroer::features::{FeatureGroup, FeatureSchema};
        use zeroer::features::simfns::SimFn;
        use zeroer::ingest::AttrType;
        FeatureSchema {
            groups: group_sizes
                .iter()
                .enumerate()
                .map(|(g, &size)| FeatureGroup {
                    left_attr: format!("g{g}"),
                    right_attr: format!("g{g}"),
                    tag: AttrType::Numeric,
                    fns: vec![SimFn::AbsDiffSim; size],
                })
                .collect(),
            d,
        }
    };
    let r = estimate_shared_correlation(&x, &fs_schema);
    let out = fit_no_transitivity(&x, &r, &fit_options(epsilon, kappa_prime, tol, max_iter))
        .map_err(err)?;
    let matches = out
        .posteriors
        .matches()
        .into_iter()
        .map(|row| (row.to_string(), row.to_string(), out.posteriors.get(row)))
        .collect();
    Ok(PyMatchResult {
        matches,
        gamma: out.posteriors.values().to_vec(),
        converged: out.report.converged,
        iterations: out.report.iterations,
        trace: out.report.trace.clone(),
        pi_m: out.params.pi_m,
    })
}

/// Precision / recall / F1 of predicted vs gold pairs.
#[pyfunction]
fn evaluate(
    predicted: Vec<(String, String)>,
    gold: Vec<(String, String)>,
) -> PyResult<std::collections::HashMap<String, f64>> {
    let gold = GoldLabels::from_pairs(gold);
    let report = eval_pairs(&predicted, &gold);
    let mut out = std::collections::HashMap::new();
    out.insert("precision".to_string(), report.precision);
    out.insert("recall".to_string(), report.recall);
    out.insert("f1".to_string(), report.f1);
    out.insert("tp".to_string(), report.tp as f64);
    out.insert("fp".to_string(), report.fp as f64);
    out.insert("fn".to_string(), report.fn_ as f64);
    Ok(out)
}

/// Run the full pipeline from a config file; returns the eval metrics
/// when gold labels are configured.
#[pyfunction]
#[pyo3(signature = (config_path, overrides=vec![]))]
fn run_pipeline(
    config_path: PathBuf,
    overrides: Vec<String>,
) -> PyResult<(usize, bool, Option<f64>)> {
    let cfg = zeroer::config::RunConfig::from_path_with_overrides(&config_path, &overrides)
        .map_err(err)?;
    let artifacts = zeroer::pipeline::run(&cfg).map_err(err)?;
    Ok((
        artifacts.matches.len(),
        artifacts.fit_report.converged,
        artifacts.eval_report.map(|r| r.f1),
    ))
}

#[pymodule]
fn zeroer_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTable>()?;
    m.add_class::<PyMatchResult>()?;
    m.add_function(wrap_pyfunction!(bhattacharyya_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(solve_regularizers, m)?)?;
    m.add_function(wrap_pyfunction!(match_tables, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(fit_features, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
