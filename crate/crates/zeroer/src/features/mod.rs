//! Grouped similarity features, min-max scaling, and the shared
//! block-diagonal correlation matrix.

pub mod simfns;

use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocking::{CandidateSet, Scope};
use crate::error::{Error, Result};
use crate::ingest::{AlignedSchema, AttrType, Table};
use simfns::{bank_for, evaluate, prepare, PreparedValue, SimFn};

/// The features derived from one aligned attribute. Groups define the
/// block structure of the correlation matrix: features inside a group are
/// modeled as dependent, features across groups as independent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub left_attr: String,
    pub right_attr: String,
    pub tag: AttrType,
    pub fns: Vec<SimFn>,
}

/// Ordered feature layout: one group per aligned attribute.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub groups: Vec<FeatureGroup>,
    pub d: usize,
}

impl FeatureSchema {
    pub fn group_ranges(&self) -> Vec<Range<usize>> {
        let mut out = Vec::with_capacity(self.groups.len());
        let mut start = 0;
        for g in &self.groups {
            out.push(start..start + g.fns.len());
            start += g.fns.len();
        }
        out
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.groups
            .iter()
            .flat_map(|g| {
                g.fns
                    .iter()
                    .map(move |f| format!("{}.{}", g.left_attr, f.name()))
            })
            .collect()
    }
}

/// Instantiate the default similarity bank for every aligned attribute.
pub fn build_feature_schema(schema: &AlignedSchema) -> FeatureSchema {
    let groups: Vec<FeatureGroup> = schema
        .pairs
        .iter()
        .map(|p| FeatureGroup {
            left_attr: p.left.clone(),
            right_attr: p.right.clone(),
            tag: p.tag,
            fns: bank_for(p.tag).to_vec(),
        })
        .collect();
    let d = groups.iter().map(|g| g.fns.len()).sum();
    FeatureSchema { groups, d }
}

/// Per-feature min-max scaler fitted on one scope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scaler {
    /// (min, max) of the raw non-missing values per feature.
    pub bounds: Vec<(f64, f64)>,
}

impl Scaler {
    pub fn transform(&self, j: usize, v: f64) -> f64 {
        let (lo, hi) = self.bounds[j];
        if hi > lo {
            ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            // zero-variance feature: park it at the midpoint
            0.5
        }
    }
}

/// N pairs x d scaled feature values for one scope, with the scaler and
/// the pre-imputation missing mask.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub scope: Scope,
    pub n: usize,
    pub d: usize,
    values: Vec<f64>,
    pub missing: Vec<bool>,
    pub scaler: Scaler,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column_mean(&self, j: usize) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (0..self.n).map(|i| self.values[i * self.d + j]).sum::<f64>() / self.n as f64
    }

    pub fn column_variance(&self, j: usize) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let mean = self.column_mean(j);
        (0..self.n)
            .map(|i| {
                let v = self.values[i * self.d + j] - mean;
                v * v
            })
            .sum::<f64>()
            / self.n as f64
    }

    /// Row subset preserving scaler and scope (fit-on-subsample studies).
    pub fn subset(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.d);
        let mut missing = Vec::with_capacity(rows.len() * self.d);
        for &i in rows {
            values.extend_from_slice(self.row(i));
            missing.extend_from_slice(&self.missing[i * self.d..(i + 1) * self.d]);
        }
        FeatureMatrix {
            scope: self.scope,
            n: rows.len(),
            d: self.d,
            values,
            missing,
            scaler: self.scaler.clone(),
        }
    }

    /// Assemble a matrix directly from already-scaled values; used by the
    /// synthetic generator whose draws live in [0,1] by construction.
    pub fn from_scaled(scope: Scope, n: usize, d: usize, values: Vec<f64>) -> FeatureMatrix {
        assert_eq!(values.len(), n * d);
        FeatureMatrix {
            scope,
            n,
            d,
            values,
            missing: vec![false; n * d],
            scaler: Scaler {
                bounds: vec![(0.0, 1.0); d],
            },
        }
    }
}

fn prepared_column(table: &Table, col: usize) -> Vec<Option<PreparedValue>> {
    (0..table.len())
        .into_par_iter()
        .map(|row| table.value(row, col).map(prepare))
        .collect()
}

/// Compute the grouped similarity matrix for a candidate set, then min-max
/// scale per feature and impute missing cells with the scaled column mean.
///
/// The schema's left/right attributes are read from the tables the scope
/// dictates: cross pairs compare left vs right, within-table pairs compare
/// the same table's attribute on both sides.
pub fn featurize(
    pairs: &CandidateSet,
    left: &Table,
    right: &Table,
    fs: &FeatureSchema,
) -> Result<FeatureMatrix> {
    let (table_a, table_b) = match pairs.scope {
        Scope::Cross => (left, right),
        Scope::Left => (left, left),
        Scope::Right => (right, right),
    };

    for &(i, j) in &pairs.pairs {
        if (i as usize) >= table_a.len() || (j as usize) >= table_b.len() {
            return Err(Error::UnresolvedId {
                id: format!("({i},{j})"),
                scope: pairs.scope.to_string(),
            });
        }
    }

    // prepare every referenced column once per side
    let mut cols_a = Vec::with_capacity(fs.groups.len());
    let mut cols_b = Vec::with_capacity(fs.groups.len());
    for g in &fs.groups {
        let (attr_a, attr_b) = match pairs.scope {
            Scope::Cross => (&g.left_attr, &g.right_attr),
            Scope::Left => (&g.left_attr, &g.left_attr),
            Scope::Right => (&g.right_attr, &g.right_attr),
        };
        let ca = table_a
            .attribute_index(attr_a)
            .ok_or_else(|| Error::UnknownAttribute {
                table: table_a.name.clone(),
                attribute: attr_a.clone(),
            })?;
        let cb = table_b
            .attribute_index(attr_b)
            .ok_or_else(|| Error::UnknownAttribute {
                table: table_b.name.clone(),
                attribute: attr_b.clone(),
            })?;
        cols_a.push(prepared_column(table_a, ca));
        cols_b.push(prepared_column(table_b, cb));
    }

    let n = pairs.len();
    let d = fs.d;
    let rows: Vec<(Vec<f64>, Vec<bool>)> = pairs
        .pairs
        .par_iter()
        .map(|&(a, b)| {
            let mut vals = vec![0.0f64; d];
            let mut miss = vec![false; d];
            let mut k = 0;
            for (g, group) in fs.groups.iter().enumerate() {
                let va = cols_a[g][a as usize].as_ref();
                let vb = cols_b[g][b as usize].as_ref();
                for &f in &group.fns {
                    match (va, vb) {
                        (Some(x), Some(y)) => match evaluate(f, x, y) {
                            Some(v) => vals[k] = v,
                            None => miss[k] = true,
                        },
                        _ => miss[k] = true,
                    }
                    k += 1;
                }
            }
            (vals, miss)
        })
        .collect();

    let mut values = Vec::with_capacity(n * d);
    let mut missing = Vec::with_capacity(n * d);
    for (v, m) in rows {
        values.extend(v);
        missing.extend(m);
    }

    // fit the scaler on non-missing raw values
    let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
    for i in 0..n {
        for j in 0..d {
            if !missing[i * d + j] {
                let v = values[i * d + j];
                let b = &mut bounds[j];
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
    }
    for b in &mut bounds {
        if !b.0.is_finite() {
            // all-missing feature
            *b = (0.0, 0.0);
        }
    }
    let scaler = Scaler { bounds };

    // scale, then impute missing cells with the scaled column mean
    for i in 0..n {
        for j in 0..d {
            if !missing[i * d + j] {
                values[i * d + j] = scaler.transform(j, values[i * d + j]);
            }
        }
    }
    let mut col_mean = vec![0.5f64; d];
    for j in 0..d {
        let mut sum = 0.0;
        let mut cnt = 0usize;
        for i in 0..n {
            if !missing[i * d + j] {
                sum += values[i * d + j];
                cnt += 1;
            }
        }
        if cnt > 0 {
            col_mean[j] = sum / cnt as f64;
        }
    }
    for i in 0..n {
        for j in 0..d {
            if missing[i * d + j] {
                values[i * d + j] = col_mean[j];
            }
        }
    }

    Ok(FeatureMatrix {
        scope: pairs.scope,
        n,
        d,
        values,
        missing,
        scaler,
    })
}

/// The shared correlation matrix R: block-diagonal by feature group, unit
/// diagonal, each block repaired to be positive semidefinite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub d: usize,
    /// (feature range, dense block) per group.
    pub blocks: Vec<(Range<usize>, Vec<Vec<f64>>)>,
}

impl CorrelationMatrix {
    pub fn identity(d: usize, ranges: &[Range<usize>]) -> CorrelationMatrix {
        let blocks = ranges
            .iter()
            .map(|r| {
                let k = r.len();
                let mut m = vec![vec![0.0; k]; k];
                for (i, row) in m.iter_mut().enumerate() {
                    row[i] = 1.0;
                }
                (r.clone(), m)
            })
            .collect();
        CorrelationMatrix { d, blocks }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        for (r, m) in &self.blocks {
            if r.contains(&i) {
                return if r.contains(&j) {
                    m[i - r.start][j - r.start]
                } else {
                    0.0
                };
            }
        }
        0.0
    }

    /// Assemble the dense d x d matrix.
    pub fn full(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.d, self.d);
        for (r, b) in &self.blocks {
            for i in 0..r.len() {
                for j in 0..r.len() {
                    m[(r.start + i, r.start + j)] = b[i][j];
                }
            }
        }
        m
    }
}

/// Pearson correlation per group over a row subset, with PSD repair.
fn correlation_blocks(
    x: &FeatureMatrix,
    ranges: &[Range<usize>],
    rows: &[usize],
) -> Vec<(Range<usize>, Vec<Vec<f64>>)> {
    let n = rows.len().max(1) as f64;
    let d = x.d;
    let mut mean = vec![0.0f64; d];
    for &i in rows {
        for j in 0..d {
            mean[j] += x.values[i * d + j];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0f64; d];
    for &i in rows {
        for j in 0..d {
            let v = x.values[i * d + j] - mean[j];
            var[j] += v * v;
        }
    }
    for v in &mut var {
        *v /= n;
    }

    ranges
        .iter()
        .map(|r| {
            let k = r.len();
            let mut cov = vec![vec![0.0f64; k]; k];
            for &row in rows {
                for a in 0..k {
                    let da = x.values[row * d + r.start + a] - mean[r.start + a];
                    for b in a..k {
                        let db = x.values[row * d + r.start + b] - mean[r.start + b];
                        cov[a][b] += da * db;
                    }
                }
            }
            let mut block = vec![vec![0.0f64; k]; k];
            for a in 0..k {
                for b in a..k {
                    let denom = (var[r.start + a] * var[r.start + b]).sqrt() * n;
                    let c = if denom > 0.0 {
                        (cov[a][b] / denom).clamp(-1.0, 1.0)
                    } else {
                        0.0
                    };
                    block[a][b] = c;
                    block[b][a] = c;
                }
            }
            for (i, row) in block.iter_mut().enumerate() {
                row[i] = 1.0;
            }
            (r.clone(), repair_psd(block))
        })
        .collect()
}

/// Clip negative eigenvalues to 1e-8 and renormalize the diagonal to 1.
fn repair_psd(block: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let k = block.len();
    if k <= 1 {
        return block;
    }
    let m = DMatrix::from_fn(k, k, |i, j| block[i][j]);
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&e| e >= 1e-8) {
        return block;
    }
    let clipped = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| e.max(1e-8)));
    let repaired = &eig.eigenvectors * clipped * eig.eigenvectors.transpose();
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let denom = (repaired[(i, i)] * repaired[(j, j)]).sqrt();
            out[i][j] = if denom > 0.0 {
                repaired[(i, j)] / denom
            } else {
                0.0
            };
        }
        out[i][i] = 1.0;
    }
    out
}

/// Estimate the shared correlation matrix on all rows of the scope,
/// classes pooled; class labels are unknown at preprocessing time.
pub fn estimate_shared_correlation(x: &FeatureMatrix, fs: &FeatureSchema) -> CorrelationMatrix {
    let rows: Vec<usize> = (0..x.n).collect();
    CorrelationMatrix {
        d: x.d,
        blocks: correlation_blocks(x, &fs.group_ranges(), &rows),
    }
}

/// Correlation over a row subset (used to compare class-conditional
/// correlation structure on labeled fixtures).
pub fn estimate_correlation_subset(
    x: &FeatureMatrix,
    fs: &FeatureSchema,
    rows: &[usize],
) -> CorrelationMatrix {
    CorrelationMatrix {
        d: x.d,
        blocks: correlation_blocks(x, &fs.group_ranges(), rows),
    }
}

/// JSON sidecar stored next to a persisted feature matrix.
#[derive(Debug, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub scope: Scope,
    pub n: usize,
    pub d: usize,
    pub schema: FeatureSchema,
    pub scaler: Vec<(f64, f64)>,
    pub feature_names: Vec<String>,
}

/// Persist the (scaled, imputed) matrix as delimited text plus a sidecar.
pub fn save_matrix(
    matrix_path: &Path,
    sidecar_path: &Path,
    x: &FeatureMatrix,
    fs: &FeatureSchema,
) -> Result<()> {
    for p in [matrix_path, sidecar_path] {
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::Io {
                path: parent.to_path_buf(),
                source: e,
            })?;
        }
    }
    let mut out = String::with_capacity(x.n * x.d * 8);
    for i in 0..x.n {
        let row = x.row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v:.17}"));
        }
        out.push('\n');
    }
    std::fs::write(matrix_path, out).map_err(|e| Error::Io {
        path: matrix_path.to_path_buf(),
        source: e,
    })?;
    let sidecar = FeatureSidecar {
        scope: x.scope,
        n: x.n,
        d: x.d,
        schema: fs.clone(),
        scaler: x.scaler.bounds.clone(),
        feature_names: fs.feature_names(),
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Parse(format!("sidecar encode: {e}")))?;
    std::fs::write(sidecar_path, json).map_err(|e| Error::Io {
        path: sidecar_path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

pub fn load_matrix(matrix_path: &Path, sidecar_path: &Path) -> Result<(FeatureMatrix, FeatureSchema)> {
    let json = std::fs::read_to_string(sidecar_path).map_err(|e| Error::Io {
        path: sidecar_path.to_path_buf(),
        source: e,
    })?;
    let sidecar: FeatureSidecar =
        serde_json::from_str(&json).map_err(|e| Error::Parse(format!("sidecar decode: {e}")))?;
    let text = std::fs::read_to_string(matrix_path).map_err(|e| Error::Io {
        path: matrix_path.to_path_buf(),
        source: e,
    })?;
    let mut values = Vec::with_capacity(sidecar.n * sidecar.d);
    for (lineno, line) in text.lines().enumerate() {
        for field in line.split(',') {
            values.push(field.parse::<f64>().map_err(|e| {
                Error::Parse(format!(
                    "{} line {}: {e}",
                    matrix_path.display(),
                    lineno + 1
                ))
            })?);
        }
    }
    if values.len() != sidecar.n * sidecar.d {
        return Err(Error::Parse(format!(
            "{}: expected {} values, got {}",
            matrix_path.display(),
            sidecar.n * sidecar.d,
            values.len()
        )));
    }
    let x = FeatureMatrix {
        scope: sidecar.scope,
        n: sidecar.n,
        d: sidecar.d,
        values,
        missing: vec![false; sidecar.n * sidecar.d],
        scaler: Scaler {
            bounds: sidecar.scaler,
        },
    };
    Ok((x, sidecar.schema))
}
