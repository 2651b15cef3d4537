//! Seeded synthetic data with known generative parameters, used as the
//! test oracle for the model and transitivity machinery.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocking::Scope;
use crate::error::{Error, Result};
use crate::features::{CorrelationMatrix, FeatureMatrix, FeatureGroup, FeatureSchema};
use crate::ingest::AttrType;

/// Generative spec: a two-component Gaussian with grouped features, a
/// uniform within-group correlation, and optionally planted transitive
/// triples in the linked variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    /// Feature-group layout; sizes must sum to `d`.
    pub group_sizes: Vec<usize>,
    pub pi_m: f64,
    pub mu_m: Vec<f64>,
    pub mu_u: Vec<f64>,
    /// Per-feature standard deviations.
    pub lambda_m: Vec<f64>,
    pub lambda_u: Vec<f64>,
    /// Uniform correlation between features of the same group.
    pub within_group_corr: f64,
    pub seed: u64,
    /// Entities that receive a duplicate row, creating one transitive
    /// triple each (linked generation only).
    pub planted_triples: usize,
}

impl SynthSpec {
    /// A well-separated default: d features in two groups.
    pub fn well_separated(n: usize, d: usize, pi_m: f64, seed: u64) -> SynthSpec {
        let g1 = d / 2;
        SynthSpec {
            n,
            d,
            group_sizes: vec![g1, d - g1],
            pi_m,
            mu_m: vec![0.8; d],
            mu_u: vec![0.15; d],
            lambda_m: vec![0.08; d],
            lambda_u: vec![0.09; d],
            within_group_corr: 0.4,
            seed,
            planted_triples: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_sizes.iter().sum::<usize>() != self.d {
            return Err(Error::Config(format!(
                "group sizes {:?} do not sum to d={}",
                self.group_sizes, self.d
            )));
        }
        for v in [&self.mu_m, &self.mu_u, &self.lambda_m, &self.lambda_u] {
            if v.len() != self.d {
                return Err(Error::Config("parameter vectors must have length d".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.pi_m) {
            return Err(Error::Config("pi_m must lie in [0,1]".into()));
        }
        if !(-0.99..=0.99).contains(&self.within_group_corr) {
            return Err(Error::Config("within_group_corr must lie in (-0.99, 0.99)".into()));
        }
        Ok(())
    }

    pub fn group_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for &s in &self.group_sizes {
            out.push(start..start + s);
            start += s;
        }
        out
    }

    /// The true shared correlation matrix.
    pub fn correlation(&self) -> CorrelationMatrix {
        let blocks = self
            .group_ranges()
            .into_iter()
            .map(|r| {
                let k = r.len();
                let mut b = vec![vec![self.within_group_corr; k]; k];
                for (i, row) in b.iter_mut().enumerate() {
                    row[i] = 1.0;
                }
                (r, b)
            })
            .collect();
        CorrelationMatrix {
            d: self.d,
            blocks,
        }
    }

    /// A structural feature schema matching the group layout.
    pub fn feature_schema(&self) -> FeatureSchema {
        let groups = self
            .group_sizes
            .iter()
            .enumerate()
            .map(|(g, &size)| FeatureGroup {
                left_attr: format!("g{g}"),
                right_attr: format!("g{g}"),
                tag: AttrType::Numeric,
                fns: vec![crate::features::simfns::SimFn::AbsDiffSim; size],
            })
            .collect();
        FeatureSchema {
            groups,
            d: self.d,
        }
    }

    fn cholesky_for(&self, lambda: &[f64]) -> Result<DMatrix<f64>> {
        let r = self.correlation();
        let d = self.d;
        let mut sigma = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                sigma[(i, j)] = lambda[i] * r.entry(i, j) * lambda[j];
            }
        }
        nalgebra::Cholesky::new(sigma)
            .map(|c| {
                let l: DMatrix<f64> = c.l();
                l
            })
            .ok_or_else(|| Error::Numerical("synthetic covariance is not positive definite".into()))
    }
}

/// One generated single-scope dataset.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub x: FeatureMatrix,
    pub labels: Vec<bool>,
}

fn row_rng(seed: u64, row: u64, stream: u64) -> ChaCha8Rng {
    let mut s = seed ^ row.wrapping_mul(0x9e3779b97f4a7c15) ^ stream.wrapping_mul(0xd1b54a32d192ed03);
    s ^= s >> 31;
    ChaCha8Rng::seed_from_u64(s)
}

fn draw_row(l_m: &DMatrix<f64>, l_u: &DMatrix<f64>, spec: &SynthSpec, rng: &mut ChaCha8Rng) -> (Vec<f64>, bool) {
    let is_match = rng.random::<f64>() < spec.pi_m;
    let (mu, l) = if is_match {
        (&spec.mu_m, l_m)
    } else {
        (&spec.mu_u, l_u)
    };
    let d = spec.d;
    let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut x = vec![0.0f64; d];
    for i in 0..d {
        let mut v = mu[i];
        for k in 0..=i {
            v += l[(i, k)] * z[k];
        }
        x[i] = v.clamp(0.0, 1.0);
    }
    (x, is_match)
}

/// Draw `n` labeled feature rows. Deterministic under the spec seed;
/// rows are generated in parallel with per-row derived seeds.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let l_m = spec.cholesky_for(&spec.lambda_m)?;
    let l_u = spec.cholesky_for(&spec.lambda_u)?;

    let rows: Vec<(Vec<f64>, bool)> = (0..spec.n as u64)
        .into_par_iter()
        .map(|row| {
            let mut rng = row_rng(spec.seed, row, 0);
            draw_row(&l_m, &l_u, spec, &mut rng)
        })
        .collect();

    let mut values = Vec::with_capacity(spec.n * spec.d);
    let mut labels = Vec::with_capacity(spec.n);
    for (v, l) in rows {
        values.extend(v);
        labels.push(l);
    }
    Ok(SynthData {
        x: FeatureMatrix::from_scaled(Scope::Cross, spec.n, spec.d, values),
        labels,
    })
}

/// A linked three-scope dataset built over synthetic entities.
#[derive(Debug, Clone)]
pub struct LinkedSynthData {
    pub left_ids: Vec<String>,
    pub right_ids: Vec<String>,
    /// Entity key per row, usable as a categorical attribute.
    pub left_entities: Vec<u32>,
    pub right_entities: Vec<u32>,
    pub cross_pairs: Vec<(u32, u32)>,
    pub left_pairs: Vec<(u32, u32)>,
    pub right_pairs: Vec<(u32, u32)>,
    pub x_cross: FeatureMatrix,
    pub x_left: FeatureMatrix,
    pub x_right: FeatureMatrix,
    pub cross_labels: Vec<bool>,
    /// Gold cross-table matches as (left id, right id).
    pub gold: Vec<(String, String)>,
    /// Planted transitive triples: (left row a, left row b, right row).
    pub planted: Vec<(u32, u32, u32)>,
}

/// Generate a record-linkage task over `n` entities (spec field `n` is
/// reused as the entity count). Every entity gets one left and one right
/// row; `planted_triples` entities get a second left row, creating a
/// duplicate pair in the left table and one transitive triple each.
/// Pair feature vectors are drawn from the match or unmatch distribution
/// according to entity identity.
pub fn generate_linked(spec: &SynthSpec) -> Result<LinkedSynthData> {
    spec.validate()?;
    if spec.planted_triples > spec.n {
        return Err(Error::Config(
            "planted_triples cannot exceed the entity count".into(),
        ));
    }
    let l_m = spec.cholesky_for(&spec.lambda_m)?;
    let l_u = spec.cholesky_for(&spec.lambda_u)?;

    let n_entities = spec.n as u32;
    let mut left_entities: Vec<u32> = (0..n_entities).collect();
    // duplicated left rows for the first `planted_triples` entities
    for e in 0..spec.planted_triples as u32 {
        left_entities.push(e);
    }
    let right_entities: Vec<u32> = (0..n_entities).collect();

    let left_ids: Vec<String> = (0..left_entities.len()).map(|i| format!("l{i}")).collect();
    let right_ids: Vec<String> = (0..right_entities.len()).map(|i| format!("r{i}")).collect();

    let draw_scope = |pairs: &[(u32, u32)],
                      ents_a: &[u32],
                      ents_b: &[u32],
                      scope: Scope,
                      stream: u64|
     -> (FeatureMatrix, Vec<bool>) {
        let rows: Vec<(Vec<f64>, bool)> = pairs
            .par_iter()
            .enumerate()
            .map(|(row, &(a, b))| {
                let mut rng = row_rng(spec.seed, row as u64, stream);
                let is_match = ents_a[a as usize] == ents_b[b as usize];
                let (mu, l) = if is_match {
                    (&spec.mu_m, &l_m)
                } else {
                    (&spec.mu_u, &l_u)
                };
                let z: Vec<f64> = (0..spec.d).map(|_| rng.sample(StandardNormal)).collect();
                let mut x = vec![0.0f64; spec.d];
                for i in 0..spec.d {
                    let mut v = mu[i];
                    for k in 0..=i {
                        v += l[(i, k)] * z[k];
                    }
                    x[i] = v.clamp(0.0, 1.0);
                }
                (x, is_match)
            })
            .collect();
        let mut values = Vec::with_capacity(pairs.len() * spec.d);
        let mut labels = Vec::with_capacity(pairs.len());
        for (v, lab) in rows {
            values.extend(v);
            labels.push(lab);
        }
        (
            FeatureMatrix::from_scaled(scope, pairs.len(), spec.d, values),
            labels,
        )
    };

    let cross_pairs: Vec<(u32, u32)> = (0..left_entities.len() as u32)
        .flat_map(|i| (0..right_entities.len() as u32).map(move |j| (i, j)))
        .collect();
    let mut left_pairs = Vec::new();
    for i in 0..left_entities.len() as u32 {
        for j in (i + 1)..left_entities.len() as u32 {
            left_pairs.push((i, j));
        }
    }
    let mut right_pairs = Vec::new();
    for i in 0..right_entities.len() as u32 {
        for j in (i + 1)..right_entities.len() as u32 {
            right_pairs.push((i, j));
        }
    }

    let (x_cross, cross_labels) = draw_scope(&cross_pairs, &left_entities, &right_entities, Scope::Cross, 1);
    let (x_left, _) = draw_scope(&left_pairs, &left_entities, &left_entities, Scope::Left, 2);
    let (x_right, _) = draw_scope(&right_pairs, &right_entities, &right_entities, Scope::Right, 3);

    let gold: Vec<(String, String)> = cross_pairs
        .iter()
        .zip(&cross_labels)
        .filter(|(_, &m)| m)
        .map(|(&(a, b), _)| (left_ids[a as usize].clone(), right_ids[b as usize].clone()))
        .collect();

    let planted: Vec<(u32, u32, u32)> = (0..spec.planted_triples as u32)
        .map(|e| (e, n_entities + e, e))
        .collect();

    Ok(LinkedSynthData {
        left_ids,
        right_ids,
        left_entities,
        right_entities,
        cross_pairs,
        left_pairs,
        right_pairs,
        x_cross,
        x_left,
        x_right,
        cross_labels,
        gold,
        planted,
    })
}
