//! Candidate pair generation: full cross product or min-hash LSH blocking.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Table;

/// Which pair population a candidate set (or feature matrix) covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    /// Pairs across the two tables.
    Cross,
    /// Unordered pairs within the left table.
    Left,
    /// Unordered pairs within the right table.
    Right,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Cross => f.write_str("cross"),
            Scope::Left => f.write_str("left"),
            Scope::Right => f.write_str("right"),
        }
    }
}

/// A deduplicated list of candidate pairs for one scope.
///
/// Pairs hold row indices into the source tables. For the within-table
/// scopes pairs are canonical (`a < b`) and never self-pairs.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub scope: Scope,
    pub pairs: Vec<(u32, u32)>,
    /// Digest of the blocking configuration that produced the set.
    pub provenance: String,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Min-hash LSH blocking parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BlockingConfig {
    /// Attribute (left-table name) whose values are shingled and hashed.
    pub attribute: String,
    /// q-gram size for shingling.
    pub q: usize,
    /// Number of signature bands.
    pub bands: usize,
    /// Min-hash rows per band.
    pub rows_per_band: usize,
    /// Seed for the hash family; fixed for reproducibility.
    pub seed: u64,
}

impl Default for BlockingConfig {
    fn default() -> Self {
        BlockingConfig {
            attribute: String::new(),
            q: 3,
            bands: 8,
            rows_per_band: 4,
            seed: 0x5eed_b10c,
        }
    }
}

impl BlockingConfig {
    pub fn digest(&self) -> String {
        let canon = format!(
            "attr={};q={};bands={};rows={};seed={}",
            self.attribute, self.q, self.bands, self.rows_per_band, self.seed
        );
        format!("{:016x}", fnv1a64(canon.as_bytes(), 0xcbf29ce484222325))
    }
}

/// Stable seeded FNV-1a; blocking must reproduce bit-exactly across runs,
/// so no std `Hasher` (its output is not specified to be stable).
pub(crate) fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ seed;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// All pairs for the scope: the full cross product, or all unordered
/// distinct pairs when the scope is within one table.
pub fn cross_join(left: &Table, right: &Table, scope: Scope) -> CandidateSet {
    let pairs = match scope {
        Scope::Cross => {
            let mut v = Vec::with_capacity(left.len() * right.len());
            for i in 0..left.len() as u32 {
                for j in 0..right.len() as u32 {
                    v.push((i, j));
                }
            }
            v
        }
        Scope::Left => unordered_pairs(left.len()),
        Scope::Right => unordered_pairs(right.len()),
    };
    CandidateSet {
        scope,
        pairs,
        provenance: "cross-join".to_string(),
    }
}

fn unordered_pairs(n: usize) -> Vec<(u32, u32)> {
    let mut v = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n as u32 {
        for j in (i + 1)..n as u32 {
            v.push((i, j));
        }
    }
    v
}

/// Per-tuple min-hash signature over q-grams of the blocking attribute.
/// Rows with a null blocking value get no signature and join no bucket.
fn signatures(table: &Table, col: usize, cfg: &BlockingConfig) -> Vec<Option<Vec<u64>>> {
    let n_hashes = cfg.bands * cfg.rows_per_band;
    let hash_seeds: Vec<u64> = (0..n_hashes)
        .map(|i| splitmix64(cfg.seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15)))
        .collect();

    (0..table.len())
        .into_par_iter()
        .map(|row| {
            let value = table.value(row, col)?;
            let grams = qgram_hashes(value, cfg.q);
            if grams.is_empty() {
                return None;
            }
            let sig = hash_seeds
                .iter()
                .map(|&s| {
                    grams
                        .iter()
                        .map(|&g| splitmix64(g ^ s))
                        .min()
                        .expect("nonempty grams")
                })
                .collect();
            Some(sig)
        })
        .collect()
}

fn qgram_hashes(s: &str, q: usize) -> Vec<u64> {
    let chars: Vec<char> = s.chars().collect();
    let mut grams: Vec<u64> = if chars.len() < q {
        if chars.is_empty() {
            Vec::new()
        } else {
            vec![fnv1a64(s.as_bytes(), 0)]
        }
    } else {
        chars
            .windows(q)
            .map(|w| {
                let g: String = w.iter().collect();
                fnv1a64(g.as_bytes(), 0)
            })
            .collect()
    };
    grams.sort_unstable();
    grams.dedup();
    grams
}

fn band_key(sig: &[u64], band: usize, rows: usize) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ (band as u64).wrapping_mul(0x100000001b3);
    for &v in &sig[band * rows..(band + 1) * rows] {
        h ^= v;
        h = h.wrapping_mul(0x100000001b3);
        h = splitmix64(h);
    }
    h
}

/// Min-hash LSH blocking: a pair survives iff the two tuples share at
/// least one band signature on the blocking attribute. The output is
/// always a subset of [`cross_join`] for the same scope.
pub fn block_candidates(
    left: &Table,
    right: &Table,
    scope: Scope,
    cfg: &BlockingConfig,
) -> Result<CandidateSet> {
    let (table_a, table_b): (&Table, Option<&Table>) = match scope {
        Scope::Cross => (left, Some(right)),
        Scope::Left => (left, None),
        Scope::Right => (right, None),
    };

    let col_a = table_a
        .attribute_index(&cfg.attribute)
        .ok_or_else(|| Error::UnknownAttribute {
            table: table_a.name.clone(),
            attribute: cfg.attribute.clone(),
        })?;
    let sigs_a = signatures(table_a, col_a, cfg);
    if sigs_a.iter().all(|s| s.is_none()) {
        return Err(Error::AllNullAttribute {
            attribute: cfg.attribute.clone(),
        });
    }

    let sigs_b = match table_b {
        Some(tb) => {
            let col_b = tb
                .attribute_index(&cfg.attribute)
                .ok_or_else(|| Error::UnknownAttribute {
                    table: tb.name.clone(),
                    attribute: cfg.attribute.clone(),
                })?;
            let s = signatures(tb, col_b, cfg);
            if s.iter().all(|x| x.is_none()) {
                return Err(Error::AllNullAttribute {
                    attribute: cfg.attribute.clone(),
                });
            }
            Some(s)
        }
        None => None,
    };

    let mut pairs: Vec<(u32, u32)> = Vec::new();
    for band in 0..cfg.bands {
        let mut buckets: HashMap<u64, (Vec<u32>, Vec<u32>)> = HashMap::new();
        for (row, sig) in sigs_a.iter().enumerate() {
            if let Some(sig) = sig {
                let key = band_key(sig, band, cfg.rows_per_band);
                buckets.entry(key).or_default().0.push(row as u32);
            }
        }
        match &sigs_b {
            Some(sigs_b) => {
                for (row, sig) in sigs_b.iter().enumerate() {
                    if let Some(sig) = sig {
                        let key = band_key(sig, band, cfg.rows_per_band);
                        buckets.entry(key).or_default().1.push(row as u32);
                    }
                }
                for (a_rows, b_rows) in buckets.values() {
                    for &i in a_rows {
                        for &j in b_rows {
                            pairs.push((i, j));
                        }
                    }
                }
            }
            None => {
                for (a_rows, _) in buckets.values() {
                    for (ix, &i) in a_rows.iter().enumerate() {
                        for &j in &a_rows[ix + 1..] {
                            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                            pairs.push((lo, hi));
                        }
                    }
                }
            }
        }
    }
    pairs.par_sort_unstable();
    pairs.dedup();

    Ok(CandidateSet {
        scope,
        pairs,
        provenance: cfg.digest(),
    })
}
