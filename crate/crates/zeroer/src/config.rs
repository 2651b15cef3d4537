//! The single structured run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blocking::fnv1a64;
use crate::error::{Error, Result};
use crate::eval::Variant;
use crate::ingest::AttrType;
use crate::model::{CovarianceMode, FitOptions, Regularization};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsCfg {
    pub left: PathBuf,
    /// Absent or equal to `left` switches to deduplication mode.
    pub right: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestCfg {
    pub id_column: String,
    /// Single-character field delimiter.
    pub delimiter: String,
    /// Attribute alignment hints: left name -> right name.
    pub hints: BTreeMap<String, String>,
}

impl Default for IngestCfg {
    fn default() -> Self {
        IngestCfg {
            id_column: "id".into(),
            delimiter: ",".into(),
            hints: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockingCfg {
    pub enabled: bool,
    pub attribute: String,
    pub q: usize,
    pub bands: usize,
    pub rows_per_band: usize,
    pub seed: u64,
}

impl Default for BlockingCfg {
    fn default() -> Self {
        BlockingCfg {
            enabled: false,
            attribute: String::new(),
            q: 3,
            bands: 8,
            rows_per_band: 4,
            seed: 0x5eed_b10c,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesCfg {
    /// Per-attribute type-tag overrides (left attribute name -> tag).
    pub tag_overrides: BTreeMap<String, AttrType>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelCfg {
    /// Initialization threshold on the scaled feature mean.
    pub epsilon: f64,
    /// Uniform Bhattacharyya-coefficient increase per feature.
    pub kappa_prime: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ModelCfg {
    fn default() -> Self {
        ModelCfg {
            epsilon: 0.5,
            kappa_prime: 0.01,
            tol: 1e-5,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransitivityCfg {
    pub enabled: bool,
}

impl Default for TransitivityCfg {
    fn default() -> Self {
        TransitivityCfg { enabled: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunCfg {
    /// Ablation variant: full, uniform-reg, diag-shared-cov,
    /// postprocess-transitivity, no-transitivity.
    pub variant: String,
    pub seed: u64,
    /// Worker-pool cap; 0 leaves the default.
    pub threads: usize,
    /// Reuse cached stage outputs keyed by the config digest.
    pub cache: bool,
}

impl Default for RunCfg {
    fn default() -> Self {
        RunCfg {
            variant: "full".into(),
            seed: 7,
            threads: 0,
            cache: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsCfg,
    pub ingest: IngestCfg,
    pub blocking: BlockingCfg,
    pub features: FeaturesCfg,
    pub model: ModelCfg,
    pub transitivity: TransitivityCfg,
    pub run: RunCfg,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `section.key=value` command-line overrides on top of the
    /// file contents, then re-validate.
    pub fn from_path_with_overrides(path: &Path, overrides: &[String]) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut value: toml::Value =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for ov in overrides {
            let (key, raw) = ov
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {ov:?} is not key=value")))?;
            let parsed: toml::Value = raw
                .parse::<toml::Value>()
                .unwrap_or_else(|_| toml::Value::String(raw.to_string()));
            let mut node = &mut value;
            let parts: Vec<&str> = key.split('.').collect();
            for part in &parts[..parts.len() - 1] {
                node = node
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("{key:?}: not a table")))?
                    .entry(part.to_string())
                    .or_insert(toml::Value::Table(Default::default()));
            }
            node.as_table_mut()
                .ok_or_else(|| Error::Config(format!("{key:?}: not a table")))?
                .insert(parts[parts.len() - 1].to_string(), parsed);
        }
        let cfg: RunConfig = value
            .try_into()
            .map_err(|e| Error::Config(format!("override application: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.model.epsilon && self.model.epsilon < 1.0) {
            return Err(Error::Config(format!(
                "epsilon must lie in (0,1), got {}",
                self.model.epsilon
            )));
        }
        if !(0.0..1.0).contains(&self.model.kappa_prime) {
            return Err(Error::Config(format!(
                "kappa_prime must lie in [0,1), got {}",
                self.model.kappa_prime
            )));
        }
        if self.ingest.delimiter.len() != 1 {
            return Err(Error::Config("delimiter must be one character".into()));
        }
        if self.blocking.enabled && self.blocking.attribute.is_empty() {
            return Err(Error::Config(
                "blocking.attribute is required when blocking is enabled".into(),
            ));
        }
        self.run.variant.parse::<Variant>()?;
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        self.run.variant.parse().expect("validated")
    }

    pub fn delimiter_byte(&self) -> u8 {
        self.ingest.delimiter.as_bytes()[0]
    }

    pub fn dedup_mode(&self) -> bool {
        match &self.paths.right {
            None => true,
            Some(r) => *r == self.paths.left,
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            epsilon: self.model.epsilon,
            regularization: Regularization::Adaptive {
                kappa_prime: self.model.kappa_prime,
            },
            covariance: CovarianceMode::GroupedSharedCorrelation,
            tol: self.model.tol,
            max_iter: self.model.max_iter,
        }
    }

    /// Digest of the whole config (for provenance and output naming).
    pub fn digest(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        format!("{:016x}", fnv1a64(text.as_bytes(), 0x0c0f))
    }

    /// Digest of the stages up to featurization (for stage caching):
    /// inputs, ingest, blocking, and feature settings.
    pub fn feature_stage_digest(&self) -> String {
        let text = format!(
            "{:?}|{:?}|{:?}|{:?}",
            self.paths, self.ingest, self.blocking, self.features
        );
        format!("{:016x}", fnv1a64(text.as_bytes(), 0xfea7))
    }
}
