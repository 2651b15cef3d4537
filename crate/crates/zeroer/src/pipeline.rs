//! End-to-end orchestration: ingest -> block -> featurize -> fit -> eval,
//! driven by one [`RunConfig`].

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::blocking::{block_candidates, cross_join, BlockingConfig, CandidateSet, Scope};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{blocking_recall, evaluate_timed, run_variant, AblationData, EvalReport, GoldLabels};
use crate::features::{
    build_feature_schema, estimate_shared_correlation, featurize, load_matrix, save_matrix,
    CorrelationMatrix, FeatureMatrix, FeatureSchema,
};
use crate::ingest::{align_schemas, load_table, AlignedSchema, Table};
use crate::model::{Checkpoint, FitReport};
use crate::transitivity::ScopeData;

/// Outputs of one pipeline run.
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub match_path: PathBuf,
    /// Predicted matches: (left id, right id, posterior).
    pub matches: Vec<(String, String, f64)>,
    pub fit_report: FitReport,
    pub eval_report: Option<EvalReport>,
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, content).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Per-scope prepared stage outputs.
pub struct PreparedScope {
    pub candidates: CandidateSet,
    pub x: FeatureMatrix,
    pub r: CorrelationMatrix,
}

/// All stage outputs before fitting.
pub struct PreparedData {
    pub left: Table,
    /// Absent in deduplication mode.
    pub right: Option<Table>,
    pub schema: AlignedSchema,
    pub feature_schema: FeatureSchema,
    pub cross: PreparedScope,
    pub within_left: Option<PreparedScope>,
    pub within_right: Option<PreparedScope>,
    pub dedup: bool,
}

impl PreparedData {
    pub fn left_ids(&self) -> Vec<String> {
        (0..self.left.len())
            .map(|i| self.left.id_of(i).to_string())
            .collect()
    }

    pub fn right_ids(&self) -> Vec<String> {
        match &self.right {
            Some(r) => (0..r.len()).map(|i| r.id_of(i).to_string()).collect(),
            None => self.left_ids(),
        }
    }

    pub fn ablation_data<'a>(
        &'a self,
        left_ids: &'a [String],
        right_ids: &'a [String],
    ) -> AblationData<'a> {
        AblationData {
            cross: ScopeData {
                x: &self.cross.x,
                r: &self.cross.r,
                pairs: &self.cross.candidates.pairs,
            },
            left: self.within_left.as_ref().map(|s| ScopeData {
                x: &s.x,
                r: &s.r,
                pairs: &s.candidates.pairs,
            }),
            right: self.within_right.as_ref().map(|s| ScopeData {
                x: &s.x,
                r: &s.r,
                pairs: &s.candidates.pairs,
            }),
            left_ids,
            right_ids,
            dedup: self.dedup,
        }
    }
}

fn candidate_scope(
    cfg: &RunConfig,
    left: &Table,
    right: &Table,
    scope: Scope,
) -> Result<CandidateSet> {
    if cfg.blocking.enabled {
        let bc = BlockingConfig {
            attribute: cfg.blocking.attribute.clone(),
            q: cfg.blocking.q,
            bands: cfg.blocking.bands,
            rows_per_band: cfg.blocking.rows_per_band,
            seed: cfg.blocking.seed,
        };
        block_candidates(left, right, scope, &bc)
    } else {
        Ok(cross_join(left, right, scope))
    }
}

fn prepare_scope(
    cfg: &RunConfig,
    left: &Table,
    right: &Table,
    fs: &FeatureSchema,
    scope: Scope,
    out_dir: &Path,
) -> Result<PreparedScope> {
    let candidates = candidate_scope(cfg, left, right, scope)?;

    let cache_dir = out_dir.join("cache");
    let digest = cfg.feature_stage_digest();
    let mpath = cache_dir.join(format!("features_{scope}_{digest}.csv"));
    let spath = cache_dir.join(format!("features_{scope}_{digest}.json"));

    let x = if cfg.run.cache && mpath.exists() && spath.exists() {
        log::info!("reusing cached features for scope {scope}");
        let (x, _) = load_matrix(&mpath, &spath)?;
        if x.n != candidates.len() {
            // stale cache; recompute
            featurize(&candidates, left, right, fs)?
        } else {
            x
        }
    } else {
        let x = featurize(&candidates, left, right, fs)?;
        if cfg.run.cache {
            save_matrix(&mpath, &spath, &x, fs)?;
        }
        x
    };

    let r = estimate_shared_correlation(&x, fs);
    Ok(PreparedScope { candidates, x, r })
}

/// Run the staged preparation: load, align, block, featurize, estimate R.
pub fn prepare(cfg: &RunConfig) -> Result<PreparedData> {
    let delim = cfg.delimiter_byte();
    let left = load_table(&cfg.paths.left, &cfg.ingest.id_column, delim)?;
    let dedup = cfg.dedup_mode();
    let right = if dedup {
        None
    } else {
        Some(load_table(
            cfg.paths.right.as_ref().expect("non-dedup has right"),
            &cfg.ingest.id_column,
            delim,
        )?)
    };

    let hints: Vec<(String, String)> = cfg
        .ingest
        .hints
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let right_ref = right.as_ref().unwrap_or(&left);
    let mut schema = align_schemas(
        &left,
        right_ref,
        if hints.is_empty() { None } else { Some(&hints) },
    )?;
    for pair in &mut schema.pairs {
        if let Some(tag) = cfg.features.tag_overrides.get(&pair.left) {
            pair.tag = *tag;
        }
    }
    let feature_schema = build_feature_schema(&schema);

    let out_dir = cfg.paths.out_dir.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
        path: out_dir.clone(),
        source: e,
    })?;

    let (cross, within_left, within_right) = if dedup {
        // single scope: within-table pairs of the one input
        let scope = prepare_scope(cfg, &left, &left, &feature_schema, Scope::Left, &out_dir)?;
        (scope, None, None)
    } else {
        let right_t = right.as_ref().expect("two tables");
        let cross = prepare_scope(cfg, &left, right_t, &feature_schema, Scope::Cross, &out_dir)?;
        if cfg.transitivity.enabled {
            let wl = prepare_scope(cfg, &left, right_t, &feature_schema, Scope::Left, &out_dir)?;
            let wr = prepare_scope(cfg, &left, right_t, &feature_schema, Scope::Right, &out_dir)?;
            (cross, Some(wl), Some(wr))
        } else {
            (cross, None, None)
        }
    };

    Ok(PreparedData {
        left,
        right,
        schema,
        feature_schema,
        cross,
        within_left,
        within_right,
        dedup,
    })
}

fn format_matches(matches: &[(String, String, f64)]) -> String {
    let mut sorted: Vec<&(String, String, f64)> = matches.iter().collect();
    sorted.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    let mut out = String::from("left_id,right_id,gamma,label\n");
    for (l, r, g) in sorted {
        out.push_str(&format!("{l},{r},{g:.12e},1\n"));
    }
    out
}

fn write_pairs_file(path: &Path, cs: &CandidateSet, ids_a: &[String], ids_b: &[String]) -> Result<()> {
    let mut out = String::from(match cs.scope {
        Scope::Cross => "left_id,right_id\n",
        _ => "id_a,id_b\n",
    });
    for &(a, b) in &cs.pairs {
        out.push_str(&format!("{},{}\n", ids_a[a as usize], ids_b[b as usize]));
    }
    write_file(path, &out)
}

/// Execute the full pipeline under one config. Every stage artifact is
/// persisted under the configured output directory; reruns with the same
/// config and seed produce byte-identical match lists.
pub fn run(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let started = Instant::now();
    if cfg.run.threads > 0 {
        // the global pool can only be installed once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.threads)
            .build_global();
    }

    let data = prepare(cfg)?;
    let out_dir = cfg.paths.out_dir.clone();
    let left_ids = data.left_ids();
    let right_ids = data.right_ids();

    write_pairs_file(
        &out_dir.join("pairs_cross.csv"),
        &data.cross.candidates,
        &left_ids,
        if data.dedup { &left_ids } else { &right_ids },
    )?;
    if let Some(wl) = &data.within_left {
        write_pairs_file(&out_dir.join("pairs_left.csv"), &wl.candidates, &left_ids, &left_ids)?;
    }
    if let Some(wr) = &data.within_right {
        write_pairs_file(&out_dir.join("pairs_right.csv"), &wr.candidates, &right_ids, &right_ids)?;
    }

    let ab = data.ablation_data(&left_ids, &right_ids);
    let prediction = run_variant(&ab, cfg.variant(), &cfg.fit_options(), cfg.transitivity.enabled)?;

    // persist artifacts
    let match_path = out_dir.join("matches.csv");
    write_file(&match_path, &format_matches(&prediction.matches))?;
    write_file(
        &out_dir.join("fit_report.json"),
        &serde_json::to_string_pretty(&prediction.report)
            .map_err(|e| Error::Parse(format!("fit report encode: {e}")))?,
    )?;
    write_file(
        &out_dir.join("config_resolved.toml"),
        &toml::to_string(cfg).map_err(|e| Error::Config(format!("config encode: {e}")))?,
    )?;

    if let Some(params) = &prediction.cross_params {
        let ckpt = Checkpoint::from_params(params, &data.cross.r);
        write_file(
            &out_dir.join("model.json"),
            &serde_json::to_string_pretty(&ckpt)
                .map_err(|e| Error::Parse(format!("checkpoint encode: {e}")))?,
        )?;
    }
    if cfg.transitivity.enabled {
        let mut audit = String::from("iteration,axis,scope,pair_a,pair_b,before,after\n");
        for a in &prediction.audits {
            audit.push_str(&format!(
                "{},{:?},{},{},{},{:.12e},{:.12e}\n",
                a.iteration, a.axis, a.target_scope, a.target_pair.0, a.target_pair.1, a.before, a.after
            ));
        }
        write_file(&out_dir.join("audit.csv"), &audit)?;
    }

    let eval_report = match &cfg.paths.gold {
        Some(gold_path) => {
            let right_table = data.right.as_ref().unwrap_or(&data.left);
            let gold = GoldLabels::load(gold_path, Some((&data.left, right_table)))?;
            let predicted: Vec<(String, String)> = prediction
                .matches
                .iter()
                .map(|(l, r, _)| (l.clone(), r.clone()))
                .collect();
            let mut report = evaluate_timed(&predicted, &gold, started, &cfg.digest());
            report.blocking_recall = Some(blocking_recall(
                &data.cross.candidates.pairs,
                &left_ids,
                if data.dedup { &left_ids } else { &right_ids },
                &gold,
            ));
            write_file(
                &out_dir.join("eval.json"),
                &serde_json::to_string_pretty(&report)
                    .map_err(|e| Error::Parse(format!("eval encode: {e}")))?,
            )?;
            let table = format!(
                "metric,value\nprecision,{:.6}\nrecall,{:.6}\nf1,{:.6}\ntp,{}\nfp,{}\nfn,{}\nblocking_recall,{:.6}\n",
                report.precision,
                report.recall,
                report.f1,
                report.tp,
                report.fp,
                report.fn_,
                report.blocking_recall.unwrap_or(1.0),
            );
            write_file(&out_dir.join("eval.csv"), &table)?;
            Some(report)
        }
        None => None,
    };

    Ok(RunArtifacts {
        out_dir,
        match_path,
        matches: prediction.matches,
        fit_report: prediction.report,
        eval_report,
    })
}
