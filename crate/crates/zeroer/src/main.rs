//! Command-line entry point for the entity-resolution pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zeroer::blocking::{block_candidates, BlockingConfig, Scope};
use zeroer::config::RunConfig;
use zeroer::error::Error;
use zeroer::eval::{evaluate, GoldLabels};
use zeroer::features::{build_feature_schema, featurize, load_matrix, save_matrix};
use zeroer::ingest::{align_schemas, load_table, Table};
use zeroer::model::{e_step, Checkpoint};
use zeroer::synth::{generate_linked, SynthSpec};

#[derive(Parser)]
#[command(name = "zeroer", version, about = "Unsupervised entity resolution", long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct TableArgs {
    /// Left input table (delimited text, header row required)
    #[arg(long)]
    left: PathBuf,
    /// Right input table; omit for deduplication within the left table
    #[arg(long)]
    right: Option<PathBuf>,
    /// Name of the unique-id column
    #[arg(long, default_value = "id")]
    id: String,
    /// Field delimiter
    #[arg(long, default_value = ",")]
    delimiter: String,
    /// Alignment hint left_attr=right_attr (repeatable)
    #[arg(long = "hint")]
    hints: Vec<String>,
}

impl TableArgs {
    fn delim(&self) -> Result<u8, Error> {
        if self.delimiter.len() != 1 {
            return Err(Error::Config("delimiter must be one character".into()));
        }
        Ok(self.delimiter.as_bytes()[0])
    }

    fn load(&self) -> Result<(Table, Option<Table>), Error> {
        let d = self.delim()?;
        let left = load_table(&self.left, &self.id, d)?;
        let right = match &self.right {
            Some(p) if *p != self.left => Some(load_table(p, &self.id, d)?),
            _ => None,
        };
        Ok((left, right))
    }

    fn hint_pairs(&self) -> Result<Vec<(String, String)>, Error> {
        self.hints
            .iter()
            .map(|h| {
                h.split_once('=')
                    .map(|(a, b)| (a.to_string(), b.to_string()))
                    .ok_or_else(|| Error::Config(format!("hint {h:?} is not left=right")))
            })
            .collect()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate the input tables, print the aligned schema
    Ingest {
        #[command(flatten)]
        tables: TableArgs,
    },
    /// Emit candidate pair lists via min-hash LSH blocking
    Block {
        #[command(flatten)]
        tables: TableArgs,
        /// Blocking attribute (left-table name)
        #[arg(long)]
        attribute: String,
        #[arg(long, default_value_t = 8)]
        bands: usize,
        #[arg(long, default_value_t = 4)]
        rows: usize,
        #[arg(long, default_value_t = 3)]
        q: usize,
        #[arg(long, default_value_t = 0x5eed_b10c)]
        seed: u64,
        /// cross | left | right | all
        #[arg(long, default_value = "cross")]
        scope: String,
        /// Output directory for the pair list files
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Turn a candidate pair file into a feature matrix + sidecar
    Featurize {
        #[command(flatten)]
        tables: TableArgs,
        /// Pair list file (two id columns, header row)
        #[arg(long)]
        pairs: PathBuf,
        /// cross | left | right
        #[arg(long, default_value = "cross")]
        scope: String,
        /// Output path prefix; writes <out>.csv and <out>.json
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-score a feature matrix with a saved model checkpoint
    Match {
        /// Feature matrix produced by `featurize`
        #[arg(long)]
        features: PathBuf,
        /// Matching sidecar file
        #[arg(long)]
        sidecar: PathBuf,
        /// Pair list the matrix rows are aligned with
        #[arg(long)]
        pairs: PathBuf,
        /// Model checkpoint (JSON)
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a predicted match list against gold labels
    Eval {
        /// Predicted pairs (first two columns are ids)
        #[arg(long)]
        pred: PathBuf,
        /// Gold pairs (two id columns)
        #[arg(long)]
        gold: PathBuf,
    },
    /// Generate a synthetic linked dataset from a generative spec
    Synth {
        /// Spec file (TOML)
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute the full pipeline from a config file
    Run {
        /// Config file (TOML)
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, e.g. --set model.epsilon=0.4 (repeatable)
        #[arg(long = "set")]
        overrides: Vec<String>,
    },
}

fn scope_of(s: &str) -> Result<Scope, Error> {
    match s {
        "cross" => Ok(Scope::Cross),
        "left" => Ok(Scope::Left),
        "right" => Ok(Scope::Right),
        other => Err(Error::Config(format!("unknown scope {other:?}"))),
    }
}

fn load_pairs(path: &PathBuf, left: &Table, right: &Table) -> Result<Vec<(u32, u32)>, Error> {
    let mut reader = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let a = record[0].trim().to_lowercase();
        let b = record[1].trim().to_lowercase();
        let ra = left.row_by_id(&a).ok_or_else(|| Error::UnresolvedId {
            id: a.clone(),
            scope: "pairs/left".into(),
        })?;
        let rb = right.row_by_id(&b).ok_or_else(|| Error::UnresolvedId {
            id: b.clone(),
            scope: "pairs/right".into(),
        })?;
        out.push((ra as u32, rb as u32));
    }
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest { tables } => {
            let (left, right) = tables.load()?;
            let hints = tables.hint_pairs()?;
            let right_ref = right.as_ref().unwrap_or(&left);
            let schema = align_schemas(
                &left,
                right_ref,
                if hints.is_empty() { None } else { Some(&hints) },
            )?;
            println!(
                "{}",
                serde_json::to_string_pretty(&schema)
                    .map_err(|e| Error::Parse(format!("schema encode: {e}")))?
            );
            eprintln!(
                "left: {} tuples, {} attributes; right: {} tuples; aligned: {}",
                left.len(),
                left.attributes.len(),
                right_ref.len(),
                schema.pairs.len()
            );
            Ok(())
        }
        Command::Block {
            tables,
            attribute,
            bands,
            rows,
            q,
            seed,
            scope,
            out_dir,
        } => {
            let (left, right) = tables.load()?;
            let right_ref = right.clone().unwrap_or_else(|| left.clone());
            let cfg = BlockingConfig {
                attribute,
                q,
                bands,
                rows_per_band: rows,
                seed,
            };
            let scopes: Vec<Scope> = match scope.as_str() {
                "all" => vec![Scope::Cross, Scope::Left, Scope::Right],
                s => vec![scope_of(s)?],
            };
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
                path: out_dir.clone(),
                source: e,
            })?;
            for sc in scopes {
                let cs = block_candidates(&left, &right_ref, sc, &cfg)?;
                let (ta, tb): (&Table, &Table) = match sc {
                    Scope::Cross => (&left, &right_ref),
                    Scope::Left => (&left, &left),
                    Scope::Right => (&right_ref, &right_ref),
                };
                let mut out = String::from(if sc == Scope::Cross {
                    "left_id,right_id\n"
                } else {
                    "id_a,id_b\n"
                });
                for &(a, b) in &cs.pairs {
                    out.push_str(&format!("{},{}\n", ta.id_of(a as usize), tb.id_of(b as usize)));
                }
                let path = out_dir.join(format!("pairs_{sc}.csv"));
                std::fs::write(&path, out).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                println!("{}: {} pairs ({})", path.display(), cs.len(), cs.provenance);
            }
            Ok(())
        }
        Command::Featurize {
            tables,
            pairs,
            scope,
            out,
        } => {
            let (left, right) = tables.load()?;
            let right_ref = right.clone().unwrap_or_else(|| left.clone());
            let hints = tables.hint_pairs()?;
            let schema = align_schemas(
                &left,
                &right_ref,
                if hints.is_empty() { None } else { Some(&hints) },
            )?;
            let fs = build_feature_schema(&schema);
            let sc = scope_of(&scope)?;
            let (ta, tb): (&Table, &Table) = match sc {
                Scope::Cross => (&left, &right_ref),
                Scope::Left => (&left, &left),
                Scope::Right => (&right_ref, &right_ref),
            };
            let pair_rows = load_pairs(&pairs, ta, tb)?;
            let cs = zeroer::blocking::CandidateSet {
                scope: sc,
                pairs: pair_rows,
                provenance: "pairs-file".into(),
            };
            let x = featurize(&cs, &left, &right_ref, &fs)?;
            let mpath = out.with_extension("csv");
            let spath = out.with_extension("json");
            save_matrix(&mpath, &spath, &x, &fs)?;
            println!("{}: {} rows x {} features", mpath.display(), x.n, x.d);
            Ok(())
        }
        Command::Match {
            features,
            sidecar,
            pairs,
            checkpoint,
            out,
        } => {
            let (x, _) = load_matrix(&features, &sidecar)?;
            let text = std::fs::read_to_string(&checkpoint).map_err(|e| Error::Io {
                path: checkpoint.clone(),
                source: e,
            })?;
            let ckpt: Checkpoint = serde_json::from_str(&text)
                .map_err(|e| Error::Parse(format!("checkpoint decode: {e}")))?;
            let params = ckpt.to_params()?;
            let gamma = e_step(&x, &params);

            // carry the id pairs through from the pair list
            let mut reader = csv::ReaderBuilder::new()
                .from_path(&pairs)
                .map_err(|e| Error::Parse(format!("{}: {e}", pairs.display())))?;
            let mut id_rows = Vec::new();
            for record in reader.records() {
                let r = record.map_err(|e| Error::Parse(format!("{}: {e}", pairs.display())))?;
                id_rows.push((r[0].trim().to_string(), r[1].trim().to_string()));
            }
            if id_rows.len() != x.n {
                return Err(Error::Parse(format!(
                    "pair list has {} rows, features have {}",
                    id_rows.len(),
                    x.n
                )));
            }
            let mut lines: Vec<String> = id_rows
                .iter()
                .enumerate()
                .filter(|(i, _)| gamma.get(*i) > 0.5)
                .map(|(i, (a, b))| format!("{a},{b},{:.12e},1", gamma.get(i)))
                .collect();
            lines.sort();
            let mut content = String::from("left_id,right_id,gamma,label\n");
            for l in lines {
                content.push_str(&l);
                content.push('\n');
            }
            std::fs::write(&out, content).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            println!("{}: rescored {} pairs", out.display(), x.n);
            Ok(())
        }
        Command::Eval { pred, gold } => {
            let gold = GoldLabels::load(&gold, None)?;
            let mut reader = csv::ReaderBuilder::new()
                .from_path(&pred)
                .map_err(|e| Error::Parse(format!("{}: {e}", pred.display())))?;
            let mut predicted = Vec::new();
            for record in reader.records() {
                let r = record.map_err(|e| Error::Parse(format!("{}: {e}", pred.display())))?;
                predicted.push((r[0].trim().to_lowercase(), r[1].trim().to_lowercase()));
            }
            let report = evaluate(&predicted, &gold);
            println!(
                "{}",
                serde_json::to_string_pretty(&report)
                    .map_err(|e| Error::Parse(format!("report encode: {e}")))?
            );
            Ok(())
        }
        Command::Synth { spec, out } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| Error::Io {
                path: spec.clone(),
                source: e,
            })?;
            let spec: SynthSpec =
                toml::from_str(&text).map_err(|e| Error::Config(format!("spec decode: {e}")))?;
            let data = generate_linked(&spec)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            // tables with the entity key as a categorical attribute
            let write_table = |name: &str, ids: &[String], ents: &[u32]| -> Result<(), Error> {
                let mut t = String::from("id,entity\n");
                for (id, e) in ids.iter().zip(ents) {
                    t.push_str(&format!("{id},e{e}\n"));
                }
                let p = out.join(name);
                std::fs::write(&p, t).map_err(|e| Error::Io { path: p, source: e })
            };
            write_table("table_left.csv", &data.left_ids, &data.left_entities)?;
            write_table("table_right.csv", &data.right_ids, &data.right_entities)?;
            let mut gold = String::from("left_id,right_id\n");
            for (l, r) in &data.gold {
                gold.push_str(&format!("{l},{r}\n"));
            }
            std::fs::write(out.join("gold.csv"), gold).map_err(|e| Error::Io {
                path: out.join("gold.csv"),
                source: e,
            })?;
            let fs = spec.feature_schema();
            for (name, pairs, x, ids_a, ids_b) in [
                ("cross", &data.cross_pairs, &data.x_cross, &data.left_ids, &data.right_ids),
                ("left", &data.left_pairs, &data.x_left, &data.left_ids, &data.left_ids),
                ("right", &data.right_pairs, &data.x_right, &data.right_ids, &data.right_ids),
            ] {
                let mut pf = String::from(if name == "cross" {
                    "left_id,right_id\n"
                } else {
                    "id_a,id_b\n"
                });
                for &(a, b) in pairs {
                    pf.push_str(&format!("{},{}\n", ids_a[a as usize], ids_b[b as usize]));
                }
                let p = out.join(format!("pairs_{name}.csv"));
                std::fs::write(&p, pf).map_err(|e| Error::Io { path: p, source: e })?;
                save_matrix(
                    &out.join(format!("features_{name}.csv")),
                    &out.join(format!("features_{name}.json")),
                    x,
                    &fs,
                )?;
            }
            println!(
                "{}: {} left rows, {} right rows, {} gold matches, {} planted triples",
                out.display(),
                data.left_ids.len(),
                data.right_ids.len(),
                data.gold.len(),
                data.planted.len()
            );
            Ok(())
        }
        Command::Run { config, overrides } => {
            let cfg = RunConfig::from_path_with_overrides(&config, &overrides)?;
            let artifacts = zeroer::pipeline::run(&cfg)?;
            println!(
                "matches: {} -> {}",
                artifacts.matches.len(),
                artifacts.match_path.display()
            );
            if let Some(report) = &artifacts.eval_report {
                println!(
                    "precision {:.4}  recall {:.4}  f1 {:.4}  (blocking recall {:.4})",
                    report.precision,
                    report.recall,
                    report.f1,
                    report.blocking_recall.unwrap_or(1.0)
                );
            }
            println!(
                "converged: {} after {} iterations",
                artifacts.fit_report.converged, artifacts.fit_report.iterations
            );
            Ok(())
        }
    }
}
