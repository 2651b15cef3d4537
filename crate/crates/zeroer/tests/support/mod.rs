//! Shared fixtures and oracles for the integration and acceptance suites.

pub mod benchdata;

use std::path::{Path, PathBuf};

use zeroer::config::RunConfig;

/// Write one benchmark dataset into a directory, returning the paths.
pub fn write_dataset(dir: &Path, data: &benchdata::BenchDataset) -> (PathBuf, PathBuf, PathBuf) {
    std::fs::create_dir_all(dir).unwrap();
    let left = dir.join("left.csv");
    let right = dir.join("right.csv");
    let gold = dir.join("gold.csv");
    std::fs::write(&left, &data.left_csv).unwrap();
    std::fs::write(&right, &data.right_csv).unwrap();
    std::fs::write(&gold, &data.gold_csv).unwrap();
    (left, right, gold)
}

/// Locate a real benchmark directory (left.csv/right.csv/gold.csv) if the
/// user has provided one; fall back to the generated stand-in otherwise.
pub fn real_data_dir(name: &str) -> Option<PathBuf> {
    let base = std::env::var("ZEROER_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|_| {
            Path::new(env!("CARGO_MANIFEST_DIR"))
                .join("../../data")
                .to_path_buf()
        });
    let dir = base.join(name);
    let ok = ["left.csv", "right.csv", "gold.csv"]
        .iter()
        .all(|f| dir.join(f).exists());
    ok.then_some(dir)
}

/// Base run config for a two-table dataset living in `dir`.
pub fn base_config(dir: &Path, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.paths.left = dir.join("left.csv");
    cfg.paths.right = Some(dir.join("right.csv"));
    cfg.paths.gold = Some(dir.join("gold.csv"));
    cfg.paths.out_dir = out.to_path_buf();
    cfg
}

pub fn f1_of(labels: &[bool], predicted: &[usize]) -> f64 {
    let tp = predicted.iter().filter(|&&i| labels[i]).count();
    let fp = predicted.len() - tp;
    let fn_ = labels.iter().filter(|&&l| l).count() - tp;
    if 2 * tp + fp + fn_ == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64)
}
