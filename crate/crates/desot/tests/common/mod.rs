#![allow(dead_code)]

use std::path::{Path, PathBuf};

use desot::config::GeneratorConfig;
use desot::RunConfig;

/// A pipeline small enough to run in about a second: 20 classes of 8x8
/// frames, one hidden layer, three epochs.
pub fn small_config() -> RunConfig {
    let mut cfg = RunConfig {
        generator: GeneratorConfig {
            max_per_class: 60,
            tail_exponent: 0.5,
            size: 8,
            seed: 2,
            ..Default::default()
        },
        ..Default::default()
    };
    cfg.seeds = vec![0, 10];
    cfg.minority_max_count = 25;
    cfg.train.hidden = vec![16];
    cfg.train.epochs = 3;
    cfg.train.batch_size = 32;
    cfg.sweep.kinds = vec!["gaussian_noise".into(), "rotation".into()];
    cfg.sweep.severities = vec![0, 3, 5];
    cfg.sweep.max_sequences = Some(40);
    cfg
}

pub fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

/// Rows of a CSV file keyed by header name.
pub fn read_csv(path: &Path) -> Vec<std::collections::BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            headers
                .iter()
                .zip(rec.unwrap().iter())
                .map(|(h, v)| (h.to_owned(), v.to_owned()))
                .collect()
        })
        .collect()
}
