//! Serializable result rows, aggregates and the CSV writers.

use std::path::Path;

use desot_core::metrics::{EvalReport, Histogram};
use desot_core::ood::OodReport;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub ece: f64,
    pub brier_score: f64,
    pub brier_reliability: f64,
    pub mean_entropy: f64,
    pub forward_passes: f64,
    pub n_sequences: f64,
}

impl From<&EvalReport> for Metrics {
    fn from(r: &EvalReport) -> Self {
        Self {
            accuracy: r.accuracy,
            macro_f1: r.macro_f1,
            ece: r.ece,
            brier_score: r.brier_score,
            brier_reliability: r.brier_reliability,
            mean_entropy: r.mean_entropy,
            forward_passes: r.forward_passes as f64,
            n_sequences: r.n_samples as f64,
        }
    }
}

impl Metrics {
    const FIELDS: [&'static str; 8] = [
        "accuracy",
        "macro_f1",
        "ece",
        "brier_score",
        "brier_reliability",
        "mean_entropy",
        "forward_passes",
        "n_sequences",
    ];

    fn values(&self) -> [f64; 8] {
        [
            self.accuracy,
            self.macro_f1,
            self.ece,
            self.brier_score,
            self.brier_reliability,
            self.mean_entropy,
            self.forward_passes,
            self.n_sequences,
        ]
    }

    fn from_values(v: [f64; 8]) -> Self {
        Self {
            accuracy: v[0],
            macro_f1: v[1],
            ece: v[2],
            brier_score: v[3],
            brier_reliability: v[4],
            mean_entropy: v[5],
            forward_passes: v[6],
            n_sequences: v[7],
        }
    }
}

/// Mean and population standard deviation, summed in order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn aggregate(rows: &[Metrics]) -> (Metrics, Metrics) {
    let mut mean = [0.0; 8];
    let mut std = [0.0; 8];
    for i in 0..8 {
        let col: Vec<f64> = rows.iter().map(|r| r.values()[i]).collect();
        (mean[i], std[i]) = mean_std(&col);
    }
    (Metrics::from_values(mean), Metrics::from_values(std))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub metrics: Metrics,
}

/// One evaluation cell across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub strategy: String,
    pub members: usize,
    pub temp_scaled: bool,
    /// `all` or `minority`.
    pub subset: String,
    pub per_seed: Vec<SeedMetrics>,
    pub mean: Metrics,
    pub std: Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub threshold: f64,
    pub fit_f1: f64,
    pub degenerate: bool,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub mean_entropy_in: f64,
    pub mean_entropy_ood: f64,
}

impl Detection {
    pub fn new(
        fit_f1: f64,
        degenerate: bool,
        r: &OodReport,
        mean_entropy_in: f64,
        mean_entropy_ood: f64,
    ) -> Self {
        Self {
            threshold: r.threshold,
            fit_f1,
            degenerate,
            accuracy: r.accuracy,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            precision_undefined: r.precision_undefined,
            recall_undefined: r.recall_undefined,
            mean_entropy_in,
            mean_entropy_ood,
        }
    }

    fn values(&self) -> [f64; 7] {
        [
            self.threshold,
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.mean_entropy_in,
            self.mean_entropy_ood,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedDetection {
    pub seed: u64,
    pub detection: Detection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodEntry {
    pub strategy: String,
    pub members: usize,
    pub temp_scaled: bool,
    pub per_seed: Vec<SeedDetection>,
}

impl OodEntry {
    /// Seed-mean and standard deviation of threshold, accuracy, precision,
    /// recall, F1 and the two mean entropies.
    pub fn summary(&self) -> ([f64; 7], [f64; 7]) {
        let mut mean = [0.0; 7];
        let mut std = [0.0; 7];
        for i in 0..7 {
            let col: Vec<f64> = self
                .per_seed
                .iter()
                .map(|s| s.detection.values()[i])
                .collect();
            (mean[i], std[i]) = mean_std(&col);
        }
        (mean, std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramEntry {
    pub strategy: String,
    pub temp_scaled: bool,
    pub seed: u64,
    pub edges: Vec<f64>,
    pub count_in: Vec<usize>,
    pub count_ood: Vec<usize>,
    pub mean_in: f64,
    pub mean_ood: f64,
}

impl HistogramEntry {
    pub fn new(
        strategy: &str,
        temp_scaled: bool,
        seed: u64,
        inside: &Histogram,
        ood: &Histogram,
    ) -> Self {
        Self {
            strategy: strategy.to_owned(),
            temp_scaled,
            seed,
            edges: inside.edges.clone(),
            count_in: inside.counts.clone(),
            count_ood: ood.counts.clone(),
            mean_in: inside.mean,
            mean_ood: ood.mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: String,
    pub temp_scaled: bool,
    pub seed: u64,
    pub kind: String,
    pub severity: u32,
    pub accuracy: f64,
    pub brier_reliability: f64,
    pub mean_entropy: f64,
}

fn on_off(t: bool) -> &'static str {
    if t {
        "on"
    } else {
        "off"
    }
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    crate::format::write(path, &bytes)
}

/// Per-seed rows followed by `mean` and `std` rows for every entry.
pub fn write_metrics_csv(path: &Path, entries: &[EvalEntry], digest: &str) -> CliResult<()> {
    let mut header = vec!["strategy", "members", "temp_scaled", "subset", "seed"];
    header.extend(Metrics::FIELDS);
    header.push("run_digest");
    let mut rows = Vec::new();
    for e in entries {
        let labelled = e
            .per_seed
            .iter()
            .map(|s| (s.seed.to_string(), s.metrics))
            .chain([("mean".to_owned(), e.mean), ("std".to_owned(), e.std)]);
        for (seed, m) in labelled {
            let mut row = vec![
                e.strategy.clone(),
                e.members.to_string(),
                on_off(e.temp_scaled).into(),
                e.subset.clone(),
                seed,
            ];
            row.extend(m.values().iter().map(|v| v.to_string()));
            row.push(digest.to_owned());
            rows.push(row);
        }
    }
    write_csv(path, &header, &rows)
}

/// One row per (strategy, temperature setting), seed-averaged.
pub fn write_ood_csv(path: &Path, entries: &[OodEntry], digest: &str) -> CliResult<()> {
    let header = [
        "strategy",
        "members",
        "temp_scaled",
        "seeds",
        "threshold",
        "accuracy",
        "precision",
        "recall",
        "f1",
        "f1_std",
        "mean_entropy_in",
        "mean_entropy_ood",
        "run_digest",
    ];
    let rows: Vec<Vec<String>> = entries
        .iter()
        .map(|e| {
            let (mean, std) = e.summary();
            let mut row = vec![
                e.strategy.clone(),
                e.members.to_string(),
                on_off(e.temp_scaled).into(),
                e.per_seed.len().to_string(),
            ];
            row.extend(mean[..5].iter().map(|v| v.to_string()));
            row.push(std[4].to_string());
            row.extend(mean[5..].iter().map(|v| v.to_string()));
            row.push(digest.to_owned());
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

pub fn write_histogram_csv(
    path: &Path,
    entries: &[&HistogramEntry],
    digest: &str,
) -> CliResult<()> {
    let header = [
        "temp_scaled",
        "seed",
        "bin_left",
        "bin_right",
        "count_in",
        "count_ood",
        "mean_in",
        "mean_ood",
        "run_digest",
    ];
    let mut rows = Vec::new();
    for e in entries {
        for b in 0..e.count_in.len() {
            rows.push(vec![
                on_off(e.temp_scaled).into(),
                e.seed.to_string(),
                e.edges[b].to_string(),
                e.edges[b + 1].to_string(),
                e.count_in[b].to_string(),
                e.count_ood[b].to_string(),
                e.mean_in.to_string(),
                e.mean_ood.to_string(),
                digest.to_owned(),
            ]);
        }
    }
    write_csv(path, &header, &rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow], digest: &str) -> CliResult<()> {
    let header = [
        "mode",
        "temp_scaled",
        "seed",
        "kind",
        "severity",
        "accuracy",
        "brier_reliability",
        "mean_entropy",
        "run_digest",
    ];
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.strategy.clone(),
                on_off(r.temp_scaled).into(),
                r.seed.to_string(),
                r.kind.clone(),
                r.severity.to_string(),
                r.accuracy.to_string(),
                r.brier_reliability.to_string(),
                r.mean_entropy.to_string(),
                digest.to_owned(),
            ]
        })
        .collect();
    write_csv(path, &header, &rows)
}
