//! `manifest.json`: configuration snapshot, artifact digests, temperatures
//! and every result the stage commands produce.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{validation, CliError, CliResult};
use crate::report::{EvalEntry, HistogramEntry, OodEntry, SweepRow};

pub const FILE_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> CliResult<String> {
    Ok(sha256_hex(
        &std::fs::read(path).map_err(|e| CliError::io(path, e))?,
    ))
}

/// A file under the output directory and its SHA-256.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(out: &Path, rel: &str) -> CliResult<Self> {
        Ok(Self {
            path: rel.to_owned(),
            sha256: file_digest(&out.join(rel))?,
        })
    }

    pub fn verify(&self, out: &Path) -> CliResult<()> {
        let found = file_digest(&out.join(&self.path))?;
        if found != self.sha256 {
            return Err(validation!(
                "{} changed since it was recorded (digest mismatch)",
                self.path
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub entropy_unit: String,
    pub ece_bins: usize,
    pub brier_bins: usize,
    pub brier_decomposition: String,
    pub std: String,
    pub added_augmentations: Vec<String>,
}

impl Default for Conventions {
    fn default() -> Self {
        use desot_core::metrics::{DEFAULT_BRIER_BINS, DEFAULT_ECE_BINS};
        Self {
            entropy_unit: "nats".into(),
            ece_bins: DEFAULT_ECE_BINS,
            brier_bins: DEFAULT_BRIER_BINS,
            brier_decomposition: "per-class probability bins, REL/RES/UNC summed over classes"
                .into(),
            std: "population".into(),
            added_augmentations: vec!["brightness".into(), "occlusion".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSection {
    pub dataset_sha256: String,
    pub files: Vec<FileDigest>,
    pub class_names: Vec<String>,
    pub ood_classes: Vec<String>,
    pub train_class_counts: Vec<usize>,
    pub minority_classes: Vec<usize>,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test_sequences: usize,
    pub n_ood_sequences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedModels {
    pub seed: u64,
    /// Ensemble members in order.
    pub files: Vec<FileDigest>,
    /// The dropout network, trained only when the MC-dropout strategy is configured.
    #[serde(default)]
    pub mc_dropout: Option<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureEntry {
    pub seed: u64,
    pub strategy: String,
    pub members: usize,
    pub temperature: f64,
    pub nll: f64,
    pub nll_at_one: f64,
    pub clamped: bool,
    pub search_min: f64,
    pub search_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub tool: String,
    pub run_digest: Option<String>,
    /// Effective configuration of the most recent command.
    pub config: Option<RunConfig>,
    pub conventions: Conventions,
    pub data: Option<DataSection>,
    pub models: Vec<SeedModels>,
    pub calibration: Vec<TemperatureEntry>,
    pub eval: Vec<EvalEntry>,
    pub ood: Vec<OodEntry>,
    pub histograms: Vec<HistogramEntry>,
    pub sweep: Vec<SweepRow>,
}

impl Manifest {
    pub fn new() -> Self {
        Self {
            tool: concat!("desot ", env!("CARGO_PKG_VERSION")).into(),
            ..Default::default()
        }
    }

    /// The manifest in `out`, or a fresh one when absent.
    pub fn load_or_new(out: &Path) -> CliResult<Self> {
        let path = out.join(FILE_NAME);
        if !path.exists() {
            return Ok(Self::new());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| validation!("{}: {e}", path.display()))
    }

    pub fn save(&self, out: &Path) -> CliResult<()> {
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        crate::format::write(&out.join(FILE_NAME), text.as_bytes())
    }

    /// Digest over the data and model file digests, in recorded order.
    pub fn compute_run_digest(&self) -> String {
        let mut h = Sha256::new();
        if let Some(d) = &self.data {
            h.update(d.dataset_sha256.as_bytes());
            for f in &d.files {
                h.update(f.path.as_bytes());
                h.update(f.sha256.as_bytes());
            }
        }
        for s in &self.models {
            h.update(s.seed.to_le_bytes());
            for f in s.files.iter().chain(&s.mc_dropout) {
                h.update(f.path.as_bytes());
                h.update(f.sha256.as_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn require_trained(&self) -> CliResult<(&DataSection, &str)> {
        match (&self.data, &self.run_digest) {
            (Some(d), Some(r)) if !self.models.is_empty() => Ok((d, r)),
            _ => Err(validation!(
                "no trained models recorded; run `desot train` first"
            )),
        }
    }

    pub fn temperature(
        &self,
        seed: u64,
        strategy: &str,
        members: usize,
    ) -> Option<&TemperatureEntry> {
        self.calibration
            .iter()
            .find(|t| t.seed == seed && t.strategy == strategy && t.members == members)
    }
}
