//! Run configuration: one JSON document, every field defaulted, with CLI
//! overrides applied on top.

use std::path::{Path, PathBuf};

use desot_core::data::signs::{class_name, SignDatasetConfig};
use desot_core::data::{AugmentationKind, Jitter};
use desot_core::{Strategy, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{validation, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub classes: usize,
    pub tail_exponent: f64,
    pub max_per_class: usize,
    pub min_per_class: usize,
    pub size: usize,
    pub background_noise: f64,
    pub color_jitter: f64,
    pub position_jitter: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            classes: 20,
            tail_exponent: 1.0,
            max_per_class: 2500,
            min_per_class: 8,
            size: 12,
            background_noise: 0.15,
            color_jitter: 0.2,
            position_jitter: 0.1,
            seed: 1,
        }
    }
}

impl GeneratorConfig {
    pub fn to_core(&self) -> SignDatasetConfig {
        SignDatasetConfig {
            num_classes: self.classes,
            tail_exponent: self.tail_exponent,
            max_per_class: self.max_per_class,
            min_per_class: self.min_per_class,
            size: self.size,
            background_noise: self.background_noise,
            color_jitter: self.color_jitter,
            position_jitter: self.position_jitter,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    /// Classes with fewer in-distribution samples are dropped before splitting.
    pub min_class_count: usize,
    /// Minimum frame side; frames below it are rejected. `None` disables.
    pub min_crop_size: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            validation_fraction: 0.15,
            test_fraction: 0.25,
            seed: 7,
            min_class_count: 10,
            min_crop_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceConfig {
    pub length: usize,
    pub translate: f64,
    pub scale: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        let j = Jitter::default();
        Self {
            length: 11,
            translate: j.translate,
            scale: j.scale,
            noise_sigma: j.noise_sigma,
            seed: 3,
        }
    }
}

impl SequenceConfig {
    pub fn jitter(&self) -> Jitter {
        Jitter {
            translate: self.translate,
            scale: self.scale,
            noise_sigma: self.noise_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Dropout of the ensemble members.
    pub dropout_rate: f64,
    /// Dropout of the separate network behind the MC-dropout strategy.
    pub mc_dropout_rate: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            epochs: 20,
            batch_size: 64,
            learning_rate: 2e-3,
            weight_decay: 0.01,
            dropout_rate: 0.0,
            mc_dropout_rate: 0.2,
        }
    }
}

impl TrainSection {
    pub fn to_core(&self, seed: u64) -> TrainConfig {
        self.with_dropout(seed, self.dropout_rate)
    }

    pub fn mc_core(&self, seed: u64) -> TrainConfig {
        self.with_dropout(seed, self.mc_dropout_rate)
    }

    fn with_dropout(&self, seed: u64, dropout_rate: f64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            seed,
            dropout_rate,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OodSection {
    pub split_seed: u64,
    pub histogram_bins: usize,
}

impl Default for OodSection {
    fn default() -> Self {
        Self {
            split_seed: 5,
            histogram_bins: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub kinds: Vec<String>,
    pub severities: Vec<u32>,
    pub max_severity: u32,
    /// Evaluate at most this many evenly spaced test sequences. `None` uses all.
    pub max_sequences: Option<usize>,
    pub seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            kinds: AugmentationKind::ALL
                .iter()
                .map(|k| k.name().to_owned())
                .collect(),
            severities: vec![0, 1, 2, 3, 4, 5],
            max_severity: 5,
            max_sequences: Some(300),
            seed: 11,
        }
    }
}

/// Classes drawn in the one glyph color that no kept class shares.
pub fn default_ood_classes(classes: usize) -> Vec<String> {
    (0..classes)
        .map(class_name)
        .filter(|n| n.contains("_white_"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Existing frame dataset. `None` means `<out>/dataset.dset`, generated
    /// by `run` from `generator`.
    pub dataset: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub split: SplitConfig,
    pub sequences: SequenceConfig,
    pub ood_classes: Vec<String>,
    pub members: usize,
    pub seeds: Vec<u64>,
    pub strategies: Vec<String>,
    /// Which rows to produce: `None` both, otherwise only scaled or unscaled.
    pub temp_scaled: Option<bool>,
    pub schedule_offset: usize,
    /// Minority evaluation keeps classes with at most this many training frames.
    pub minority_max_count: usize,
    pub train: TrainSection,
    pub ood: OodSection,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let generator = GeneratorConfig::default();
        Self {
            dataset: None,
            ood_classes: default_ood_classes(generator.classes),
            generator,
            split: SplitConfig::default(),
            sequences: SequenceConfig::default(),
            members: 5,
            seeds: vec![0, 10, 20, 30, 40],
            strategies: Strategy::ALL.iter().map(|s| s.name().to_owned()).collect(),
            temp_scaled: None,
            schedule_offset: 0,
            minority_max_count: 200,
            train: TrainSection::default(),
            ood: OodSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

/// Command-line values that replace config keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Strategy>,
    pub members: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub temp_scaled: Option<bool>,
}

impl RunConfig {
    /// Parse a config file; a relative `dataset` path is resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| validation!("{}: invalid config: {e}", path.display()))?;
        if let Some(ds) = cfg.dataset.as_mut().filter(|p| p.is_relative()) {
            *ds = path.parent().unwrap_or(Path::new("")).join(&*ds);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> CliResult<()> {
        if let Some(mode) = o.mode {
            self.strategies = vec![mode.name().to_owned()];
        }
        if let Some(m) = o.members {
            self.members = m;
        }
        if let Some(seeds) = &o.seeds {
            self.seeds = seeds.clone();
        }
        if o.temp_scaled.is_some() {
            self.temp_scaled = o.temp_scaled;
        }
        self.validate()
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.members == 0 {
            return Err(validation!("members must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(validation!("seeds must not be empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(validation!("seeds must be distinct"));
        }
        self.strategy_list()?;
        self.sweep_kinds()?;
        if self.sequences.length == 0 {
            return Err(validation!("sequence length must be at least 1"));
        }
        if self.ood.histogram_bins == 0 {
            return Err(validation!("histogram_bins must be at least 1"));
        }
        self.train.to_core(0).validate()?;
        self.train.mc_core(0).validate()?;
        if self.train.mc_dropout_rate == 0.0 && self.strategy_list()?.contains(&Strategy::McDropout)
        {
            log::warn!(
                "mc_dropout_rate is 0, so the MC-dropout strategy reduces to a single model"
            );
        }
        Ok(())
    }

    pub fn strategy_list(&self) -> CliResult<Vec<Strategy>> {
        if self.strategies.is_empty() {
            return Err(validation!("strategies must not be empty"));
        }
        Ok(self
            .strategies
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_, _>>()?)
    }

    pub fn sweep_kinds(&self) -> CliResult<Vec<AugmentationKind>> {
        Ok(self
            .sweep
            .kinds
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_, _>>()?)
    }

    /// Temperature settings to report, unscaled first.
    pub fn temp_settings(&self) -> Vec<bool> {
        match self.temp_scaled {
            None => vec![false, true],
            Some(t) => vec![t],
        }
    }

    pub fn dataset_path(&self, out: &Path) -> PathBuf {
        self.dataset
            .clone()
            .unwrap_or_else(|| out.join("dataset.dset"))
    }
}
