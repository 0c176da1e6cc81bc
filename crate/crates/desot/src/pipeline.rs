//! Stage commands. Every stage reads its inputs from the output directory,
//! checks recorded digests, and merges its results into the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use desot_core::data::{
    filter_classes, generate_sign_dataset, holdout_ood_classes, passes_min_crop_size,
    severity_sweep, split_dataset, synthesize_sequences, FrameDataset, SequenceDataset,
};
use desot_core::eval::{calibrate, evaluate, predict_all, EvalSettings};
use desot_core::metrics::entropy_histogram;
use desot_core::ood::{evaluate_detection, fit_threshold, split_halves, OodRecord};
use desot_core::{calibration, train, Ensemble, Strategy, Temperature};
use serde::{Deserialize, Serialize};

use crate::config::{GeneratorConfig, RunConfig};
use crate::error::{validation, CliError, CliResult};
use crate::format::{
    load_dataset, load_model, load_sequences, save_dataset, save_model, save_sequences,
};
use crate::manifest::{
    file_digest, DataSection, FileDigest, Manifest, SeedModels, TemperatureEntry,
};
use crate::report::{
    aggregate, write_histogram_csv, write_metrics_csv, write_ood_csv, write_sweep_csv, Detection,
    EvalEntry, HistogramEntry, Metrics, OodEntry, SeedDetection, SeedMetrics, SweepRow,
};

pub const TRAIN_FILE: &str = "data/train.dset";
pub const VALIDATION_FILE: &str = "data/validation.dset";
pub const TEST_FILE: &str = "data/test.dseq";
pub const OOD_FILE: &str = "data/ood.dseq";
pub const SPLITS_FILE: &str = "data/splits.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const OOD_CSV: &str = "ood.csv";
pub const SWEEP_CSV: &str = "sweep.csv";

pub fn histogram_csv_name(strategy: Strategy) -> String {
    format!("entropy_hist_{}.csv", strategy.name())
}

pub fn model_file(seed: u64, member: usize) -> String {
    format!("models/seed{seed}/member{member}.mlpw")
}

pub fn mc_model_file(seed: u64) -> String {
    format!("models/seed{seed}/mcdropout.mlpw")
}

/// Source indices of each split within the filtered in-distribution set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitProvenance {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitProvenance {
    pub fn check_disjoint(&self) -> CliResult<()> {
        let mut seen = BTreeMap::new();
        for (role, idx) in [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
        ] {
            for &i in idx {
                if let Some(prev) = seen.insert(i, role) {
                    return Err(validation!(
                        "split overlap: source index {i} is in both {prev} and {role}"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Members used by `strategy` for an ensemble of `m`.
pub fn members_for(strategy: Strategy, m: usize) -> usize {
    if strategy.uses_ensemble() {
        m
    } else {
        1
    }
}

pub fn cmd_gen_data(gen: &GeneratorConfig, path: &Path) -> CliResult<FrameDataset> {
    let ds = generate_sign_dataset(&gen.to_core())?;
    save_dataset(&ds, path)?;
    log::info!(
        "wrote {} frames in {} classes to {}",
        ds.len(),
        ds.num_classes(),
        path.display()
    );
    Ok(ds)
}

fn prepare_data(cfg: &RunConfig, out: &Path) -> CliResult<DataSection> {
    let ds_path = cfg.dataset_path(out);
    let ds = load_dataset(&ds_path)?;
    if !passes_min_crop_size(ds.height(), ds.width(), cfg.split.min_crop_size) {
        return Err(validation!(
            "frames of {}x{} are below the minimum crop size",
            ds.height(),
            ds.width()
        ));
    }
    let held: Vec<&str> = cfg.ood_classes.iter().map(String::as_str).collect();
    let (inside, ood) = holdout_ood_classes(&ds, &held)?;
    if ood.is_empty() {
        return Err(validation!("the OOD holdout set is empty"));
    }
    let (inside, _) = filter_classes(&inside, cfg.split.min_class_count, None)?;
    let splits = split_dataset(
        &inside,
        cfg.split.validation_fraction,
        cfg.split.test_fraction,
        cfg.split.seed,
    )?;
    let jitter = cfg.sequences.jitter();
    let test = synthesize_sequences(
        &splits.test.dataset,
        cfg.sequences.length,
        &jitter,
        cfg.sequences.seed,
    )?;
    let ood_seqs = synthesize_sequences(
        &ood,
        cfg.sequences.length,
        &jitter,
        cfg.sequences.seed.wrapping_add(1),
    )?
    .with_group_offset(test.len() as u64)?;

    save_dataset(&splits.train.dataset, &out.join(TRAIN_FILE))?;
    save_dataset(&splits.validation.dataset, &out.join(VALIDATION_FILE))?;
    save_sequences(&test, &out.join(TEST_FILE))?;
    save_sequences(&ood_seqs, &out.join(OOD_FILE))?;
    let provenance = SplitProvenance {
        train: splits.train.source_indices.clone(),
        validation: splits.validation.source_indices.clone(),
        test: splits.test.source_indices.clone(),
    };
    let text = serde_json::to_string(&provenance).map_err(|e| CliError::Runtime(e.to_string()))?;
    crate::format::write(&out.join(SPLITS_FILE), text.as_bytes())?;

    let counts = splits.train.dataset.class_counts();
    let minority = (0..counts.len())
        .filter(|&c| counts[c] <= cfg.minority_max_count)
        .collect();
    let files = [
        TRAIN_FILE,
        VALIDATION_FILE,
        TEST_FILE,
        OOD_FILE,
        SPLITS_FILE,
    ]
    .iter()
    .map(|f| FileDigest::of(out, f))
    .collect::<CliResult<Vec<_>>>()?;
    Ok(DataSection {
        dataset_sha256: file_digest(&ds_path)?,
        files,
        class_names: inside.class_names().to_vec(),
        ood_classes: cfg.ood_classes.clone(),
        train_class_counts: counts,
        minority_classes: minority,
        n_train: splits.train.dataset.len(),
        n_validation: splits.validation.dataset.len(),
        n_test_sequences: test.len(),
        n_ood_sequences: ood_seqs.len(),
    })
}

fn data_file(out: &Path, data: &DataSection, rel: &str) -> CliResult<PathBuf> {
    let entry = data
        .files
        .iter()
        .find(|f| f.path == rel)
        .ok_or_else(|| validation!("{rel} is not recorded"))?;
    entry.verify(out)?;
    Ok(out.join(rel))
}

/// Split the data, then train `members` models per seed with seeds
/// `seed + 0 .. seed + members - 1`, plus the MC-dropout network (seeded like
/// member 0) when that strategy is configured. Starts a fresh manifest.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    let mut man = Manifest::new();
    let data = prepare_data(cfg, out)?;
    let train_ds = load_dataset(&data_file(out, &data, TRAIN_FILE)?)?;
    for &seed in &cfg.seeds {
        let mut files = Vec::with_capacity(cfg.members);
        for m in 0..cfg.members {
            let tc = cfg.train.to_core(seed.wrapping_add(m as u64));
            let outcome = train::train_new(&cfg.train.hidden, &train_ds, &tc)?;
            log::info!(
                "seed {seed} member {m}: final loss {:?}",
                outcome.epoch_losses.last()
            );
            let rel = model_file(seed, m);
            save_model(&outcome.model, &out.join(&rel))?;
            files.push(FileDigest::of(out, &rel)?);
        }
        let mut mc_dropout = None;
        if cfg.strategy_list()?.contains(&Strategy::McDropout) {
            let outcome = train::train_new(&cfg.train.hidden, &train_ds, &cfg.train.mc_core(seed))?;
            log::info!(
                "seed {seed} MC-dropout network: final loss {:?}",
                outcome.epoch_losses.last()
            );
            let rel = mc_model_file(seed);
            save_model(&outcome.model, &out.join(&rel))?;
            mc_dropout = Some(FileDigest::of(out, &rel)?);
        }
        man.models.push(SeedModels {
            seed,
            files,
            mc_dropout,
        });
    }
    man.data = Some(data);
    man.run_digest = Some(man.compute_run_digest());
    man.config = Some(cfg.clone());
    man.save(out)?;
    Ok(man)
}

fn load_file(out: &Path, f: &FileDigest) -> CliResult<desot_core::MlpModel> {
    f.verify(out)?;
    load_model(&out.join(&f.path))
}

/// The models `strategy` runs on for `seed`: the dropout network for
/// MC-dropout, otherwise the first `members_for(strategy, members)` members.
pub fn load_strategy_models(
    out: &Path,
    man: &Manifest,
    seed: u64,
    strategy: Strategy,
    members: usize,
) -> CliResult<Ensemble> {
    let recorded = man
        .models
        .iter()
        .find(|s| s.seed == seed)
        .ok_or_else(|| validation!("no models trained for seed {seed}"))?;
    if strategy == Strategy::McDropout {
        let f = recorded.mc_dropout.as_ref().ok_or_else(|| {
            validation!("no MC-dropout network trained for seed {seed}; train with mcdropout among the strategies")
        })?;
        return Ok(Ensemble::new(vec![load_file(out, f)?])?);
    }
    // every strategy's member count must exist, not only this one's
    if members > recorded.files.len() {
        return Err(validation!(
            "{members} members requested but only {} were trained for seed {seed}",
            recorded.files.len()
        ));
    }
    let models = recorded.files[..members_for(strategy, members)]
        .iter()
        .map(|f| load_file(out, f))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Ensemble::new(models)?)
}

/// Fit one temperature per (seed, strategy). Strategies sharing members and
/// NLL mode share the fitted value, so `de` and `desot` agree.
pub fn cmd_calibrate(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    let mut man = Manifest::load_or_new(out)?;
    let (data, _) = man.require_trained()?;
    let splits_path = data_file(out, data, SPLITS_FILE)?;
    let text = std::fs::read_to_string(&splits_path).map_err(|e| CliError::io(&splits_path, e))?;
    let provenance: SplitProvenance =
        serde_json::from_str(&text).map_err(|e| validation!("{}: {e}", splits_path.display()))?;
    provenance.check_disjoint()?;
    let val = load_dataset(&data_file(out, data, VALIDATION_FILE)?)?;
    let strategies = cfg.strategy_list()?;
    let mut entries = Vec::new();
    for &seed in &cfg.seeds {
        let mut fits: BTreeMap<(bool, bool), calibration::TemperatureFit> = BTreeMap::new();
        for &s in &strategies {
            let key = (s.uses_ensemble(), s == Strategy::McDropout);
            let fit = match fits.get(&key) {
                Some(f) => *f,
                None => {
                    let ens = load_strategy_models(out, &man, seed, s, cfg.members)?;
                    let f = calibrate(&ens, s, &val, seed)?;
                    fits.insert(key, f);
                    f
                }
            };
            log::info!(
                "seed {seed} {s}: T = {} (NLL {} -> {})",
                fit.temperature.value(),
                fit.nll_at_one,
                fit.nll
            );
            entries.push(TemperatureEntry {
                seed,
                strategy: s.name().to_owned(),
                members: members_for(s, cfg.members),
                temperature: fit.temperature.value(),
                nll: fit.nll,
                nll_at_one: fit.nll_at_one,
                clamped: fit.clamped,
                search_min: calibration::SEARCH_MIN,
                search_max: calibration::SEARCH_MAX,
            });
        }
    }
    for e in entries {
        match man
            .calibration
            .iter_mut()
            .find(|t| t.seed == e.seed && t.strategy == e.strategy && t.members == e.members)
        {
            Some(slot) => *slot = e,
            None => man.calibration.push(e),
        }
    }
    man.config = Some(cfg.clone());
    man.save(out)?;
    Ok(man)
}

fn temperature(
    man: &Manifest,
    seed: u64,
    s: Strategy,
    members: usize,
    scaled: bool,
) -> CliResult<Temperature> {
    if !scaled {
        return Ok(Temperature::ONE);
    }
    let entry = man
        .temperature(seed, s.name(), members_for(s, members))
        .ok_or_else(|| validation!("no temperature for {s} (seed {seed}, {members} members); run `desot calibrate` first"))?;
    Ok(Temperature::new(entry.temperature)?)
}

fn settings(
    man: &Manifest,
    cfg: &RunConfig,
    seed: u64,
    s: Strategy,
    scaled: bool,
) -> CliResult<EvalSettings> {
    Ok(EvalSettings {
        temperature: temperature(man, seed, s, cfg.members, scaled)?,
        schedule_offset: cfg.schedule_offset,
        seed,
    })
}

fn merge<T, K: PartialEq>(into: &mut Vec<T>, new: Vec<T>, key: impl Fn(&T) -> K) {
    for e in new {
        match into.iter_mut().find(|x| key(x) == key(&e)) {
            Some(slot) => *slot = e,
            None => into.push(e),
        }
    }
}

/// Evaluate every (strategy, temperature setting) on all test sequences
/// and on the minority-class subset, per seed plus aggregates.
pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    let mut man = Manifest::load_or_new(out)?;
    let (data, digest) = man.require_trained()?;
    let digest = digest.to_owned();
    let test = load_sequences(&data_file(out, data, TEST_FILE)?)?;
    let minority = test.filter_labels(&data.minority_classes);
    let mut subsets: Vec<(&str, &SequenceDataset)> = vec![("all", &test)];
    if minority.is_empty() {
        log::warn!("no test sequences in minority classes; skipping the minority subset");
    } else {
        subsets.push(("minority", &minority));
    }
    let strategies = cfg.strategy_list()?;
    let mut entries = Vec::new();
    for &s in &strategies {
        let ensembles = cfg
            .seeds
            .iter()
            .map(|&seed| load_strategy_models(out, &man, seed, s, cfg.members))
            .collect::<CliResult<Vec<_>>>()?;
        for scaled in cfg.temp_settings() {
            for &(subset, seqs) in &subsets {
                let mut per_seed = Vec::with_capacity(cfg.seeds.len());
                for (&seed, ens) in cfg.seeds.iter().zip(&ensembles) {
                    let report = evaluate(
                        ens,
                        s,
                        &seqs.sequences,
                        &settings(&man, cfg, seed, s, scaled)?,
                    )?;
                    per_seed.push(SeedMetrics {
                        seed,
                        metrics: Metrics::from(&report),
                    });
                }
                let rows: Vec<Metrics> = per_seed.iter().map(|r| r.metrics).collect();
                let (mean, std) = aggregate(&rows);
                log::info!("{s} scaled={scaled} {subset}: accuracy {}", mean.accuracy);
                entries.push(EvalEntry {
                    strategy: s.name().to_owned(),
                    members: members_for(s, cfg.members),
                    temp_scaled: scaled,
                    subset: subset.to_owned(),
                    per_seed,
                    mean,
                    std,
                });
            }
        }
    }
    merge(&mut man.eval, entries, |e| {
        (
            e.strategy.clone(),
            e.members,
            e.temp_scaled,
            e.subset.clone(),
        )
    });
    write_metrics_csv(&out.join(METRICS_CSV), &man.eval, &digest)?;
    man.config = Some(cfg.clone());
    man.save(out)?;
    Ok(man)
}

fn mean_entropy(records: &[OodRecord], ood: bool) -> f64 {
    let v: Vec<f64> = records
        .iter()
        .filter(|r| r.is_ood == ood)
        .map(|r| r.entropy)
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Entropy-threshold OOD detection per (strategy, temperature setting),
/// plus entropy histograms of in-distribution and OOD sequences.
pub fn cmd_ood(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    let mut man = Manifest::load_or_new(out)?;
    let (data, digest) = man.require_trained()?;
    let digest = digest.to_owned();
    let test = load_sequences(&data_file(out, data, TEST_FILE)?)?;
    let ood = load_sequences(&data_file(out, data, OOD_FILE)?)?;
    if ood.is_empty() {
        return Err(validation!("the OOD sequence set is empty"));
    }
    let strategies = cfg.strategy_list()?;
    let mut entries = Vec::new();
    let mut hists = Vec::new();
    for &seed in &cfg.seeds {
        for &s in &strategies {
            let ens = load_strategy_models(out, &man, seed, s, cfg.members)?;
            let range = (0.0, (ens.num_classes() as f64).ln());
            for scaled in cfg.temp_settings() {
                let st = settings(&man, cfg, seed, s, scaled)?;
                let inside = predict_all(&ens, s, &test.sequences, &st, false)?;
                let outside = predict_all(&ens, s, &ood.sequences, &st, true)?;
                let records: Vec<OodRecord> = inside
                    .records
                    .iter()
                    .map(|r| (r, false))
                    .chain(outside.records.iter().map(|r| (r, true)))
                    .map(|(r, is_ood)| OodRecord {
                        entropy: r.dist.entropy(),
                        is_ood,
                        group_id: r.group_id,
                    })
                    .collect();
                let (fit_half, eval_half) = split_halves(&records, cfg.ood.split_seed)?;
                let fit = fit_threshold(&fit_half)?;
                let report = evaluate_detection(&eval_half, fit.threshold)?;
                let detection = Detection::new(
                    fit.fit_f1,
                    fit.degenerate,
                    &report,
                    mean_entropy(&records, false),
                    mean_entropy(&records, true),
                );
                let key = (s.name().to_owned(), scaled);
                match entries
                    .iter_mut()
                    .find(|e: &&mut OodEntry| (e.strategy.clone(), e.temp_scaled) == key)
                {
                    Some(e) => e.per_seed.push(SeedDetection { seed, detection }),
                    None => entries.push(OodEntry {
                        strategy: key.0,
                        members: members_for(s, cfg.members),
                        temp_scaled: scaled,
                        per_seed: vec![SeedDetection { seed, detection }],
                    }),
                }
                let h_in = entropy_histogram(&inside.records, cfg.ood.histogram_bins, Some(range))?;
                let h_out =
                    entropy_histogram(&outside.records, cfg.ood.histogram_bins, Some(range))?;
                hists.push(HistogramEntry::new(s.name(), scaled, seed, &h_in, &h_out));
            }
        }
    }
    merge(&mut man.ood, entries, |e| {
        (e.strategy.clone(), e.members, e.temp_scaled)
    });
    merge(&mut man.histograms, hists, |h| {
        (h.strategy.clone(), h.temp_scaled, h.seed)
    });
    write_ood_csv(&out.join(OOD_CSV), &man.ood, &digest)?;
    for s in Strategy::ALL {
        let rows: Vec<&HistogramEntry> = man
            .histograms
            .iter()
            .filter(|h| h.strategy == s.name())
            .collect();
        if !rows.is_empty() {
            write_histogram_csv(&out.join(histogram_csv_name(s)), &rows, &digest)?;
        }
    }
    man.config = Some(cfg.clone());
    man.save(out)?;
    Ok(man)
}

/// The sequences the sweep evaluates: up to `max_sequences` evenly spaced test sequences.
pub fn sweep_sequences(cfg: &RunConfig, test: &SequenceDataset) -> SequenceDataset {
    match cfg.sweep.max_sequences {
        Some(n) => test.strided(n),
        None => test.clone(),
    }
}

/// Augmentation-severity sweep with the first seed's ensemble.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    let mut man = Manifest::load_or_new(out)?;
    let (data, digest) = man.require_trained()?;
    let digest = digest.to_owned();
    let test = load_sequences(&data_file(out, data, TEST_FILE)?)?;
    let seqs = sweep_sequences(cfg, &test);
    if seqs.is_empty() {
        return Err(validation!("no sequences to sweep"));
    }
    let seed = cfg.seeds[0];
    let kinds = cfg.sweep_kinds()?;
    let mut rows = Vec::new();
    for s in cfg.strategy_list()? {
        let ens = load_strategy_models(out, &man, seed, s, cfg.members)?;
        for scaled in cfg.temp_settings() {
            let st = settings(&man, cfg, seed, s, scaled)?;
            let eval = |ds: &SequenceDataset| evaluate(&ens, s, &ds.sequences, &st);
            let cells = severity_sweep(
                &seqs,
                &kinds,
                &cfg.sweep.severities,
                cfg.sweep.max_severity,
                cfg.sweep.seed,
                eval,
            )?;
            log::info!("{s} scaled={scaled}: {} sweep cells", cells.len());
            rows.extend(cells.into_iter().map(|c| SweepRow {
                strategy: s.name().to_owned(),
                temp_scaled: scaled,
                seed,
                kind: c.kind.name().to_owned(),
                severity: c.severity,
                accuracy: c.report.accuracy,
                brier_reliability: c.report.brier_reliability,
                mean_entropy: c.report.mean_entropy,
            }));
        }
    }
    merge(&mut man.sweep, rows, |r| {
        (
            r.strategy.clone(),
            r.temp_scaled,
            r.kind.clone(),
            r.severity,
        )
    });
    write_sweep_csv(&out.join(SWEEP_CSV), &man.sweep, &digest)?;
    man.config = Some(cfg.clone());
    man.save(out)?;
    Ok(man)
}

/// Every stage in order, generating the dataset first when the config
/// does not name one.
pub fn run_all(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    if cfg.dataset.is_none() {
        cmd_gen_data(&cfg.generator, &cfg.dataset_path(out))?;
    }
    cmd_train(cfg, out)?;
    cmd_calibrate(cfg, out)?;
    cmd_eval(cfg, out)?;
    cmd_ood(cfg, out)?;
    cmd_sweep(cfg, out)
}
