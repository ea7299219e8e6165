//! Command entry points: each runs its stage, writes artifacts under the
//! output directory and records a manifest. Upstream artifacts are reused
//! when present and produced first when missing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::manifest::RunManifest;
use super::stages;
use crate::augment::AugmentedDatastore;
use crate::detect::{DetectorModel, Verdict};
use crate::error::{Error, Result};
use crate::ingest::{load_corpus, read_canonical, write_canonical, CorpusFormat, CorpusSplit, RequestCorpus};
use crate::lexicon::ReservedTokenSet;
use crate::lm::LanguageModel;
use crate::metrics::{similarity_report, write_report, ClassificationReport, IdfTable, MetricRow};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const RESERVED_FILE: &str = "reserved.txt";
pub const GENERATOR_DIR: &str = "generator";
pub const DATASTORE_FILE: &str = "datastore.jsonl";
pub const DETECTOR_DIR: &str = "detector";
pub const BASELINE_DIR: &str = "detector-baseline";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";

fn out_dir(config: &PipelineConfig) -> Result<PathBuf> {
    let out = config.output.clone();
    fs::create_dir_all(&out).map_err(|e| Error::unreadable(&out, e))?;
    Ok(out)
}

struct Timer(Instant);

impl Timer {
    fn start() -> Self {
        Timer(Instant::now())
    }

    fn stop(self, manifest: &mut RunManifest, stage: &str) {
        manifest.timings.insert(stage.into(), self.0.elapsed().as_secs_f64());
    }
}

pub fn cmd_ingest(config: &PipelineConfig) -> Result<RunManifest> {
    let out = out_dir(config)?;
    let mut m = RunManifest::new("ingest", config);
    let t = Timer::start();
    let (corpus, split, stats) = stages::ingest(config)?;
    t.stop(&mut m, "ingest");
    write_canonical(&out.join(CORPUS_FILE), &corpus.records)?;
    write_canonical(&out.join(TRAIN_FILE), &split.train.records)?;
    write_canonical(&out.join(TEST_FILE), &split.test.records)?;
    m.count("records", corpus.len());
    m.count("skipped_entries", stats.skipped);
    m.count("train_labels", split.train.label_counts());
    m.count("test_labels", split.test.label_counts());
    for f in [CORPUS_FILE, TRAIN_FILE, TEST_FILE] {
        m.checksum(&out, f)?;
    }
    m.write(&out)?;
    Ok(m)
}

fn load_split(config: &PipelineConfig) -> Result<CorpusSplit> {
    let out = out_dir(config)?;
    if !(out.join(TRAIN_FILE).exists() && out.join(TEST_FILE).exists()) {
        cmd_ingest(config)?;
    }
    Ok(CorpusSplit {
        train: read_canonical(&out.join(TRAIN_FILE))?,
        test: read_canonical(&out.join(TEST_FILE))?,
        train_fraction: config.train_fraction,
        seed: config.seeds().split,
    })
}

fn load_or_train_generator(config: &PipelineConfig, train: &RequestCorpus, m: &mut RunManifest) -> Result<LanguageModel> {
    let dir = out_dir(config)?.join(GENERATOR_DIR);
    if dir.join("weights.bin").exists() {
        return LanguageModel::load(&dir);
    }
    let t = Timer::start();
    let model = stages::train_generator(config, train)?;
    t.stop(m, "train_generator");
    model.save(&dir)?;
    Ok(model)
}

pub fn cmd_augment(config: &PipelineConfig) -> Result<RunManifest> {
    let out = out_dir(config)?;
    let split = load_split(config)?;
    let mut m = RunManifest::new("augment", config);

    let reserved = stages::reserved_for(&split.train, config.lexicon.confidence, config.lexicon.z_override)?;
    reserved.save(&out.join(RESERVED_FILE))?;
    m.count("reserved_tokens", reserved.len());
    m.count("reserved_threshold", reserved.threshold);

    let generator = load_or_train_generator(config, &split.train, &mut m)?;
    let t = Timer::start();
    let (datastore, summary) = stages::augment(config, &split.train, &generator, &reserved)?;
    t.stop(&mut m, "augment");
    datastore.save(&out.join(DATASTORE_FILE))?;

    m.count("synthetics_attempted", summary.stats.generation.attempted);
    m.count("synthetics_generated", summary.stats.generation.generated);
    m.count("synthetics_accepted", summary.stats.accepted);
    m.count("augment", &summary);
    for f in [RESERVED_FILE, GENERATOR_DIR, DATASTORE_FILE] {
        m.checksum(&out, f)?;
    }
    m.write(&out)?;
    Ok(m)
}

fn load_datastore(config: &PipelineConfig) -> Result<AugmentedDatastore> {
    let path = out_dir(config)?.join(DATASTORE_FILE);
    if !path.exists() {
        cmd_augment(config)?;
    }
    AugmentedDatastore::load(&path)
}

pub fn cmd_train_detector(config: &PipelineConfig) -> Result<RunManifest> {
    let out = out_dir(config)?;
    let datastore = load_datastore(config)?;
    let mut m = RunManifest::new("train-detector", config);
    let t = Timer::start();
    let (model, report) = stages::detector(config, &datastore)?;
    t.stop(&mut m, "train_detector");
    model.save(&out.join(DETECTOR_DIR))?;
    m.count("theta", report.theta);
    m.count("calibration_flag_rate", report.calibration_flag_rate);
    m.count("detector", &report);
    m.checksum(&out, DETECTOR_DIR)?;
    m.write(&out)?;
    Ok(m)
}

fn load_detector(config: &PipelineConfig) -> Result<DetectorModel> {
    let dir = out_dir(config)?.join(DETECTOR_DIR);
    if !dir.join("calibration.json").exists() {
        cmd_train_detector(config)?;
    }
    DetectorModel::load(&dir)
}

fn load_baseline(config: &PipelineConfig, train: &RequestCorpus, m: &mut RunManifest) -> Result<DetectorModel> {
    let dir = out_dir(config)?.join(BASELINE_DIR);
    if dir.join("calibration.json").exists() {
        return DetectorModel::load(&dir);
    }
    let t = Timer::start();
    let (model, _) = stages::baseline_detector(config, train)?;
    t.stop(m, "train_baseline_detector");
    model.save(&dir)?;
    Ok(model)
}

pub fn write_verdicts(path: &Path, verdicts: &[Verdict]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::unreadable(path, e))?;
    let mut w = BufWriter::new(file);
    for v in verdicts {
        writeln!(w, "{}", serde_json::to_string(v)?)?;
    }
    w.flush()?;
    Ok(())
}

/// Classifies `input` (default: the test split) and writes `verdicts.jsonl`.
pub fn cmd_detect(config: &PipelineConfig, input: Option<(&Path, CorpusFormat)>) -> Result<RunManifest> {
    let out = out_dir(config)?;
    let corpus = match input {
        Some((path, format)) => load_corpus(path, format)?,
        None => load_split(config)?.test,
    };
    let model = load_detector(config)?;
    let mut m = RunManifest::new("detect", config);
    let t = Timer::start();
    let verdicts = model.classify_corpus(&corpus)?;
    t.stop(&mut m, "detect");
    write_verdicts(&out.join(VERDICTS_FILE), &verdicts)?;
    m.count("records", verdicts.len());
    m.count("flagged", verdicts.iter().filter(|v| v.flagged == crate::ingest::Label::Abnormal).count());
    m.count("oversized", verdicts.iter().filter(|v| v.oversized).count());
    m.checksum(&out, VERDICTS_FILE)?;
    m.write(&out)?;
    Ok(m)
}

fn classification_rows(dataset: &str, arm: &str, r: &ClassificationReport) -> Vec<MetricRow> {
    vec![
        MetricRow::new(dataset, arm, "precision", r.precision),
        MetricRow::new(dataset, arm, "recall", r.recall),
        MetricRow::new(dataset, arm, "f1", r.f1),
        MetricRow::new(dataset, arm, "mcc", r.mcc),
    ]
}

/// Similarity of synthetics to their sources, and test-split metrics of the
/// detector with and without augmentation.
pub fn cmd_evaluate(config: &PipelineConfig) -> Result<RunManifest> {
    let out = out_dir(config)?;
    let split = load_split(config)?;
    let datastore = load_datastore(config)?;
    let augmented = load_detector(config)?;
    let mut m = RunManifest::new("evaluate", config);
    let generator = load_or_train_generator(config, &split.train, &mut m)?;
    let name = config.data.name.as_str();

    let t = Timer::start();
    let by_id: BTreeMap<&str, _> = datastore.originals.iter().map(|r| (r.id.as_str(), r)).collect();
    let pairs: Vec<_> = datastore
        .synthetics
        .iter()
        .filter_map(|s| by_id.get(s.source_id.as_str()).map(|src| (&s.filled_request, *src)))
        .collect();
    let mut similarity_rows = Vec::new();
    if pairs.is_empty() {
        log::warn!("datastore has no synthetics; similarity report is empty");
    } else {
        let idf = IdfTable::from_requests(datastore.originals.iter());
        let s = similarity_report(&generator, &pairs, &idf)?;
        for (metric, v) in [("bleu", s.bleu), ("bertscore_p", s.bert_p), ("bertscore_r", s.bert_r), ("bertscore_f1", s.bert_f1), ("moverscore", s.mover)] {
            similarity_rows.push(MetricRow::new(name, "generator", metric, v));
        }
        m.count("similarity_pairs", s.pairs);
    }
    write_report(&out, "similarity", &similarity_rows)?;
    t.stop(&mut m, "similarity");

    let t = Timer::start();
    let baseline = load_baseline(config, &split.train, &mut m)?;
    let (_, base) = stages::evaluate(&baseline, &split.test)?;
    let (verdicts, aug) = stages::evaluate(&augmented, &split.test)?;
    t.stop(&mut m, "classification");
    let mut rows = classification_rows(name, "baseline", &base);
    rows.extend(classification_rows(name, "augmented", &aug));
    rows.push(MetricRow::new(name, "delta", "f1", aug.f1 - base.f1));
    write_report(&out, "classification", &rows)?;
    write_verdicts(&out.join(VERDICTS_FILE), &verdicts)?;
    m.count("baseline", &base);
    m.count("augmented", &aug);
    for f in ["similarity.tsv", "similarity.json", "classification.tsv", "classification.json", VERDICTS_FILE] {
        m.checksum(&out, f)?;
    }
    m.write(&out)?;
    Ok(m)
}

/// One row of the confidence-level ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub confidence: f64,
    pub z: f64,
    pub threshold: f64,
    pub reserved_tokens: usize,
    pub synthetics: usize,
    pub f1_baseline: f64,
    pub f1_augmented: f64,
    pub delta_f1: f64,
}

pub fn render_ablation(rows: &[AblationRow]) -> String {
    let mut s = String::from("confidence\tz\tthreshold\treserved\tsynthetics\tf1_baseline\tf1_augmented\tdelta_f1\n");
    for r in rows {
        writeln!(
            s,
            "{}\t{:.4}\t{:.4}\t{}\t{}\t{:.6}\t{:.6}\t{:+.6}",
            r.confidence, r.z, r.threshold, r.reserved_tokens, r.synthetics, r.f1_baseline, r.f1_augmented, r.delta_f1
        )
        .unwrap();
    }
    s
}

/// For each confidence level: reserved tokens from the normal quantile (no
/// override), augmentation and detection, F1 against the unaugmented
/// baseline. Repeated levels reuse the first result.
pub fn cmd_ablate(config: &PipelineConfig, levels: &[f64]) -> Result<(RunManifest, Vec<AblationRow>)> {
    let out = out_dir(config)?;
    if let Some(bad) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(Error::Config(format!("confidence level {bad} is outside (0, 1)")));
    }
    let split = load_split(config)?;
    let mut m = RunManifest::new("ablate", config);
    let generator = load_or_train_generator(config, &split.train, &mut m)?;
    let baseline = load_baseline(config, &split.train, &mut m)?;
    let (_, base) = stages::evaluate(&baseline, &split.test)?;

    let mut rows: Vec<AblationRow> = Vec::new();
    for &level in levels {
        if let Some(done) = rows.iter().find(|r| r.confidence == level) {
            rows.push(done.clone());
            continue;
        }
        let t = Timer::start();
        let reserved: ReservedTokenSet = stages::reserved_for(&split.train, level, None)?;
        let (datastore, _) = stages::augment(config, &split.train, &generator, &reserved)?;
        let (model, _) = stages::detector(config, &datastore)?;
        let (_, aug) = stages::evaluate(&model, &split.test)?;
        t.stop(&mut m, &format!("level_{level}"));
        rows.push(AblationRow {
            confidence: level,
            z: reserved.z.unwrap_or(f64::NAN),
            threshold: reserved.threshold,
            reserved_tokens: reserved.len(),
            synthetics: datastore.synthetics.len(),
            f1_baseline: base.f1,
            f1_augmented: aug.f1,
            delta_f1: aug.f1 - base.f1,
        });
    }
    let tsv = out.join("ablation.tsv");
    fs::write(&tsv, render_ablation(&rows)).map_err(|e| Error::unreadable(&tsv, e))?;
    let json = out.join("ablation.json");
    fs::write(&json, serde_json::to_string_pretty(&rows)?).map_err(|e| Error::unreadable(&json, e))?;
    m.count("levels", rows.len());
    m.checksum(&out, "ablation.tsv")?;
    m.checksum(&out, "ablation.json")?;
    m.write(&out)?;
    Ok((m, rows))
}
