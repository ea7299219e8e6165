//! The pipeline stages as plain functions over in-memory values.

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::augment::{
    assemble_datastore, generate_candidates, train_discriminator_with_report, AugmentStats, AugmentedDatastore,
    DiscriminatorReport,
};
use crate::detect::{train_detector, DetectorModel, DetectorReport, Verdict};
use crate::error::Result;
use crate::ingest::{load_corpus_with_stats, smoke_corpus, split_corpus, CorpusSplit, LoadStats, RequestCorpus};
use crate::lexicon::{build_frequency_table, ReservedTokenSet};
use crate::lm::{train_bbpe, train_mlm, LanguageModel};
use crate::metrics::{classification_report, confusion, ClassificationReport};

/// Loads the configured corpus (or generates the smoke corpus) and splits it.
pub fn ingest(config: &PipelineConfig) -> Result<(RequestCorpus, CorpusSplit, LoadStats)> {
    let seeds = config.seeds();
    let (corpus, stats) = match &config.data.path {
        Some(path) => load_corpus_with_stats(path, config.data.format)?,
        None => {
            let c = smoke_corpus(config.data.smoke_records, seeds.smoke);
            let n = c.len();
            (c, LoadStats { parsed: n, skipped: 0 })
        }
    };
    let split = split_corpus(&corpus, config.train_fraction, seeds.split)?;
    Ok((corpus, split, stats))
}

/// Reserved tokens of the training split at `confidence`, or at the
/// override z when one is given.
pub fn reserved_for(train: &RequestCorpus, confidence: f64, z_override: Option<f64>) -> Result<ReservedTokenSet> {
    let table = build_frequency_table(train)?;
    ReservedTokenSet::derive(&table, confidence, z_override)
}

/// Masked LM over the whole training split; supplies fills and embeddings.
pub fn train_generator(config: &PipelineConfig, train: &RequestCorpus) -> Result<LanguageModel> {
    let lm = config.generator_config();
    let tokenizer = train_bbpe(train, lm.vocab_size)?;
    train_mlm(&tokenizer, train, &lm)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentSummary {
    pub stats: AugmentStats,
    pub discriminator: Option<DiscriminatorReport>,
}

/// One candidate per training record, a discriminator trained against
/// them, and the datastore of accepted candidates.
pub fn augment(
    config: &PipelineConfig,
    train: &RequestCorpus,
    generator: &LanguageModel,
    reserved: &ReservedTokenSet,
) -> Result<(AugmentedDatastore, AugmentSummary)> {
    let seeds = config.seeds();
    let (candidates, generation) =
        generate_candidates(generator, train, config.augment.strategy, reserved, seeds.candidates)?;
    let flat: Vec<_> = candidates.iter().flatten().cloned().collect();
    if flat.is_empty() {
        log::warn!("no candidates were generated; datastore holds originals only");
        let stats = AugmentStats { generation, ..Default::default() };
        return Ok((AugmentedDatastore::new(train.clone(), Vec::new()), AugmentSummary { stats, discriminator: None }));
    }
    let (disc, report) =
        train_discriminator_with_report(&generator.tokenizer, train, &flat, &config.discriminator_config())?;
    let (datastore, stats) = assemble_datastore(train, candidates, generation, &disc)?;
    Ok((datastore, AugmentSummary { stats, discriminator: Some(report) }))
}

pub fn detector(config: &PipelineConfig, datastore: &AugmentedDatastore) -> Result<(DetectorModel, DetectorReport)> {
    train_detector(datastore, &config.detector_config(), &config.forest_config(), config.calibration_percentile)
}

/// Detector trained on the originals alone.
pub fn baseline_detector(config: &PipelineConfig, train: &RequestCorpus) -> Result<(DetectorModel, DetectorReport)> {
    detector(config, &AugmentedDatastore::new(train.clone(), Vec::new()))
}

pub fn evaluate(model: &DetectorModel, test: &RequestCorpus) -> Result<(Vec<Verdict>, ClassificationReport)> {
    let verdicts = model.classify_corpus(test)?;
    let labels: Vec<_> = test.iter().map(|r| r.label).collect();
    let cm = confusion(&verdicts, &labels)?;
    Ok((verdicts, classification_report(&cm)))
}
