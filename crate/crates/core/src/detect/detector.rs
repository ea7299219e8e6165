use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{extract_features, FeatureVector};
use super::forest::{train_forest, ForestConfig, RandomForest};
use crate::augment::AugmentedDatastore;
use crate::error::{Error, Result};
use crate::ingest::{Label, RawRequestRecord, RequestCorpus};
use crate::lm::{train_bbpe, train_mlm, LanguageModel, LmConfig};

/// Nearest-rank percentile: the value at rank `ceil(p/100 * N)` of the
/// sorted scores.
pub fn nearest_rank(scores: &[f64], percentile: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyCalibrationSet);
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::OutOfRange { value: percentile, expected: "(0, 100]" });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // the epsilon absorbs representation error in p/100 * N
    let rank = ((percentile * n as f64 / 100.0) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(n) - 1])
}

/// θ over the forest probabilities of normal training features.
pub fn calibrate_threshold(forest: &RandomForest, normal_features: &[Vec<f64>], percentile: f64) -> Result<f64> {
    let scores: Vec<f64> = normal_features.iter().map(|f| forest.probability(f)).collect();
    nearest_rank(&scores, percentile)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub id: String,
    pub p_abnormal: f64,
    pub flagged: Label,
    /// Set when the request exceeded the model's sequence limit; such
    /// requests are flagged abnormal without scoring.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub oversized: bool,
}

/// Abnormal iff `p_abnormal > theta`.
pub fn decide(p_abnormal: f64, theta: f64) -> Label {
    if p_abnormal > theta {
        Label::Abnormal
    } else {
        Label::Normal
    }
}

#[derive(Debug, Clone)]
pub struct DetectorModel {
    pub mlm: LanguageModel,
    pub forest: RandomForest,
    pub theta: f64,
    pub calibration_percentile: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub tokenizer_vocab: usize,
    /// Label counts of the records the MLM was trained on, `[normal, abnormal]`.
    pub mlm_training_labels: [usize; 2],
    pub forest_records: usize,
    pub calibration_records: usize,
    pub skipped_too_long: usize,
    pub theta: f64,
    /// Fraction of calibration records with `p_abnormal > theta`.
    pub calibration_flag_rate: f64,
}

#[derive(Serialize, Deserialize)]
struct Calibration {
    theta: f64,
    percentile: f64,
}

impl DetectorModel {
    pub fn features(&self, request: &RawRequestRecord) -> Result<FeatureVector> {
        extract_features(&self.mlm, request)
    }

    pub fn classify(&self, request: &RawRequestRecord) -> Result<Verdict> {
        let p = self.forest.probability(&self.features(request)?.to_vec());
        Ok(Verdict { id: request.id.clone(), p_abnormal: p, flagged: decide(p, self.theta), oversized: false })
    }

    /// Verdicts in corpus order. Oversized requests fail closed.
    pub fn classify_corpus(&self, corpus: &RequestCorpus) -> Result<Vec<Verdict>> {
        corpus
            .records
            .par_iter()
            .map(|r| match self.classify(r) {
                Err(Error::SequenceTooLong { .. }) => {
                    Ok(Verdict { id: r.id.clone(), p_abnormal: 1.0, flagged: Label::Abnormal, oversized: true })
                }
                other => other,
            })
            .collect()
    }

    /// `mlm/` (tokenizer and weights), `forest.json`, `calibration.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::unreadable(dir, e))?;
        self.mlm.save(&dir.join("mlm"))?;
        let fpath = dir.join("forest.json");
        fs::write(&fpath, self.forest.to_json()?).map_err(|e| Error::unreadable(&fpath, e))?;
        let cal = Calibration { theta: self.theta, percentile: self.calibration_percentile };
        let cpath = dir.join("calibration.json");
        fs::write(&cpath, serde_json::to_string_pretty(&cal)?).map_err(|e| Error::unreadable(&cpath, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mlm = LanguageModel::load(&dir.join("mlm"))?;
        let fpath = dir.join("forest.json");
        let forest = RandomForest::from_json(&fs::read_to_string(&fpath).map_err(|e| Error::unreadable(&fpath, e))?)?;
        if forest.n_features != mlm.hidden_size() + 4 {
            return Err(Error::malformed(&fpath, "forest input size does not match the language model"));
        }
        let cpath = dir.join("calibration.json");
        let cal: Calibration =
            serde_json::from_str(&fs::read_to_string(&cpath).map_err(|e| Error::unreadable(&cpath, e))?)?;
        if !(0.0..=1.0).contains(&cal.theta) {
            return Err(Error::malformed(&cpath, "theta outside [0, 1]"));
        }
        Ok(Self { mlm, forest, theta: cal.theta, calibration_percentile: cal.percentile })
    }
}

/// Tokenizer on originals and synthetics, MLM on the normal-labeled
/// subset, forest on features of every training record, θ on the normal
/// ones. Records longer than the model limit are skipped.
pub fn train_detector(
    datastore: &AugmentedDatastore,
    lm_config: &LmConfig,
    forest_config: &ForestConfig,
    percentile: f64,
) -> Result<(DetectorModel, DetectorReport)> {
    let corpus = datastore.training_corpus();
    if corpus.count(Label::Normal) == 0 || corpus.count(Label::Abnormal) == 0 {
        return Err(Error::SingleClassInput);
    }
    let tokenizer = train_bbpe(&corpus, lm_config.vocab_size)?;
    let normals = corpus.with_label(Label::Normal);
    let mlm = train_mlm(&tokenizer, &normals, lm_config)?;
    let mut report = DetectorReport {
        tokenizer_vocab: tokenizer.vocab_size(),
        mlm_training_labels: normals.label_counts(),
        ..Default::default()
    };
    log::info!("detector MLM trained on {} records, all normal", normals.len());

    let extracted: Vec<Result<FeatureVector>> = corpus.records.par_iter().map(|r| extract_features(&mlm, r)).collect();
    let mut x = Vec::with_capacity(corpus.len());
    let mut y = Vec::with_capacity(corpus.len());
    for (r, f) in corpus.iter().zip(extracted) {
        match f {
            Ok(f) => {
                x.push(f.to_vec());
                y.push(r.label);
            }
            Err(Error::SequenceTooLong { .. }) => report.skipped_too_long += 1,
            Err(e) => return Err(e),
        }
    }
    let forest = train_forest(&x, &y, forest_config)?;
    let normal_x: Vec<Vec<f64>> = x.iter().zip(&y).filter(|(_, l)| **l == Label::Normal).map(|(v, _)| v.clone()).collect();
    let theta = calibrate_threshold(&forest, &normal_x, percentile)?;
    let flagged = normal_x.iter().filter(|v| forest.probability(v) > theta).count();

    report.forest_records = x.len();
    report.calibration_records = normal_x.len();
    report.theta = theta;
    report.calibration_flag_rate = flagged as f64 / normal_x.len() as f64;
    Ok((DetectorModel { mlm, forest, theta, calibration_percentile: percentile }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nearest_rank_examples() {
        let scores: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        assert_eq!(nearest_rank(&scores, 99.0).unwrap(), 0.99);
        assert_eq!(nearest_rank(&[0.3; 7], 99.0).unwrap(), 0.3);
        assert_eq!(nearest_rank(&[0.1, 0.7, 0.4], 100.0).unwrap(), 0.7);
        assert!(matches!(nearest_rank(&[], 99.0), Err(Error::EmptyCalibrationSet)));
    }

    #[test]
    fn strict_boundary() {
        assert_eq!(decide(0.99, 0.99), Label::Normal);
        assert_eq!(decide(1.0, 0.99), Label::Abnormal);
    }

    proptest! {
        #[test]
        fn flag_rate_is_bounded(scores in proptest::collection::vec(0.0f64..1.0, 1..300), p in 50.0f64..100.0) {
            let theta = nearest_rank(&scores, p).unwrap();
            let flagged = scores.iter().filter(|&&s| decide(s, theta) == Label::Abnormal).count();
            prop_assert!(flagged as f64 / scores.len() as f64 <= (100.0 - p) / 100.0 + 1e-12);
        }
    }
}
