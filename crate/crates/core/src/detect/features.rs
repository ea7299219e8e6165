use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::{EntitySequence, RawRequestRecord};
use crate::lm::LanguageModel;

/// Forest input: sentence embedding followed by likelihood statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub sentence_embedding: Vec<f64>,
    pub nll_mean: f64,
    pub nll_max: f64,
    /// Population standard deviation of the per-token NLL.
    pub nll_std: f64,
    pub entity_count: usize,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.sentence_embedding.len() + 4
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.sentence_embedding.clone();
        v.extend([self.nll_mean, self.nll_max, self.nll_std, self.entity_count as f64]);
        v
    }
}

pub fn extract_features(mlm: &LanguageModel, request: &RawRequestRecord) -> Result<FeatureVector> {
    let seq = EntitySequence::parse(&request.raw);
    let texts = seq.texts();
    let emb = mlm.embeddings_of(&texts)?;
    let nll = mlm.token_nll_of(&texts)?;
    let n = nll.len();
    let (mean, max, std) = if n == 0 {
        (0.0, 0.0, 0.0)
    } else {
        let mean = nll.iter().sum::<f64>() / n as f64;
        let max = nll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let var = nll.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, max, var.sqrt())
    };
    Ok(FeatureVector { sentence_embedding: emb.sentence, nll_mean: mean, nll_max: max, nll_std: std, entity_count: n })
}
