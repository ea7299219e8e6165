use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::masking::{find_outlier_token, mask_at, MaskedRequest};
use crate::error::{Error, Result};
use crate::ingest::{EntitySequence, RawRequestRecord, RequestCorpus, Split};
use crate::lexicon::ReservedTokenSet;
use crate::lm::LanguageModel;
use crate::rng;

/// How a fill is chosen from the masked-LM distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FillStrategy {
    /// Most probable fill that differs from the original token.
    Top1Novel,
    /// Sample from the top `k` novel fills with probabilities `p^(1/temperature)`.
    SampleTopk { k: usize, temperature: f64 },
}

impl Default for FillStrategy {
    fn default() -> Self {
        FillStrategy::Top1Novel
    }
}

/// A synthetic request: the source with one entity token replaced.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSample {
    pub filled_request: RawRequestRecord,
    pub filled_token: String,
    pub original_token: String,
    pub masked_index: usize,
    pub generator_probability: f64,
    pub source_id: String,
    /// Discriminator confidence, set once the candidate has been validated.
    pub confidence: Option<f64>,
}

pub fn synthetic_id(source_id: &str) -> String {
    format!("{source_id}~syn")
}

/// Whether writing `fill` into the masked slot leaves every other entity
/// token intact and yields `fill` as a single token.
pub fn is_viable_fill(masked: &MaskedRequest, fill: &str) -> bool {
    let seq = EntitySequence::parse(&masked.fill(fill));
    let orig = masked.sequence();
    seq.len() == orig.len()
        && seq.tokens.iter().zip(&orig.tokens).enumerate().all(|(i, (a, b))| {
            if i == masked.masked_index {
                a.text == fill
            } else {
                a.text == b.text
            }
        })
}

/// Permitted fills in descending probability: not special, not reserved,
/// not the original token, and viable in place.
pub fn novel_fills(
    model: &LanguageModel,
    masked: &MaskedRequest,
    reserved: &ReservedTokenSet,
) -> Result<Vec<(String, f64)>> {
    let all = model.fill_mask(masked, usize::MAX, reserved)?;
    Ok(all.into_iter().filter(|(t, _)| *t != masked.original_token && is_viable_fill(masked, t)).collect())
}

pub fn generate_candidate(
    model: &LanguageModel,
    source: &RawRequestRecord,
    masked: &MaskedRequest,
    strategy: FillStrategy,
    reserved: &ReservedTokenSet,
    rng: &mut rng::Rng,
) -> Result<CandidateSample> {
    let fills = novel_fills(model, masked, reserved)?;
    let (text, p) = match strategy {
        FillStrategy::Top1Novel => fills.into_iter().next().ok_or(Error::NoViableCandidate)?,
        FillStrategy::SampleTopk { k, temperature } => {
            if k == 0 || !(temperature > 0.0) {
                return Err(Error::InvalidConfig("sample-topk needs k >= 1 and temperature > 0".into()));
            }
            let top: Vec<(String, f64)> = fills.into_iter().take(k).collect();
            if top.is_empty() {
                return Err(Error::NoViableCandidate);
            }
            let max = top[0].1.ln();
            let weights: Vec<f64> = top.iter().map(|(_, p)| ((p.ln() - max) / temperature).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = top.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            top.into_iter().nth(pick).expect("pick in range")
        }
    };
    let mut filled_request = source.clone();
    filled_request.id = synthetic_id(&source.id);
    filled_request.raw = masked.fill(&text);
    filled_request.split = Some(Split::Train);
    Ok(CandidateSample {
        filled_request,
        filled_token: text,
        original_token: masked.original_token.clone(),
        masked_index: masked.masked_index,
        generator_probability: p,
        source_id: source.id.clone(),
        confidence: None,
    })
}

/// Mask the outlier token of `source` and fill it.
pub fn augment_record(
    model: &LanguageModel,
    source: &RawRequestRecord,
    strategy: FillStrategy,
    reserved: &ReservedTokenSet,
    rng: &mut rng::Rng,
) -> Result<CandidateSample> {
    let index = find_outlier_token(model, source, reserved)?;
    let masked = mask_at(source, index, reserved)?;
    generate_candidate(model, source, &masked, strategy, reserved, rng)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub attempted: usize,
    pub generated: usize,
    pub no_maskable_token: usize,
    pub no_viable_candidate: usize,
    pub too_long: usize,
}

/// One attempt per record, in corpus order. Record `i` draws from its own
/// stream derived from `seed`, so results do not depend on scheduling.
pub fn generate_candidates(
    model: &LanguageModel,
    train: &RequestCorpus,
    strategy: FillStrategy,
    reserved: &ReservedTokenSet,
    seed: u64,
) -> Result<(Vec<Option<CandidateSample>>, GenerationStats)> {
    let results: Vec<Result<CandidateSample>> = train
        .records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = rng::seeded(rng::derive_indexed(seed, i as u64));
            augment_record(model, r, strategy, reserved, &mut rng)
        })
        .collect();
    let mut stats = GenerationStats { attempted: train.len(), ..Default::default() };
    let mut out = Vec::with_capacity(results.len());
    for (r, rec) in results.into_iter().zip(&train.records) {
        match r {
            Ok(c) => {
                stats.generated += 1;
                out.push(Some(c));
            }
            Err(e) => {
                match e {
                    Error::NoMaskableToken => stats.no_maskable_token += 1,
                    Error::NoViableCandidate => stats.no_viable_candidate += 1,
                    Error::SequenceTooLong { .. } => stats.too_long += 1,
                    other => return Err(other),
                }
                log::debug!("no candidate for {}: {e}", rec.id);
                out.push(None);
            }
        }
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Label;

    #[test]
    fn viability_rejects_token_fusion() {
        let r = RawRequestRecord::new("x", "get /pagar.jsp modo=insertar", Label::Normal);
        let m = mask_at(&r, 6, &ReservedTokenSet::empty()).unwrap();
        assert_eq!(m.original_token, "=");
        assert!(!is_viable_fill(&m, "ab"));
        assert!(is_viable_fill(&m, ":"));
        let m = mask_at(&r, 7, &ReservedTokenSet::empty()).unwrap();
        assert!(is_viable_fill(&m, "macreyno"));
        assert!(!is_viable_fill(&m, "a=b"));
        assert!(!is_viable_fill(&m, ""));
    }
}
