use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::discriminator::Discriminator;
use super::generate::{generate_candidates, CandidateSample, FillStrategy, GenerationStats};
use crate::error::{Error, Result};
use crate::ingest::{RawRequestRecord, RequestCorpus};
use crate::lexicon::ReservedTokenSet;
use crate::lm::LanguageModel;

/// Training originals plus the validated synthetic requests derived from them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentedDatastore {
    pub originals: RequestCorpus,
    pub synthetics: Vec<CandidateSample>,
    /// Synthetic record id to source record id.
    pub provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentStats {
    pub generation: GenerationStats,
    pub accepted: usize,
    pub rejected: usize,
    pub too_long: usize,
}

impl AugmentedDatastore {
    pub fn new(originals: RequestCorpus, mut synthetics: Vec<CandidateSample>) -> Self {
        synthetics.sort_by(|a, b| a.source_id.cmp(&b.source_id));
        let provenance =
            synthetics.iter().map(|s| (s.filled_request.id.clone(), s.source_id.clone())).collect();
        Self { originals, synthetics, provenance }
    }

    /// Originals followed by synthetic records.
    pub fn training_corpus(&self) -> RequestCorpus {
        self.originals.iter().cloned().chain(self.synthetics.iter().map(|s| s.filled_request.clone())).collect()
    }

    pub fn len(&self) -> usize {
        self.originals.len() + self.synthetics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Canonical JSONL; synthetic lines carry the extra provenance fields.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::unreadable(path, e))?;
        let mut w = BufWriter::new(file);
        for r in self.originals.iter() {
            let line = Line { record: r.clone(), synthetic: None };
            writeln!(w, "{}", serde_json::to_string(&line)?)?;
        }
        for s in &self.synthetics {
            let line = Line {
                record: s.filled_request.clone(),
                synthetic: Some(SyntheticFields {
                    source_id: s.source_id.clone(),
                    confidence: s.confidence,
                    generator_probability: s.generator_probability,
                    filled_token: s.filled_token.clone(),
                    original_token: s.original_token.clone(),
                    masked_index: s.masked_index,
                }),
            };
            writeln!(w, "{}", serde_json::to_string(&line)?)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::unreadable(path, e))?;
        let mut originals = Vec::new();
        let mut synthetics = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line)
                .map_err(|e| Error::malformed(path, format!("line {}: {e}", n + 1)))?;
            match parsed.synthetic {
                None => originals.push(parsed.record),
                Some(f) => synthetics.push(CandidateSample {
                    filled_request: parsed.record,
                    filled_token: f.filled_token,
                    original_token: f.original_token,
                    masked_index: f.masked_index,
                    generator_probability: f.generator_probability,
                    source_id: f.source_id,
                    confidence: f.confidence,
                }),
            }
        }
        Ok(Self::new(RequestCorpus::new(originals), synthetics))
    }
}

#[derive(Serialize, Deserialize)]
struct Line {
    #[serde(flatten)]
    record: RawRequestRecord,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    synthetic: Option<SyntheticFields>,
}

#[derive(Serialize, Deserialize)]
struct SyntheticFields {
    source_id: String,
    confidence: Option<f64>,
    generator_probability: f64,
    filled_token: String,
    original_token: String,
    masked_index: usize,
}

/// Validates pre-generated candidates (one slot per training record) and
/// keeps the accepted ones.
pub fn assemble_datastore(
    train: &RequestCorpus,
    candidates: Vec<Option<CandidateSample>>,
    generation: GenerationStats,
    disc: &Discriminator,
) -> Result<(AugmentedDatastore, AugmentStats)> {
    let verdicts: Vec<Option<Result<(bool, f64)>>> =
        candidates.par_iter().map(|c| c.as_ref().map(|c| disc.validate_candidate(c))).collect();
    let mut stats = AugmentStats { generation, ..Default::default() };
    let mut kept = Vec::new();
    for (c, v) in candidates.into_iter().zip(verdicts) {
        let (Some(mut c), Some(v)) = (c, v) else { continue };
        match v {
            Ok((true, confidence)) => {
                c.confidence = Some(confidence);
                stats.accepted += 1;
                kept.push(c);
            }
            Ok((false, _)) => stats.rejected += 1,
            Err(Error::SequenceTooLong { .. }) => stats.too_long += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((AugmentedDatastore::new(train.clone(), kept), stats))
}

/// One candidate attempt per training record, filtered by the discriminator.
pub fn build_datastore(
    train: &RequestCorpus,
    model: &LanguageModel,
    disc: &Discriminator,
    reserved: &ReservedTokenSet,
    strategy: FillStrategy,
    seed: u64,
) -> Result<(AugmentedDatastore, AugmentStats)> {
    let (candidates, generation) = generate_candidates(model, train, strategy, reserved, seed)?;
    assemble_datastore(train, candidates, generation, disc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Label;

    #[test]
    fn jsonl_round_trip() {
        let a = RawRequestRecord::new("a", "get /x q=1", Label::Normal);
        let mut syn = a.clone();
        syn.id = "a~syn".into();
        syn.raw = "get /x q=2".into();
        let c = CandidateSample {
            filled_request: syn,
            filled_token: "2".into(),
            original_token: "1".into(),
            masked_index: 4,
            generator_probability: 0.123456789,
            source_id: "a".into(),
            confidence: Some(0.95),
        };
        let ds = AugmentedDatastore::new(RequestCorpus::new(vec![a]), vec![c]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ds.jsonl");
        ds.save(&p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.lines().nth(1).unwrap().contains("\"source_id\":\"a\""));
        assert!(!text.lines().next().unwrap().contains("source_id"));
        let back = AugmentedDatastore::load(&p).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.provenance["a~syn"], "a");
        assert_eq!(back.training_corpus().len(), 2);
    }
}
