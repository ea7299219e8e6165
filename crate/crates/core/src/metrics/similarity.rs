use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bleu::bleu;
use super::emd::emd;
use crate::augment::cosine_similarity;
use crate::error::{Error, Result};
use crate::ingest::{EntitySequence, RawRequestRecord};
use crate::lm::LanguageModel;

/// Greedy-match precision, recall and F1 over word embeddings. Recall
/// averages, over reference tokens, the best cosine against any candidate
/// token; precision is the mirror image.
pub fn bert_score_from_embeddings(candidate: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<(f64, f64, f64)> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::EmptyRequest);
    }
    let sim: Vec<Vec<f64>> = reference
        .iter()
        .map(|r| candidate.iter().map(|c| cosine_similarity(r, c)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let recall = sim.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).sum::<f64>()
        / reference.len() as f64;
    let precision = (0..candidate.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / candidate.len() as f64;
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok((precision, recall, f1))
}

pub fn bert_score(model: &LanguageModel, candidate: &RawRequestRecord, reference: &RawRequestRecord) -> Result<(f64, f64, f64)> {
    let c = model.word_embeddings(candidate)?;
    let r = model.word_embeddings(reference)?;
    bert_score_from_embeddings(&c, &r)
}

/// Inverse document frequencies `ln((N + 1) / (df + 1))` over entity tokens.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    pub documents: usize,
    pub df: BTreeMap<String, usize>,
}

impl IdfTable {
    pub fn from_requests<'a>(requests: impl IntoIterator<Item = &'a RawRequestRecord>) -> Self {
        let mut table = IdfTable::default();
        for r in requests {
            table.documents += 1;
            let distinct: BTreeSet<String> = EntitySequence::parse(&r.raw).tokens.into_iter().map(|t| t.text).collect();
            for t in distinct {
                *table.df.entry(t).or_insert(0) += 1;
            }
        }
        table
    }

    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0);
        ((self.documents as f64 + 1.0) / (df as f64 + 1.0)).ln()
    }

    /// Per-occurrence weights summing to 1; uniform when every idf is zero.
    pub fn weights(&self, tokens: &[&str]) -> Vec<f64> {
        let w: Vec<f64> = tokens.iter().map(|t| self.idf(t)).collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            w.iter().map(|x| x / s).collect()
        } else {
            vec![1.0 / tokens.len() as f64; tokens.len()]
        }
    }
}

/// `1 - EMD` between idf-weighted word embeddings with cosine distance as
/// the ground cost, clamped to `[0, 1]`.
pub fn mover_score_from_embeddings(
    candidate: &[Vec<f64>],
    candidate_weights: &[f64],
    reference: &[Vec<f64>],
    reference_weights: &[f64],
) -> Result<f64> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::EmptyRequest);
    }
    let cost: Vec<Vec<f64>> = candidate
        .iter()
        .map(|c| reference.iter().map(|r| cosine_similarity(c, r).map(|s| (1.0 - s).max(0.0))).collect())
        .collect::<Result<_>>()?;
    let d = emd(candidate_weights, reference_weights, &cost)?;
    Ok((1.0 - d).clamp(0.0, 1.0))
}

pub fn mover_score(
    model: &LanguageModel,
    candidate: &RawRequestRecord,
    reference: &RawRequestRecord,
    idf: &IdfTable,
) -> Result<f64> {
    let cs = EntitySequence::parse(&candidate.raw);
    let rs = EntitySequence::parse(&reference.raw);
    let ce = model.embeddings_of(&cs.texts())?.words;
    let re = model.embeddings_of(&rs.texts())?.words;
    mover_score_from_embeddings(&ce, &idf.weights(&cs.texts()), &re, &idf.weights(&rs.texts()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub bleu: f64,
    pub bert_p: f64,
    pub bert_r: f64,
    pub bert_f1: f64,
    pub mover: f64,
    pub pairs: usize,
}

/// Corpus means over `(candidate, reference)` pairs. Pairs that cannot be
/// embedded (too long or empty) are left out of every mean.
pub fn similarity_report(
    model: &LanguageModel,
    pairs: &[(&RawRequestRecord, &RawRequestRecord)],
    idf: &IdfTable,
) -> Result<SimilarityReport> {
    let scored: Vec<Option<[f64; 5]>> = pairs
        .par_iter()
        .map(|(c, r)| -> Result<Option<[f64; 5]>> {
            let cs = EntitySequence::parse(&c.raw);
            let rs = EntitySequence::parse(&r.raw);
            let b = match bleu(&cs.texts(), &rs.texts(), 4) {
                Ok(b) => b,
                Err(Error::EmptyCandidate) => return Ok(None),
                Err(e) => return Err(e),
            };
            let (ce, re) = match (model.embeddings_of(&cs.texts()), model.embeddings_of(&rs.texts())) {
                (Ok(a), Ok(b)) => (a.words, b.words),
                (Err(Error::SequenceTooLong { .. }), _) | (_, Err(Error::SequenceTooLong { .. })) => return Ok(None),
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
            let (p, rr, f) = bert_score_from_embeddings(&ce, &re)?;
            let m = mover_score_from_embeddings(&ce, &idf.weights(&cs.texts()), &re, &idf.weights(&rs.texts()))?;
            Ok(Some([b, p, rr, f, m]))
        })
        .collect::<Result<_>>()?;
    let ok: Vec<[f64; 5]> = scored.into_iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::EmptyInput("similarity pairs"));
    }
    let mean = |k: usize| ok.iter().map(|s| s[k]).sum::<f64>() / ok.len() as f64;
    Ok(SimilarityReport { bleu: mean(0), bert_p: mean(1), bert_r: mean(2), bert_f1: mean(3), mover: mean(4), pairs: ok.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Label;
    use rand::Rng;

    #[test]
    fn self_match() {
        let e = vec![vec![1.0, 0.5], vec![-0.2, 1.0], vec![0.3, 0.3]];
        let (p, r, f) = bert_score_from_embeddings(&e, &e).unwrap();
        assert!((p - 1.0).abs() < 1e-12 && (r - 1.0).abs() < 1e-12 && (f - 1.0).abs() < 1e-12);
        let w = vec![1.0 / 3.0; 3];
        assert!((mover_score_from_embeddings(&e, &w, &e, &w).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extra_candidate_token() {
        let reference = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let mut candidate = reference.clone();
        candidate.push(vec![1.0, -1.0]);
        let (p, r, _) = bert_score_from_embeddings(&candidate, &reference).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert!(p < 1.0);
    }

    #[test]
    fn matches_exhaustive_pairs() {
        let mut rng = crate::rng::seeded(3);
        for _ in 0..50 {
            let (n, m) = (rng.random_range(1..=10), rng.random_range(1..=10));
            let mk = |rng: &mut crate::rng::Rng, k| -> Vec<Vec<f64>> {
                (0..k).map(|_| (0..4).map(|_| rng.random::<f64>() - 0.5).collect()).collect()
            };
            let (c, r) = (mk(&mut rng, n), mk(&mut rng, m));
            let cos = |a: &Vec<f64>, b: &Vec<f64>| {
                let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                d / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
            };
            let mut rec = 0.0;
            for ri in &r {
                let mut best = f64::NEG_INFINITY;
                for ci in &c {
                    best = best.max(cos(ri, ci));
                }
                rec += best;
            }
            rec /= m as f64;
            let (_, got, _) = bert_score_from_embeddings(&c, &r).unwrap();
            assert!((got - rec).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_requests_score_zero() {
        let c = vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]];
        let r = vec![vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]];
        let w = vec![0.5, 0.5];
        assert!(mover_score_from_embeddings(&c, &w, &r, &w).unwrap() < 1e-12);
    }

    #[test]
    fn distant_replacement_lowers_score() {
        let r = vec![vec![1.0, 0.1], vec![0.9, 0.3], vec![0.8, 0.2]];
        let mut c = r.clone();
        let w = vec![1.0 / 3.0; 3];
        let before = mover_score_from_embeddings(&c, &w, &r, &w).unwrap();
        c[1] = vec![-1.0, 0.2];
        let after = mover_score_from_embeddings(&c, &w, &r, &w).unwrap();
        assert!(after < before);
    }

    #[test]
    fn idf_weights() {
        let docs = [
            RawRequestRecord::new("1", "get /a", Label::Normal),
            RawRequestRecord::new("2", "get /b", Label::Normal),
        ];
        let idf = IdfTable::from_requests(docs.iter());
        assert_eq!(idf.documents, 2);
        assert_eq!(idf.idf("get"), 0.0);
        assert!((idf.idf("a") - (1.5f64).ln()).abs() < 1e-12);
        let w = idf.weights(&["get", "/", "a"]);
        assert_eq!(w, vec![0.0, 0.0, 1.0]);
        assert_eq!(idf.weights(&["get", "/"]), vec![0.5, 0.5]);
    }
}
