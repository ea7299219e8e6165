use crate::error::{Error, Result};
use crate::ingest::{EntitySequence, EntityToken, RawRequestRecord};
use crate::lexicon::ReservedTokenSet;
use crate::lm::{LanguageModel, RequestEmbeddings, MASK};

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Argmin of cosine(word, sentence) over non-reserved positions; the lowest
/// index wins ties.
pub fn outlier_index(embeddings: &RequestEmbeddings, texts: &[&str], reserved: &ReservedTokenSet) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (word, text)) in embeddings.words.iter().zip(texts).enumerate() {
        if reserved.contains(text) {
            continue;
        }
        let c = cosine_similarity(word, &embeddings.sentence)?;
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((i, c));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::NoMaskableToken)
}

/// Position of the request's least contextual non-reserved token.
pub fn find_outlier_token(model: &LanguageModel, request: &RawRequestRecord, reserved: &ReservedTokenSet) -> Result<usize> {
    let seq = EntitySequence::parse(&request.raw);
    let texts = seq.texts();
    if texts.iter().all(|t| reserved.contains(t)) {
        return Err(Error::NoMaskableToken);
    }
    let emb = model.embeddings_of(&texts)?;
    outlier_index(&emb, &texts, reserved)
}

/// A request with exactly one entity token replaced by `<MASK>`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedRequest {
    /// Entity tokens; the one at `masked_index` has text `<MASK>`.
    pub tokens: Vec<EntityToken>,
    pub masked_index: usize,
    pub original_token: String,
    pub source_id: String,
    sequence: EntitySequence,
}

impl MaskedRequest {
    /// The request text with `<MASK>` in place of the original token.
    pub fn render(&self) -> String {
        self.sequence.render_with(Some(self.masked_index), MASK)
    }

    /// The request text with `text` in place of the masked token.
    pub fn fill(&self, text: &str) -> String {
        self.sequence.render_with(Some(self.masked_index), text)
    }

    pub fn restore(&self) -> String {
        self.sequence.detokenize()
    }

    pub(crate) fn sequence(&self) -> &EntitySequence {
        &self.sequence
    }
}

pub fn mask_at(request: &RawRequestRecord, index: usize, reserved: &ReservedTokenSet) -> Result<MaskedRequest> {
    let sequence = EntitySequence::parse(&request.raw);
    let len = sequence.len();
    let token = sequence.tokens.get(index).ok_or(Error::IndexOutOfRange { index, len })?;
    if reserved.contains(&token.text) {
        return Err(Error::ReservedPosition(index));
    }
    let original_token = token.text.clone();
    let mut tokens = sequence.tokens.clone();
    tokens[index].text = MASK.to_string();
    Ok(MaskedRequest { tokens, masked_index: index, original_token, source_id: request.id.clone(), sequence })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Label;
    use std::collections::BTreeSet;

    fn reserved(tokens: &[&str]) -> ReservedTokenSet {
        let mut r = ReservedTokenSet::empty();
        r.tokens = tokens.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        r
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[1.0, 2.0], &[2.0, 1.0]).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
        assert!(matches!(cosine_similarity(&[1.0], &[1.0, 0.0]), Err(Error::DimensionMismatch(1, 2))));
    }

    #[test]
    fn outlier_by_construction() {
        let s = vec![1.0, 0.0];
        let emb = RequestEmbeddings { words: vec![s.clone(), s.clone(), vec![0.0, 1.0], s.clone()], sentence: s };
        let texts = ["a", "b", "c", "d"];
        assert_eq!(outlier_index(&emb, &texts, &ReservedTokenSet::empty()).unwrap(), 2);
        assert_eq!(outlier_index(&emb, &texts, &reserved(&["c"])).unwrap(), 0);
        assert!(matches!(outlier_index(&emb, &texts, &reserved(&["a", "b", "c", "d"])), Err(Error::NoMaskableToken)));
    }

    #[test]
    fn mask_and_restore() {
        let r = RawRequestRecord::new("x", "get /pagar.jsp modo=insertar", Label::Normal);
        let m = mask_at(&r, 7, &reserved(&["/", "get"])).unwrap();
        assert_eq!(m.original_token, "insertar");
        assert_eq!(m.render(), "get /pagar.jsp modo=<MASK>");
        assert_eq!(m.restore(), r.raw);
        assert_eq!(m.fill("macreyno"), "get /pagar.jsp modo=macreyno");
        assert_eq!(m.tokens.iter().filter(|t| t.text == MASK).count(), 1);
        assert!(matches!(mask_at(&r, 1, &reserved(&["/"])), Err(Error::ReservedPosition(1))));
        assert!(matches!(mask_at(&r, 8, &ReservedTokenSet::empty()), Err(Error::IndexOutOfRange { index: 8, len: 8 })));
    }
}
