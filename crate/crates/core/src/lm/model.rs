use std::ops::Range;

use super::config::LmConfig;
use super::network::{Dims, ForwardCache, Network};
use super::tensor::{log_sum_exp, softmax_in_place};
use super::tokenizer::{BbpeTokenizer, CLS_ID, MASK, MASK_ID, SEP_ID};
use crate::augment::MaskedRequest;
use crate::error::{Error, Result};
use crate::ingest::{EntitySequence, RawRequestRecord};
use crate::lexicon::ReservedTokenSet;

/// A request as model input: `<CLS> pieces... <SEP>`, with the id range of
/// each entity token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedRequest {
    pub ids: Vec<u32>,
    pub spans: Vec<Range<usize>>,
}

/// Encodes entity texts; the entity at `mask` becomes a single `<MASK>`.
pub fn encode_entities(tokenizer: &BbpeTokenizer, texts: &[&str], mask: Option<usize>) -> EncodedRequest {
    let mut ids = vec![CLS_ID];
    let mut spans = Vec::with_capacity(texts.len());
    for (i, text) in texts.iter().enumerate() {
        let start = ids.len();
        if mask == Some(i) {
            ids.push(MASK_ID);
        } else {
            ids.extend(tokenizer.encode(text));
        }
        spans.push(start..ids.len());
    }
    ids.push(SEP_ID);
    EncodedRequest { ids, spans }
}

/// Word vectors (one per entity token) and the sentence vector of a request.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestEmbeddings {
    pub words: Vec<Vec<f64>>,
    pub sentence: Vec<f64>,
}

/// Transformer encoder with a masked-LM head, plus the tokenizer it was
/// trained with. Immutable once trained; inference takes `&self`.
#[derive(Debug, Clone)]
pub struct LanguageModel {
    pub config: LmConfig,
    pub tokenizer: BbpeTokenizer,
    pub(crate) net: Network<f32>,
}

impl LanguageModel {
    pub fn dims_for(config: &LmConfig, tokenizer: &BbpeTokenizer, mlm_head: bool, classes: usize) -> Dims {
        Dims {
            vocab: tokenizer.vocab_size(),
            hidden: config.hidden,
            heads: config.heads,
            layers: config.layers,
            max_positions: config.max_seq_len,
            mlm_head,
            classes,
        }
    }

    /// Untrained model with freshly initialized weights.
    pub fn init(tokenizer: BbpeTokenizer, config: LmConfig) -> Result<Self> {
        config.validate()?;
        let dims = Self::dims_for(&config, &tokenizer, true, 0);
        let net = Network::init(dims, config.seed);
        Ok(Self { config, tokenizer, net })
    }

    pub fn from_parts(config: LmConfig, tokenizer: BbpeTokenizer, net: Network<f32>) -> Self {
        Self { config, tokenizer, net }
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn hidden_size(&self) -> usize {
        self.config.hidden
    }

    pub fn encode(&self, texts: &[&str], mask: Option<usize>) -> Result<EncodedRequest> {
        let enc = encode_entities(&self.tokenizer, texts, mask);
        if enc.ids.len() > self.config.max_seq_len {
            return Err(Error::SequenceTooLong { len: enc.ids.len(), max: self.config.max_seq_len });
        }
        Ok(enc)
    }

    pub(crate) fn forward(&self, ids: &[u32]) -> ForwardCache<f32> {
        self.net.forward(ids)
    }

    pub fn embeddings_of(&self, texts: &[&str]) -> Result<RequestEmbeddings> {
        let enc = self.encode(texts, None)?;
        let cache = self.forward(&enc.ids);
        Ok(pool(&cache.hidden, self.hidden_size(), &enc))
    }

    pub fn embeddings(&self, request: &RawRequestRecord) -> Result<RequestEmbeddings> {
        let seq = EntitySequence::parse(&request.raw);
        self.embeddings_of(&seq.texts())
    }

    /// One vector per entity token: the mean of final hidden states over its pieces.
    pub fn word_embeddings(&self, request: &RawRequestRecord) -> Result<Vec<Vec<f64>>> {
        Ok(self.embeddings(request)?.words)
    }

    /// Mean of final hidden states over all non-special positions.
    pub fn sentence_embedding(&self, request: &RawRequestRecord) -> Result<Vec<f64>> {
        Ok(self.embeddings(request)?.sentence)
    }

    /// Full softmax over the vocabulary at the single `<MASK>` position.
    pub fn mask_distribution(&self, masked: &MaskedRequest) -> Result<Vec<f64>> {
        let mask_count = masked.tokens.iter().filter(|t| t.text == MASK).count();
        match mask_count {
            0 => return Err(Error::NoMaskToken),
            1 => {}
            n => return Err(Error::MultipleMaskTokens(n)),
        }
        let index = masked.tokens.iter().position(|t| t.text == MASK).expect("counted above");
        let texts: Vec<&str> = masked.tokens.iter().map(|t| t.text.as_str()).collect();
        let enc = self.encode(&texts, Some(index))?;
        let cache = self.forward(&enc.ids);
        let logits = self.net.mlm_logits(&cache, &[enc.spans[index].start]);
        let mut probs: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
        softmax_in_place(&mut probs);
        Ok(probs)
    }

    /// Whether `id` may be offered as a fill: a learned symbol that is valid
    /// UTF-8 without whitespace and not a reserved token.
    pub fn is_fill_candidate(&self, id: u32, reserved: &ReservedTokenSet) -> bool {
        if BbpeTokenizer::is_special(id) {
            return false;
        }
        match self.tokenizer.symbol_text(id) {
            Some(text) => !text.is_empty() && !text.chars().any(char::is_whitespace) && !reserved.contains(text),
            None => false,
        }
    }

    /// Top-`k` fills for the masked position, by descending probability.
    /// Probabilities come from the full vocabulary softmax; special and
    /// reserved symbols are dropped afterwards.
    pub fn fill_mask(&self, masked: &MaskedRequest, k: usize, reserved: &ReservedTokenSet) -> Result<Vec<(String, f64)>> {
        let probs = self.mask_distribution(masked)?;
        let mut ranked: Vec<(u32, f64)> = probs
            .iter()
            .enumerate()
            .map(|(id, &p)| (id as u32, p))
            .filter(|&(id, _)| self.is_fill_candidate(id, reserved))
            .collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        Ok(ranked
            .into_iter()
            .take(k)
            .map(|(id, p)| (self.tokenizer.symbol_text(id).expect("filtered").to_string(), p))
            .collect())
    }

    /// Per entity token: mask all of its pieces, then average
    /// `-log p(original piece)` over them.
    pub fn token_nll(&self, request: &RawRequestRecord) -> Result<Vec<f64>> {
        let seq = EntitySequence::parse(&request.raw);
        self.token_nll_of(&seq.texts())
    }

    pub fn token_nll_of(&self, texts: &[&str]) -> Result<Vec<f64>> {
        let enc = self.encode(texts, None)?;
        let vocab = self.net.dims().vocab;
        let mut out = Vec::with_capacity(enc.spans.len());
        for span in &enc.spans {
            let mut ids = enc.ids.clone();
            for id in &mut ids[span.clone()] {
                *id = MASK_ID;
            }
            let positions: Vec<usize> = span.clone().collect();
            let cache = self.forward(&ids);
            let logits = self.net.mlm_logits(&cache, &positions);
            let mut nll = 0.0;
            for (row, &pos) in positions.iter().enumerate() {
                let r: Vec<f64> = logits[row * vocab..(row + 1) * vocab].iter().map(|&v| v as f64).collect();
                nll += log_sum_exp(&r) - r[enc.ids[pos] as usize];
            }
            out.push(nll / positions.len().max(1) as f64);
        }
        Ok(out)
    }
}

pub(crate) fn pool(hidden: &[f32], h: usize, enc: &EncodedRequest) -> RequestEmbeddings {
    let mean_rows = |range: Range<usize>| {
        let mut v = vec![0.0f64; h];
        for p in range.clone() {
            for (acc, &x) in v.iter_mut().zip(&hidden[p * h..(p + 1) * h]) {
                *acc += x as f64;
            }
        }
        let n = range.len().max(1) as f64;
        v.iter_mut().for_each(|x| *x /= n);
        v
    };
    let words = enc.spans.iter().map(|s| mean_rows(s.clone())).collect();
    let sentence = mean_rows(1..enc.ids.len() - 1);
    RequestEmbeddings { words, sentence }
}
