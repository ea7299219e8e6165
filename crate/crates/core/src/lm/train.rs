//! Masked-LM training with whole-word masking, and the optimizer shared
//! with the discriminator.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::config::LmConfig;
use super::model::{encode_entities, LanguageModel};
use super::network::{Layout, Network};
use super::tokenizer::{BbpeTokenizer, BYTE_OFFSET, CLS_ID, MASK_ID, SEP_ID};
use crate::error::{Error, Result};
use crate::ingest::{EntitySequence, RequestCorpus};
use crate::rng;

pub const WEIGHT_DECAY: f64 = 0.01;
pub const CLIP_NORM: f64 = 1.0;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Sequences per gradient work unit. Fixed so the reduction order does not
/// depend on the thread count.
const CHUNK: usize = 4;

/// Adam with decoupled weight decay on matrix-shaped tensors.
pub(crate) struct AdamW {
    m: Vec<f32>,
    v: Vec<f32>,
    decay: Vec<bool>,
    t: i32,
}

impl AdamW {
    pub fn new(layout: &Layout) -> Self {
        let mut decay = vec![false; layout.total()];
        for t in &layout.tensors {
            if t.shape.len() == 2 {
                decay[t.range()].fill(true);
            }
        }
        Self { m: vec![0.0; layout.total()], v: vec![0.0; layout.total()], decay, t: 0 }
    }

    pub fn step(&mut self, params: &mut [f32], grad: &mut [f32], lr: f64) {
        let norm = grad.iter().map(|&g| (g as f64) * (g as f64)).sum::<f64>().sqrt();
        if norm > CLIP_NORM {
            let s = (CLIP_NORM / norm) as f32;
            grad.iter_mut().for_each(|g| *g *= s);
        }
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t);
        let bc2 = 1.0 - BETA2.powi(self.t);
        let (b1, b2) = (BETA1 as f32, BETA2 as f32);
        let step = (lr / bc1) as f32;
        let decay = (lr * WEIGHT_DECAY) as f32;
        let bc2 = bc2 as f32;
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let denom = (self.v[i] / bc2).sqrt() + ADAM_EPS as f32;
            if self.decay[i] {
                params[i] -= decay * params[i];
            }
            params[i] -= step * self.m[i] / denom;
        }
    }
}

/// Linear warmup over `warmup` steps, then linear decay to zero.
pub fn scheduled_lr(base: f64, step: usize, total: usize, warmup: usize) -> f64 {
    if step < warmup {
        base * (step + 1) as f64 / warmup as f64
    } else {
        let rest = (total - warmup).max(1) as f64;
        base * ((total - step) as f64 / rest).max(0.0)
    }
}

/// Sums per-item gradients in fixed chunks (parallel across chunks, ordered reduction).
pub(crate) fn accumulate<I, F>(net: &Network<f32>, items: &[I], per_item: F) -> (Vec<f32>, f64)
where
    I: Sync,
    F: Fn(&I, &mut [f32]) -> f64 + Sync,
{
    let partials: Vec<(Vec<f32>, f64)> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = net.zeros_like();
            let loss = chunk.iter().map(|it| per_item(it, &mut g)).sum::<f64>();
            (g, loss)
        })
        .collect();
    let mut iter = partials.into_iter();
    let (mut grad, mut loss) = iter.next().unwrap_or_else(|| (net.zeros_like(), 0.0));
    for (g, l) in iter {
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        loss += l;
    }
    (grad, loss)
}

#[derive(Debug, Clone)]
pub(crate) struct Example {
    pub ids: Vec<u32>,
    pub spans: Vec<Range<usize>>,
}

/// Encodes each record, dropping trailing words that do not fit in `block`.
pub(crate) fn build_examples(tokenizer: &BbpeTokenizer, corpus: &RequestCorpus, block: usize) -> Vec<Example> {
    corpus
        .iter()
        .map(|r| {
            let seq = EntitySequence::parse(&r.raw);
            let enc = encode_entities(tokenizer, &seq.texts(), None);
            let keep = enc.spans.iter().take_while(|s| s.end < block).count();
            let end = if keep == 0 { 1 } else { enc.spans[keep - 1].end };
            let mut ids = enc.ids[..end].to_vec();
            ids.push(SEP_ID);
            debug_assert_eq!(ids[0], CLS_ID);
            Example { ids, spans: enc.spans[..keep].to_vec() }
        })
        .collect()
}

/// One masked training instance.
pub(crate) struct MaskedExample {
    pub ids: Vec<u32>,
    pub positions: Vec<usize>,
    pub targets: Vec<u32>,
}

/// Whole-word masking: `round(mask_rate * words)` words are chosen; each
/// chosen word has all pieces replaced by `<MASK>` (80%), by random learned
/// symbols (10%) or left alone (10%). Returns `None` when no word is chosen.
pub(crate) fn mask_example(ex: &Example, mask_rate: f64, vocab: usize, rng: &mut rng::Rng) -> Option<MaskedExample> {
    let n = ex.spans.len();
    let k = (mask_rate * n as f64).round() as usize;
    if k == 0 {
        return None;
    }
    let chosen = rand::seq::index::sample(rng, n, k).into_vec();
    let mut chosen = chosen;
    chosen.sort_unstable();
    let mut ids = ex.ids.clone();
    let mut positions = Vec::new();
    let mut targets = Vec::new();
    for w in chosen {
        let r: f64 = rng.random();
        for p in ex.spans[w].clone() {
            positions.push(p);
            targets.push(ex.ids[p]);
            if r < 0.8 {
                ids[p] = MASK_ID;
            } else if r < 0.9 {
                ids[p] = rng.random_range(BYTE_OFFSET..vocab as u32);
            }
        }
    }
    Some(MaskedExample { ids, positions, targets })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean cross-entropy per masked piece, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub skipped_sequences: usize,
    pub trained_records: usize,
}

pub fn train_mlm(tokenizer: &BbpeTokenizer, corpus: &RequestCorpus, config: &LmConfig) -> Result<LanguageModel> {
    train_mlm_with_report(tokenizer, corpus, config).map(|(m, _)| m)
}

pub fn train_mlm_with_report(
    tokenizer: &BbpeTokenizer,
    corpus: &RequestCorpus,
    config: &LmConfig,
) -> Result<(LanguageModel, TrainReport)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut model = LanguageModel::init(tokenizer.clone(), config.clone())?;
    let examples = build_examples(tokenizer, corpus, config.block_size);
    let vocab = tokenizer.vocab_size();
    let batches_per_epoch = examples.len().div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.epochs;
    let warmup = (config.warmup_fraction * total_steps as f64).floor() as usize;

    let mut opt = AdamW::new(&model.net.layout);
    let mut rng = rng::seeded(rng::derive_seed(config.seed, "mlm-masking"));
    let mut report = TrainReport { trained_records: examples.len(), ..Default::default() };
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut step = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_targets) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let masked: Vec<MaskedExample> =
                batch.iter().filter_map(|&i| mask_example(&examples[i], config.mask_rate, vocab, &mut rng)).collect();
            report.skipped_sequences += batch.len() - masked.len();
            let n_targets: usize = masked.iter().map(|m| m.targets.len()).sum();
            if n_targets > 0 {
                let weight = 1.0 / n_targets as f32;
                let net = &model.net;
                let (mut grad, loss) = accumulate(net, &masked, |m, g| {
                    let cache = net.forward(&m.ids);
                    let mut dh = vec![0.0f32; cache.hidden.len()];
                    let loss = net.mlm_loss(&cache, &m.positions, &m.targets, weight, g, &mut dh);
                    net.backward(&cache, &dh, g);
                    loss
                });
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, step, loss });
                }
                let lr = scheduled_lr(config.learning_rate, step, total_steps, warmup);
                opt.step(&mut model.net.params, &mut grad, lr);
                epoch_loss += loss;
                epoch_targets += n_targets;
            }
            step += 1;
        }
        let mean = if epoch_targets > 0 { epoch_loss / epoch_targets as f64 } else { 0.0 };
        log::debug!("mlm epoch {epoch}: loss {mean:.4}");
        report.epoch_losses.push(mean);
    }
    report.steps = step;
    Ok((model, report))
}
