use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::generate::CandidateSample;
use crate::error::{Error, Result};
use crate::ingest::{EntitySequence, RawRequestRecord, RequestCorpus};
use crate::lm::network::Network;
use crate::lm::tensor::softmax_in_place;
use crate::lm::{accumulate, encode_entities, scheduled_lr, AdamW, BbpeTokenizer, LanguageModel, LmConfig};
use crate::rng;

pub const CLASS_REAL: usize = 0;
pub const CLASS_SYNTHETIC: usize = 1;

/// Normalized entropy `-sum p ln p / ln K`; 0 for one-hot, 1 for uniform.
pub fn uncertainty(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::NotADistribution("empty vector".into()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::NotADistribution("negative or non-finite entry".into()));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::NotADistribution(format!("sums to {sum}")));
    }
    if probs.len() == 1 {
        return Ok(0.0);
    }
    let h: f64 = probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    Ok((h / (probs.len() as f64).ln()).clamp(0.0, 1.0))
}

/// Acceptance rule on a `[real, synthetic]` distribution. Returns the
/// decision and the confidence `1 - U(p)`. A zero threshold accepts
/// everything.
pub fn accept(probs: &[f64; 2], tau_accept: f64) -> (bool, f64) {
    let confidence = 1.0 - uncertainty(probs).unwrap_or(1.0);
    if tau_accept <= 0.0 {
        return (true, confidence);
    }
    let real = probs[CLASS_REAL] > probs[CLASS_SYNTHETIC];
    (real && confidence >= tau_accept, confidence)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    /// Encoder shape and schedule; `vocab_size` is taken from the tokenizer.
    pub encoder: LmConfig,
    pub tau_uncertainty: f64,
    pub tau_accept: f64,
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if !(0.0..=1.0).contains(&self.tau_uncertainty) {
            return Err(Error::InvalidConfig("tau_uncertainty must be in [0, 1]".into()));
        }
        // values above 1 are allowed and reject every candidate
        if !(self.tau_accept >= 0.0 && self.tau_accept.is_finite()) {
            return Err(Error::InvalidConfig("tau_accept must be a non-negative number".into()));
        }
        Ok(())
    }
}

/// Real-vs-synthetic classifier reading the `<CLS>` position of its own
/// encoder.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub encoder: LanguageModel,
    pub tau_uncertainty: f64,
    pub tau_accept: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorReport {
    pub epoch_losses: Vec<f64>,
    /// Candidates carrying the real label at the start of each epoch.
    pub relabeled_real: Vec<usize>,
    pub skipped_too_long: usize,
}

fn class_ids(tokenizer: &BbpeTokenizer, raw: &str, max: usize) -> Option<Vec<u32>> {
    let seq = EntitySequence::parse(raw);
    let enc = encode_entities(tokenizer, &seq.texts(), None);
    (enc.ids.len() <= max).then_some(enc.ids)
}

fn probs_of(net: &Network<f32>, ids: &[u32]) -> [f64; 2] {
    let cache = net.forward(ids);
    let mut p: Vec<f64> = net.class_logits(&cache).iter().map(|&v| v as f64).collect();
    softmax_in_place(&mut p);
    [p[0], p[1]]
}

impl Discriminator {
    pub fn probabilities(&self, record: &RawRequestRecord) -> Result<[f64; 2]> {
        let seq = EntitySequence::parse(&record.raw);
        let enc = self.encoder.encode(&seq.texts(), None)?;
        Ok(probs_of(self.encoder.network(), &enc.ids))
    }

    /// `(accepted, confidence)` for one candidate.
    pub fn validate_candidate(&self, candidate: &CandidateSample) -> Result<(bool, f64)> {
        let p = self.probabilities(&candidate.filled_request)?;
        Ok(accept(&p, self.tau_accept))
    }
}

pub fn train_discriminator(
    tokenizer: &BbpeTokenizer,
    originals: &RequestCorpus,
    candidates: &[CandidateSample],
    config: &DiscriminatorConfig,
) -> Result<Discriminator> {
    train_discriminator_with_report(tokenizer, originals, candidates, config).map(|(d, _)| d)
}

/// Epoch 1 uses hard labels (originals real, candidates synthetic). Before
/// each later epoch a candidate whose predicted distribution has
/// uncertainty strictly below `tau_uncertainty` takes the predicted class;
/// otherwise it stays synthetic.
pub fn train_discriminator_with_report(
    tokenizer: &BbpeTokenizer,
    originals: &RequestCorpus,
    candidates: &[CandidateSample],
    config: &DiscriminatorConfig,
) -> Result<(Discriminator, DiscriminatorReport)> {
    if originals.is_empty() {
        return Err(Error::EmptyInput("discriminator originals"));
    }
    if candidates.is_empty() {
        return Err(Error::EmptyInput("discriminator candidates"));
    }
    config.validate()?;
    let lm = &config.encoder;
    let dims = LanguageModel::dims_for(lm, tokenizer, false, 2);
    let mut net: Network<f32> = Network::init(dims, rng::derive_seed(lm.seed, "discriminator-init"));
    let max = lm.max_seq_len;

    let mut report = DiscriminatorReport::default();
    let mut real: Vec<Vec<u32>> = Vec::new();
    for r in originals.iter() {
        match class_ids(tokenizer, &r.raw, max) {
            Some(ids) => real.push(ids),
            None => report.skipped_too_long += 1,
        }
    }
    let mut synth: Vec<Vec<u32>> = Vec::new();
    for c in candidates {
        match class_ids(tokenizer, &c.filled_request.raw, max) {
            Some(ids) => synth.push(ids),
            None => report.skipped_too_long += 1,
        }
    }

    let n = real.len() + synth.len();
    let steps_per_epoch = n.div_ceil(lm.batch_size);
    let total = steps_per_epoch * lm.epochs;
    let warmup = (lm.warmup_fraction * total as f64).floor() as usize;
    let mut opt = AdamW::new(&net.layout);
    let mut rng = rng::seeded(rng::derive_seed(lm.seed, "discriminator-order"));
    let mut synth_labels = vec![CLASS_SYNTHETIC; synth.len()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;

    for epoch in 0..lm.epochs {
        if epoch > 0 && config.tau_uncertainty > 0.0 {
            let net_ref = &net;
            let probs: Vec<[f64; 2]> = {
                use rayon::prelude::*;
                synth.par_iter().map(|ids| probs_of(net_ref, ids)).collect()
            };
            for (label, p) in synth_labels.iter_mut().zip(&probs) {
                *label = match uncertainty(p) {
                    Ok(u) if u < config.tau_uncertainty => {
                        if p[CLASS_REAL] > p[CLASS_SYNTHETIC] {
                            CLASS_REAL
                        } else {
                            CLASS_SYNTHETIC
                        }
                    }
                    _ => CLASS_SYNTHETIC,
                };
            }
        }
        report.relabeled_real.push(synth_labels.iter().filter(|&&l| l == CLASS_REAL).count());

        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(lm.batch_size) {
            let items: Vec<(&[u32], usize)> = batch
                .iter()
                .map(|&i| {
                    if i < real.len() {
                        (real[i].as_slice(), CLASS_REAL)
                    } else {
                        let j = i - real.len();
                        (synth[j].as_slice(), synth_labels[j])
                    }
                })
                .collect();
            let weight = 1.0 / items.len() as f32;
            let net_ref = &net;
            let (mut grad, loss) = accumulate(net_ref, &items, |(ids, label), g| {
                let cache = net_ref.forward(ids);
                let mut dh = vec![0.0f32; cache.hidden.len()];
                let loss = net_ref.class_loss(&cache, *label, weight, g, &mut dh);
                net_ref.backward(&cache, &dh, g);
                loss
            });
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step, loss });
            }
            opt.step(&mut net.params, &mut grad, scheduled_lr(lm.learning_rate, step, total, warmup));
            epoch_loss += loss;
            step += 1;
        }
        let mean = epoch_loss / n.max(1) as f64;
        log::debug!("discriminator epoch {epoch}: loss {mean:.4}");
        report.epoch_losses.push(mean);
    }

    let mut enc_config = lm.clone();
    enc_config.vocab_size = tokenizer.vocab_size();
    let encoder = LanguageModel::from_parts(enc_config, tokenizer.clone(), net);
    Ok((Discriminator { encoder, tau_uncertainty: config.tau_uncertainty, tau_accept: config.tau_accept }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uncertainty_examples() {
        assert!((uncertainty(&[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(uncertainty(&[1.0, 0.0]).unwrap(), 0.0);
        // oracle: H = -(0.8 ln 0.8 + 0.2 ln 0.2) = 0.500402 nats, / ln 2
        let h = -(0.8f64 * 0.8f64.ln() + 0.2 * 0.2f64.ln());
        assert!((h - 0.5004).abs() < 1e-4);
        assert!((uncertainty(&[0.8, 0.2]).unwrap() - 0.7219).abs() < 1e-4);
        assert!(matches!(uncertainty(&[0.8, 0.3]), Err(Error::NotADistribution(_))));
        assert!(matches!(uncertainty(&[1.2, -0.2]), Err(Error::NotADistribution(_))));
    }

    #[test]
    fn acceptance_rule() {
        let (ok, c) = accept(&[0.99, 0.01], 0.9);
        assert!(ok);
        assert!((c - 0.919).abs() < 1e-3, "{c}");
        assert!(!accept(&[0.5, 0.5], 1e-9).0);
        assert!(!accept(&[0.01, 0.99], 0.5).0);
        assert!(!accept(&[0.01, 0.99], 1e-9).0);
        assert!(accept(&[0.01, 0.99], 0.0).0);
        assert!(!accept(&[1.0, 0.0], 1.0 + 1e-9).0);
    }

    proptest! {
        #[test]
        fn uncertainty_bounded_and_symmetric(w in proptest::collection::vec(0.0f64..1.0, 2..6)) {
            let s: f64 = w.iter().sum();
            prop_assume!(s > 1e-6);
            let p: Vec<f64> = w.iter().map(|x| x / s).collect();
            let u = uncertainty(&p).unwrap();
            prop_assert!((0.0..=1.0).contains(&u));
            let mut r = p.clone();
            r.reverse();
            prop_assert!((uncertainty(&r).unwrap() - u).abs() < 1e-12);
        }

        #[test]
        fn raising_tau_never_admits_more(p in 0.0f64..1.0, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let probs = [p, 1.0 - p];
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(accept(&probs, hi).0 <= accept(&probs, lo).0);
        }
    }
}
