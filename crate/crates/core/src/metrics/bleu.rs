use std::collections::HashMap;

use crate::error::{Error, Result};

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU: geometric mean of clipped n-gram precisions for
/// `n = 1..=max_n` times the brevity penalty. A zero precision for `n >= 2`
/// is smoothed to `1 / (total + 1)`; an order with no candidate n-grams
/// counts as precision 1.
pub fn bleu(candidate: &[&str], reference: &[&str], max_n: usize) -> Result<f64> {
    if candidate.is_empty() {
        return Err(Error::EmptyCandidate);
    }
    if max_n == 0 {
        return Err(Error::InvalidConfig("max_n must be at least 1".into()));
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let refc = ngram_counts(reference, n);
        let total: usize = cand.values().sum();
        let matched: usize = cand.iter().map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0))).sum();
        let p = if total == 0 {
            1.0
        } else if matched == 0 {
            if n == 1 {
                return Ok(0.0);
            }
            1.0 / (total as f64 + 1.0)
        } else {
            matched as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    Ok((bp * (log_sum / max_n as f64).exp()).clamp(0.0, 1.0))
}

/// Mean of per-pair sentence scores.
pub fn corpus_bleu(pairs: &[(Vec<&str>, Vec<&str>)], max_n: usize) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("bleu pairs"));
    }
    let mut sum = 0.0;
    for (c, r) in pairs {
        sum += bleu(c, r, max_n)?;
    }
    Ok(sum / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn examples() {
        let a = toks("get / pagar . jsp modo = insertar");
        assert_eq!(bleu(&a, &a, 4).unwrap(), 1.0);
        let v = bleu(&toks("a b c"), &toks("a b d"), 2).unwrap();
        assert!((v - (2.0f64 / 3.0 * 0.5).sqrt()).abs() < 1e-12);
        assert!((v - 0.57735).abs() < 1e-4);
        assert_eq!(bleu(&toks("x y"), &toks("a b"), 4).unwrap(), 0.0);
        assert!(matches!(bleu(&[], &a, 4), Err(Error::EmptyCandidate)));
    }

    #[test]
    fn smoothing_and_brevity() {
        // unigram 2/2, bigram 0/1 smoothed to 1/2; BP = exp(1 - 4/2)
        let v = bleu(&toks("b a"), &toks("a b c d"), 2).unwrap();
        assert!((v - (1.0f64 - 2.0).exp() * 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn order_sensitivity() {
        let (c, r) = (toks("a b c"), toks("c b a"));
        assert_eq!(bleu(&c, &r, 1).unwrap(), 1.0);
        assert!(bleu(&c, &r, 2).unwrap() < 1.0);
    }
}
