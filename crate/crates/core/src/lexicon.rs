//! Token frequency statistics over the training corpus and the reserved
//! token set derived from them.
//!
//! Reserved tokens are those whose count exceeds `T = mean + z * std`, with
//! mean and population standard deviation taken over the per-distinct-token
//! count vector. They are the structural tokens of HTTP traffic (`/`, `=`,
//! `get`, ...) and are never masked or generated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::ingest::RequestCorpus;

/// Marker used when rendering reserved positions.
pub const IGNORE_MARKER: &str = "<IGN>";

#[derive(Debug, Clone, PartialEq)]
pub struct TokenFrequencyTable {
    counts: BTreeMap<String, u64>,
    total: u64,
    mean: f64,
    std: f64,
}

impl TokenFrequencyTable {
    pub fn from_counts(counts: BTreeMap<String, u64>) -> Result<Self> {
        let counts: BTreeMap<String, u64> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        if counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let total: u64 = counts.values().sum();
        let n = counts.len() as f64;
        let mean = total as f64 / n;
        let var = counts.values().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
        Ok(Self { counts, total, mean, std: var.sqrt() })
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population standard deviation of the count vector.
    pub fn std(&self) -> f64 {
        self.std
    }

    /// Element-wise sum of two tables.
    pub fn merge(&self, other: &Self) -> Self {
        let mut counts = self.counts.clone();
        for (t, c) in &other.counts {
            *counts.entry(t.clone()).or_default() += c;
        }
        Self::from_counts(counts).expect("merged table is non-empty")
    }
}

pub fn build_frequency_table(corpus: &RequestCorpus) -> Result<TokenFrequencyTable> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts = BTreeMap::new();
    for record in corpus.iter() {
        for token in record.entities() {
            *counts.entry(token.text).or_insert(0u64) += 1;
        }
    }
    TokenFrequencyTable::from_counts(counts)
}

/// One-sided standard normal quantile at `confidence`. A supplied override is
/// returned as is.
pub fn z_from_confidence(confidence: f64, z_override: Option<f64>) -> Result<f64> {
    if let Some(z) = z_override {
        return Ok(z);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::OutOfRange { value: confidence, expected: "(0, 1)" });
    }
    if confidence == 0.5 {
        return Ok(0.0);
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(confidence))
}

pub fn frequency_threshold(table: &TokenFrequencyTable, z: f64) -> f64 {
    table.mean() + z * table.std()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservedTokenSet {
    pub tokens: BTreeSet<String>,
    pub threshold: f64,
    pub z: Option<f64>,
    pub confidence: Option<f64>,
}

/// Exactly the tokens with `count > threshold`.
pub fn reserved_tokens(table: &TokenFrequencyTable, threshold: f64) -> ReservedTokenSet {
    let tokens = table.counts().iter().filter(|(_, &c)| c as f64 > threshold).map(|(t, _)| t.clone()).collect();
    ReservedTokenSet { tokens, threshold, z: None, confidence: None }
}

impl ReservedTokenSet {
    pub fn empty() -> Self {
        Self { tokens: BTreeSet::new(), threshold: f64::INFINITY, z: None, confidence: None }
    }

    /// Full derivation: z from the confidence level (or override), then the
    /// threshold, then the set.
    pub fn derive(table: &TokenFrequencyTable, confidence: f64, z_override: Option<f64>) -> Result<Self> {
        let z = z_from_confidence(confidence, z_override)?;
        let threshold = frequency_threshold(table, z);
        let mut set = reserved_tokens(table, threshold);
        set.z = Some(z);
        set.confidence = Some(confidence);
        Ok(set)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn marker(&self) -> &'static str {
        IGNORE_MARKER
    }

    /// Token texts with reserved ones replaced by the marker.
    pub fn mark<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<&'a str> {
        tokens.into_iter().map(|t| if self.contains(t) { IGNORE_MARKER } else { t }).collect()
    }

    /// Writes the manifest line followed by one token per line, sorted.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_else(|| "none".into());
        writeln!(out, "#reserved threshold={} z={} confidence={}", self.threshold, opt(self.z), opt(self.confidence))
            .unwrap();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::unreadable(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::unreadable(path, e))?;
        let mut lines = text.lines();
        let manifest = lines.next().ok_or_else(|| Error::malformed(path, "missing manifest line"))?;
        let fields: BTreeMap<&str, &str> = manifest
            .strip_prefix("#reserved ")
            .ok_or_else(|| Error::malformed(path, "bad manifest line"))?
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let num = |key: &str| -> Result<Option<f64>> {
            match fields.get(key) {
                None | Some(&"none") => Ok(None),
                Some(v) => v.parse().map(Some).map_err(|_| Error::malformed(path, format!("bad {key}"))),
            }
        };
        let threshold = num("threshold")?.ok_or_else(|| Error::malformed(path, "missing threshold"))?;
        Ok(Self {
            tokens: lines.filter(|l| !l.is_empty()).map(str::to_string).collect(),
            threshold,
            z: num("z")?,
            confidence: num("confidence")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Label, RawRequestRecord};
    use proptest::prelude::*;

    fn table(counts: &[u64]) -> TokenFrequencyTable {
        TokenFrequencyTable::from_counts(counts.iter().enumerate().map(|(i, &c)| (format!("t{i}"), c)).collect())
            .unwrap()
    }

    /// Independent quantile: bisection on the normal CDF written via erf.
    fn quantile_by_bisection(c: f64) -> f64 {
        let cdf = |x: f64| 0.5 * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2));
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < c {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn hand_counted_table() {
        let corpus: RequestCorpus = [RawRequestRecord::new("1", "a a b", Label::Normal)].into_iter().collect();
        let t = build_frequency_table(&corpus).unwrap();
        assert_eq!(t.count("a"), 2);
        assert_eq!(t.count("b"), 1);
        assert_eq!(t.mean(), 1.5);
        assert_eq!(t.total(), 3);
    }

    #[test]
    fn single_token() {
        let t = table(&[1]);
        assert_eq!((t.mean(), t.std()), (1.0, 0.0));
    }

    #[test]
    fn additivity() {
        let a: RequestCorpus = [RawRequestRecord::new("1", "a = b", Label::Normal)].into_iter().collect();
        let b: RequestCorpus = [RawRequestRecord::new("2", "a / c c", Label::Normal)].into_iter().collect();
        let joined: RequestCorpus = a.iter().chain(b.iter()).cloned().collect();
        let merged = build_frequency_table(&a).unwrap().merge(&build_frequency_table(&b).unwrap());
        assert_eq!(merged, build_frequency_table(&joined).unwrap());
    }

    #[test]
    fn empty_corpus() {
        assert!(matches!(build_frequency_table(&RequestCorpus::default()), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn z_values() {
        assert_eq!(z_from_confidence(0.5, None).unwrap(), 0.0);
        let z = z_from_confidence(0.9999, None).unwrap();
        let oracle = quantile_by_bisection(0.9999);
        assert!((oracle - 3.719).abs() < 1e-3, "{oracle}");
        assert!((z - oracle).abs() < 1e-6, "{z} vs {oracle}");
        assert_eq!(z_from_confidence(0.9999, Some(5.73)).unwrap(), 5.73);
        assert!(matches!(z_from_confidence(1.0, None), Err(Error::OutOfRange { .. })));
        assert!(matches!(z_from_confidence(0.0, None), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn threshold_example() {
        let t = table(&[1, 1, 1, 1, 10]);
        assert!((t.mean() - 2.8).abs() < 1e-12);
        assert!((t.std() - 3.6).abs() < 1e-12);
        let thr = frequency_threshold(&t, 1.0);
        assert!((thr - 6.4).abs() < 1e-12);
        assert_eq!(frequency_threshold(&t, 0.0), t.mean());
        let r = reserved_tokens(&t, thr);
        assert_eq!(r.tokens.iter().collect::<Vec<_>>(), ["t4"]);
        assert!(reserved_tokens(&t, 11.0).is_empty());
        // strict inequality at the threshold
        assert!(reserved_tokens(&t, 10.0).is_empty());
    }

    #[test]
    fn save_load() {
        let t = table(&[1, 1, 1, 1, 10, 12]);
        let set = ReservedTokenSet::derive(&t, 0.9, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reserved.txt");
        set.save(&path).unwrap();
        assert_eq!(ReservedTokenSet::load(&path).unwrap(), set);
    }

    #[test]
    fn marking() {
        let t = table(&[1, 9]);
        let set = reserved_tokens(&t, 2.0);
        assert_eq!(set.mark(["t0", "t1"]), ["t0", "<IGN>"]);
    }

    proptest! {
        #[test]
        fn monotone_in_threshold(counts in prop::collection::vec(1u64..100, 1..30), t1 in 0.0f64..100.0, dt in 0.0f64..50.0) {
            let t = table(&counts);
            let lo = reserved_tokens(&t, t1);
            let hi = reserved_tokens(&t, t1 + dt);
            prop_assert!(hi.tokens.is_subset(&lo.tokens));
        }

        #[test]
        fn scale_invariance(counts in prop::collection::vec(1u64..100, 1..30), k in 1u64..20, z in -1.0f64..4.0) {
            let a = table(&counts);
            let scaled: Vec<u64> = counts.iter().map(|c| c * k).collect();
            let b = table(&scaled);
            let kf = k as f64;
            prop_assert!((b.mean() - kf * a.mean()).abs() <= 1e-9 * b.mean().max(1.0));
            prop_assert!((b.std() - kf * a.std()).abs() <= 1e-9 * b.std().max(1.0));
            let (ta, tb) = (frequency_threshold(&a, z), frequency_threshold(&b, z));
            prop_assert!((tb - kf * ta).abs() <= 1e-9 * tb.abs().max(1.0));
            // Exact comparisons can flip when a count sits on the threshold; skip those.
            let tie = counts.iter().any(|&c| ((c as f64) - ta).abs() < 1e-9);
            if !tie {
                prop_assert_eq!(reserved_tokens(&a, ta).tokens, reserved_tokens(&b, tb).tokens);
            }
        }

        #[test]
        fn z_strictly_increasing(c1 in 0.001f64..0.998, dc in 0.0005f64..0.001) {
            let a = z_from_confidence(c1, None).unwrap();
            let b = z_from_confidence(c1 + dc, None).unwrap();
            prop_assert!(b > a);
        }
    }
}
