//! Byte-level BPE.
//!
//! The base alphabet is the 256 byte values, so any byte string encodes
//! losslessly. Text is first cut into chunks (runs of ASCII alphanumerics and
//! non-ASCII bytes, runs of ASCII whitespace, and single other bytes); merges
//! never cross chunk boundaries, which keeps learned symbols aligned with
//! entity tokens.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::RequestCorpus;

pub const PAD: &str = "<PAD>";
pub const UNK: &str = "<UNK>";
pub const CLS: &str = "<CLS>";
pub const SEP: &str = "<SEP>";
pub const MASK: &str = "<MASK>";
pub const IGN: &str = "<IGN>";

pub const SPECIALS: [&str; 6] = [PAD, UNK, CLS, SEP, MASK, IGN];
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;
pub const IGN_ID: u32 = 5;
/// Id of byte 0; byte `b` has id `BYTE_OFFSET + b`.
pub const BYTE_OFFSET: u32 = SPECIALS.len() as u32;
/// Smallest vocabulary: specials plus the byte alphabet.
pub const BASE_VOCAB: usize = SPECIALS.len() + 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BbpeTokenizer {
    /// Byte content of every symbol, indexed by id. Specials hold their text.
    symbols: Vec<Vec<u8>>,
    merges: Vec<(u32, u32)>,
    ranks: HashMap<(u32, u32), (usize, u32)>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ByteClass {
    Word,
    Space,
    Other,
}

fn class(b: u8) -> ByteClass {
    if b.is_ascii_alphanumeric() || b >= 0x80 {
        ByteClass::Word
    } else if b.is_ascii_whitespace() {
        ByteClass::Space
    } else {
        ByteClass::Other
    }
}

/// Splits bytes into merge-isolated chunks.
pub fn chunks(bytes: &[u8]) -> Vec<&[u8]> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < bytes.len() {
        let c = class(bytes[start]);
        let mut end = start + 1;
        if c != ByteClass::Other {
            while end < bytes.len() && class(bytes[end]) == c {
                end += 1;
            }
        }
        out.push(&bytes[start..end]);
        start = end;
    }
    out
}

impl BbpeTokenizer {
    /// Tokenizer with no merges.
    pub fn bytes_only() -> Self {
        let mut symbols: Vec<Vec<u8>> = SPECIALS.iter().map(|s| s.as_bytes().to_vec()).collect();
        symbols.extend((0..=255u8).map(|b| vec![b]));
        Self { symbols, merges: Vec::new(), ranks: HashMap::new() }
    }

    fn from_merges(merges: Vec<(u32, u32)>) -> Result<Self> {
        let mut tok = Self::bytes_only();
        for (rank, &(a, b)) in merges.iter().enumerate() {
            let len = tok.symbols.len() as u32;
            if a >= len || b >= len || a < BYTE_OFFSET || b < BYTE_OFFSET {
                return Err(Error::UnknownId(a.max(b)));
            }
            let mut joined = tok.symbols[a as usize].clone();
            joined.extend_from_slice(&tok.symbols[b as usize]);
            tok.ranks.insert((a, b), (rank, len));
            tok.symbols.push(joined);
        }
        tok.merges = merges;
        Ok(tok)
    }

    pub fn vocab_size(&self) -> usize {
        self.symbols.len()
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn is_special(id: u32) -> bool {
        id < BYTE_OFFSET
    }

    pub fn symbol_bytes(&self, id: u32) -> Option<&[u8]> {
        self.symbols.get(id as usize).map(Vec::as_slice)
    }

    /// Symbol text when it is valid UTF-8.
    pub fn symbol_text(&self, id: u32) -> Option<&str> {
        self.symbol_bytes(id).and_then(|b| std::str::from_utf8(b).ok())
    }

    fn encode_chunk(&self, chunk: &[u8], out: &mut Vec<u32>) {
        let mut ids: Vec<u32> = chunk.iter().map(|&b| BYTE_OFFSET + b as u32).collect();
        loop {
            let best = ids
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&(r, new)| (r, w[0], w[1], new)))
                .min_by_key(|&(r, ..)| r);
            let Some((_, a, b, new)) = best else { break };
            let mut merged = Vec::with_capacity(ids.len());
            let mut i = 0;
            while i < ids.len() {
                if i + 1 < ids.len() && ids[i] == a && ids[i + 1] == b {
                    merged.push(new);
                    i += 2;
                } else {
                    merged.push(ids[i]);
                    i += 1;
                }
            }
            ids = merged;
        }
        out.extend(ids);
    }

    pub fn encode_bytes(&self, bytes: &[u8]) -> Vec<u32> {
        let mut out = Vec::with_capacity(bytes.len());
        for chunk in chunks(bytes) {
            self.encode_chunk(chunk, &mut out);
        }
        out
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.encode_bytes(text.as_bytes())
    }

    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for &id in ids {
            out.extend_from_slice(self.symbol_bytes(id).ok_or(Error::UnknownId(id))?);
        }
        Ok(out)
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        Ok(String::from_utf8_lossy(&self.decode_bytes(ids)?).into_owned())
    }

    /// Writes `vocab.txt` (id, tab, symbol) and `merges.txt` (one pair per
    /// line, in training order). Bytes are shown with the printable byte
    /// mapping used by GPT-2 style tokenizers.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let map = byte_to_unicode();
        let show = |bytes: &[u8]| bytes.iter().map(|&b| map[b as usize]).collect::<String>();
        let mut vocab = String::new();
        for (id, sym) in self.symbols.iter().enumerate() {
            let text = if id < SPECIALS.len() { SPECIALS[id].to_string() } else { show(sym) };
            vocab.push_str(&format!("{id}\t{text}\n"));
        }
        let mut merges = String::from("#version: bbpe-1\n");
        for &(a, b) in &self.merges {
            merges.push_str(&format!("{} {}\n", show(&self.symbols[a as usize]), show(&self.symbols[b as usize])));
        }
        let vpath = dir.join("vocab.txt");
        fs::write(&vpath, vocab).map_err(|e| Error::unreadable(&vpath, e))?;
        let mpath = dir.join("merges.txt");
        fs::write(&mpath, merges).map_err(|e| Error::unreadable(&mpath, e))?;
        Ok(())
    }

    /// Loads merges and checks that replaying them reproduces the vocab file.
    pub fn load(dir: &Path) -> Result<Self> {
        let inverse: HashMap<char, u8> = byte_to_unicode().iter().enumerate().map(|(b, &c)| (c, b as u8)).collect();
        let unshow = |s: &str, path: &Path| -> Result<Vec<u8>> {
            s.chars().map(|c| inverse.get(&c).copied().ok_or_else(|| Error::malformed(path, format!("bad symbol {s}")))).collect()
        };
        let mpath = dir.join("merges.txt");
        let text = fs::read_to_string(&mpath).map_err(|e| Error::unreadable(&mpath, e))?;
        let mut by_bytes: HashMap<Vec<u8>, u32> = HashMap::new();
        for b in 0..=255u8 {
            by_bytes.insert(vec![b], BYTE_OFFSET + b as u32);
        }
        let mut merges = Vec::new();
        for line in text.lines().filter(|l| !l.starts_with("#version") && !l.is_empty()) {
            let (a, b) = line.split_once(' ').ok_or_else(|| Error::malformed(&mpath, format!("bad merge `{line}`")))?;
            let (a, b) = (unshow(a, &mpath)?, unshow(b, &mpath)?);
            let ia = *by_bytes.get(&a).ok_or_else(|| Error::malformed(&mpath, "merge uses unknown symbol"))?;
            let ib = *by_bytes.get(&b).ok_or_else(|| Error::malformed(&mpath, "merge uses unknown symbol"))?;
            let mut joined = a;
            joined.extend(b);
            by_bytes.insert(joined, (BASE_VOCAB + merges.len()) as u32);
            merges.push((ia, ib));
        }
        let tok = Self::from_merges(merges)?;

        let vpath = dir.join("vocab.txt");
        let vocab = fs::read_to_string(&vpath).map_err(|e| Error::unreadable(&vpath, e))?;
        let mut count = 0;
        for (i, line) in vocab.lines().enumerate() {
            let (id, sym) = line.split_once('\t').ok_or_else(|| Error::malformed(&vpath, format!("line {}", i + 1)))?;
            let ok = id.parse::<usize>().ok() == Some(i)
                && if i < SPECIALS.len() { sym == SPECIALS[i] } else { unshow(sym, &vpath)? == tok.symbols[i] };
            if !ok {
                return Err(Error::malformed(&vpath, format!("entry {i} disagrees with merges")));
            }
            count += 1;
        }
        if count != tok.vocab_size() {
            return Err(Error::malformed(&vpath, "vocab size disagrees with merges"));
        }
        Ok(tok)
    }
}

/// Trains merges on the raw text of every record.
///
/// Greedy: repeatedly merge the most frequent adjacent pair (ties go to the
/// lexicographically smallest pair of byte strings) until the vocabulary
/// reaches `vocab_size` or no pair occurs at least twice.
pub fn train_bbpe(corpus: &RequestCorpus, vocab_size: usize) -> Result<BbpeTokenizer> {
    train_bbpe_on(corpus.iter().map(|r| r.raw.as_bytes()), vocab_size)
}

pub fn train_bbpe_on<'a>(texts: impl IntoIterator<Item = &'a [u8]>, vocab_size: usize) -> Result<BbpeTokenizer> {
    if vocab_size < BASE_VOCAB {
        return Err(Error::VocabTooSmall { requested: vocab_size, minimum: BASE_VOCAB });
    }
    let mut freq: HashMap<Vec<u8>, u64> = HashMap::new();
    for text in texts {
        for chunk in chunks(text) {
            if chunk.len() > 1 {
                *freq.entry(chunk.to_vec()).or_default() += 1;
            }
        }
    }
    let mut words: Vec<(Vec<u32>, u64)> =
        freq.into_iter().map(|(w, f)| (w.iter().map(|&b| BYTE_OFFSET + b as u32).collect(), f)).collect();
    words.sort();

    let mut symbols: Vec<Vec<u8>> = BbpeTokenizer::bytes_only().symbols;
    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut where_: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (wi, (w, f)) in words.iter().enumerate() {
        for p in w.windows(2) {
            *counts.entry((p[0], p[1])).or_default() += f;
            where_.entry((p[0], p[1])).or_default().insert(wi);
        }
    }
    type Entry = (u64, Reverse<(Vec<u8>, Vec<u8>)>, (u32, u32));
    let key = |symbols: &[Vec<u8>], p: (u32, u32)| Reverse((symbols[p.0 as usize].clone(), symbols[p.1 as usize].clone()));
    let mut heap: BinaryHeap<Entry> = counts.iter().map(|(&p, &c)| (c, key(&symbols, p), p)).collect();

    let mut merges = Vec::new();
    while symbols.len() < vocab_size {
        let Some((count, _, pair)) = heap.pop() else { break };
        if counts.get(&pair).copied() != Some(count) {
            continue;
        }
        if count < 2 {
            break;
        }
        let new_id = symbols.len() as u32;
        let mut joined = symbols[pair.0 as usize].clone();
        joined.extend_from_slice(&symbols[pair.1 as usize]);
        symbols.push(joined);
        merges.push(pair);

        let mut affected: Vec<usize> = where_.remove(&pair).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        let mut touched: HashSet<(u32, u32)> = HashSet::new();
        for wi in affected {
            let (word, f) = &mut words[wi];
            for p in word.windows(2) {
                let c = counts.get_mut(&(p[0], p[1])).expect("counted pair");
                *c -= *f;
                touched.insert((p[0], p[1]));
            }
            let mut merged = Vec::with_capacity(word.len());
            let mut i = 0;
            while i < word.len() {
                if i + 1 < word.len() && (word[i], word[i + 1]) == pair {
                    merged.push(new_id);
                    i += 2;
                } else {
                    merged.push(word[i]);
                    i += 1;
                }
            }
            *word = merged;
            for p in word.windows(2) {
                *counts.entry((p[0], p[1])).or_default() += *f;
                where_.entry((p[0], p[1])).or_default().insert(wi);
                touched.insert((p[0], p[1]));
            }
        }
        let mut touched: Vec<_> = touched.into_iter().collect();
        touched.sort_unstable();
        for p in touched {
            match counts.get(&p).copied() {
                Some(0) => {
                    counts.remove(&p);
                }
                Some(c) => heap.push((c, key(&symbols, p), p)),
                None => {}
            }
        }
    }
    BbpeTokenizer::from_merges(merges)
}

/// Printable stand-ins for bytes: printable Latin-1 maps to itself, the rest
/// to code points from U+0100 upward.
pub fn byte_to_unicode() -> [char; 256] {
    let mut map = ['\0'; 256];
    let mut next = 256u32;
    for b in 0..=255u32 {
        let printable = (0x21..=0x7e).contains(&b) || (0xa1..=0xac).contains(&b) || (0xae..=0xff).contains(&b);
        map[b as usize] = if printable {
            char::from_u32(b).unwrap()
        } else {
            let c = char::from_u32(next).unwrap();
            next += 1;
            c
        };
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Label, RawRequestRecord};
    use proptest::prelude::*;

    fn corpus(texts: &[&str]) -> RequestCorpus {
        texts.iter().enumerate().map(|(i, t)| RawRequestRecord::new(i.to_string(), *t, Label::Normal)).collect()
    }

    /// Pair-count oracle: most frequent adjacent pair over chunk occurrences.
    fn most_frequent_pair(texts: &[&str]) -> (Vec<u8>, Vec<u8>) {
        let mut counts: std::collections::BTreeMap<(Vec<u8>, Vec<u8>), u64> = Default::default();
        for t in texts {
            for chunk in chunks(t.as_bytes()) {
                for w in chunk.windows(2) {
                    *counts.entry((vec![w[0]], vec![w[1]])).or_default() += 1;
                }
            }
        }
        let max = *counts.values().max().unwrap();
        counts.into_iter().find(|(_, c)| *c == max).unwrap().0
    }

    #[test]
    fn minimum_vocab_is_bytes_only() {
        let tok = train_bbpe(&corpus(&["get /a get /a"]), BASE_VOCAB).unwrap();
        assert!(tok.merges().is_empty());
        assert_eq!(tok.vocab_size(), BASE_VOCAB);
        assert!(matches!(train_bbpe(&corpus(&["x"]), BASE_VOCAB - 1), Err(Error::VocabTooSmall { .. })));
    }

    #[test]
    fn first_merge_follows_pair_counts() {
        let texts = ["aaaa", "aaaa", "aaaa"];
        let tok = train_bbpe(&corpus(&texts), BASE_VOCAB + 1).unwrap();
        let (a, b) = tok.merges()[0];
        assert_eq!(tok.symbol_bytes(a).unwrap(), b"a");
        assert_eq!(tok.symbol_bytes(b).unwrap(), b"a");
        assert_eq!(most_frequent_pair(&texts), (b"a".to_vec(), b"a".to_vec()));

        let texts = ["get /pagar.jsp modo=insertar", "get /index.jsp", "post /pagar.jsp modo=entrar"];
        let tok = train_bbpe(&corpus(&texts), BASE_VOCAB + 1).unwrap();
        let (a, b) = tok.merges()[0];
        let got = (tok.symbol_bytes(a).unwrap().to_vec(), tok.symbol_bytes(b).unwrap().to_vec());
        assert_eq!(got, most_frequent_pair(&texts));
    }

    #[test]
    fn merged_pair_encodes_to_one_id() {
        let tok = train_bbpe(&corpus(&["ge ge ge"]), BASE_VOCAB + 1).unwrap();
        assert_eq!(tok.encode("ge").len(), 1);
        assert_eq!(tok.encode("").len(), 0);
        assert_eq!(tok.decode(&tok.encode("get /a")).unwrap(), "get /a");
    }

    #[test]
    fn merges_stop_when_no_pair_repeats() {
        let tok = train_bbpe(&corpus(&["abc"]), 10_000).unwrap();
        assert!(tok.merges().is_empty());
        let tok = train_bbpe(&corpus(&["insertar insertar"]), 10_000).unwrap();
        assert_eq!(tok.encode("insertar").len(), 1);
    }

    #[test]
    fn deterministic_training() {
        let texts = ["get /tienda1/index.jsp", "post /tienda1/publico/anadir.jsp id=3", "get /tienda1/publico/pagar.jsp"];
        assert_eq!(train_bbpe(&corpus(&texts), 400).unwrap(), train_bbpe(&corpus(&texts), 400).unwrap());
    }

    #[test]
    fn unknown_id() {
        let tok = BbpeTokenizer::bytes_only();
        assert!(matches!(tok.decode(&[99_999]), Err(Error::UnknownId(99_999))));
    }

    #[test]
    fn save_load_roundtrip() {
        let texts = ["get /tienda1/index.jsp", "post /tienda1/publico/anadir.jsp id=3&b1=añadir", "get /tienda1/publico/pagar.jsp"];
        let tok = train_bbpe(&corpus(&texts), 330).unwrap();
        let dir = tempfile::tempdir().unwrap();
        tok.save(dir.path()).unwrap();
        assert_eq!(BbpeTokenizer::load(dir.path()).unwrap(), tok);
    }

    proptest! {
        #[test]
        fn byte_round_trip(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let tok = train_bbpe(&corpus(&["get /tienda1/index.jsp get /tienda1/index.jsp a=1&a=1"]), 300).unwrap();
            prop_assert_eq!(tok.decode_bytes(&tok.encode_bytes(&bytes)).unwrap(), bytes);
        }
    }
}
