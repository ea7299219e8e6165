use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::entity::{tokenize_entities, EntityToken};
use super::normalize::{is_request_line, normalize_request, normalize_request_with, NormalizeOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Normal, Label::Abnormal];

    pub fn index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Abnormal => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Label::Normal
        } else {
            Label::Abnormal
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One labeled request. `raw` is already normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRequestRecord {
    pub id: String,
    pub raw: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_type: Option<String>,
    pub source_dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl RawRequestRecord {
    pub fn new(id: impl Into<String>, raw: impl Into<String>, label: Label) -> Self {
        Self {
            id: id.into(),
            raw: raw.into(),
            label,
            attack_type: None,
            source_dataset: "inline".into(),
            split: None,
        }
    }

    pub fn entities(&self) -> Vec<EntityToken> {
        tokenize_entities(&self.raw)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RequestCorpus {
    pub records: Vec<RawRequestRecord>,
}

impl RequestCorpus {
    pub fn new(records: Vec<RawRequestRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record tallies indexed by [`Label::index`].
    pub fn label_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for r in &self.records {
            counts[r.label.index()] += 1;
        }
        counts
    }

    pub fn count(&self, label: Label) -> usize {
        self.label_counts()[label.index()]
    }

    pub fn with_label(&self, label: Label) -> RequestCorpus {
        RequestCorpus::new(self.records.iter().filter(|r| r.label == label).cloned().collect())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RawRequestRecord> {
        self.records.iter()
    }
}

impl FromIterator<RawRequestRecord> for RequestCorpus {
    fn from_iter<I: IntoIterator<Item = RawRequestRecord>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    CsicRaw,
    Atrdf,
    Canonical,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csic-raw" => Ok(Self::CsicRaw),
            "atrdf" => Ok(Self::Atrdf),
            "canonical" => Ok(Self::Canonical),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub parsed: usize,
    pub skipped: usize,
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<RequestCorpus> {
    load_corpus_with_stats(path, format).map(|(c, _)| c)
}

/// Loads a corpus, returning how many entries were skipped as malformed.
pub fn load_corpus_with_stats(path: &Path, format: CorpusFormat) -> Result<(RequestCorpus, LoadStats)> {
    let files = input_files(path, format)?;
    let mut stats = LoadStats::default();
    let mut records = Vec::new();
    for file in &files {
        let text = fs::read(file).map_err(|e| Error::unreadable(file, e))?;
        let text = String::from_utf8_lossy(&text);
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("data").to_string();
        match format {
            CorpusFormat::Canonical => parse_canonical(&text, &mut records, &mut stats),
            CorpusFormat::CsicRaw => parse_csic(&text, &stem, &mut records, &mut stats),
            CorpusFormat::Atrdf => parse_atrdf(&text, &stem, &mut records, &mut stats),
        }
    }
    if stats.skipped > 0 {
        log::warn!("{}: skipped {} malformed entries", path.display(), stats.skipped);
    }
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if format != CorpusFormat::Canonical {
        records.sort_by(|a, b| a.id.cmp(&b.id));
    }
    Ok((RequestCorpus::new(records), stats))
}

fn input_files(path: &Path, format: CorpusFormat) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| Error::unreadable(path, e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let exts: &[&str] = match format {
        CorpusFormat::Canonical => &["jsonl"],
        CorpusFormat::CsicRaw => &["txt"],
        CorpusFormat::Atrdf => &["json", "jsonl"],
    };
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::unreadable(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()).is_some_and(|e| exts.contains(&e)))
        .collect();
    files.sort();
    Ok(files)
}

fn parse_canonical(text: &str, out: &mut Vec<RawRequestRecord>, stats: &mut LoadStats) {
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<RawRequestRecord>(line) {
            Ok(r) if !r.raw.trim().is_empty() => {
                out.push(r);
                stats.parsed += 1;
            }
            _ => stats.skipped += 1,
        }
    }
}

/// Plain-text HTTP requests, one after another. A request runs from its
/// request line to the next request line; a block after the header section
/// is the body. The label comes from the file name.
fn parse_csic(text: &str, stem: &str, out: &mut Vec<RawRequestRecord>, stats: &mut LoadStats) {
    let label = if stem.to_ascii_lowercase().contains("anomal") { Label::Abnormal } else { Label::Normal };
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut orphan = false;
    for line in text.lines() {
        if is_request_line(line.trim_end_matches('\r')) {
            blocks.push(vec![line]);
        } else if let Some(block) = blocks.last_mut() {
            block.push(line);
        } else if !line.trim().is_empty() {
            orphan = true;
        }
    }
    if orphan {
        stats.skipped += 1;
    }
    for (i, block) in blocks.iter().enumerate() {
        match normalize_request(&block.join("\n")) {
            Ok(raw) => {
                out.push(RawRequestRecord {
                    id: format!("csic-{stem}-{i:07}"),
                    raw,
                    label,
                    attack_type: None,
                    source_dataset: "csic2010".into(),
                    split: None,
                });
                stats.parsed += 1;
            }
            Err(_) => stats.skipped += 1,
        }
    }
}

/// JSON request/response pairs: either one array or one object per line.
/// A non-empty `request.Attack_Tag` (or top-level `attack_type`) other than
/// "benign" marks the pair abnormal.
fn parse_atrdf(text: &str, stem: &str, out: &mut Vec<RawRequestRecord>, stats: &mut LoadStats) {
    let entries: Vec<serde_json::Value> = match serde_json::from_str::<serde_json::Value>(text) {
        Ok(serde_json::Value::Array(items)) => items,
        Ok(obj @ serde_json::Value::Object(_)) => vec![obj],
        _ => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .filter_map(|l| match serde_json::from_str(l) {
                Ok(v) => Some(v),
                Err(_) => {
                    stats.skipped += 1;
                    None
                }
            })
            .collect(),
    };
    let options = NormalizeOptions::api_traffic();
    for (i, entry) in entries.iter().enumerate() {
        match atrdf_record(entry, &options) {
            Some((raw, attack)) => {
                out.push(RawRequestRecord {
                    id: format!("atrdf-{stem}-{i:07}"),
                    raw,
                    label: if attack.is_some() { Label::Abnormal } else { Label::Normal },
                    attack_type: attack,
                    source_dataset: "atrdf2023".into(),
                    split: None,
                });
                stats.parsed += 1;
            }
            None => stats.skipped += 1,
        }
    }
}

fn atrdf_record(entry: &serde_json::Value, options: &NormalizeOptions) -> Option<(String, Option<String>)> {
    let request = entry.get("request")?;
    let method = request.get("method")?.as_str()?;
    let url = request.get("url")?.as_str()?;
    let mut http = format!("{method} {url} HTTP/1.1\n");
    match request.get("headers") {
        Some(serde_json::Value::Object(map)) => {
            for (name, value) in map {
                let value = value.as_str().map(str::to_string).unwrap_or_else(|| value.to_string());
                http.push_str(&format!("{name}: {value}\n"));
            }
        }
        Some(serde_json::Value::String(block)) => {
            for line in block.lines().filter(|l| l.contains(':')) {
                http.push_str(line);
                http.push('\n');
            }
        }
        _ => {}
    }
    http.push('\n');
    match request.get("body") {
        Some(serde_json::Value::String(s)) => http.push_str(s),
        Some(serde_json::Value::Null) | None => {}
        Some(other) => http.push_str(&other.to_string()),
    }
    let raw = normalize_request_with(&http, options).ok()?;

    let tag = request
        .get("Attack_Tag")
        .or_else(|| entry.get("attack_type"))
        .and_then(|v| v.as_str())
        .map(str::trim)
        .filter(|t| !t.is_empty() && !t.eq_ignore_ascii_case("benign"))
        .map(str::to_string);
    Some((raw, tag))
}

pub fn write_canonical(path: &Path, records: &[RawRequestRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::unreadable(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_canonical(path: &Path) -> Result<RequestCorpus> {
    let file = fs::File::open(path).map_err(|e| Error::unreadable(path, e))?;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: RawRequestRecord =
            serde_json::from_str(&line).map_err(|e| Error::malformed(path, format!("line {}: {e}", n + 1)))?;
        records.push(r);
    }
    Ok(RequestCorpus::new(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSIC_SAMPLE: &str = "GET http://localhost:8080/tienda1/index.jsp HTTP/1.1\n\
User-Agent: Mozilla/5.0 (compatible; Konqueror/3.5; Linux)\n\
Cookie: JSESSIONID=1F767F17239C9B670A39E9B10C3825F4\n\
Connection: close\n\
\n\
\n\
POST http://localhost:8080/tienda1/publico/anadir.jsp HTTP/1.1\n\
Content-Type: application/x-www-form-urlencoded\n\
Content-Length: 68\n\
\n\
id=3&nombre=Vino+Rioja&precio=100&cantidad=55&B1=A%F1adir+al+carrito\n\
\n";

    #[test]
    fn csic_blocks() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("normalTrafficTraining.txt"), CSIC_SAMPLE).unwrap();
        std::fs::write(dir.path().join("anomalousTrafficTest.txt"), "GET /tienda1/index.jsp?id=1%27+or+1=1 HTTP/1.1\n\n").unwrap();
        let corpus = load_corpus(dir.path(), CorpusFormat::CsicRaw).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.label_counts(), [2, 1]);
        let raws: Vec<_> = corpus.iter().map(|r| r.raw.as_str()).collect();
        assert!(raws.contains(&"get /tienda1/index.jsp"));
        assert!(raws.contains(&"post /tienda1/publico/anadir.jsp id=3&nombre=vino rioja&precio=100&cantidad=55&b1=añadir al carrito"));
        assert!(raws.contains(&"get /tienda1/index.jsp id=1' or 1=1"));
    }

    #[test]
    fn canonical_roundtrip_and_skip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let recs: Vec<_> = (0..3).map(|i| RawRequestRecord::new(format!("r{i}"), "get /a", Label::Normal)).collect();
        write_canonical(&path, &recs).unwrap();
        assert_eq!(load_corpus(&path, CorpusFormat::Canonical).unwrap().records, recs);

        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{not json}\n");
        std::fs::write(&path, text).unwrap();
        let (c, stats) = load_corpus_with_stats(&path, CorpusFormat::Canonical).unwrap();
        assert_eq!((c.len(), stats.skipped), (3, 1));
    }

    #[test]
    fn atrdf_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset_1.json");
        let json = r#"[
          {"request": {"method": "GET", "url": "http://127.0.0.1:5000/orders/check?id=4",
                       "headers": {"Host": "127.0.0.1", "User-Agent": "curl"}, "body": ""},
           "response": {"status_code": 200}},
          {"request": {"method": "GET", "url": "http://127.0.0.1:5000/static/download",
                       "headers": {"Cookie": "file=..%2F..%2Fetc%2Fpasswd"},
                       "Attack_Tag": "Directory Traversal", "body": ""},
           "response": {"status_code": 404}}
        ]"#;
        std::fs::write(&path, json).unwrap();
        let c = load_corpus(&path, CorpusFormat::Atrdf).unwrap();
        assert_eq!(c.label_counts(), [1, 1]);
        assert_eq!(c.records[0].raw, "get /orders/check id=4 user-agent: curl");
        assert_eq!(c.records[1].raw, "get /static/download cookie: file=../../etc/passwd");
        assert_eq!(c.records[1].attack_type.as_deref(), Some("Directory Traversal"));
    }

    #[test]
    fn errors() {
        assert!(matches!("xml".parse::<CorpusFormat>(), Err(Error::UnknownFormat(_))));
        assert!(matches!(
            load_corpus(Path::new("/nonexistent/path"), CorpusFormat::Canonical),
            Err(Error::UnreadablePath { .. })
        ));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        std::fs::write(&path, "\n").unwrap();
        assert!(matches!(load_corpus(&path, CorpusFormat::Canonical), Err(Error::EmptyCorpus)));
    }
}
