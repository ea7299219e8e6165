//! Model artifacts: a JSON manifest plus a flat little-endian f32 weight
//! file whose header indexes the named tensors.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::LmConfig;
use super::model::LanguageModel;
use super::network::{Dims, Layout, Network, TensorInfo};
use super::tokenizer::BbpeTokenizer;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RQSW";
const VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "lm.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    config: LmConfig,
    dims: Dims,
    parameters: usize,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    offset: usize,
    shape: Vec<usize>,
}

/// `RQSW`, version (u32), index length (u32), JSON index, then the data.
pub fn write_weights(path: &Path, net: &Network<f32>) -> Result<()> {
    let index: Vec<IndexEntry> = net
        .layout
        .tensors
        .iter()
        .map(|t| IndexEntry { name: t.name.clone(), offset: t.offset, shape: t.shape.clone() })
        .collect();
    let header = serde_json::to_vec(&index)?;
    let mut buf = Vec::with_capacity(12 + header.len() + net.params.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for v in &net.params {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::unreadable(path, e))?;
    f.write_all(&buf).map_err(|e| Error::unreadable(path, e))?;
    Ok(())
}

/// Reads a weight file and checks its index against the layout for `dims`.
pub fn read_weights(path: &Path, dims: Dims) -> Result<Network<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::unreadable(path, e))?;
    let bad = |reason: &str| Error::malformed(path, reason);
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("missing RQSW header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = 12 + hlen;
    if bytes.len() < body {
        return Err(bad("truncated index"));
    }
    let index: Vec<IndexEntry> = serde_json::from_slice(&bytes[12..body])?;
    let layout = Layout::new(dims);
    let expected: Vec<&TensorInfo> = layout.tensors.iter().collect();
    if index.len() != expected.len()
        || index.iter().zip(&expected).any(|(a, b)| a.name != b.name || a.offset != b.offset || a.shape != b.shape)
    {
        return Err(bad("tensor index does not match the manifest dimensions"));
    }
    let data = &bytes[body..];
    if data.len() != layout.total() * 4 {
        return Err(bad(&format!("expected {} parameters, found {} bytes", layout.total(), data.len())));
    }
    let params = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Network { layout, params })
}

impl LanguageModel {
    /// Writes tokenizer files, `lm.json` and `weights.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::unreadable(dir, e))?;
        self.tokenizer.save(dir)?;
        let manifest = Manifest {
            format: "reqsynth-lm-1".into(),
            config: self.config.clone(),
            dims: self.net.dims(),
            parameters: self.net.params.len(),
        };
        let mpath = dir.join(MANIFEST_FILE);
        fs::write(&mpath, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::unreadable(&mpath, e))?;
        write_weights(&dir.join(WEIGHTS_FILE), &self.net)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let tokenizer = BbpeTokenizer::load(dir)?;
        let mpath = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).map_err(|e| Error::unreadable(&mpath, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.dims.vocab != tokenizer.vocab_size() {
            return Err(Error::malformed(&mpath, "vocabulary size differs from the tokenizer"));
        }
        let net = read_weights(&dir.join(WEIGHTS_FILE), manifest.dims)?;
        if !net.params.iter().all(|v| v.is_finite()) {
            return Err(Error::malformed(dir.join(WEIGHTS_FILE), "non-finite parameter"));
        }
        Ok(LanguageModel::from_parts(manifest.config, tokenizer, net))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let tok = BbpeTokenizer::bytes_only();
        let model = LanguageModel::init(tok, LmConfig::tiny().with_seed(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let back = LanguageModel::load(dir.path()).unwrap();
        assert_eq!(back.net.params, model.net.params);
        assert_eq!(back.config, model.config);
        let a = fs::read(dir.path().join(WEIGHTS_FILE)).unwrap();
        back.save(dir.path()).unwrap();
        assert_eq!(a, fs::read(dir.path().join(WEIGHTS_FILE)).unwrap());
    }

    #[test]
    fn rejects_corrupt_weights() {
        let tok = BbpeTokenizer::bytes_only();
        let model = LanguageModel::init(tok, LmConfig::tiny()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let p = dir.path().join(WEIGHTS_FILE);
        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&p, bytes).unwrap();
        assert!(matches!(LanguageModel::load(dir.path()), Err(Error::MalformedArtifact { .. })));
    }
}
