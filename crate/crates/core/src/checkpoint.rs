//! Checkpoint archives.
//!
//! `<name>.bin` holds the parameters:
//!
//! ```text
//! b"JRCK" | version u32 | count u32 | count x entry
//! entry := name_len u32 | name (utf-8) | ndim u32 | dims u32 x ndim | f32 values
//! ```
//!
//! All integers and floats are little-endian. `<name>.json` beside it holds
//! the [`ModelConfig`], the training seed and the epoch it was taken at.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, Param, ParameterSet};

const MAGIC: &[u8; 4] = b"JRCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub seed: u64,
    pub epoch: usize,
    pub val_jrbm: f64,
}

pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

pub fn encode_params(params: &ParameterSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(p.rows as u32).to_le_bytes());
        out.extend_from_slice(&(p.cols as u32).to_le_bytes());
        for &v in &p.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::BadCheckpoint {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(self.fail(format!("truncated at byte {}", self.pos)));
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_params(bytes: &[u8], path: &Path) -> Result<ParameterSet> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != MAGIC {
        return Err(r.fail("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut params = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| r.fail("parameter name is not utf-8"))?
            .to_string();
        let ndim = r.u32()?;
        if ndim != 2 {
            return Err(r.fail(format!("{name}: expected 2 dims, found {ndim}")));
        }
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let raw = r.take(rows * cols * 4)?;
        let data = raw.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))).collect();
        params.push(Param { name, rows, cols, data });
    }
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes"));
    }
    Ok(ParameterSet::from_params(params))
}

/// Writes `path` (parameters) and its JSON sidecar.
pub fn save_checkpoint(path: &Path, params: &ParameterSet, meta: &CheckpointMeta) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode_params(params)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(meta).expect("meta serializes");
    fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let params = decode_params(&bytes, path)?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| Error::Json {
        context: side.display().to_string(),
        source: e,
    })?;
    let model = Model::from_parts(meta.model.clone(), params).map_err(|e| Error::BadCheckpoint {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::tiny_config;

    #[test]
    fn round_trip_is_bit_exact() {
        let model = Model::new(tiny_config(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt/epoch-001.bin");
        let meta = CheckpointMeta {
            model: tiny_config(),
            seed: 3,
            epoch: 1,
            val_jrbm: 0.5,
        };
        save_checkpoint(&path, model.params(), &meta).unwrap();
        let (back, meta_back) = load_checkpoint(&path).unwrap();
        assert_eq!(meta_back, meta);
        for (a, b) in model.params().iter().zip(back.params().iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(
                a.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
        assert_eq!(encode_params(back.params()), fs::read(&path).unwrap());
    }

    #[test]
    fn corrupt_archives_are_rejected() {
        let model = Model::new(tiny_config(), 3).unwrap();
        let bytes = encode_params(model.params());
        let p = Path::new("mem");
        assert!(decode_params(&bytes[..bytes.len() - 1], p).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_params(&bad, p).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_params(&extra, p).is_err());
    }
}
