//! Single-file checkpoints, little-endian:
//!
//! ```text
//! b"SFXCKPT\0" | u32 format version | u32 header length | header (JSON)
//! u32 tensor count | per tensor: u32 name length, name, u32 rank, u64 dims…, f32 values…
//! 32-byte SHA-256 of everything above
//! ```
//!
//! The JSON header carries the config digest, the model config, the
//! dataset ids of heads and normalization sets, each head's class list and
//! the training metadata.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Encoder, HeadBank, MlpHead, ModelConfig, ModelState, TrainingMeta};
use crate::error::{Error, Result};
use crate::seed;

const MAGIC: &[u8; 8] = b"SFXCKPT\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct HeadInfo {
    dataset_id: String,
    classes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config_digest: String,
    config: ModelConfig,
    dataset_ids: Vec<String>,
    norm_datasets: Vec<String>,
    heads: Vec<HeadInfo>,
    meta: TrainingMeta,
}

pub fn encode_checkpoint(state: &ModelState) -> Vec<u8> {
    let header = Header {
        config_digest: state.config.digest(),
        config: state.config.clone(),
        dataset_ids: state.dataset_ids(),
        norm_datasets: state.encoder.norm_datasets.clone(),
        heads: state
            .heads
            .heads
            .iter()
            .map(|(id, h)| HeadInfo {
                dataset_id: id.clone(),
                classes: h.classes.clone(),
            })
            .collect(),
        meta: state.meta.clone(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    let tensors = state.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for d in &t.dims {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn save_checkpoint(state: &ModelState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(state)).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint; when `expected` is given its digest must match.
pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<&ModelConfig>) -> Result<ModelState> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, expected)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8], expected: Option<&ModelConfig>) -> Result<ModelState> {
    if bytes.len() < MAGIC.len() + 32 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != trailer {
        return Err(Error::Checkpoint("checksum mismatch (corrupt or truncated file)".into()));
    }
    let mut r = Reader { bytes: body, pos: MAGIC.len() };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let header_len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.config.digest() != header.config_digest {
        return Err(Error::Checkpoint("header digest does not match stored config".into()));
    }
    if let Some(cfg) = expected {
        let want = cfg.digest();
        if want != header.config_digest {
            return Err(Error::DigestMismatch {
                expected: want,
                found: header.config_digest,
            });
        }
    }
    let config = header.config;
    config.validate()?;
    // Shapes come from the config; values are overwritten below.
    let mut rng = seed::rng(0);
    let input = (config.features.patch_frames, config.features.n_mels);
    let encoder = Encoder::new(&config.encoder, input, &header.norm_datasets, &mut rng);
    let mut heads = HeadBank::default();
    for h in header.heads {
        heads.insert(
            &h.dataset_id,
            MlpHead::new(h.classes, config.encoder.embedding_dim(), config.head_hidden, &mut rng),
        );
    }
    let mut state = ModelState {
        config,
        encoder,
        heads,
        meta: header.meta,
    };
    let expected_layout: Vec<(String, Vec<usize>)> =
        state.tensors().into_iter().map(|t| (t.name, t.dims)).collect();
    let count = r.u32()? as usize;
    if count != expected_layout.len() {
        return Err(Error::Checkpoint(format!(
            "{count} tensors stored, config implies {}",
            expected_layout.len()
        )));
    }
    let targets = state.tensors_mut();
    for ((name, dims), target) in expected_layout.iter().zip(targets) {
        let name_len = r.u32()? as usize;
        let stored = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        if stored != name {
            return Err(Error::Checkpoint(format!("expected tensor `{name}`, found `{stored}`")));
        }
        let rank = r.u32()? as usize;
        let stored_dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if &stored_dims != dims {
            return Err(Error::Checkpoint(format!("tensor `{name}`: dims {stored_dims:?}, expected {dims:?}")));
        }
        let n: usize = dims.iter().product();
        let raw = r.take(n * 4)?;
        target.clear();
        target.extend(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())));
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes after tensors".into()));
    }
    Ok(state)
}
