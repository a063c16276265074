//! On-disk spectrogram cache.
//!
//! One file per (conditioned audio, DSP parameters) pair, named by the
//! SHA-256 of both. Layout, little-endian:
//!
//! ```text
//! b"SFXM" | u32 version | u32 frames | u32 bins | u32 hop | u32 window | f32 × frames·bins
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{mel_spectrogram, minmax_normalize, FeatureConfig, MelSpectrogram};
use crate::error::{Error, Result};
use crate::ingest::AudioClip;

const MAGIC: &[u8; 4] = b"SFXM";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

pub const CACHE_DIR_ENV: &str = "SFX_CACHE_DIR";

#[derive(Debug, Clone)]
pub struct SpectrogramCache {
    dir: PathBuf,
}

impl SpectrogramCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(SpectrogramCache { dir })
    }

    /// Cache rooted at `$SFX_CACHE_DIR`, if set.
    pub fn from_env() -> Result<Option<Self>> {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(d) if !d.is_empty() => Ok(Some(Self::new(PathBuf::from(d))?)),
            _ => Ok(None),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(clip: &AudioClip, config: &FeatureConfig) -> String {
        let mut h = Sha256::new();
        h.update(config.digest_string().as_bytes());
        h.update(clip.rate.to_le_bytes());
        for s in &clip.samples {
            h.update(s.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Normalized spectrogram of `clip`, read from disk when present.
    pub fn get_or_compute(&self, clip: &AudioClip, config: &FeatureConfig) -> Result<MelSpectrogram> {
        let path = self.dir.join(format!("{}.mel", Self::key(clip, config)));
        if let Ok(bytes) = fs::read(&path) {
            match decode(&bytes) {
                Ok(spec) => return Ok(spec),
                Err(e) => log::warn!("discarding cache entry {}: {e}", path.display()),
            }
        }
        let spec = minmax_normalize(&mel_spectrogram(clip, config)?);
        // write-then-rename so concurrent readers never see a partial file
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, encode(&spec)).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(spec)
    }
}

pub fn encode(spec: &MelSpectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + spec.values.len() * 4);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, spec.frames as u32, spec.bins as u32, spec.hop as u32, spec.window as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &spec.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<MelSpectrogram, String> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err("bad header".into());
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    if word(0) != VERSION as usize {
        return Err(format!("unsupported version {}", word(0)));
    }
    let (frames, bins, hop, window) = (word(1), word(2), word(3), word(4));
    let body = &bytes[HEADER_LEN..];
    if body.len() != frames * bins * 4 {
        return Err("truncated body".into());
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(MelSpectrogram {
        values,
        frames,
        bins,
        hop,
        window,
        normalized: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_hit_returns_identical_spectrogram() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SpectrogramCache::new(dir.path()).unwrap();
        let clip = AudioClip {
            samples: (0..6000).map(|i| (i as f32 * 0.02).sin()).collect(),
            rate: 44_100,
            source: PathBuf::new(),
        };
        let cfg = FeatureConfig::default();
        let first = cache.get_or_compute(&clip, &cfg).unwrap();
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        let second = cache.get_or_compute(&clip, &cfg).unwrap();
        assert_eq!(first, second);

        let other = FeatureConfig { n_mels: 64, ..cfg.clone() };
        assert_ne!(SpectrogramCache::key(&clip, &cfg), SpectrogramCache::key(&clip, &other));
    }

    #[test]
    fn truncated_entry_is_rejected() {
        let spec = MelSpectrogram {
            values: vec![0.5; 12],
            frames: 3,
            bins: 4,
            hop: 1024,
            window: 2048,
            normalized: true,
        };
        let bytes = encode(&spec);
        assert_eq!(decode(&bytes).unwrap(), spec);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }
}
