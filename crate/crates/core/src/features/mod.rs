//! Log-mel front end and patch extraction.

mod cache;
mod mel;
mod patch;

use std::path::Path;

pub use cache::SpectrogramCache;
pub use mel::{mel_filterbank, mel_spectrogram, minmax_normalize, FeatureConfig, MelSpectrogram};
pub use patch::{random_patch, sliding_patches, MelPatch, PatchOrigin};

use crate::error::Result;
use crate::ingest::load_audio;

/// Loads a file and returns its per-file min-max normalized log-mel spectrogram.
pub fn file_spectrogram(
    path: &Path,
    config: &FeatureConfig,
    cache: Option<&SpectrogramCache>,
) -> Result<MelSpectrogram> {
    let clip = load_audio(path, config.sample_rate)?;
    match cache {
        Some(c) => c.get_or_compute(&clip, config),
        None => Ok(minmax_normalize(&mel_spectrogram(&clip, config)?)),
    }
}
