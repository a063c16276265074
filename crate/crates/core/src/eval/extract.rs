use std::path::PathBuf;

use super::{EmbeddingRow, EmbeddingTable};
use crate::error::Result;
use crate::features::{file_spectrogram, sliding_patches, FeatureConfig, MelPatch, MelSpectrogram, SpectrogramCache};
use crate::ingest::{ManifestEntry, Split};
use crate::model::{patches_to_tensor, FrozenEncoder};
use crate::training::PreparedDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractOptions {
    /// Fractional overlap of consecutive patches.
    pub overlap: f64,
    /// One row per file (mean of its patch embeddings) instead of one per patch.
    pub file_level: bool,
    /// Normalization set to use instead of each entry's own dataset.
    pub norm_dataset: Option<String>,
    pub batch_size: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            overlap: 0.5,
            file_level: false,
            norm_dataset: None,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub table: EmbeddingTable,
    /// Files that could not be decoded, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

fn embed_patches(
    frozen: &FrozenEncoder,
    entry: &ManifestEntry,
    patches: &[MelPatch],
    opts: &ExtractOptions,
    table: &mut EmbeddingTable,
) -> Result<()> {
    let norm = opts.norm_dataset.as_deref().unwrap_or(&entry.dataset_id);
    let mut vectors = Vec::with_capacity(patches.len());
    for chunk in patches.chunks(opts.batch_size.max(1)) {
        let emb = frozen.embed(&patches_to_tensor(chunk), norm)?;
        vectors.extend((0..emb.rows).map(|i| emb.row(i).to_vec()));
    }
    let row = |patch_id: String, vector: Vec<f32>| EmbeddingRow {
        patch_id,
        file_id: entry.file_path.clone(),
        dataset_id: entry.dataset_id.clone(),
        label: entry.class_label.clone(),
        vector,
    };
    if opts.file_level {
        let mut mean = vec![0.0f64; frozen.embedding_dim()];
        for v in &vectors {
            mean.iter_mut().zip(v).for_each(|(m, x)| *m += *x as f64);
        }
        let n = vectors.len() as f64;
        table.push(row(entry.file_path.clone(), mean.into_iter().map(|m| (m / n) as f32).collect()))
    } else {
        for (p, v) in patches.iter().zip(vectors) {
            table.push(row(format!("{}@{}", entry.file_path, p.origin.start_frame), v))?;
        }
        Ok(())
    }
}

/// Embeds already computed spectrograms.
pub fn extract_spectrograms<'a>(
    frozen: &FrozenEncoder,
    items: impl IntoIterator<Item = (&'a ManifestEntry, &'a MelSpectrogram)>,
    opts: &ExtractOptions,
) -> Result<EmbeddingTable> {
    let frames = frozen.config().features.patch_frames;
    let mut table = EmbeddingTable::new(frozen.embedding_dim());
    for (entry, spec) in items {
        let patches = sliding_patches(spec, frames, opts.overlap, &entry.file_path);
        embed_patches(frozen, entry, &patches, opts, &mut table)?;
    }
    Ok(table)
}

/// Embeds the entries of one split of a prepared dataset (all entries when `split` is `None`).
pub fn extract_prepared(
    frozen: &FrozenEncoder,
    data: &PreparedDataset,
    split: Option<Split>,
    opts: &ExtractOptions,
) -> Result<EmbeddingTable> {
    let items = data
        .dataset
        .entries
        .iter()
        .zip(&data.spectrograms)
        .zip(&data.split.assignments)
        .filter(|(_, s)| split.map_or(true, |want| **s == want))
        .map(|(pair, _)| pair);
    extract_spectrograms(frozen, items, opts)
}

/// Loads and embeds audio files; undecodable files are skipped with a warning.
pub fn extract_embeddings(
    frozen: &FrozenEncoder,
    entries: &[ManifestEntry],
    features: &FeatureConfig,
    cache: Option<&SpectrogramCache>,
    opts: &ExtractOptions,
) -> Result<Extraction> {
    let mut table = EmbeddingTable::new(frozen.embedding_dim());
    let mut skipped = Vec::new();
    for entry in entries {
        let spec = match file_spectrogram(&entry.resolved_path, features, cache) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("skipping {}: {e}", entry.resolved_path.display());
                skipped.push((entry.resolved_path.clone(), e.to_string()));
                continue;
            }
        };
        let patches = sliding_patches(&spec, features.patch_frames, opts.overlap, &entry.file_path);
        embed_patches(frozen, entry, &patches, opts, &mut table)?;
    }
    Ok(Extraction { table, skipped })
}
