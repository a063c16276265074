use std::path::Path;

use rayon::prelude::*;

use super::BatchItem;
use crate::error::{Error, Result};
use crate::features::{file_spectrogram, random_patch, FeatureConfig, MelSpectrogram, SpectrogramCache};
use crate::ingest::{stratified_split, Dataset, DatasetCollection, Split, SplitAssignment, SplitRatios, StratKey};
use crate::model::patches_to_tensor;
use crate::nn::Tensor4;
use crate::seed;

/// A dataset with its split and normalized spectrograms held in memory.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub dataset: Dataset,
    pub split: SplitAssignment,
    /// One per manifest entry, in entry order.
    pub spectrograms: Vec<MelSpectrogram>,
    labels: Vec<usize>,
}

impl PreparedDataset {
    pub fn new(dataset: Dataset, split: SplitAssignment, spectrograms: Vec<MelSpectrogram>) -> Result<Self> {
        if spectrograms.len() != dataset.len() || split.assignments.len() != dataset.len() {
            return Err(Error::InvalidInput(format!(
                "dataset `{}`: {} entries, {} spectrograms, {} split assignments",
                dataset.id,
                dataset.len(),
                spectrograms.len(),
                split.assignments.len()
            )));
        }
        let labels = dataset.labels();
        Ok(PreparedDataset {
            dataset,
            split,
            spectrograms,
            labels,
        })
    }

    /// Loads every entry's spectrogram (in parallel).
    pub fn load(
        dataset: Dataset,
        split: SplitAssignment,
        features: &FeatureConfig,
        cache: Option<&SpectrogramCache>,
    ) -> Result<Self> {
        let spectrograms = dataset
            .entries
            .par_iter()
            .map(|e| file_spectrogram(&e.resolved_path, features, cache))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dataset, split, spectrograms)
    }

    pub fn id(&self) -> &str {
        &self.dataset.id
    }

    pub fn label(&self, entry: usize) -> usize {
        self.labels[entry]
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.split.indices(split)
    }

    /// Random crops for `items`, each seeded by its own patch seed.
    pub fn patch_batch(&self, items: &[BatchItem], frames: usize) -> (Tensor4<f32>, Vec<usize>) {
        let patches: Vec<_> = items
            .par_iter()
            .map(|it| {
                let mut rng = seed::rng(it.patch_seed);
                let file = &self.dataset.entries[it.entry].file_path;
                random_patch(&self.spectrograms[it.entry], frames, file, &mut rng)
            })
            .collect();
        let labels = items.iter().map(|it| self.label(it.entry)).collect();
        (patches_to_tensor(&patches), labels)
    }
}

/// Splits and loads the named datasets of a collection.
pub fn prepare_datasets(
    collection: &DatasetCollection,
    names: &[String],
    features: &FeatureConfig,
    ratios: SplitRatios,
    seed: u64,
    cache: Option<&SpectrogramCache>,
) -> Result<Vec<PreparedDataset>> {
    names
        .iter()
        .map(|name| {
            let ds = collection.get(name).ok_or_else(|| Error::UnknownDataset(name.clone()))?;
            let split = stratified_split(ds, ratios, StratKey::FineLabel, seed)?;
            PreparedDataset::load(ds.clone(), split, features, cache)
        })
        .collect()
}

/// Convenience for a single manifest on disk.
pub fn prepare_from_manifest(
    manifest: &Path,
    features: &FeatureConfig,
    ratios: SplitRatios,
    seed: u64,
) -> Result<Vec<PreparedDataset>> {
    let collection = crate::ingest::parse_manifest(manifest)?;
    let cache = SpectrogramCache::from_env()?;
    prepare_datasets(&collection, &collection.ids(), features, ratios, seed, cache.as_ref())
}
