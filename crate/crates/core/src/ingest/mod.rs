//! Corpus ingestion: manifests, audio conditioning, capped subsets and
//! stratified splits.

mod audio;
mod manifest;
mod split;
mod subset;
pub mod wav;

pub use audio::{condition, load_audio, resample, AudioClip, TARGET_RATE};
pub use manifest::{parse_manifest, write_manifest, Dataset, DatasetCollection, ManifestEntry};
pub use split::{stratified_split, Split, SplitAssignment, SplitRatios, StratKey};
pub use subset::build_subset;
