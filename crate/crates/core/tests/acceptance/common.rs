use std::fmt::Display;
use std::path::PathBuf;

use sfx_core::eval::{extract_prepared, macro_f1, probe_report, zscore, ExtractOptions, StatsSource};
use sfx_core::features::{sliding_patches, FeatureConfig};
use sfx_core::ingest::{Split, SplitRatios};
use sfx_core::model::{patches_to_tensor, FrozenEncoder, ModelState};
use sfx_core::testkit::{synth_corpus, SynthSpec};
use sfx_core::training::{prepare_from_manifest, PreparedDataset, Scenario, TrainConfig};

pub type R<T> = Result<T, String>;

pub fn err<E: Display>(e: E) -> String {
    e.to_string()
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> R<()> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub const FULL_WIDTHS: [usize; 4] = [64, 128, 256, 512];
pub const DESK_WIDTHS: [usize; 4] = [8, 16, 16, 32];

pub fn full_width() -> bool {
    std::env::var("SFX_ACCEPT_FULL_WIDTH").is_ok_and(|v| v == "1")
}

/// Encoder widths for the training criteria.
pub fn e2e_widths() -> Vec<usize> {
    if full_width() {
        FULL_WIDTHS.to_vec()
    } else {
        DESK_WIDTHS.to_vec()
    }
}

pub fn width_note() -> String {
    format!("widths {:?}", e2e_widths())
}

/// Renders `spec` into a fresh temporary directory and loads every dataset.
pub fn synthetic(spec: &SynthSpec, seed: u64) -> R<(tempfile::TempDir, Vec<PreparedDataset>)> {
    let dir = tempfile::tempdir().map_err(err)?;
    let manifest: PathBuf = synth_corpus(spec, dir.path()).map_err(err)?;
    let data = prepare_from_manifest(&manifest, &FeatureConfig::default(), SplitRatios::default(), seed).map_err(err)?;
    Ok((dir, data))
}

/// Joint-mixing CE configuration at the criteria's encoder width.
pub fn e2e_config(datasets: &[&str], seed: u64) -> TrainConfig {
    let mut c = TrainConfig {
        scenario: if datasets.len() == 1 { Scenario::WithinDataset } else { Scenario::CrossDataset },
        datasets: datasets.iter().map(|s| s.to_string()).collect(),
        max_epochs: 30,
        seed,
        ..TrainConfig::default()
    };
    c.model.encoder.widths = e2e_widths();
    c
}

/// Patch-level macro F1 of the dataset's own head on its test split.
pub fn head_macro_f1(state: &ModelState, data: &PreparedDataset) -> R<f64> {
    let frames = state.config.features.patch_frames;
    let mut preds = Vec::new();
    let mut truth = Vec::new();
    for i in data.indices(Split::Test) {
        let patches = sliding_patches(&data.spectrograms[i], frames, 0.5, &data.dataset.entries[i].file_path);
        let x = patches_to_tensor(&patches);
        let emb = state.encoder.forward_eval(&x, data.id()).map_err(err)?;
        let logits = state.head_forward(&emb, data.id()).map_err(err)?;
        for r in 0..logits.rows {
            let row = logits.row(r);
            let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            preds.push(best);
            truth.push(data.label(i));
        }
    }
    macro_f1(&preds, &truth).map_err(err)
}

/// NN-probe macro F1 on the test split, references from the train split,
/// z-scored with training statistics.
pub fn probe_macro_f1(frozen: &FrozenEncoder, data: &PreparedDataset) -> R<f64> {
    let norm = frozen.norm_datasets().first().cloned();
    let opts = ExtractOptions {
        norm_dataset: norm,
        ..ExtractOptions::default()
    };
    let train = extract_prepared(frozen, data, Some(Split::Train), &opts).map_err(err)?;
    let test = extract_prepared(frozen, data, Some(Split::Test), &opts).map_err(err)?;
    let train_z = zscore(&train, StatsSource::FitOn(&train)).map_err(err)?;
    let test_z = zscore(&test, StatsSource::FitOn(&train)).map_err(err)?;
    let report = probe_report(&train_z, &test_z, 1).map_err(err)?;
    Ok(report[0].macro_f1)
}

pub fn find<'a>(data: &'a [PreparedDataset], id: &str) -> &'a PreparedDataset {
    data.iter().find(|d| d.id() == id).expect("dataset present")
}
