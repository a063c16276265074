use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;

use sfx_core::eval::{kfold_eval, KfoldMode, KfoldOptions};
use sfx_core::features::{minmax_normalize, FeatureConfig, SpectrogramCache};
use sfx_core::ingest::{parse_manifest, stratified_split, write_manifest, Dataset, ManifestEntry, SplitRatios, StratKey};
use sfx_core::model::{encode_checkpoint, freeze_encoder, load_checkpoint, save_checkpoint, ModelConfig, ModelState, ParamScope};
use sfx_core::testkit::{SynthDataset, SynthSpec};
use sfx_core::training::{calibrate_fdr, epoch_plan, fdr_weights, train, FdrConfig, PreparedDataset};

use crate::common::{e2e_config, e2e_widths, ensure, err, find, head_macro_f1, probe_macro_f1, synthetic, width_note, R};

const TRAIN_IDS: [&str; 3] = ["D0", "D1", "D2"];
const HELD_OUT: &str = "D3";

/// Four datasets of 4 classes × 60 items; D3 is never trained on.
fn four_dataset_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        datasets: (0..4).map(|v| SynthDataset::preset(&format!("D{v}"), 4, 60, v)).collect(),
        seed,
    }
}

struct CrossRun {
    seed: u64,
    data: Vec<PreparedDataset>,
    state: ModelState,
}

/// The seed-0 cross-dataset run, shared by criteria 7 and 8.
static SEED0: Mutex<Option<CrossRun>> = Mutex::new(None);

fn cross_run(seed: u64) -> R<CrossRun> {
    let (_dir, data) = synthetic(&four_dataset_spec(seed), seed)?;
    let (state, run) = train(&e2e_config(&TRAIN_IDS, seed), &data, None).map_err(err)?;
    log_run(&format!("cross seed {seed}"), run.best_epoch, run.len());
    Ok(CrossRun { seed, data, state })
}

fn log_run(what: &str, best: Option<usize>, epochs: usize) {
    eprintln!("  {what}: best epoch {best:?} of {epochs}");
}

pub fn synthetic_training() -> R<String> {
    let run = cross_run(0)?;
    let epochs = run.state.meta.history.len();
    let mut scores = Vec::new();
    for id in TRAIN_IDS {
        scores.push((id, head_macro_f1(&run.state, find(&run.data, id))?));
    }
    *SEED0.lock().unwrap() = Some(run);
    let detail = format!(
        "{}, {epochs} epochs, test patch macro F1 {}",
        width_note(),
        scores.iter().map(|(id, f)| format!("{id} {f:.3}")).collect::<Vec<_>>().join(", ")
    );
    ensure(epochs <= 30, || format!("{epochs} epochs"))?;
    for (id, f) in &scores {
        ensure(*f >= 0.90, || format!("{id}: macro F1 {f:.3} < 0.90; {detail}"))?;
    }
    Ok(detail)
}

pub fn cross_dataset_benefit() -> R<String> {
    let mut cross_scores = Vec::new();
    let mut within_scores = Vec::new();
    for seed in 0..3u64 {
        let cached = SEED0.lock().unwrap().take().filter(|r| r.seed == seed);
        let run = match cached {
            Some(r) => r,
            None => cross_run(seed)?,
        };
        let held = find(&run.data, HELD_OUT);
        cross_scores.push(probe_macro_f1(&freeze_encoder(&run.state), held)?);
        let mut within = Vec::new();
        for id in TRAIN_IDS {
            let (state, r) = train(&e2e_config(&[id], seed), &run.data, None).map_err(err)?;
            log_run(&format!("within {id} seed {seed}"), r.best_epoch, r.len());
            within.push(probe_macro_f1(&freeze_encoder(&state), held)?);
        }
        within_scores.push(within.iter().sum::<f64>() / within.len() as f64);
        eprintln!("  seed {seed}: cross {:.3}, within {within:.3?}", cross_scores[seed as usize]);
    }
    let cross = cross_scores.iter().sum::<f64>() / 3.0;
    let within = within_scores.iter().sum::<f64>() / 3.0;
    let detail = format!("{}, held-out probe macro F1: cross {cross:.3} vs within mean {within:.3}", width_note());
    ensure(cross >= within, || detail.clone())?;
    Ok(detail)
}

fn offset_copy(base: &PreparedDataset, id: &str, offset: f32) -> R<PreparedDataset> {
    let entries: Vec<ManifestEntry> = base
        .dataset
        .entries
        .iter()
        .map(|e| ManifestEntry {
            dataset_id: id.to_string(),
            ..e.clone()
        })
        .collect();
    let spectrograms = base
        .spectrograms
        .iter()
        .map(|s| {
            let mut n = minmax_normalize(s);
            n.values.iter_mut().for_each(|v| *v += offset);
            n
        })
        .collect();
    PreparedDataset::new(Dataset::from_entries(id, entries), base.split.clone(), spectrograms).map_err(err)
}

pub fn dataset_aware_norm() -> R<String> {
    let spec = SynthSpec {
        datasets: vec![SynthDataset::preset("A", 4, 12, 0)],
        seed: 9,
    };
    let (_dir, mut data) = synthetic(&spec, 9)?;
    let b = offset_copy(&data[0], "B", 0.3)?;
    data.push(b);
    let mut config = e2e_config(&["A", "B"], 9);
    config.dataset_aware_norm = true;
    config.batch_size = 8;
    config.classes_per_batch = 2;
    config.per_class = 4;
    let per_epoch: usize = epoch_plan(&[&data[0], &data[1]], &config, 1).map_err(err)?.len();
    config.max_epochs = 50 / per_epoch;
    config.patience = config.max_epochs;
    let (state, run) = train(&config, &data, None).map_err(err)?;
    let batches = run.best_epoch.unwrap_or(0) * per_epoch;
    ensure(batches <= 50, || format!("{batches} batches"))?;

    let enc = &state.encoder;
    let site = &enc.blocks[0].norms[0];
    ensure(site.len() == 2, || format!("{} normalization sets", site.len()))?;
    let (a, b) = (enc.norm_set("A").map_err(err)?, enc.norm_set("B").map_err(err)?);
    let gap = site[a]
        .running_mean
        .iter()
        .zip(&site[b].running_mean)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f32, f32::max);
    let shared = enc.conv_param_count() + 2 * enc.norm_param_count_per_set();
    ensure(state.param_count(ParamScope::Encoder) == shared, || "convolutions are not a single shared set".into())?;
    ensure(enc.blocks.iter().all(|bl| bl.norms.iter().all(|s| s.len() == 2)), || "uneven normalization sets".into())?;

    let mut plain = ModelConfig::default();
    plain.encoder.widths = e2e_widths();
    let off = ModelState::new(plain, &[("A".into(), vec!["x".into()]), ("B".into(), vec!["y".into()])], 0).map_err(err)?;
    let stat_sets = off.tensors().iter().filter(|t| t.name.ends_with("running_mean")).count();
    ensure(off.encoder.num_norm_sets() == 1 && stat_sets == 2 * off.encoder.blocks.len(), || {
        format!("flag off: {} sets", off.encoder.num_norm_sets())
    })?;
    ensure(gap > 0.1, || format!("running means differ by at most {gap:.4} after {batches} batches"))?;
    Ok(format!("{}, first-site running means differ by up to {gap:.3} after {batches} batches", width_note()))
}

pub fn fdr_direction() -> R<String> {
    let mut noisy = SynthDataset::preset("H", 4, 60, 1);
    noisy.label_noise_rate = 0.2;
    let spec = SynthSpec {
        datasets: vec![SynthDataset::preset("E", 4, 60, 0), noisy],
        seed: 21,
    };
    let (_dir, data) = synthetic(&spec, 21)?;
    let mut config = e2e_config(&["E", "H"], 21);
    config.max_epochs = 15;
    config.patience = 15;
    config.fdr = Some(FdrConfig::default());
    let (n_e, run) = calibrate_fdr(&config, &data).map_err(err)?;
    let f1 = |id| run.train_f1_history(id).iter().map(|f| format!("{f:.2}")).collect::<Vec<_>>().join(" ");
    eprintln!("  train F1 E: {}\n  train F1 H: {}", f1("E"), f1("H"));
    let w = fdr_weights(&n_e, config.fdr.as_ref().unwrap().beta).map_err(err)?;
    let detail = format!("{}, n_e {:?}, alpha {:?}", width_note(), n_e, w.alpha);
    ensure(n_e["H"] > n_e["E"], || detail.clone())?;
    ensure(w.alpha["H"] > 1.0 && 1.0 > w.alpha["E"], || detail.clone())?;
    Ok(detail)
}

pub fn checkpoint_determinism() -> R<String> {
    let spec = SynthSpec {
        datasets: vec![SynthDataset::preset("A", 4, 20, 0), SynthDataset::preset("B", 4, 20, 1)],
        seed: 5,
    };
    let (_dir, data) = synthetic(&spec, 5)?;
    let mut config = e2e_config(&["A", "B"], 5);
    config.batch_size = 8;
    config.classes_per_batch = 2;
    config.per_class = 4;
    config.max_epochs = 3;
    let refs: Vec<&PreparedDataset> = data.iter().collect();
    for epoch in 1..=3 {
        let p = epoch_plan(&refs, &config, epoch).map_err(err)?;
        ensure(p == epoch_plan(&refs, &config, epoch).map_err(err)?, || format!("epoch {epoch} plans differ"))?;
    }
    let (s1, r1) = train(&config, &data, None).map_err(err)?;
    let (s2, r2) = train(&config, &data, None).map_err(err)?;
    let last = |r: &sfx_core::training::RunRecord| -> BTreeMap<String, f64> {
        r.epochs.last().unwrap().datasets.iter().map(|(k, v)| (k.clone(), v.val_loss)).collect()
    };
    let (l1, l2) = (last(&r1), last(&r2));
    for (k, v) in &l1 {
        ensure((v - l2[k]).abs() <= 1e-5, || format!("{k}: val loss {v} vs {}", l2[k]))?;
    }

    let dir = tempfile::tempdir().map_err(err)?;
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&s1, &path).map_err(err)?;
    let loaded = load_checkpoint(&path, Some(&s1.config)).map_err(err)?;
    let bytes = fs::read(&path).map_err(err)?;
    ensure(encode_checkpoint(&loaded) == bytes, || "re-encoded checkpoint differs".into())?;
    ensure(loaded == s1, || "loaded state differs".into())?;
    ensure(encode_checkpoint(&s2) == bytes, || "second run's weights differ".into())?;
    Ok(format!("{}, final val losses {l1:.5?}", width_note()))
}

fn esc50_manifest(root: &PathBuf, out: &std::path::Path) -> R<PathBuf> {
    let meta = fs::read_to_string(root.join("meta/esc50.csv")).map_err(err)?;
    let mut lines = meta.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or_else(|| format!("esc50.csv lacks `{name}`"));
    let (file, fold, category) = (col("filename")?, col("fold")?, col("category")?);
    let mut entries = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let path = root.join("audio").join(f[file]);
        let mut e = ManifestEntry::new("esc50", path.to_str().unwrap(), f[category]);
        e.fold = Some(f[fold].parse().map_err(err)?);
        entries.push(e);
    }
    let manifest = out.join("esc50.jsonl");
    write_manifest(&manifest, &entries).map_err(err)?;
    Ok(manifest)
}

pub fn esc50_kfold() -> R<String> {
    let Ok(root) = std::env::var("SFX_ESC50_DIR") else {
        return Ok("SKIP (set SFX_ESC50_DIR to an ESC-50 checkout)".into());
    };
    let dir = tempfile::tempdir().map_err(err)?;
    let manifest = esc50_manifest(&PathBuf::from(root), dir.path())?;
    let ds = parse_manifest(&manifest).map_err(err)?.datasets.remove(0);
    let checkpoint = std::env::var("SFX_ESC50_CHECKPOINT").ok();
    let state = checkpoint.as_ref().map(|p| load_checkpoint(p, None)).transpose().map_err(err)?;
    let frozen = state.as_ref().map(freeze_encoder);
    let config = e2e_config(&["esc50"], 0);
    let features = frozen.as_ref().map_or(FeatureConfig::default(), |f| f.config().features.clone());
    let split = stratified_split(&ds, SplitRatios::default(), StratKey::FineLabel, 0).map_err(err)?;
    let cache = SpectrogramCache::from_env().map_err(err)?;
    let data = PreparedDataset::load(ds, split, &features, cache.as_ref()).map_err(err)?;
    let mode = if frozen.is_some() { KfoldMode::ProbeOnly } else { KfoldMode::Retrain };
    let report = kfold_eval(&data, mode, frozen.as_ref(), &config, &KfoldOptions::default()).map_err(err)?;
    ensure(report.folds.len() == 5, || format!("{} folds", report.folds.len()))?;
    let mean = report.mean_fold_macro_f1.ok_or("no mean")?;
    Ok(format!(
        "{mode:?}, fold macro F1 {:?}, mean {mean:.3}",
        report.folds.iter().map(|f| format!("{:.3}", f.macro_f1)).collect::<Vec<_>>()
    ))
}
