use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sfx_core::eval::{
    extract_embeddings, fit_standardization, import_external_embeddings, kfold_eval, probe_report, zscore, EmbeddingTable,
    EvalReport, ExtractOptions, KfoldMode, KfoldOptions, StatsSource, TableEncoding,
};
use sfx_core::features::SpectrogramCache;
use sfx_core::ingest::{parse_manifest, stratified_split, DatasetCollection, Split, SplitRatios, StratKey};
use sfx_core::model::{freeze_encoder, load_checkpoint, save_checkpoint};
use sfx_core::testkit::{synth_corpus, SynthSpec};
use sfx_core::training::{prepare_datasets, train as train_model, transfer_head_finetune, PreparedDataset, Scenario, TrainConfig};

use crate::{ExtractArgs, ProbeArgs, SynthArgs, TrainArgs};

fn load_manifests(paths: &[PathBuf]) -> Result<DatasetCollection> {
    let mut all = DatasetCollection::default();
    for p in paths {
        let c = parse_manifest(p).with_context(|| format!("reading manifest {}", p.display()))?;
        all.merge(c)?;
    }
    Ok(all)
}

/// Creates `dir`, refusing one that already holds files.
fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        bail!("{} is not empty; a run directory holds exactly one run", dir.display());
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_train_config(path: &Path, seed: Option<u64>) -> Result<TrainConfig> {
    let mut config = TrainConfig::load(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = SynthSpec::load(&a.config)?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let manifest = synth_corpus(&spec, &a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let config = load_train_config(&a.config, a.seed)?;
    let collection = load_manifests(&a.manifest)?;
    fresh_dir(&a.out)?;
    let copy = a.out.join("config.toml");
    fs::write(&copy, config.to_toml_string()).with_context(|| format!("writing {}", copy.display()))?;
    let mut perms = fs::metadata(&copy)?.permissions();
    perms.set_readonly(true);
    fs::set_permissions(&copy, perms)?;

    let mut names = config.datasets.clone();
    names.extend(config.transfer_targets.iter().cloned());
    let cache = SpectrogramCache::from_env()?;
    let data = prepare_datasets(&collection, &names, &config.model.features, config.split, config.seed, cache.as_ref())?;
    let (mut state, run) = train_model(&config, &data, Some(&a.out))?;
    log::info!("best epoch {:?} of {}", run.best_epoch, run.len());

    if config.scenario == Scenario::Transfer {
        let frozen = freeze_encoder(&state);
        for target in &config.transfer_targets {
            let ds = data.iter().find(|d| d.id() == target).expect("prepared above");
            let (head, head_run) = transfer_head_finetune(&frozen, ds, &config, None)?;
            head_run.write_jsonl(a.out.join(format!("history.{target}.jsonl")))?;
            state.heads.insert(target, head);
        }
        save_checkpoint(&state, a.out.join("best.ckpt"))?;
    }
    println!("{}", a.out.join("best.ckpt").display());
    Ok(())
}

pub fn extract(a: ExtractArgs) -> Result<()> {
    let state = load_checkpoint(&a.checkpoint, None).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let frozen = freeze_encoder(&state);
    let (ratios, mut seed) = match &a.config {
        Some(p) => {
            let c = TrainConfig::load(p)?;
            (c.split, c.seed)
        }
        None => (SplitRatios::default(), 0),
    };
    if let Some(s) = a.seed {
        seed = s;
    }
    let collection = load_manifests(&a.manifest)?;
    let mut by_split = [Vec::new(), Vec::new(), Vec::new()];
    for ds in &collection.datasets {
        let split = stratified_split(ds, ratios, StratKey::FineLabel, seed)?;
        for (e, s) in ds.entries.iter().zip(&split.assignments) {
            by_split[split_index(*s)].push(e.clone());
        }
    }
    let features = frozen.config().features.clone();
    let cache = SpectrogramCache::from_env()?;
    let opts = ExtractOptions {
        file_level: a.file_level,
        ..ExtractOptions::default()
    };
    let mut tables = Vec::new();
    for entries in &by_split {
        let ex = extract_embeddings(&frozen, entries, &features, cache.as_ref(), &opts)?;
        for (path, reason) in &ex.skipped {
            log::warn!("skipped {}: {reason}", path.display());
        }
        let mut table = ex.table;
        table.metadata.insert("skipped_files".into(), ex.skipped.len().to_string());
        tables.push(table);
    }
    if !a.no_standardize {
        let stats = fit_standardization(&tables[0]).context("fitting standardization on the training rows")?;
        tables = tables
            .iter()
            .map(|t| zscore(t, StatsSource::Provided(&stats)))
            .collect::<sfx_core::Result<_>>()?;
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let encoding = if a.text { TableEncoding::Text } else { TableEncoding::Binary };
    for (name, mut table) in ["train", "val", "test"].into_iter().zip(tables) {
        table.metadata.insert("split".into(), name.into());
        table.metadata.insert("config_digest".into(), frozen.config().digest());
        table.metadata.insert("checkpoint".into(), a.checkpoint.display().to_string());
        let path = a.out.join(format!("{name}.emb"));
        table.write(&path, encoding)?;
        log::info!("{}: {} rows", path.display(), table.len());
    }
    Ok(())
}

fn split_index(s: Split) -> usize {
    match s {
        Split::Train => 0,
        Split::Val => 1,
        Split::Test => 2,
    }
}

pub fn probe(a: ProbeArgs) -> Result<()> {
    let report = match a.kfold {
        Some(k) => kfold(&a, k)?,
        None => {
            let (Some(train), Some(test)) = (&a.train, &a.test) else {
                bail!("--train and --test tables are required without --kfold");
            };
            let mut train = import_external_embeddings(train, a.window_frames)?;
            let mut test = import_external_embeddings(test, a.window_frames)?;
            if !a.no_standardize && train.standardization.is_none() {
                let stats = fit_standardization(&train)?;
                train = zscore(&train, StatsSource::Provided(&stats))?;
                test = zscore(&test, StatsSource::Provided(&stats))?;
            }
            table_report(&train, &test, a.k)?
        }
    };
    report.write(&a.out)?;
    for d in &report.datasets {
        println!("{}\tmacro_f1={:.4}", d.dataset_id, d.macro_f1);
    }
    if let Some(m) = report.mean_fold_macro_f1 {
        println!("mean fold macro_f1={m:.4}");
    }
    Ok(())
}

fn table_report(train: &EmbeddingTable, test: &EmbeddingTable, k: usize) -> Result<EvalReport> {
    let skipped = |t: &EmbeddingTable| t.metadata.get("skipped_files").and_then(|s| s.parse::<usize>().ok()).unwrap_or(0);
    Ok(EvalReport {
        config_digest: test.metadata.get("config_digest").cloned(),
        datasets: probe_report(train, test, k)?,
        skipped_files: skipped(train) + skipped(test),
        ..EvalReport::default()
    })
}

fn kfold(a: &ProbeArgs, k: usize) -> Result<EvalReport> {
    let config = match &a.config {
        Some(p) => load_train_config(p, a.seed)?,
        None => {
            let mut c = TrainConfig::default();
            c.seed = a.seed.unwrap_or(0);
            c
        }
    };
    let collection = load_manifests(&a.manifest)?;
    let ds = match &a.dataset {
        Some(id) => collection.get(id).with_context(|| format!("dataset `{id}` not in the manifests"))?,
        None => match collection.datasets.as_slice() {
            [one] => one,
            _ => bail!("the manifests hold {} datasets; pick one with --dataset", collection.datasets.len()),
        },
    };
    let state = a
        .checkpoint
        .as_ref()
        .map(|p| load_checkpoint(p, None).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let frozen = state.as_ref().map(freeze_encoder);
    let (mode, features) = match &frozen {
        Some(f) => (KfoldMode::ProbeOnly, f.config().features.clone()),
        None if a.config.is_some() => (KfoldMode::Retrain, config.model.features.clone()),
        None => bail!("--kfold needs --checkpoint (probe only) or --config (retrain per fold)"),
    };
    let split = stratified_split(ds, config.split, StratKey::FineLabel, config.seed)?;
    let cache = SpectrogramCache::from_env()?;
    let data = PreparedDataset::load(ds.clone(), split, &features, cache.as_ref())?;
    let opts = KfoldOptions {
        k,
        probe_k: a.k,
        standardize: !a.no_standardize,
        ..KfoldOptions::default()
    };
    Ok(kfold_eval(&data, mode, frozen.as_ref(), &config, &opts)?)
}
