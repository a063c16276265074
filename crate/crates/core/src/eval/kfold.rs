use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{extract_prepared, probe_report, zscore, EmbeddingTable, EvalReport, ExtractOptions, FoldResult, StatsSource};
use crate::error::{Error, Result};
use crate::ingest::{stratified_split, Dataset, Split, SplitRatios, StratKey};
use crate::model::{freeze_encoder, FrozenEncoder};
use crate::training::{train, PreparedDataset, Scenario, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KfoldMode {
    /// Fit only the probe on the other folds, with a fixed encoder.
    ProbeOnly,
    /// Train a fresh encoder on the other folds for every fold.
    Retrain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KfoldOptions {
    pub k: usize,
    pub probe_k: usize,
    pub standardize: bool,
    pub extract: ExtractOptions,
}

impl Default for KfoldOptions {
    fn default() -> Self {
        KfoldOptions {
            k: 5,
            probe_k: 1,
            standardize: true,
            extract: ExtractOptions::default(),
        }
    }
}

/// Fold of every entry; each must lie in `1..=k`.
pub fn entry_folds(dataset: &Dataset, k: usize) -> Result<Vec<u32>> {
    dataset
        .entries
        .iter()
        .map(|e| match e.fold {
            None => Err(Error::InvalidInput(format!("entry `{}` has no fold", e.file_path))),
            Some(f) if f == 0 || f as usize > k => {
                Err(Error::InvalidInput(format!("entry `{}`: fold {f} outside 1..={k}", e.file_path)))
            }
            Some(f) => Ok(f),
        })
        .collect()
}

fn fold_result(train: &EmbeddingTable, test: &EmbeddingTable, fold: u32, opts: &KfoldOptions) -> Result<FoldResult> {
    let (train, test) = if opts.standardize {
        (zscore(train, StatsSource::FitOn(train))?, zscore(test, StatsSource::FitOn(train))?)
    } else {
        (train.clone(), test.clone())
    };
    let datasets = probe_report(&train, &test, opts.probe_k)?;
    let macro_f1 = datasets.iter().map(|d| d.macro_f1).sum::<f64>() / datasets.len() as f64;
    Ok(FoldResult { fold, datasets, macro_f1 })
}

fn finish(folds: Vec<FoldResult>, digest: Option<String>) -> EvalReport {
    let mean = folds.iter().map(|f| f.macro_f1).sum::<f64>() / folds.len() as f64;
    EvalReport {
        config_digest: digest,
        datasets: Vec::new(),
        folds,
        mean_fold_macro_f1: Some(mean),
        skipped_files: 0,
    }
}

/// Probe-only k-fold over an existing table; `fold_of` maps file ids to folds.
pub fn kfold_probe(table: &EmbeddingTable, fold_of: &BTreeMap<String, u32>, opts: &KfoldOptions) -> Result<EvalReport> {
    if let Some(r) = table.rows.iter().find(|r| !fold_of.contains_key(&r.file_id)) {
        return Err(Error::InvalidInput(format!("file `{}` has no fold", r.file_id)));
    }
    let mut folds = Vec::new();
    for f in 1..=opts.k as u32 {
        let test = table.filter(|r| fold_of[&r.file_id] == f);
        let train = table.filter(|r| fold_of[&r.file_id] != f);
        if test.is_empty() || train.is_empty() {
            return Err(Error::InvalidInput(format!("fold {f} leaves an empty train or test set")));
        }
        folds.push(fold_result(&train, &test, f, opts)?);
    }
    Ok(finish(folds, None))
}

/// k-fold evaluation of a prepared dataset whose entries carry folds.
///
/// `ProbeOnly` embeds everything once with `frozen`. `Retrain` trains a
/// within-dataset model on the other folds (split 90/10 into train and
/// validation) and probes its frozen encoder.
pub fn kfold_eval(
    data: &PreparedDataset,
    mode: KfoldMode,
    frozen: Option<&FrozenEncoder>,
    config: &TrainConfig,
    opts: &KfoldOptions,
) -> Result<EvalReport> {
    let folds = entry_folds(&data.dataset, opts.k)?;
    match mode {
        KfoldMode::ProbeOnly => {
            let frozen = frozen.ok_or_else(|| Error::InvalidInput("probe-only k-fold needs an encoder".into()))?;
            let table = extract_prepared(frozen, data, None, &opts.extract)?;
            let fold_of: BTreeMap<String, u32> = data
                .dataset
                .entries
                .iter()
                .zip(&folds)
                .map(|(e, f)| (e.file_path.clone(), *f))
                .collect();
            let mut report = kfold_probe(&table, &fold_of, opts)?;
            report.config_digest = Some(frozen.config().digest());
            Ok(report)
        }
        KfoldMode::Retrain => {
            let mut results = Vec::new();
            let mut fold_config = config.clone();
            fold_config.scenario = Scenario::WithinDataset;
            fold_config.datasets = vec![data.id().to_string()];
            fold_config.transfer_targets.clear();
            for f in 1..=opts.k as u32 {
                let rest: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != f).collect();
                let rest_ds = data.dataset.with_entries(rest.iter().map(|&i| data.dataset.entries[i].clone()).collect());
                let ratios = SplitRatios {
                    train: 0.9,
                    val: 0.1,
                    test: 0.0,
                };
                let inner = stratified_split(&rest_ds, ratios, StratKey::FineLabel, config.seed)?;
                let mut split = data.split.clone();
                for (i, s) in split.assignments.iter_mut().enumerate() {
                    *s = Split::Test;
                    if let Ok(pos) = rest.binary_search(&i) {
                        *s = inner.assignments[pos];
                    }
                }
                let fold_data = PreparedDataset::new(data.dataset.clone(), split, data.spectrograms.clone())?;
                let (state, _) = train(&fold_config, std::slice::from_ref(&fold_data), None)?;
                let frozen = freeze_encoder(&state);
                let test = extract_prepared(&frozen, &fold_data, Some(Split::Test), &opts.extract)?;
                let train_rows = extract_prepared(&frozen, &fold_data, None, &opts.extract)?;
                let test_files: std::collections::BTreeSet<&str> = test.rows.iter().map(|r| r.file_id.as_str()).collect();
                let train_rows = train_rows.filter(|r| !test_files.contains(r.file_id.as_str()));
                log::info!("fold {f}: trained, probing {} test rows", test.len());
                results.push(fold_result(&train_rows, &test, f, opts)?);
            }
            Ok(finish(results, Some(config.model_config().digest())))
        }
    }
}
