use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{dbi, f1_scores, nn_probe, EmbeddingTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub dataset_id: String,
    pub macro_f1: f64,
    /// Absent when the test rows hold a single class.
    pub dbi: Option<f64>,
    pub per_class_f1: BTreeMap<String, f64>,
    pub train_rows: usize,
    pub test_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: u32,
    pub datasets: Vec<DatasetReport>,
    /// Mean macro F1 over the fold's datasets.
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_digest: Option<String>,
    pub datasets: Vec<DatasetReport>,
    pub folds: Vec<FoldResult>,
    pub mean_fold_macro_f1: Option<f64>,
    /// Files that could not be decoded during extraction.
    pub skipped_files: usize,
}

/// Probes `test` against `train` separately for every dataset of `test`.
pub fn probe_report(train: &EmbeddingTable, test: &EmbeddingTable, k: usize) -> Result<Vec<DatasetReport>> {
    let mut out = Vec::new();
    for id in test.dataset_ids() {
        let tr = train.filter(|r| r.dataset_id == id);
        if tr.is_empty() {
            return Err(Error::InvalidInput(format!("no training rows for dataset `{id}`")));
        }
        let te = test.filter(|r| r.dataset_id == id);
        let predictions = nn_probe(&tr, &te, k)?;
        let truth: Vec<String> = te.rows.iter().map(|r| r.label.clone()).collect();
        let scores = f1_scores(&predictions, &truth)?;
        let rows: Vec<Vec<f64>> = te.rows.iter().map(|r| r.vector.iter().map(|&v| v as f64).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let dbi = if scores.per_class.len() < 2 {
            log::warn!("dataset `{id}`: single test class, DBI undefined");
            None
        } else {
            Some(dbi(&refs, &truth)?)
        };
        out.push(DatasetReport {
            dataset_id: id,
            macro_f1: scores.macro_f1,
            dbi,
            per_class_f1: scores.per_class,
            train_rows: tr.len(),
            test_rows: te.len(),
        });
    }
    Ok(out)
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat `dataset_id,fold,class,f1` table; `fold` is empty outside k-fold runs.
    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("dataset_id,fold,class,f1\n");
        let mut rows = |fold: Option<u32>, reports: &[DatasetReport]| {
            for d in reports {
                for (class, f1) in &d.per_class_f1 {
                    let fold = fold.map(|f| f.to_string()).unwrap_or_default();
                    let _ = writeln!(out, "{},{},{},{}", csv_field(&d.dataset_id), fold, csv_field(class), f1);
                }
            }
        };
        rows(None, &self.datasets);
        for f in &self.folds {
            rows(Some(f.fold), &f.datasets);
        }
        out
    }

    /// Writes `<stem>.json` and `<stem>.per_class.csv` next to `path`.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))?;
        let csv = path.with_extension("per_class.csv");
        fs::write(&csv, self.per_class_csv()).map_err(|e| Error::io(&csv, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
