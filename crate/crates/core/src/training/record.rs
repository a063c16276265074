use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEpoch {
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub datasets: BTreeMap<String, DatasetEpoch>,
    pub mean_val_loss: f64,
    /// FDR weights in effect during the epoch.
    pub alpha: Option<BTreeMap<String, f64>>,
}

/// Append-only training history.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_checkpoint: Option<PathBuf>,
}

/// One line of the flat history file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryLine {
    pub epoch: usize,
    pub dataset_id: String,
    pub split: String,
    pub loss: f64,
    pub macro_f1: Option<f64>,
}

impl RunRecord {
    pub fn push(&mut self, record: EpochRecord) -> Result<()> {
        if let Some(last) = self.epochs.last() {
            if record.epoch <= last.epoch {
                return Err(Error::InvalidInput(format!(
                    "epoch {} appended after epoch {}",
                    record.epoch, last.epoch
                )));
            }
        }
        self.epochs.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        let best = self.best_epoch?;
        self.epochs.iter().find(|e| e.epoch == best)
    }

    /// Train macro F1 history of one dataset.
    pub fn train_f1_history(&self, dataset: &str) -> Vec<f64> {
        self.epochs
            .iter()
            .filter_map(|e| e.datasets.get(dataset).map(|d| d.train_macro_f1))
            .collect()
    }

    pub fn history_lines(&self) -> Vec<HistoryLine> {
        let mut out = Vec::new();
        for e in &self.epochs {
            for (id, d) in &e.datasets {
                out.push(HistoryLine {
                    epoch: e.epoch,
                    dataset_id: id.clone(),
                    split: "train".into(),
                    loss: d.train_loss,
                    macro_f1: Some(d.train_macro_f1),
                });
                out.push(HistoryLine {
                    epoch: e.epoch,
                    dataset_id: id.clone(),
                    split: "val".into(),
                    loss: d.val_loss,
                    macro_f1: None,
                });
            }
        }
        out
    }

    /// Writes the flat history as JSON lines.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for line in self.history_lines() {
            serde_json::to_writer(&mut out, &line).expect("history line serializes");
            out.push(b'\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Appends one epoch's lines to an existing history file.
    pub(crate) fn append_epoch_jsonl(path: &Path, epoch: &EpochRecord) -> Result<()> {
        let single = RunRecord {
            epochs: vec![epoch.clone()],
            ..RunRecord::default()
        };
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        for line in single.history_lines() {
            let mut text = serde_json::to_string(&line).expect("history line serializes");
            text.push('\n');
            f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Patience-based stopping on a loss that should decrease.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// Records an epoch's loss; returns true when it is a new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if self.best.map_or(true, |(_, b)| loss < b) {
            self.best = Some((epoch, loss));
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }
}
