use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const KNOWN_KEYS: [&str; 6] = [
    "dataset_id",
    "file_path",
    "class_label",
    "fine_label",
    "fold",
    "duration_s",
];

/// One labeled audio file in a corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub dataset_id: String,
    pub file_path: String,
    pub class_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    /// `file_path` resolved against the manifest's directory.
    #[serde(skip)]
    pub resolved_path: PathBuf,
}

impl ManifestEntry {
    pub fn new(dataset_id: &str, file_path: &str, class_label: &str) -> Self {
        ManifestEntry {
            dataset_id: dataset_id.to_string(),
            file_path: file_path.to_string(),
            class_label: class_label.to_string(),
            fine_label: None,
            fold: None,
            duration_s: None,
            resolved_path: PathBuf::from(file_path),
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.dataset_id.is_empty() {
            return Err("empty dataset_id".into());
        }
        if self.class_label.is_empty() {
            return Err("empty class_label".into());
        }
        if self.file_path.is_empty() {
            return Err("empty file_path".into());
        }
        if self.fold == Some(0) {
            return Err("fold must be >= 1".into());
        }
        Ok(())
    }
}

/// All entries of one corpus plus its own (sorted) class vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub id: String,
    pub entries: Vec<ManifestEntry>,
    pub classes: Vec<String>,
}

impl Dataset {
    /// Builds a dataset and derives its vocabulary from the entries.
    pub fn from_entries(id: impl Into<String>, entries: Vec<ManifestEntry>) -> Self {
        let classes: BTreeSet<&str> = entries.iter().map(|e| e.class_label.as_str()).collect();
        let classes = classes.into_iter().map(str::to_string).collect();
        Dataset {
            id: id.into(),
            entries,
            classes,
        }
    }

    /// Same vocabulary, different entries (used by subsets and splits).
    pub fn with_entries(&self, entries: Vec<ManifestEntry>) -> Self {
        Dataset {
            id: self.id.clone(),
            entries,
            classes: self.classes.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(label)).ok()
    }

    /// Class index of every entry, in entry order.
    pub fn labels(&self) -> Vec<usize> {
        self.entries
            .iter()
            .map(|e| self.class_index(&e.class_label).expect("label outside vocabulary"))
            .collect()
    }

    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.class_label.clone()).or_insert(0) += 1;
        }
        counts
    }
}

/// Several corpora, each with an independent label space.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetCollection {
    pub datasets: Vec<Dataset>,
}

impl DatasetCollection {
    pub fn get(&self, id: &str) -> Option<&Dataset> {
        self.datasets.iter().find(|d| d.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.datasets.iter().map(|d| d.id.clone()).collect()
    }

    /// dataset_id → ordered class list.
    pub fn taxonomy(&self) -> BTreeMap<String, Vec<String>> {
        self.datasets
            .iter()
            .map(|d| (d.id.clone(), d.classes.clone()))
            .collect()
    }

    /// Appends the datasets of `other`. A dataset id present in both is an error.
    pub fn merge(&mut self, other: DatasetCollection) -> Result<()> {
        for d in other.datasets {
            if self.get(&d.id).is_some() {
                return Err(Error::InvalidInput(format!(
                    "dataset `{}` defined by more than one manifest",
                    d.id
                )));
            }
            self.datasets.push(d);
        }
        Ok(())
    }

    /// Groups entries by dataset id, keeping first-appearance order.
    pub fn from_entries(entries: Vec<ManifestEntry>) -> Self {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<String, Vec<ManifestEntry>> = BTreeMap::new();
        for e in entries {
            if !groups.contains_key(&e.dataset_id) {
                order.push(e.dataset_id.clone());
            }
            groups.entry(e.dataset_id.clone()).or_default().push(e);
        }
        let datasets = order
            .into_iter()
            .map(|id| {
                let entries = groups.remove(&id).unwrap_or_default();
                Dataset::from_entries(id, entries)
            })
            .collect();
        DatasetCollection { datasets }
    }
}

/// Parses a line-delimited JSON manifest.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<DatasetCollection> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest_str(&text, path, &base)
}

pub(crate) fn parse_manifest_str(
    text: &str,
    path: &Path,
    base: &Path,
) -> Result<DatasetCollection> {
    let err = |line: usize, message: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| err(line_no, e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| err(line_no, "record is not an object".into()))?;
        for key in obj.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                log::warn!("{}:{line_no}: ignoring unknown field `{key}`", path.display());
            }
        }
        let mut entry: ManifestEntry =
            serde_json::from_value(value).map_err(|e| err(line_no, e.to_string()))?;
        entry.validate().map_err(|m| err(line_no, m))?;
        if !seen.insert((entry.dataset_id.clone(), entry.file_path.clone())) {
            return Err(err(
                line_no,
                format!(
                    "duplicate record for ({}, {})",
                    entry.dataset_id, entry.file_path
                ),
            ));
        }
        entry.resolved_path = base.join(&entry.file_path);
        entries.push(entry);
    }
    Ok(DatasetCollection::from_entries(entries))
}

/// Writes entries in the manifest format, one JSON object per line.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut out, e).map_err(|e| Error::InvalidInput(e.to_string()))?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}
