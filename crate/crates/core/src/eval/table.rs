//! Embedding tables.
//!
//! A table file starts with one JSON header line:
//!
//! ```text
//! {"format":"sfx-embeddings","version":1,"dim":512,"encoding":"binary","rows":N,
//!  "standardization":null,"metadata":{}}
//! ```
//!
//! followed by `rows` records. Binary records hold four length-prefixed
//! (u32 LE) UTF-8 strings (patch id, file id, dataset id, label) and `dim`
//! little-endian f32 values. Text records are one line each: the four
//! strings and then the values, separated by tabs and spaces respectively.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FORMAT: &str = "sfx-embeddings";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub patch_id: String,
    pub file_id: String,
    pub dataset_id: String,
    pub label: String,
    pub vector: Vec<f32>,
}

/// Per-dimension statistics used for z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub rows: Vec<EmbeddingRow>,
    /// Statistics applied to the vectors, if any.
    pub standardization: Option<Standardization>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableEncoding {
    Binary,
    Text,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dim: usize,
    encoding: TableEncoding,
    rows: usize,
    standardization: Option<Standardization>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

fn table_err(msg: impl Into<String>) -> Error {
    Error::Table(msg.into())
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            rows: Vec::new(),
            standardization: None,
            metadata: BTreeMap::new(),
        }
    }

    pub fn from_rows(rows: Vec<EmbeddingRow>) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.vector.len());
        let mut t = EmbeddingTable::new(dim);
        for r in rows {
            t.push(r)?;
        }
        Ok(t)
    }

    pub fn push(&mut self, row: EmbeddingRow) -> Result<()> {
        if row.vector.len() != self.dim {
            return Err(table_err(format!(
                "row `{}` has {} values, table dimension is {}",
                row.patch_id,
                row.vector.len(),
                self.dim
            )));
        }
        if let Some(v) = row.vector.iter().find(|v| !v.is_finite()) {
            return Err(table_err(format!("row `{}` holds non-finite value {v}", row.patch_id)));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.label.as_str()).collect()
    }

    pub fn dataset_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for r in &self.rows {
            if !ids.contains(&r.dataset_id) {
                ids.push(r.dataset_id.clone());
            }
        }
        ids
    }

    /// Rows matching `keep`, with the same header fields.
    pub fn filter(&self, keep: impl Fn(&EmbeddingRow) -> bool) -> EmbeddingTable {
        EmbeddingTable {
            dim: self.dim,
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
            standardization: self.standardization.clone(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn encode(&self, encoding: TableEncoding) -> Result<Vec<u8>> {
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            dim: self.dim,
            encoding,
            rows: self.rows.len(),
            standardization: self.standardization.clone(),
            metadata: self.metadata.clone(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        for r in &self.rows {
            let fields = [&r.patch_id, &r.file_id, &r.dataset_id, &r.label];
            match encoding {
                TableEncoding::Binary => {
                    for f in fields {
                        out.extend_from_slice(&(f.len() as u32).to_le_bytes());
                        out.extend_from_slice(f.as_bytes());
                    }
                    for v in &r.vector {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                TableEncoding::Text => {
                    if let Some(f) = fields.iter().find(|f| f.contains(['\t', '\n', '\r'])) {
                        return Err(table_err(format!("field `{f}` contains a tab or newline")));
                    }
                    let values: Vec<String> = r.vector.iter().map(|v| v.to_string()).collect();
                    let line = format!("{}\t{}\t{}\t{}\t{}\n", r.patch_id, r.file_id, r.dataset_id, r.label, values.join(" "));
                    out.extend_from_slice(line.as_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| table_err("missing header line"))?;
        let header: Header = serde_json::from_slice(&bytes[..nl]).map_err(|e| table_err(format!("bad header: {e}")))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(table_err(format!("unsupported table {} v{}", header.format, header.version)));
        }
        let mut table = EmbeddingTable {
            dim: header.dim,
            rows: Vec::with_capacity(header.rows),
            standardization: header.standardization,
            metadata: header.metadata,
        };
        let body = &bytes[nl + 1..];
        match header.encoding {
            TableEncoding::Binary => {
                let mut pos = 0;
                let mut take = |n: usize| -> Result<&[u8]> {
                    let s = body.get(pos..pos + n).ok_or_else(|| table_err("truncated binary table"))?;
                    pos += n;
                    Ok(s)
                };
                for _ in 0..header.rows {
                    let mut fields = Vec::with_capacity(4);
                    for _ in 0..4 {
                        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
                        let s = std::str::from_utf8(take(len)?).map_err(|_| table_err("field is not UTF-8"))?;
                        fields.push(s.to_string());
                    }
                    let raw = take(4 * header.dim)?;
                    let vector = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                    let [patch_id, file_id, dataset_id, label]: [String; 4] = fields.try_into().unwrap();
                    table.push(EmbeddingRow {
                        patch_id,
                        file_id,
                        dataset_id,
                        label,
                        vector,
                    })?;
                }
                if pos != body.len() {
                    return Err(table_err("trailing bytes after the last row"));
                }
            }
            TableEncoding::Text => {
                let text = std::str::from_utf8(body).map_err(|_| table_err("text table is not UTF-8"))?;
                for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
                    let parts: Vec<&str> = line.splitn(5, '\t').collect();
                    if parts.len() != 5 {
                        return Err(table_err(format!("row {}: expected 5 tab-separated fields", i + 1)));
                    }
                    let vector = parts[4]
                        .split_whitespace()
                        .map(|v| v.parse::<f32>().map_err(|e| table_err(format!("row {}: {e}", i + 1))))
                        .collect::<Result<Vec<_>>>()?;
                    table.push(EmbeddingRow {
                        patch_id: parts[0].into(),
                        file_id: parts[1].into(),
                        dataset_id: parts[2].into(),
                        label: parts[3].into(),
                        vector,
                    })?;
                }
                if table.rows.len() != header.rows {
                    return Err(table_err(format!("header announces {} rows, found {}", header.rows, table.rows.len())));
                }
            }
        }
        Ok(table)
    }

    pub fn write(&self, path: impl AsRef<Path>, encoding: TableEncoding) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode(encoding)?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

/// Population mean and standard deviation of every dimension.
pub fn fit_standardization(table: &EmbeddingTable) -> Result<Standardization> {
    if table.is_empty() {
        return Err(Error::InvalidInput("cannot fit standardization on an empty table".into()));
    }
    let n = table.len() as f64;
    let mut mean = vec![0.0; table.dim];
    for r in &table.rows {
        mean.iter_mut().zip(&r.vector).for_each(|(m, v)| *m += *v as f64);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; table.dim];
    for r in &table.rows {
        var.iter_mut().zip(&r.vector).zip(&mean).for_each(|((s, v), m)| *s += (*v as f64 - m).powi(2));
    }
    let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
    Ok(Standardization { mean, std })
}

#[derive(Debug, Clone)]
pub enum StatsSource<'a> {
    /// Fit on the given (training) table.
    FitOn(&'a EmbeddingTable),
    Provided(&'a Standardization),
}

/// `(x − mean) / std` per dimension; dimensions with `std < 1e-12` map to 0.
pub fn zscore(table: &EmbeddingTable, source: StatsSource<'_>) -> Result<EmbeddingTable> {
    let stats = match source {
        StatsSource::FitOn(t) => fit_standardization(t)?,
        StatsSource::Provided(s) => s.clone(),
    };
    if stats.mean.len() != table.dim || stats.std.len() != table.dim {
        return Err(Error::Shape {
            expected: format!("statistics of dimension {}", table.dim),
            actual: format!("{}", stats.mean.len()),
        });
    }
    let mut out = table.clone();
    for r in &mut out.rows {
        for ((v, m), s) in r.vector.iter_mut().zip(&stats.mean).zip(&stats.std) {
            *v = if *s < 1e-12 { 0.0 } else { ((*v as f64 - m) / s) as f32 };
        }
    }
    out.standardization = Some(stats);
    Ok(out)
}
