use std::path::Path;

use super::{EmbeddingRow, EmbeddingTable};
use crate::error::{Error, Result};

/// Frame rows per 2 s window at a 0.1 s hop.
pub const DEFAULT_WINDOW_FRAMES: usize = 20;

/// Reads a table produced by another embedding model. With
/// `window_frames`, consecutive rows of each file are averaged in windows
/// of that many frames.
pub fn import_external_embeddings(path: impl AsRef<Path>, window_frames: Option<usize>) -> Result<EmbeddingTable> {
    let table = EmbeddingTable::read(path)?;
    match window_frames {
        Some(n) => aggregate_windows(&table, n),
        None => Ok(table),
    }
}

/// Component-wise mean over consecutive windows of `frames` rows per
/// (dataset, file). A partial trailing window is dropped unless it is the
/// file's only one.
pub fn aggregate_windows(table: &EmbeddingTable, frames: usize) -> Result<EmbeddingTable> {
    if frames == 0 {
        return Err(Error::InvalidInput("aggregation window must hold at least one frame".into()));
    }
    let mut groups: Vec<((&str, &str), Vec<&EmbeddingRow>)> = Vec::new();
    for r in &table.rows {
        let key = (r.dataset_id.as_str(), r.file_id.as_str());
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => g.1.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut out = EmbeddingTable::new(table.dim);
    out.metadata = table.metadata.clone();
    out.metadata.insert("aggregation_frames".into(), frames.to_string());
    for ((_, file), rows) in groups {
        let full = rows.len() / frames;
        let windows: Vec<&[&EmbeddingRow]> = if full == 0 {
            vec![&rows[..]]
        } else {
            rows.chunks_exact(frames).collect()
        };
        for (w, chunk) in windows.into_iter().enumerate() {
            let mut mean = vec![0.0f64; table.dim];
            for r in chunk {
                mean.iter_mut().zip(&r.vector).for_each(|(m, v)| *m += *v as f64);
            }
            let n = chunk.len() as f64;
            out.push(EmbeddingRow {
                patch_id: format!("{file}#w{w}"),
                file_id: chunk[0].file_id.clone(),
                dataset_id: chunk[0].dataset_id.clone(),
                label: chunk[0].label.clone(),
                vector: mean.into_iter().map(|m| (m / n) as f32).collect(),
            })?;
        }
    }
    Ok(out)
}
