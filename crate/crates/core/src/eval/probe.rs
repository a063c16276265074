use rayon::prelude::*;

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::losses::NORM_FLOOR;

fn unit_rows(table: &EmbeddingTable) -> Vec<Vec<f64>> {
    table
        .rows
        .iter()
        .map(|r| {
            let v: Vec<f64> = r.vector.iter().map(|&x| x as f64).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_FLOOR);
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

/// Cosine nearest-neighbour labels for every query row.
///
/// With `k > 1` the majority label of the `k` most similar training rows
/// wins; vote ties go to the label whose best neighbour ranks first. Equal
/// similarities rank the lower training index first.
pub fn nn_probe(train: &EmbeddingTable, query: &EmbeddingTable, k: usize) -> Result<Vec<String>> {
    if train.is_empty() {
        return Err(Error::InvalidInput("probe needs at least one training row".into()));
    }
    if train.dim != query.dim {
        return Err(Error::Shape {
            expected: format!("query dimension {}", train.dim),
            actual: format!("{}", query.dim),
        });
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let t = unit_rows(train);
    let q = unit_rows(query);
    let k = k.min(t.len());
    Ok(q.par_iter()
        .map(|qv| {
            let sims: Vec<f64> = t.iter().map(|tv| tv.iter().zip(qv).map(|(a, b)| a * b).sum()).collect();
            if k == 1 {
                let mut best = 0;
                for (i, s) in sims.iter().enumerate() {
                    if *s > sims[best] {
                        best = i;
                    }
                }
                return train.rows[best].label.clone();
            }
            let mut order: Vec<usize> = (0..sims.len()).collect();
            order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
            let mut votes: Vec<(&str, usize, usize)> = Vec::new();
            for (rank, &i) in order[..k].iter().enumerate() {
                let label = train.rows[i].label.as_str();
                match votes.iter_mut().find(|v| v.0 == label) {
                    Some(v) => v.1 += 1,
                    None => votes.push((label, 1, rank)),
                }
            }
            votes.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
            votes[0].0.to_string()
        })
        .collect())
}
