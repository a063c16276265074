use std::collections::BTreeMap;
use std::fmt::Display;

use crate::error::{Error, Result};

/// Per-class F1 over the classes present in `truth`, plus their unweighted mean.
#[derive(Debug, Clone, PartialEq)]
pub struct F1Scores<L> {
    pub macro_f1: f64,
    pub per_class: BTreeMap<L, f64>,
}

pub fn f1_scores<L: Ord + Clone>(predictions: &[L], truth: &[L]) -> Result<F1Scores<L>> {
    if truth.is_empty() {
        return Err(Error::InvalidInput("macro F1 of an empty set".into()));
    }
    if predictions.len() != truth.len() {
        return Err(Error::Shape {
            expected: format!("{} predictions", truth.len()),
            actual: format!("{} predictions", predictions.len()),
        });
    }
    // (true positives, predicted count, true count)
    let mut counts: BTreeMap<L, (usize, usize, usize)> = truth.iter().map(|l| (l.clone(), (0, 0, 0))).collect();
    for (p, t) in predictions.iter().zip(truth) {
        counts.get_mut(t).expect("truth class").2 += 1;
        if let Some(c) = counts.get_mut(p) {
            c.1 += 1;
            if p == t {
                c.0 += 1;
            }
        }
    }
    let per_class: BTreeMap<L, f64> = counts
        .into_iter()
        .map(|(l, (tp, predicted, actual))| {
            let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (predicted + actual) as f64 };
            (l, f1)
        })
        .collect();
    let macro_f1 = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok(F1Scores { macro_f1, per_class })
}

/// Unweighted mean of per-class F1; classes are those present in `truth`.
pub fn macro_f1<L: Ord + Clone>(predictions: &[L], truth: &[L]) -> Result<f64> {
    f1_scores(predictions, truth).map(|s| s.macro_f1)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Davies-Bouldin index with ground-truth classes as clusters.
pub fn dbi<L: Ord + Clone + Display>(rows: &[&[f64]], labels: &[L]) -> Result<f64> {
    if rows.len() != labels.len() {
        return Err(Error::Shape {
            expected: format!("{} labels", rows.len()),
            actual: format!("{} labels", labels.len()),
        });
    }
    let dim = rows.first().map_or(0, |r| r.len());
    let mut groups: BTreeMap<&L, Vec<&[f64]>> = BTreeMap::new();
    for (r, l) in rows.iter().zip(labels) {
        groups.entry(l).or_default().push(r);
    }
    if groups.len() < 2 {
        return Err(Error::InvalidInput(format!("DBI needs at least two classes, got {}", groups.len())));
    }
    let stats: Vec<(&L, Vec<f64>, f64)> = groups
        .into_iter()
        .map(|(l, members)| {
            let mut centroid = vec![0.0; dim];
            for m in &members {
                centroid.iter_mut().zip(m.iter()).for_each(|(c, v)| *c += v);
            }
            centroid.iter_mut().for_each(|c| *c /= members.len() as f64);
            let scatter = members.iter().map(|m| euclid(m, &centroid)).sum::<f64>() / members.len() as f64;
            (l, centroid, scatter)
        })
        .collect();
    let mut total = 0.0;
    for (i, (li, ci, si)) in stats.iter().enumerate() {
        let mut worst = f64::NEG_INFINITY;
        for (j, (lj, cj, sj)) in stats.iter().enumerate() {
            if i == j {
                continue;
            }
            let m = euclid(ci, cj);
            if m < 1e-12 {
                let (a, b) = if i < j { (li, lj) } else { (lj, li) };
                return Err(Error::CoincidentCentroids {
                    a: a.to_string(),
                    b: b.to_string(),
                });
            }
            worst = worst.max((si + sj) / m);
        }
        total += worst;
    }
    Ok(total / stats.len() as f64)
}
