use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratKey {
    /// Fine label when present, class label otherwise.
    #[default]
    FineLabel,
    ClassLabel,
}

/// Split membership of every entry of one dataset, aligned with entry order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub assignments: Vec<Split>,
    pub seed: u64,
    pub ratios: SplitRatios,
}

impl SplitAssignment {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.assignments.iter().filter(|s| **s == split).count()
    }

    /// The entries of `dataset` that fall in `split`.
    pub fn select(&self, dataset: &Dataset, split: Split) -> Dataset {
        dataset.with_entries(
            self.indices(split)
                .into_iter()
                .map(|i| dataset.entries[i].clone())
                .collect(),
        )
    }
}

/// Largest-remainder apportionment of `n` items; ties go train, test, val.
fn apportion(n: usize, ratios: &SplitRatios) -> [usize; 3] {
    // index order: train, val, test
    let raw = [
        n as f64 * ratios.train,
        n as f64 * ratios.val,
        n as f64 * ratios.test,
    ];
    let mut sizes = raw.map(|r| (r + 1e-9).floor() as usize);
    let mut rest = n - sizes.iter().sum::<usize>();
    let mut order = [0usize, 2, 1];
    order.sort_by(|&a, &b| {
        let fa = raw[a] - sizes[a] as f64;
        let fb = raw[b] - sizes[b] as f64;
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        sizes[i] += 1;
        rest -= 1;
    }
    sizes
}

/// Stratified train/val/test split with per-stratum seeded shuffles.
pub fn stratified_split(
    dataset: &Dataset,
    ratios: SplitRatios,
    key: StratKey,
    seed: u64,
) -> Result<SplitAssignment> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput(format!("dataset `{}` is empty", dataset.id)));
    }
    let sum = ratios.train + ratios.val + ratios.test;
    if (sum - 1.0).abs() > 1e-9 || [ratios.train, ratios.val, ratios.test].iter().any(|r| *r < 0.0) {
        return Err(Error::InvalidInput(format!(
            "split ratios must be non-negative and sum to 1, got {sum}"
        )));
    }
    let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in dataset.entries.iter().enumerate() {
        let k = match key {
            StratKey::FineLabel => e.fine_label.as_deref().unwrap_or(&e.class_label),
            StratKey::ClassLabel => &e.class_label,
        };
        strata.entry(k).or_default().push(i);
    }
    let mut assignments = vec![Split::Train; dataset.len()];
    for (name, mut members) in strata {
        let mut rng = seed::rng_for(seed, &[seed::hash_str(name)]);
        members.shuffle(&mut rng);
        if members.len() < 3 {
            let order = [Split::Train, Split::Test, Split::Val];
            for (m, s) in members.iter().zip(order) {
                assignments[*m] = s;
            }
            continue;
        }
        let [n_train, n_val, _] = apportion(members.len(), &ratios);
        for (pos, m) in members.iter().enumerate() {
            assignments[*m] = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(SplitAssignment {
        assignments,
        seed,
        ratios,
    })
}
