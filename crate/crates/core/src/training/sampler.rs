use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Mixing;
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::seed;

/// One batch element: an entry index into its dataset and the seed of its patch crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchItem {
    pub entry: usize,
    pub patch_seed: u64,
}

/// A dataset-homogeneous batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub dataset: String,
    pub items: Vec<BatchItem>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batches: Vec<Batch>,
}

impl BatchPlan {
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }
}

fn item<R: Rng>(entry: usize, rng: &mut R) -> BatchItem {
    BatchItem {
        entry,
        patch_seed: rng.gen(),
    }
}

/// `n_batches` batches of `classes_per_batch` class slots × `per_class` entries.
///
/// Slots are drawn without replacement when the split has enough classes,
/// with replacement otherwise; likewise for entries within a class.
pub fn class_balanced_batches(
    dataset: &Dataset,
    split: &[usize],
    n_batches: usize,
    classes_per_batch: usize,
    per_class: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    if split.is_empty() {
        return Err(Error::InvalidInput(format!("dataset `{}`: empty split", dataset.id)));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes()];
    for &i in split {
        let c = dataset.class_index(&dataset.entries[i].class_label).expect("label in vocabulary");
        by_class[c].push(i);
    }
    let present: Vec<usize> = (0..by_class.len()).filter(|&c| !by_class[c].is_empty()).collect();
    let mut rng = seed::rng(seed);
    let mut batches = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let slots: Vec<usize> = if present.len() >= classes_per_batch {
            present.choose_multiple(&mut rng, classes_per_batch).copied().collect()
        } else {
            (0..classes_per_batch).map(|_| *present.choose(&mut rng).unwrap()).collect()
        };
        let mut items = Vec::with_capacity(classes_per_batch * per_class);
        for c in slots {
            let pool = &by_class[c];
            let picks: Vec<usize> = if pool.len() >= per_class {
                pool.choose_multiple(&mut rng, per_class).copied().collect()
            } else {
                let mut picks = pool.clone();
                picks.shuffle(&mut rng);
                picks.extend((pool.len()..per_class).map(|_| *pool.choose(&mut rng).unwrap()));
                picks
            };
            for e in picks {
                items.push(item(e, &mut rng));
            }
        }
        batches.push(Batch {
            dataset: dataset.id.clone(),
            items,
        });
    }
    Ok(batches)
}

/// Uniform permutation of `split` chunked into full batches; the tail is dropped.
pub fn shuffled_batches(dataset_id: &str, split: &[usize], batch_size: usize, seed: u64) -> Vec<Batch> {
    let mut rng = seed::rng(seed);
    let mut order = split.to_vec();
    order.shuffle(&mut rng);
    order
        .chunks_exact(batch_size)
        .map(|chunk| Batch {
            dataset: dataset_id.to_string(),
            items: chunk.iter().map(|&e| item(e, &mut rng)).collect(),
        })
        .collect()
}

/// Sequential concatenation or a seeded interleaving that keeps each
/// dataset's batches in their original order.
pub fn schedule_epoch(plans: Vec<Vec<Batch>>, mixing: Mixing, seed: u64) -> BatchPlan {
    match mixing {
        Mixing::Sequential => BatchPlan {
            batches: plans.into_iter().flatten().collect(),
        },
        Mixing::Joint => {
            let mut rng = seed::rng(seed);
            let total: usize = plans.iter().map(Vec::len).sum();
            let mut queues: Vec<std::vec::IntoIter<Batch>> = plans.into_iter().map(Vec::into_iter).collect();
            let mut remaining: Vec<usize> = queues.iter().map(|q| q.len()).collect();
            let mut batches = Vec::with_capacity(total);
            for left in (1..=total).rev() {
                // Picking a queue with probability proportional to its length
                // makes every order-preserving interleaving equally likely.
                let mut r = rng.gen_range(0..left);
                let q = remaining
                    .iter()
                    .position(|&n| {
                        if r < n {
                            true
                        } else {
                            r -= n;
                            false
                        }
                    })
                    .expect("remaining batches");
                remaining[q] -= 1;
                batches.push(queues[q].next().expect("queue length tracked"));
            }
            BatchPlan { batches }
        }
    }
}
