use std::collections::BTreeMap;

use rand::seq::index::sample;

use super::Dataset;
use crate::seed;

/// Caps every class at `cap_per_class` entries by seeded sampling without
/// replacement; with `balance`, additionally truncates every class to the
/// smallest capped class. Original entry order is preserved.
pub fn build_subset(dataset: &Dataset, cap_per_class: usize, balance: bool, seed: u64) -> Dataset {
    assert!(cap_per_class >= 1, "cap_per_class must be >= 1");
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in dataset.entries.iter().enumerate() {
        by_class.entry(e.class_label.as_str()).or_default().push(i);
    }
    let draw = |members: &[usize], k: usize, tag: u64, class: &str| -> Vec<usize> {
        if members.len() <= k {
            return members.to_vec();
        }
        let mut rng = seed::rng_for(seed, &[tag, seed::hash_str(class)]);
        let mut picked: Vec<usize> = sample(&mut rng, members.len(), k)
            .into_iter()
            .map(|j| members[j])
            .collect();
        picked.sort_unstable();
        picked
    };
    let mut capped: BTreeMap<&str, Vec<usize>> = by_class
        .iter()
        .map(|(c, m)| (*c, draw(m, cap_per_class, 1, c)))
        .collect();
    if balance {
        let smallest = capped.values().map(Vec::len).min().unwrap_or(0);
        for (c, m) in capped.iter_mut() {
            *m = draw(m, smallest, 2, c);
        }
    }
    let mut keep: Vec<usize> = capped.into_values().flatten().collect();
    keep.sort_unstable();
    dataset.with_entries(keep.into_iter().map(|i| dataset.entries[i].clone()).collect())
}
