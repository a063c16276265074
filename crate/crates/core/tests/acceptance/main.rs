//! Acceptance criteria, one PASS/FAIL line each.
//!
//! `cargo test -p sfx-core --test acceptance -- 7 9` runs a subset.
//! `SFX_ACCEPT_FULL_WIDTH=1` trains the end-to-end criteria at the full
//! 64-128-256-512 encoder width instead of the desk width.
//! `SFX_ESC50_DIR` points criterion 13 at an ESC-50 checkout.

mod common;
mod e2e;
mod structural;

use std::time::{Duration, Instant};

type Check = fn() -> Result<String, String>;

struct Criterion {
    id: u32,
    title: &'static str,
    budget: Duration,
    check: Check,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn criteria() -> Vec<Criterion> {
    let c = |id, title, budget, check| Criterion { id, title, budget, check };
    vec![
        c(1, "encoder parameter count", secs(1), structural::parameter_count),
        c(2, "shape contract", secs(1), structural::shape_contract),
        c(3, "loss gradient suite", secs(30), structural::gradient_suite),
        c(4, "focal dataset weights", secs(1), structural::fdr_suite),
        c(5, "metric oracles", secs(10), structural::metric_oracles),
        c(6, "sampler and schedule invariants", secs(10), structural::sampler_invariants),
        c(7, "end-to-end synthetic training", secs(600), e2e::synthetic_training),
        c(8, "cross-dataset benefit", secs(45 * 60), e2e::cross_dataset_benefit),
        c(9, "dataset-aware normalization", secs(120), e2e::dataset_aware_norm),
        c(10, "FDR direction", secs(15 * 60), e2e::fdr_direction),
        c(11, "checkpoint and determinism", secs(120), e2e::checkpoint_determinism),
        c(12, "external embedding path", secs(60), structural::external_embeddings),
        c(13, "ESC-50 5-fold protocol (optional)", secs(24 * 3600), e2e::esc50_kfold),
    ]
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for c in criteria() {
        if !wanted.is_empty() && !wanted.contains(&c.id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let timing = if took <= c.budget {
            format!("{:.1} s", took.as_secs_f64())
        } else {
            format!("{:.1} s, over the {} s budget", took.as_secs_f64(), c.budget.as_secs())
        };
        match outcome {
            Ok(detail) if detail.starts_with("SKIP") => {
                println!("criterion {:>2} {}: {detail} ({timing})", c.id, c.title)
            }
            Ok(detail) => println!("criterion {:>2} {}: PASS ({timing}) {detail}", c.id, c.title),
            Err(detail) => {
                println!("criterion {:>2} {}: FAIL ({timing}) {detail}", c.id, c.title);
                failed.push(c.id);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
