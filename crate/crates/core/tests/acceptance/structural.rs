use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use sfx_core::eval::{
    dbi, import_external_embeddings, macro_f1, probe_report, EmbeddingRow, EmbeddingTable, EvalReport, TableEncoding,
};
use sfx_core::ingest::{Dataset, ManifestEntry};
use sfx_core::losses::{circle_loss, contrastive_loss, cross_entropy, mine_pairs, mine_triplets, regularface, triplet_loss, LossGrad};
use sfx_core::model::{ModelConfig, ModelState, ParamScope};
use sfx_core::nn::{Matrix, Tensor4};
use sfx_core::seed;
use sfx_core::training::{class_balanced_batches, fdr_weights, raw_weight, schedule_epoch, shuffled_batches, Batch, Mixing};

use crate::common::{ensure, err, R};

pub fn parameter_count() -> R<String> {
    let state = ModelState::new(ModelConfig::default(), &[("d".into(), vec!["a".into(), "b".into()])], 0).map_err(err)?;
    let n = state.param_count(ParamScope::Encoder);
    ensure(n == 4_686_144, || format!("encoder has {n} parameters"))?;
    Ok(format!("{n} encoder parameters"))
}

pub fn shape_contract() -> R<String> {
    let config = ModelConfig::default();
    let trace = config.spatial_trace();
    ensure(trace.first() == Some(&(100, 96)) && trace.last() == Some(&(6, 6)), || format!("trace {trace:?}"))?;
    let mut state = ModelState::new(config, &[("d".into(), vec!["a".into()])], 1).map_err(err)?;
    let mut rng = seed::rng(2);
    for b in [1, 7, 64] {
        let x = Tensor4::from_vec((0..b * 9600).map(|_| rng.gen::<f32>()).collect(), b, 1, 100, 96);
        let y = state.encoder.forward_eval(&x, "d").map_err(err)?;
        ensure(y.rows == b && y.cols == 512, || format!("B={b}: {}×{}", y.rows, y.cols))?;
    }
    let bad = Tensor4::<f32>::zeros(2, 1, 99, 96);
    ensure(state.encoder_forward(&bad, "d", sfx_core::model::Mode::Eval).is_err(), || "accepted a 99×96 patch".into())?;
    Ok(format!("trace {trace:?}"))
}

/// Central differences, step `h`.
fn numeric(x: &[f64], h: f64, f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut v = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = v[i];
            v[i] = orig + h;
            let up = f(&v);
            v[i] = orig - h;
            let down = f(&v);
            v[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().chain(b).map(|v| v * v).sum::<f64>().sqrt();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn gradient_suite() -> R<String> {
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    for s in 0..20u64 {
        let mut rng = seed::rng(1000 + s);
        let labels: Vec<usize> = (0..8).map(|_| rng.gen_range(0..3)).collect();
        let x: Vec<f64> = (0..8 * 16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = |d: &[f64]| Matrix::from_vec(d.to_vec(), 8, 16);
        let (pairs, triplets) = (mine_pairs(&labels), mine_triplets(&labels));
        let losses: Vec<(&str, Box<dyn Fn(&Matrix<f64>) -> LossGrad>)> = vec![
            ("ce", Box::new(|x| cross_entropy(x, &labels).unwrap())),
            ("contrastive", Box::new(|x| contrastive_loss(x, &pairs, 1.0, 0.0, false))),
            ("triplet", Box::new(|x| triplet_loss(x, &triplets, 0.05, false))),
            ("circle", Box::new(|x| circle_loss(x, &labels, 0.25, 32.0))),
            ("regularface", Box::new(regularface)),
        ];
        for (name, f) in &losses {
            let analytic = f(&m(&x)).grad.data;
            let fd = numeric(&x, 1e-6, &|d| f(&m(d)).value);
            let e = rel_err(&analytic, &fd);
            let w = worst.entry(name).or_insert(0.0);
            *w = w.max(e);
        }
    }
    for (name, e) in &worst {
        ensure(*e < 1e-4, || format!("{name}: relative error {e:.2e}"))?;
    }
    Ok(format!("worst relative errors {:?}", worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>()))
}

pub fn fdr_suite() -> R<String> {
    ensure(raw_weight(1, 0.999) == 1.0, || format!("alpha(1) = {}", raw_weight(1, 0.999)))?;
    let ten = raw_weight(10, 0.999);
    ensure((ten - 9.9552).abs() <= 1e-3, || format!("alpha(10) = {ten}"))?;
    let mut rng = seed::rng(4);
    for _ in 0..200 {
        let d = rng.gen_range(1..=9);
        let n_e: BTreeMap<String, usize> = (0..d).map(|i| (format!("d{i}"), rng.gen_range(1..=200))).collect();
        let beta = rng.gen_range(0.5..0.9999);
        let w = fdr_weights(&n_e, beta).map_err(err)?;
        let sum: f64 = w.alpha.values().sum();
        ensure((sum - d as f64).abs() <= 1e-9, || format!("sum {sum} for {d} datasets"))?;
        let mut by_n: Vec<(usize, f64)> = n_e.iter().map(|(k, &n)| (n, w.alpha[k])).collect();
        by_n.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ensure(by_n.windows(2).all(|p| p[0].1 <= p[1].1), || format!("not monotone: {by_n:?}"))?;
    }
    Ok(format!("alpha(10) = {ten:.5}"))
}

fn oracle_macro_f1(pred: &[usize], truth: &[usize], k: usize) -> f64 {
    let present: Vec<usize> = (0..k).filter(|c| truth.contains(c)).collect();
    let f1 = |c: usize| {
        let tp = pred.iter().zip(truth).filter(|(p, t)| **p == c && **t == c).count() as f64;
        let fp = pred.iter().zip(truth).filter(|(p, t)| **p == c && **t != c).count() as f64;
        let fn_ = pred.iter().zip(truth).filter(|(p, t)| **p != c && **t == c).count() as f64;
        if tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fn_)
        }
    };
    present.iter().map(|&c| f1(c)).sum::<f64>() / present.len() as f64
}

fn oracle_dbi(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let clusters: Vec<Vec<&Vec<f64>>> = (0..k)
        .map(|c| points.iter().zip(labels).filter(|(_, l)| **l == c).map(|(p, _)| p).collect())
        .filter(|m: &Vec<&Vec<f64>>| !m.is_empty())
        .collect();
    let cent: Vec<Vec<f64>> = clusters
        .iter()
        .map(|m| (0..points[0].len()).map(|j| m.iter().map(|p| p[j]).sum::<f64>() / m.len() as f64).collect())
        .collect();
    let s: Vec<f64> = clusters.iter().zip(&cent).map(|(m, c)| m.iter().map(|p| d(p, c)).sum::<f64>() / m.len() as f64).collect();
    let n = cent.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut worst = 0.0f64;
        for j in 0..n {
            if i != j {
                worst = worst.max((s[i] + s[j]) / d(&cent[i], &cent[j]));
            }
        }
        total += worst;
    }
    total / n as f64
}

pub fn metric_oracles() -> R<String> {
    let hand = macro_f1(&["a", "b", "b", "b"], &["a", "a", "b", "b"]).map_err(err)?;
    ensure((hand - 11.0 / 15.0).abs() < 1e-15, || format!("hand macro F1 {hand}"))?;
    let pts = [[0.0, 0.0], [0.0, 2.0], [10.0, 0.0], [10.0, 2.0]];
    let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
    let hand_dbi = dbi(&refs, &["a", "a", "b", "b"]).map_err(err)?;
    ensure((hand_dbi - 0.2).abs() < 1e-15, || format!("hand DBI {hand_dbi}"))?;

    let mut rng = seed::rng(55);
    for _ in 0..100 {
        let k = rng.gen_range(1..=8);
        let n = rng.gen_range(1..=120);
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let got = macro_f1(&pred, &truth).map_err(err)?;
        let want = oracle_macro_f1(&pred, &truth, k);
        ensure((got - want).abs() <= 1e-12, || format!("macro F1 {got} vs oracle {want}"))?;
    }
    for _ in 0..100 {
        let k = rng.gen_range(2..=6);
        let n = rng.gen_range(k..=60);
        let dim = rng.gen_range(1..=6);
        let labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
        let points: Vec<Vec<f64>> = labels.iter().map(|&l| (0..dim).map(|_| l as f64 + rng.gen_range(-1.5..1.5)).collect()).collect();
        let refs: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
        let got = dbi(&refs, &labels).map_err(err)?;
        let want = oracle_dbi(&points, &labels, k);
        ensure((got - want).abs() <= 1e-9, || format!("DBI {got} vs oracle {want}"))?;
    }
    Ok(format!("hand cases {hand:.4} and {hand_dbi}, 200 random instances"))
}

fn dataset(classes: usize, per_class: usize) -> Dataset {
    let entries = (0..classes)
        .flat_map(|c| (0..per_class).map(move |i| ManifestEntry::new("d", &format!("c{c}_{i}.wav"), &format!("c{c:02}"))))
        .collect();
    Dataset::from_entries("d", entries)
}

fn key(b: &Batch) -> (String, Vec<usize>) {
    (b.dataset.clone(), b.items.iter().map(|i| i.entry).collect())
}

pub fn sampler_invariants() -> R<String> {
    // 16 classes × 4 distinct items when the vocabulary allows it
    let big = dataset(20, 10);
    let all: Vec<usize> = (0..big.len()).collect();
    for b in class_balanced_batches(&big, &all, 10, 16, 4, 3).map_err(err)? {
        let mut per: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
        for it in &b.items {
            per.entry(&big.entries[it.entry].class_label).or_default().insert(it.entry);
        }
        ensure(b.items.len() == 64 && per.len() == 16 && per.values().all(|s| s.len() == 4), || format!("batch {per:?}"))?;
    }
    // fewer classes than slots: classes repeat, each slot still holds one class
    let small = dataset(5, 3);
    let all: Vec<usize> = (0..small.len()).collect();
    for b in class_balanced_batches(&small, &all, 10, 16, 4, 5).map_err(err)? {
        ensure(b.items.len() == 64, || "short batch".into())?;
        for slot in b.items.chunks(4) {
            let classes: BTreeSet<&str> = slot.iter().map(|it| small.entries[it.entry].class_label.as_str()).collect();
            ensure(classes.len() == 1, || format!("slot mixes classes {classes:?}"))?;
            // a 3-item class fills 4 places: all three, then one repeat
            let distinct: BTreeSet<usize> = slot.iter().map(|it| it.entry).collect();
            ensure(distinct.len() == 3, || format!("slot uses {} distinct items", distinct.len()))?;
        }
    }

    let plans = |n: &[usize]| -> Vec<Vec<Batch>> {
        n.iter()
            .enumerate()
            .map(|(d, &len)| shuffled_batches(&format!("ds{d}"), &(0..len).collect::<Vec<_>>(), 64, d as u64))
            .collect()
    };
    for (i, sizes) in [[130usize, 64, 500], [63, 200, 1000], [640, 641, 65]].iter().enumerate() {
        let p = plans(sizes);
        for (pl, &n) in p.iter().zip(sizes) {
            ensure(pl.len() == n / 64, || format!("{n} items gave {} batches", pl.len()))?;
            let used: BTreeSet<usize> = pl.iter().flat_map(|b| b.items.iter().map(|it| it.entry)).collect();
            ensure(used.len() == (n / 64) * 64, || "drop-last reused or lost items".into())?;
        }
        let seq = schedule_epoch(p.clone(), Mixing::Sequential, i as u64);
        let joint = schedule_epoch(p, Mixing::Joint, i as u64);
        let mut a: Vec<_> = seq.batches.iter().map(key).collect();
        let mut b: Vec<_> = joint.batches.iter().map(key).collect();
        for batch in seq.batches.iter().chain(&joint.batches) {
            let ds: BTreeSet<bool> = batch.items.iter().map(|it| it.entry < sizes[ds_index(&batch.dataset)]).collect();
            ensure(ds == BTreeSet::from([true]), || "batch entry outside its dataset".into())?;
        }
        a.sort();
        b.sort();
        ensure(a == b, || "sequential and joint batch multisets differ".into())?;
    }
    Ok("16×4 batches, replacement, multiset and drop-last checks".into())
}

fn ds_index(id: &str) -> usize {
    id.trim_start_matches("ds").parse().unwrap()
}

fn row(i: usize, dataset: &str, label: &str, vector: Vec<f32>) -> EmbeddingRow {
    EmbeddingRow {
        patch_id: format!("{dataset}/f{i}#0"),
        file_id: format!("{dataset}/f{i}"),
        dataset_id: dataset.into(),
        label: label.into(),
        vector,
    }
}

/// Rows around class centres drawn from a fixed seed; `seed_value` drives the noise.
fn clustered(n: usize, dim: usize, classes: usize, seed_value: u64) -> R<EmbeddingTable> {
    let mut rng = seed::rng(0);
    let centers: Vec<Vec<f32>> = (0..classes).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut rng = seed::rng(seed_value);
    let rows = (0..n)
        .map(|i| {
            let c = i % classes;
            let v = centers[c].iter().map(|m| m + rng.gen_range(-0.8..0.8)).collect();
            row(i, "ext", &format!("class{c}"), v)
        })
        .collect();
    EmbeddingTable::from_rows(rows).map_err(err)
}

pub fn external_embeddings() -> R<String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let train = clustered(120, 32, 4, 1)?;
    let test = clustered(40, 32, 4, 2)?;
    let native = EvalReport {
        datasets: probe_report(&train, &test, 1).map_err(err)?,
        ..EvalReport::default()
    };
    for enc in [TableEncoding::Binary, TableEncoding::Text] {
        let (tp, qp) = (dir.path().join("train.tbl"), dir.path().join("test.tbl"));
        train.write(&tp, enc).map_err(err)?;
        test.write(&qp, enc).map_err(err)?;
        let imported = EvalReport {
            datasets: probe_report(
                &import_external_embeddings(&tp, None).map_err(err)?,
                &import_external_embeddings(&qp, None).map_err(err)?,
                1,
            )
            .map_err(err)?,
            ..EvalReport::default()
        };
        ensure(imported == native, || format!("{enc:?} import changed the report"))?;
    }

    let big_train = clustered(60, 6144, 3, 3)?;
    let big_test = clustered(30, 6144, 3, 4)?;
    let (tp, qp) = (dir.path().join("ext_train.tbl"), dir.path().join("ext_test.tbl"));
    big_train.write(&tp, TableEncoding::Binary).map_err(err)?;
    big_test.write(&qp, TableEncoding::Binary).map_err(err)?;
    let report = probe_report(
        &import_external_embeddings(&tp, None).map_err(err)?,
        &import_external_embeddings(&qp, None).map_err(err)?,
        1,
    )
    .map_err(err)?;
    let f1 = report[0].macro_f1;
    ensure(report[0].test_rows == 30 && f1.is_finite() && report[0].dbi.is_some_and(f64::is_finite), || {
        format!("6144-dim report {report:?}")
    })?;
    Ok(format!("native report reproduced, 6144-dim macro F1 {f1:.3}"))
}
