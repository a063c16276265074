use std::collections::BTreeMap;
use std::path::Path;

use super::{
    class_balanced_batches, fdr_weights, record_convergence, schedule_epoch, shuffled_batches, Adam, Batch,
    BatchPlan, DatasetEpoch, EarlyStopping, EpochRecord, PreparedDataset, RunRecord, TrainConfig,
};
use crate::error::{Error, Result};
use crate::eval::macro_f1;
use crate::ingest::Split;
use crate::losses::{cross_entropy, joint_loss, metric_loss, regularface, LossKind, LossGrad};
use crate::model::{save_checkpoint, FrozenEncoder, MlpHead, ModelState};
use crate::nn::{Matrix, Tensor4};
use crate::seed::{self, hash_str};

/// Validation patches are fixed for the whole run.
struct ValSet {
    chunks: Vec<(Tensor4<f32>, Vec<usize>)>,
}

impl ValSet {
    fn build(ds: &PreparedDataset, config: &TrainConfig) -> Result<Self> {
        let idx = ds.indices(Split::Val);
        if idx.is_empty() {
            return Err(Error::InvalidInput(format!("dataset `{}` has an empty validation split", ds.id())));
        }
        let items: Vec<_> = idx
            .iter()
            .map(|&entry| super::BatchItem {
                entry,
                patch_seed: seed::derive(config.seed, &[hash_str("val"), hash_str(ds.id()), entry as u64]),
            })
            .collect();
        let frames = config.model.features.patch_frames;
        let chunks = items.chunks(config.batch_size).map(|c| ds.patch_batch(c, frames)).collect();
        Ok(ValSet { chunks })
    }

    fn rows(&self) -> usize {
        self.chunks.iter().map(|c| c.1.len()).sum()
    }
}

fn to_f64(m: &Matrix<f32>) -> Matrix<f64> {
    m.map(|v| v as f64)
}

fn argmax_rows(m: &Matrix<f32>) -> Vec<usize> {
    (0..m.rows)
        .map(|i| {
            let row = m.row(i);
            let mut best = 0;
            for (c, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn uses_regularizer(config: &TrainConfig) -> bool {
    config.loss.kind != LossKind::Ce && config.loss.regularface_weight > 0.0
}

/// Epoch batches for one dataset: shuffled for plain CE, class-balanced for metric losses.
pub fn dataset_epoch_batches(ds: &PreparedDataset, config: &TrainConfig, epoch: usize) -> Result<Vec<Batch>> {
    let train = ds.indices(Split::Train);
    let s = seed::derive(config.seed, &[hash_str("epoch"), epoch as u64, hash_str(ds.id())]);
    if config.loss.kind == LossKind::Ce {
        if train.len() < config.batch_size {
            return Err(Error::InvalidInput(format!(
                "dataset `{}` has {} training entries, fewer than one batch of {}",
                ds.id(),
                train.len(),
                config.batch_size
            )));
        }
        Ok(shuffled_batches(ds.id(), &train, config.batch_size, s))
    } else {
        let n = (train.len() / config.batch_size).max(1);
        class_balanced_batches(&ds.dataset, &train, n, config.classes_per_batch, config.per_class, s)
    }
}

/// The full batch plan of one epoch.
pub fn epoch_plan(data: &[&PreparedDataset], config: &TrainConfig, epoch: usize) -> Result<BatchPlan> {
    let plans = data
        .iter()
        .map(|ds| dataset_epoch_batches(ds, config, epoch))
        .collect::<Result<Vec<_>>>()?;
    Ok(schedule_epoch(plans, config.mixing, seed::derive(config.seed, &[hash_str("mix"), epoch as u64])))
}

struct StepOutcome {
    loss: f64,
    predictions: Vec<usize>,
    labels: Vec<usize>,
}

fn diverged(epoch: usize, batch: usize, dataset: &str, loss: f64) -> Error {
    Error::Diverged {
        epoch,
        batch,
        dataset: dataset.to_string(),
        loss,
    }
}

fn train_step(
    state: &mut ModelState,
    adam: &mut Adam,
    batch: &Batch,
    ds: &PreparedDataset,
    config: &TrainConfig,
    alpha: f64,
    (epoch, index): (usize, usize),
) -> Result<StepOutcome> {
    let (x, labels) = ds.patch_batch(&batch.items, config.model.features.patch_frames);
    let (emb, cache) = state.encoder.forward_train(&x, &batch.dataset)?;
    let head = state
        .heads
        .get_mut(&batch.dataset)
        .ok_or_else(|| Error::UnknownDataset(batch.dataset.clone()))?;
    let (logits, head_cache) = head.forward(&emb);
    let ce = cross_entropy(&to_f64(&logits), &labels)?;
    let metric = metric_loss(&config.loss, &to_f64(&emb), &labels);
    let reg = if uses_regularizer(config) {
        regularface(&to_f64(&head.class_weights()))
    } else {
        LossGrad::zero(head.num_classes(), head.hidden)
    };
    let lambda = config.loss.lambda;
    let rw = config.loss.regularface_weight;
    let total = joint_loss(ce.value, metric.value, reg.value, lambda, rw)
        .map_err(|_| diverged(epoch, index, &batch.dataset, f64::NAN))?;
    let loss = alpha * total;
    if !loss.is_finite() {
        return Err(diverged(epoch, index, &batch.dataset, loss));
    }

    let d_logits = ce.grad.map(|g| (alpha * g) as f32);
    let mut d_emb = head.backward(head_cache, &d_logits);
    if config.loss.kind != LossKind::Ce {
        for (d, g) in d_emb.data.iter_mut().zip(&metric.grad.data) {
            *d += (alpha * lambda * g) as f32;
        }
    }
    if uses_regularizer(config) {
        let g: Vec<f32> = reg.grad.data.iter().map(|g| (alpha * rw * g) as f32).collect();
        head.fc2_weight.accumulate(&g);
    }
    state.encoder.backward(cache, &d_emb);
    adam.step(state.params_mut());
    Ok(StepOutcome {
        loss,
        predictions: argmax_rows(&logits),
        labels,
    })
}

/// `CE + λ·metric` over the fixed validation patches, eval mode, unweighted by FDR.
fn validation_loss(state: &ModelState, dataset: &str, val: &ValSet, config: &TrainConfig) -> Result<f64> {
    let head = state.heads.get(dataset).ok_or_else(|| Error::UnknownDataset(dataset.to_string()))?;
    let mut total = 0.0;
    for (x, labels) in &val.chunks {
        let emb = state.encoder.forward_eval(x, dataset)?;
        let (logits, _) = head.forward(&emb);
        let ce = cross_entropy(&to_f64(&logits), labels)?.value;
        let metric = metric_loss(&config.loss, &to_f64(&emb), labels).value;
        total += (ce + config.loss.lambda * metric) * labels.len() as f64;
    }
    Ok(total / val.rows() as f64)
}

fn select<'a>(data: &'a [PreparedDataset], names: &[String]) -> Result<Vec<&'a PreparedDataset>> {
    names
        .iter()
        .map(|n| data.iter().find(|d| d.id() == n).ok_or_else(|| Error::UnknownDataset(n.clone())))
        .collect()
}

/// Measures each dataset's convergence epoch with a run that has FDR off.
pub fn calibrate_fdr(config: &TrainConfig, data: &[PreparedDataset]) -> Result<(BTreeMap<String, usize>, RunRecord)> {
    let threshold = config.fdr.as_ref().map_or(0.9, |f| f.threshold);
    let mut plain = config.clone();
    plain.fdr = None;
    let (_, run) = train(&plain, data, None)?;
    Ok((record_convergence(&run, threshold)?, run))
}

/// Trains encoder and heads; returns the state of the epoch with the best
/// mean validation loss. With `out_dir`, the best checkpoint and the
/// history are written there as training proceeds.
pub fn train(config: &TrainConfig, data: &[PreparedDataset], out_dir: Option<&Path>) -> Result<(ModelState, RunRecord)> {
    config.validate()?;
    let datasets = select(data, &config.datasets)?;
    let alpha: Option<BTreeMap<String, f64>> = match &config.fdr {
        None => None,
        Some(fdr) => {
            let n_e = match &fdr.n_e {
                Some(n) => n.clone(),
                None => calibrate_fdr(config, data)?.0,
            };
            let weights = fdr_weights(&n_e, fdr.beta)?;
            for d in &config.datasets {
                if !weights.alpha.contains_key(d) {
                    return Err(Error::config("fdr.n_e", format!("no convergence epoch for `{d}`")));
                }
            }
            log::info!("FDR weights: {:?}", weights.alpha);
            Some(weights.alpha)
        }
    };
    let heads: Vec<(String, Vec<String>)> = datasets.iter().map(|d| (d.id().to_string(), d.dataset.classes.clone())).collect();
    let mut state = ModelState::new(config.model_config(), &heads, config.seed)?;
    let val_sets = datasets.iter().map(|d| ValSet::build(d, config)).collect::<Result<Vec<_>>>()?;
    let history_path = out_dir.map(|d| d.join("history.jsonl"));
    if let Some(p) = &history_path {
        if p.exists() {
            std::fs::remove_file(p).map_err(|e| Error::io(p, e))?;
        }
    }

    let mut adam = Adam::new(config.optimizer.clone());
    let mut run = RunRecord::default();
    let mut best: Option<ModelState> = None;
    let mut stopper = EarlyStopping::new(config.patience);
    for epoch in 1..=config.max_epochs {
        let plan = epoch_plan(&datasets, config, epoch)?;
        let mut losses: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        let mut preds: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        for (i, batch) in plan.batches.iter().enumerate() {
            let ds = datasets.iter().find(|d| d.id() == batch.dataset).expect("planned dataset");
            let a = alpha.as_ref().map_or(1.0, |m| m[&batch.dataset]);
            let out = train_step(&mut state, &mut adam, batch, ds, config, a, (epoch, i))?;
            let l = losses.entry(ds.id()).or_default();
            l.0 += out.loss;
            l.1 += 1;
            let p = preds.entry(ds.id()).or_default();
            p.0.extend(out.predictions);
            p.1.extend(out.labels);
        }
        let mut record = EpochRecord {
            epoch,
            datasets: BTreeMap::new(),
            mean_val_loss: 0.0,
            alpha: alpha.clone(),
        };
        for (ds, val) in datasets.iter().zip(&val_sets) {
            let val_loss = validation_loss(&state, ds.id(), val, config)?;
            if !val_loss.is_finite() {
                return Err(diverged(epoch, plan.len(), ds.id(), val_loss));
            }
            let (sum, n) = losses.get(ds.id()).copied().unwrap_or((0.0, 0));
            let f1 = match preds.get(ds.id()) {
                Some((p, t)) => macro_f1(p, t)?,
                None => 0.0,
            };
            record.datasets.insert(
                ds.id().to_string(),
                DatasetEpoch {
                    train_loss: if n == 0 { 0.0 } else { sum / n as f64 },
                    val_loss,
                    train_macro_f1: f1,
                },
            );
        }
        record.mean_val_loss = record.datasets.values().map(|d| d.val_loss).sum::<f64>() / record.datasets.len() as f64;
        log::info!("epoch {epoch}: mean val loss {:.5}", record.mean_val_loss);
        state.meta.history.push(record.mean_val_loss);
        if let Some(p) = &history_path {
            RunRecord::append_epoch_jsonl(p, &record)?;
        }

        if stopper.observe(epoch, record.mean_val_loss) {
            state.meta.epoch = epoch;
            state.meta.val_losses = record.datasets.iter().map(|(k, v)| (k.clone(), v.val_loss)).collect();
            state.meta.mean_val_loss = Some(record.mean_val_loss);
            if let Some(dir) = out_dir {
                let path = dir.join("best.ckpt");
                save_checkpoint(&state, &path)?;
                run.best_checkpoint = Some(path);
            }
            best = Some(state.clone());
            run.best_epoch = Some(epoch);
        }
        run.push(record)?;
        if stopper.should_stop() {
            log::info!("early stop after epoch {epoch}; best epoch {:?}", run.best_epoch);
            break;
        }
    }
    let mut best_state = best.expect("at least one epoch");
    best_state.meta.history = state.meta.history.clone();
    if let Some(dir) = out_dir {
        let path = dir.join("run.json");
        let text = serde_json::to_vec_pretty(&run).expect("run record serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok((best_state, run))
}

/// Trains a fresh head for `data` on top of a frozen encoder.
///
/// `norm_dataset` picks the normalization set in dataset-aware mode; it
/// defaults to the dataset itself when known to the encoder, else the first set.
pub fn transfer_head_finetune(
    frozen: &FrozenEncoder,
    data: &PreparedDataset,
    config: &TrainConfig,
    norm_dataset: Option<&str>,
) -> Result<(MlpHead, RunRecord)> {
    config.loss.validate()?;
    let norm = match norm_dataset {
        Some(n) => n.to_string(),
        None => frozen
            .norm_datasets()
            .iter()
            .find(|d| *d == data.id())
            .or_else(|| frozen.norm_datasets().first())
            .cloned()
            .unwrap_or_else(|| data.id().to_string()),
    };
    let mut rng = seed::rng_for(config.seed, &[hash_str("head-init"), hash_str(data.id())]);
    let mut head = MlpHead::new(
        data.dataset.classes.clone(),
        frozen.embedding_dim(),
        frozen.config().head_hidden,
        &mut rng,
    );
    let val = ValSet::build(data, config)?;
    let val_emb = val
        .chunks
        .iter()
        .map(|(x, l)| Ok((frozen.embed(x, &norm)?, l.clone())))
        .collect::<Result<Vec<_>>>()?;
    let mut adam = Adam::new(config.optimizer.clone());
    let mut run = RunRecord::default();
    let mut best: Option<MlpHead> = None;
    let mut stopper = EarlyStopping::new(config.patience);
    let frames = frozen.config().features.patch_frames;
    let rw = config.loss.regularface_weight;
    for epoch in 1..=config.max_epochs {
        let batches = dataset_epoch_batches(data, config, epoch)?;
        let (mut loss_sum, mut preds, mut truth) = (0.0, Vec::new(), Vec::new());
        for (i, batch) in batches.iter().enumerate() {
            let (x, labels) = data.patch_batch(&batch.items, frames);
            let emb = frozen.embed(&x, &norm)?;
            let (logits, cache) = head.forward(&emb);
            let ce = cross_entropy(&to_f64(&logits), &labels)?;
            let reg = if uses_regularizer(config) {
                regularface(&to_f64(&head.class_weights()))
            } else {
                LossGrad::zero(head.num_classes(), head.hidden)
            };
            let loss = joint_loss(ce.value, 0.0, reg.value, 0.0, rw).map_err(|_| diverged(epoch, i, data.id(), f64::NAN))?;
            head.backward(cache, &ce.grad.map(|g| g as f32));
            if uses_regularizer(config) {
                let g: Vec<f32> = reg.grad.data.iter().map(|g| (rw * g) as f32).collect();
                head.fc2_weight.accumulate(&g);
            }
            let id = data.id();
            adam.step(head.params_mut().into_iter().map(|(n, p)| (format!("head.ds:{id}.{n}"), p)));
            loss_sum += loss;
            preds.extend(argmax_rows(&logits));
            truth.extend(labels);
        }
        let mut val_total = 0.0;
        for (emb, labels) in &val_emb {
            let (logits, _) = head.forward(emb);
            val_total += cross_entropy(&to_f64(&logits), labels)?.value * labels.len() as f64;
        }
        let val_loss = val_total / val.rows() as f64;
        if !val_loss.is_finite() {
            return Err(diverged(epoch, batches.len(), data.id(), val_loss));
        }
        let mut datasets = BTreeMap::new();
        datasets.insert(
            data.id().to_string(),
            DatasetEpoch {
                train_loss: loss_sum / batches.len().max(1) as f64,
                val_loss,
                train_macro_f1: if truth.is_empty() { 0.0 } else { macro_f1(&preds, &truth)? },
            },
        );
        run.push(EpochRecord {
            epoch,
            datasets,
            mean_val_loss: val_loss,
            alpha: None,
        })?;
        if stopper.observe(epoch, val_loss) {
            best = Some(head.clone());
            run.best_epoch = Some(epoch);
        }
        if stopper.should_stop() {
            break;
        }
    }
    let head = best.expect("at least one epoch");
    Ok((head, run))
}
