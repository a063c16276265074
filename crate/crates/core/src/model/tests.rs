use rand::Rng;

use super::*;
use crate::error::Error;
use crate::nn::{Matrix, Tensor4};
use crate::seed;

fn desk_config(aware: bool) -> ModelConfig {
    let mut c = ModelConfig::default();
    c.encoder.widths = vec![4, 6, 8, 8];
    c.encoder.dataset_aware_norm = aware;
    c.head_hidden = 16;
    c
}

fn random_batch(n: usize, seed: u64) -> Tensor4<f32> {
    let mut rng = seed::rng(seed);
    let data = (0..n * 100 * 96).map(|_| rng.gen::<f32>()).collect();
    Tensor4::from_vec(data, n, 1, 100, 96)
}

fn classes(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("c{i}")).collect()
}

#[test]
fn full_width_parameter_counts() {
    let cfg = ModelConfig::default();
    let state = ModelState::new(cfg.clone(), &[("a".into(), classes(10))], 0).unwrap();
    assert_eq!(state.encoder.conv_param_count(), 4_682_304);
    assert_eq!(state.param_count(ParamScope::Encoder), 4_686_144);
    assert_eq!(state.param_count(ParamScope::Heads), 512 * 512 + 512 + 512 * 10 + 10);
    assert_eq!(state.param_count(ParamScope::Heads), 267_786);

    let mut aware = cfg;
    aware.encoder.dataset_aware_norm = true;
    let ds: Vec<(String, Vec<String>)> = ["a", "b", "c"].iter().map(|d| (d.to_string(), classes(2))).collect();
    let state = ModelState::new(aware, &ds, 0).unwrap();
    assert_eq!(state.param_count(ParamScope::Encoder), 4_682_304 + 3 * 3_840);
}

#[test]
fn spatial_trace_of_default_patch() {
    assert_eq!(
        ModelConfig::default().spatial_trace(),
        vec![(100, 96), (50, 48), (25, 24), (12, 12), (6, 6)]
    );
}

#[test]
fn embedding_shapes() {
    let mut state = ModelState::new(desk_config(false), &[("a".into(), classes(5))], 1).unwrap();
    for b in [1, 7, 64] {
        let x = random_batch(b, b as u64);
        for mode in [Mode::Eval, Mode::Train] {
            let e = state.encoder_forward(&x, "a", mode).unwrap();
            assert_eq!((e.rows, e.cols), (b, 8));
            let logits = state.head_forward(&e, "a").unwrap();
            assert_eq!((logits.rows, logits.cols), (b, 5));
        }
    }
}

#[test]
fn wrong_input_shape_is_an_error() {
    let mut state = ModelState::new(desk_config(false), &[("a".into(), classes(2))], 1).unwrap();
    let x = Tensor4::<f32>::zeros(2, 1, 99, 96);
    assert!(matches!(state.encoder_forward(&x, "a", Mode::Eval), Err(Error::Shape { .. })));
    let e = Matrix::<f32>::zeros(2, 7);
    assert!(matches!(state.head_forward(&e, "a"), Err(Error::Shape { .. })));
    assert!(matches!(state.head_forward(&Matrix::zeros(2, 8), "zz"), Err(Error::UnknownDataset(_))));
}

#[test]
fn eval_is_deterministic_and_batch_independent() {
    let mut state = ModelState::new(desk_config(false), &[("a".into(), classes(2))], 3).unwrap();
    // Move running statistics away from their initial values.
    for s in 0..3 {
        state.encoder_forward(&random_batch(8, 100 + s), "a", Mode::Train).unwrap();
    }
    let x = random_batch(9, 7);
    let full = state.encoder_forward(&x, "a", Mode::Eval).unwrap();
    let again = state.encoder_forward(&x, "a", Mode::Eval).unwrap();
    assert_eq!(full.data, again.data);
    for i in 0..x.n {
        let one = Tensor4::from_vec(x.sample(i).to_vec(), 1, 1, 100, 96);
        let e = state.encoder_forward(&one, "a", Mode::Eval).unwrap();
        for (a, b) in e.row(0).iter().zip(full.row(i)) {
            assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn aware_norm_keeps_separate_statistics_over_shared_convs() {
    let ds = [("a".to_string(), classes(2)), ("b".to_string(), classes(2))];
    let mut state = ModelState::new(desk_config(true), &ds, 5).unwrap();
    let before = state.encoder.blocks[0].convs[0].value.clone();
    let xa = random_batch(4, 1);
    let xb = Tensor4::from_vec(xa.data.iter().map(|v| v * 3.0 + 1.0).collect(), 4, 1, 100, 96);
    state.encoder_forward(&xa, "a", Mode::Train).unwrap();
    state.encoder_forward(&xb, "b", Mode::Train).unwrap();
    let site = &state.encoder.blocks[0].norms[0];
    assert_eq!(site.len(), 2);
    assert_ne!(site[0].running_mean, site[1].running_mean);
    assert_eq!(state.encoder.blocks[0].convs[0].value, before);
    assert!(matches!(state.encoder_forward(&xa, "zz", Mode::Eval), Err(Error::UnknownDataset(_))));
}

#[test]
fn shared_norm_accepts_any_dataset_name() {
    let mut state = ModelState::new(desk_config(false), &[("a".into(), classes(2))], 5).unwrap();
    assert_eq!(state.encoder.num_norm_sets(), 1);
    state.encoder_forward(&random_batch(2, 1), "other", Mode::Eval).unwrap();
}

/// Finite-difference check of the whole encoder plus head on a tiny input.
#[test]
fn end_to_end_gradient_matches_finite_differences() {
    let mut cfg = desk_config(false);
    cfg.features.patch_frames = 8;
    cfg.features.n_mels = 8;
    cfg.encoder.widths = vec![3, 4];
    cfg.head_hidden = 5;
    let mut state = ModelState::new(cfg, &[("a".into(), classes(3))], 11).unwrap();
    let mut rng = seed::rng(4);
    let x = Tensor4::from_vec((0..4 * 64).map(|_| rng.gen::<f32>()).collect(), 4, 1, 8, 8);
    let probe: Vec<f32> = (0..4 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let loss = |s: &mut ModelState| -> f64 {
        let (e, _) = s.encoder.forward_train(&x, "a").unwrap();
        let logits = s.head_forward(&e, "a").unwrap();
        logits.data.iter().zip(&probe).map(|(a, b)| (*a as f64) * (*b as f64)).sum()
    };

    state.zero_grad();
    let (e, cache) = state.encoder.clone().forward_train(&x, "a").unwrap();
    let head = state.heads.get_mut("a").unwrap();
    let (_, hcache) = head.forward(&e);
    let d_emb = head.backward(hcache, &Matrix::from_vec(probe.clone(), 4, 3));
    state.encoder.backward(cache, &d_emb);

    let h = 3e-4f32;
    let grads: Vec<(String, Vec<f32>)> = state
        .params_mut()
        .into_iter()
        .map(|(n, p)| (n, p.grad.clone()))
        .collect();
    for (name, grad) in grads {
        for idx in [0, grad.len() / 2, grad.len() - 1] {
            let set = |s: &mut ModelState, v: f32| {
                for (n, p) in s.params_mut() {
                    if n == name {
                        p.value[idx] = v;
                    }
                }
            };
            let orig = state.params_mut().into_iter().find(|(n, _)| *n == name).unwrap().1.value[idx];
            set(&mut state, orig + h);
            let up = loss(&mut state.clone());
            set(&mut state, orig - h);
            let down = loss(&mut state.clone());
            set(&mut state, orig);
            let numeric = (up - down) / (2.0 * h as f64);
            let analytic = grad[idx] as f64;
            let tol = 2e-2 * (1.0 + numeric.abs().max(analytic.abs()));
            assert!((numeric - analytic).abs() < tol, "{name}[{idx}]: analytic {analytic} numeric {numeric}");
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let ds = [("a".to_string(), classes(3)), ("b".to_string(), classes(4))];
    let mut state = ModelState::new(desk_config(true), &ds, 9).unwrap();
    state.encoder_forward(&random_batch(3, 2), "b", Mode::Train).unwrap();
    state.meta.epoch = 4;
    state.meta.history = vec![1.5, 0.25];
    state.meta.mean_val_loss = Some(0.25);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&state, &path).unwrap();
    let loaded = load_checkpoint(&path, Some(&state.config)).unwrap();
    assert_eq!(loaded.meta, state.meta);
    assert_eq!(loaded.dataset_ids(), state.dataset_ids());
    for (a, b) in loaded.tensors().iter().zip(state.tensors()) {
        assert_eq!(a.name, b.name);
        let bits = |d: &[f32]| d.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.data), bits(b.data), "{}", a.name);
    }
    assert_eq!(encode_checkpoint(&loaded), encode_checkpoint(&state));
}

#[test]
fn checkpoint_rejects_mismatched_config() {
    let state = ModelState::new(desk_config(false), &[("a".into(), classes(2))], 0).unwrap();
    let bytes = encode_checkpoint(&state);
    let mut other = desk_config(false);
    other.encoder.widths = vec![4, 6, 8, 16];
    assert!(matches!(decode_checkpoint(&bytes, Some(&other)), Err(Error::DigestMismatch { .. })));
    let mut other = desk_config(false);
    other.features.hop = 512;
    assert!(matches!(decode_checkpoint(&bytes, Some(&other)), Err(Error::DigestMismatch { .. })));
}

#[test]
fn checkpoint_rejects_corruption_and_truncation() {
    let state = ModelState::new(desk_config(false), &[("a".into(), classes(2))], 0).unwrap();
    let bytes = encode_checkpoint(&state);
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x10;
    assert!(matches!(decode_checkpoint(&flipped, None), Err(Error::Checkpoint(_))));
    assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 7], None), Err(Error::Checkpoint(_))));
    assert!(matches!(decode_checkpoint(b"nope", None), Err(Error::Checkpoint(_))));
}

#[test]
fn frozen_encoder_rejects_training() {
    let state = ModelState::new(desk_config(false), &[("a".into(), classes(2))], 0).unwrap();
    let frozen = freeze_encoder(&state);
    let x = random_batch(2, 0);
    let e = frozen.embed(&x, "a").unwrap();
    assert_eq!(e.cols, 8);
    assert!(matches!(frozen.forward(&x, "a", Mode::Train), Err(Error::Frozen(_))));
}

#[test]
fn new_dataset_adds_head_and_norm_set() {
    let mut state = ModelState::new(desk_config(true), &[("a".into(), classes(2))], 0).unwrap();
    let before = state.param_count(ParamScope::Encoder);
    state.add_dataset("b", classes(6), 1);
    assert_eq!(state.dataset_ids(), vec!["a", "b"]);
    assert_eq!(state.param_count(ParamScope::Encoder), before + 2 * 2 * (4 + 6 + 8 + 8));
    assert_eq!(state.heads.get("b").unwrap().num_classes(), 6);
}

#[test]
fn zero_embedding_through_zero_head_gives_bias() {
    let mut state = ModelState::new(desk_config(false), &[("a".into(), classes(4))], 0).unwrap();
    let head = state.heads.get_mut("a").unwrap();
    head.fc1_weight.value.fill(0.0);
    head.fc2_weight.value.fill(0.0);
    head.fc2_bias.value = vec![0.5, -1.0, 2.0, 0.0];
    let logits = state.head_forward(&Matrix::zeros(1, 8), "a").unwrap();
    assert_eq!(logits.data, vec![0.5, -1.0, 2.0, 0.0]);
}

#[test]
fn aware_running_means_separate_under_offset_inputs() {
    let ds = [("a".to_string(), classes(2)), ("b".to_string(), classes(2))];
    let mut state = ModelState::new(desk_config(true), &ds, 2).unwrap();
    for step in 0..50 {
        let x = random_batch(2, step);
        let shifted = Tensor4::from_vec(x.data.iter().map(|v| v + 2.0).collect(), 2, 1, 100, 96);
        state.encoder_forward(&x, "a", Mode::Train).unwrap();
        state.encoder_forward(&shifted, "b", Mode::Train).unwrap();
    }
    let site = &state.encoder.blocks[0].norms[0];
    let gap = site[0]
        .running_mean
        .iter()
        .zip(&site[1].running_mean)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(gap > 0.1, "gap {gap}");
    assert_eq!(state.encoder.blocks[0].convs.len(), 2);
}

#[test]
fn frozen_matches_eval_and_round_trip_preserves_outputs() {
    let ds = [("a".to_string(), classes(2)), ("b".to_string(), classes(3))];
    let mut state = ModelState::new(desk_config(true), &ds, 8).unwrap();
    state.encoder_forward(&random_batch(4, 1), "a", Mode::Train).unwrap();
    let x = random_batch(3, 5);
    let eval = state.encoder_forward(&x, "a", Mode::Eval).unwrap();
    let frozen = freeze_encoder(&state);
    assert_eq!(frozen.embed(&x, "a").unwrap().data, eval.data);
    assert_eq!(frozen.embed(&x, "a").unwrap().data, eval.data);

    let mut loaded = decode_checkpoint(&encode_checkpoint(&state), None).unwrap();
    assert_eq!(loaded.encoder.norm_datasets, vec!["a", "b"]);
    let again = loaded.encoder_forward(&x, "a", Mode::Eval).unwrap();
    assert_eq!(again.data, eval.data);
}
