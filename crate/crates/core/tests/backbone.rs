mod common;

use common::{random_mat, rng, tiny_config};
use proptest::prelude::*;
use rand::SeedableRng;
use trajllm::archive::Archive;
use trajllm::backbone::{
    fingerprint, lora_forward, required_tensors, trainable_parameters, AdapterMode, Backbone, BackboneConfig, BackboneSource,
    BACKBONE_PATH_ENV,
};
use trajllm::model::{Ablation, ModelConfig, TrajLlm};
use trajllm::nn::ModelRng;
use trajllm::scene::{generate_dataset, Template};
use trajllm::tensor::{AdamW, Mat, ParamGroup, ParamStore};
use trajllm::training::train_step;

fn naive_lora(w: &Mat, a: &Mat, b: &Mat, scale: f64, x: &Mat) -> Mat {
    let (d, k) = w.shape();
    let r = a.rows();
    Mat::from_fn(x.rows(), d, |n, i| {
        let base: f64 = (0..k).map(|j| w.get(i, j) * x.get(n, j)).sum();
        let low: f64 = (0..r).map(|q| b.get(i, q) * (0..k).map(|j| a.get(q, j) * x.get(n, j)).sum::<f64>()).sum();
        base + scale * low
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lora_forward_matches_loops_and_is_linear(seed in 0u64..10_000, d in 1usize..9, k in 1usize..9, r in 1usize..4, n in 1usize..4, alpha in -3.0f64..3.0) {
        let mut g = rng(seed);
        let w = random_mat(&mut g, d, k, 1.0);
        let a = random_mat(&mut g, r, k, 1.0);
        let b = random_mat(&mut g, d, r, 1.0);
        let x = random_mat(&mut g, n, k, 2.0);
        let y = lora_forward(&w, &a, &b, 0.5, &x).unwrap();
        prop_assert!(y.max_abs_diff(&naive_lora(&w, &a, &b, 0.5, &x)) < 1e-12);
        let ax = x.map(|v| alpha * v);
        let ya = lora_forward(&w, &a, &b, 0.5, &ax).unwrap();
        prop_assert!(ya.max_abs_diff(&y.map(|v| alpha * v)) < 1e-10);
    }
}

#[test]
fn lora_forward_rejects_shape_mismatch() {
    let w = Mat::zeros(3, 4);
    assert!(lora_forward(&w, &Mat::zeros(2, 5), &Mat::zeros(3, 2), 1.0, &Mat::zeros(1, 4)).is_err());
    assert!(lora_forward(&w, &Mat::zeros(2, 4), &Mat::zeros(3, 2), 1.0, &Mat::zeros(1, 3)).is_err());
}

fn backbone(rank: usize) -> (ParamStore, Backbone) {
    let mut store = ParamStore::new();
    let cfg = BackboneConfig { n_layers: 2, width: 32, n_heads: 4, lora_rank: rank, ..BackboneConfig::default() };
    let bb = Backbone::load(&cfg, 16, &mut store, &mut ModelRng::seed_from_u64(0)).unwrap();
    (store, bb)
}

#[test]
fn fresh_adapters_leave_the_frozen_forward_unchanged() {
    let (store, bb) = backbone(4);
    let mut r = rng(9);
    let joint = random_mat(&mut r, 20, 16, 1.0);
    let mask: Vec<bool> = (0..20).map(|i| i % 5 != 3).collect();
    let with = bb.backbone_forward(&store, &joint, &mask, AdapterMode::Apply).unwrap();
    let without = bb.backbone_forward(&store, &joint, &mask, AdapterMode::Bypass).unwrap();
    assert!(with.max_abs_diff(&without) < 1e-6);
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            assert!(with.row(i).iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn trained_adapters_change_the_forward() {
    let (mut store, bb) = backbone(4);
    let mut r = rng(2);
    for id in bb.adapter_ids() {
        let (rows, cols) = store.value(id).shape();
        store.set_value(id, random_mat(&mut r, rows, cols, 0.5));
    }
    let joint = random_mat(&mut rng(1), 6, 16, 1.0);
    let with = bb.backbone_forward(&store, &joint, &[true; 6], AdapterMode::Apply).unwrap();
    let without = bb.backbone_forward(&store, &joint, &[true; 6], AdapterMode::Bypass).unwrap();
    assert!(with.max_abs_diff(&without) > 1e-6);
}

#[test]
fn adapters_receive_gradient_and_base_weights_do_not() {
    let model = TrajLlm::new(ModelConfig { hidden_dim: 16, heads: 2, ..tiny_config() }).unwrap();
    let sample = trajllm::scene::generate_synthetic_scene(Template::LeftTurn, 0.1, 2).unwrap();
    let mut g = trajllm::tensor::Graph::new(&model.store, true);
    let fwd = model.forward_sample(&mut g, &sample, &mut trajllm::model::Mode::Eval).unwrap();
    let (loss, _) = model.sample_loss(&mut g, &sample, &fwd, 1.0).unwrap();
    let grads = g.backward(loss);
    let mut adapter_signal = false;
    for (id, p) in model.store.iter() {
        match p.group {
            ParamGroup::Backbone => assert!(grads.param_grad(id).is_none(), "{} got a gradient", p.name),
            ParamGroup::Adapter => adapter_signal |= grads.param_grad(id).is_some_and(|m| m.max_abs() > 0.0),
            ParamGroup::Task => {}
        }
    }
    assert!(adapter_signal);
}

#[test]
fn optimizer_steps_never_touch_base_weights() {
    let mut model = TrajLlm::new(ModelConfig { hidden_dim: 16, heads: 2, ..tiny_config() }).unwrap();
    let before: Vec<(String, Vec<u64>)> = model
        .store
        .iter()
        .filter(|(_, p)| p.group == ParamGroup::Backbone)
        .map(|(_, p)| (p.name.clone(), p.value.data().iter().map(|v| v.to_bits()).collect()))
        .collect();
    let adapters_before: Vec<Mat> = model.backbone.adapter_ids().iter().map(|&id| model.store.value(id).clone()).collect();
    let data = generate_dataset(&Template::ALL, 4, 0.1, 3).unwrap();
    let mut opt = AdamW::new(1e-2, 0.01);
    let mut r = ModelRng::seed_from_u64(0);
    for step in 0..10 {
        let batch = [&data[step % 4], &data[(step + 1) % 4]];
        train_step(&mut model, &mut opt, &batch, 1.0, 1.0, &mut r).unwrap();
    }
    let after: Vec<(String, Vec<u64>)> = model
        .store
        .iter()
        .filter(|(_, p)| p.group == ParamGroup::Backbone)
        .map(|(_, p)| (p.name.clone(), p.value.data().iter().map(|v| v.to_bits()).collect()))
        .collect();
    assert_eq!(before, after);
    let moved = model.backbone.adapter_ids().iter().zip(&adapters_before).any(|(&id, m)| model.store.value(id) != m);
    assert!(moved, "adapters should train");
}

#[test]
fn census_counts_adapters_by_ablation() {
    let cfg = ModelConfig { hidden_dim: 16, heads: 2, ..tiny_config() };
    let full = TrajLlm::new(cfg.clone()).unwrap();
    let c = trainable_parameters(&full.store);
    assert_eq!(c.adapter, cfg.backbone.lora_census());
    assert_eq!(c.trainable() + c.frozen, c.total);
    let no_lora = TrajLlm::new(ModelConfig { ablation: Ablation::NoLora, ..cfg.clone() }).unwrap();
    assert_eq!(trainable_parameters(&no_lora.store).adapter, 0);
    let no_llm = TrajLlm::new(ModelConfig { ablation: Ablation::NoLlm, ..cfg }).unwrap();
    let c = trainable_parameters(&no_llm.store);
    assert_eq!(c.adapter, 0);
    assert!(no_llm.store.iter().filter(|(_, p)| p.name.starts_with("align.")).all(|(_, p)| !p.trainable));
}

#[test]
fn gpt2_small_adapter_census() {
    let cfg = BackboneConfig { lora_rank: 4, ..BackboneConfig::pretrained("unused") };
    assert_eq!(cfg.lora_census(), 147_456);
}

/// Writes a GPT-2 style file (names under `transformer.`) for a small shape.
fn write_pretrained(path: &std::path::Path, cfg: &BackboneConfig, seed: u64) {
    let mut archive = Archive::default();
    let mut r = rng(seed);
    for (name, dims) in required_tensors(&cfg.shape()) {
        let n: usize = dims.iter().product();
        let data = random_mat(&mut r, 1, n, 0.05).into_vec();
        archive.insert(format!("transformer.{name}"), dims, data);
    }
    archive.insert("transformer.wte.weight".to_string(), vec![7, cfg.width], vec![0.0; 7 * cfg.width]);
    archive.save(path).unwrap();
}

#[test]
fn pretrained_weights_load_from_config_path_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let small = BackboneConfig {
        source: BackboneSource::Pretrained,
        n_layers: 1,
        width: 16,
        n_heads: 2,
        n_positions: 80,
        ..BackboneConfig::default()
    };
    let file_a = dir.path().join("a.safetensors");
    let file_b = dir.path().join("b.safetensors");
    write_pretrained(&file_a, &small, 1);
    write_pretrained(&file_b, &small, 2);

    let load = |cfg: &BackboneConfig| {
        let mut store = ParamStore::new();
        Backbone::load(cfg, 8, &mut store, &mut ModelRng::seed_from_u64(0)).map(|_| fingerprint(&store))
    };
    let from_a = load(&BackboneConfig { weights_path: Some(file_a.clone()), ..small.clone() }).unwrap();
    let from_b = load(&BackboneConfig { weights_path: Some(file_b.clone()), ..small.clone() }).unwrap();
    assert_ne!(from_a, from_b);

    // the environment variable overrides the configured path
    std::env::set_var(BACKBONE_PATH_ENV, &file_b);
    let overridden = load(&BackboneConfig { weights_path: Some(file_a.clone()), ..small.clone() });
    let no_path = load(&small);
    std::env::remove_var(BACKBONE_PATH_ENV);
    assert_eq!(overridden.unwrap(), from_b);
    assert_eq!(no_path.unwrap(), from_b);
    assert!(load(&small).is_err());

    // wrong width: every problem is reported
    let err = load(&BackboneConfig { width: 32, n_heads: 2, weights_path: Some(file_a), ..small }).unwrap_err().to_string();
    assert!(err.contains("wpe.weight") && err.contains("ln_f.bias"), "{err}");
}
