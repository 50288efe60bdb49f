#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajllm::backbone::BackboneConfig;
use trajllm::model::{Mode, ModelConfig, TrajLlm};
use trajllm::scene::{generate_synthetic_scene, label_closest_lane, SceneSample, Template};
use trajllm::tensor::{Graph, Mat, ParamGroup, ParamStore, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mat(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// D=8, K=2, one-layer backbone of width 16.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        hidden_dim: 8,
        heads: 2,
        k_modes: 2,
        top_c: 2,
        latent_dim: 4,
        mode_dim: 4,
        dropout: 0.0,
        backbone: BackboneConfig { n_layers: 1, width: 16, n_heads: 2, n_positions: 80, lora_rank: 2, ..BackboneConfig::default() },
        ..ModelConfig::default()
    }
}

/// Tiny model with nonzero adapter updates, so every path carries gradient.
pub fn tiny_model(seed: u64) -> TrajLlm {
    let mut model = TrajLlm::new(ModelConfig { seed, ..tiny_config() }).unwrap();
    let mut r = rng(seed ^ 0xADA);
    let ids: Vec<_> = model.store.iter().filter(|(_, p)| p.group == ParamGroup::Adapter).map(|(id, _)| id).collect();
    for id in ids {
        let (rows, cols) = model.store.value(id).shape();
        model.store.set_value(id, random_mat(&mut r, rows, cols, 0.1));
    }
    model
}

/// A synthetic scene keeping only its first `lanes` lane vectors valid.
pub fn scene_with_lanes(template: Template, seed: u64, lanes: usize) -> SceneSample {
    let mut s = generate_synthetic_scene(template, 0.1, seed).unwrap();
    let mut kept = 0;
    for m in s.lane_mask.iter_mut() {
        if *m {
            kept += 1;
            *m = kept <= lanes;
        }
    }
    s.lane_labels = label_closest_lane(&s.lanes, &s.lane_mask, &s.gt_future).unwrap();
    s
}

/// `|a - n| / max(|a|, |n|, 1e-4)` over whole gradient vectors; the floor
/// keeps gradients that vanish analytically (a key bias under softmax) from
/// dividing rounding noise by zero.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-4)
}

/// Central differences of `f` at `x` for every entry.
pub fn numeric_gradient(x: &Mat, h: f64, mut f: impl FnMut(&Mat) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.clone();
            p.data_mut()[i] += h;
            let up = f(&p);
            p.data_mut()[i] -= 2.0 * h;
            let down = f(&p);
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Checks d f / d inputs for a scalar function built on a graph; returns
/// the worst relative error over the inputs.
pub fn check_inputs(inputs: &[Mat], h: f64, build: impl Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    let store = ParamStore::new();
    let mut g = Graph::new(&store, false);
    let vars: Vec<Var> = inputs.iter().map(|m| g.input(m.clone())).collect();
    let out = build(&mut g, &vars);
    let grads = g.backward(out);
    let mut worst: f64 = 0.0;
    for (i, x) in inputs.iter().enumerate() {
        let analytic = grads.wrt(vars[i]).cloned().unwrap_or_else(|| Mat::zeros(x.rows(), x.cols()));
        let numeric = numeric_gradient(x, h, |p| {
            let mut g = Graph::new(&store, false);
            let vars: Vec<Var> =
                inputs.iter().enumerate().map(|(j, m)| g.constant(if j == i { p.clone() } else { m.clone() })).collect();
            let out = build(&mut g, &vars);
            g.scalar(out)
        });
        worst = worst.max(relative_error(analytic.data(), &numeric));
    }
    worst
}

/// Relative error of the total-loss parameter gradient of `model` on
/// `sample`, probing three random entries of every trainable tensor.
pub fn pipeline_gradient_error(model: &mut TrajLlm, sample: &SceneSample, seed: u64, h: f64) -> f64 {
    let loss_of = |m: &TrajLlm| {
        let mut g = Graph::new(&m.store, false);
        let fwd = m.forward_sample(&mut g, sample, &mut Mode::Eval).unwrap();
        m.sample_loss(&mut g, sample, &fwd, 1.0).unwrap().1.total
    };
    let mut g = Graph::new(&model.store, true);
    let fwd = model.forward_sample(&mut g, sample, &mut Mode::Eval).unwrap();
    let (loss, _) = model.sample_loss(&mut g, sample, &fwd, 1.0).unwrap();
    let grads = g.backward(loss);
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let mut r = rng(seed);
    for id in model.store.trainable_ids() {
        let shape = model.store.value(id).shape();
        let ga = grads.param_grad(id).unwrap_or_else(|| Mat::zeros(shape.0, shape.1));
        for _ in 0..3 {
            let i = r.random_range(0..shape.0 * shape.1);
            let orig = model.store.value(id).data()[i];
            model.store.value_mut(id).data_mut()[i] = orig + h;
            let up = loss_of(model);
            model.store.value_mut(id).data_mut()[i] = orig - h;
            let down = loss_of(model);
            model.store.value_mut(id).data_mut()[i] = orig;
            analytic.push(ga.data()[i]);
            numeric.push((up - down) / (2.0 * h));
        }
    }
    assert!(analytic.iter().any(|&a| a != 0.0), "pipeline gradient vanished");
    relative_error(&analytic, &numeric)
}
