//! Training loop, metrics, few-shot subsetting and checkpoints.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::archive::Archive;
use crate::backbone::{fingerprint, fingerprint_hex, BackboneConfig, BackboneSource};
use crate::decoder::TrajectoryMixture;
use crate::model::{Ablation, LossParts, Mode, ModelConfig, TrajLlm};
use crate::nn::ModelRng;
use crate::scene::{Point, SceneSample};
use crate::tensor::{clip_global_norm, AdamW, Grads, Graph, Mat, ParamGroup};
use crate::{Error, Result};

pub const MISS_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub heads: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub k_modes: usize,
    pub lambda_lane: f64,
    pub top_c: usize,
    pub lora_rank: usize,
    pub backbone: BackboneSource,
    pub backbone_layers: usize,
    pub backbone_width: usize,
    pub backbone_heads: usize,
    pub backbone_path: Option<PathBuf>,
    pub backbone_seed: u64,
    pub positional_embeddings: bool,
    pub latent_dim: usize,
    pub mode_dim: usize,
    pub dropout: f64,
    pub glu_residual: bool,
    pub stochastic_latent: bool,
    pub epochs: usize,
    /// Overrides `epochs` when set.
    pub max_steps: Option<usize>,
    /// Validation cadence in steps; `None` means once per epoch.
    pub eval_every: Option<usize>,
    pub seed: u64,
    pub ablation: Ablation,
    pub few_shot_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 128,
            heads: 8,
            batch_size: 132,
            lr: 1e-3,
            weight_decay: 0.01,
            grad_clip: 1.0,
            k_modes: 5,
            lambda_lane: 1.0,
            top_c: 2,
            lora_rank: 4,
            backbone: BackboneSource::Surrogate,
            backbone_layers: 2,
            backbone_width: 128,
            backbone_heads: 4,
            backbone_path: None,
            backbone_seed: 1,
            positional_embeddings: true,
            latent_dim: 16,
            mode_dim: 32,
            dropout: 0.1,
            glu_residual: true,
            stochastic_latent: false,
            epochs: 100,
            max_steps: None,
            eval_every: None,
            seed: 0,
            ablation: Ablation::Full,
            few_shot_ratio: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and non-negative");
        }
        if !(self.few_shot_ratio > 0.0 && self.few_shot_ratio <= 1.0) {
            return bad("few_shot_ratio must lie in (0, 1]");
        }
        if !(self.lambda_lane >= 0.0 && self.lambda_lane.is_finite()) {
            return bad("lambda_lane must be finite and non-negative");
        }
        if self.max_steps.is_none() && self.epochs == 0 {
            return bad("epochs must be positive when max_steps is unset");
        }
        if self.eval_every == Some(0) {
            return bad("eval_every must be positive");
        }
        self.model_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        let source = self.backbone;
        ModelConfig {
            hidden_dim: self.hidden_dim,
            heads: self.heads,
            k_modes: self.k_modes,
            top_c: self.top_c,
            latent_dim: self.latent_dim,
            mode_dim: self.mode_dim,
            dropout: self.dropout,
            glu_residual: self.glu_residual,
            stochastic_latent: self.stochastic_latent,
            ablation: self.ablation,
            seed: self.seed,
            backbone: BackboneConfig {
                source,
                n_layers: self.backbone_layers,
                width: self.backbone_width,
                n_heads: self.backbone_heads,
                n_positions: if source == BackboneSource::Pretrained { 1024 } else { 128 },
                seed: self.backbone_seed,
                weights_path: self.backbone_path.clone(),
                lora_rank: self.lora_rank,
                lora_scale: 1.0,
                positional: self.positional_embeddings,
            },
        }
    }

    /// Effective lane-loss weight: the lane ablation forces zero.
    pub fn lambda(&self) -> f64 {
        if self.ablation == Ablation::NoLane {
            0.0
        } else {
            self.lambda_lane
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub min_ade: f64,
    pub min_fde: f64,
    pub miss_rate: f64,
    pub sample_count: usize,
    pub k_modes: usize,
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Smallest mean-over-time L2 error across modes.
pub fn min_ade(mixture: &TrajectoryMixture, gt: &[Point]) -> f64 {
    (0..mixture.k())
        .map(|k| gt.iter().enumerate().map(|(t, &p)| dist(mixture.mu_at(k, t), p)).sum::<f64>() / gt.len() as f64)
        .fold(f64::INFINITY, f64::min)
}

/// Smallest final-step L2 error across modes.
pub fn min_fde(mixture: &TrajectoryMixture, gt: &[Point]) -> f64 {
    let t = gt.len() - 1;
    (0..mixture.k()).map(|k| dist(mixture.mu_at(k, t), gt[t])).fold(f64::INFINITY, f64::min)
}

/// Fraction of samples whose best endpoint error strictly exceeds 2 m.
pub fn miss_rate(mixtures: &[TrajectoryMixture], gts: &[Vec<Point>]) -> Result<f64> {
    if mixtures.is_empty() || mixtures.len() != gts.len() {
        return Err(Error::InvalidInput(format!("miss rate over {} mixtures and {} futures", mixtures.len(), gts.len())));
    }
    let misses = mixtures.iter().zip(gts).filter(|(m, g)| min_fde(m, g) > MISS_THRESHOLD).count();
    Ok(misses as f64 / mixtures.len() as f64)
}

/// Aggregates the three metrics over already-computed mixtures.
pub fn metrics_report(mixtures: &[TrajectoryMixture], gts: &[Vec<Point>], k_modes: usize) -> Result<MetricsReport> {
    let mr = miss_rate(mixtures, gts)?;
    let n = mixtures.len() as f64;
    Ok(MetricsReport {
        min_ade: mixtures.iter().zip(gts).map(|(m, g)| min_ade(m, g)).sum::<f64>() / n,
        min_fde: mixtures.iter().zip(gts).map(|(m, g)| min_fde(m, g)).sum::<f64>() / n,
        miss_rate: mr,
        sample_count: mixtures.len(),
        k_modes,
    })
}

/// Seeded shuffle, then the first `max(1, floor(ratio * n))` samples.
pub fn few_shot_subset(samples: &[SceneSample], ratio: f64, seed: u64) -> Result<Vec<SceneSample>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidInput(format!("few-shot ratio {ratio} outside (0, 1]")));
    }
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut ModelRng::seed_from_u64(seed));
    let keep = ((ratio * samples.len() as f64).floor() as usize).max(1);
    Ok(idx[..keep].iter().map(|&i| samples[i].clone()).collect())
}

/// What produces predictions for a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predictor {
    Model,
    /// Debug hook: every mode copies the ground truth.
    GroundTruth,
}

impl Predictor {
    fn tag(self) -> &'static str {
        match self {
            Predictor::Model => "model",
            Predictor::GroundTruth => "ground_truth",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: TrajLlm,
    pub predictor: Predictor,
}

impl Checkpoint {
    pub fn predict(&self, sample: &SceneSample) -> Result<TrajectoryMixture> {
        match self.predictor {
            Predictor::Model => Ok(self.model.predict(sample)?.mixture),
            Predictor::GroundTruth => Ok(TrajectoryMixture::from_ground_truth(&sample.gt_future, self.model.k_modes())),
        }
    }
}

/// Deterministic evaluation; `k_modes` must match the model.
pub fn evaluate(checkpoint: &Checkpoint, scenes: &[SceneSample], k_modes: usize) -> Result<MetricsReport> {
    let k = checkpoint.model.k_modes();
    if k_modes != k {
        return Err(Error::InvalidInput(format!("requested K={k_modes} but the checkpoint predicts K={k}")));
    }
    let mixtures = scenes.iter().map(|s| checkpoint.predict(s)).collect::<Result<Vec<_>>>()?;
    let gts: Vec<Vec<Point>> = scenes.iter().map(|s| s.gt_future.clone()).collect();
    metrics_report(&mixtures, &gts, k)
}

pub fn evaluate_model(model: &TrajLlm, scenes: &[SceneSample]) -> Result<MetricsReport> {
    let mixtures = scenes.iter().map(|s| Ok(model.predict(s)?.mixture)).collect::<Result<Vec<_>>>()?;
    let gts: Vec<Vec<Point>> = scenes.iter().map(|s| s.gt_future.clone()).collect();
    metrics_report(&mixtures, &gts, model.k_modes())
}

/// Fraction of (scene, step) pairs whose most probable lane is the label.
pub fn lane_accuracy(model: &TrajLlm, scenes: &[SceneSample]) -> Result<Option<f64>> {
    let (mut hits, mut total) = (0usize, 0usize);
    for s in scenes {
        let Some(field) = model.predict(s)?.lanes else { return Ok(None) };
        for (pred, label) in field.argmax_per_step().into_iter().zip(s.label_indices()) {
            hits += usize::from(pred == label);
            total += 1;
        }
    }
    Ok((total > 0).then(|| hits as f64 / total as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub lane: f64,
    pub reg: f64,
    pub cls: f64,
    pub total: f64,
}

pub fn history_csv(history: &[HistoryRow]) -> String {
    let mut out = String::from("step,L_lane,L_reg,L_cls,L_total\n");
    for r in history {
        out.push_str(&format!("{},{},{},{},{}\n", r.step, r.lane, r.reg, r.cls, r.total));
    }
    out
}

/// Returned by a training observer after each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters with the best validation minADE (the final ones when no
    /// validation set was given).
    pub best: TrajLlm,
    pub last: TrajLlm,
    pub history: Vec<HistoryRow>,
    pub best_val: Option<MetricsReport>,
    pub steps: usize,
}

/// Cosine decay from `lr` to zero over `total` steps.
pub fn cosine_lr(lr: f64, step: usize, total: usize) -> f64 {
    if total <= 1 {
        return lr;
    }
    0.5 * lr * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos())
}

/// One optimizer step on `batch`; returns the mean loss components.
pub fn train_step(model: &mut TrajLlm, opt: &mut AdamW, batch: &[&SceneSample], lambda: f64, clip: f64, rng: &mut ModelRng) -> Result<LossParts> {
    let mut grads = Grads::new(&model.store);
    let mut mean = LossParts::default();
    for s in batch {
        let mut g = Graph::new(&model.store, true);
        let fwd = model.forward_sample(&mut g, s, &mut Mode::Train(rng))?;
        let (loss, parts) = model.sample_loss(&mut g, s, &fwd, lambda)?;
        mean.lane += parts.lane;
        mean.reg += parts.reg;
        mean.cls += parts.cls;
        mean.total += parts.total;
        if parts.total.is_finite() {
            g.backward(loss).accumulate_into(&mut grads);
        }
    }
    let n = batch.len() as f64;
    mean = LossParts { lane: mean.lane / n, reg: mean.reg / n, cls: mean.cls / n, total: mean.total / n };
    let step = opt.steps_taken() as usize;
    if ![mean.lane, mean.reg, mean.cls, mean.total].iter().all(|v| v.is_finite()) || !grads.is_finite() {
        return Err(Error::Diverged { step, lane: mean.lane, reg: mean.reg, cls: mean.cls });
    }
    grads.scale(1.0 / n);
    if clip > 0.0 {
        clip_global_norm(&mut grads, clip);
    }
    opt.step(&mut model.store, &grads);
    Ok(mean)
}

pub fn train(config: &TrainConfig, train_scenes: &[SceneSample], val_scenes: &[SceneSample]) -> Result<TrainOutcome> {
    train_with(config, train_scenes, val_scenes, |_, _, _| Control::Continue)
}

/// Training with an observer called after every step with the step index,
/// the model and the step's loss components.
pub fn train_with(
    config: &TrainConfig,
    train_scenes: &[SceneSample],
    val_scenes: &[SceneSample],
    mut observe: impl FnMut(usize, &TrajLlm, &LossParts) -> Control,
) -> Result<TrainOutcome> {
    config.validate()?;
    let subset = few_shot_subset(train_scenes, config.few_shot_ratio, config.seed)?;
    if subset.is_empty() {
        return Err(Error::InvalidInput("no training scenes".into()));
    }
    let mut model = TrajLlm::new(config.model_config())?;
    let lambda = config.lambda();
    let batch = config.batch_size.min(subset.len());
    let per_epoch = subset.len().div_ceil(batch);
    let total = config.max_steps.unwrap_or(config.epochs * per_epoch);
    let eval_every = config.eval_every.unwrap_or(per_epoch);
    let mut opt = AdamW::new(config.lr, config.weight_decay);
    let mut rng = ModelRng::seed_from_u64(config.seed ^ 0x5EED);
    let mut order: Vec<usize> = (0..subset.len()).collect();
    let mut history = Vec::with_capacity(total);
    let mut best: Option<(MetricsReport, TrajLlm)> = None;
    let mut steps = 0;

    'outer: while steps < total {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            if steps >= total {
                break 'outer;
            }
            opt.lr = cosine_lr(config.lr, steps, total);
            let refs: Vec<&SceneSample> = chunk.iter().map(|&i| &subset[i]).collect();
            let parts = train_step(&mut model, &mut opt, &refs, lambda, config.grad_clip, &mut rng)?;
            history.push(HistoryRow { step: steps, lane: parts.lane, reg: parts.reg, cls: parts.cls, total: parts.total });
            log::debug!("step {steps}: total {:.4} lane {:.4} reg {:.4} cls {:.4}", parts.total, parts.lane, parts.reg, parts.cls);
            steps += 1;
            let stop = observe(steps, &model, &parts) == Control::Stop;
            if !val_scenes.is_empty() && (steps % eval_every == 0 || steps == total || stop) {
                let report = evaluate_model(&model, val_scenes)?;
                log::info!("step {steps}: val minADE {:.4} minFDE {:.4} MR {:.3}", report.min_ade, report.min_fde, report.miss_rate);
                if best.as_ref().is_none_or(|(b, _)| report.min_ade < b.min_ade) {
                    best = Some((report, model.clone()));
                }
            }
            if stop {
                break 'outer;
            }
        }
    }
    let (best_val, best_model) = match best {
        Some((r, m)) => (Some(r), m),
        None => (None, model.clone()),
    };
    Ok(TrainOutcome { best: best_model, last: model, history, best_val, steps })
}

const FORMAT_TAG: &str = "trajllm-checkpoint-1";

/// Writes every non-backbone tensor plus the configuration and the
/// backbone fingerprint.
pub fn save_checkpoint(model: &TrajLlm, path: impl AsRef<Path>) -> Result<()> {
    save_with_predictor(model, Predictor::Model, path)
}

/// Checkpoint whose predictions copy the ground truth (evaluation debugging).
pub fn save_ground_truth_checkpoint(model: &TrajLlm, path: impl AsRef<Path>) -> Result<()> {
    save_with_predictor(model, Predictor::GroundTruth, path)
}

fn save_with_predictor(model: &TrajLlm, predictor: Predictor, path: impl AsRef<Path>) -> Result<()> {
    let mut archive = Archive::default();
    for (_, p) in model.store.iter().filter(|(_, p)| p.group != ParamGroup::Backbone) {
        archive.insert(p.name.clone(), vec![p.value.rows(), p.value.cols()], p.value.data().to_vec());
    }
    let config = serde_json::to_string(&model.config).expect("config serializes");
    archive.metadata.insert("format".into(), FORMAT_TAG.into());
    archive.metadata.insert("config".into(), config);
    archive.metadata.insert("backbone_fingerprint".into(), fingerprint_hex(fingerprint(&model.store)));
    archive.metadata.insert("predictor".into(), predictor.tag().into());
    archive.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let archive = Archive::load(path)?;
    let meta = |k: &str| archive.metadata.get(k).ok_or_else(|| Error::Checkpoint(format!("{}: missing {k}", path.display())));
    if meta("format")? != FORMAT_TAG {
        return Err(Error::Checkpoint(format!("{}: unknown format {}", path.display(), meta("format")?)));
    }
    let config: ModelConfig =
        serde_json::from_str(meta("config")?).map_err(|e| Error::Checkpoint(format!("invalid config: {e}")))?;
    let predictor = match meta("predictor")?.as_str() {
        "model" => Predictor::Model,
        "ground_truth" => Predictor::GroundTruth,
        other => return Err(Error::Checkpoint(format!("unknown predictor {other}"))),
    };
    let mut model = TrajLlm::new(config)?;
    let found = fingerprint_hex(fingerprint(&model.store));
    let expected = meta("backbone_fingerprint")?;
    if &found != expected {
        return Err(Error::Checkpoint(format!("backbone fingerprint {found} does not match checkpoint {expected}")));
    }
    let mut problems = Vec::new();
    let ids: Vec<_> = model.store.iter().filter(|(_, p)| p.group != ParamGroup::Backbone).map(|(id, p)| (id, p.name.clone())).collect();
    for (id, name) in ids {
        match archive.tensors.get(&name) {
            None => problems.push(format!("missing {name}")),
            Some(t) => {
                let shape = model.store.value(id).shape();
                if t.shape != [shape.0, shape.1] {
                    problems.push(format!("{name}: expected {shape:?}, found {:?}", t.shape));
                } else {
                    model.store.set_value(id, Mat::from_vec(shape.0, shape.1, t.data.clone()));
                }
            }
        }
    }
    if let Some(extra) = archive.tensors.keys().find(|n| model.store.find(n).is_none()) {
        problems.push(format!("unexpected tensor {extra}"));
    }
    if !problems.is_empty() {
        return Err(Error::Checkpoint(problems.join("; ")));
    }
    Ok(Checkpoint { model, predictor })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixture(offsets: &[(f64, f64)]) -> (TrajectoryMixture, Vec<Point>) {
        let gt: Vec<Point> = (0..12).map(|t| [t as f64, 0.0]).collect();
        let rows: Vec<Vec<f64>> = offsets.iter().map(|&(dx, dy)| gt.iter().flat_map(|p| [p[0] + dx, p[1] + dy]).collect()).collect();
        let k = rows.len();
        (TrajectoryMixture { pi: vec![1.0 / k as f64; k], mu: Mat::from_rows(&rows), b: Mat::filled(k, 24, 1.0) }, gt)
    }

    #[test]
    fn metric_hand_cases() {
        let (m, gt) = mixture(&[(1.0, 0.0), (3.0, 0.0)]);
        assert_eq!(min_ade(&m, &gt), 1.0);
        let (m, gt) = mixture(&[(1.0, 0.0), (0.0, 2.0)]);
        assert_eq!(min_fde(&m, &gt), 1.0);
        let (m, gt) = mixture(&[(0.0, 0.0), (5.0, 5.0)]);
        assert_eq!(min_ade(&m, &gt), 0.0);
    }

    #[test]
    fn miss_rate_threshold_is_strict() {
        let cases: Vec<_> = [1.0, 3.0, 2.1, 0.5].iter().map(|&d| mixture(&[(d, 0.0)])).collect();
        let (ms, gts): (Vec<_>, Vec<_>) = cases.into_iter().unzip();
        assert_eq!(miss_rate(&ms, &gts).unwrap(), 0.5);
        let (m, gt) = mixture(&[(2.0, 0.0)]);
        assert_eq!(miss_rate(&[m], &[gt]).unwrap(), 0.0);
        let (m, gt) = mixture(&[(2.5, 0.0)]);
        assert_eq!(miss_rate(&[m], &[gt]).unwrap(), 1.0);
        assert!(miss_rate(&[], &[]).is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(TrainConfig::from_toml("hidden_dim = 64\nheads = 4\n").is_ok());
        let err = TrainConfig::from_toml("hiden_dim = 64\n").unwrap_err().to_string();
        assert!(err.contains("hiden_dim"), "{err}");
        assert!(TrainConfig::from_toml("few_shot_ratio = 0.0\n").is_err());
        let c = TrainConfig::from_toml("ablation = \"no_lane\"\nbackbone = \"surrogate\"\n").unwrap();
        assert_eq!(c.lambda(), 0.0);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(1.0, 0, 10), 1.0);
        assert!((cosine_lr(1.0, 5, 10) - 0.5).abs() < 1e-12);
        assert!(cosine_lr(1.0, 10, 10).abs() < 1e-12);
    }
}
