//! Full pipeline: encoder, backbone, lane module and decoder over one
//! shared parameter store.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::backbone::{AdapterMode, Backbone, BackboneConfig};
use crate::decoder::{
    laplace_nll_graph, mixture_from_graph, mode_classification_graph, winner_mode, LaplaceDecoder, MixtureVars,
    TrajectoryMixture,
};
use crate::encoder::ContextEncoder;
use crate::lane_prob::{lane_loss_graph, scatter_field, LaneModule, LaneScoreField};
use crate::nn::{Builder, ModelRng};
use crate::scene::{SceneSample, TrajectoryVector, MAX_AGENTS};
use crate::tensor::{Graph, Mat, ParamGroup, ParamStore, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    /// Skip the backbone: `s = g`.
    NoLlm,
    /// Keep adapters frozen at their zero update.
    NoLora,
    /// Skip the lane module and its loss.
    NoLane,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoLlm, Ablation::NoLora, Ablation::NoLane];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoLlm => "no_llm",
            Ablation::NoLora => "no_lora",
            Ablation::NoLane => "no_lane",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub heads: usize,
    pub k_modes: usize,
    pub top_c: usize,
    pub latent_dim: usize,
    pub mode_dim: usize,
    pub dropout: f64,
    pub glu_residual: bool,
    /// Resample the latent at evaluation instead of zeroing it.
    pub stochastic_latent: bool,
    pub ablation: Ablation,
    /// Seed of the task-parameter initialization.
    pub seed: u64,
    pub backbone: BackboneConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 128,
            heads: 8,
            k_modes: 5,
            top_c: 2,
            latent_dim: 16,
            mode_dim: 32,
            dropout: 0.1,
            glu_residual: true,
            stochastic_latent: false,
            ablation: Ablation::Full,
            seed: 0,
            backbone: BackboneConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden_dim == 0 || self.heads == 0 || self.hidden_dim % self.heads != 0 {
            return bad(format!("hidden_dim {} must be a positive multiple of heads {}", self.hidden_dim, self.heads));
        }
        if self.k_modes == 0 || self.top_c == 0 {
            return bad("k_modes and top_c must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        self.backbone.validate()
    }
}

/// How a forward pass treats dropout and the latent.
pub enum Mode<'r> {
    Train(&'r mut ModelRng),
    Eval,
}

struct Context {
    joint: Var,
    f_tilde: Var,
    s: Var,
    agents: Vec<usize>,
    lanes: Vec<usize>,
}

/// Graph handles and bookkeeping of one sample's forward pass.
pub struct SampleForward {
    pub mixture: MixtureVars,
    /// `t_f x valid lanes`; absent when the lane module is skipped.
    pub lane_probs_t: Option<Var>,
    pub valid_lanes: Vec<usize>,
}

/// Loss components of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub lane: f64,
    pub reg: f64,
    pub cls: f64,
    pub total: f64,
}

/// Model output for one scene at evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mixture: TrajectoryMixture,
    pub lanes: Option<LaneScoreField>,
}

#[derive(Debug)]
pub struct TrajLlm {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: ContextEncoder,
    pub backbone: Backbone,
    pub lane: LaneModule,
    pub decoder: LaplaceDecoder,
    /// Number of backbone forward passes so far.
    pub backbone_calls: AtomicUsize,
}

impl Clone for TrajLlm {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            store: self.store.clone(),
            encoder: self.encoder.clone(),
            backbone: self.backbone.clone(),
            lane: self.lane.clone(),
            decoder: self.decoder.clone(),
            backbone_calls: AtomicUsize::new(self.backbone_calls.load(Ordering::Relaxed)),
        }
    }
}

impl TrajLlm {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ModelRng::seed_from_u64(config.seed);
        let d = config.hidden_dim;
        let mut b = Builder::new(&mut store, &mut rng, ParamGroup::Task);
        let encoder = ContextEncoder::new(&mut b, d, config.heads, config.glu_residual);
        let lane = LaneModule::new(&mut b, d, config.dropout);
        let decoder = LaplaceDecoder::new(&mut b, d, config.heads, config.k_modes, config.latent_dim, config.mode_dim);
        let backbone = Backbone::load(&config.backbone, d, &mut store, &mut rng)?;
        let mut model =
            Self { config, store, encoder, backbone, lane, decoder, backbone_calls: AtomicUsize::new(0) };
        model.apply_ablation_freezes();
        Ok(model)
    }

    /// Marks parameters of skipped components as non-trainable.
    fn apply_ablation_freezes(&mut self) {
        let frozen_prefixes: &[&str] = match self.config.ablation {
            Ablation::Full => &[],
            Ablation::NoLora => &[],
            Ablation::NoLlm => &["align.", "backbone."],
            Ablation::NoLane => &["lane."],
        };
        let ids: Vec<_> = self
            .store
            .iter()
            .filter(|(_, p)| {
                frozen_prefixes.iter().any(|pre| p.name.starts_with(pre))
                    || (self.config.ablation == Ablation::NoLora && p.group == ParamGroup::Adapter)
            })
            .map(|(id, _)| id)
            .collect();
        for id in ids {
            self.store.set_trainable(id, false);
        }
    }

    pub fn k_modes(&self) -> usize {
        self.config.k_modes
    }

    pub fn mamba_layer_calls(&self) -> usize {
        self.lane.layer_calls.load(Ordering::Relaxed)
    }

    pub fn backbone_forward_calls(&self) -> usize {
        self.backbone_calls.load(Ordering::Relaxed)
    }

    /// Encoder and backbone over the valid tokens of `sample`.
    fn context(&self, g: &mut Graph, sample: &SceneSample) -> Result<Context> {
        let agents = sample.valid_agents();
        let lanes = sample.valid_lanes();
        if agents.first() != Some(&0) {
            return Err(Error::InvalidInput(format!("{}: target agent has no valid history", sample.scene_id)));
        }
        if lanes.is_empty() {
            return Err(Error::InvalidInput(format!("{}: no valid lanes", sample.scene_id)));
        }
        let hist: Vec<&[TrajectoryVector]> = agents.iter().map(|&i| sample.agents[i].as_slice()).collect();
        let masks: Vec<&[bool]> = agents.iter().map(|&i| sample.agent_mask[i].as_slice()).collect();
        let h = self.encoder.embed_agents_graph(g, &hist, &masks);
        let lane_refs: Vec<_> = lanes.iter().map(|&l| &sample.lanes[l]).collect();
        let f = self.encoder.embed_lanes_graph(g, &lane_refs);
        let (ht, ft) = self.encoder.fuse_graph(g, h, f, None, None);
        let joint = g.concat_rows(&[ht, ft]);
        let s = if self.config.ablation == Ablation::NoLlm {
            joint
        } else {
            // positions follow the padded token layout: agent slots, then lanes
            let positions: Vec<usize> = agents.iter().copied().chain(lanes.iter().map(|l| MAX_AGENTS + l)).collect();
            self.backbone_calls.fetch_add(1, Ordering::Relaxed);
            self.backbone.forward_graph(g, joint, &positions, AdapterMode::Apply)?
        };
        Ok(Context { joint, f_tilde: ft, s, agents, lanes })
    }

    /// Records the forward pass of one scene on `g`. Masked agents and lanes
    /// are dropped before any computation.
    pub fn forward_sample(&self, g: &mut Graph, sample: &SceneSample, mode: &mut Mode<'_>) -> Result<SampleForward> {
        let Context { joint, f_tilde: ft, s, agents, lanes } = self.context(g, sample)?;
        let s_target = g.slice_rows(s, 0, 1);
        let g_target = g.slice_rows(joint, 0, 1);

        let (candidates, lane_probs_t) = if self.config.ablation == Ablation::NoLane {
            (None, None)
        } else {
            let rng = match mode {
                Mode::Train(r) => Some(&mut **r),
                Mode::Eval => None,
            };
            let out = self.lane.forward_graph(g, s_target, ft, rng);
            let field = scatter_field(g.value(out.probs_t), &(0..lanes.len()).collect::<Vec<_>>(), &vec![true; lanes.len()]);
            let top: Vec<usize> = field.ranking().into_iter().take(self.config.top_c).collect();
            let s_lanes = g.slice_rows(s, agents.len(), lanes.len());
            (Some(g.gather_rows(s_lanes, &top)), Some(out.probs_t))
        };

        let latent: Vec<f64> = match mode {
            Mode::Train(rng) => (0..self.config.latent_dim).map(|_| rng.sample(StandardNormal)).collect(),
            Mode::Eval if self.config.stochastic_latent => {
                let mut rng = ModelRng::seed_from_u64(sample.seed);
                (0..self.config.latent_dim).map(|_| rng.sample(StandardNormal)).collect()
            }
            Mode::Eval => vec![0.0; self.config.latent_dim],
        };
        let mixture = self.decoder.forward_graph(g, g_target, s_target, candidates, &latent);
        Ok(SampleForward { mixture, lane_probs_t, valid_lanes: lanes })
    }

    /// Adds the loss of one forward pass; returns the total loss node and its
    /// component values.
    pub fn sample_loss(&self, g: &mut Graph, sample: &SceneSample, fwd: &SampleForward, lambda: f64) -> Result<(Var, LossParts)> {
        let gt = &sample.gt_future;
        let k = winner_mode(g.value(fwd.mixture.mu), gt);
        let mu = g.slice_rows(fwd.mixture.mu, k, 1);
        let b = g.slice_rows(fwd.mixture.b, k, 1);
        let reg = laplace_nll_graph(g, mu, b, gt);
        let cls = mode_classification_graph(g, fwd.mixture.pi, k);
        let mut total = g.add(reg, cls);
        let mut lane = 0.0;
        if let (Some(p), true) = (fwd.lane_probs_t, lambda != 0.0) {
            let labels = compact_labels(sample, &fwd.valid_lanes)?;
            let l = lane_loss_graph(g, p, &labels);
            lane = g.scalar(l);
            let weighted = g.scale(l, lambda);
            total = g.add(total, weighted);
        } else if let Some(p) = fwd.lane_probs_t {
            let labels = compact_labels(sample, &fwd.valid_lanes)?;
            let mut probe = Graph::new(g.store(), false);
            let pv = probe.constant(g.value(p).clone());
            let l = lane_loss_graph(&mut probe, pv, &labels);
            lane = probe.scalar(l);
        }
        let parts = LossParts { lane, reg: g.scalar(reg), cls: g.scalar(cls), total: g.scalar(total) };
        Ok((total, parts))
    }

    /// Deterministic prediction (dropout off, latent zeroed unless the
    /// stochastic flag is set).
    pub fn predict(&self, sample: &SceneSample) -> Result<Prediction> {
        let mut g = Graph::new(&self.store, false);
        let fwd = self.forward_sample(&mut g, sample, &mut Mode::Eval)?;
        let mixture = mixture_from_graph(&g, fwd.mixture);
        let lanes = fwd.lane_probs_t.map(|p| scatter_field(g.value(p), &fwd.valid_lanes, &sample.lane_mask));
        Ok(Prediction { mixture, lanes })
    }

    /// Loss components of one sample at evaluation.
    pub fn eval_loss(&self, sample: &SceneSample, lambda: f64) -> Result<LossParts> {
        let mut g = Graph::new(&self.store, false);
        let fwd = self.forward_sample(&mut g, sample, &mut Mode::Eval)?;
        Ok(self.sample_loss(&mut g, sample, &fwd, lambda)?.1)
    }

    /// Interaction state `s` for every token (masked tokens zero).
    pub fn interaction_state(&self, sample: &SceneSample) -> Result<Mat> {
        let mut g = Graph::new(&self.store, false);
        let ctx = self.context(&mut g, sample)?;
        let n_agents = sample.agents.len();
        let rows: Vec<usize> = ctx.agents.iter().copied().chain(ctx.lanes.iter().map(|l| n_agents + l)).collect();
        let mut out = Mat::zeros(n_agents + sample.lanes.len(), self.config.hidden_dim);
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(r).copy_from_slice(g.value(ctx.s).row(i));
        }
        Ok(out)
    }
}

/// Per-step label as a column index into the valid-lane list.
pub fn compact_labels(sample: &SceneSample, valid_lanes: &[usize]) -> Result<Vec<usize>> {
    sample
        .label_indices()
        .into_iter()
        .map(|l| {
            valid_lanes
                .iter()
                .position(|&v| v == l)
                .ok_or_else(|| Error::InvalidInput(format!("{}: label on masked lane {l}", sample.scene_id)))
        })
        .collect()
}
