//! Frozen causal-transformer backbone (GPT-2 block layout) with rank-r
//! adapters on the attention query and key projections.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archive::Archive;
use crate::nn::{causal_mask, Builder, Linear};
use crate::tensor::{Graph, Mat, ParamGroup, ParamId, ParamStore, Var};
use crate::{Error, Result};

pub const BACKBONE_PATH_ENV: &str = "TRAJLLM_BACKBONE_PATH";
const LN_EPS: f64 = 1e-5;
const PREFIX: &str = "backbone.";

/// Shape of the published GPT-2 small checkpoint.
pub const GPT2_SMALL: BackboneShape = BackboneShape { n_layers: 12, width: 768, n_heads: 12, n_positions: 1024 };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackboneShape {
    pub n_layers: usize,
    pub width: usize,
    pub n_heads: usize,
    pub n_positions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneSource {
    Surrogate,
    Pretrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    pub source: BackboneSource,
    /// Blocks in use; a pretrained file may hold more, the rest are ignored.
    pub n_layers: usize,
    pub width: usize,
    pub n_heads: usize,
    pub n_positions: usize,
    /// Seed of the randomly initialized surrogate.
    pub seed: u64,
    pub weights_path: Option<PathBuf>,
    pub lora_rank: usize,
    pub lora_scale: f64,
    /// Add the learned positional embeddings to the token sequence.
    pub positional: bool,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            source: BackboneSource::Surrogate,
            n_layers: 2,
            width: 128,
            n_heads: 4,
            n_positions: 128,
            seed: 1,
            weights_path: None,
            lora_rank: 4,
            lora_scale: 1.0,
            positional: true,
        }
    }
}

impl BackboneConfig {
    pub fn surrogate(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn pretrained(path: impl Into<PathBuf>) -> Self {
        Self {
            source: BackboneSource::Pretrained,
            n_layers: GPT2_SMALL.n_layers,
            width: GPT2_SMALL.width,
            n_heads: GPT2_SMALL.n_heads,
            n_positions: GPT2_SMALL.n_positions,
            weights_path: Some(path.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.n_heads == 0 || self.width % self.n_heads != 0 {
            return Err(Error::Config(format!("backbone width {} not divisible by {} heads", self.width, self.n_heads)));
        }
        if self.n_positions == 0 {
            return Err(Error::Config("backbone needs at least one position".into()));
        }
        if !self.lora_scale.is_finite() {
            return Err(Error::Config("lora_scale must be finite".into()));
        }
        Ok(())
    }

    /// Adapter parameter count: every layer carries a query and a key
    /// adapter, each `r*k + d*r` with `d = k = width`.
    pub fn lora_census(&self) -> usize {
        self.n_layers * 2 * (self.lora_rank * self.width + self.width * self.lora_rank)
    }

    /// The weight file to load: the environment override wins.
    pub fn resolved_weights_path(&self) -> Option<PathBuf> {
        std::env::var_os(BACKBONE_PATH_ENV).map(PathBuf::from).or_else(|| self.weights_path.clone())
    }
}

/// `y = x W^T + scale * (x A^T) B^T` for a batch of row vectors `x` (n x k),
/// with `W` d x k, `A` r x k and `B` d x r. `W` is never modified.
pub fn lora_forward(w: &Mat, a: &Mat, b: &Mat, scale: f64, x: &Mat) -> Result<Mat> {
    let (d, k) = w.shape();
    let r = a.rows();
    if a.cols() != k || b.shape() != (d, r) || x.cols() != k {
        return Err(Error::Shape(format!(
            "W {:?}, A {:?}, B {:?}, x {:?} are not compatible",
            w.shape(),
            a.shape(),
            b.shape(),
            x.shape()
        )));
    }
    let mut y = x.matmul(&w.transpose());
    let low = x.matmul(&a.transpose()).matmul(&b.transpose());
    for (o, l) in y.data_mut().iter_mut().zip(low.data()) {
        *o += scale * l;
    }
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct LoraAdapter {
    /// `r x k`, Gaussian-initialized.
    pub a: ParamId,
    /// `d x r`, zero-initialized.
    pub b: ParamId,
    pub rank: usize,
    pub scale: f64,
}

impl LoraAdapter {
    fn new<R: Rng>(b: &mut Builder<'_, R>, name: &str, d: usize, k: usize, rank: usize, scale: f64) -> Self {
        Self {
            a: b.normal(&format!("{name}.lora_a"), rank, k, 1.0 / (k as f64).sqrt()),
            b: b.zeros(&format!("{name}.lora_b"), d, rank),
            rank,
            scale,
        }
    }

    /// Low-rank update `scale * (x A^T) B^T` recorded on the graph.
    pub fn delta(&self, g: &mut Graph, x: Var) -> Var {
        let a = g.param(self.a);
        let b = g.param(self.b);
        let xa = g.matmul_t(x, false, a, true);
        let d = g.matmul_t(xa, false, b, true);
        if self.scale == 1.0 {
            d
        } else {
            g.scale(d, self.scale)
        }
    }
}

#[derive(Debug, Clone)]
pub struct QkAdapters {
    pub query: LoraAdapter,
    pub key: LoraAdapter,
}

#[derive(Debug, Clone)]
struct LayerNorm {
    gamma: ParamId,
    beta: ParamId,
}

impl LayerNorm {
    fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let n = g.normalize_rows(x, LN_EPS);
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        let y = g.mul(n, gamma);
        g.add(y, beta)
    }
}

/// Conv1D-style dense layer: weight stored `in x out` as in GPT-2 files.
#[derive(Debug, Clone)]
struct Dense {
    weight: ParamId,
    bias: ParamId,
}

impl Dense {
    fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w);
        g.add(y, b)
    }
}

#[derive(Debug, Clone)]
struct Block {
    ln_1: LayerNorm,
    c_attn: Dense,
    c_proj: Dense,
    ln_2: LayerNorm,
    c_fc: Dense,
    mlp_proj: Dense,
}

/// Whether the adapters take part in a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdapterMode {
    Apply,
    /// Base weights only.
    Bypass,
}

#[derive(Debug, Clone)]
pub struct Backbone {
    pub config: BackboneConfig,
    blocks: Vec<Block>,
    wpe: ParamId,
    ln_f: LayerNorm,
    /// One entry per block; `None` marks a block without adapters.
    pub adapters: Vec<Option<QkAdapters>>,
    /// Alignment from pipeline width to backbone width (trainable).
    pub up: Linear,
    /// `project_interaction`: backbone width back to pipeline width.
    pub down: Linear,
}

/// Canonical tensor names and shapes a file must provide for `shape`.
pub fn required_tensors(shape: &BackboneShape) -> Vec<(String, Vec<usize>)> {
    let w = shape.width;
    let mut out = vec![("wpe.weight".to_string(), vec![shape.n_positions, w])];
    for i in 0..shape.n_layers {
        let p = format!("h.{i}.");
        out.extend([
            (format!("{p}ln_1.weight"), vec![w]),
            (format!("{p}ln_1.bias"), vec![w]),
            (format!("{p}attn.c_attn.weight"), vec![w, 3 * w]),
            (format!("{p}attn.c_attn.bias"), vec![3 * w]),
            (format!("{p}attn.c_proj.weight"), vec![w, w]),
            (format!("{p}attn.c_proj.bias"), vec![w]),
            (format!("{p}ln_2.weight"), vec![w]),
            (format!("{p}ln_2.bias"), vec![w]),
            (format!("{p}mlp.c_fc.weight"), vec![w, 4 * w]),
            (format!("{p}mlp.c_fc.bias"), vec![4 * w]),
            (format!("{p}mlp.c_proj.weight"), vec![4 * w, w]),
            (format!("{p}mlp.c_proj.bias"), vec![w]),
        ]);
    }
    out.push(("ln_f.weight".into(), vec![w]));
    out.push(("ln_f.bias".into(), vec![w]));
    out
}

fn tensor_to_mat(shape: &[usize], data: Vec<f64>) -> Mat {
    match shape {
        [n] => Mat::from_vec(1, *n, data),
        [r, c] => Mat::from_vec(*r, *c, data),
        _ => unreachable!("shapes are validated before conversion"),
    }
}

/// Random base weights in the GPT-2 initialization style.
fn surrogate_tensors(config: &BackboneConfig) -> Vec<(String, Mat)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shape = config.shape();
    let resid_std = 0.02 / (2.0 * config.n_layers.max(1) as f64).sqrt();
    let mut out = Vec::new();
    for (name, dims) in required_tensors(&shape) {
        let (rows, cols) = if dims.len() == 1 { (1, dims[0]) } else { (dims[0], dims[1]) };
        let m = if name.ends_with("ln_1.weight") || name.ends_with("ln_2.weight") || name == "ln_f.weight" {
            Mat::filled(rows, cols, 1.0)
        } else if name.ends_with(".bias") {
            Mat::zeros(rows, cols)
        } else {
            let std = match name.as_str() {
                "wpe.weight" => 0.01,
                n if n.ends_with("c_proj.weight") => resid_std,
                _ => 0.02,
            };
            let normal = rand_distr::Normal::new(0.0, std).expect("valid std");
            Mat::from_fn(rows, cols, |_, _| rand_distr::Distribution::sample(&normal, &mut rng))
        };
        out.push((name, m));
    }
    out
}

/// Loads base tensors from a GPT-2 weight file, accepting names with or
/// without a `transformer.` prefix. Extra tensors (token embeddings, deeper
/// blocks, attention buffers) are ignored.
fn pretrained_tensors(config: &BackboneConfig, path: &Path) -> Result<Vec<(String, Mat)>> {
    let mut archive = Archive::load(path)?;
    let mut problems = Vec::new();
    let mut out = Vec::new();
    for (name, dims) in required_tensors(&config.shape()) {
        let tensor = archive.tensors.remove(&name).or_else(|| archive.tensors.remove(&format!("transformer.{name}")));
        match tensor {
            None => problems.push(format!("missing {name}")),
            Some(t) if t.shape != dims => problems.push(format!("{name}: expected shape {dims:?}, found {:?}", t.shape)),
            Some(t) => {
                if t.data.iter().any(|v| !v.is_finite()) {
                    problems.push(format!("{name}: non-finite values"));
                } else {
                    out.push((name, tensor_to_mat(&dims, t.data)));
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(Error::Archive { path: path.to_path_buf(), message: problems.join("; ") })
    }
}

impl BackboneConfig {
    pub fn shape(&self) -> BackboneShape {
        BackboneShape { n_layers: self.n_layers, width: self.width, n_heads: self.n_heads, n_positions: self.n_positions }
    }
}

impl Backbone {
    /// Registers base weights (frozen), adapters and alignment layers in
    /// `store`. `dim` is the pipeline width.
    pub fn load<R: Rng>(config: &BackboneConfig, dim: usize, store: &mut ParamStore, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let tensors = match config.source {
            BackboneSource::Surrogate => surrogate_tensors(config),
            BackboneSource::Pretrained => {
                let path = config
                    .resolved_weights_path()
                    .ok_or_else(|| Error::Config(format!("pretrained backbone needs weights_path or {BACKBONE_PATH_ENV}")))?;
                pretrained_tensors(config, &path)?
            }
        };
        let mut ids = std::collections::HashMap::new();
        for (name, m) in tensors {
            let id = store.add(format!("{PREFIX}{name}"), m, ParamGroup::Backbone);
            ids.insert(name, id);
        }
        let id = |n: String| ids[&n];
        let ln = |p: &str| LayerNorm { gamma: id(format!("{p}.weight")), beta: id(format!("{p}.bias")) };
        let dense = |p: &str| Dense { weight: id(format!("{p}.weight")), bias: id(format!("{p}.bias")) };
        let blocks: Vec<Block> = (0..config.n_layers)
            .map(|i| Block {
                ln_1: ln(&format!("h.{i}.ln_1")),
                c_attn: dense(&format!("h.{i}.attn.c_attn")),
                c_proj: dense(&format!("h.{i}.attn.c_proj")),
                ln_2: ln(&format!("h.{i}.ln_2")),
                c_fc: dense(&format!("h.{i}.mlp.c_fc")),
                mlp_proj: dense(&format!("h.{i}.mlp.c_proj")),
            })
            .collect();
        let wpe = id("wpe.weight".into());
        let ln_f = ln("ln_f");

        let w = config.width;
        let mut ab = Builder::new(store, rng, ParamGroup::Adapter);
        let adapters = (0..config.n_layers)
            .map(|i| {
                (config.lora_rank > 0).then(|| QkAdapters {
                    query: LoraAdapter::new(&mut ab, &format!("{PREFIX}h.{i}.attn.q"), w, w, config.lora_rank, config.lora_scale),
                    key: LoraAdapter::new(&mut ab, &format!("{PREFIX}h.{i}.attn.k"), w, w, config.lora_rank, config.lora_scale),
                })
            })
            .collect();
        ab.group = ParamGroup::Task;
        let up = Linear::new(&mut ab, "align.up", dim, w, true);
        let down = Linear::new(&mut ab, "align.down", w, dim, true);
        Ok(Self { config: config.clone(), blocks, wpe, ln_f, adapters, up, down })
    }

    pub fn width(&self) -> usize {
        self.config.width
    }

    pub fn n_layers(&self) -> usize {
        self.blocks.len()
    }

    /// Ids of the adapter matrices.
    pub fn adapter_ids(&self) -> Vec<ParamId> {
        self.adapters.iter().flatten().flat_map(|a| [a.query.a, a.query.b, a.key.a, a.key.b]).collect()
    }

    /// Runs the blocks on `x` (tokens x width). `positions` are the
    /// positional-embedding rows of each token.
    pub fn blocks_forward(&self, g: &mut Graph, x: Var, positions: &[usize], mode: AdapterMode) -> Result<Var> {
        let (n, w) = g.shape(x);
        if w != self.width() || positions.len() != n {
            return Err(Error::Shape(format!("backbone input {n}x{w} with {} positions", positions.len())));
        }
        if let Some(&p) = positions.iter().find(|&&p| p >= self.config.n_positions) {
            return Err(Error::InvalidInput(format!("position {p} exceeds the {} available", self.config.n_positions)));
        }
        if mode == AdapterMode::Apply {
            if let Some(i) = self.adapters.iter().position(Option::is_none) {
                return Err(Error::InvalidInput(format!("layer {i} has no query/key adapter")));
            }
        }
        let mut h = x;
        if self.config.positional {
            let wpe = g.param(self.wpe);
            let pos = g.gather_rows(wpe, positions);
            h = g.add(h, pos);
        }
        let heads = self.config.n_heads;
        let hd = w / heads;
        let mask = causal_mask(n);
        for (block, adapters) in self.blocks.iter().zip(&self.adapters) {
            let a = block.ln_1.forward(g, h);
            let qkv = block.c_attn.forward(g, a);
            let mut q = g.slice_cols(qkv, 0, w);
            let mut k = g.slice_cols(qkv, w, w);
            let v = g.slice_cols(qkv, 2 * w, w);
            if let (AdapterMode::Apply, Some(ad)) = (mode, adapters) {
                let dq = ad.query.delta(g, a);
                q = g.add(q, dq);
                let dk = ad.key.delta(g, a);
                k = g.add(k, dk);
            }
            let ctx = crate::nn::attend(g, q, k, v, heads, Some(&mask));
            debug_assert_eq!(hd * heads, w);
            let att = block.c_proj.forward(g, ctx);
            h = g.add(h, att);
            let m = block.ln_2.forward(g, h);
            let m = block.c_fc.forward(g, m);
            let m = g.gelu(m);
            let m = block.mlp_proj.forward(g, m);
            h = g.add(h, m);
        }
        Ok(self.ln_f.forward(g, h))
    }

    /// Up-projection, blocks and down-projection: pipeline width in and out.
    pub fn forward_graph(&self, g: &mut Graph, tokens: Var, positions: &[usize], mode: AdapterMode) -> Result<Var> {
        let x = self.up.forward(g, tokens);
        let z = self.blocks_forward(g, x, positions, mode)?;
        Ok(self.down.forward(g, z))
    }

    /// `backbone_forward` on a joint encoding: returns `z` at backbone width.
    /// Masked tokens are dropped (they neither attend nor are attended to)
    /// and get zero rows; valid tokens keep their original positions.
    pub fn backbone_forward(&self, store: &ParamStore, joint: &Mat, token_mask: &[bool], mode: AdapterMode) -> Result<Mat> {
        if joint.rows() != token_mask.len() {
            return Err(Error::Shape(format!("{} tokens but {} mask entries", joint.rows(), token_mask.len())));
        }
        if !joint.is_finite() {
            return Err(Error::NonFinite("joint encoding".into()));
        }
        let valid: Vec<usize> = (0..joint.rows()).filter(|&i| token_mask[i]).collect();
        let mut out = Mat::zeros(joint.rows(), self.width());
        if valid.is_empty() {
            return Ok(out);
        }
        let mut g = Graph::new(store, false);
        let x = g.constant(joint.select_rows(&valid));
        let x = self.up.forward(&mut g, x);
        let z = self.blocks_forward(&mut g, x, &valid, mode)?;
        for (i, &r) in valid.iter().enumerate() {
            out.row_mut(r).copy_from_slice(g.value(z).row(i));
        }
        Ok(out)
    }

    /// `project_interaction`: width to pipeline width.
    pub fn project_interaction(&self, store: &ParamStore, z: &Mat) -> Result<Mat> {
        if !z.is_finite() {
            return Err(Error::NonFinite("interaction input".into()));
        }
        if z.cols() != self.width() {
            return Err(Error::Shape(format!("expected width {}, got {}", self.width(), z.cols())));
        }
        let mut g = Graph::new(store, false);
        let zv = g.constant(z.clone());
        let s = self.down.forward(&mut g, zv);
        Ok(g.value(s).clone())
    }
}

/// 64-bit digest over every backbone base tensor (names, shapes, bytes).
pub fn fingerprint(store: &ParamStore) -> u64 {
    let mut h = Sha256::new();
    for (_, p) in store.iter().filter(|(_, p)| p.group == ParamGroup::Backbone) {
        h.update(p.name.as_bytes());
        h.update((p.value.rows() as u64).to_le_bytes());
        h.update((p.value.cols() as u64).to_le_bytes());
        for v in p.value.data() {
            h.update(v.to_le_bytes());
        }
    }
    let d = h.finalize();
    u64::from_be_bytes(d[..8].try_into().unwrap())
}

pub fn fingerprint_hex(fp: u64) -> String {
    let mut s = String::with_capacity(16);
    write!(s, "{fp:016x}").unwrap();
    s
}

/// Parameter census split by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Census {
    pub adapter: usize,
    pub task: usize,
    pub frozen: usize,
    pub total: usize,
}

impl Census {
    pub fn trainable(&self) -> usize {
        self.adapter + self.task
    }
}

/// Counts scalars: trainable adapters, trainable task parameters, and
/// everything frozen.
pub fn trainable_parameters(store: &ParamStore) -> Census {
    let adapter = store.count(|p| p.trainable && p.group == ParamGroup::Adapter);
    let task = store.count(|p| p.trainable && p.group != ParamGroup::Adapter);
    let frozen = store.count(|p| !p.trainable);
    Census { adapter, task, frozen, total: store.total_count() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(rank: usize) -> (ParamStore, Backbone) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = BackboneConfig { width: 16, n_heads: 2, n_positions: 32, lora_rank: rank, ..BackboneConfig::surrogate(9) };
        let bb = Backbone::load(&cfg, 8, &mut store, &mut rng).unwrap();
        (store, bb)
    }

    #[test]
    fn lora_hand_case() {
        let w = Mat::identity(2);
        let a = Mat::from_rows(&[vec![1.0, 2.0]]);
        let b = Mat::from_rows(&[vec![1.0], vec![0.0]]);
        let y = lora_forward(&w, &a, &b, 1.0, &Mat::from_rows(&[vec![1.0, 1.0]])).unwrap();
        assert_eq!(y.data(), &[4.0, 1.0]);
        let y0 = lora_forward(&w, &a, &b, 0.0, &Mat::from_rows(&[vec![1.0, 1.0]])).unwrap();
        assert_eq!(y0.data(), &[1.0, 1.0]);
        assert!(lora_forward(&w, &a, &Mat::zeros(3, 1), 1.0, &Mat::zeros(1, 2)).is_err());
    }

    #[test]
    fn census_of_gpt2_small_shape() {
        let cfg = BackboneConfig::pretrained("unused");
        assert_eq!(cfg.lora_census(), 147_456);
        assert_eq!(BackboneConfig { n_layers: 0, ..cfg }.lora_census(), 0);
    }

    #[test]
    fn census_matches_constructed_model() {
        let (store, bb) = tiny(4);
        let c = trainable_parameters(&store);
        assert_eq!(c.adapter, bb.config.lora_census());
        assert_eq!(c.trainable() + c.frozen, c.total);
        assert!(store.iter().filter(|(_, p)| p.group == ParamGroup::Backbone).all(|(_, p)| !p.trainable));
    }

    #[test]
    fn missing_adapter_rejected() {
        let (store, mut bb) = tiny(2);
        bb.adapters[1] = None;
        let x = Mat::filled(3, 8, 0.1);
        assert!(bb.backbone_forward(&store, &x, &[true; 3], AdapterMode::Apply).is_err());
        assert!(bb.backbone_forward(&store, &x, &[true; 3], AdapterMode::Bypass).is_ok());
    }

    #[test]
    fn surrogate_is_deterministic() {
        let (a, _) = tiny(2);
        let (b, _) = tiny(2);
        assert_eq!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint_hex(0xab), "00000000000000ab");
    }

    #[test]
    fn pretrained_loader_reports_all_problems() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = BackboneConfig { width: 8, n_heads: 2, n_positions: 16, n_layers: 1, ..BackboneConfig::surrogate(1) };
        let mut archive = Archive::default();
        for (name, m) in surrogate_tensors(&cfg) {
            let dims = if m.rows() == 1 && !name.starts_with("wpe") { vec![m.cols()] } else { vec![m.rows(), m.cols()] };
            archive.insert(format!("transformer.{name}"), dims, m.into_vec());
        }
        archive.insert("wte.weight", vec![4, 8], vec![0.0; 32]);
        let good = dir.path().join("good.safetensors");
        archive.save(&good).unwrap();
        let pcfg = BackboneConfig { source: BackboneSource::Pretrained, weights_path: Some(good), ..cfg.clone() };
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Backbone::load(&pcfg, 4, &mut store, &mut rng).unwrap();

        archive.tensors.remove("transformer.ln_f.bias");
        archive.tensors.get_mut("transformer.h.0.mlp.c_fc.weight").unwrap().shape = vec![32, 8];
        let bad = dir.path().join("bad.safetensors");
        archive.save(&bad).unwrap();
        let pcfg = BackboneConfig { weights_path: Some(bad), ..pcfg };
        let msg = Backbone::load(&pcfg, 4, &mut ParamStore::new(), &mut rng).unwrap_err().to_string();
        assert!(msg.contains("missing ln_f.bias"), "{msg}");
        assert!(msg.contains("h.0.mlp.c_fc.weight: expected shape [8, 32], found [32, 8]"), "{msg}");
    }
}
