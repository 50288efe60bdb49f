//! Sparse context joint encoding: GRU+MLP embedders for agent and lane
//! vectors, agent self-attention with gated fusion, and bidirectional
//! agent/lane cross-attention.

use rand::Rng;

use crate::nn::{Builder, GruCell, Linear, Mlp, MultiHeadAttention};
use crate::scene::{LaneVector, TrajectoryVector, AGENT_VECTORS};
use crate::tensor::{Graph, Mat, ParamStore, Var};
use crate::{Error, Result};

/// Input width of one agent or lane vector after featurization.
pub const VECTOR_FEATURES: usize = 9;
/// Coordinates are divided by this before entering the network.
pub const COORD_SCALE: f64 = 10.0;

pub fn agent_features(v: &TrajectoryVector) -> [f64; VECTOR_FEATURES] {
    let s = 1.0 / COORD_SCALE;
    let ts = v.timestamp() / AGENT_VECTORS as f64;
    [v.start[0] * s, v.start[1] * s, v.end[0] * s, v.end[1] * s, v.attrs[0], v.attrs[1], v.attrs[2], v.attrs[3], ts]
}

pub fn lane_features(v: &LaneVector) -> [f64; VECTOR_FEATURES] {
    let s = 1.0 / COORD_SCALE;
    [
        v.start[0] * s,
        v.start[1] * s,
        v.end[0] * s,
        v.end[1] * s,
        v.predecessor[0] * s,
        v.predecessor[1] * s,
        v.attrs[0],
        v.attrs[1],
        v.attrs[2],
    ]
}

/// Result of [`ContextEncoder::fuse`] on full-size (masked) inputs.
#[derive(Debug, Clone)]
pub struct FuseOutput {
    pub h_tilde: Mat,
    pub f_tilde: Mat,
    /// Agent tokens followed by lane tokens.
    pub joint: Mat,
    pub token_mask: Vec<bool>,
}

/// `GLU(a, b) = (W_g[a;b] + c_g) * sigmoid(W_s[a;b] + c_s) (+ a)`.
#[derive(Debug, Clone)]
pub struct GatedFusion {
    pub value: Linear,
    pub gate: Linear,
    pub residual: bool,
}

impl GatedFusion {
    pub fn forward(&self, g: &mut Graph, a: Var, b: Var) -> Var {
        let ab = g.concat_cols(&[a, b]);
        let val = self.value.forward(g, ab);
        let gate = self.gate.forward(g, ab);
        let gate = g.sigmoid(gate);
        let out = g.mul(val, gate);
        if self.residual {
            g.add(out, a)
        } else {
            out
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContextEncoder {
    pub agent_gru: GruCell,
    pub agent_mlp: Mlp,
    pub lane_gru: GruCell,
    pub lane_mlp: Mlp,
    pub self_attn: MultiHeadAttention,
    pub glu: GatedFusion,
    pub lane_from_agents: MultiHeadAttention,
    pub agents_from_lanes: MultiHeadAttention,
    pub dim: usize,
}

fn outer(rows: &[bool], cols: &[bool]) -> Vec<bool> {
    rows.iter().flat_map(|&r| cols.iter().map(move |&c| r && c)).collect()
}

fn zero_masked_rows(g: &mut Graph, x: Var, mask: Option<&[bool]>) -> Var {
    match mask {
        Some(m) if m.iter().any(|&v| !v) => {
            let col = g.constant(Mat::from_vec(m.len(), 1, m.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect()));
            g.mul(x, col)
        }
        _ => x,
    }
}

fn scatter_rows(valid: &[usize], values: &Mat, total: usize) -> Mat {
    let mut out = Mat::zeros(total, values.cols());
    for (i, &r) in valid.iter().enumerate() {
        out.row_mut(r).copy_from_slice(values.row(i));
    }
    out
}

impl ContextEncoder {
    pub fn new<R: Rng>(b: &mut Builder<'_, R>, dim: usize, heads: usize, glu_residual: bool) -> Self {
        Self {
            agent_gru: GruCell::new(b, "encoder.agent_gru", VECTOR_FEATURES, dim),
            agent_mlp: Mlp::new(b, "encoder.agent_mlp", dim, dim, dim),
            lane_gru: GruCell::new(b, "encoder.lane_gru", VECTOR_FEATURES, dim),
            lane_mlp: Mlp::new(b, "encoder.lane_mlp", dim, dim, dim),
            self_attn: MultiHeadAttention::new(b, "encoder.self_attn", dim, heads),
            glu: GatedFusion {
                value: Linear::new(b, "encoder.glu.value", 2 * dim, dim, true),
                gate: Linear::new(b, "encoder.glu.gate", 2 * dim, dim, true),
                residual: glu_residual,
            },
            lane_from_agents: MultiHeadAttention::new(b, "encoder.lane_cross_attn", dim, heads),
            agents_from_lanes: MultiHeadAttention::new(b, "encoder.agent_cross_attn", dim, heads),
            dim,
        }
    }

    /// Embeds the listed agents (rows in the order of `agents`). Invalid
    /// vectors inside a history leave the recurrent state untouched.
    pub fn embed_agents_graph(&self, g: &mut Graph, agents: &[&[TrajectoryVector]], masks: &[&[bool]]) -> Var {
        let n = agents.len();
        let steps = agents.iter().map(|a| a.len()).max().unwrap_or(0);
        let mut h: Option<Var> = None;
        for j in 0..steps {
            let x = Mat::from_fn(n, VECTOR_FEATURES, |r, c| agents[r].get(j).map_or(0.0, |v| agent_features(v)[c]));
            let live: Vec<bool> = (0..n).map(|r| masks[r].get(j).copied().unwrap_or(false)).collect();
            if !live.iter().any(|&v| v) {
                continue;
            }
            let xv = g.constant(x);
            let next = self.agent_gru.step(g, xv, h);
            h = Some(if live.iter().all(|&v| v) {
                next
            } else {
                let prev = match h {
                    Some(p) => p,
                    None => g.constant(Mat::zeros(n, self.dim)),
                };
                let m = g.constant(Mat::from_vec(n, 1, live.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect()));
                let delta = g.sub(next, prev);
                let delta = g.mul(delta, m);
                g.add(prev, delta)
            });
        }
        let h = h.unwrap_or_else(|| g.constant(Mat::zeros(n, self.dim)));
        self.agent_mlp.forward(g, h)
    }

    pub fn embed_lanes_graph(&self, g: &mut Graph, lanes: &[&LaneVector]) -> Var {
        let x = Mat::from_fn(lanes.len(), VECTOR_FEATURES, |r, c| lane_features(lanes[r])[c]);
        let xv = g.constant(x);
        let h = self.lane_gru.step(g, xv, None);
        self.lane_mlp.forward(g, h)
    }

    /// Returns `(h_tilde, f_tilde)`. Masks, when given, exclude tokens from
    /// attention in both directions and zero their output rows.
    pub fn fuse_graph(
        &self,
        g: &mut Graph,
        h: Var,
        f: Var,
        agent_mask: Option<&[bool]>,
        lane_mask: Option<&[bool]>,
    ) -> (Var, Var) {
        let (n_a, n_l) = (g.shape(h).0, g.shape(f).0);
        let all_a = vec![true; n_a];
        let all_l = vec![true; n_l];
        let am = agent_mask.unwrap_or(&all_a);
        let lm = lane_mask.unwrap_or(&all_l);
        let masked = agent_mask.is_some() || lane_mask.is_some();
        let aa = outer(am, am);
        let la = outer(lm, am);
        let al = outer(am, lm);
        let pick = |m: &Vec<bool>| if masked { Some(m.clone()) } else { None };
        let (aa, la, al) = (pick(&aa), pick(&la), pick(&al));

        let sa = self.self_attn.forward(g, h, h, aa.as_deref());
        let ht = self.glu.forward(g, h, sa);
        let ht = zero_masked_rows(g, ht, agent_mask);
        let upd = self.lane_from_agents.forward(g, f, ht, la.as_deref());
        let ft = g.add(f, upd);
        let ft = zero_masked_rows(g, ft, lane_mask);
        let upd = self.agents_from_lanes.forward(g, ht, ft, al.as_deref());
        let ht = g.add(ht, upd);
        let ht = zero_masked_rows(g, ht, agent_mask);
        (ht, ft)
    }

    /// Full-size agent embedding: one row per agent slot, masked slots zero.
    pub fn embed_agents(&self, store: &ParamStore, agents: &[Vec<TrajectoryVector>], agent_mask: &[Vec<bool>]) -> Result<Mat> {
        if agents.len() != agent_mask.len() {
            return Err(Error::Shape(format!("{} agents but {} mask rows", agents.len(), agent_mask.len())));
        }
        for (i, a) in agents.iter().enumerate() {
            if a.iter().any(|v| agent_features(v).iter().any(|x| !x.is_finite())) {
                return Err(Error::NonFinite(format!("agent {i} vectors")));
            }
        }
        let valid: Vec<usize> = (0..agents.len()).filter(|&i| agent_mask[i].iter().any(|&m| m)).collect();
        if valid.is_empty() {
            return Ok(Mat::zeros(agents.len(), self.dim));
        }
        let mut g = Graph::new(store, false);
        let sel: Vec<&[TrajectoryVector]> = valid.iter().map(|&i| agents[i].as_slice()).collect();
        let masks: Vec<&[bool]> = valid.iter().map(|&i| agent_mask[i].as_slice()).collect();
        let h = self.embed_agents_graph(&mut g, &sel, &masks);
        Ok(scatter_rows(&valid, g.value(h), agents.len()))
    }

    pub fn embed_lanes(&self, store: &ParamStore, lanes: &[LaneVector], lane_mask: &[bool]) -> Result<Mat> {
        if lanes.len() != lane_mask.len() {
            return Err(Error::Shape(format!("{} lanes but {} mask entries", lanes.len(), lane_mask.len())));
        }
        if lanes.iter().any(|l| lane_features(l).iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("lane vectors".into()));
        }
        let valid: Vec<usize> = (0..lanes.len()).filter(|&l| lane_mask[l]).collect();
        if valid.is_empty() {
            return Ok(Mat::zeros(lanes.len(), self.dim));
        }
        let mut g = Graph::new(store, false);
        let sel: Vec<&LaneVector> = valid.iter().map(|&l| &lanes[l]).collect();
        let f = self.embed_lanes_graph(&mut g, &sel);
        Ok(scatter_rows(&valid, g.value(f), lanes.len()))
    }

    pub fn fuse(&self, store: &ParamStore, h: &Mat, f: &Mat, agent_mask: &[bool], lane_mask: &[bool]) -> Result<FuseOutput> {
        if h.cols() != self.dim || f.cols() != self.dim {
            return Err(Error::Shape(format!("expected width {}, got {} and {}", self.dim, h.cols(), f.cols())));
        }
        if h.rows() != agent_mask.len() || f.rows() != lane_mask.len() {
            return Err(Error::Shape("mask length does not match token count".into()));
        }
        if !agent_mask.iter().any(|&m| m) {
            return Err(Error::InvalidInput("fuse needs at least one valid agent".into()));
        }
        if !h.is_finite() || !f.is_finite() {
            return Err(Error::NonFinite("fuse inputs".into()));
        }
        let mut g = Graph::new(store, false);
        let hv = g.constant(h.clone());
        let fv = g.constant(f.clone());
        let (ht, ft) = self.fuse_graph(&mut g, hv, fv, Some(agent_mask), Some(lane_mask));
        let (h_tilde, f_tilde) = (g.value(ht).clone(), g.value(ft).clone());
        let joint = Mat::vstack(&[&h_tilde, &f_tilde]);
        let token_mask = agent_mask.iter().chain(lane_mask).copied().collect();
        Ok(FuseOutput { h_tilde, f_tilde, joint, token_mask })
    }
}
