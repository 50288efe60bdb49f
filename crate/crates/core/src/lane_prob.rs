//! Lane-aware probability learning: a stack of Mamba layers over the lane
//! token stream, a per-timestep lane probability head, top-c candidate
//! selection and the lane classification loss.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;

use crate::nn::{dropout, Builder, Linear, Mlp, ModelRng};
use crate::scene::FUTURE_STEPS;
use crate::tensor::{CustomOp, Graph, Mat, ParamId, ParamStore, Var};
use crate::{Error, Result};

pub const EXPAND: usize = 2;
pub const STATE_DIM: usize = 16;
pub const CONV_WIDTH: usize = 4;
pub const NORM_EPS: f64 = 1e-5;
pub const STACK_DEPTH: usize = 3;
pub const PROB_CLAMP: f64 = 1e-7;
/// Sequence length handled per block of the chunked scan.
const SCAN_CHUNK: usize = 16;

fn scan_dims(x: &Mat, delta: &Mat, a: &Mat, b: &Mat, c: &Mat) -> (usize, usize, usize) {
    let (l, ch) = x.shape();
    let n = a.cols();
    assert_eq!(delta.shape(), (l, ch), "delta must match x");
    assert_eq!(a.rows(), ch, "A needs one row per channel");
    assert_eq!(b.shape(), (l, n), "B must be L x state");
    assert_eq!(c.shape(), (l, n), "C must be L x state");
    (l, ch, n)
}

/// Normative per-step recurrence. `x`, `delta`: L x C; `a`: C x N;
/// `b`, `c`: L x N. Returns `y`: L x C.
pub fn selective_scan_reference(x: &Mat, delta: &Mat, a: &Mat, b: &Mat, c: &Mat) -> Mat {
    let (l, ch, n) = scan_dims(x, delta, a, b, c);
    let mut y = Mat::zeros(l, ch);
    let mut h = vec![0.0; ch * n];
    for t in 0..l {
        for d in 0..ch {
            let dt = delta.get(t, d);
            assert!(dt > 0.0, "step size must be positive, got {dt} at ({t}, {d})");
            let mut acc = 0.0;
            for s in 0..n {
                let a_bar = (dt * a.get(d, s)).exp();
                let b_bar = dt * b.get(t, s);
                let hv = a_bar * h[d * n + s] + b_bar * x.get(t, d);
                h[d * n + s] = hv;
                acc += c.get(t, s) * hv;
            }
            y.set(t, d, acc);
        }
    }
    y
}

/// Discretized decays and hidden states kept for the backward pass, both
/// laid out `[t][channel][state]`.
struct ScanTrace {
    decay: Vec<f64>,
    states: Vec<f64>,
}

/// Chunked associative scan: each chunk is scanned from a zero state while
/// tracking its cumulative decay, then chunk carries are folded in.
fn scan_chunked(x: &Mat, delta: &Mat, a: &Mat, b: &Mat, c: &Mat) -> (Mat, ScanTrace) {
    let (l, ch, n) = scan_dims(x, delta, a, b, c);
    let w = ch * n;
    let mut decay = vec![0.0; l * w];
    let mut states = vec![0.0; l * w];
    let mut prod = vec![0.0; l * w];
    let (xd, dd, ad, bd, cd) = (x.data(), delta.data(), a.data(), b.data(), c.data());
    for start in (0..l).step_by(SCAN_CHUNK) {
        for t in start..(start + SCAN_CHUNK).min(l) {
            let row = t * w;
            let brow = &bd[t * n..(t + 1) * n];
            for d in 0..ch {
                let dt = dd[t * ch + d];
                assert!(dt > 0.0, "step size must be positive, got {dt} at ({t}, {d})");
                let u = dt * xd[t * ch + d];
                let arow = &ad[d * n..(d + 1) * n];
                let base = row + d * n;
                for s in 0..n {
                    let i = base + s;
                    let ab = (dt * arow[s]).exp();
                    decay[i] = ab;
                    if t == start {
                        states[i] = u * brow[s];
                        prod[i] = ab;
                    } else {
                        states[i] = ab * states[i - w] + u * brow[s];
                        prod[i] = ab * prod[i - w];
                    }
                }
            }
        }
    }
    for start in (SCAN_CHUNK..l).step_by(SCAN_CHUNK) {
        let carry = (start - 1) * w;
        for t in start..(start + SCAN_CHUNK).min(l) {
            let row = t * w;
            for i in 0..w {
                states[row + i] += prod[row + i] * states[carry + i];
            }
        }
    }
    let mut y = Mat::zeros(l, ch);
    for t in 0..l {
        let crow = &cd[t * n..(t + 1) * n];
        for d in 0..ch {
            let hs = &states[t * w + d * n..t * w + (d + 1) * n];
            y.set(t, d, hs.iter().zip(crow).map(|(h, c)| h * c).sum());
        }
    }
    (y, ScanTrace { decay, states })
}

/// Scan-based implementation used by the model; equals the reference up to
/// rounding.
pub fn selective_scan(x: &Mat, delta: &Mat, a: &Mat, b: &Mat, c: &Mat) -> Mat {
    scan_chunked(x, delta, a, b, c).0
}

struct ScanOp {
    trace: ScanTrace,
}

impl CustomOp for ScanOp {
    fn name(&self) -> &'static str {
        "selective_scan"
    }

    fn backward(&self, inputs: &[&Mat], _output: &Mat, gy: &Mat) -> Vec<Option<Mat>> {
        let (x, delta, a, b, c) = (inputs[0], inputs[1], inputs[2], inputs[3], inputs[4]);
        let (l, ch) = x.shape();
        let n = a.cols();
        let w = ch * n;
        let (mut dx, mut ddelta, mut da) = (Mat::zeros(l, ch), Mat::zeros(l, ch), Mat::zeros(ch, n));
        let (mut db, mut dc) = (Mat::zeros(l, n), Mat::zeros(l, n));
        let mut carry = vec![0.0; w];
        let ScanTrace { decay, states } = &self.trace;
        for t in (0..l).rev() {
            let row = t * w;
            for d in 0..ch {
                let gyv = gy.get(t, d);
                let dt = delta.get(t, d);
                let xv = x.get(t, d);
                let (mut ddt, mut dxv) = (0.0, 0.0);
                for s in 0..n {
                    let i = row + d * n + s;
                    let gh = gyv * c.get(t, s) + carry[d * n + s];
                    dc.data_mut()[t * n + s] += gyv * states[i];
                    let h_prev = if t > 0 { states[i - w] } else { 0.0 };
                    let ab = decay[i];
                    let dab = gh * h_prev * ab;
                    let bv = b.get(t, s);
                    ddt += dab * a.get(d, s) + gh * bv * xv;
                    da.data_mut()[d * n + s] += dab * dt;
                    db.data_mut()[t * n + s] += gh * dt * xv;
                    dxv += gh * dt * bv;
                    carry[d * n + s] = gh * ab;
                }
                ddelta.set(t, d, ddt);
                dx.set(t, d, dxv);
            }
        }
        vec![Some(dx), Some(ddelta), Some(da), Some(db), Some(dc)]
    }
}

/// Records the selective scan on the graph with an analytic backward.
pub fn selective_scan_graph(g: &mut Graph, x: Var, delta: Var, a: Var, b: Var, c: Var) -> Var {
    let (y, trace) = scan_chunked(g.value(x), g.value(delta), g.value(a), g.value(b), g.value(c));
    g.custom(Box::new(ScanOp { trace }), &[x, delta, a, b, c], y)
}

/// Depthwise causal convolution over rows: `y[t] = bias + sum_j w[j] * x[t + j - (K-1)]`.
pub fn causal_conv(x: &Mat, w: &Mat, bias: &Mat) -> Mat {
    let (l, ch) = x.shape();
    let k = w.rows();
    let mut y = Mat::zeros(l, ch);
    for t in 0..l {
        let out = y.row_mut(t);
        out.copy_from_slice(bias.row(0));
        for j in 0..k {
            let Some(src) = (t + j).checked_sub(k - 1) else { continue };
            for ((o, &xv), &wv) in out.iter_mut().zip(x.row(src)).zip(w.row(j)) {
                *o += wv * xv;
            }
        }
    }
    y
}

struct ConvOp;

impl CustomOp for ConvOp {
    fn name(&self) -> &'static str {
        "causal_conv"
    }

    fn backward(&self, inputs: &[&Mat], _output: &Mat, gy: &Mat) -> Vec<Option<Mat>> {
        let (x, w) = (inputs[0], inputs[1]);
        let (l, ch) = x.shape();
        let k = w.rows();
        let (mut dx, mut dw, mut db) = (Mat::zeros(l, ch), Mat::zeros(k, ch), Mat::zeros(1, ch));
        for t in 0..l {
            let g = gy.row(t);
            for (o, &gv) in db.row_mut(0).iter_mut().zip(g) {
                *o += gv;
            }
            for j in 0..k {
                let Some(src) = (t + j).checked_sub(k - 1) else { continue };
                for c in 0..ch {
                    let gv = g[c];
                    dw.data_mut()[j * ch + c] += gv * x.get(src, c);
                    dx.data_mut()[src * ch + c] += gv * w.get(j, c);
                }
            }
        }
        vec![Some(dx), Some(dw), Some(db)]
    }
}

pub fn causal_conv_graph(g: &mut Graph, x: Var, w: Var, bias: Var) -> Var {
    let y = causal_conv(g.value(x), g.value(w), g.value(bias));
    g.custom(Box::new(ConvOp), &[x, w, bias], y)
}

/// Inverse of softplus, used to place the step-size bias.
fn softplus_inv(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

/// Selective state-space block: gated SSM branch `m` and SiLU gate `n`.
#[derive(Debug, Clone)]
pub struct MambaBlock {
    pub in_proj_m: Linear,
    pub in_proj_n: Linear,
    pub conv_weight: ParamId,
    pub conv_bias: ParamId,
    pub dt_down: Linear,
    /// Its bias is the softplus-shifted step-size bias.
    pub dt_up: Linear,
    pub b_proj: Linear,
    pub c_proj: Linear,
    /// `A = -exp(a_log)`, `inner x STATE_DIM`.
    pub a_log: ParamId,
    pub out_proj: Linear,
    pub inner: usize,
}

impl MambaBlock {
    pub fn new<R: Rng>(b: &mut Builder<'_, R>, name: &str, dim: usize) -> Self {
        let inner = EXPAND * dim;
        let dt_rank = dim.div_ceil(16);
        let in_proj_m = Linear::new(b, &format!("{name}.in_proj_m"), dim, inner, false);
        let in_proj_n = Linear::new(b, &format!("{name}.in_proj_n"), dim, inner, false);
        let conv_weight = b.normal(&format!("{name}.conv.weight"), CONV_WIDTH, inner, 0.5);
        let conv_bias = b.zeros(&format!("{name}.conv.bias"), 1, inner);
        let dt_down = Linear::new(b, &format!("{name}.dt_down"), inner, dt_rank, false);
        let dt_up = Linear::new(b, &format!("{name}.dt_up"), dt_rank, inner, true);
        let (lo, hi) = (1e-3f64.ln(), 1e-1f64.ln());
        let bias = Mat::from_fn(1, inner, |_, _| softplus_inv(b.rng.random_range(lo..hi).exp()));
        b.store.set_value(dt_up.bias.expect("dt_up has a bias"), bias);
        let b_proj = Linear::new(b, &format!("{name}.b_proj"), inner, STATE_DIM, false);
        let c_proj = Linear::new(b, &format!("{name}.c_proj"), inner, STATE_DIM, false);
        let a_log = b.value(&format!("{name}.a_log"), Mat::from_fn(inner, STATE_DIM, |_, s| ((s + 1) as f64).ln()));
        let out_proj = Linear::new(b, &format!("{name}.out_proj"), inner, dim, false);
        Self { in_proj_m, in_proj_n, conv_weight, conv_bias, dt_down, dt_up, b_proj, c_proj, a_log, out_proj, inner }
    }

    /// Branch `m` up to the SSM input: projection, causal conv, SiLU.
    pub fn conv_branch(&self, g: &mut Graph, f: Var) -> Var {
        let m = self.in_proj_m.forward(g, f);
        let w = g.param(self.conv_weight);
        let bias = g.param(self.conv_bias);
        let m = causal_conv_graph(g, m, w, bias);
        g.silu(m)
    }

    pub fn forward(&self, g: &mut Graph, f: Var) -> Var {
        let m = self.conv_branch(g, f);
        let dt = self.dt_down.forward(g, m);
        let dt = self.dt_up.forward(g, dt);
        let delta = g.softplus(dt);
        let bm = self.b_proj.forward(g, m);
        let cm = self.c_proj.forward(g, m);
        let a_log = g.param(self.a_log);
        let a = g.exp(a_log);
        let a = g.neg(a);
        let q = selective_scan_graph(g, m, delta, a, bm, cm);
        let n = self.in_proj_n.forward(g, f);
        let n = g.silu(n);
        let qn = g.mul(q, n);
        self.out_proj.forward(g, qn)
    }
}

/// Mamba block wrapped with instance norms, residuals and a position-wise
/// feed-forward network.
#[derive(Debug, Clone)]
pub struct MambaLayer {
    pub block: MambaBlock,
    pub ffn: Mlp,
    pub dropout: f64,
}

impl MambaLayer {
    pub fn new<R: Rng>(b: &mut Builder<'_, R>, name: &str, dim: usize, dropout: f64) -> Self {
        Self {
            block: MambaBlock::new(b, &format!("{name}.mamba"), dim),
            ffn: Mlp::new(b, &format!("{name}.ffn"), dim, 2 * dim, dim),
            dropout,
        }
    }

    /// `rng = None` disables dropout.
    pub fn forward(&self, g: &mut Graph, f: Var, mut rng: Option<&mut ModelRng>) -> Var {
        let nf = g.normalize_cols(f, NORM_EPS);
        let q = self.block.forward(g, nf);
        let q = dropout(g, q, self.dropout, rng.as_deref_mut());
        let q = g.normalize_cols(q, NORM_EPS);
        let qt = g.add(q, f);
        let qp = self.ffn.forward(g, qt);
        let qp = dropout(g, qp, self.dropout, rng.as_deref_mut());
        let qp = g.normalize_cols(qp, NORM_EPS);
        g.add(qp, qt)
    }
}

/// Lane probabilities: `p` is `L x t_f`, masked lanes hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneScoreField {
    pub p: Mat,
    pub lane_mask: Vec<bool>,
}

impl LaneScoreField {
    /// Time-averaged score per lane (0 for masked lanes).
    pub fn mean_scores(&self) -> Vec<f64> {
        (0..self.p.rows()).map(|l| self.p.row(l).iter().sum::<f64>() / self.p.cols() as f64).collect()
    }

    /// Valid lanes by descending time-averaged score, ties to the lower index.
    pub fn ranking(&self) -> Vec<usize> {
        let mean = self.mean_scores();
        let mut idx: Vec<usize> = (0..mean.len()).filter(|&l| self.lane_mask[l]).collect();
        idx.sort_by(|&a, &b| mean[b].total_cmp(&mean[a]).then(a.cmp(&b)));
        idx
    }

    /// Per timestep, the most probable valid lane (ties to the lower index).
    pub fn argmax_per_step(&self) -> Vec<usize> {
        (0..self.p.cols())
            .map(|t| {
                let mut best = usize::MAX;
                for l in (0..self.p.rows()).filter(|&l| self.lane_mask[l]) {
                    if best == usize::MAX || self.p.get(l, t) > self.p.get(best, t) {
                        best = l;
                    }
                }
                best
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateLaneSet {
    pub indices: Vec<usize>,
    pub features: Mat,
    pub scores: Vec<f64>,
}

/// Top-`c` lanes by time-averaged probability, features stacked in rank
/// order. `c` above the valid lane count is clamped with a warning.
pub fn select_top_c(field: &LaneScoreField, features: &Mat, c: usize) -> Result<CandidateLaneSet> {
    if features.rows() != field.p.rows() {
        return Err(Error::Shape(format!("{} feature rows for {} lanes", features.rows(), field.p.rows())));
    }
    if c == 0 {
        return Err(Error::InvalidInput("top-c needs c >= 1".into()));
    }
    let ranking = field.ranking();
    if ranking.is_empty() {
        return Err(Error::InvalidInput("no valid lanes to select from".into()));
    }
    if c > ranking.len() {
        log::warn!("top-c of {c} clamped to {} valid lanes", ranking.len());
    }
    let indices: Vec<usize> = ranking.into_iter().take(c).collect();
    let mean = field.mean_scores();
    Ok(CandidateLaneSet {
        scores: indices.iter().map(|&l| mean[l]).collect(),
        features: features.select_rows(&indices),
        indices,
    })
}

fn check_labels(field: &LaneScoreField, labels: &[usize]) -> Result<()> {
    if labels.len() != field.p.cols() {
        return Err(Error::Shape(format!("{} labels for {} timesteps", labels.len(), field.p.cols())));
    }
    match labels.iter().find(|&&l| l >= field.lane_mask.len() || !field.lane_mask[l]) {
        Some(l) => Err(Error::InvalidInput(format!("label {l} refers to a masked or missing lane"))),
        None => Ok(()),
    }
}

/// `-sum_t log p[label_t, t]` with probabilities clamped to `[1e-7, 1 - 1e-7]`.
pub fn lane_loss(field: &LaneScoreField, labels: &[usize]) -> Result<f64> {
    check_labels(field, labels)?;
    Ok(labels.iter().enumerate().map(|(t, &l)| -field.p.get(l, t).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln()).sum())
}

/// Graph form of [`lane_loss`] on `probs_t` (t_f x lanes); `labels` index
/// its columns.
pub fn lane_loss_graph(g: &mut Graph, probs_t: Var, labels: &[usize]) -> Var {
    let (tf, l) = g.shape(probs_t);
    assert_eq!(labels.len(), tf);
    let onehot = g.constant(Mat::from_fn(tf, l, |t, c| if labels[t] == c { 1.0 } else { 0.0 }));
    let picked = g.mul(probs_t, onehot);
    let ones = g.constant(Mat::filled(l, 1, 1.0));
    let picked = g.matmul(picked, ones);
    let picked = g.clamp(picked, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let logp = g.log(picked);
    let total = g.sum(logp);
    g.neg(total)
}

/// Graph handles of one lane-module pass over the valid lanes.
#[derive(Debug, Clone, Copy)]
pub struct LaneForward {
    pub stream: Var,
    pub s: Var,
    /// Probabilities transposed: `t_f x lanes`.
    pub probs_t: Var,
}

#[derive(Debug)]
pub struct LaneModule {
    pub stream_proj: Linear,
    pub layers: Vec<MambaLayer>,
    pub head: Mlp,
    pub dim: usize,
    /// Number of Mamba layer applications so far.
    pub layer_calls: AtomicUsize,
}

impl Clone for LaneModule {
    fn clone(&self) -> Self {
        Self {
            stream_proj: self.stream_proj.clone(),
            layers: self.layers.clone(),
            head: self.head.clone(),
            dim: self.dim,
            layer_calls: AtomicUsize::new(self.layer_calls.load(Ordering::Relaxed)),
        }
    }
}

impl LaneModule {
    pub fn new<R: Rng>(b: &mut Builder<'_, R>, dim: usize, dropout: f64) -> Self {
        Self {
            stream_proj: Linear::new(b, "lane.stream", 2 * dim, dim, true),
            layers: (0..STACK_DEPTH).map(|i| MambaLayer::new(b, &format!("lane.layer{i}"), dim, dropout)).collect(),
            head: Mlp::new(b, "lane.head", dim, dim, FUTURE_STEPS),
            dim,
            layer_calls: AtomicUsize::new(0),
        }
    }

    /// `F = Linear([s_target; f_l])` for every lane row of `f_tilde`.
    pub fn stream_graph(&self, g: &mut Graph, s_target: Var, f_tilde: Var) -> Var {
        let l = g.shape(f_tilde).0;
        let rep = g.gather_rows(s_target, &vec![0; l]);
        let cat = g.concat_cols(&[rep, f_tilde]);
        self.stream_proj.forward(g, cat)
    }

    pub fn forward_graph(&self, g: &mut Graph, s_target: Var, f_tilde: Var, mut rng: Option<&mut ModelRng>) -> LaneForward {
        let stream = self.stream_graph(g, s_target, f_tilde);
        let mut s = stream;
        for layer in &self.layers {
            self.layer_calls.fetch_add(1, Ordering::Relaxed);
            s = layer.forward(g, s, rng.as_deref_mut());
        }
        let logits = self.head.forward(g, s);
        let logits_t = g.transpose(logits);
        let probs_t = g.softmax_rows(logits_t, None);
        LaneForward { stream, s, probs_t }
    }

    fn compact(lane_mask: &[bool], rows: usize) -> Result<Vec<usize>> {
        if lane_mask.len() != rows {
            return Err(Error::Shape(format!("{rows} lanes but {} mask entries", lane_mask.len())));
        }
        Ok((0..rows).filter(|&l| lane_mask[l]).collect())
    }

    /// Full-size lane stream; masked rows are zero.
    pub fn build_lane_stream(&self, store: &ParamStore, s_target: &[f64], f_tilde: &Mat, lane_mask: &[bool]) -> Result<Mat> {
        let valid = Self::compact(lane_mask, f_tilde.rows())?;
        if s_target.len() != self.dim || f_tilde.cols() != self.dim {
            return Err(Error::Shape(format!("expected width {}", self.dim)));
        }
        let mut out = Mat::zeros(f_tilde.rows(), self.dim);
        if valid.is_empty() {
            return Ok(out);
        }
        let mut g = Graph::new(store, false);
        let s = g.constant(Mat::row_vector(s_target));
        let f = g.constant(f_tilde.select_rows(&valid));
        let v = self.stream_graph(&mut g, s, f);
        for (i, &r) in valid.iter().enumerate() {
            out.row_mut(r).copy_from_slice(g.value(v).row(i));
        }
        Ok(out)
    }

    /// One Mamba layer at evaluation (no dropout) over valid rows of `f`.
    pub fn mamba_layer(&self, store: &ParamStore, index: usize, f: &Mat, lane_mask: &[bool]) -> Result<Mat> {
        let valid = Self::compact(lane_mask, f.rows())?;
        let mut out = Mat::zeros(f.rows(), f.cols());
        if valid.is_empty() {
            return Ok(out);
        }
        let mut g = Graph::new(store, false);
        let x = g.constant(f.select_rows(&valid));
        self.layer_calls.fetch_add(1, Ordering::Relaxed);
        let y = self.layers[index].forward(&mut g, x, None);
        for (i, &r) in valid.iter().enumerate() {
            out.row_mut(r).copy_from_slice(g.value(y).row(i));
        }
        Ok(out)
    }

    /// Probability head over `s` (L x D), softmax across valid lanes.
    pub fn lane_scores(&self, store: &ParamStore, s: &Mat, lane_mask: &[bool]) -> Result<LaneScoreField> {
        let valid = Self::compact(lane_mask, s.rows())?;
        if valid.is_empty() {
            return Err(Error::InvalidInput("all lanes are masked".into()));
        }
        let mut g = Graph::new(store, false);
        let x = g.constant(s.select_rows(&valid));
        let logits = self.head.forward(&mut g, x);
        let lt = g.transpose(logits);
        let pt = g.softmax_rows(lt, None);
        Ok(scatter_field(g.value(pt), &valid, lane_mask))
    }

    /// Stream, full stack and head at evaluation.
    pub fn forward(&self, store: &ParamStore, s_target: &[f64], f_tilde: &Mat, lane_mask: &[bool]) -> Result<LaneScoreField> {
        let valid = Self::compact(lane_mask, f_tilde.rows())?;
        if valid.is_empty() {
            return Err(Error::InvalidInput("all lanes are masked".into()));
        }
        let mut g = Graph::new(store, false);
        let s = g.constant(Mat::row_vector(s_target));
        let f = g.constant(f_tilde.select_rows(&valid));
        let out = self.forward_graph(&mut g, s, f, None);
        Ok(scatter_field(g.value(out.probs_t), &valid, lane_mask))
    }
}

/// Turns compact `t_f x valid` probabilities into a full `L x t_f` field.
pub fn scatter_field(probs_t: &Mat, valid: &[usize], lane_mask: &[bool]) -> LaneScoreField {
    let mut p = Mat::zeros(lane_mask.len(), probs_t.rows());
    for t in 0..probs_t.rows() {
        for (i, &l) in valid.iter().enumerate() {
            p.set(l, t, probs_t.get(t, i));
        }
    }
    LaneScoreField { p, lane_mask: lane_mask.to_vec() }
}
