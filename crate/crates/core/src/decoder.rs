//! Multi-modal Laplace decoder: lane-guided attention, decoder input
//! assembly, the (pi, mu, b) heads and the training losses.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::lane_prob::CandidateLaneSet;
use crate::nn::{Builder, Mlp, ModelRng, MultiHeadAttention};
use crate::scene::{Point, FUTURE_STEPS};
use crate::tensor::{Graph, Mat, ParamId, ParamStore, Var};
use crate::{Error, Result};

pub const SCALE_FLOOR: f64 = 1e-3;
pub const PI_CLAMP: f64 = 1e-7;
/// Trajectory offsets are predicted in units of this many meters.
pub const COORD_SCALE: f64 = 10.0;

/// K modes, each a `t_f x 2` location and scale flattened row-wise as
/// `[x_1, y_1, x_2, y_2, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMixture {
    pub pi: Vec<f64>,
    pub mu: Mat,
    pub b: Mat,
}

impl TrajectoryMixture {
    pub fn k(&self) -> usize {
        self.pi.len()
    }

    pub fn steps(&self) -> usize {
        self.mu.cols() / 2
    }

    pub fn mu_at(&self, k: usize, t: usize) -> Point {
        [self.mu.get(k, 2 * t), self.mu.get(k, 2 * t + 1)]
    }

    pub fn b_at(&self, k: usize, t: usize) -> Point {
        [self.b.get(k, 2 * t), self.b.get(k, 2 * t + 1)]
    }

    pub fn trajectory(&self, k: usize) -> Vec<Point> {
        (0..self.steps()).map(|t| self.mu_at(k, t)).collect()
    }

    pub fn scales(&self, k: usize) -> Vec<Point> {
        (0..self.steps()).map(|t| self.b_at(k, t)).collect()
    }

    /// A mixture whose every mode equals `gt` with unit probability spread.
    pub fn from_ground_truth(gt: &[Point], k: usize) -> Self {
        let row: Vec<f64> = gt.iter().flat_map(|p| [p[0], p[1]]).collect();
        Self {
            pi: vec![1.0 / k as f64; k],
            mu: Mat::from_fn(k, row.len(), |_, c| row[c]),
            b: Mat::filled(k, row.len(), 1.0),
        }
    }
}

pub fn flatten_points(points: &[Point]) -> Vec<f64> {
    points.iter().flat_map(|p| [p[0], p[1]]).collect()
}

/// Standard-normal latent vector drawn from a seeded generator.
pub fn sample_latent(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ModelRng::seed_from_u64(seed);
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// `(1/t_f) sum_t sum_axis [log(2b) + |y - mu| / b]` for one mode.
pub fn laplace_nll(y: &[Point], mu: &[f64], b: &[f64]) -> f64 {
    assert_eq!(mu.len(), 2 * y.len());
    assert_eq!(b.len(), mu.len());
    assert!(b.iter().all(|&v| v > 0.0), "Laplace scale must be positive");
    let yf = flatten_points(y);
    let s: f64 = yf.iter().zip(mu).zip(b).map(|((y, m), b)| (2.0 * b).ln() + (y - m).abs() / b).sum();
    s / y.len() as f64
}

/// Sum over time of the L2 distance between one mode and `gt`.
pub fn mode_distance(mu: &[f64], gt: &[Point]) -> f64 {
    gt.iter().enumerate().map(|(t, p)| (mu[2 * t] - p[0]).hypot(mu[2 * t + 1] - p[1])).sum()
}

/// Mode with the smallest summed L2 error; ties go to the lowest index.
pub fn winner_mode(mu: &Mat, gt: &[Point]) -> usize {
    let mut best = (0, f64::INFINITY);
    for k in 0..mu.rows() {
        let d = mode_distance(mu.row(k), gt);
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// Winner-takes-all regression: Laplace NLL of the best mode.
pub fn wta_regression_loss(mixture: &TrajectoryMixture, gt: &[Point]) -> (f64, usize) {
    let k = winner_mode(&mixture.mu, gt);
    (laplace_nll(gt, mixture.mu.row(k), mixture.b.row(k)), k)
}

/// `-log(pi[k])` with `pi` clamped to `[1e-7, 1]`.
pub fn mode_classification_loss(pi: &[f64], k_star: usize) -> f64 {
    -pi[k_star].clamp(PI_CLAMP, 1.0).ln()
}

pub fn total_loss(lane: f64, reg: f64, cls: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        reg + cls
    } else {
        lambda * lane + reg + cls
    }
}

/// Graph form of [`laplace_nll`]; `mu`, `b` are `1 x 2t_f`.
pub fn laplace_nll_graph(g: &mut Graph, mu: Var, b: Var, y: &[Point]) -> Var {
    let yv = g.constant(Mat::row_vector(&flatten_points(y)));
    let two_b = g.scale(b, 2.0);
    let log_term = g.log(two_b);
    let diff = g.sub(yv, mu);
    let diff = g.abs(diff);
    let ratio = g.div(diff, b);
    let total = g.add(log_term, ratio);
    let total = g.sum(total);
    g.scale(total, 1.0 / y.len() as f64)
}

/// Graph form of [`mode_classification_loss`]; `pi` is `1 x K`.
pub fn mode_classification_graph(g: &mut Graph, pi: Var, k_star: usize) -> Var {
    let p = g.slice_cols(pi, k_star, 1);
    let p = g.clamp(p, PI_CLAMP, 1.0);
    let lp = g.log(p);
    g.neg(lp)
}

/// Graph handles of one decoder pass.
#[derive(Debug, Clone, Copy)]
pub struct MixtureVars {
    /// `1 x K`.
    pub pi: Var,
    /// `K x 2t_f`.
    pub mu: Var,
    pub b: Var,
}

#[derive(Debug, Clone)]
pub struct LaplaceDecoder {
    pub guide: MultiHeadAttention,
    /// `K x mode_dim`.
    pub mode_embeddings: ParamId,
    pub pi_head: Mlp,
    pub mu_head: Mlp,
    pub b_head: Mlp,
    pub dim: usize,
    pub k_modes: usize,
    pub latent_dim: usize,
    pub mode_dim: usize,
    /// Per-axis running sum over time, `2t_f x 2t_f`.
    cumsum: Mat,
}

impl LaplaceDecoder {
    pub fn new<R: Rng>(b: &mut Builder<'_, R>, dim: usize, heads: usize, k_modes: usize, latent_dim: usize, mode_dim: usize) -> Self {
        let d_e = 2 * dim + latent_dim + mode_dim;
        let out = 2 * FUTURE_STEPS;
        let n = out;
        Self {
            guide: MultiHeadAttention::new(b, "decoder.guide", dim, heads),
            mode_embeddings: b.normal("decoder.mode_embeddings", k_modes, mode_dim, 1.0),
            pi_head: Mlp::new(b, "decoder.pi", d_e, dim, 1),
            mu_head: Mlp::new(b, "decoder.mu", d_e, dim, out),
            b_head: Mlp::new(b, "decoder.b", d_e, dim, out),
            dim,
            k_modes,
            latent_dim,
            mode_dim,
            cumsum: Mat::from_fn(n, n, |i, j| if i % 2 == j % 2 && i <= j { COORD_SCALE } else { 0.0 }),
        }
    }

    pub fn input_dim(&self) -> usize {
        2 * self.dim + self.latent_dim + self.mode_dim
    }

    /// `s_target + CrossAtt(query = s_target, keys = candidates)`.
    pub fn guide_graph(&self, g: &mut Graph, s_target: Var, candidates: Var) -> Var {
        let upd = self.guide.forward(g, s_target, candidates, None);
        g.add(s_target, upd)
    }

    /// Rows `[g_target; s_tilde; o; mode_embedding_k]`, one per mode.
    pub fn assemble_graph(&self, g: &mut Graph, g_target: Var, s_tilde: Var, latent: &[f64], mode_embeddings: Var) -> Var {
        let o = g.constant(Mat::row_vector(latent));
        let shared = g.concat_cols(&[g_target, s_tilde, o]);
        let k = g.shape(mode_embeddings).0;
        let rep = g.gather_rows(shared, &vec![0; k]);
        g.concat_cols(&[rep, mode_embeddings])
    }

    pub fn heads_graph(&self, g: &mut Graph, e: Var) -> MixtureVars {
        let logits = self.pi_head.forward(g, e);
        let logits = g.transpose(logits);
        let pi = g.softmax_rows(logits, None);
        let raw_mu = self.mu_head.forward(g, e);
        let cs = g.constant(self.cumsum.clone());
        let mu = g.matmul(raw_mu, cs);
        let raw_b = self.b_head.forward(g, e);
        let b = g.softplus(raw_b);
        let b = g.add_scalar(b, SCALE_FLOOR);
        MixtureVars { pi, mu, b }
    }

    /// Full decoder on graph values. `candidates = None` skips lane guidance
    /// (`s_tilde = s_target`).
    pub fn forward_graph(&self, g: &mut Graph, g_target: Var, s_target: Var, candidates: Option<Var>, latent: &[f64]) -> MixtureVars {
        let s_tilde = match candidates {
            Some(c) => self.guide_graph(g, s_target, c),
            None => s_target,
        };
        let modes = g.param(self.mode_embeddings);
        let e = self.assemble_graph(g, g_target, s_tilde, latent, modes);
        self.heads_graph(g, e)
    }

    pub fn lane_guided_attention(&self, store: &ParamStore, s_target: &[f64], candidates: &CandidateLaneSet) -> Result<Vec<f64>> {
        if candidates.indices.is_empty() || candidates.features.rows() == 0 {
            return Err(Error::InvalidInput("lane guidance needs at least one candidate".into()));
        }
        if s_target.len() != self.dim || candidates.features.cols() != self.dim {
            return Err(Error::Shape(format!("expected width {}", self.dim)));
        }
        let mut g = Graph::new(store, false);
        let s = g.constant(Mat::row_vector(s_target));
        let c = g.constant(candidates.features.clone());
        let out = self.guide_graph(&mut g, s, c);
        Ok(g.value(out).data().to_vec())
    }

    pub fn assemble_decoder_input(&self, g_target: &[f64], s_tilde: &[f64], latent: &[f64], mode_embeddings: &Mat) -> Result<Mat> {
        if g_target.len() != self.dim || s_tilde.len() != self.dim || latent.len() != self.latent_dim {
            return Err(Error::Shape("decoder context widths do not match the configuration".into()));
        }
        if mode_embeddings.cols() != self.mode_dim {
            return Err(Error::Shape(format!("mode embeddings need {} columns", self.mode_dim)));
        }
        let shared: Vec<f64> = g_target.iter().chain(s_tilde).chain(latent).copied().collect();
        Ok(Mat::from_fn(mode_embeddings.rows(), self.input_dim(), |k, c| {
            if c < shared.len() {
                shared[c]
            } else {
                mode_embeddings.get(k, c - shared.len())
            }
        }))
    }

    pub fn decode_mixture(&self, store: &ParamStore, e: &Mat) -> Result<TrajectoryMixture> {
        if e.cols() != self.input_dim() {
            return Err(Error::Shape(format!("decoder input width {} != {}", e.cols(), self.input_dim())));
        }
        if !e.is_finite() {
            return Err(Error::NonFinite("decoder input".into()));
        }
        let mut g = Graph::new(store, false);
        let ev = g.constant(e.clone());
        let m = self.heads_graph(&mut g, ev);
        Ok(mixture_from_graph(&g, m))
    }
}

pub fn mixture_from_graph(g: &Graph, m: MixtureVars) -> TrajectoryMixture {
    TrajectoryMixture { pi: g.value(m.pi).data().to_vec(), mu: g.value(m.mu).clone(), b: g.value(m.b).clone() }
}
