//! Layers shared by the encoder, lane module and decoder. Every layer owns
//! [`ParamId`]s into a [`ParamStore`] and records its forward pass on a
//! [`Graph`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Graph, Mat, ParamGroup, ParamId, ParamStore, Var};

/// Generator used for dropout and latent sampling.
pub type ModelRng = ChaCha8Rng;

/// Builds named parameters under a common prefix.
pub struct Builder<'a, R: Rng> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut R,
    pub group: ParamGroup,
}

impl<'a, R: Rng> Builder<'a, R> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut R, group: ParamGroup) -> Self {
        Self { store, rng, group }
    }

    pub fn normal(&mut self, name: &str, rows: usize, cols: usize, std: f64) -> ParamId {
        self.store.add_normal(name, rows, cols, std, self.group, self.rng)
    }

    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.store.add_zeros(name, rows, cols, self.group)
    }

    pub fn value(&mut self, name: &str, value: Mat) -> ParamId {
        self.store.add(name, value, self.group)
    }
}

/// `y = x W + b` with `W` stored as `in x out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<R: Rng>(b: &mut Builder<'_, R>, name: &str, d_in: usize, d_out: usize, bias: bool) -> Self {
        let std = (1.0 / d_in as f64).sqrt();
        let weight = b.normal(&format!("{name}.weight"), d_in, d_out, std);
        let bias = bias.then(|| b.zeros(&format!("{name}.bias"), 1, d_out));
        Self { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let y = g.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add(y, b)
            }
            None => y,
        }
    }

    pub fn d_out(&self, store: &ParamStore) -> usize {
        store.value(self.weight).cols()
    }
}

/// Two linear layers with a ReLU in between.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new<R: Rng>(b: &mut Builder<'_, R>, name: &str, d_in: usize, d_hidden: usize, d_out: usize) -> Self {
        Self {
            fc1: Linear::new(b, &format!("{name}.fc1"), d_in, d_hidden, true),
            fc2: Linear::new(b, &format!("{name}.fc2"), d_hidden, d_out, true),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.fc1.forward(g, x);
        let h = g.relu(h);
        self.fc2.forward(g, h)
    }
}

/// Single-layer GRU cell (PyTorch gate ordering r, z, n).
#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng>(b: &mut Builder<'_, R>, name: &str, d_in: usize, hidden: usize) -> Self {
        let std = (1.0 / hidden as f64).sqrt();
        Self {
            w_ih: b.normal(&format!("{name}.w_ih"), d_in, 3 * hidden, std),
            w_hh: b.normal(&format!("{name}.w_hh"), hidden, 3 * hidden, std),
            b_ih: b.zeros(&format!("{name}.b_ih"), 1, 3 * hidden),
            b_hh: b.zeros(&format!("{name}.b_hh"), 1, 3 * hidden),
            hidden,
        }
    }

    /// One step for a batch of rows. `h = None` means a zero initial state.
    pub fn step(&self, g: &mut Graph, x: Var, h: Option<Var>) -> Var {
        let n = self.hidden;
        let w_ih = g.param(self.w_ih);
        let b_ih = g.param(self.b_ih);
        let gi = g.matmul(x, w_ih);
        let gi = g.add(gi, b_ih);
        let b_hh = g.param(self.b_hh);
        let gh = match h {
            Some(h) => {
                let w_hh = g.param(self.w_hh);
                let gh = g.matmul(h, w_hh);
                g.add(gh, b_hh)
            }
            None => {
                let rows = g.shape(x).0;
                let zeros = g.constant(Mat::zeros(rows, 3 * n));
                g.add(zeros, b_hh)
            }
        };
        let (ir, iz, inn) = (g.slice_cols(gi, 0, n), g.slice_cols(gi, n, n), g.slice_cols(gi, 2 * n, n));
        let (hr, hz, hn) = (g.slice_cols(gh, 0, n), g.slice_cols(gh, n, n), g.slice_cols(gh, 2 * n, n));
        let r = g.add(ir, hr);
        let r = g.sigmoid(r);
        let z = g.add(iz, hz);
        let z = g.sigmoid(z);
        let rn = g.mul(r, hn);
        let cand = g.add(inn, rn);
        let cand = g.tanh(cand);
        // h' = (1 - z) * cand + z * h = cand + z * (h - cand)
        match h {
            Some(h) => {
                let diff = g.sub(h, cand);
                let zd = g.mul(z, diff);
                g.add(cand, zd)
            }
            None => {
                let zc = g.mul(z, cand);
                g.sub(cand, zc)
            }
        }
    }
}

/// Multi-head scaled dot-product attention with input/output projections.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(b: &mut Builder<'_, R>, name: &str, dim: usize, heads: usize) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim {dim} not divisible by {heads} heads");
        Self {
            q: Linear::new(b, &format!("{name}.q"), dim, dim, true),
            k: Linear::new(b, &format!("{name}.k"), dim, dim, true),
            v: Linear::new(b, &format!("{name}.v"), dim, dim, true),
            out: Linear::new(b, &format!("{name}.out"), dim, dim, true),
            heads,
        }
    }

    /// `queries` attend over `keys` (also used as values). `mask`, if given,
    /// is `n_q x n_k` row-major with `true` for allowed pairs. A query with no
    /// allowed key receives a zero output.
    pub fn forward(&self, g: &mut Graph, queries: Var, keys: Var, mask: Option<&[bool]>) -> Var {
        let q = self.q.forward(g, queries);
        let k = self.k.forward(g, keys);
        let v = self.v.forward(g, keys);
        let ctx = attend(g, q, k, v, self.heads, mask);
        let out = self.out.forward(g, ctx);
        match mask {
            // rows that saw no key carry only the output bias; zero them
            Some(m) => {
                let n_k = g.shape(keys).0;
                let live: Vec<f64> = m.chunks(n_k.max(1)).map(|row| if row.iter().any(|&x| x) { 1.0 } else { 0.0 }).collect();
                if live.iter().all(|&x| x == 1.0) {
                    out
                } else {
                    let n = live.len();
                    let col = g.constant(Mat::from_vec(n, 1, live));
                    g.mul(out, col)
                }
            }
            None => out,
        }
    }
}

/// Splits projected `q`, `k`, `v` into heads and applies masked softmax
/// attention, returning the concatenated head outputs.
pub fn attend(g: &mut Graph, q: Var, k: Var, v: Var, heads: usize, mask: Option<&[bool]>) -> Var {
    let dim = g.shape(q).1;
    let hd = dim / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * hd, hd);
        let kh = g.slice_cols(k, h * hd, hd);
        let vh = g.slice_cols(v, h * hd, hd);
        let s = g.matmul_t(qh, false, kh, true);
        let s = g.scale(s, scale);
        let p = g.softmax_rows(s, mask);
        outs.push(g.matmul(p, vh));
    }
    if heads == 1 {
        outs[0]
    } else {
        g.concat_cols(&outs)
    }
}

/// Inverted dropout; `rng = None` (evaluation) is the identity.
pub fn dropout(g: &mut Graph, x: Var, rate: f64, rng: Option<&mut ModelRng>) -> Var {
    match rng {
        Some(rng) if rate > 0.0 => {
            let (r, c) = g.shape(x);
            let keep = 1.0 / (1.0 - rate);
            let m = Mat::from_fn(r, c, |_, _| if rng.random::<f64>() < rate { 0.0 } else { keep });
            let m = g.constant(m);
            g.mul(x, m)
        }
        _ => x,
    }
}

/// Lower-triangular (causal) mask of size `n x n`.
pub fn causal_mask(n: usize) -> Vec<bool> {
    (0..n * n).map(|i| i % n <= i / n).collect()
}
