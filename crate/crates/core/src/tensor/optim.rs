use super::param::{Grads, ParamStore};
use super::Mat;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    moments: Vec<Option<(Mat, Mat)>>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, moments: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Updates every trainable parameter that has a gradient. Frozen tensors
    /// are never written.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) {
        if self.moments.len() < store.len() {
            self.moments.resize(store.len(), None);
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (id, g) in grads.iter() {
            if !store.is_trainable(id) {
                continue;
            }
            let (m, v) = self.moments[id.index()].get_or_insert_with(|| (Mat::zeros(g.rows(), g.cols()), Mat::zeros(g.rows(), g.cols())));
            let w = store.value_mut(id);
            let decay = 1.0 - self.lr * self.weight_decay;
            for i in 0..g.len() {
                let gi = g.data()[i];
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let update = (mi / bc1) / ((vi / bc2).sqrt() + self.eps);
                let wi = &mut w.data_mut()[i];
                *wi = *wi * decay - self.lr * update;
            }
        }
    }
}

/// Scales `grads` so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut Grads, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}
