use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which part of the model owns a tensor. Only `Backbone` tensors are
/// pre-trained; everything else is task-specific.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Backbone,
    Adapter,
    Task,
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Mat,
    pub group: ParamGroup,
    pub trainable: bool,
}

/// Flat registry of every tensor in a model, addressed by [`ParamId`].
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on a duplicate name; names are assigned by model constructors.
    pub fn add(&mut self, name: impl Into<String>, value: Mat, group: ParamGroup) -> ParamId {
        let name = name.into();
        let id = ParamId(self.params.len());
        let trainable = group != ParamGroup::Backbone;
        assert!(self.by_name.insert(name.clone(), id).is_none(), "duplicate parameter name {name}");
        self.params.push(Param { name, value, group, trainable });
        id
    }

    pub fn add_normal(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        std: f64,
        group: ParamGroup,
        rng: &mut impl Rng,
    ) -> ParamId {
        let normal = Normal::new(0.0, std).expect("finite std");
        let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
        self.add(name, Mat::from_vec(rows, cols, data), group)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize, group: ParamGroup) -> ParamId {
        self.add(name, Mat::zeros(rows, cols), group)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Mat {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.params[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Mat) {
        let slot = &mut self.params[id.0].value;
        assert_eq!(slot.shape(), value.shape(), "shape change for {}", self.params[id.0].name);
        *slot = value;
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.params[id.0].trainable
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect()
    }

    /// Scalar count of the selected tensors.
    pub fn count(&self, mut pred: impl FnMut(&Param) -> bool) -> usize {
        self.params.iter().filter(|p| pred(p)).map(|p| p.value.len()).sum()
    }

    pub fn total_count(&self) -> usize {
        self.count(|_| true)
    }
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Grads {
    slots: Vec<Option<Mat>>,
}

impl Grads {
    pub fn new(store: &ParamStore) -> Self {
        Self { slots: vec![None; store.len()] }
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Mat) {
        match &mut self.slots[id.0] {
            Some(acc) => acc.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    pub fn accumulate_owned(&mut self, id: ParamId, g: Mat) {
        match &mut self.slots[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.slots[id.0].as_ref()
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.slots.iter_mut().flatten() {
            g.scale_assign(s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.slots.iter().flatten().map(|g| g.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Mat)> {
        self.slots.iter().enumerate().filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub fn is_finite(&self) -> bool {
        self.slots.iter().flatten().all(Mat::is_finite)
    }
}
