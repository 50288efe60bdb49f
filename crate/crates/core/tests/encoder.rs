mod common;

use common::{random_mat, rng};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use trajllm::encoder::ContextEncoder;
use trajllm::nn::{Builder, ModelRng};
use trajllm::scene::{generate_synthetic_scene, Template};
use trajllm::tensor::{Mat, ParamGroup, ParamStore};

fn encoder(seed: u64) -> (ParamStore, ContextEncoder) {
    let mut store = ParamStore::new();
    let mut r = ModelRng::seed_from_u64(seed);
    let enc = ContextEncoder::new(&mut Builder::new(&mut store, &mut r, ParamGroup::Task), 16, 4, true);
    (store, enc)
}

fn permute_rows(m: &Mat, perm: &[usize]) -> Mat {
    m.select_rows(perm)
}

fn close(a: &Mat, b: &Mat, tol: f64) -> bool {
    a.shape() == b.shape() && a.max_abs_diff(b) <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fuse_is_permutation_equivariant(seed in 0u64..1000, n_a in 1usize..6, n_l in 1usize..10) {
        let (store, enc) = encoder(seed);
        let mut r = rng(seed);
        let h = random_mat(&mut r, n_a, 16, 1.0);
        let f = random_mat(&mut r, n_l, 16, 1.0);
        let am: Vec<bool> = (0..n_a).map(|i| i == 0 || rand::Rng::random_bool(&mut r, 0.7)).collect();
        let lm: Vec<bool> = (0..n_l).map(|_| rand::Rng::random_bool(&mut r, 0.7)).collect();
        let mut pa: Vec<usize> = (0..n_a).collect();
        let mut pl: Vec<usize> = (0..n_l).collect();
        pa.shuffle(&mut r);
        pl.shuffle(&mut r);

        let base = enc.fuse(&store, &h, &f, &am, &lm).unwrap();
        let am_p: Vec<bool> = pa.iter().map(|&i| am[i]).collect();
        let lm_p: Vec<bool> = pl.iter().map(|&i| lm[i]).collect();
        let perm = enc.fuse(&store, &permute_rows(&h, &pa), &permute_rows(&f, &pl), &am_p, &lm_p).unwrap();
        prop_assert!(close(&perm.h_tilde, &permute_rows(&base.h_tilde, &pa), 1e-12));
        prop_assert!(close(&perm.f_tilde, &permute_rows(&base.f_tilde, &pl), 1e-12));
    }

    #[test]
    fn masked_tokens_do_not_leak(seed in 0u64..1000, n_a in 2usize..6, n_l in 2usize..10) {
        let (store, enc) = encoder(seed);
        let mut r = rng(seed + 1);
        let h = random_mat(&mut r, n_a, 16, 1.0);
        let f = random_mat(&mut r, n_l, 16, 1.0);
        let am: Vec<bool> = (0..n_a).map(|i| i == 0 || i % 2 == 1).collect();
        let lm: Vec<bool> = (0..n_l).map(|l| l % 3 != 1).collect();
        let base = enc.fuse(&store, &h, &f, &am, &lm).unwrap();

        let mut h2 = h.clone();
        let mut f2 = f.clone();
        for (i, &m) in am.iter().enumerate() {
            if !m { h2.row_mut(i).iter_mut().for_each(|v| *v = *v * 37.0 - 5.0); }
        }
        for (l, &m) in lm.iter().enumerate() {
            if !m { f2.row_mut(l).iter_mut().for_each(|v| *v = -*v * 11.0 + 3.0); }
        }
        let other = enc.fuse(&store, &h2, &f2, &am, &lm).unwrap();
        prop_assert_eq!(base.h_tilde.data(), other.h_tilde.data());
        prop_assert_eq!(base.f_tilde.data(), other.f_tilde.data());
        for (i, &m) in am.iter().enumerate() {
            if !m { prop_assert!(base.h_tilde.row(i).iter().all(|&v| v == 0.0)); }
        }
        for (l, &m) in lm.iter().enumerate() {
            if !m { prop_assert!(base.f_tilde.row(l).iter().all(|&v| v == 0.0)); }
        }
    }

    #[test]
    fn agent_and_lane_embeddings_are_permutation_equivariant(seed in 0u64..200) {
        let (store, enc) = encoder(seed);
        let s = generate_synthetic_scene(Template::Intersection, 0.2, seed).unwrap();
        let mut r = rng(seed);
        let mut pa: Vec<usize> = (0..s.agents.len()).collect();
        pa.shuffle(&mut r);
        let agents: Vec<_> = pa.iter().map(|&i| s.agents[i].clone()).collect();
        let masks: Vec<_> = pa.iter().map(|&i| s.agent_mask[i].clone()).collect();
        let base = enc.embed_agents(&store, &s.agents, &s.agent_mask).unwrap();
        let perm = enc.embed_agents(&store, &agents, &masks).unwrap();
        prop_assert!(close(&perm, &permute_rows(&base, &pa), 1e-12));

        let mut pl: Vec<usize> = (0..s.lanes.len()).collect();
        pl.shuffle(&mut r);
        let lanes: Vec<_> = pl.iter().map(|&l| s.lanes[l].clone()).collect();
        let lm: Vec<bool> = pl.iter().map(|&l| s.lane_mask[l]).collect();
        let base = enc.embed_lanes(&store, &s.lanes, &s.lane_mask).unwrap();
        let perm = enc.embed_lanes(&store, &lanes, &lm).unwrap();
        prop_assert!(close(&perm, &permute_rows(&base, &pl), 1e-12));
    }
}

#[test]
fn zeroed_cross_attention_passes_inputs_through() {
    let (mut store, enc) = encoder(3);
    for lin in [&enc.lane_from_agents.out, &enc.agents_from_lanes.out] {
        let (r, c) = store.value(lin.weight).shape();
        store.set_value(lin.weight, Mat::zeros(r, c));
        let b = lin.bias.unwrap();
        let (r, c) = store.value(b).shape();
        store.set_value(b, Mat::zeros(r, c));
    }
    let mut r = rng(3);
    let h = random_mat(&mut r, 4, 16, 1.0);
    let f = random_mat(&mut r, 7, 16, 1.0);
    let out = enc.fuse(&store, &h, &f, &[true; 4], &[true; 7]).unwrap();
    assert_eq!(out.f_tilde.data(), f.data());

    // h_tilde is then exactly the gated fusion of h with its self-attention
    let mut g = trajllm::tensor::Graph::new(&store, false);
    let hv = g.constant(h.clone());
    let sa = enc.self_attn.forward(&mut g, hv, hv, None);
    let glu = enc.glu.forward(&mut g, hv, sa);
    assert_eq!(out.h_tilde.data(), g.value(glu).data());
}

#[test]
fn embeddings_reject_non_finite_input() {
    let (store, enc) = encoder(1);
    let mut s = generate_synthetic_scene(Template::Straight, 0.0, 1).unwrap();
    s.lanes[0].start[0] = f64::NAN;
    assert!(enc.embed_lanes(&store, &s.lanes, &s.lane_mask).is_err());
    s.agents[0][0].end[1] = f64::INFINITY;
    assert!(enc.embed_agents(&store, &s.agents, &s.agent_mask).is_err());
}
