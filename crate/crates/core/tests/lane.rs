mod common;

use common::{random_mat, rng};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use std::sync::atomic::Ordering;
use trajllm::lane_prob::{
    causal_conv, lane_loss, select_top_c, selective_scan, selective_scan_reference, LaneModule, LaneScoreField, PROB_CLAMP,
    STACK_DEPTH,
};
use trajllm::nn::{Builder, ModelRng};
use trajllm::scene::FUTURE_STEPS;
use trajllm::tensor::{Graph, Mat, ParamGroup, ParamStore};

fn scan_inputs(seed: u64, l: usize, ch: usize, n: usize) -> [Mat; 5] {
    let mut r = rng(seed);
    [
        random_mat(&mut r, l, ch, 2.0),
        Mat::from_fn(l, ch, |_, _| r.random_range(0.01..1.0)),
        Mat::from_fn(ch, n, |_, _| -r.random_range(0.05..3.0)),
        random_mat(&mut r, l, n, 1.0),
        random_mat(&mut r, l, n, 1.0),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn scan_matches_recurrence(seed in 0u64..1_000_000, l in 1usize..=64, ch in 1usize..5, n in 1usize..9) {
        let [x, delta, a, b, c] = scan_inputs(seed, l, ch, n);
        let fast = selective_scan(&x, &delta, &a, &b, &c);
        let slow = selective_scan_reference(&x, &delta, &a, &b, &c);
        prop_assert!(fast.max_abs_diff(&slow) < 1e-5);
    }

    #[test]
    fn scan_and_conv_are_causal(seed in 0u64..10_000, l in 2usize..40, cut in 0usize..39) {
        let cut = cut % (l - 1);
        let [x, delta, a, b, c] = scan_inputs(seed, l, 3, 4);
        let mut x2 = x.clone();
        for t in cut + 1..l {
            x2.row_mut(t).iter_mut().for_each(|v| *v += 5.0);
        }
        let y1 = selective_scan(&x, &delta, &a, &b, &c);
        let y2 = selective_scan(&x2, &delta, &a, &b, &c);
        let mut r = rng(seed);
        let w = random_mat(&mut r, 4, 3, 1.0);
        let bias = random_mat(&mut r, 1, 3, 1.0);
        let c1 = causal_conv(&x, &w, &bias);
        let c2 = causal_conv(&x2, &w, &bias);
        for t in 0..=cut {
            prop_assert_eq!(y1.row(t), y2.row(t));
            prop_assert_eq!(c1.row(t), c2.row(t));
        }
    }

    #[test]
    fn softmax_ignores_constant_shifts(seed in 0u64..10_000, shift in -50.0f64..50.0) {
        let logits = random_mat(&mut rng(seed), 4, 7, 3.0);
        let store = ParamStore::new();
        let mut g = Graph::new(&store, false);
        let a = g.constant(logits.clone());
        let b = g.constant(logits.map(|v| v + shift));
        let pa = g.softmax_rows(a, None);
        let pb = g.softmax_rows(b, None);
        prop_assert!(g.value(pa).max_abs_diff(g.value(pb)) < 1e-12);
    }
}

#[test]
fn scalar_recurrence_by_hand() {
    // x = 1 twice, A = -1, step ln 2, B = C = 1
    let [x, delta, a, b, c] = [
        Mat::from_vec(2, 1, vec![1.0, 1.0]),
        Mat::filled(2, 1, 2f64.ln()),
        Mat::filled(1, 1, -1.0),
        Mat::filled(2, 1, 1.0),
        Mat::filled(2, 1, 1.0),
    ];
    let y = selective_scan(&x, &delta, &a, &b, &c);
    assert!((y.get(0, 0) - 0.6931).abs() < 1e-4);
    assert!((y.get(1, 0) - 1.0397).abs() < 1e-4);
}

fn module(seed: u64, dim: usize) -> (ParamStore, LaneModule) {
    let mut store = ParamStore::new();
    let lm = LaneModule::new(&mut Builder::new(&mut store, &mut ModelRng::seed_from_u64(seed), ParamGroup::Task), dim, 0.0);
    (store, lm)
}

#[test]
fn probabilities_form_a_simplex_over_valid_lanes() {
    let (store, lm) = module(1, 8);
    let mut r = rng(1);
    for trial in 0..20 {
        let lanes = r.random_range(1..20);
        let mask: Vec<bool> = (0..lanes).map(|l| l == trial % lanes || r.random_bool(0.6)).collect();
        let s = random_mat(&mut r, 1, 8, 1.0);
        let f = random_mat(&mut r, lanes, 8, 1.0);
        let before = lm.layer_calls.load(Ordering::Relaxed);
        let field = lm.forward(&store, s.row(0), &f, &mask).unwrap();
        assert_eq!(lm.layer_calls.load(Ordering::Relaxed) - before, STACK_DEPTH);
        assert_eq!(field.p.shape(), (lanes, FUTURE_STEPS));
        for t in 0..FUTURE_STEPS {
            let col: f64 = (0..lanes).map(|l| field.p.get(l, t)).sum();
            assert!((col - 1.0).abs() < 1e-9);
            for l in 0..lanes {
                let p = field.p.get(l, t);
                if mask[l] {
                    assert!(p > 0.0 && p <= 1.0);
                } else {
                    assert_eq!(p, 0.0);
                }
            }
        }
    }
    assert!(lm.forward(&store, &[0.0; 8], &Mat::zeros(3, 8), &[false; 3]).is_err());
}

#[test]
fn stack_is_three_layers_composed() {
    let (store, lm) = module(2, 8);
    assert_eq!(lm.layers.len(), 3);
    let mut r = rng(2);
    let s = random_mat(&mut r, 1, 8, 1.0);
    let f = random_mat(&mut r, 6, 8, 1.0);
    let mask = [true, false, true, true, false, true];
    let mut h = lm.build_lane_stream(&store, s.row(0), &f, &mask).unwrap();
    for i in 0..STACK_DEPTH {
        h = lm.mamba_layer(&store, i, &h, &mask).unwrap();
    }
    let staged = lm.lane_scores(&store, &h, &mask).unwrap();
    let direct = lm.forward(&store, s.row(0), &f, &mask).unwrap();
    assert!(staged.p.max_abs_diff(&direct.p) < 1e-12);
}

fn random_field(r: &mut impl Rng, lanes: usize) -> LaneScoreField {
    let mask: Vec<bool> = (0..lanes).map(|l| l == 0 || r.random_bool(0.7)).collect();
    let mut p = Mat::zeros(lanes, FUTURE_STEPS);
    for t in 0..FUTURE_STEPS {
        let w: Vec<f64> = (0..lanes).map(|l| if mask[l] { r.random_range(0.0..1.0) } else { 0.0 }).collect();
        let s: f64 = w.iter().sum();
        for l in 0..lanes {
            p.set(l, t, w[l] / s);
        }
    }
    LaneScoreField { p, lane_mask: mask }
}

#[test]
fn top_c_is_sorted_and_clamped() {
    let mut r = rng(3);
    for _ in 0..50 {
        let lanes = r.random_range(1..16);
        let field = random_field(&mut r, lanes);
        let feats = random_mat(&mut r, lanes, 4, 1.0);
        let valid = field.lane_mask.iter().filter(|&&m| m).count();
        let c = r.random_range(1..20);
        let set = select_top_c(&field, &feats, c).unwrap();
        assert_eq!(set.indices.len(), c.min(valid));
        assert!(set.scores.windows(2).all(|w| w[0] >= w[1]));
        let mean = field.mean_scores();
        let kth = *set.scores.last().unwrap();
        for l in (0..lanes).filter(|&l| field.lane_mask[l] && !set.indices.contains(&l)) {
            assert!(mean[l] <= kth);
        }
        for (i, &l) in set.indices.iter().enumerate() {
            assert!(field.lane_mask[l]);
            assert_eq!(set.features.row(i), feats.row(l));
        }
    }
    let field = random_field(&mut r, 3);
    assert!(select_top_c(&field, &Mat::zeros(3, 4), 0).is_err());
    assert!(select_top_c(&field, &Mat::zeros(2, 4), 1).is_err());
}

#[test]
fn top_c_ties_prefer_lower_index() {
    let field = LaneScoreField { p: Mat::filled(4, FUTURE_STEPS, 0.25), lane_mask: vec![true; 4] };
    let set = select_top_c(&field, &Mat::zeros(4, 2), 2).unwrap();
    assert_eq!(set.indices, vec![0, 1]);
}

#[test]
fn lane_loss_matches_brute_force() {
    let mut r = rng(4);
    for _ in 0..50 {
        let lanes = r.random_range(1..10);
        let field = random_field(&mut r, lanes);
        let valid: Vec<usize> = (0..lanes).filter(|&l| field.lane_mask[l]).collect();
        let labels: Vec<usize> = (0..FUTURE_STEPS).map(|_| valid[r.random_range(0..valid.len())]).collect();
        let mut expected = 0.0;
        for (t, &l) in labels.iter().enumerate() {
            expected -= field.p.get(l, t).max(PROB_CLAMP).min(1.0 - PROB_CLAMP).ln();
        }
        assert!((lane_loss(&field, &labels).unwrap() - expected).abs() < 1e-12);
    }
    // a certain prediction costs only the clamp
    let mut p = Mat::zeros(2, FUTURE_STEPS);
    (0..FUTURE_STEPS).for_each(|t| p.set(1, t, 1.0));
    let field = LaneScoreField { p, lane_mask: vec![true, true] };
    let loss = lane_loss(&field, &[1; FUTURE_STEPS]).unwrap();
    assert!((loss - FUTURE_STEPS as f64 * -(1.0 - PROB_CLAMP).ln()).abs() < 1e-15);
    assert!(lane_loss(&field, &[0; FUTURE_STEPS]).unwrap() > 150.0);

    let masked = LaneScoreField { lane_mask: vec![true, false], ..field };
    assert!(lane_loss(&masked, &[1; FUTURE_STEPS]).is_err());
    assert!(lane_loss(&masked, &[0; 3]).is_err());
}
