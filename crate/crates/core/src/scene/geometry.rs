use log::warn;

use super::{AgentType, LaneType, LaneVector, Point, TrajectoryVector, HISTORY_STEPS};
use crate::{Error, Result};

/// Scene in world coordinates before vectorization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawScene {
    /// Observed positions per agent, oldest first; the last entry is t = 0.
    pub agents: Vec<Vec<Point>>,
    pub lanes: Vec<Vec<Point>>,
    /// Future positions of the target, if known.
    pub target_future: Vec<Point>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NormalizeOptions {
    /// Also rotate so the target's latest heading points along +x.
    pub rotate_to_heading: bool,
}

/// [`RawScene`] translated into the target-centered frame, target first.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedScene {
    pub agents: Vec<Vec<Point>>,
    pub lanes: Vec<Vec<Point>>,
    pub target_future: Vec<Point>,
    /// World position of the new origin.
    pub origin: Point,
    /// Rotation applied after translation, radians (0 unless requested).
    pub rotation: f64,
}

/// Centers every coordinate on the target's most recent position and moves
/// the target to agent index 0.
pub fn normalize_scene(raw: &RawScene, target_index: usize, opts: NormalizeOptions) -> Result<NormalizedScene> {
    let target = raw
        .agents
        .get(target_index)
        .ok_or_else(|| Error::InvalidInput(format!("target index {target_index} out of range ({} agents)", raw.agents.len())))?;
    if target.len() < HISTORY_STEPS {
        return Err(Error::InvalidInput(format!(
            "target history has {} positions, need at least {HISTORY_STEPS}",
            target.len()
        )));
    }
    let origin = *target.last().expect("non-empty history");
    let rotation = if opts.rotate_to_heading {
        let prev = target[target.len() - 2];
        let (dx, dy) = (origin[0] - prev[0], origin[1] - prev[1]);
        if dx == 0.0 && dy == 0.0 {
            0.0
        } else {
            -dy.atan2(dx)
        }
    } else {
        0.0
    };
    let (sin, cos) = rotation.sin_cos();
    let map = |p: &Point| -> Point {
        let (x, y) = (p[0] - origin[0], p[1] - origin[1]);
        if rotation == 0.0 {
            [x, y]
        } else {
            [cos * x - sin * y, sin * x + cos * y]
        }
    };
    let mut order = vec![target_index];
    order.extend((0..raw.agents.len()).filter(|&i| i != target_index));
    Ok(NormalizedScene {
        agents: order.iter().map(|&i| raw.agents[i].iter().map(map).collect()).collect(),
        lanes: raw.lanes.iter().map(|l| l.iter().map(map).collect()).collect(),
        target_future: raw.target_future.iter().map(map).collect(),
        origin,
        rotation,
    })
}

/// Turns `n` chronologically ordered positions into `n - 1` displacement
/// vectors, oldest first. The timestamp of each vector is the index of its
/// end point relative to the newest position.
pub fn vectorize_trajectory(positions: &[Point], agent_type: AgentType) -> Result<Vec<TrajectoryVector>> {
    if positions.len() < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 positions, got {}", positions.len())));
    }
    let last = positions.len() - 1;
    Ok(positions
        .windows(2)
        .enumerate()
        .map(|(j, w)| {
            let mut attrs = agent_type.one_hot().to_vec();
            attrs.push(j as f64 + 1.0 - last as f64);
            TrajectoryVector { start: w[0], end: w[1], attrs }
        })
        .collect())
}

fn dist_sq(a: Point, b: Point) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

/// Splits lane polylines into segment vectors. Zero-length segments are
/// dropped. When more than `max_vectors` remain, the ones whose nearer
/// endpoint is farthest from the origin are discarded; survivors keep their
/// original order.
pub fn segment_lanes(polylines: &[(Vec<Point>, LaneType)], max_vectors: usize) -> Result<Vec<LaneVector>> {
    let mut out = Vec::new();
    for (i, (points, lane_type)) in polylines.iter().enumerate() {
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!("lane polyline {i} has {} points, need at least 2", points.len())));
        }
        if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::NonFinite(format!("lane polyline {i}")));
        }
        let mut prev_start: Option<Point> = None;
        for w in points.windows(2) {
            if w[0] == w[1] {
                warn!("lane polyline {i}: dropping zero-length segment at {:?}", w[0]);
                continue;
            }
            out.push(LaneVector {
                start: w[0],
                end: w[1],
                predecessor: prev_start.unwrap_or(w[0]),
                attrs: lane_type.one_hot().to_vec(),
            });
            prev_start = Some(w[0]);
        }
    }
    if out.len() > max_vectors {
        let mut ranked: Vec<(f64, usize)> = out
            .iter()
            .enumerate()
            .map(|(i, v)| (dist_sq(v.start, [0.0; 2]).min(dist_sq(v.end, [0.0; 2])), i))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut keep = vec![false; out.len()];
        for &(_, i) in &ranked[..max_vectors] {
            keep[i] = true;
        }
        out = out.into_iter().zip(keep).filter(|(_, k)| *k).map(|(v, _)| v).collect();
    }
    Ok(out)
}

/// Squared distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance_sq(p: Point, a: Point, b: Point) -> f64 {
    let (abx, aby) = (b[0] - a[0], b[1] - a[1]);
    let len_sq = abx * abx + aby * aby;
    if len_sq == 0.0 {
        return dist_sq(p, a);
    }
    let t = (((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / len_sq).clamp(0.0, 1.0);
    dist_sq(p, [a[0] + t * abx, a[1] + t * aby])
}

/// One-hot row per future position marking the nearest valid lane segment;
/// ties go to the lowest lane index.
pub fn label_closest_lane(lanes: &[LaneVector], lane_mask: &[bool], gt_future: &[Point]) -> Result<Vec<Vec<u8>>> {
    if lanes.len() != lane_mask.len() {
        return Err(Error::Shape(format!("{} lanes but {} mask entries", lanes.len(), lane_mask.len())));
    }
    if !lane_mask.iter().any(|&m| m) {
        return Err(Error::InvalidInput("no valid lanes to label against".into()));
    }
    Ok(gt_future
        .iter()
        .map(|&p| {
            let mut best = (f64::INFINITY, usize::MAX);
            for (l, lane) in lanes.iter().enumerate() {
                if !lane_mask[l] {
                    continue;
                }
                let d = point_segment_distance_sq(p, lane.start, lane.end);
                if d < best.0 {
                    best = (d, l);
                }
            }
            let mut row = vec![0u8; lanes.len()];
            row[best.1] = 1;
            row
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raw() -> RawScene {
        RawScene {
            agents: vec![
                vec![[9.0, 1.0], [10.0, 2.0], [11.0, 2.5], [7.0, 3.0]],
                vec![[2.0, 3.0], [3.0, 3.0], [4.0, 3.0], [5.0, 3.0]],
            ],
            lanes: vec![vec![[0.0, 3.0], [20.0, 3.0]]],
            target_future: vec![[6.0, 3.0], [7.0, 3.0]],
        }
    }

    #[test]
    fn target_last_position_becomes_origin() {
        let n = normalize_scene(&raw(), 1, NormalizeOptions::default()).unwrap();
        assert_eq!(*n.agents[0].last().unwrap(), [0.0, 0.0]);
        assert_eq!(n.origin, [5.0, 3.0]);
        // the former agent 0 (last at (7,3)) is now a neighbor at (2,0)
        assert_eq!(*n.agents[1].last().unwrap(), [2.0, 0.0]);
    }

    #[test]
    fn normalization_matches_subtraction_oracle() {
        let r = raw();
        let n = normalize_scene(&r, 1, NormalizeOptions::default()).unwrap();
        let o = r.agents[1][3];
        let sub = |p: &Point| [p[0] - o[0], p[1] - o[1]];
        assert_eq!(n.agents[0], r.agents[1].iter().map(sub).collect::<Vec<_>>());
        assert_eq!(n.agents[1], r.agents[0].iter().map(sub).collect::<Vec<_>>());
        assert_eq!(n.lanes[0], r.lanes[0].iter().map(sub).collect::<Vec<_>>());
        assert_eq!(n.target_future, r.target_future.iter().map(sub).collect::<Vec<_>>());
    }

    #[test]
    fn centered_scene_is_unchanged() {
        let mut r = raw();
        let o = r.agents[0][3];
        for a in &mut r.agents {
            for p in a.iter_mut() {
                p[0] -= o[0];
                p[1] -= o[1];
            }
        }
        let n = normalize_scene(&r, 0, NormalizeOptions::default()).unwrap();
        assert_eq!(n.agents, r.agents);
        assert_eq!(n.lanes, r.lanes);
    }

    #[test]
    fn short_target_history_is_rejected() {
        let mut r = raw();
        r.agents[1].truncate(2);
        let err = normalize_scene(&r, 1, NormalizeOptions::default()).unwrap_err();
        assert!(err.to_string().contains("target history"));
    }

    #[test]
    fn rotation_aligns_heading_with_x() {
        let r = RawScene { agents: vec![vec![[0.0, 0.0], [0.0, 1.0], [0.0, 2.0], [0.0, 3.0]]], lanes: vec![], target_future: vec![[0.0, 4.0]] };
        let n = normalize_scene(&r, 0, NormalizeOptions { rotate_to_heading: true }).unwrap();
        assert!((n.target_future[0][0] - 1.0).abs() < 1e-12 && n.target_future[0][1].abs() < 1e-12);
    }

    #[test]
    fn vectorize_counts_and_endpoints() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [2.0, 1.0], [3.0, 3.0]];
        let v = vectorize_trajectory(&pts, AgentType::Vehicle).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.iter().map(|x| x.timestamp()).collect::<Vec<_>>(), vec![-2.0, -1.0, 0.0]);
        let one = vectorize_trajectory(&pts[..2], AgentType::Vehicle).unwrap();
        assert_eq!((one[0].start, one[0].end), ([0.0, 0.0], [1.0, 0.0]));
        assert!(vectorize_trajectory(&pts[..1], AgentType::Vehicle).is_err());
    }

    #[test]
    fn vectorize_circle_matches_index_pairing() {
        let pts: Vec<Point> = (0..4).map(|k| {
            let a = k as f64 * std::f64::consts::FRAC_PI_2 * 0.5;
            [a.cos() * 5.0, a.sin() * 5.0]
        }).collect();
        let v = vectorize_trajectory(&pts, AgentType::Cyclist).unwrap();
        for (j, vec) in v.iter().enumerate() {
            assert_eq!(vec.start, pts[j]);
            assert_eq!(vec.end, pts[j + 1]);
            assert_eq!(&vec.attrs[..4], &AgentType::Cyclist.one_hot());
        }
    }

    #[test]
    fn segment_counts_and_predecessors() {
        let lanes = segment_lanes(&[(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], LaneType::Straight)], 64).unwrap();
        assert_eq!(lanes.len(), 2);
        assert_eq!(lanes[0].predecessor, lanes[0].start);
        assert_eq!(lanes[1].predecessor, lanes[0].start);
        let single = segment_lanes(&[(vec![[1.0, 1.0], [2.0, 1.0]], LaneType::LeftTurn)], 64).unwrap();
        assert_eq!(single[0].predecessor, single[0].start);
        assert_eq!(single[0].attrs, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn degenerate_segments_are_dropped() {
        let lanes = segment_lanes(&[(vec![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]], LaneType::Straight)], 64).unwrap();
        assert_eq!(lanes.len(), 1);
        assert!(segment_lanes(&[(vec![[0.0, 0.0]], LaneType::Straight)], 64).is_err());
    }

    #[test]
    fn truncation_keeps_nearest_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let polylines: Vec<(Vec<Point>, LaneType)> = (0..5)
            .map(|_| {
                let mut p = [rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0)];
                let pts = (0..10)
                    .map(|_| {
                        p = [p[0] + rng.random_range(1.0..5.0), p[1] + rng.random_range(-2.0..2.0)];
                        p
                    })
                    .collect();
                (pts, LaneType::Straight)
            })
            .collect();
        let all = segment_lanes(&polylines, usize::MAX).unwrap();
        assert_eq!(all.len(), 45);
        let kept = segment_lanes(&polylines, 32).unwrap();
        assert_eq!(kept.len(), 32);
        // oracle: sort every segment by its nearer endpoint distance
        let norm = |p: Point| (p[0] * p[0] + p[1] * p[1]).sqrt();
        let mut order: Vec<(f64, usize)> = all.iter().enumerate().map(|(i, v)| (norm(v.start).min(norm(v.end)), i)).collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut expect: Vec<usize> = order[..32].iter().map(|x| x.1).collect();
        expect.sort_unstable();
        let expected: Vec<LaneVector> = expect.iter().map(|&i| all[i].clone()).collect();
        assert_eq!(kept, expected);
    }

    fn lane(a: Point, b: Point) -> LaneVector {
        LaneVector { start: a, end: b, predecessor: a, attrs: LaneType::Straight.one_hot().to_vec() }
    }

    #[test]
    fn label_zero_distance_and_ties() {
        let lanes: Vec<LaneVector> = (0..5).map(|i| lane([i as f64 * 10.0, 0.0], [i as f64 * 10.0 + 5.0, 0.0])).collect();
        let mask = vec![true; 5];
        let rows = label_closest_lane(&lanes, &mask, &[[30.0, 0.0]]).unwrap();
        assert_eq!(rows[0], vec![0, 0, 0, 1, 0]);
        // (7.5, 0) is 2.5 m from lane 0 and lane 1
        let tie = label_closest_lane(&lanes, &mask, &[[7.5, 0.0]]).unwrap();
        assert_eq!(tie[0], vec![1, 0, 0, 0, 0]);
        let mut masked = mask.clone();
        masked[0] = false;
        assert_eq!(label_closest_lane(&lanes, &masked, &[[7.5, 0.0]]).unwrap()[0], vec![0, 1, 0, 0, 0]);
        assert!(label_closest_lane(&lanes, &[false; 5], &[[0.0, 0.0]]).is_err());
    }

    #[test]
    fn label_matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lanes: Vec<LaneVector> = (0..8)
            .map(|_| {
                let a = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
                lane(a, [a[0] + rng.random_range(1.0..6.0), a[1] + rng.random_range(-3.0..3.0)])
            })
            .collect();
        let gt: Vec<Point> = (0..12).map(|_| [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)]).collect();
        let rows = label_closest_lane(&lanes, &[true; 8], &gt).unwrap();
        for (p, row) in gt.iter().zip(&rows) {
            // dense sampling along each segment as an independent distance estimate
            let dists: Vec<f64> = lanes
                .iter()
                .map(|l| {
                    (0..=20000)
                        .map(|k| {
                            let t = k as f64 / 20000.0;
                            let q = [l.start[0] + t * (l.end[0] - l.start[0]), l.start[1] + t * (l.end[1] - l.start[1])];
                            ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let best = (0..8).min_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap()).unwrap();
            assert_eq!(row.iter().position(|&v| v == 1).unwrap(), best);
            assert_eq!(row.iter().map(|&v| v as usize).sum::<usize>(), 1);
        }
    }
}
