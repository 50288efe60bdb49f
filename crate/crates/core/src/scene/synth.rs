//! Deterministic synthetic driving scenes built from lane-centerline
//! templates. The target moves along one lane route by arc length, so with
//! zero noise its ground-truth future lies exactly on that route.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::geometry::{label_closest_lane, normalize_scene, segment_lanes, vectorize_trajectory, NormalizeOptions, RawScene};
use super::{
    AgentType, LaneType, LaneVector, Point, SceneSample, TrajectoryVector, AGENT_VECTORS, FUTURE_STEPS, HISTORY_STEPS,
    MAX_AGENTS, MAX_LANE_VECTORS, STEP_SECONDS,
};
use crate::{Error, Result};

const LANE_WIDTH: f64 = 3.5;
/// Per-axis bound on positional noise, keeping noisy positions within
/// 0.5 m of the centerline.
const NOISE_CLAMP: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    Straight,
    LeftTurn,
    RightTurn,
    Intersection,
}

impl Template {
    pub const ALL: [Template; 4] = [Template::Straight, Template::LeftTurn, Template::RightTurn, Template::Intersection];

    pub fn name(self) -> &'static str {
        match self {
            Template::Straight => "straight",
            Template::LeftTurn => "left_turn",
            Template::RightTurn => "right_turn",
            Template::Intersection => "intersection",
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Template::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown template {s:?} (expected straight, left_turn, right_turn or intersection)")))
    }
}

/// A generated sample plus the route the target follows (normalized frame).
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub sample: SceneSample,
    pub route: Vec<Point>,
    pub template: Template,
}

/// Polyline with cumulative arc length, extrapolated linearly past both ends.
struct Route {
    points: Vec<Point>,
    cum: Vec<f64>,
}

impl Route {
    fn new(points: Vec<Point>) -> Self {
        let mut cum = vec![0.0];
        for w in points.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            cum.push(cum.last().unwrap() + d);
        }
        Self { points, cum }
    }

    fn at(&self, s: f64) -> Point {
        let n = self.points.len();
        let seg = match self.cum.iter().position(|&c| c > s) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => n - 2,
        };
        let (a, b) = (self.points[seg], self.points[seg + 1]);
        let t = (s - self.cum[seg]) / (self.cum[seg + 1] - self.cum[seg]);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }
}

fn straight(from: Point, heading: f64, length: f64, step: f64) -> Vec<Point> {
    let n = (length / step).ceil().max(1.0) as usize;
    let (s, c) = heading.sin_cos();
    (0..=n).map(|k| {
        let d = length * k as f64 / n as f64;
        [from[0] + c * d, from[1] + s * d]
    }).collect()
}

/// Circular arc starting at `from` with initial heading, turning by `sweep`
/// radians (positive = left).
fn arc(from: Point, heading: f64, radius: f64, sweep: f64, step: f64) -> Vec<Point> {
    let n = ((radius * sweep.abs()) / step).ceil().max(2.0) as usize;
    let side = sweep.signum();
    let center = [from[0] - side * radius * heading.sin(), from[1] + side * radius * heading.cos()];
    let start_angle = heading - side * FRAC_PI_2;
    (0..=n)
        .map(|k| {
            let a = start_angle + sweep * k as f64 / n as f64;
            [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect()
}

fn join(mut a: Vec<Point>, b: Vec<Point>) -> Vec<Point> {
    a.extend(b.into_iter().skip(1));
    a
}

fn end_heading(p: &[Point]) -> f64 {
    let (a, b) = (p[p.len() - 2], p[p.len() - 1]);
    (b[1] - a[1]).atan2(b[0] - a[0])
}

/// Turning route: straight approach of `approach` meters then an arc and a
/// straight exit.
fn turn_route(start: Point, approach: f64, radius: f64, sweep: f64, exit: f64) -> Vec<Point> {
    let a = straight(start, 0.0, approach, 10.0);
    let b = arc(*a.last().unwrap(), 0.0, radius, sweep, 5.0);
    let h = end_heading(&b);
    let c = straight(*b.last().unwrap(), h, exit, 10.0);
    join(join(a, b), c)
}

struct Layout {
    lanes: Vec<(Vec<Point>, LaneType)>,
    /// Route followed by the target, in the local frame.
    route: Vec<Point>,
}

const LANE_START: f64 = -30.0;

fn layout(template: Template, rng: &mut ChaCha8Rng) -> Layout {
    match template {
        Template::Straight => {
            let n = rng.random_range(2..=3usize);
            let own = rng.random_range(0..n);
            let lanes: Vec<(Vec<Point>, LaneType)> = (0..n)
                .map(|i| (straight([LANE_START, (i as f64 - own as f64) * LANE_WIDTH], 0.0, 120.0, 10.0), LaneType::Straight))
                .collect();
            let route = lanes[own].0.clone();
            Layout { lanes, route }
        }
        Template::LeftTurn | Template::RightTurn => {
            let side = if template == Template::LeftTurn { 1.0 } else { -1.0 };
            let turn_at = rng.random_range(5.0..25.0);
            let radius = rng.random_range(12.0..20.0);
            let own = turn_route([LANE_START, 0.0], turn_at - LANE_START, radius, side * FRAC_PI_2, 60.0);
            let kind = if side > 0.0 { LaneType::LeftTurn } else { LaneType::RightTurn };
            let mut lanes = vec![(own.clone(), kind)];
            let others = rng.random_range(1..=2usize);
            for k in 1..=others {
                lanes.push((straight([LANE_START, -side * k as f64 * LANE_WIDTH], 0.0, 120.0, 10.0), LaneType::Straight));
            }
            Layout { lanes, route: own }
        }
        Template::Intersection => {
            let stop = rng.random_range(5.0..20.0);
            let approach = straight([LANE_START, 0.0], 0.0, stop - LANE_START, 10.0);
            let entry = *approach.last().unwrap();
            let through = straight(entry, 0.0, 90.0, 10.0);
            let left_r = rng.random_range(10.0..14.0);
            let right_r = rng.random_range(6.0..9.0);
            let left = join(arc(entry, 0.0, left_r, FRAC_PI_2, 5.0), straight([entry[0] + left_r, left_r], FRAC_PI_2, 80.0, 10.0));
            let right = join(arc(entry, 0.0, right_r, -FRAC_PI_2, 5.0), straight([entry[0] + right_r, -right_r], -FRAC_PI_2, 80.0, 10.0));
            let cross_x = entry[0] + 16.0;
            let cross_up = straight([cross_x, -40.0], FRAC_PI_2, 80.0, 10.0);
            let cross_down = straight([cross_x + LANE_WIDTH, 40.0], -FRAC_PI_2, 80.0, 10.0);
            let choice = rng.random_range(0..3usize);
            let branch = [through.clone(), left.clone(), right.clone()][choice].clone();
            let route = join(approach.clone(), branch);
            let lanes = vec![
                (approach, LaneType::Straight),
                (through, LaneType::Straight),
                (left, LaneType::LeftTurn),
                (right, LaneType::RightTurn),
                (cross_up, LaneType::Straight),
                (cross_down, LaneType::Straight),
            ];
            Layout { lanes, route }
        }
    }
}

fn template_index(t: Template) -> u64 {
    Template::ALL.iter().position(|&x| x == t).unwrap() as u64
}

/// Same as [`generate_synthetic_scene`] but also returns the followed route.
pub fn synthesize(template: Template, noise_scale: f64, seed: u64) -> Result<SyntheticScene> {
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::InvalidInput(format!("noise_scale must be finite and >= 0, got {noise_scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ template_index(template));
    let lay = layout(template, &mut rng);
    let route = Route::new(lay.route.clone());

    // Target kinematics: arc length s(t) = s0 + v t + a t^2 / 2, s(0) at x = 0.
    let s0 = -LANE_START;
    let speed = rng.random_range(6.0..12.0);
    let accel = rng.random_range(-0.5..0.5);
    let s_at = |t: f64| s0 + speed * t + 0.5 * accel * t * t;
    let hist_t: Vec<f64> = (0..HISTORY_STEPS).map(|k| (k as f64 - (HISTORY_STEPS - 1) as f64) * STEP_SECONDS).collect();
    let fut_t: Vec<f64> = (1..=FUTURE_STEPS).map(|k| k as f64 * STEP_SECONDS).collect();

    let noise = Normal::new(0.0, noise_scale.max(f64::MIN_POSITIVE)).expect("valid normal");
    let jitter = |p: Point, rng: &mut ChaCha8Rng| -> Point {
        if noise_scale == 0.0 {
            return p;
        }
        [
            p[0] + noise.sample(rng).clamp(-NOISE_CLAMP, NOISE_CLAMP),
            p[1] + noise.sample(rng).clamp(-NOISE_CLAMP, NOISE_CLAMP),
        ]
    };

    let target_hist: Vec<Point> = hist_t.iter().map(|&t| route.at(s_at(t))).collect();
    let target_future: Vec<Point> = fut_t.iter().map(|&t| route.at(s_at(t))).collect();

    // Neighbors ride other lanes (or the target's, keeping a gap).
    let n_neighbors = rng.random_range(0..=4usize);
    let mut agents = vec![target_hist.iter().map(|&p| jitter(p, &mut rng)).collect::<Vec<_>>()];
    let mut kinds = vec![AgentType::Vehicle];
    for _ in 0..n_neighbors {
        let lane_idx = rng.random_range(0..lay.lanes.len());
        let lane = Route::new(lay.lanes[lane_idx].0.clone());
        let mut offset = rng.random_range(5.0..60.0);
        if rng.random_bool(0.5) {
            offset = -offset;
        }
        let v = rng.random_range(3.0..13.0);
        let start = (s0 + offset).max(0.0);
        let kind = if rng.random_bool(0.2) { AgentType::Cyclist } else { AgentType::Vehicle };
        let hist: Vec<Point> = hist_t.iter().map(|&t| jitter(lane.at(start + v * t), &mut rng)).collect();
        agents.push(hist);
        kinds.push(kind);
    }
    let future: Vec<Point> = target_future.iter().map(|&p| jitter(p, &mut rng)).collect();

    let world = [rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)];
    let shift = |p: &Point| [p[0] + world[0], p[1] + world[1]];
    let raw = RawScene {
        agents: agents.iter().map(|a| a.iter().map(shift).collect()).collect(),
        lanes: lay.lanes.iter().map(|(l, _)| l.iter().map(shift).collect()).collect(),
        target_future: future.iter().map(shift).collect(),
    };
    let norm = normalize_scene(&raw, 0, NormalizeOptions::default())?;
    let route_norm: Vec<Point> = lay.route.iter().map(|p| [p[0] + world[0] - norm.origin[0], p[1] + world[1] - norm.origin[1]]).collect();

    let polylines: Vec<(Vec<Point>, LaneType)> = norm.lanes.iter().cloned().zip(lay.lanes.iter().map(|(_, k)| *k)).collect();
    let mut lanes = segment_lanes(&polylines, MAX_LANE_VECTORS)?;
    let n_lanes = lanes.len();
    lanes.resize(MAX_LANE_VECTORS, LaneVector::padding());
    let lane_mask: Vec<bool> = (0..MAX_LANE_VECTORS).map(|l| l < n_lanes).collect();
    let lane_labels = label_closest_lane(&lanes, &lane_mask, &norm.target_future)?;

    let mut agent_vectors = Vec::with_capacity(MAX_AGENTS);
    let mut agent_mask = Vec::with_capacity(MAX_AGENTS);
    for (pos, kind) in norm.agents.iter().zip(&kinds) {
        agent_vectors.push(vectorize_trajectory(pos, *kind)?);
        agent_mask.push(vec![true; AGENT_VECTORS]);
    }
    while agent_vectors.len() < MAX_AGENTS {
        agent_vectors.push(vec![TrajectoryVector::padding(); AGENT_VECTORS]);
        agent_mask.push(vec![false; AGENT_VECTORS]);
    }

    let sample = SceneSample {
        scene_id: format!("{}-{seed:08}", template.name()),
        seed,
        agents: agent_vectors,
        agent_mask,
        lanes,
        lane_mask,
        gt_future: norm.target_future,
        lane_labels,
    };
    debug_assert!(sample.validate().is_ok(), "{:?}", sample.validate());
    Ok(SyntheticScene { sample, route: route_norm, template })
}

/// Deterministic in `(template, noise_scale, seed)`.
pub fn generate_synthetic_scene(template: Template, noise_scale: f64, seed: u64) -> Result<SceneSample> {
    synthesize(template, noise_scale, seed).map(|s| s.sample)
}

/// `count` scenes cycling through `templates`, scene `i` seeded with `seed + i`.
pub fn generate_dataset(templates: &[Template], count: usize, noise_scale: f64, seed: u64) -> Result<Vec<SceneSample>> {
    if templates.is_empty() {
        return Err(Error::InvalidInput("no templates given".into()));
    }
    (0..count)
        .map(|i| generate_synthetic_scene(templates[i % templates.len()], noise_scale, seed.wrapping_add(i as u64)))
        .collect()
}
