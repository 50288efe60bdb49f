//! Vectorized scene representation: agent trajectory vectors, lane vectors,
//! ground truth, and the per-timestep closest-lane labels.

mod geometry;
mod io;
mod synth;

use serde::{Deserialize, Serialize};

pub use geometry::{
    label_closest_lane, normalize_scene, point_segment_distance_sq, segment_lanes, vectorize_trajectory,
    NormalizeOptions, NormalizedScene, RawScene,
};
pub use io::{load_scenes, read_scene_file, save_scenes, SceneFile, SCHEMA_VERSION};
pub use synth::{generate_dataset, generate_synthetic_scene, synthesize, SyntheticScene, Template};

/// Observed positions per agent (2 s at 2 Hz).
pub const HISTORY_STEPS: usize = 4;
/// Predicted positions (6 s at 2 Hz).
pub const FUTURE_STEPS: usize = 12;
/// Trajectory vectors per agent.
pub const AGENT_VECTORS: usize = HISTORY_STEPS - 1;
pub const MAX_NEIGHBORS: usize = 8;
pub const MAX_AGENTS: usize = MAX_NEIGHBORS + 1;
pub const MAX_LANE_VECTORS: usize = 64;
/// Seconds between consecutive timesteps.
pub const STEP_SECONDS: f64 = 0.5;

/// Agent-type one-hot (4) followed by the timestamp index.
pub const AGENT_ATTR_DIM: usize = 5;
/// Lane-type one-hot.
pub const LANE_ATTR_DIM: usize = 3;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentType {
    Vehicle,
    Pedestrian,
    Cyclist,
    Other,
}

impl AgentType {
    pub fn one_hot(self) -> [f64; 4] {
        let mut v = [0.0; 4];
        v[self as usize] = 1.0;
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneType {
    Straight,
    LeftTurn,
    RightTurn,
}

impl LaneType {
    pub fn one_hot(self) -> [f64; LANE_ATTR_DIM] {
        let mut v = [0.0; LANE_ATTR_DIM];
        v[self as usize] = 1.0;
        v
    }
}

/// Displacement between two consecutive observed positions of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryVector {
    pub start: Point,
    pub end: Point,
    pub attrs: Vec<f64>,
}

impl TrajectoryVector {
    pub fn padding() -> Self {
        Self { start: [0.0; 2], end: [0.0; 2], attrs: vec![0.0; AGENT_ATTR_DIM] }
    }

    /// Timestamp index of the vector's end point, in `[-(HISTORY_STEPS-1), 0]`.
    pub fn timestamp(&self) -> f64 {
        self.attrs.get(4).copied().unwrap_or(0.0)
    }
}

/// One segment of a lane centerline polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneVector {
    pub start: Point,
    pub end: Point,
    pub predecessor: Point,
    pub attrs: Vec<f64>,
}

impl LaneVector {
    pub fn padding() -> Self {
        Self { start: [0.0; 2], end: [0.0; 2], predecessor: [0.0; 2], attrs: vec![0.0; LANE_ATTR_DIM] }
    }
}

/// One prediction instance in the target-centered frame, padded to
/// [`MAX_AGENTS`] agents and [`MAX_LANE_VECTORS`] lanes.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub scene_id: String,
    pub seed: u64,
    /// Index 0 is the target; each agent has [`AGENT_VECTORS`] vectors, oldest first.
    pub agents: Vec<Vec<TrajectoryVector>>,
    /// Validity per agent and per vector.
    pub agent_mask: Vec<Vec<bool>>,
    pub lanes: Vec<LaneVector>,
    pub lane_mask: Vec<bool>,
    pub gt_future: Vec<Point>,
    /// One one-hot row over lanes per future step.
    pub lane_labels: Vec<Vec<u8>>,
}

fn finite(p: &Point) -> bool {
    p[0].is_finite() && p[1].is_finite()
}

impl SceneSample {
    pub fn agent_valid(&self, i: usize) -> bool {
        self.agent_mask[i].iter().any(|&m| m)
    }

    pub fn valid_agents(&self) -> Vec<usize> {
        (0..self.agents.len()).filter(|&i| self.agent_valid(i)).collect()
    }

    pub fn valid_lanes(&self) -> Vec<usize> {
        (0..self.lanes.len()).filter(|&l| self.lane_mask[l]).collect()
    }

    /// Label lane index per future step.
    pub fn label_indices(&self) -> Vec<usize> {
        self.lane_labels.iter().map(|row| row.iter().position(|&v| v == 1).unwrap_or(0)).collect()
    }

    /// Target position at t = 0 (end of its newest valid vector).
    pub fn target_last_position(&self) -> Option<Point> {
        let mask = self.agent_mask.first()?;
        let idx = mask.iter().rposition(|&m| m)?;
        Some(self.agents[0][idx].end)
    }

    /// Checks every structural invariant of a sample.
    pub fn validate(&self) -> Result<(), String> {
        if self.agents.len() != MAX_AGENTS || self.agent_mask.len() != MAX_AGENTS {
            return Err(format!("expected {MAX_AGENTS} agent slots, found {}", self.agents.len()));
        }
        for (i, (vs, ms)) in self.agents.iter().zip(&self.agent_mask).enumerate() {
            if vs.len() != AGENT_VECTORS || ms.len() != AGENT_VECTORS {
                return Err(format!("agent {i}: expected {AGENT_VECTORS} vectors"));
            }
            for (v, &m) in vs.iter().zip(ms) {
                if v.attrs.len() != AGENT_ATTR_DIM {
                    return Err(format!("agent {i}: attrs must have {AGENT_ATTR_DIM} entries"));
                }
                if !finite(&v.start) || !finite(&v.end) || v.attrs.iter().any(|a| !a.is_finite()) {
                    return Err(format!("agent {i}: non-finite vector"));
                }
                let ts = v.timestamp();
                if m && !(-(AGENT_VECTORS as f64)..=0.0).contains(&ts) {
                    return Err(format!("agent {i}: timestamp {ts} out of range"));
                }
            }
        }
        if !self.agent_valid(0) {
            return Err("target agent has no valid history".into());
        }
        if self.lanes.len() != MAX_LANE_VECTORS || self.lane_mask.len() != MAX_LANE_VECTORS {
            return Err(format!("expected {MAX_LANE_VECTORS} lane slots, found {}", self.lanes.len()));
        }
        for (l, (lane, &m)) in self.lanes.iter().zip(&self.lane_mask).enumerate() {
            if lane.attrs.len() != LANE_ATTR_DIM {
                return Err(format!("lane {l}: attrs must have {LANE_ATTR_DIM} entries"));
            }
            if !finite(&lane.start) || !finite(&lane.end) || !finite(&lane.predecessor) {
                return Err(format!("lane {l}: non-finite coordinates"));
            }
            if m && lane.start == lane.end {
                return Err(format!("lane {l}: zero-length segment"));
            }
        }
        if !self.lane_mask.iter().any(|&m| m) {
            return Err("no valid lanes".into());
        }
        if self.gt_future.len() != FUTURE_STEPS || !self.gt_future.iter().all(finite) {
            return Err(format!("gt_future must hold {FUTURE_STEPS} finite points"));
        }
        if self.lane_labels.len() != FUTURE_STEPS {
            return Err(format!("lane_labels must have {FUTURE_STEPS} rows"));
        }
        for (t, row) in self.lane_labels.iter().enumerate() {
            if row.len() != MAX_LANE_VECTORS {
                return Err(format!("lane_labels row {t}: expected {MAX_LANE_VECTORS} columns"));
            }
            let ones: Vec<usize> = row.iter().enumerate().filter(|(_, &v)| v != 0).map(|(l, _)| l).collect();
            if ones.len() != 1 || row[ones[0]] != 1 || !self.lane_mask[ones[0]] {
                return Err(format!("lane_labels row {t}: must be one-hot over valid lanes"));
            }
        }
        Ok(())
    }
}
