//! Prediction records and static SVG plots.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::decoder::TrajectoryMixture;
use crate::scene::{Point, SceneSample};
use crate::{Error, Result};

/// One line of `predict` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub scene_id: String,
    pub k_modes: usize,
    pub pi: Vec<f64>,
    pub trajectories: Vec<Vec<Point>>,
    pub scales: Vec<Vec<Point>>,
}

impl PredictionRecord {
    pub fn new(scene_id: &str, mixture: &TrajectoryMixture) -> Self {
        Self {
            scene_id: scene_id.to_string(),
            k_modes: mixture.k(),
            pi: mixture.pi.clone(),
            trajectories: (0..mixture.k()).map(|k| mixture.trajectory(k)).collect(),
            scales: (0..mixture.k()).map(|k| mixture.scales(k)).collect(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("prediction records serialize")
    }

    pub fn from_line(line: &str, index: usize) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::MalformedRecord { index, message: e.to_string() })
    }
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 30.0;

struct Frame {
    min: Point,
    scale: f64,
}

impl Frame {
    fn fit(points: &[Point]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if !lo[0].is_finite() {
            return Self { min: [0.0, 0.0], scale: 1.0 };
        }
        let span = ((hi[0] - lo[0]) / (WIDTH - 2.0 * MARGIN)).max((hi[1] - lo[1]) / (HEIGHT - 2.0 * MARGIN)).max(1e-9);
        Self { min: lo, scale: 1.0 / span }
    }

    fn map(&self, p: Point) -> (f64, f64) {
        (MARGIN + (p[0] - self.min[0]) * self.scale, HEIGHT - MARGIN - (p[1] - self.min[1]) * self.scale)
    }

    fn polyline(&self, pts: &[Point]) -> String {
        pts.iter()
            .map(|&p| {
                let (x, y) = self.map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Lanes gray, target history black, ground truth green, modes red with a
/// legend listing each mode's probability.
pub fn render_svg(sample: &SceneSample, mixture: &TrajectoryMixture) -> String {
    let lanes: Vec<(Point, Point)> =
        sample.lanes.iter().zip(&sample.lane_mask).filter(|(_, &m)| m).map(|(l, _)| (l.start, l.end)).collect();
    let history: Vec<Point> = sample.agents[0]
        .iter()
        .zip(&sample.agent_mask[0])
        .filter(|(_, &m)| m)
        .flat_map(|(v, _)| [v.start, v.end])
        .collect();
    let modes: Vec<Vec<Point>> = (0..mixture.k()).map(|k| mixture.trajectory(k)).collect();
    let mut all: Vec<Point> = lanes.iter().flat_map(|&(a, b)| [a, b]).collect();
    all.extend(&history);
    all.extend(&sample.gt_future);
    all.extend(modes.iter().flatten());
    let frame = Frame::fit(&all);

    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#).unwrap();
    writeln!(s, r#"<title>{}</title>"#, xml_escape(&sample.scene_id)).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<g stroke="gray" stroke-width="1.5">"#).unwrap();
    for (a, b) in &lanes {
        let ((x1, y1), (x2, y2)) = (frame.map(*a), frame.map(*b));
        writeln!(s, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#).unwrap();
    }
    writeln!(s, "</g>").unwrap();
    if !history.is_empty() {
        writeln!(s, r#"<polyline fill="none" stroke="black" stroke-width="2" points="{}"/>"#, frame.polyline(&history)).unwrap();
    }
    writeln!(s, r#"<polyline fill="none" stroke="green" stroke-width="2.5" points="{}"/>"#, frame.polyline(&sample.gt_future)).unwrap();
    for m in &modes {
        writeln!(s, r#"<polyline fill="none" stroke="red" stroke-width="1.5" points="{}"/>"#, frame.polyline(m)).unwrap();
    }
    writeln!(s, r#"<g font-family="monospace" font-size="12">"#).unwrap();
    writeln!(s, r#"<text x="10" y="16" fill="green">ground truth</text>"#).unwrap();
    for (k, p) in mixture.pi.iter().enumerate() {
        writeln!(s, r#"<text x="10" y="{}" fill="red">mode {k}: pi={p:.3}</text>"#, 32 + 16 * k).unwrap();
    }
    writeln!(s, "</g>").unwrap();
    writeln!(s, "</svg>").unwrap();
    s
}
