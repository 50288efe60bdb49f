//! Line-delimited JSON scene files: one [`SceneSample`] per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LaneVector, Point, SceneSample, TrajectoryVector};
use crate::{Error, Result};

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Serialize)]
struct RecordRef<'a> {
    schema_version: &'a str,
    scene_id: &'a str,
    seed: u64,
    agents: &'a [Vec<TrajectoryVector>],
    agent_mask: &'a [Vec<bool>],
    lanes: &'a [LaneVector],
    lane_mask: &'a [bool],
    gt_future: &'a [Point],
    lane_labels: &'a [Vec<u8>],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    schema_version: String,
    scene_id: String,
    seed: u64,
    agents: Vec<Vec<TrajectoryVector>>,
    agent_mask: Vec<Vec<bool>>,
    lanes: Vec<LaneVector>,
    lane_mask: Vec<bool>,
    gt_future: Vec<Point>,
    lane_labels: Vec<Vec<u8>>,
}

/// Contents of a scene file.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub schema_version: String,
    pub samples: Vec<SceneSample>,
}

pub(crate) fn to_line(sample: &SceneSample) -> String {
    let rec = RecordRef {
        schema_version: SCHEMA_VERSION,
        scene_id: &sample.scene_id,
        seed: sample.seed,
        agents: &sample.agents,
        agent_mask: &sample.agent_mask,
        lanes: &sample.lanes,
        lane_mask: &sample.lane_mask,
        gt_future: &sample.gt_future,
        lane_labels: &sample.lane_labels,
    };
    serde_json::to_string(&rec).expect("scene records always serialize")
}

pub(crate) fn from_line(line: &str, index: usize) -> Result<SceneSample> {
    let rec: Record = serde_json::from_str(line).map_err(|e| Error::MalformedRecord { index, message: e.to_string() })?;
    if rec.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion { found: rec.schema_version, expected: SCHEMA_VERSION.into() });
    }
    let sample = SceneSample {
        scene_id: rec.scene_id,
        seed: rec.seed,
        agents: rec.agents,
        agent_mask: rec.agent_mask,
        lanes: rec.lanes,
        lane_mask: rec.lane_mask,
        gt_future: rec.gt_future,
        lane_labels: rec.lane_labels,
    };
    sample.validate().map_err(|message| Error::MalformedRecord { index, message })?;
    Ok(sample)
}

pub fn save_scenes(samples: &[SceneSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        writeln!(w, "{}", to_line(s)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a scene file; errors name the zero-based record index.
pub fn read_scene_file(path: impl AsRef<Path>) -> Result<SceneFile> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    let mut index = 0;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(from_line(&line, index)?);
        index += 1;
    }
    Ok(SceneFile { schema_version: SCHEMA_VERSION.into(), samples })
}

pub fn load_scenes(path: impl AsRef<Path>) -> Result<Vec<SceneSample>> {
    read_scene_file(path).map(|f| f.samples)
}
