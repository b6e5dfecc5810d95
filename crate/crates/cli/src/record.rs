//! Per-step trajectory records written as JSON lines.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use residual_racing::env::{RacingEnv, Step};
use residual_racing::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub time: f64,
    /// Lap counter including a leading partial lap.
    pub lap: usize,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub steer: f64,
    pub yaw_rate: f64,
    pub slip: f64,
    pub v_long: f64,
    pub v_lat: f64,
    /// Base action (steering, speed).
    pub a_b: [f64; 2],
    /// Scaled residual.
    pub a_r: [f64; 2],
    /// Applied action, `clip(a_b + a_r)`.
    pub a_rb: [f64; 2],
    pub reward: f64,
    pub collided: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lidar: Option<Vec<f64>>,
}

impl StepRecord {
    /// `lidar_stride` keeps every n-th beam; zero omits the scan.
    pub fn new(env: &RacingEnv, step: &Step, lidar_stride: usize) -> Self {
        let s = &step.state;
        Self {
            step: env.steps(),
            time: env.timer().elapsed(),
            lap: env.timer().laps_recorded(),
            x: s.x,
            y: s.y,
            yaw: s.yaw,
            v: s.v,
            steer: s.delta,
            yaw_rate: s.yaw_rate,
            slip: s.slip,
            v_long: s.v_long(),
            v_lat: s.v_lat(),
            a_b: step.base.to_array(),
            a_r: step.residual.to_array(),
            a_rb: step.applied.to_array(),
            reward: step.reward,
            collided: step.collided,
            lidar: (lidar_stride > 0).then(|| env.last_scan().iter().step_by(lidar_stride).copied().collect()),
        }
    }
}

pub struct RecordWriter {
    out: BufWriter<std::fs::File>,
    path: std::path::PathBuf,
}

impl RecordWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, rec: &StepRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        writeln!(self.out).map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_records(path: &Path) -> Result<Vec<StepRecord>> {
    if !path.exists() {
        return Err(Error::MissingAsset(path.to_path_buf()));
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
