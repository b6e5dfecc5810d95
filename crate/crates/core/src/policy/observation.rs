use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::{HighLevelAction, VehicleState};

/// Per-frame vehicle features: v_x, v_y, dv_x, dv_y, yaw, yaw rate, slip,
/// base action (2), previous applied action (2).
pub const VEHICLE_FEATURES: usize = 11;

pub const FRAME_STACK: usize = 3;

/// Fixed layout of the flat observation vector:
/// `[lidar | relative waypoints (x, y interleaved) | vehicle frames, oldest first]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsLayout {
    pub lidar: usize,
    pub waypoints: usize,
    pub vehicle_features: usize,
    pub frames: usize,
}

impl Default for ObsLayout {
    fn default() -> Self {
        Self {
            lidar: crate::lidar::N_BEAMS,
            waypoints: crate::track::N_WAYPOINTS_AHEAD,
            vehicle_features: VEHICLE_FEATURES,
            frames: FRAME_STACK,
        }
    }
}

impl ObsLayout {
    pub fn dim(&self) -> usize {
        self.lidar + self.aux_dim()
    }

    /// Everything after the lidar block.
    pub fn aux_dim(&self) -> usize {
        2 * self.waypoints + self.vehicle_features * self.frames
    }

    /// Stable textual descriptor; stored in checkpoints and compared on load.
    pub fn descriptor(&self) -> String {
        format!(
            "lidar[{}];waypoints_xy[{}x2];vehicle[{}x{}:v_x,v_y,dv_x,dv_y,yaw,yaw_rate,slip,base_steer,base_speed,prev_steer,prev_speed]",
            self.lidar, self.waypoints, self.frames, self.vehicle_features
        )
    }
}

/// Vehicle feature frame at one step.
pub fn vehicle_features(
    state: &VehicleState,
    accel: [f64; 2],
    base: &HighLevelAction,
    prev_applied: &HighLevelAction,
) -> [f64; VEHICLE_FEATURES] {
    [
        state.v_long(),
        state.v_lat(),
        accel[0],
        accel[1],
        state.yaw,
        state.yaw_rate,
        state.slip,
        base.steer,
        base.speed,
        prev_applied.steer,
        prev_applied.speed,
    ]
}

/// Last `frames` vehicle frames. Empty at episode start; the first frame
/// pushed is repeated to fill the stack.
#[derive(Debug, Clone, Default)]
pub struct FrameHistory {
    frames: VecDeque<[f64; VEHICLE_FEATURES]>,
}

impl FrameHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    fn push(&mut self, frame: [f64; VEHICLE_FEATURES], stack: usize) {
        if self.frames.is_empty() {
            self.frames.extend(std::iter::repeat(frame).take(stack));
        } else {
            self.frames.push_back(frame);
            while self.frames.len() > stack {
                self.frames.pop_front();
            }
        }
    }
}

/// Assembles the observation and pushes the current vehicle frame into `history`.
pub fn build_observation(
    layout: &ObsLayout,
    scan: &[f64],
    rel_waypoints: &[[f64; 2]],
    frame: [f64; VEHICLE_FEATURES],
    history: &mut FrameHistory,
) -> Result<Vec<f64>> {
    if scan.len() != layout.lidar {
        return Err(Error::Shape {
            expected: layout.lidar,
            got: scan.len(),
        });
    }
    if rel_waypoints.len() != layout.waypoints {
        return Err(Error::Shape {
            expected: layout.waypoints,
            got: rel_waypoints.len(),
        });
    }
    let finite = scan.iter().all(|v| v.is_finite())
        && rel_waypoints.iter().flatten().all(|v| v.is_finite())
        && frame.iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::NonFinite("observation"));
    }
    history.push(frame, layout.frames);
    let mut obs = Vec::with_capacity(layout.dim());
    obs.extend_from_slice(scan);
    obs.extend(rel_waypoints.iter().flatten());
    for f in &history.frames {
        obs.extend_from_slice(f);
    }
    debug_assert_eq!(obs.len(), layout.dim());
    Ok(obs)
}
