//! Racetrack maps, racing lines, collision tests, randomized starts and lap timing.

mod grid;
mod line;
pub mod synth;
mod timer;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use grid::{load_map, load_map_file, save_map, MapMetadata, OccupancyGrid};
pub use line::{
    load_racing_line, load_racing_line_file, nearest_waypoint, waypoints_ahead,
    waypoints_ahead_from, ColumnMap, HeadingZero, RacingLine, Waypoint, WaypointTracker,
    N_WAYPOINTS_AHEAD, WAYPOINT_HORIZON,
};
pub use timer::{LapTimer, StartLine};

use crate::error::{Error, Result};
use crate::vehicle::{VehicleParams, VehicleState};

/// A map together with its racing line. Both are immutable once loaded and
/// shared between environments.
#[derive(Debug, Clone)]
pub struct Track {
    pub name: String,
    pub grid: Arc<OccupancyGrid>,
    pub line: Arc<RacingLine>,
}

/// Where to find a track's assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSpec {
    pub name: String,
    /// Map metadata YAML; the image path inside is relative to it.
    pub map: PathBuf,
    /// Racing-line CSV.
    pub line: PathBuf,
    #[serde(default)]
    pub columns: ColumnMap,
}

impl TrackSpec {
    /// Resolves relative asset paths against `base`.
    pub fn resolved(&self, base: &Path) -> TrackSpec {
        TrackSpec {
            map: base.join(&self.map),
            line: base.join(&self.line),
            ..self.clone()
        }
    }
}

impl Track {
    pub fn new(name: impl Into<String>, grid: OccupancyGrid, line: RacingLine) -> Self {
        Self {
            name: name.into(),
            grid: Arc::new(grid),
            line: Arc::new(line),
        }
    }

    pub fn load(spec: &TrackSpec, params: &VehicleParams) -> Result<Self> {
        let grid = load_map_file(&spec.map)?;
        let line = load_racing_line_file(&spec.line, &spec.columns, params.v_max)?;
        Ok(Self::new(spec.name.clone(), grid, line))
    }

    /// Writes `<name>_map.png`, `<name>_map.yaml` and `<name>_raceline.csv`.
    pub fn save(&self, dir: &Path) -> Result<TrackSpec> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let map = save_map(&self.grid, dir, &format!("{}_map", self.name))?;
        let line = dir.join(format!("{}_raceline.csv", self.name));
        std::fs::write(&line, self.line.to_csv()).map_err(|e| Error::io(&line, e))?;
        Ok(TrackSpec {
            name: self.name.clone(),
            map,
            line,
            columns: ColumnMap::default(),
        })
    }
}

/// True when the car's rectangular footprint overlaps an occupied cell or
/// leaves the grid. The footprint is `l x w`, centered midway between the axles.
pub fn collision_check(grid: &OccupancyGrid, state: &VehicleState, params: &VehicleParams) -> bool {
    let offset = 0.5 * (params.l_f - params.l_r);
    let (sin_w, cos_w) = state.yaw.sin_cos();
    let (cx, cy) = grid.world_to_grid(state.x + offset * cos_w, state.y + offset * sin_w);
    let yaw = grid.world_to_grid_angle(state.yaw);
    let (s, c) = yaw.sin_cos();
    let (half_l, half_w) = (0.5 * params.l, 0.5 * params.w);
    let ext_x = half_l * c.abs() + half_w * s.abs();
    let ext_y = half_l * s.abs() + half_w * c.abs();
    let r = grid.resolution();
    let (i0, j0) = grid.cell_of(cx - ext_x, cy - ext_y);
    let (i1, j1) = grid.cell_of(cx + ext_x, cy + ext_y);
    let half_cell = 0.5 * r;
    let cell_ext_rect = half_cell * (c.abs() + s.abs());
    for j in j0..=j1 {
        for i in i0..=i1 {
            if !grid.is_occupied(i, j).unwrap_or(true) {
                continue;
            }
            // Separating-axis test between the footprint and the cell square.
            let (qx, qy) = ((i as f64 + 0.5) * r, (j as f64 + 0.5) * r);
            let (dx, dy) = (qx - cx, qy - cy);
            if dx.abs() >= ext_x + half_cell || dy.abs() >= ext_y + half_cell {
                continue;
            }
            let along = dx * c + dy * s;
            let across = -dx * s + dy * c;
            if along.abs() >= half_l + cell_ext_rect || across.abs() >= half_w + cell_ext_rect {
                continue;
            }
            return true;
        }
    }
    false
}

/// Retries before [`random_start`] gives up.
pub const START_RETRIES: usize = 100;

/// Running start at a uniformly drawn waypoint: on the line, along its
/// heading, at its planned speed. Returns the state and the waypoint index.
pub fn random_start<R: Rng + ?Sized>(
    track: &Track,
    params: &VehicleParams,
    rng: &mut R,
) -> Result<(VehicleState, usize)> {
    let n = track.line.len();
    for _ in 0..START_RETRIES {
        let idx = rng.gen_range(0..n);
        let state = start_at(&track.line, idx);
        if !collision_check(&track.grid, &state, params) {
            return Ok((state, idx));
        }
    }
    Err(Error::NoFreeStart(START_RETRIES))
}

/// Running start at waypoint `idx`.
pub fn start_at(line: &RacingLine, idx: usize) -> VehicleState {
    let w = line.get(idx);
    VehicleState::at_pose(w.x, w.y, w.heading, w.speed)
}
