//! Planar lidar simulated by grid traversal (Amanatides-Woo) against the occupancy grid.

use serde::{Deserialize, Serialize};

use crate::track::OccupancyGrid;

pub const N_BEAMS: usize = 1080;
pub const FIELD_OF_VIEW: f64 = 270.0 * std::f64::consts::PI / 180.0;
pub const MAX_RANGE: f64 = 30.0;

/// Lower bound on reported ranges; a beam starting inside an occupied cell reports this.
pub const MIN_RANGE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarConfig {
    pub beams: usize,
    pub field_of_view: f64,
    pub max_range: f64,
    /// Mounting offset ahead of the center of gravity (m).
    pub forward_offset: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            beams: N_BEAMS,
            field_of_view: FIELD_OF_VIEW,
            max_range: MAX_RANGE,
            forward_offset: 0.0,
        }
    }
}

impl LidarConfig {
    pub fn angle_increment(&self) -> f64 {
        if self.beams > 1 {
            self.field_of_view / (self.beams - 1) as f64
        } else {
            0.0
        }
    }

    /// Beam angle relative to the heading; beams run from -fov/2 to +fov/2.
    pub fn beam_angle(&self, i: usize) -> f64 {
        -0.5 * self.field_of_view + i as f64 * self.angle_increment()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub ranges: Vec<f64>,
    pub angle_min: f64,
    pub angle_increment: f64,
    pub max_range: f64,
}

/// Scanner with precomputed beam directions.
#[derive(Debug, Clone)]
pub struct Lidar {
    config: LidarConfig,
    beam_dirs: Vec<(f64, f64)>,
}

impl Lidar {
    pub fn new(config: LidarConfig) -> Self {
        let beam_dirs = (0..config.beams)
            .map(|i| {
                let (s, c) = config.beam_angle(i).sin_cos();
                (c, s)
            })
            .collect();
        Self { config, beam_dirs }
    }

    pub fn config(&self) -> &LidarConfig {
        &self.config
    }

    /// Scans from pose `(x, y, yaw)` in world coordinates.
    pub fn scan(&self, grid: &OccupancyGrid, x: f64, y: f64, yaw: f64) -> LidarScan {
        let mut ranges = vec![0.0; self.config.beams];
        self.scan_into(grid, x, y, yaw, &mut ranges);
        LidarScan {
            ranges,
            angle_min: -0.5 * self.config.field_of_view,
            angle_increment: self.config.angle_increment(),
            max_range: self.config.max_range,
        }
    }

    pub fn scan_into(&self, grid: &OccupancyGrid, x: f64, y: f64, yaw: f64, out: &mut [f64]) {
        let (sw, cw) = yaw.sin_cos();
        let mx = x + self.config.forward_offset * cw;
        let my = y + self.config.forward_offset * sw;
        let (gx, gy) = grid.world_to_grid(mx, my);
        let (sy, cy) = grid.world_to_grid_angle(yaw).sin_cos();
        for (r, &(c, s)) in out.iter_mut().zip(&self.beam_dirs) {
            let dx = cy * c - sy * s;
            let dy = sy * c + cy * s;
            *r = cast_ray(grid, gx, gy, dx, dy, self.config.max_range);
        }
    }
}

impl Default for Lidar {
    fn default() -> Self {
        Self::new(LidarConfig::default())
    }
}

/// Convenience wrapper with the default sensor.
pub fn scan(grid: &OccupancyGrid, x: f64, y: f64, yaw: f64) -> LidarScan {
    Lidar::default().scan(grid, x, y, yaw)
}

/// Distance along the unit direction `(dx, dy)` from grid-frame point
/// `(gx, gy)` to the entering face of the first occupied cell, or
/// `max_range` when nothing is hit. Space outside the grid is free.
pub fn cast_ray(grid: &OccupancyGrid, gx: f64, gy: f64, dx: f64, dy: f64, max_range: f64) -> f64 {
    let r = grid.resolution();
    let (w, h) = (grid.width() as i64, grid.height() as i64);
    let (mut i, mut j) = grid.cell_of(gx, gy);
    if grid.is_occupied(i, j) == Some(true) {
        return MIN_RANGE;
    }
    let step_i: i64 = if dx > 0.0 { 1 } else if dx < 0.0 { -1 } else { 0 };
    let step_j: i64 = if dy > 0.0 { 1 } else if dy < 0.0 { -1 } else { 0 };
    let mut t_max_x = match step_i {
        1 => ((i + 1) as f64 * r - gx) / dx,
        -1 => (i as f64 * r - gx) / dx,
        _ => f64::INFINITY,
    };
    let mut t_max_y = match step_j {
        1 => ((j + 1) as f64 * r - gy) / dy,
        -1 => (j as f64 * r - gy) / dy,
        _ => f64::INFINITY,
    };
    let t_delta_x = if step_i != 0 { r / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if step_j != 0 { r / dy.abs() } else { f64::INFINITY };

    loop {
        let t;
        if t_max_x < t_max_y {
            i += step_i;
            t = t_max_x;
            t_max_x += t_delta_x;
        } else {
            j += step_j;
            t = t_max_y;
            t_max_y += t_delta_y;
        }
        if t >= max_range {
            return max_range;
        }
        match grid.is_occupied(i, j) {
            Some(true) => return t.max(MIN_RANGE),
            Some(false) => {}
            None => {
                let leaving = (i < 0 && step_i <= 0)
                    || (i >= w && step_i >= 0)
                    || (j < 0 && step_j <= 0)
                    || (j >= h && step_j >= 0);
                if leaving {
                    return max_range;
                }
            }
        }
    }
}
