use serde::{Deserialize, Serialize};

use super::line::RacingLine;
use crate::vehicle::VehicleState;

/// Start/finish line: the plane through waypoint 0 normal to its heading,
/// limited to `half_width` on either side of the waypoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartLine {
    pub point: [f64; 2],
    pub normal: [f64; 2],
    pub half_width: f64,
}

impl StartLine {
    pub const DEFAULT_HALF_WIDTH: f64 = 3.0;

    pub fn from_line(line: &RacingLine) -> Self {
        let w = line.get(0);
        let (s, c) = w.heading.sin_cos();
        Self {
            point: [w.x, w.y],
            normal: [c, s],
            half_width: Self::DEFAULT_HALF_WIDTH,
        }
    }

    fn signed_distance(&self, x: f64, y: f64) -> f64 {
        (x - self.point[0]) * self.normal[0] + (y - self.point[1]) * self.normal[1]
    }

    fn lateral(&self, x: f64, y: f64) -> f64 {
        -(x - self.point[0]) * self.normal[1] + (y - self.point[1]) * self.normal[0]
    }

    /// +1 for a forward crossing between the two points, -1 for a backward
    /// one, 0 otherwise.
    pub fn crossing(&self, from: (f64, f64), to: (f64, f64)) -> i32 {
        let d0 = self.signed_distance(from.0, from.1);
        let d1 = self.signed_distance(to.0, to.1);
        let direction = if d0 < 0.0 && d1 >= 0.0 {
            1
        } else if d0 >= 0.0 && d1 < 0.0 {
            -1
        } else {
            return 0;
        };
        let t = d0 / (d0 - d1);
        let px = from.0 + t * (to.0 - from.0);
        let py = from.1 + t * (to.1 - from.1);
        if self.lateral(px, py).abs() <= self.half_width {
            direction
        } else {
            0
        }
    }
}

/// Lap counting and timing for one episode. Time is kept in integer control
/// ticks so recorded laps plus the running partial add up exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapTimer {
    start_line: StartLine,
    dt: f64,
    ticks: u64,
    lap_start_tick: u64,
    lap_ticks: Vec<u64>,
    /// Backward crossings not yet cancelled by a forward crossing.
    backward_debt: u32,
    first_lap_partial: bool,
}

impl LapTimer {
    /// `first_lap_partial` marks that the episode did not start on the start
    /// line, so the first recorded lap is not a full lap.
    pub fn new(start_line: StartLine, dt: f64, first_lap_partial: bool) -> Self {
        Self {
            start_line,
            dt,
            ticks: 0,
            lap_start_tick: 0,
            lap_ticks: Vec::new(),
            backward_debt: 0,
            first_lap_partial,
        }
    }

    /// Advances the clock by one tick and checks the start line between the
    /// two states. Returns the lap time when a lap was completed.
    pub fn update(&mut self, prev: &VehicleState, next: &VehicleState) -> Option<f64> {
        self.ticks += 1;
        match self.start_line.crossing((prev.x, prev.y), (next.x, next.y)) {
            1 if self.backward_debt > 0 => {
                self.backward_debt -= 1;
                None
            }
            1 => {
                let lap = self.ticks - self.lap_start_tick;
                self.lap_ticks.push(lap);
                self.lap_start_tick = self.ticks;
                Some(lap as f64 * self.dt)
            }
            -1 => {
                self.backward_debt += 1;
                None
            }
            _ => None,
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.ticks as f64 * self.dt
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn lap_ticks(&self) -> &[u64] {
        &self.lap_ticks
    }

    pub fn current_lap_ticks(&self) -> u64 {
        self.ticks - self.lap_start_tick
    }

    /// All recorded laps, including a leading partial one.
    pub fn lap_times(&self) -> Vec<f64> {
        self.lap_ticks.iter().map(|&t| t as f64 * self.dt).collect()
    }

    pub fn laps_recorded(&self) -> usize {
        self.lap_ticks.len()
    }

    /// Lap times of complete laps only.
    pub fn full_lap_times(&self) -> Vec<f64> {
        let skip = usize::from(self.first_lap_partial);
        self.lap_ticks
            .iter()
            .skip(skip)
            .map(|&t| t as f64 * self.dt)
            .collect()
    }

    pub fn full_laps(&self) -> usize {
        self.lap_ticks
            .len()
            .saturating_sub(usize::from(self.first_lap_partial))
    }
}
