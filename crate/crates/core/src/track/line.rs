use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::{wrap_angle, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// Arclength from the first waypoint (m).
    pub s: f64,
    pub x: f64,
    pub y: f64,
    /// Heading of the line, measured from the world x axis (rad).
    pub heading: f64,
    /// Planned speed (m/s).
    pub speed: f64,
    pub curvature: Option<f64>,
}

/// Where zero heading points in a racing-line file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HeadingZero {
    /// Heading 0 points along +y (the racetrack repository convention).
    #[default]
    North,
    /// Heading 0 points along +x.
    East,
}

/// Column layout of a racing-line file. Defaults follow
/// `s_m; x_m; y_m; psi_rad; kappa_radpm; vx_mps; ax_mps2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub delimiter: char,
    pub s: usize,
    pub x: usize,
    pub y: usize,
    pub heading: usize,
    pub curvature: Option<usize>,
    pub speed: usize,
    pub heading_zero: HeadingZero,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            delimiter: ';',
            s: 0,
            x: 1,
            y: 2,
            heading: 3,
            curvature: Some(4),
            speed: 5,
            heading_zero: HeadingZero::North,
        }
    }
}

/// Closed racing line. The segment from the last waypoint back to the first
/// closes the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct RacingLine {
    waypoints: Vec<Waypoint>,
    length: f64,
}

impl RacingLine {
    /// Validates and normalizes arclengths so the first waypoint sits at 0.
    /// Speeds above `v_max` are clamped with a warning.
    pub fn new(mut waypoints: Vec<Waypoint>, v_max: f64) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::RacingLine("no waypoints".into()));
        }
        for (i, w) in waypoints.iter().enumerate() {
            let finite = [w.s, w.x, w.y, w.heading, w.speed]
                .iter()
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::RacingLine(format!("waypoint {i} has non-finite fields")));
            }
            if w.speed <= 0.0 {
                return Err(Error::RacingLine(format!(
                    "waypoint {i} has non-positive speed {}",
                    w.speed
                )));
            }
        }
        let mut clamped = 0;
        for w in waypoints.iter_mut() {
            if w.speed > v_max {
                w.speed = v_max;
                clamped += 1;
            }
        }
        if clamped > 0 {
            log::warn!("clamped {clamped} waypoint speeds to v_max = {v_max}");
        }
        for (i, pair) in waypoints.windows(2).enumerate() {
            if pair[1].s <= pair[0].s {
                return Err(Error::RacingLine(format!(
                    "arclength not strictly increasing at row {}: {} after {}",
                    i + 1,
                    pair[1].s,
                    pair[0].s
                )));
            }
        }
        let s0 = waypoints[0].s;
        for w in waypoints.iter_mut() {
            w.s -= s0;
        }
        let n = waypoints.len();
        if n == 1 {
            return Ok(Self {
                waypoints,
                length: 0.0,
            });
        }
        let first = waypoints[0];
        let last = waypoints[n - 1];
        let closure = (first.x - last.x).hypot(first.y - last.y);
        let max_step = waypoints
            .windows(2)
            .map(|p| p[1].s - p[0].s)
            .fold(0.0, f64::max);
        if closure > 3.0 * max_step + 1e-9 {
            return Err(Error::RacingLine(format!(
                "line is not closed: last waypoint is {closure:.3} m from the first"
            )));
        }
        let length = last.s + closure;
        Ok(Self { waypoints, length })
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn get(&self, i: usize) -> &Waypoint {
        &self.waypoints[i % self.waypoints.len()]
    }

    /// Total loop length including the closing segment.
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn next_index(&self, i: usize) -> usize {
        (i + 1) % self.waypoints.len()
    }

    /// Arclength travelled going forward from waypoint `from` to `to`.
    pub fn arclength_between(&self, from: usize, to: usize) -> f64 {
        let d = self.waypoints[to].s - self.waypoints[from].s;
        if d < 0.0 {
            d + self.length
        } else {
            d
        }
    }

    /// Interpolated position at arclength `s` (wrapped onto the loop).
    pub fn position_at(&self, s: f64) -> (f64, f64) {
        let n = self.waypoints.len();
        if n == 1 || self.length <= 0.0 {
            return (self.waypoints[0].x, self.waypoints[0].y);
        }
        let s = s.rem_euclid(self.length);
        let i = self.waypoints.partition_point(|w| w.s <= s).max(1) - 1;
        let a = &self.waypoints[i];
        let b = &self.waypoints[(i + 1) % n];
        let seg = self.arclength_between(i, (i + 1) % n);
        let t = if seg > 0.0 { (s - a.s) / seg } else { 0.0 };
        (a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
    }

    /// Writes the line in the racetrack repository layout.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# s_m; x_m; y_m; psi_rad; kappa_radpm; vx_mps; ax_mps2\n");
        for w in &self.waypoints {
            out.push_str(&format!(
                "{}; {}; {}; {}; {}; {}; 0.0\n",
                w.s,
                w.x,
                w.y,
                wrap_angle(w.heading - FRAC_PI_2),
                w.curvature.unwrap_or(0.0),
                w.speed
            ));
        }
        out
    }
}

/// Parses delimited racing-line text. Lines starting with `#` are skipped.
pub fn load_racing_line(bytes: &[u8], columns: &ColumnMap, v_max: f64) -> Result<RacingLine> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(columns.delimiter as u8)
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes);
    let needed = [columns.s, columns.x, columns.y, columns.heading, columns.speed]
        .into_iter()
        .chain(columns.curvature)
        .max()
        .unwrap_or(0);
    let mut waypoints = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::RacingLine(format!("row {row}: {e}")))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() <= needed {
            return Err(Error::RacingLine(format!(
                "row {row} has {} columns, need at least {}",
                record.len(),
                needed + 1
            )));
        }
        let field = |idx: usize| -> Result<f64> {
            record[idx].parse::<f64>().map_err(|_| {
                Error::RacingLine(format!("row {row}: cannot parse '{}'", &record[idx]))
            })
        };
        let raw_heading = field(columns.heading)?;
        let heading = match columns.heading_zero {
            HeadingZero::North => wrap_angle(raw_heading + FRAC_PI_2),
            HeadingZero::East => wrap_angle(raw_heading),
        };
        waypoints.push(Waypoint {
            s: field(columns.s)?,
            x: field(columns.x)?,
            y: field(columns.y)?,
            heading,
            speed: field(columns.speed)?,
            curvature: columns.curvature.map(field).transpose()?,
        });
    }
    RacingLine::new(waypoints, v_max)
}

pub fn load_racing_line_file(path: &Path, columns: &ColumnMap, v_max: f64) -> Result<RacingLine> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingAsset(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    load_racing_line(&bytes, columns, v_max)
}

/// True when `j` lies ahead of `k` along the loop (less than half a lap).
fn is_ahead(n: usize, k: usize, j: usize) -> bool {
    let d = (j + n - k) % n;
    d > 0 && d * 2 < n + 1
}

fn squared_distance(w: &Waypoint, x: f64, y: f64) -> f64 {
    let (dx, dy) = (w.x - x, w.y - y);
    dx * dx + dy * dy
}

fn pick_nearest(line: &RacingLine, x: f64, y: f64, candidates: impl Iterator<Item = usize>) -> usize {
    let n = line.len();
    let mut best = usize::MAX;
    let mut best_d = f64::INFINITY;
    for i in candidates {
        let d = squared_distance(line.get(i), x, y);
        let tie = best != usize::MAX && (d - best_d).abs() <= 1e-12 * best_d.max(1e-12);
        if (d < best_d && !tie) || (tie && is_ahead(n, best, i)) {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Index of the Euclidean-nearest waypoint (full scan). Exact ties resolve
/// to the waypoint further ahead along the line.
pub fn nearest_waypoint(line: &RacingLine, x: f64, y: f64) -> usize {
    pick_nearest(line, x, y, 0..line.len())
}

/// Per-episode nearest-waypoint search. After the first full scan only a
/// window around the previous answer is searched, which keeps lookups cheap
/// and prevents snapping across hairpins.
#[derive(Debug, Clone, Default)]
pub struct WaypointTracker {
    cursor: Option<usize>,
}

impl WaypointTracker {
    const BACK: usize = 10;
    const AHEAD: usize = 60;
    /// Beyond this distance the local answer is distrusted and a full scan runs.
    const RELOCK_DISTANCE: f64 = 2.0;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.cursor = None;
    }

    pub fn cursor(&self) -> Option<usize> {
        self.cursor
    }

    pub fn nearest(&mut self, line: &RacingLine, x: f64, y: f64) -> usize {
        let n = line.len();
        let idx = match self.cursor {
            Some(c) if n > Self::BACK + Self::AHEAD + 1 => {
                let window = (0..=Self::BACK + Self::AHEAD).map(|k| (c + n - Self::BACK + k) % n);
                let i = pick_nearest(line, x, y, window);
                let at_edge = i == (c + Self::AHEAD) % n || i == (c + n - Self::BACK) % n;
                if at_edge || squared_distance(line.get(i), x, y) > Self::RELOCK_DISTANCE.powi(2) {
                    nearest_waypoint(line, x, y)
                } else {
                    i
                }
            }
            _ => nearest_waypoint(line, x, y),
        };
        self.cursor = Some(idx);
        idx
    }
}

/// Number of relative waypoints in the observation.
pub const N_WAYPOINTS_AHEAD: usize = 20;

/// Default look-ahead horizon for relative waypoints (m).
pub const WAYPOINT_HORIZON: f64 = 30.0;

/// `count` points sampled evenly over `[0, horizon]` of arclength ahead of
/// waypoint `nearest`, expressed in the vehicle body frame.
pub fn waypoints_ahead_from(
    line: &RacingLine,
    state: &VehicleState,
    nearest: usize,
    horizon: f64,
    count: usize,
) -> Vec<[f64; 2]> {
    let s0 = line.get(nearest).s;
    let (sin, cos) = state.yaw.sin_cos();
    (0..count)
        .map(|k| {
            let ds = if count > 1 {
                horizon * k as f64 / (count - 1) as f64
            } else {
                0.0
            };
            let (px, py) = line.position_at(s0 + ds);
            let (dx, dy) = (px - state.x, py - state.y);
            [cos * dx + sin * dy, -sin * dx + cos * dy]
        })
        .collect()
}

/// As [`waypoints_ahead_from`], locating the nearest waypoint by full scan.
pub fn waypoints_ahead(line: &RacingLine, state: &VehicleState, horizon: f64) -> Vec<[f64; 2]> {
    let nearest = nearest_waypoint(line, state.x, state.y);
    waypoints_ahead_from(line, state, nearest, horizon, N_WAYPOINTS_AHEAD)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> RacingLine {
        let pts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let wps = pts
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Waypoint {
                s: i as f64,
                x,
                y,
                heading: 0.0,
                speed: 1.0,
                curvature: None,
            })
            .collect();
        RacingLine::new(wps, 8.0).unwrap()
    }

    /// Ten waypoints, 1 m apart, on a regular decagon.
    pub(crate) fn decagon() -> RacingLine {
        let n = 10;
        let r = 0.5 / (std::f64::consts::PI / n as f64).sin();
        let wps: Vec<_> = (0..n)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / n as f64;
                Waypoint {
                    s: i as f64,
                    x: r * a.cos(),
                    y: r * a.sin(),
                    heading: a + FRAC_PI_2,
                    speed: 2.0,
                    curvature: None,
                }
            })
            .collect();
        RacingLine::new(wps, 8.0).unwrap()
    }

    #[test]
    fn unit_square_length() {
        assert!((square().length() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn parses_repository_layout() {
        let text = "# s_m; x_m; y_m; psi_rad; kappa_radpm; vx_mps; ax_mps2\n\
                    0.0; 0.0; 0.0; -1.5707963267948966; 0.0; 1.0; 0.0\n\
                    1.0; 1.0; 0.0; -1.5707963267948966; 0.0; 9.5; 0.0\n\
                    2.0; 1.0; 1.0; 0.0; 0.0; 1.0; 0.0\n\
                    3.0; 0.0; 1.0; 1.5707963267948966; 0.0; 1.0; 0.0\n";
        let line = load_racing_line(text.as_bytes(), &ColumnMap::default(), 8.0).unwrap();
        assert_eq!(line.len(), 4);
        assert!(line.get(0).heading.abs() < 1e-12);
        assert_eq!(line.get(1).speed, 8.0);
        assert!((line.get(2).heading - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn decreasing_arclength_is_error() {
        let text = "0.0;0;0;0;0;1;0\n2.0;1;0;0;0;1;0\n1.0;1;1;0;0;1;0\n";
        let err = load_racing_line(text.as_bytes(), &ColumnMap::default(), 8.0).unwrap_err();
        assert!(matches!(err, Error::RacingLine(_)));
    }

    #[test]
    fn malformed_row_is_error() {
        let text = "0.0;0;0;0;0;1;0\n1.0;abc;0;0;0;1;0\n";
        assert!(load_racing_line(text.as_bytes(), &ColumnMap::default(), 8.0).is_err());
        let short = "0.0;0;0\n";
        assert!(load_racing_line(short.as_bytes(), &ColumnMap::default(), 8.0).is_err());
    }

    #[test]
    fn open_line_is_error() {
        let wps = (0..5)
            .map(|i| Waypoint {
                s: i as f64,
                x: i as f64,
                y: 0.0,
                heading: 0.0,
                speed: 1.0,
                curvature: None,
            })
            .collect();
        assert!(RacingLine::new(wps, 8.0).is_err());
    }

    #[test]
    fn nearest_on_waypoint() {
        let line = decagon();
        for k in 0..10 {
            let w = line.get(k);
            assert_eq!(nearest_waypoint(&line, w.x, w.y), k);
        }
    }

    #[test]
    fn nearest_tie_goes_forward() {
        let line = decagon();
        for k in 0..10 {
            let a = line.get(k);
            let b = line.get(k + 1);
            let (mx, my) = ((a.x + b.x) / 2.0, (a.y + b.y) / 2.0);
            assert_eq!(nearest_waypoint(&line, mx, my), (k + 1) % 10);
        }
    }

    #[test]
    fn lookups_wrap_across_start() {
        let line = decagon();
        let (x, y) = line.position_at(9.5);
        let (ex, ey) = (
            (line.get(9).x + line.get(0).x) / 2.0,
            (line.get(9).y + line.get(0).y) / 2.0,
        );
        assert!((x - ex).abs() < 1e-12 && (y - ey).abs() < 1e-12);
        assert!((line.arclength_between(8, 1) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn tracker_agrees_with_scan_on_smooth_motion() {
        let line = decagon();
        let mut tracker = WaypointTracker::new();
        for k in 0..200 {
            let s = k as f64 * 0.13;
            let (x, y) = line.position_at(s);
            assert_eq!(tracker.nearest(&line, x, y), nearest_waypoint(&line, x, y));
        }
    }
}
