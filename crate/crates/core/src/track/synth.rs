//! Procedural tracks (circles and ovals) with matching maps and racing lines,
//! used for tests, smoke runs and the desk-scale training demonstration.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use super::{OccupancyGrid, RacingLine, Track, Waypoint};
use crate::error::Result;
use crate::vehicle::wrap_angle;

/// Free margin of walls around the drivable band, in meters.
const MAP_MARGIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedProfile {
    Constant { speed: f64 },
    /// Curvature-limited profile: `sqrt(a_lat / |kappa|)` capped at `v_max`,
    /// smoothed by forward/backward passes limited to `a_long`, then
    /// multiplied by `scale`.
    Curvature {
        a_lat: f64,
        a_long: f64,
        v_max: f64,
        scale: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Circle { radius: f64 },
    /// Stadium: two straights of length `straight` joined by semicircles.
    Oval { straight: f64, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(flatten)]
    pub shape: Shape,
    /// Width of the free band around the centerline (m).
    pub width: f64,
    /// Approximate waypoint spacing (m).
    pub spacing: f64,
    pub resolution: f64,
    pub profile: SpeedProfile,
}

struct Sample {
    x: f64,
    y: f64,
    heading: f64,
    curvature: f64,
}

impl Shape {
    fn length(&self) -> f64 {
        match *self {
            Shape::Circle { radius } => TAU * radius,
            Shape::Oval { straight, radius } => 2.0 * straight + TAU * radius,
        }
    }

    /// Counter-clockwise centerline, starting at the bottom, heading +x.
    fn sample(&self, s: f64) -> Sample {
        match *self {
            Shape::Circle { radius } => {
                let th = -FRAC_PI_2 + s / radius;
                Sample {
                    x: radius * th.cos(),
                    y: radius * th.sin(),
                    heading: th + FRAC_PI_2,
                    curvature: 1.0 / radius,
                }
            }
            Shape::Oval { straight, radius } => {
                let half = 0.5 * straight;
                let arc = PI * radius;
                let straight_at = |x: f64, y: f64, heading: f64| Sample {
                    x,
                    y,
                    heading,
                    curvature: 0.0,
                };
                let bend_at = |cx: f64, th: f64| Sample {
                    x: cx + radius * th.cos(),
                    y: radius * th.sin(),
                    heading: th + FRAC_PI_2,
                    curvature: 1.0 / radius,
                };
                if s < half {
                    straight_at(s, -radius, 0.0)
                } else if s < half + arc {
                    bend_at(half, -FRAC_PI_2 + (s - half) / radius)
                } else if s < half + arc + straight {
                    straight_at(half - (s - half - arc), radius, PI)
                } else if s < half + 2.0 * arc + straight {
                    bend_at(-half, FRAC_PI_2 + (s - half - arc - straight) / radius)
                } else {
                    straight_at(-half + (s - half - 2.0 * arc - straight), -radius, 0.0)
                }
            }
        }
    }

    fn distance_to_centerline(&self, x: f64, y: f64) -> f64 {
        match *self {
            Shape::Circle { radius } => (x.hypot(y) - radius).abs(),
            Shape::Oval { straight, radius } => {
                let cx = x.clamp(-0.5 * straight, 0.5 * straight);
                ((x - cx).hypot(y) - radius).abs()
            }
        }
    }

    fn half_extent(&self) -> (f64, f64) {
        match *self {
            Shape::Circle { radius } => (radius, radius),
            Shape::Oval { straight, radius } => (0.5 * straight + radius, radius),
        }
    }
}

fn speed_profile(curvature: &[f64], ds: f64, profile: &SpeedProfile) -> Vec<f64> {
    match *profile {
        SpeedProfile::Constant { speed } => vec![speed; curvature.len()],
        SpeedProfile::Curvature {
            a_lat,
            a_long,
            v_max,
            scale,
        } => {
            let n = curvature.len();
            let mut v: Vec<f64> = curvature
                .iter()
                .map(|k| {
                    if k.abs() < 1e-9 {
                        v_max
                    } else {
                        (a_lat / k.abs()).sqrt().min(v_max)
                    }
                })
                .collect();
            // Two sweeps each way settle the cyclic constraint.
            for _ in 0..2 {
                for i in 0..n {
                    let prev = v[(i + n - 1) % n];
                    v[i] = v[i].min((prev * prev + 2.0 * a_long * ds).sqrt());
                }
                for i in (0..n).rev() {
                    let next = v[(i + 1) % n];
                    v[i] = v[i].min((next * next + 2.0 * a_long * ds).sqrt());
                }
            }
            v.into_iter().map(|x| x * scale).collect()
        }
    }
}

pub fn build(name: &str, spec: &SynthSpec) -> Result<Track> {
    let length = spec.shape.length();
    let n = (length / spec.spacing).round().max(3.0) as usize;
    let ds = length / n as f64;
    let samples: Vec<Sample> = (0..n).map(|i| spec.shape.sample(i as f64 * ds)).collect();
    let curvature: Vec<f64> = samples.iter().map(|p| p.curvature).collect();
    let speeds = speed_profile(&curvature, ds, &spec.profile);
    let waypoints = samples
        .iter()
        .zip(&speeds)
        .enumerate()
        .map(|(i, (p, &v))| Waypoint {
            s: i as f64 * ds,
            x: p.x,
            y: p.y,
            heading: wrap_angle(p.heading),
            speed: v,
            curvature: Some(p.curvature),
        })
        .collect();
    let line = RacingLine::new(waypoints, f64::INFINITY)?;

    let (ex, ey) = spec.shape.half_extent();
    let pad = 0.5 * spec.width + MAP_MARGIN;
    let origin = [-(ex + pad), -(ey + pad), 0.0];
    let width = (2.0 * (ex + pad) / spec.resolution).ceil() as usize;
    let height = (2.0 * (ey + pad) / spec.resolution).ceil() as usize;
    let mut grid = OccupancyGrid::empty(width, height, spec.resolution, origin)?;
    for j in 0..height {
        for i in 0..width {
            let (x, y) = grid.cell_center(i, j);
            if spec.shape.distance_to_centerline(x, y) > 0.5 * spec.width {
                grid.set_occupied(i, j, true);
            }
        }
    }
    Ok(Track::new(name, grid, line))
}

/// Circle of radius `radius` with a constant planned speed.
pub fn circle(radius: f64, width: f64, speed: f64) -> Result<Track> {
    build(
        "circle",
        &SynthSpec {
            shape: Shape::Circle { radius },
            width,
            spacing: 0.1,
            resolution: 0.05,
            profile: SpeedProfile::Constant { speed },
        },
    )
}

/// Oval used by the desk-scale learning demonstration: the planned speed is
/// `scale` times a curvature-limited profile the base controller can drive.
pub fn demo_oval_spec(scale: f64) -> SynthSpec {
    SynthSpec {
        shape: Shape::Oval {
            straight: 12.0,
            radius: 4.0,
        },
        width: 2.4,
        spacing: 0.1,
        resolution: 0.05,
        profile: SpeedProfile::Curvature {
            a_lat: 6.0,
            a_long: 4.0,
            v_max: 8.0,
            scale,
        },
    }
}
