//! Pure pursuit base controller: steers the rear axle onto an arc through a
//! lookahead waypoint and requests the planned speed of the nearest waypoint.

use serde::{Deserialize, Serialize};

use crate::track::{nearest_waypoint, RacingLine, Waypoint};
use crate::vehicle::{wrap_angle, HighLevelAction, VehicleParams, VehicleState};

/// Which length enters the steering law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SteeringLength {
    /// l_f + l_r.
    #[default]
    Wheelbase,
    /// Overall body length l.
    BodyLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PurePursuitConfig {
    /// Lookahead distance along the racing line (m).
    pub lookahead: f64,
    pub length: SteeringLength,
}

impl Default for PurePursuitConfig {
    fn default() -> Self {
        Self {
            lookahead: 0.82,
            length: SteeringLength::Wheelbase,
        }
    }
}

impl PurePursuitConfig {
    pub fn steering_length(&self, params: &VehicleParams) -> f64 {
        match self.length {
            SteeringLength::Wheelbase => params.wheelbase(),
            SteeringLength::BodyLength => params.l,
        }
    }
}

/// Index of the first waypoint at least `lookahead` meters of arclength
/// ahead of `nearest`. Never returns `nearest` itself unless the line has a
/// single waypoint.
pub fn select_lookahead_index(line: &RacingLine, nearest: usize, lookahead: f64) -> usize {
    let n = line.len();
    let mut idx = line.next_index(nearest);
    for _ in 1..n {
        if line.arclength_between(nearest, idx) >= lookahead {
            break;
        }
        let next = line.next_index(idx);
        if next == nearest {
            break;
        }
        idx = next;
    }
    idx
}

pub fn select_lookahead<'a>(line: &'a RacingLine, state: &VehicleState, lookahead: f64) -> &'a Waypoint {
    let nearest = nearest_waypoint(line, state.x, state.y);
    line.get(select_lookahead_index(line, nearest, lookahead))
}

/// Steering angle `atan(2 L sin(alpha) / d)`, where `alpha` is the bearing of
/// the target seen from the rear axle and `d` the rear-axle-to-target
/// distance. Clamped to the steering bounds.
pub fn pure_pursuit_steering(
    state: &VehicleState,
    target: &Waypoint,
    cfg: &PurePursuitConfig,
    params: &VehicleParams,
) -> f64 {
    let (s, c) = state.yaw.sin_cos();
    let rear_x = state.x - params.l_r * c;
    let rear_y = state.y - params.l_r * s;
    let (dx, dy) = (target.x - rear_x, target.y - rear_y);
    let dist = dx.hypot(dy);
    if dist < 1e-9 {
        log::warn!("lookahead point coincides with the rear axle; steering straight");
        return 0.0;
    }
    let alpha = wrap_angle(dy.atan2(dx) - state.yaw);
    let len = cfg.steering_length(params);
    (2.0 * len * alpha.sin() / dist)
        .atan()
        .clamp(-params.delta_max, params.delta_max)
}

/// Base action given the nearest waypoint index (normally from a per-episode tracker).
pub fn base_action_from(
    line: &RacingLine,
    state: &VehicleState,
    nearest: usize,
    cfg: &PurePursuitConfig,
    params: &VehicleParams,
) -> HighLevelAction {
    let target = line.get(select_lookahead_index(line, nearest, cfg.lookahead));
    HighLevelAction {
        steer: pure_pursuit_steering(state, target, cfg, params),
        speed: line.get(nearest).speed,
    }
}

pub fn base_action(
    line: &RacingLine,
    state: &VehicleState,
    cfg: &PurePursuitConfig,
    params: &VehicleParams,
) -> HighLevelAction {
    let nearest = nearest_waypoint(line, state.x, state.y);
    base_action_from(line, state, nearest, cfg, params)
}
