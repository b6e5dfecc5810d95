use serde::{Deserialize, Serialize};

use crate::vehicle::VehicleState;

/// Reward `tau_long * v_x + tau_lat * v_y^2 + collision * [collided]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub tau_long: f64,
    pub tau_lat: f64,
    pub collision: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            tau_long: 0.003,
            tau_lat: -0.003,
            collision: -50.0,
        }
    }
}

impl RewardConfig {
    pub fn reward(&self, v_long: f64, v_lat: f64, collided: bool) -> f64 {
        let mut r = self.tau_long * v_long + self.tau_lat * v_lat * v_lat;
        if collided {
            r += self.collision;
        }
        r
    }
}

/// Reward for the post-step state.
pub fn compute_reward(cfg: &RewardConfig, state: &VehicleState, collided: bool) -> f64 {
    cfg.reward(state.v_long(), state.v_lat(), collided)
}
