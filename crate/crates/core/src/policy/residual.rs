use serde::{Deserialize, Serialize};

use crate::vehicle::{HighLevelAction, VehicleParams};

/// Per-component multiplier on the squashed policy output (steering, speed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualScale(pub [f64; 2]);

impl Default for ResidualScale {
    fn default() -> Self {
        Self([0.05, 1.0])
    }
}

impl ResidualScale {
    pub fn apply(&self, out: [f64; 2]) -> HighLevelAction {
        HighLevelAction {
            steer: self.0[0] * out[0],
            speed: self.0[1] * out[1],
        }
    }
}

/// Applied action `clip(base + scale * out)`: steering to the steering
/// bounds, speed to `[0, v_max]`.
pub fn residual_compose(
    out: [f64; 2],
    scale: &ResidualScale,
    base: &HighLevelAction,
    params: &VehicleParams,
) -> HighLevelAction {
    let r = scale.apply(out);
    HighLevelAction {
        steer: (base.steer + r.steer).clamp(-params.delta_max, params.delta_max),
        speed: (base.speed + r.speed).clamp(0.0, params.v_max),
    }
}
