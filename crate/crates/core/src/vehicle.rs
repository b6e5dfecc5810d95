//! Single-track vehicle model with linear tire slip, integrated at a fixed
//! control rate, and the saturating low-level controller that turns a desired
//! steering angle and speed into bounded model inputs.
//!
//! State derivatives follow the CommonRoad single-track formulation. The
//! dynamic equations divide by the speed, so below [`V_KINEMATIC`] the
//! kinematic single-track equations are used instead; between
//! [`V_KINEMATIC`] and [`V_DYNAMIC`] the two derivative fields are blended
//! linearly so the vector field stays continuous across the switch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

/// Control period of the simulator (100 Hz).
pub const DT: f64 = 0.01;

/// Below this speed only the kinematic equations are evaluated.
pub const V_KINEMATIC: f64 = 0.5;

/// Above this speed only the dynamic equations are evaluated.
pub const V_DYNAMIC: f64 = 1.0;

/// Steering error (rad) at which the low-level controller saturates.
const STEER_ERROR_FULL: f64 = 0.1;

/// Speed error (m/s) at which the low-level controller saturates.
const SPEED_ERROR_FULL: f64 = 1.0;

/// Physical parameters of the car. Field names in config files use the
/// usual symbol names (`l_f`, `C_Sf`, `delta_max`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// Height of the center of gravity (m).
    pub h: f64,
    /// Width (m).
    pub w: f64,
    /// Length (m).
    pub l: f64,
    /// Center of gravity to front axle (m).
    pub l_f: f64,
    /// Center of gravity to rear axle (m).
    pub l_r: f64,
    /// Mass (kg).
    pub m: f64,
    /// Yaw inertia (kg m^2).
    #[serde(rename = "I")]
    pub inertia: f64,
    pub delta_max: f64,
    pub delta_dot_max: f64,
    pub v_switch: f64,
    pub v_max: f64,
    pub v_dot_max: f64,
    #[serde(rename = "C_Sf")]
    pub c_sf: f64,
    #[serde(rename = "C_Sr")]
    pub c_sr: f64,
    pub mu: f64,
}

impl Default for VehicleParams {
    /// Parameters measured on a 1:10 scale F1TENTH car.
    fn default() -> Self {
        Self {
            h: 0.074,
            w: 0.27,
            l: 0.51,
            l_f: 0.15875,
            l_r: 0.17145,
            m: 3.47,
            inertia: 0.04712,
            delta_max: 0.4189,
            delta_dot_max: 3.2,
            v_switch: 7.319,
            v_max: 8.0,
            v_dot_max: 7.51,
            c_sf: 4.718,
            c_sr: 5.4562,
            mu: 0.8,
        }
    }
}

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("h", self.h),
            ("w", self.w),
            ("l", self.l),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("m", self.m),
            ("I", self.inertia),
            ("delta_max", self.delta_max),
            ("delta_dot_max", self.delta_dot_max),
            ("v_switch", self.v_switch),
            ("v_max", self.v_max),
            ("v_dot_max", self.v_dot_max),
            ("C_Sf", self.c_sf),
            ("C_Sr", self.c_sr),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if !(self.mu > 0.0 && self.mu <= 1.5) {
            return Err(Error::InvalidParameter(format!(
                "mu must lie in (0, 1.5], got {}",
                self.mu
            )));
        }
        if self.l_f + self.l_r >= self.l {
            return Err(Error::InvalidParameter(
                "wheelbase l_f + l_r must be shorter than the body length l".into(),
            ));
        }
        Ok(())
    }

    /// Largest forward acceleration available at speed `v`. Above
    /// `v_switch` the motor is power-limited.
    pub fn accel_limit(&self, v: f64) -> f64 {
        if v > self.v_switch {
            self.v_dot_max * self.v_switch / v
        } else {
            self.v_dot_max
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Steering angle (rad).
    pub delta: f64,
    /// Longitudinal speed (m/s).
    pub v: f64,
    /// Yaw angle (rad), kept in (-pi, pi].
    pub yaw: f64,
    pub yaw_rate: f64,
    /// Slip angle between velocity vector and heading (rad).
    pub slip: f64,
}

impl VehicleState {
    pub fn at_pose(x: f64, y: f64, yaw: f64, v: f64) -> Self {
        Self {
            x,
            y,
            yaw: wrap_angle(yaw),
            v,
            ..Self::default()
        }
    }

    fn to_array(self) -> [f64; 7] {
        [
            self.x,
            self.y,
            self.delta,
            self.v,
            self.yaw,
            self.yaw_rate,
            self.slip,
        ]
    }

    fn from_array(s: [f64; 7]) -> Self {
        Self {
            x: s[0],
            y: s[1],
            delta: s[2],
            v: s[3],
            yaw: s[4],
            yaw_rate: s[5],
            slip: s[6],
        }
    }

    /// Velocity along the body x axis.
    pub fn v_long(&self) -> f64 {
        self.v * self.slip.cos()
    }

    /// Velocity along the body y axis.
    pub fn v_lat(&self) -> f64 {
        self.v * self.slip.sin()
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Input of the vehicle model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelInput {
    pub steer_rate: f64,
    pub accel: f64,
}

/// Desired steering angle and speed, as produced by the controllers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HighLevelAction {
    pub steer: f64,
    pub speed: f64,
}

impl HighLevelAction {
    pub fn new(steer: f64, speed: f64) -> Self {
        Self { steer, speed }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.steer, self.speed]
    }
}

/// Wraps an angle into (-pi, pi]. Angles already in range are returned untouched.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    if a > -PI && a <= PI {
        return a;
    }
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// Kinematic single-track derivatives. Slip angle and yaw rate follow the
/// steering geometry: beta = atan(l_r / l_wb * tan(delta)).
pub fn kinematic_derivatives(s: &VehicleState, u: &ModelInput, p: &VehicleParams) -> [f64; 7] {
    let lwb = p.wheelbase();
    let ratio = p.l_r / lwb;
    let tan_d = s.delta.tan();
    let sec2_d = 1.0 + tan_d * tan_d;
    let beta = (ratio * tan_d).atan();
    let (sin_b, cos_b) = beta.sin_cos();
    let beta_dot = ratio * sec2_d / (1.0 + ratio * ratio * tan_d * tan_d) * u.steer_rate;
    let yaw_rate = s.v * cos_b * tan_d / lwb;
    let yaw_acc = (u.accel * cos_b * tan_d - s.v * sin_b * beta_dot * tan_d
        + s.v * cos_b * sec2_d * u.steer_rate)
        / lwb;
    [
        s.v * (s.yaw + beta).cos(),
        s.v * (s.yaw + beta).sin(),
        u.steer_rate,
        u.accel,
        yaw_rate,
        yaw_acc,
        beta_dot,
    ]
}

/// Dynamic single-track derivatives with linear tire forces and
/// longitudinal load transfer. Singular at v = 0.
pub fn dynamic_derivatives(s: &VehicleState, u: &ModelInput, p: &VehicleParams) -> [f64; 7] {
    let lwb = p.wheelbase();
    let front_load = GRAVITY * p.l_r - u.accel * p.h;
    let rear_load = GRAVITY * p.l_f + u.accel * p.h;
    let k = p.mu * p.m / (p.inertia * lwb);
    let yaw_acc = -k / s.v
        * (p.l_f * p.l_f * p.c_sf * front_load + p.l_r * p.l_r * p.c_sr * rear_load)
        * s.yaw_rate
        + k * (p.l_r * p.c_sr * rear_load - p.l_f * p.c_sf * front_load) * s.slip
        + k * p.l_f * p.c_sf * front_load * s.delta;
    let c = p.mu / (s.v * lwb);
    let slip_rate = (c / s.v * (p.c_sr * rear_load * p.l_r - p.c_sf * front_load * p.l_f) - 1.0)
        * s.yaw_rate
        - c * (p.c_sr * rear_load + p.c_sf * front_load) * s.slip
        + c * p.c_sf * front_load * s.delta;
    [
        s.v * (s.yaw + s.slip).cos(),
        s.v * (s.yaw + s.slip).sin(),
        u.steer_rate,
        u.accel,
        s.yaw_rate,
        yaw_acc,
        slip_rate,
    ]
}

/// Weight of the dynamic formulation at speed `v` (0 below the blend band, 1 above).
pub fn dynamic_weight(v: f64) -> f64 {
    ((v - V_KINEMATIC) / (V_DYNAMIC - V_KINEMATIC)).clamp(0.0, 1.0)
}

/// Blended state derivative used by the integrator.
pub fn derivatives(s: &VehicleState, u: &ModelInput, p: &VehicleParams) -> [f64; 7] {
    let w = dynamic_weight(s.v);
    if w <= 0.0 {
        kinematic_derivatives(s, u, p)
    } else if w >= 1.0 {
        dynamic_derivatives(s, u, p)
    } else {
        let kin = kinematic_derivatives(s, u, p);
        let dyn_ = dynamic_derivatives(s, u, p);
        std::array::from_fn(|i| (1.0 - w) * kin[i] + w * dyn_[i])
    }
}

fn rk4(y: [f64; 7], dt: f64, f: impl Fn(&[f64; 7]) -> [f64; 7]) -> [f64; 7] {
    let k1 = f(&y);
    let k2 = f(&std::array::from_fn(|i| y[i] + 0.5 * dt * k1[i]));
    let k3 = f(&std::array::from_fn(|i| y[i] + 0.5 * dt * k2[i]));
    let k4 = f(&std::array::from_fn(|i| y[i] + dt * k3[i]));
    std::array::from_fn(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Advances the state by one fourth-order Runge-Kutta step of length `dt`.
pub fn step_dynamics(
    state: &VehicleState,
    input: &ModelInput,
    dt: f64,
    params: &VehicleParams,
) -> Result<VehicleState> {
    if !state.is_finite() {
        return Err(Error::NonFinite("vehicle state"));
    }
    if !(input.steer_rate.is_finite() && input.accel.is_finite()) {
        return Err(Error::NonFinite("model input"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let next = rk4(state.to_array(), dt, |y| {
        derivatives(&VehicleState::from_array(*y), input, params)
    });
    let mut next = VehicleState::from_array(next);
    if !next.is_finite() {
        return Err(Error::NonFinite("integrated vehicle state"));
    }
    next.delta = next.delta.clamp(-params.delta_max, params.delta_max);
    next.v = next.v.clamp(0.0, params.v_max);
    next.yaw = wrap_angle(next.yaw);
    Ok(next)
}

/// Saturating proportional controller from a desired steering angle and
/// speed to steering velocity and acceleration.
pub fn low_level_control(
    state: &VehicleState,
    action: &HighLevelAction,
    params: &VehicleParams,
) -> ModelInput {
    let steer_target = action.steer.clamp(-params.delta_max, params.delta_max);
    let steer_gain = params.delta_dot_max / STEER_ERROR_FULL;
    let steer_rate = ((steer_target - state.delta) * steer_gain)
        .clamp(-params.delta_dot_max, params.delta_dot_max);

    let speed_target = action.speed.clamp(0.0, params.v_max);
    let accel_gain = params.v_dot_max / SPEED_ERROR_FULL;
    let accel = ((speed_target - state.v) * accel_gain)
        .clamp(-params.v_dot_max, params.accel_limit(state.v));

    ModelInput { steer_rate, accel }
}
