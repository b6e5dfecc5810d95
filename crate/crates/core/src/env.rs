//! Single racing environment: base controller, residual composition,
//! low-level control, dynamics, collision, lap timing, observation and reward.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lidar::{Lidar, LidarConfig};
use crate::policy::{
    build_observation, compute_reward, residual_compose, vehicle_features, FrameHistory, ObsLayout,
    ResidualScale, RewardConfig, FRAME_STACK, VEHICLE_FEATURES,
};
use crate::pursuit::{base_action_from, PurePursuitConfig};
use crate::track::{
    collision_check, random_start, start_at, waypoints_ahead_from, LapTimer, StartLine, Track,
    WaypointTracker, N_WAYPOINTS_AHEAD, WAYPOINT_HORIZON,
};
use crate::vehicle::{low_level_control, step_dynamics, HighLevelAction, VehicleParams, VehicleState, DT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub vehicle: VehicleParams,
    pub pursuit: PurePursuitConfig,
    pub lidar: LidarConfig,
    pub reward: RewardConfig,
    pub residual_scale: ResidualScale,
    /// Relative waypoints in the observation.
    pub waypoints: usize,
    pub horizon: f64,
    /// Full laps after which an episode ends.
    pub laps_per_episode: usize,
    /// Hard cap on episode length in steps.
    pub max_episode_steps: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            pursuit: PurePursuitConfig::default(),
            lidar: LidarConfig::default(),
            reward: RewardConfig::default(),
            residual_scale: ResidualScale::default(),
            waypoints: N_WAYPOINTS_AHEAD,
            horizon: WAYPOINT_HORIZON,
            laps_per_episode: 2,
            max_episode_steps: 30_000,
        }
    }
}

impl EnvConfig {
    pub fn layout(&self) -> ObsLayout {
        ObsLayout {
            lidar: self.lidar.beams,
            waypoints: self.waypoints,
            vehicle_features: VEHICLE_FEATURES,
            frames: FRAME_STACK,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        let ok = self.pursuit.lookahead > 0.0
            && self.horizon > 0.0
            && self.lidar.max_range > 0.0
            && self.laps_per_episode > 0
            && self.max_episode_steps > 0;
        if !ok {
            return Err(Error::Config(
                "env: lookahead, horizon, lidar range, laps and step cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct Step {
    /// Observation of the post-step state (not of a reset state).
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub collided: bool,
    /// Episode ended by the step cap rather than by collision or laps.
    pub truncated: bool,
    pub lap_time: Option<f64>,
    /// Base action applied at this step.
    pub base: HighLevelAction,
    /// Scaled residual `scale * policy_out`.
    pub residual: HighLevelAction,
    /// Action sent to the low-level controller.
    pub applied: HighLevelAction,
    pub state: VehicleState,
}

#[derive(Debug, Clone)]
pub struct RacingEnv {
    track: Track,
    cfg: EnvConfig,
    layout: ObsLayout,
    lidar: Lidar,
    rng: ChaCha8Rng,
    state: VehicleState,
    tracker: WaypointTracker,
    timer: LapTimer,
    history: FrameHistory,
    scan: Vec<f64>,
    base: HighLevelAction,
    prev_applied: HighLevelAction,
    steps: u64,
    start_index: usize,
}

impl RacingEnv {
    pub fn new(track: Track, cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let layout = cfg.layout();
        let lidar = Lidar::new(cfg.lidar.clone());
        let timer = LapTimer::new(StartLine::from_line(&track.line), DT, false);
        let scan = vec![0.0; cfg.lidar.beams];
        Ok(Self {
            track,
            cfg,
            layout,
            lidar,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: VehicleState::default(),
            tracker: WaypointTracker::new(),
            timer,
            history: FrameHistory::new(),
            scan,
            base: HighLevelAction::default(),
            prev_applied: HighLevelAction::default(),
            steps: 0,
            start_index: 0,
        })
    }

    pub fn track(&self) -> &Track {
        &self.track
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &ObsLayout {
        &self.layout
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn timer(&self) -> &LapTimer {
        &self.timer
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    /// Base action for the current state.
    pub fn base_action(&self) -> HighLevelAction {
        self.base
    }

    pub fn last_scan(&self) -> &[f64] {
        &self.scan
    }

    /// Running start at a uniformly drawn collision-free waypoint.
    pub fn reset(&mut self) -> Result<Vec<f64>> {
        let (state, idx) = random_start(&self.track, &self.cfg.vehicle, &mut self.rng)?;
        self.reset_to(state, idx)
    }

    /// Running start at waypoint `idx`.
    pub fn reset_at(&mut self, idx: usize) -> Result<Vec<f64>> {
        let idx = idx % self.track.line.len();
        let state = start_at(&self.track.line, idx);
        self.reset_to(state, idx)
    }

    fn reset_to(&mut self, state: VehicleState, idx: usize) -> Result<Vec<f64>> {
        self.state = state;
        self.start_index = idx;
        self.steps = 0;
        self.tracker.reset();
        self.history.clear();
        self.timer = LapTimer::new(StartLine::from_line(&self.track.line), DT, idx != 0);
        self.update_base();
        // The previous applied action at episode start is the first base action.
        self.prev_applied = self.base;
        self.observe([0.0, 0.0])
    }

    fn update_base(&mut self) -> usize {
        let nearest = self.tracker.nearest(&self.track.line, self.state.x, self.state.y);
        self.base = base_action_from(
            &self.track.line,
            &self.state,
            nearest,
            &self.cfg.pursuit,
            &self.cfg.vehicle,
        );
        nearest
    }

    fn observe(&mut self, accel: [f64; 2]) -> Result<Vec<f64>> {
        let nearest = self.tracker.cursor().expect("base action computed first");
        let w_rel = waypoints_ahead_from(
            &self.track.line,
            &self.state,
            nearest,
            self.cfg.horizon,
            self.cfg.waypoints,
        );
        self.lidar
            .scan_into(&self.track.grid, self.state.x, self.state.y, self.state.yaw, &mut self.scan);
        let frame = vehicle_features(&self.state, accel, &self.base, &self.prev_applied);
        build_observation(&self.layout, &self.scan, &w_rel, frame, &mut self.history)
    }

    /// Advances one control period with the squashed policy output
    /// `policy_out` in `[-1, 1]^2`; a zero output drives the base controller alone.
    pub fn step(&mut self, policy_out: [f64; 2]) -> Result<Step> {
        if !policy_out.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("policy output"));
        }
        let p = &self.cfg.vehicle;
        let base = self.base;
        let applied = residual_compose(policy_out, &self.cfg.residual_scale, &base, p);
        let input = low_level_control(&self.state, &applied, p);
        let next = step_dynamics(&self.state, &input, DT, p)?;
        let collided = collision_check(&self.track.grid, &next, p);
        let lap_time = self.timer.update(&self.state, &next);
        let reward = compute_reward(&self.cfg.reward, &next, collided);
        let accel = [
            (next.v_long() - self.state.v_long()) / DT,
            (next.v_lat() - self.state.v_lat()) / DT,
        ];
        self.state = next;
        self.prev_applied = applied;
        self.steps += 1;
        let finished = self.timer.full_laps() >= self.cfg.laps_per_episode;
        let truncated = !collided && !finished && self.steps >= self.cfg.max_episode_steps;
        self.update_base();
        let obs = self.observe(accel)?;
        Ok(Step {
            obs,
            reward,
            done: collided || finished || truncated,
            collided,
            truncated,
            lap_time,
            base,
            residual: self.cfg.residual_scale.apply(policy_out),
            applied,
            state: next,
        })
    }
}
