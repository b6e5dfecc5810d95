//! Deterministic evaluation: lap times of the base controller alone and of
//! the residual policy (distribution mean) on top of it.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use residual_racing::checkpoint::Checkpoint;
use residual_racing::env::{EnvConfig, RacingEnv, Step};
use residual_racing::policy::PolicyNetwork;
use residual_racing::ppo::RunningStats;
use residual_racing::track::{random_start, Track};
use residual_racing::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Base,
    Rpl,
    Both,
}

/// Produces the squashed policy output for an observation.
pub enum Controller {
    Base,
    Residual {
        net: Box<PolicyNetwork>,
        stats: RunningStats,
        clip: f64,
    },
}

impl Controller {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(Controller::Residual {
            net: Box::new(ckpt.network()?),
            stats: ckpt.obs_stats.clone(),
            clip: ckpt.clip_obs,
        })
    }

    /// `tanh(mean)` of the policy on frozen normalization statistics.
    pub fn output(&self, obs: &[f64]) -> Result<[f64; 2]> {
        match self {
            Controller::Base => Ok([0.0, 0.0]),
            Controller::Residual { net, stats, clip } => {
                let x = stats.normalize(obs, *clip);
                let (mean, _) = net.forward_one(&x)?;
                Ok([mean[0].tanh(), mean[1].tanh()])
            }
        }
    }
}

/// Outcome of one evaluation run from one start.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub start_index: usize,
    /// Complete laps only; a lap interrupted by a collision is not recorded.
    pub lap_times: Vec<f64>,
    pub collided: bool,
    pub steps: u64,
    pub max_abs_slip: f64,
}

/// Drives `env` from waypoint `start` until `laps` full laps, a collision or
/// the step cap. `on_step` sees every step.
pub fn run_episode(
    env: &mut RacingEnv,
    controller: &Controller,
    start: usize,
    mut on_step: impl FnMut(&RacingEnv, &Step),
) -> Result<RunResult> {
    let mut obs = env.reset_at(start)?;
    let mut max_abs_slip = env.state().slip.abs();
    loop {
        let out = controller.output(&obs)?;
        let step = env.step(out)?;
        max_abs_slip = max_abs_slip.max(step.state.slip.abs());
        on_step(env, &step);
        if step.done {
            return Ok(RunResult {
                start_index: start,
                lap_times: env.timer().full_lap_times(),
                collided: step.collided,
                steps: env.steps(),
                max_abs_slip,
            });
        }
        obs = step.obs;
    }
}

/// Environment settings for evaluating `laps` full laps.
pub fn eval_env_config(base: &EnvConfig, laps: usize, track: &Track) -> EnvConfig {
    let mut cfg = base.clone();
    cfg.laps_per_episode = laps;
    // Generous cap: 1 m/s average over the requested laps plus the lead-in.
    cfg.max_episode_steps = ((laps as f64 + 1.0) * track.line.length() * 100.0).ceil() as u64 + 1000;
    cfg
}

/// Start waypoints for a track; identical for every controller.
pub fn start_points(track: &Track, env: &EnvConfig, starts: usize, seed: u64, track_index: usize) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(track_index as u64 + 1);
    (0..starts)
        .map(|_| random_start(track, &env.vehicle, &mut rng).map(|(_, idx)| idx))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackEval {
    pub track: String,
    pub runs: Vec<RunResult>,
}

impl TrackEval {
    pub fn lap_times(&self) -> Vec<f64> {
        self.runs.iter().flat_map(|r| r.lap_times.iter().copied()).collect()
    }

    pub fn collisions(&self) -> usize {
        self.runs.iter().filter(|r| r.collided).count()
    }

    pub fn median(&self) -> Option<f64> {
        median(&self.lap_times())
    }

    pub fn max_abs_slip(&self) -> f64 {
        self.runs.iter().map(|r| r.max_abs_slip).fold(0.0, f64::max)
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub fn evaluate_track(
    track: &Track,
    track_index: usize,
    env_cfg: &EnvConfig,
    controller: &Controller,
    laps: usize,
    starts: usize,
    seed: u64,
) -> Result<TrackEval> {
    let cfg = eval_env_config(env_cfg, laps, track);
    let mut env = RacingEnv::new(track.clone(), cfg.clone(), seed)?;
    let runs = start_points(track, &cfg, starts, seed, track_index)?
        .into_iter()
        .map(|s| run_episode(&mut env, controller, s, |_, _| {}))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrackEval {
        track: track.name.clone(),
        runs,
    })
}

/// One report row; `rel_improvement = (base - rpl) / base`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub track: String,
    pub base_median: Option<f64>,
    pub rpl_median: Option<f64>,
    pub abs_improvement: Option<f64>,
    pub rel_improvement: Option<f64>,
    pub base_laps: Option<usize>,
    pub rpl_laps: Option<usize>,
    pub base_collisions: Option<usize>,
    pub rpl_collisions: Option<usize>,
    pub base_max_abs_slip: Option<f64>,
    pub rpl_max_abs_slip: Option<f64>,
}

impl ReportRow {
    pub fn new(track: &str, base: Option<&TrackEval>, rpl: Option<&TrackEval>) -> Self {
        let bm = base.and_then(TrackEval::median);
        let rm = rpl.and_then(TrackEval::median);
        Self::from_medians(track, bm, rm, base, rpl)
    }

    fn from_medians(
        track: &str,
        base_median: Option<f64>,
        rpl_median: Option<f64>,
        base: Option<&TrackEval>,
        rpl: Option<&TrackEval>,
    ) -> Self {
        let (abs_improvement, rel_improvement) = match (base_median, rpl_median) {
            (Some(b), Some(r)) => (Some(b - r), Some((b - r) / b)),
            _ => (None, None),
        };
        Self {
            track: track.to_string(),
            base_median,
            rpl_median,
            abs_improvement,
            rel_improvement,
            base_laps: base.map(|e| e.lap_times().len()),
            rpl_laps: rpl.map(|e| e.lap_times().len()),
            base_collisions: base.map(TrackEval::collisions),
            rpl_collisions: rpl.map(TrackEval::collisions),
            base_max_abs_slip: base.map(TrackEval::max_abs_slip),
            rpl_max_abs_slip: rpl.map(TrackEval::max_abs_slip),
        }
    }

    /// Averages of the per-track medians, over tracks where they exist.
    pub fn overall(rows: &[ReportRow]) -> Self {
        let avg = |f: fn(&ReportRow) -> Option<f64>| {
            let v: Vec<f64> = rows.iter().filter_map(f).collect();
            (!v.is_empty() && v.len() == rows.len()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let sum = |f: fn(&ReportRow) -> Option<usize>| rows.iter().map(f).sum::<Option<usize>>();
        let max = |f: fn(&ReportRow) -> Option<f64>| rows.iter().map(f).try_fold(0.0, |m, v| v.map(|v| f64::max(m, v)));
        let mut row = Self::from_medians("overall", avg(|r| r.base_median), avg(|r| r.rpl_median), None, None);
        row.base_laps = sum(|r| r.base_laps);
        row.rpl_laps = sum(|r| r.rpl_laps);
        row.base_collisions = sum(|r| r.base_collisions);
        row.rpl_collisions = sum(|r| r.rpl_collisions);
        row.base_max_abs_slip = max(|r| r.base_max_abs_slip);
        row.rpl_max_abs_slip = max(|r| r.rpl_max_abs_slip);
        row
    }
}

/// Writes rows as comma-separated text with a header.
pub fn write_report(rows: &[ReportRow], path: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush().map_err(io)
}
