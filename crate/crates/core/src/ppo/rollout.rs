use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::TransitionBatch;
use super::stats::{RewardScaler, RunningStats};
use crate::env::RacingEnv;
use crate::error::Result;
use crate::policy::{PolicyNetwork, TanhNormal};

/// Summary of a finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub env: usize,
    pub track: String,
    pub length: u64,
    /// Sum of unscaled rewards.
    pub episode_return: f64,
    /// Complete laps only.
    pub lap_times: Vec<f64>,
    pub collided: bool,
    pub truncated: bool,
    /// The simulation produced a non-finite state and the env was reset.
    pub diverged: bool,
}

/// A set of environments stepped in lockstep, in index order.
#[derive(Debug)]
pub struct VecEnv {
    pub envs: Vec<RacingEnv>,
    obs: Vec<Vec<f64>>,
    returns: Vec<f64>,
}

impl VecEnv {
    pub fn new(mut envs: Vec<RacingEnv>) -> Result<Self> {
        let obs = envs.iter_mut().map(|e| e.reset()).collect::<Result<Vec<_>>>()?;
        let returns = vec![0.0; envs.len()];
        Ok(Self { envs, obs, returns })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    /// Current raw observation of env `e`.
    pub fn obs(&self, e: usize) -> &[f64] {
        &self.obs[e]
    }

    fn summary(&self, e: usize, collided: bool, truncated: bool, diverged: bool) -> EpisodeSummary {
        let env = &self.envs[e];
        EpisodeSummary {
            env: e,
            track: env.track().name.clone(),
            length: env.steps(),
            episode_return: self.returns[e],
            lap_times: env.timer().full_lap_times(),
            collided,
            truncated,
            diverged,
        }
    }
}

/// Normalizes all current observations into one `[n_envs, dim]` matrix.
fn normalized(venv: &VecEnv, stats: &RunningStats, clip: f64, dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((venv.len(), dim));
    for (e, mut row) in m.rows_mut().into_iter().enumerate() {
        stats.normalize_into(&venv.obs[e], clip, row.as_slice_mut().expect("row-major"));
    }
    m
}

/// Collects `steps` transitions from every environment with a frozen policy.
/// Observation statistics are updated before each observation is normalized;
/// finished episodes reset in place.
#[allow(clippy::too_many_arguments)]
pub fn collect_rollout<R: Rng + ?Sized>(
    net: &PolicyNetwork,
    venv: &mut VecEnv,
    steps: usize,
    obs_stats: &mut RunningStats,
    reward_scaler: &mut RewardScaler,
    clip_obs: f64,
    rng: &mut R,
) -> Result<(TransitionBatch, Vec<EpisodeSummary>)> {
    let n = venv.len();
    let dim = net.config().input_dim();
    let act = net.config().action_dim;
    let mut batch = TransitionBatch::with_capacity(steps, n, dim, act);
    let mut episodes = Vec::new();
    let log_std = net.log_std().to_vec();

    for _ in 0..steps {
        for e in 0..n {
            obs_stats.update(&venv.obs[e]);
        }
        let obs = normalized(venv, obs_stats, clip_obs, dim);
        let fwd = net.forward(obs.view())?;
        for e in 0..n {
            let mean = fwd.mean.row(e);
            let sample = TanhNormal::new(mean.as_slice().expect("row-major"), &log_std).sample(rng);
            batch.obs.extend(obs.row(e).iter());
            batch.pre_squash.extend_from_slice(&sample.pre_squash);
            batch.actions.extend_from_slice(&sample.action);
            batch.log_probs.push(sample.log_prob);
            batch.values.push(fwd.value[e]);

            let out = [sample.action[0], sample.action[1]];
            let (raw, done) = match venv.envs[e].step(out) {
                Ok(step) => {
                    venv.returns[e] += step.reward;
                    if step.done {
                        episodes.push(venv.summary(e, step.collided, step.truncated, false));
                        venv.obs[e] = venv.envs[e].reset()?;
                        venv.returns[e] = 0.0;
                    } else {
                        venv.obs[e] = step.obs;
                    }
                    (step.reward, step.done)
                }
                Err(err) => {
                    log::warn!("env {e} diverged ({err}); resetting");
                    episodes.push(venv.summary(e, false, false, true));
                    venv.obs[e] = venv.envs[e].reset()?;
                    venv.returns[e] = 0.0;
                    (0.0, true)
                }
            };
            batch.raw_rewards.push(raw);
            batch.rewards.push(reward_scaler.scale(e, raw, done));
            batch.dones.push(done);
        }
        batch.steps += 1;
    }
    let obs = normalized(venv, obs_stats, clip_obs, dim);
    batch.last_values = net.forward(obs.view())?.value.to_vec();
    Ok((batch, episodes))
}
