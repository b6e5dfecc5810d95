use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::gae::compute_gae;
use super::optim::Adam;
use super::rollout::{collect_rollout, EpisodeSummary, VecEnv};
use super::stats::{RewardScaler, RunningStats};
use super::update::{ppo_update, PpoConfig, UpdateReport};
use crate::checkpoint::{Checkpoint, TrainingState};
use crate::env::{EnvConfig, RacingEnv};
use crate::error::{Error, Result};
use crate::policy::{NetworkConfig, PolicyNetwork};
use crate::track::synth::{self, SynthSpec};
use crate::track::{ColumnMap, Track, TrackSpec};
use crate::vehicle::VehicleParams;

/// A track given either by map and racing-line files or procedurally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSource {
    pub name: String,
    #[serde(default)]
    pub map: Option<PathBuf>,
    #[serde(default)]
    pub line: Option<PathBuf>,
    #[serde(default)]
    pub columns: ColumnMap,
    #[serde(default)]
    pub synthetic: Option<SynthSpec>,
}

impl TrackSource {
    /// Loads the track; relative file paths resolve against `base`.
    pub fn load(&self, base: &Path, params: &VehicleParams) -> Result<Track> {
        match (&self.synthetic, &self.map, &self.line) {
            (Some(spec), None, None) => synth::build(&self.name, spec),
            (None, Some(map), Some(line)) => {
                let spec = TrackSpec {
                    name: self.name.clone(),
                    map: map.clone(),
                    line: line.clone(),
                    columns: self.columns.clone(),
                };
                Track::load(&spec.resolved(base), params)
            }
            _ => Err(Error::Config(format!(
                "track `{}` needs either `synthetic` or both `map` and `line`",
                self.name
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    /// Environment steps summed over all environments.
    pub total_steps: u64,
    pub n_envs: usize,
    pub rollout_steps: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_obs: f64,
    pub clip_reward: f64,
    /// Checkpoint period in updates; zero writes only the final checkpoint.
    pub checkpoint_every: u64,
    pub output_dir: PathBuf,
    /// Environment `i` runs on track `i mod tracks.len()`.
    pub tracks: Vec<TrackSource>,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    /// Input sizes are taken from the observation layout.
    pub network: NetworkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            total_steps: 10_000_000,
            n_envs: 36,
            rollout_steps: 2048,
            gamma: 0.998,
            gae_lambda: 0.95,
            clip_obs: 10.0,
            clip_reward: 10.0,
            checkpoint_every: 25,
            output_dir: PathBuf::from("runs/train"),
            tracks: Vec::new(),
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            network: NetworkConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.sync_network();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative track paths and the output directory
    /// resolve against the file's directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        if !path.exists() {
            return Err(Error::MissingAsset(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok((cfg, base))
    }

    fn sync_network(&mut self) {
        let layout = self.env.layout();
        self.network.lidar_len = layout.lidar;
        self.network.aux_len = layout.aux_dim();
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ppo.validate()?;
        if self.tracks.is_empty() {
            return Err(Error::Config("no tracks configured".into()));
        }
        if self.n_envs == 0 || self.rollout_steps == 0 {
            return Err(Error::Config("n_envs and rollout_steps must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::Config("gamma must lie in (0, 1] and lambda in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn steps_per_update(&self) -> u64 {
        (self.n_envs * self.rollout_steps) as u64
    }

    pub fn num_updates(&self) -> u64 {
        (self.total_steps / self.steps_per_update()).max(1)
    }
}

/// Seed of environment `e` after `updates` completed updates.
fn env_seed(seed: u64, e: usize, updates: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((e as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(updates.wrapping_mul(0x94D0_49BB_1331_11EB))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub updates: u64,
    pub global_step: u64,
    pub episodes: u64,
    pub final_checkpoint: PathBuf,
}

pub struct Trainer {
    cfg: TrainConfig,
    net: PolicyNetwork,
    adam: Adam,
    obs_stats: RunningStats,
    reward_scaler: RewardScaler,
    venv: VecEnv,
    rng: ChaCha8Rng,
    global_step: u64,
    updates: u64,
    episodes: u64,
    metrics: Option<BufWriter<File>>,
}

impl Trainer {
    /// Loads every track before anything else so asset errors surface early.
    pub fn new(cfg: TrainConfig, base: &Path) -> Result<Self> {
        let tracks = Self::load_tracks(&cfg, base)?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        init_rng.set_stream(1);
        let net = PolicyNetwork::new(cfg.network.clone(), &mut init_rng)?;
        let adam = Adam::new(net.num_params(), cfg.ppo.adam_eps);
        let obs_stats = RunningStats::new(cfg.env.layout().dim());
        let reward_scaler = RewardScaler::new(cfg.n_envs, cfg.gamma, cfg.clip_reward);
        let venv = Self::make_envs(&cfg, &tracks, 0)?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            cfg,
            net,
            adam,
            obs_stats,
            reward_scaler,
            venv,
            rng,
            global_step: 0,
            updates: 0,
            episodes: 0,
            metrics: None,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::run`].
    pub fn resume(cfg: TrainConfig, base: &Path, ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_layout(&cfg.env.layout())?;
        let state = ckpt
            .training
            .as_ref()
            .ok_or_else(|| Error::Checkpoint("checkpoint has no training state".into()))?;
        let tracks = Self::load_tracks(&cfg, base)?;
        let net = ckpt.network()?;
        if net.config() != &cfg.network {
            return Err(Error::Checkpoint("network configuration differs from the config file".into()));
        }
        if state.reward_scaler.returns.len() != cfg.n_envs {
            return Err(Error::Checkpoint("environment count differs from the checkpoint".into()));
        }
        let venv = Self::make_envs(&cfg, &tracks, state.updates)?;
        Ok(Self {
            net,
            adam: state.optimizer.clone(),
            obs_stats: ckpt.obs_stats.clone(),
            reward_scaler: state.reward_scaler.clone(),
            venv,
            rng: state.rng.clone(),
            global_step: state.global_step,
            updates: state.updates,
            episodes: state.episodes,
            metrics: None,
            cfg,
        })
    }

    fn load_tracks(cfg: &TrainConfig, base: &Path) -> Result<Vec<Track>> {
        cfg.tracks.iter().map(|t| t.load(base, &cfg.env.vehicle)).collect()
    }

    fn make_envs(cfg: &TrainConfig, tracks: &[Track], updates: u64) -> Result<VecEnv> {
        let envs = (0..cfg.n_envs)
            .map(|e| {
                let track = tracks[e % tracks.len()].clone();
                RacingEnv::new(track, cfg.env.clone(), env_seed(cfg.seed, e, updates))
            })
            .collect::<Result<Vec<_>>>()?;
        VecEnv::new(envs)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn network(&self) -> &PolicyNetwork {
        &self.net
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            &self.net,
            &self.cfg.env,
            &self.obs_stats,
            self.cfg.clip_obs,
            Some(TrainingState {
                seed: self.cfg.seed,
                global_step: self.global_step,
                updates: self.updates,
                episodes: self.episodes,
                optimizer: self.adam.clone(),
                reward_scaler: self.reward_scaler.clone(),
                rng: self.rng.clone(),
            }),
        )
    }

    fn write_metric(&mut self, value: serde_json::Value) -> Result<()> {
        let path = self.cfg.output_dir.join("metrics.jsonl");
        let w = self.metrics.as_mut().expect("metrics open");
        writeln!(w, "{value}").map_err(|e| Error::io(&path, e))
    }

    fn save_checkpoint(&self, name: &str) -> Result<PathBuf> {
        let path = self.cfg.output_dir.join(name);
        let ckpt = self.checkpoint();
        if let Err(first) = ckpt.save(&path) {
            log::warn!("checkpoint write failed ({first}); retrying");
            ckpt.save(&path)?;
        }
        Ok(path)
    }

    /// One rollout followed by one update phase.
    pub fn iterate(&mut self) -> Result<(UpdateReport, Vec<EpisodeSummary>)> {
        let num_updates = self.cfg.num_updates();
        let frac = 1.0 - self.updates as f64 / num_updates as f64;
        let lr = if self.cfg.ppo.anneal_lr {
            self.cfg.ppo.learning_rate * frac.max(0.0)
        } else {
            self.cfg.ppo.learning_rate
        };
        let (batch, episodes) = collect_rollout(
            &self.net,
            &mut self.venv,
            self.cfg.rollout_steps,
            &mut self.obs_stats,
            &mut self.reward_scaler,
            self.cfg.clip_obs,
            &mut self.rng,
        )?;
        self.global_step += batch.len() as u64;
        let (adv, ret) = compute_gae(
            &batch.rewards,
            &batch.values,
            &batch.dones,
            &batch.last_values,
            self.cfg.gamma,
            self.cfg.gae_lambda,
        );
        let report = ppo_update(
            &mut self.net,
            &mut self.adam,
            &batch,
            &adv,
            &ret,
            &self.cfg.ppo,
            lr,
            &mut self.rng,
        )?;
        self.updates += 1;
        self.episodes += episodes.len() as u64;
        Ok((report, episodes))
    }

    /// Trains until the step budget, writing `metrics.jsonl`, periodic
    /// `checkpoint_<update>.json` files and `final.json` into the output directory.
    pub fn run(&mut self) -> Result<TrainSummary> {
        let dir = self.cfg.output_dir.clone();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let metrics_path = dir.join("metrics.jsonl");
        let file = if self.updates == 0 {
            File::create(&metrics_path)
        } else {
            OpenOptions::new().append(true).create(true).open(&metrics_path)
        }
        .map_err(|e| Error::io(&metrics_path, e))?;
        self.metrics = Some(BufWriter::new(file));

        let num_updates = self.cfg.num_updates();
        while self.updates < num_updates {
            let (report, episodes) = self.iterate()?;
            let mut returns = Vec::with_capacity(episodes.len());
            for ep in &episodes {
                returns.push(ep.episode_return);
                let rec = json!({
                    "kind": "episode",
                    "step": self.global_step,
                    "env": ep.env,
                    "track": ep.track,
                    "return": ep.episode_return,
                    "length": ep.length,
                    "lap_times": ep.lap_times,
                    "collided": ep.collided,
                    "truncated": ep.truncated,
                    "diverged": ep.diverged,
                });
                self.write_metric(rec)?;
            }
            let mean_return = (!returns.is_empty()).then(|| returns.iter().sum::<f64>() / returns.len() as f64);
            let rec = json!({
                "kind": "update",
                "step": self.global_step,
                "update": self.updates,
                "episodes": episodes.len(),
                "mean_episode_return": mean_return,
                "policy_loss": report.policy_loss,
                "value_loss": report.value_loss,
                "entropy": report.entropy,
                "approx_kl": report.approx_kl,
                "clip_fraction": report.clip_fraction,
                "grad_steps": report.steps,
                "epochs": report.epochs,
                "early_stopped": report.early_stopped,
                "aborted": report.aborted,
            });
            self.write_metric(rec)?;
            log::info!(
                "update {}/{} step {} episodes {} mean return {:?} kl {:.4}",
                self.updates,
                num_updates,
                self.global_step,
                episodes.len(),
                mean_return,
                report.approx_kl
            );
            if self.cfg.checkpoint_every > 0 && self.updates % self.cfg.checkpoint_every == 0 {
                self.save_checkpoint(&format!("checkpoint_{:05}.json", self.updates))?;
            }
        }
        if let Some(w) = self.metrics.as_mut() {
            w.flush().map_err(|e| Error::io(&metrics_path, e))?;
        }
        let final_checkpoint = self.save_checkpoint("final.json")?;
        Ok(TrainSummary {
            updates: self.updates,
            global_step: self.global_step,
            episodes: self.episodes,
            final_checkpoint,
        })
    }
}
