//! Versioned JSON checkpoints: named parameter arrays, the observation layout,
//! normalization statistics and, for resumable runs, optimizer and RNG state.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::policy::{NetworkConfig, ObsLayout, PolicyNetwork};
use crate::ppo::{Adam, RewardScaler, RunningStats};

pub const FORMAT: &str = "residual-racing-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    /// Row-major.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub seed: u64,
    pub global_step: u64,
    pub updates: u64,
    pub episodes: u64,
    pub optimizer: Adam,
    pub reward_scaler: RewardScaler,
    pub rng: ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub layout: ObsLayout,
    pub layout_descriptor: String,
    pub env: EnvConfig,
    pub network: NetworkConfig,
    pub arrays: Vec<NamedArray>,
    pub obs_stats: RunningStats,
    pub clip_obs: f64,
    pub training: Option<TrainingState>,
}

impl Checkpoint {
    pub fn new(
        net: &PolicyNetwork,
        env: &EnvConfig,
        obs_stats: &RunningStats,
        clip_obs: f64,
        training: Option<TrainingState>,
    ) -> Self {
        let layout = env.layout();
        let arrays = net
            .specs()
            .iter()
            .map(|s| NamedArray {
                name: s.name.clone(),
                shape: s.shape.clone(),
                values: net.params()[s.offset..s.offset + s.len()].to_vec(),
            })
            .collect();
        Self {
            format: FORMAT.into(),
            version: VERSION,
            layout_descriptor: layout.descriptor(),
            layout,
            env: env.clone(),
            network: net.config().clone(),
            arrays,
            obs_stats: obs_stats.clone(),
            clip_obs,
            training,
        }
    }

    /// Rebuilds the network, checking every array name and shape.
    pub fn network(&self) -> Result<PolicyNetwork> {
        let mut net = PolicyNetwork::zeroed(self.network.clone())?;
        if net.specs().len() != self.arrays.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} arrays, found {}",
                net.specs().len(),
                self.arrays.len()
            )));
        }
        let specs = net.specs().to_vec();
        for (spec, arr) in specs.iter().zip(&self.arrays) {
            if spec.name != arr.name || spec.shape != arr.shape || arr.values.len() != spec.len() {
                return Err(Error::Checkpoint(format!(
                    "array `{}` {:?} does not match `{}` {:?}",
                    arr.name, arr.shape, spec.name, spec.shape
                )));
            }
            net.params_mut()[spec.offset..spec.offset + spec.len()].copy_from_slice(&arr.values);
        }
        Ok(net)
    }

    fn check(&self) -> Result<()> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        if self.layout.descriptor() != self.layout_descriptor || self.layout != self.env.layout() {
            return Err(Error::Checkpoint("observation layout mismatch".into()));
        }
        if self.obs_stats.dim() != self.layout.dim() || self.network.input_dim() != self.layout.dim() {
            return Err(Error::Checkpoint("statistics or network width do not match the layout".into()));
        }
        Ok(())
    }

    /// Verifies the stored layout against the layout expected by the caller.
    pub fn expect_layout(&self, layout: &ObsLayout) -> Result<()> {
        if self.layout_descriptor != layout.descriptor() {
            return Err(Error::Checkpoint(format!(
                "checkpoint layout `{}` differs from `{}`",
                self.layout_descriptor,
                layout.descriptor()
            )));
        }
        Ok(())
    }

    /// Writes atomically via a temporary file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        let bytes = serde_json::to_vec(self)?;
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingAsset(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes)?;
        ckpt.check()?;
        Ok(ckpt)
    }
}
