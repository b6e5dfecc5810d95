//! PPO-Clip training: rollout storage, advantage estimation, running
//! normalization, the update step and the training loop.

pub mod buffer;
pub mod gae;
pub mod optim;
pub mod rollout;
pub mod stats;
pub mod train;
pub mod update;

pub use buffer::TransitionBatch;
pub use gae::compute_gae;
pub use optim::{clip_grad_norm, Adam};
pub use stats::{RewardScaler, RunningStats, STATS_EPS};
pub use update::{clip_bound, clipped_objective, ppo_update, surrogate_loss, LossParts, Minibatch, PpoConfig, UpdateReport};
pub use rollout::{collect_rollout, EpisodeSummary, VecEnv};
pub use train::{TrackSource, TrainConfig, TrainSummary, Trainer};
