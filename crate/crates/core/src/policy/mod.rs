//! Residual policy: observation assembly, network, action distribution,
//! residual composition and reward.

pub mod distribution;
pub mod network;
pub mod observation;
pub mod residual;
pub mod reward;

pub use distribution::{atanh, squash_correction, Sample, TanhNormal, SQUASH_EPS};
pub use network::{Cache, Forward, NetworkConfig, ParamSpec, PolicyNetwork};
pub use observation::{build_observation, vehicle_features, FrameHistory, ObsLayout, FRAME_STACK, VEHICLE_FEATURES};
pub use residual::{residual_compose, ResidualScale};
pub use reward::{compute_reward, RewardConfig};
