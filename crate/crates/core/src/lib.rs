//! Residual policy learning for autonomous racing: a single-track vehicle
//! simulator with lidar, a pure pursuit base controller, and a PPO-trained
//! residual policy on top of it.

pub mod checkpoint;
pub mod env;
pub mod error;
pub mod lidar;
pub mod policy;
pub mod ppo;
pub mod pursuit;
pub mod track;
pub mod vehicle;

pub use error::{Error, Result};
