//! Seedable simulation of RSSI-driven UAV localization, serving-UAV
//! capacity planning and mobile edge computing task offloading.

pub mod allocation;
pub mod baselines;
pub mod config;
pub mod dqn;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod localization;
pub mod mec_sim;
pub mod queueing;
pub mod radio;
pub mod rl_env;
pub mod scenario;

pub use error::{Error, Result};
