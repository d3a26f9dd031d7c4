//! Reinforcement learning of land-use/land-cover change for runoff reduction.
//!
//! The crate bundles a rational-method runoff model over a class raster, a
//! cursor-scan environment on top of it, a small hand-differentiated MLP and a
//! PPO trainer, plus the scenario comparison and transition-matrix reports.

pub mod agent;
pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod fsio;
pub mod manifest;
pub mod nn;
pub mod ppo;
pub mod raster;
pub mod rng;
pub mod runoff;
pub mod scenario;
pub mod seed_grid;

pub use error::{Error, Result};
