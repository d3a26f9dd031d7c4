//! Actor and critic networks.

use crate::env::{ActionMask, Observation, NUM_ACTIONS, OBS_DIM};
use crate::error::Result;
use crate::nn::{CategoricalDist, Mlp};
use crate::rng::StreamRng;

pub const HIDDEN_SIZES: [usize; 2] = [64, 64];
/// Keeps the untrained policy close to uniform.
pub const POLICY_OUTPUT_SCALE: f64 = 0.01;

pub fn actor_sizes() -> Vec<usize> {
    [&[OBS_DIM][..], &HIDDEN_SIZES, &[NUM_ACTIONS]].concat()
}

pub fn critic_sizes() -> Vec<usize> {
    [&[OBS_DIM][..], &HIDDEN_SIZES, &[1]].concat()
}

/// Policy network producing action logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Actor {
    pub net: Mlp,
}

impl Actor {
    pub fn init(rng: &mut StreamRng) -> Self {
        Self {
            net: Mlp::init(&actor_sizes(), POLICY_OUTPUT_SCALE, rng),
        }
    }

    pub fn distribution(&self, obs: &Observation, mask: &ActionMask) -> Result<CategoricalDist> {
        let logits = self.net.forward(obs)?;
        Ok(CategoricalDist::masked(&logits, Some(mask)))
    }

    pub fn greedy_action(&self, obs: &Observation, mask: &ActionMask) -> Result<usize> {
        Ok(self.distribution(obs, mask)?.greedy())
    }
}

/// State-value network.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    pub net: Mlp,
}

impl Critic {
    pub fn init(rng: &mut StreamRng) -> Self {
        Self {
            net: Mlp::init(&critic_sizes(), 1.0, rng),
        }
    }

    pub fn value(&self, obs: &Observation) -> Result<f64> {
        Ok(self.net.forward(obs)?[0])
    }
}
