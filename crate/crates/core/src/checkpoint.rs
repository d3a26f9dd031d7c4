//! Versioned JSON checkpoints.
//!
//! Layout (version 1):
//!
//! ```json
//! {
//!   "format": "lulc-ppo-checkpoint",
//!   "version": 1,
//!   "payload_sha256": "<hex digest of the serialized payload>",
//!   "payload": {
//!     "architecture": { "obs_dim": 15, "hidden": [64, 64], "num_actions": 7,
//!                       "activation": "tanh" },
//!     "seed": 7,
//!     "updates_completed": 200,
//!     "actor_params": [...], "critic_params": [...],
//!     "actor_optimizer": { "config": {...}, "step": 3200,
//!                          "first_moment": [...], "second_moment": [...] },
//!     "critic_optimizer": { ... },
//!     "update_rng": { "s": [u64, u64, u64, u64] },
//!     "worker_rngs": [ { "s": [...] }, ... ]
//!   }
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so every 64-bit weight is
//! restored exactly. The digest covers the compact serialization of the
//! payload object in the field order above.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{actor_sizes, critic_sizes, Actor, Critic, HIDDEN_SIZES};
use crate::env::{NUM_ACTIONS, OBS_DIM};
use crate::error::{Error, Result};
use crate::fsio::{sha256_hex, write_atomic};
use crate::nn::{AdamState, Mlp};
use crate::ppo::{Optimizers, Trainer};
use crate::rng::StreamRng;

pub const CHECKPOINT_FORMAT: &str = "lulc-ppo-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
    pub num_actions: usize,
    pub activation: String,
}

impl Architecture {
    pub fn current() -> Self {
        Self {
            obs_dim: OBS_DIM,
            hidden: HIDDEN_SIZES.to_vec(),
            num_actions: NUM_ACTIONS,
            activation: "tanh".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub architecture: Architecture,
    pub seed: u64,
    pub updates_completed: u64,
    pub actor_params: Vec<f64>,
    pub critic_params: Vec<f64>,
    pub actor_optimizer: AdamState,
    pub critic_optimizer: AdamState,
    pub update_rng: StreamRng,
    pub worker_rngs: Vec<StreamRng>,
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    format: &'static str,
    version: u32,
    payload_sha256: String,
    payload: &'a Checkpoint,
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer) -> Self {
        Self {
            architecture: Architecture::current(),
            seed: trainer.seed,
            updates_completed: trainer.updates_completed,
            actor_params: trainer.actor.net.params().to_vec(),
            critic_params: trainer.critic.net.params().to_vec(),
            actor_optimizer: trainer.optimizers.actor.clone(),
            critic_optimizer: trainer.optimizers.critic.clone(),
            update_rng: trainer.update_rng.clone(),
            worker_rngs: trainer.workers.iter().map(|w| w.rng.clone()).collect(),
        }
    }

    pub fn actor(&self) -> Result<Actor> {
        Ok(Actor {
            net: Mlp::from_params(&actor_sizes(), self.actor_params.clone())?,
        })
    }

    pub fn critic(&self) -> Result<Critic> {
        Ok(Critic {
            net: Mlp::from_params(&critic_sizes(), self.critic_params.clone())?,
        })
    }

    pub fn optimizers(&self) -> Optimizers {
        Optimizers {
            actor: self.actor_optimizer.clone(),
            critic: self.critic_optimizer.clone(),
        }
    }

    fn payload_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("checkpoint payload serializes")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let envelope = EnvelopeOut {
            format: CHECKPOINT_FORMAT,
            version: CHECKPOINT_VERSION,
            payload_sha256: sha256_hex(&self.payload_bytes()),
            payload: self,
        };
        let mut bytes = serde_json::to_vec(&envelope).expect("checkpoint serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |field: &'static str, detail: String| Error::Checkpoint { field, detail };
        let doc: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| fail("document", format!("not valid JSON: {e}")))?;
        let obj = doc
            .as_object()
            .ok_or_else(|| fail("document", "top level is not an object".into()))?;

        match obj.get("format").and_then(|v| v.as_str()) {
            Some(CHECKPOINT_FORMAT) => {}
            other => return Err(fail("format", format!("expected `{CHECKPOINT_FORMAT}`, found {other:?}"))),
        }
        match obj.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == CHECKPOINT_VERSION as u64 => {}
            other => return Err(fail("version", format!("expected {CHECKPOINT_VERSION}, found {other:?}"))),
        }
        let digest = obj
            .get("payload_sha256")
            .and_then(|v| v.as_str())
            .ok_or_else(|| fail("payload_sha256", "missing".into()))?;
        let payload = obj
            .get("payload")
            .ok_or_else(|| fail("payload", "missing".into()))?;
        let checkpoint: Checkpoint = serde_json::from_value(payload.clone())
            .map_err(|e| fail("payload", format!("malformed: {e}")))?;

        let actual = sha256_hex(&checkpoint.payload_bytes());
        if actual != digest {
            return Err(fail(
                "payload_sha256",
                format!("recorded {digest}, computed {actual}"),
            ));
        }
        checkpoint.validate()?;
        Ok(checkpoint)
    }

    /// Checks the architecture descriptor and parameter shapes against this
    /// build.
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &'static str, detail: String| Error::Checkpoint { field, detail };
        let expected = Architecture::current();
        if self.architecture != expected {
            return Err(fail(
                "architecture",
                format!("checkpoint has {:?}, this build expects {:?}", self.architecture, expected),
            ));
        }
        let actor_len = Mlp::zeros(&actor_sizes()).num_params();
        let critic_len = Mlp::zeros(&critic_sizes()).num_params();
        if self.actor_params.len() != actor_len {
            return Err(fail(
                "actor_params",
                format!("expected {actor_len} values, found {}", self.actor_params.len()),
            ));
        }
        if self.critic_params.len() != critic_len {
            return Err(fail(
                "critic_params",
                format!("expected {critic_len} values, found {}", self.critic_params.len()),
            ));
        }
        if self.actor_optimizer.first_moment.len() != actor_len
            || self.actor_optimizer.second_moment.len() != actor_len
        {
            return Err(fail("actor_optimizer", "moment shapes do not match parameters".into()));
        }
        if self.critic_optimizer.first_moment.len() != critic_len
            || self.critic_optimizer.second_moment.len() != critic_len
        {
            return Err(fail("critic_optimizer", "moment shapes do not match parameters".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::ppo::PpoConfig;
    use crate::runoff::{CoefficientTable, LulcClass, LulcGrid};

    fn trainer() -> Trainer {
        let grid = LulcGrid::new(2, 1, vec![LulcClass::Urban, LulcClass::Forest], 900.0).unwrap();
        let cfg = PpoConfig {
            rollout_horizon: 32,
            minibatch_size: 16,
            total_updates: 1,
            ..Default::default()
        };
        let mut t = Trainer::new(grid, CoefficientTable::default(), EnvConfig::default(), cfg, 5).unwrap();
        t.run_update().unwrap();
        t
    }

    #[test]
    fn round_trip_is_exact() {
        let cp = Checkpoint::from_trainer(&trainer());
        let bytes = cp.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, cp);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.actor().unwrap().net.params(), cp.actor_params.as_slice());
    }

    fn field_of(err: Error) -> &'static str {
        match err {
            Error::Checkpoint { field, .. } => field,
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn corruption_names_the_failed_field() {
        let cp = Checkpoint::from_trainer(&trainer());
        let text = String::from_utf8(cp.to_bytes()).unwrap();

        let truncated = &text[..text.len() / 2];
        assert_eq!(field_of(Checkpoint::from_bytes(truncated.as_bytes()).unwrap_err()), "document");

        let wrong_format = text.replacen(CHECKPOINT_FORMAT, "something-else", 1);
        assert_eq!(field_of(Checkpoint::from_bytes(wrong_format.as_bytes()).unwrap_err()), "format");

        let wrong_version = text.replacen("\"version\":1", "\"version\":9", 1);
        assert_eq!(field_of(Checkpoint::from_bytes(wrong_version.as_bytes()).unwrap_err()), "version");

        // flip one weight
        let idx = text.find("\"actor_params\":[").unwrap() + "\"actor_params\":[".len();
        let end = idx + text[idx..].find(',').unwrap();
        let tampered = format!("{}{}{}", &text[..idx], "0.123456", &text[end..]);
        assert_eq!(field_of(Checkpoint::from_bytes(tampered.as_bytes()).unwrap_err()), "payload_sha256");
    }

    #[test]
    fn architecture_mismatch_is_rejected() {
        let mut cp = Checkpoint::from_trainer(&trainer());
        cp.architecture.hidden = vec![32, 32];
        let bytes = cp.to_bytes();
        assert_eq!(field_of(Checkpoint::from_bytes(&bytes).unwrap_err()), "architecture");
    }
}
