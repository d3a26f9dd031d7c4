//! Proximal policy optimization with a clipped surrogate.
//!
//! Each update collects `rollout_horizon` transitions (split across workers),
//! computes GAE advantages per worker segment, normalizes them over the whole
//! batch and runs `epochs_per_update` passes of shuffled minibatches.

use serde::{Deserialize, Serialize};

use crate::agent::{Actor, Critic};
use crate::env::{ActionMask, EnvConfig, LulcEnv, Observation};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, CategoricalDist};
use crate::rng::{self, StreamRng};
use crate::runoff::{CoefficientTable, LulcGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub rollout_horizon: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub total_updates: u64,
    /// Write a checkpoint every this many updates; 0 writes only the final one.
    pub checkpoint_every: u64,
    pub workers: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            epochs_per_update: 4,
            minibatch_size: 256,
            rollout_horizon: 2048,
            value_coef: 0.5,
            entropy_coef: 0.01,
            learning_rate: adam.learning_rate,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_epsilon: adam.epsilon,
            total_updates: 200,
            checkpoint_every: 50,
            workers: 1,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("ppo.{msg}")));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if self.epochs_per_update == 0 || self.minibatch_size == 0 || self.rollout_horizon == 0 {
            return bad("epochs_per_update, minibatch_size and rollout_horizon must be positive");
        }
        if self.workers == 0 || self.workers > self.rollout_horizon {
            return bad("workers must be between 1 and rollout_horizon");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.value_coef >= 0.0 && self.entropy_coef >= 0.0) {
            return bad("value_coef and entropy_coef must be non-negative");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeSummary {
    pub total_reward: f64,
    pub final_runoff_m3_per_s: f64,
}

/// Transitions from one environment, in time order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBuffer {
    pub observations: Vec<Observation>,
    pub masks: Vec<ActionMask>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of the state after the last transition; zero if it was terminal.
    pub bootstrap_value: f64,
    pub completed_episodes: Vec<EpisodeSummary>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Per-environment state that persists across updates.
#[derive(Clone, Debug)]
pub struct RolloutWorker {
    pub env: LulcEnv,
    pub rng: StreamRng,
    episode_reward: f64,
}

impl RolloutWorker {
    pub fn new(env: LulcEnv, rng: StreamRng) -> Self {
        Self {
            env,
            rng,
            episode_reward: 0.0,
        }
    }

    /// Step the environment `horizon` times with sampled, masked actions.
    /// Finished episodes are reset in place.
    pub fn collect(&mut self, actor: &Actor, critic: &Critic, horizon: usize) -> Result<RolloutBuffer> {
        let mut buf = RolloutBuffer::default();
        if self.env.is_done() {
            self.env.reset()?;
            self.episode_reward = 0.0;
        }
        let mut obs = self.env.observation();
        for _ in 0..horizon {
            let mask = self.env.action_mask();
            let dist = actor.distribution(&obs, &mask)?;
            let (action, log_prob) = dist.sample(&mut self.rng);
            let value = critic.value(&obs)?;
            let out = self.env.step(action)?;
            self.episode_reward += out.reward;

            buf.observations.push(obs);
            buf.masks.push(mask);
            buf.actions.push(action);
            buf.log_probs.push(log_prob);
            buf.rewards.push(out.reward);
            buf.values.push(value);
            buf.dones.push(out.done);

            obs = if out.done {
                buf.completed_episodes.push(EpisodeSummary {
                    total_reward: self.episode_reward,
                    final_runoff_m3_per_s: self.env.state().current_runoff_m3_per_s,
                });
                self.episode_reward = 0.0;
                self.env.reset()?
            } else {
                out.observation
            };
        }
        buf.bootstrap_value = if buf.dones.last() == Some(&true) {
            0.0
        } else {
            critic.value(&obs)?
        };
        Ok(buf)
    }
}

pub fn collect_rollout(
    env: &mut LulcEnv,
    actor: &Actor,
    critic: &Critic,
    horizon: usize,
    rng: &mut StreamRng,
) -> Result<RolloutBuffer> {
    let mut worker = RolloutWorker::new(env.clone(), rng.clone());
    let buf = worker.collect(actor, critic, horizon)?;
    *env = worker.env;
    *rng = worker.rng;
    Ok(buf)
}

/// Generalized advantage estimates and value targets (`advantages + values`).
pub fn compute_gae(buffer: &RolloutBuffer, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = buffer.len();
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let not_done = if buffer.dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n {
            buffer.values[t + 1]
        } else {
            buffer.bootstrap_value
        };
        let delta = buffer.rewards[t] + gamma * next_value * not_done - buffer.values[t];
        running = delta + gamma * lambda * not_done * running;
        advantages[t] = running;
    }
    let returns = advantages
        .iter()
        .zip(&buffer.values)
        .map(|(a, v)| a + v)
        .collect();
    (advantages, returns)
}

/// Shift to zero mean and scale to unit standard deviation.
pub fn normalize_advantages(advantages: &mut [f64]) {
    let n = advantages.len();
    if n == 0 {
        return;
    }
    let mean = advantages.iter().sum::<f64>() / n as f64;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    for a in advantages.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}

/// Per-sample clipped objective `min(r A, clip(r, 1-eps, 1+eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Flattened training batch.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub observations: Vec<Observation>,
    pub masks: Vec<ActionMask>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Concatenate segments after computing GAE on each one separately.
    pub fn from_rollouts(rollouts: &[RolloutBuffer], gamma: f64, lambda: f64) -> Self {
        let mut batch = Batch::default();
        for buf in rollouts {
            let (adv, ret) = compute_gae(buf, gamma, lambda);
            batch.observations.extend_from_slice(&buf.observations);
            batch.masks.extend_from_slice(&buf.masks);
            batch.actions.extend_from_slice(&buf.actions);
            batch.old_log_probs.extend_from_slice(&buf.log_probs);
            batch.advantages.extend(adv);
            batch.returns.extend(ret);
        }
        batch
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateLosses {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Optimizer state for the two networks.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizers {
    pub actor: AdamState,
    pub critic: AdamState,
}

impl Optimizers {
    pub fn new(config: AdamConfig, actor: &Actor, critic: &Critic) -> Self {
        Self {
            actor: AdamState::new(config, actor.net.num_params()),
            critic: AdamState::new(config, critic.net.num_params()),
        }
    }
}

/// Run the clipped-surrogate epochs over `batch`. Advantages are used as
/// given; normalize them beforehand.
pub fn ppo_update(
    actor: &mut Actor,
    critic: &mut Critic,
    optimizers: &mut Optimizers,
    batch: &Batch,
    cfg: &PpoConfig,
    rng: &mut StreamRng,
    update: u64,
) -> Result<UpdateLosses> {
    let n = batch.len();
    if n == 0 {
        return Ok(UpdateLosses::default());
    }
    let eps = cfg.clip_epsilon;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut actor_grads = vec![0.0; actor.net.num_params()];
    let mut critic_grads = vec![0.0; critic.net.num_params()];
    let (mut sum_pi, mut sum_v, mut sum_h, mut clipped, mut seen) = (0.0, 0.0, 0.0, 0usize, 0usize);

    for _ in 0..cfg.epochs_per_update {
        rng::shuffle(rng, &mut indices);
        for chunk in indices.chunks(cfg.minibatch_size.min(n)) {
            let m = chunk.len() as f64;
            actor_grads.fill(0.0);
            critic_grads.fill(0.0);
            let (mut mb_pi, mut mb_v, mut mb_h) = (0.0, 0.0, 0.0);

            for &i in chunk {
                let obs = &batch.observations[i];
                let trace = actor.net.forward_trace(obs)?;
                let dist = CategoricalDist::masked(trace.output(), Some(&batch.masks[i]));
                let action = batch.actions[i];
                let adv = batch.advantages[i];
                let ratio = (dist.log_prob(action) - batch.old_log_probs[i]).exp();
                let surrogate = clipped_surrogate(ratio, adv, eps);
                let entropy = dist.entropy();
                mb_pi -= surrogate;
                mb_h += entropy;
                if (ratio - 1.0).abs() > eps {
                    clipped += 1;
                }

                // d(-surrogate)/d(log_prob) is -ratio*A when the unclipped term is
                // the minimum and zero when the clipped constant is
                let dloss_dlogp = if ratio * adv <= ratio.clamp(1.0 - eps, 1.0 + eps) * adv {
                    -ratio * adv
                } else {
                    0.0
                };
                let glp = dist.log_prob_grad(action);
                let gh = dist.entropy_grad();
                let logit_grad: Vec<f64> = glp
                    .iter()
                    .zip(&gh)
                    .map(|(lp, h)| (dloss_dlogp * lp - cfg.entropy_coef * h) / m)
                    .collect();
                actor.net.backward_trace(&trace, &logit_grad, &mut actor_grads)?;

                let vtrace = critic.net.forward_trace(obs)?;
                let err = vtrace.output()[0] - batch.returns[i];
                mb_v += err * err;
                critic
                    .net
                    .backward_trace(&vtrace, &[2.0 * cfg.value_coef * err / m], &mut critic_grads)?;
            }

            let total = (mb_pi + cfg.value_coef * mb_v - cfg.entropy_coef * mb_h) / m;
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    update,
                    detail: format!(
                        "policy loss {}, value loss {}, entropy {}",
                        mb_pi / m,
                        mb_v / m,
                        mb_h / m
                    ),
                });
            }
            if !actor_grads.iter().chain(&critic_grads).all(|g| g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    update,
                    detail: "gradient contains NaN or infinity".into(),
                });
            }
            optimizers.actor.update(actor.net.params_mut(), &actor_grads)?;
            optimizers.critic.update(critic.net.params_mut(), &critic_grads)?;
            if !(actor.net.is_finite() && critic.net.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    update,
                    detail: "parameters became non-finite after the optimizer step".into(),
                });
            }

            sum_pi += mb_pi;
            sum_v += mb_v;
            sum_h += mb_h;
            seen += chunk.len();
        }
    }

    let seen_f = seen as f64;
    Ok(UpdateLosses {
        policy_loss: sum_pi / seen_f,
        value_loss: sum_v / seen_f,
        entropy: sum_h / seen_f,
        clip_fraction: clipped as f64 / seen_f,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainStats {
    pub update: u64,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    /// Runoff at the end of the most recently finished episode (any worker);
    /// the current working runoff if no episode has finished yet.
    pub final_episode_runoff_m3_per_s: f64,
    pub episodes_completed: u64,
}

impl TrainStats {
    pub const CSV_HEADER: &'static str = "update,mean_reward,policy_loss,value_loss,entropy,clip_fraction,final_episode_runoff_m3_per_s,episodes_completed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.update,
            self.mean_reward,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.clip_fraction,
            self.final_episode_runoff_m3_per_s,
            self.episodes_completed
        )
    }
}

pub fn stats_csv(stats: &[TrainStats]) -> String {
    let mut out = String::from(TrainStats::CSV_HEADER);
    out.push('\n');
    for s in stats {
        out.push_str(&s.csv_row());
        out.push('\n');
    }
    out
}

/// Owns networks, optimizers, RNG streams and environments for a run.
///
/// Stream 0 of the run seed initializes the networks and shuffles minibatches;
/// stream `w + 1` drives worker `w`.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: PpoConfig,
    pub seed: u64,
    pub actor: Actor,
    pub critic: Critic,
    pub optimizers: Optimizers,
    pub update_rng: StreamRng,
    pub workers: Vec<RolloutWorker>,
    pub updates_completed: u64,
    episodes_completed: u64,
    last_episode_runoff: Option<f64>,
}

impl Trainer {
    pub fn new(
        grid: LulcGrid,
        table: CoefficientTable,
        env_config: EnvConfig,
        config: PpoConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let env = LulcEnv::new(grid, env_config, table)?;
        let mut update_rng = rng::stream(seed, 0);
        let actor = Actor::init(&mut update_rng);
        let critic = Critic::init(&mut update_rng);
        let optimizers = Optimizers::new(config.adam(), &actor, &critic);
        let workers = (0..config.workers)
            .map(|w| RolloutWorker::new(env.clone(), rng::stream(seed, w + 1)))
            .collect();
        Ok(Self {
            config,
            seed,
            actor,
            critic,
            optimizers,
            update_rng,
            workers,
            updates_completed: 0,
            episodes_completed: 0,
            last_episode_runoff: None,
        })
    }

    fn worker_horizons(&self) -> Vec<usize> {
        let w = self.workers.len();
        let h = self.config.rollout_horizon;
        (0..w).map(|i| h / w + usize::from(i < h % w)).collect()
    }

    fn collect_all(&mut self) -> Result<Vec<RolloutBuffer>> {
        let horizons = self.worker_horizons();
        let (actor, critic) = (&self.actor, &self.critic);
        if self.workers.len() == 1 {
            return Ok(vec![self.workers[0].collect(actor, critic, horizons[0])?]);
        }
        std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .workers
                .iter_mut()
                .zip(&horizons)
                .map(|(worker, &h)| scope.spawn(move || worker.collect(actor, critic, h)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("rollout worker panicked"))
                .collect()
        })
    }

    pub fn run_update(&mut self) -> Result<TrainStats> {
        let update = self.updates_completed + 1;
        let rollouts = self.collect_all()?;

        let steps: usize = rollouts.iter().map(RolloutBuffer::len).sum();
        let reward_sum: f64 = rollouts.iter().flat_map(|b| &b.rewards).sum();
        for buf in &rollouts {
            self.episodes_completed += buf.completed_episodes.len() as u64;
            if let Some(last) = buf.completed_episodes.last() {
                self.last_episode_runoff = Some(last.final_runoff_m3_per_s);
            }
        }

        let mut batch = Batch::from_rollouts(&rollouts, self.config.gamma, self.config.gae_lambda);
        normalize_advantages(&mut batch.advantages);
        let losses = ppo_update(
            &mut self.actor,
            &mut self.critic,
            &mut self.optimizers,
            &batch,
            &self.config,
            &mut self.update_rng,
            update,
        )?;
        self.updates_completed = update;

        let final_runoff = self
            .last_episode_runoff
            .unwrap_or_else(|| self.workers[0].env.state().current_runoff_m3_per_s);
        Ok(TrainStats {
            update,
            mean_reward: reward_sum / steps as f64,
            policy_loss: losses.policy_loss,
            value_loss: losses.value_loss,
            entropy: losses.entropy,
            clip_fraction: losses.clip_fraction,
            final_episode_runoff_m3_per_s: final_runoff,
            episodes_completed: self.episodes_completed,
        })
    }

    /// Run the remaining updates. `on_checkpoint` is called every
    /// `checkpoint_every` updates and once at the end.
    pub fn train(
        &mut self,
        mut on_update: impl FnMut(&TrainStats),
        mut on_checkpoint: impl FnMut(&Trainer) -> Result<()>,
    ) -> Result<Vec<TrainStats>> {
        let mut stats = Vec::new();
        while self.updates_completed < self.config.total_updates {
            let s = self.run_update()?;
            on_update(&s);
            stats.push(s);
            let every = self.config.checkpoint_every;
            if every > 0 && self.updates_completed.is_multiple_of(every) && self.updates_completed < self.config.total_updates {
                on_checkpoint(self)?;
            }
        }
        on_checkpoint(self)?;
        Ok(stats)
    }
}
