//! Cursor-scan land-cover environment.
//!
//! The agent visits pixels in row-major order, one per step, and picks the
//! class the current pixel should become. The reward is the drop in runoff
//! caused by the rewrite, scaled by `reward_scale`. Frozen pixels ignore the
//! action and are also masked at the policy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runoff::{
    compute_runoff, ClassHistogram, CoefficientTable, LulcClass, LulcGrid, RATIONAL_UNIT_DIVISOR,
    NUM_CLASSES,
};

/// One-hot current class, class fractions, episode progress.
pub const OBS_DIM: usize = 2 * NUM_CLASSES + 1;
pub const NUM_ACTIONS: usize = NUM_CLASSES;

pub type Observation = [f64; OBS_DIM];
pub type ActionMask = [bool; NUM_ACTIONS];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Defaults to the pixel count (one full sweep).
    pub steps_per_episode: Option<usize>,
    pub target_reduction_m3_per_s: f64,
    pub target_bonus: f64,
    pub reward_scale: f64,
    pub frozen_classes: Vec<LulcClass>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            steps_per_episode: None,
            target_reduction_m3_per_s: 0.0,
            target_bonus: 0.0,
            reward_scale: 1e3,
            frozen_classes: vec![LulcClass::Urban, LulcClass::Wetland],
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_episode == Some(0) {
            return Err(Error::Config("env.steps_per_episode must be at least 1".into()));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return Err(Error::Config("env.reward_scale must be positive".into()));
        }
        if !(self.target_reduction_m3_per_s >= 0.0 && self.target_bonus >= 0.0) {
            return Err(Error::Config(
                "env.target_reduction_m3_per_s and env.target_bonus must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub grid: LulcGrid,
    pub cursor: usize,
    pub step: usize,
    pub histogram: ClassHistogram,
    pub baseline_runoff_m3_per_s: f64,
    pub current_runoff_m3_per_s: f64,
    pub cumulative_reduction_m3_per_s: f64,
    pub bonus_awarded: bool,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    /// Portion of `reward` that came from the target bonus.
    pub bonus: f64,
    pub done: bool,
    pub changed: bool,
}

#[derive(Clone, Debug)]
pub struct LulcEnv {
    base: LulcGrid,
    config: EnvConfig,
    table: CoefficientTable,
    steps_per_episode: usize,
    state: EnvState,
}

impl LulcEnv {
    /// Builds the environment and resets it. Pixels of a frozen class are
    /// added to the grid's existing frozen mask.
    pub fn new(base: LulcGrid, config: EnvConfig, table: CoefficientTable) -> Result<Self> {
        config.validate()?;
        if base.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let base = base.with_frozen_classes(&config.frozen_classes);
        let steps_per_episode = config.steps_per_episode.unwrap_or(base.len());
        let state = Self::initial_state(&base, &table)?;
        Ok(Self {
            base,
            config,
            table,
            steps_per_episode,
            state,
        })
    }

    fn initial_state(base: &LulcGrid, table: &CoefficientTable) -> Result<EnvState> {
        let baseline = compute_runoff(base, table)?.total_m3_per_s;
        Ok(EnvState {
            grid: base.clone(),
            cursor: 0,
            step: 0,
            histogram: base.histogram(),
            baseline_runoff_m3_per_s: baseline,
            current_runoff_m3_per_s: baseline,
            cumulative_reduction_m3_per_s: 0.0,
            bonus_awarded: false,
            done: false,
        })
    }

    pub fn reset(&mut self) -> Result<Observation> {
        self.state = Self::initial_state(&self.base, &self.table)?;
        Ok(self.observation())
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn base_grid(&self) -> &LulcGrid {
        &self.base
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn table(&self) -> &CoefficientTable {
        &self.table
    }

    pub fn steps_per_episode(&self) -> usize {
        self.steps_per_episode
    }

    pub fn is_done(&self) -> bool {
        self.state.done
    }

    pub fn observation(&self) -> Observation {
        let mut obs = [0.0; OBS_DIM];
        let s = &self.state;
        obs[s.grid.class_at(s.cursor).index()] = 1.0;
        obs[NUM_CLASSES..2 * NUM_CLASSES].copy_from_slice(&s.histogram.fractions());
        obs[OBS_DIM - 1] = s.step as f64 / self.steps_per_episode as f64;
        obs
    }

    pub fn action_mask(&self) -> ActionMask {
        let s = &self.state;
        if s.grid.is_frozen(s.cursor) {
            let mut mask = [false; NUM_ACTIONS];
            mask[s.grid.class_at(s.cursor).index()] = true;
            mask
        } else {
            [true; NUM_ACTIONS]
        }
    }

    /// Rewrite the pixel under the cursor to `action` and advance.
    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.state.done {
            return Err(Error::EpisodeFinished);
        }
        let new_class = LulcClass::from_code(action as u8)
            .filter(|_| action < NUM_ACTIONS)
            .ok_or(Error::ShapeMismatch {
                expected: NUM_ACTIONS,
                actual: action,
            })?;

        let cfg = &self.config;
        let s = &mut self.state;
        let old_class = s.grid.class_at(s.cursor);
        let mut reward = 0.0;
        let mut bonus = 0.0;
        let changed = !s.grid.is_frozen(s.cursor) && new_class != old_class;
        if changed {
            let delta_c = self.table.coefficient(old_class) - self.table.coefficient(new_class);
            let delta_q = delta_c * self.table.intensity_mm_per_hr() * s.grid.cell_area_m2()
                / RATIONAL_UNIT_DIVISOR;
            reward = delta_q * cfg.reward_scale;

            s.grid.set_class(s.cursor, new_class);
            s.histogram[old_class] -= 1;
            s.histogram[new_class] += 1;

            let before = s.cumulative_reduction_m3_per_s;
            s.current_runoff_m3_per_s =
                crate::runoff::runoff_from_histogram(&s.histogram, &self.table, s.grid.cell_area_m2())?
                    .total_m3_per_s;
            s.cumulative_reduction_m3_per_s = s.baseline_runoff_m3_per_s - s.current_runoff_m3_per_s;

            let target = cfg.target_reduction_m3_per_s;
            if !s.bonus_awarded && before < target && s.cumulative_reduction_m3_per_s >= target {
                s.bonus_awarded = true;
                bonus = cfg.target_bonus;
                reward += bonus;
            }
        }

        s.step += 1;
        s.cursor = (s.cursor + 1) % s.grid.len();
        s.done = s.step == self.steps_per_episode;
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            bonus,
            done: self.state.done,
            changed,
        })
    }
}
