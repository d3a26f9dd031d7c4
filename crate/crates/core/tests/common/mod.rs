//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use lulc_ppo::env::{EnvConfig, LulcEnv, Observation};
use lulc_ppo::nn::Mlp;
use lulc_ppo::ppo::{PpoConfig, RolloutBuffer, Trainer};
use lulc_ppo::rng::{self, StreamRng};
use lulc_ppo::runoff::{CoefficientTable, LulcClass, LulcGrid};

/// Rational method summed pixel by pixel: Q = C i A / 3.6e6.
pub fn brute_force_runoff(grid: &LulcGrid, coefficients: &[f64; 7], intensity: f64) -> f64 {
    grid.cells()
        .iter()
        .map(|c| coefficients[c.code() as usize] * intensity * grid.cell_area_m2() / 3.6e6)
        .sum()
}

pub fn random_grid(rng: &mut StreamRng) -> LulcGrid {
    let w = 1 + rng::index_below(rng, 30);
    let h = 1 + rng::index_below(rng, 30);
    let area = rng::uniform_range(rng, 1.0, 5000.0);
    let cells = (0..w * h)
        .map(|_| LulcClass::ALL[rng::index_below(rng, 7)])
        .collect();
    LulcGrid::new(w, h, cells, area).unwrap()
}

pub fn random_table(rng: &mut StreamRng) -> CoefficientTable {
    let mut c = [0.0; 7];
    for v in &mut c {
        *v = rng::uniform01(rng);
    }
    CoefficientTable::new(c, rng::uniform_range(rng, 0.0, 150.0)).unwrap()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Network with random architecture (or the given sizes). Weights are drawn
/// from U(-2/sqrt(fan_in), 2/sqrt(fan_in)) and biases from U(-0.5, 0.5), so
/// hidden units are spread over the whole tanh range rather than saturated.
pub fn random_mlp(rng: &mut StreamRng, sizes: Option<Vec<usize>>) -> Mlp {
    let sizes = sizes.unwrap_or_else(|| {
        let depth = 1 + rng::index_below(rng, 3);
        (0..=depth).map(|_| 1 + rng::index_below(rng, 9)).collect()
    });
    let mut params = Vec::new();
    for pair in sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = 2.0 / (fan_in as f64).sqrt();
        params.extend((0..fan_in * fan_out).map(|_| rng::uniform_range(rng, -bound, bound)));
        params.extend((0..fan_out).map(|_| rng::uniform_range(rng, -0.5, 0.5)));
    }
    Mlp::from_params(&sizes, params).unwrap()
}

/// Largest relative error between analytic parameter gradients of
/// `L = sum_k w_k out_k` and central differences with step `h`.
///
/// Relative error uses `max(|analytic|, |numeric|, floor)` as denominator;
/// entries whose true gradient is essentially zero are judged against the
/// floor instead of amplifying rounding noise.
pub fn finite_difference_check(net: &Mlp, input: &[f64], weights: &[f64], h: f64, floor: f64) -> f64 {
    let loss = |m: &Mlp| -> f64 {
        m.forward(input)
            .unwrap()
            .iter()
            .zip(weights)
            .map(|(o, w)| o * w)
            .sum()
    };
    let analytic = net.backward(input, weights).unwrap();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..net.num_params() {
        let original = probe.params()[i];
        probe.params_mut()[i] = original + h;
        let up = loss(&probe);
        probe.params_mut()[i] = original - h;
        let down = loss(&probe);
        probe.params_mut()[i] = original;
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(floor);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

/// λ = 1 advantages as discounted reward suffix sums (stopping at episode
/// ends, bootstrapping otherwise) minus the value estimate.
pub fn brute_force_advantages(buf: &RolloutBuffer, gamma: f64) -> Vec<f64> {
    let n = buf.rewards.len();
    (0..n)
        .map(|t| {
            let mut ret = 0.0;
            let mut discount = 1.0;
            let mut terminal = false;
            for k in t..n {
                ret += discount * buf.rewards[k];
                discount *= gamma;
                if buf.dones[k] {
                    terminal = true;
                    break;
                }
            }
            if !terminal {
                ret += discount * buf.bootstrap_value;
            }
            ret - buf.values[t]
        })
        .collect()
}

pub fn random_buffer(rng: &mut StreamRng) -> RolloutBuffer {
    let n = 1 + rng::index_below(rng, 64);
    let mut buf = RolloutBuffer::default();
    for _ in 0..n {
        buf.rewards.push(rng::uniform_range(rng, -5.0, 5.0));
        buf.values.push(rng::uniform_range(rng, -5.0, 5.0));
        buf.dones.push(rng::uniform01(rng) < 0.15);
        buf.actions.push(0);
    }
    buf.bootstrap_value = if *buf.dones.last().unwrap() {
        0.0
    } else {
        rng::uniform_range(rng, -5.0, 5.0)
    };
    buf
}

/// Two-pixel grid: a frozen urban pixel and one agriculture pixel.
pub fn toy_grid() -> LulcGrid {
    LulcGrid::new(2, 1, vec![LulcClass::Urban, LulcClass::Agriculture], 900.0).unwrap()
}

pub fn toy_ppo_config() -> PpoConfig {
    PpoConfig {
        rollout_horizon: 256,
        minibatch_size: 64,
        total_updates: 50,
        ..PpoConfig::default()
    }
}

/// Observation the agent sees when the cursor reaches the agriculture pixel.
pub fn toy_changeable_observation() -> (Observation, lulc_ppo::env::ActionMask) {
    let mut env = LulcEnv::new(toy_grid(), EnvConfig::default(), CoefficientTable::default()).unwrap();
    env.step(LulcClass::Urban.index()).unwrap();
    (env.observation(), env.action_mask())
}

/// Train on the toy grid and return P(wetland) at the changeable pixel after
/// each update.
pub fn toy_wetland_probabilities(seed: u64) -> Vec<f64> {
    let mut trainer = Trainer::new(
        toy_grid(),
        CoefficientTable::default(),
        EnvConfig::default(),
        toy_ppo_config(),
        seed,
    )
    .unwrap();
    let (obs, mask) = toy_changeable_observation();
    let mut probs = Vec::new();
    for _ in 0..trainer.config.total_updates {
        trainer.run_update().unwrap();
        let dist = trainer.actor.distribution(&obs, &mask).unwrap();
        probs.push(dist.probs()[LulcClass::Wetland.index()]);
    }
    probs
}
