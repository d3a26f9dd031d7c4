//! Small fully connected networks with analytic gradients.
//!
//! Parameters of every layer live in one flat `Vec<f64>`: for each layer the
//! `out x in` weight matrix (row-major) followed by the `out` biases. Hidden
//! layers use `tanh`, the output layer is linear.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// Logit assigned to illegal actions before the softmax.
pub const MASKED_LOGIT: f64 = -1e9;

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Post-activation values of every layer from one forward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has at least the input")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        }
    }

    /// Weights uniform in `+-1/sqrt(fan_in)`, the last layer additionally
    /// multiplied by `output_scale`; biases zero.
    pub fn init(sizes: &[usize], output_scale: f64, rng: &mut StreamRng) -> Self {
        let mut net = Self::zeros(sizes);
        let layers = sizes.len() - 1;
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let scale = if l + 1 == layers { output_scale } else { 1.0 };
            for w in &mut net.params[offset..offset + fan_in * fan_out] {
                *w = scale * rng::uniform_range(rng, -bound, bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: params.len(),
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        self.check_input(input)?;
        let layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(input.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = &activations[l];
            let hidden = l + 1 < layers;
            let y: Vec<f64> = weights
                .chunks_exact(n_in)
                .zip(biases)
                .map(|(row, b)| {
                    let z = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b;
                    if hidden {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            activations.push(y);
            offset += n_in * n_out + n_out;
        }
        Ok(Trace { activations })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input)?.activations.pop().unwrap())
    }

    /// Accumulate `d(output_grad . output)/d(params)` into `grads`.
    pub fn backward_trace(&self, trace: &Trace, output_grad: &[f64], grads: &mut [f64]) -> Result<()> {
        if output_grad.len() != self.output_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.output_dim(),
                actual: output_grad.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                expected: self.params.len(),
                actual: grads.len(),
            });
        }
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            offsets.push(offset);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }

        let mut delta = output_grad.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &trace.activations[l];
            let (gw, gb) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for ((grow, gbias), &d) in gw.chunks_exact_mut(n_in).zip(gb.iter_mut()).zip(&delta) {
                if d == 0.0 {
                    continue;
                }
                *gbias += d;
                for (g, xi) in grow.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for (row, &d) in weights.chunks_exact(n_in).zip(&delta) {
                    if d == 0.0 {
                        continue;
                    }
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                // x holds tanh outputs of the previous layer
                for (p, a) in prev.iter_mut().zip(x) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
        Ok(())
    }

    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward_trace(input)?;
        let mut grads = vec![0.0; self.params.len()];
        self.backward_trace(&trace, output_grad, &mut grads)?;
        Ok(grads)
    }
}

/// Softmax distribution over a small discrete action set.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalDist {
    logits: Vec<f64>,
    log_probs: Vec<f64>,
    probs: Vec<f64>,
}

impl CategoricalDist {
    pub fn new(logits: &[f64]) -> Self {
        Self::masked(logits, None)
    }

    /// Illegal actions get `MASKED_LOGIT` before normalization.
    pub fn masked(logits: &[f64], mask: Option<&[bool]>) -> Self {
        let logits: Vec<f64> = match mask {
            Some(mask) => logits
                .iter()
                .zip(mask)
                .map(|(&z, &legal)| if legal { z } else { MASKED_LOGIT })
                .collect(),
            None => logits.to_vec(),
        };
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let log_probs: Vec<f64> = logits.iter().map(|z| z - lse).collect();
        let probs = log_probs.iter().map(|lp| lp.exp()).collect();
        Self {
            logits,
            log_probs,
            probs,
        }
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_prob(&self, action: usize) -> f64 {
        self.log_probs[action]
    }

    /// Inverse-CDF draw from a single uniform.
    pub fn sample(&self, rng: &mut StreamRng) -> (usize, f64) {
        let u = rng::uniform01(rng);
        let mut cumulative = 0.0;
        let mut chosen = None;
        for (a, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            cumulative += p;
            chosen = Some(a);
            if u < cumulative {
                break;
            }
        }
        let action = chosen.unwrap_or_else(|| self.greedy());
        (action, self.log_probs[action])
    }

    /// Highest-probability action; ties resolve to the lowest index.
    pub fn greedy(&self) -> usize {
        let mut best = 0;
        for (a, &z) in self.logits.iter().enumerate() {
            if z > self.logits[best] {
                best = a;
            }
        }
        best
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .zip(&self.log_probs)
            .filter(|(&p, _)| p > 0.0)
            .map(|(p, lp)| p * lp)
            .sum::<f64>()
    }

    /// Gradient of `log_prob(action)` with respect to the logits.
    pub fn log_prob_grad(&self, action: usize) -> Vec<f64> {
        let mut g: Vec<f64> = self.probs.iter().map(|p| -p).collect();
        g[action] += 1.0;
        g
    }

    /// Gradient of the entropy with respect to the logits.
    pub fn entropy_grad(&self) -> Vec<f64> {
        let h = self.entropy();
        self.probs
            .iter()
            .zip(&self.log_probs)
            .map(|(&p, &lp)| if p > 0.0 { -p * (lp + h) } else { 0.0 })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self {
            config,
            step: 0,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        let n = self.first_moment.len();
        if params.len() != n || grads.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                actual: if params.len() != n { params.len() } else { grads.len() },
            });
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}
