//! One-hidden-layer ReLU network with hand-written reverse mode, and Adam.
//!
//! Parameters are stored flat in the order `W1 (hidden x input, row-major)`,
//! `b1`, `W2 (output x hidden, row-major)`, `b2`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::math;
use crate::rng;

/// Network dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Layout {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Layout {
    pub fn new(input: usize, hidden: usize, output: usize) -> Result<Self> {
        if input == 0 || hidden == 0 || output == 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "network dimensions must be positive, got {input}-{hidden}-{output}"
            )));
        }
        Ok(Layout {
            input,
            hidden,
            output,
        })
    }

    /// Total number of parameters: `hidden * (input + 1) + output * (hidden + 1)`.
    pub fn param_count(&self) -> usize {
        self.hidden * (self.input + 1) + self.output * (self.hidden + 1)
    }

    fn w1(&self) -> core::ops::Range<usize> {
        0..self.hidden * self.input
    }

    fn b1(&self) -> core::ops::Range<usize> {
        let start = self.hidden * self.input;
        start..start + self.hidden
    }

    fn w2(&self) -> core::ops::Range<usize> {
        let start = self.hidden * (self.input + 1);
        start..start + self.output * self.hidden
    }

    fn b2(&self) -> core::ops::Range<usize> {
        let start = self.hidden * (self.input + 1) + self.output * self.hidden;
        start..start + self.output
    }
}

/// Flat parameter vector of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    layout: Layout,
    values: Vec<f64>,
}

/// Gradient with the same layout as the [`ParamVector`] it differentiates.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
}

impl Gradient {
    pub fn zeros(len: usize) -> Self {
        Gradient {
            values: vec![0.0; len],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

pub(crate) fn l2_norm(xs: &[f64]) -> f64 {
    math::sqrt(xs.iter().map(|x| x * x).sum())
}

/// Intermediate values of one forward pass, enough to run [`ParamVector::backward`].
#[derive(Debug, Clone)]
pub struct Activations {
    input: Vec<f64>,
    pre_hidden: Vec<f64>,
    hidden: Vec<f64>,
}

impl Activations {
    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }
}

impl ParamVector {
    /// Wraps existing values; fails if the length or finiteness invariant is broken.
    pub fn from_values(layout: Layout, values: Vec<f64>) -> Result<Self> {
        check_len("parameter vector", layout.param_count(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "parameter" });
        }
        Ok(ParamVector { layout, values })
    }

    pub fn zeros(layout: Layout) -> Self {
        ParamVector {
            layout,
            values: vec![0.0; layout.param_count()],
        }
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(layout: Layout, seed: u64) -> Self {
        let mut rng = rng::stream(seed, 0);
        let mut params = Self::zeros(layout);
        let bound1 = math::sqrt(6.0 / (layout.input + layout.hidden) as f64);
        let bound2 = math::sqrt(6.0 / (layout.hidden + layout.output) as f64);
        for w in &mut params.values[layout.w1()] {
            *w = rng.random_range(-bound1..=bound1);
        }
        for w in &mut params.values[layout.w2()] {
            *w = rng.random_range(-bound2..=bound2);
        }
        params
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access for optimizers. Callers must keep the entries finite.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Output only, skipping the activation record.
    pub fn eval(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input).map(|(out, _)| out)
    }

    /// `W2 * relu(W1 * input + b1) + b2`.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Activations)> {
        let l = self.layout;
        check_len("network input", l.input, input.len())?;
        let w1 = &self.values[l.w1()];
        let b1 = &self.values[l.b1()];
        let w2 = &self.values[l.w2()];
        let b2 = &self.values[l.b2()];

        let mut pre_hidden = Vec::with_capacity(l.hidden);
        let mut hidden = Vec::with_capacity(l.hidden);
        for (row, &bias) in w1.chunks_exact(l.input).zip(b1) {
            let z = dot(row, input) + bias;
            pre_hidden.push(z);
            hidden.push(if z > 0.0 { z } else { 0.0 });
        }
        let output = w2
            .chunks_exact(l.hidden)
            .zip(b2)
            .map(|(row, &bias)| dot(row, &hidden) + bias)
            .collect();
        Ok((
            output,
            Activations {
                input: input.to_vec(),
                pre_hidden,
                hidden,
            },
        ))
    }

    /// Gradient of a scalar loss whose gradient at the network output is `output_grad`.
    pub fn backward(&self, record: &Activations, output_grad: &[f64]) -> Result<Gradient> {
        let mut grad = Gradient::zeros(self.len());
        self.backward_into(record, output_grad, 1.0, &mut grad.values)?;
        Ok(grad)
    }

    /// Adds `scale * dL/dtheta` into `acc`. ReLU's subgradient at zero is zero.
    pub fn backward_into(
        &self,
        record: &Activations,
        output_grad: &[f64],
        scale: f64,
        acc: &mut [f64],
    ) -> Result<()> {
        let l = self.layout;
        check_len("output gradient", l.output, output_grad.len())?;
        check_len("gradient accumulator", self.len(), acc.len())?;
        if record.input.len() != l.input || record.hidden.len() != l.hidden {
            return Err(Error::DimensionMismatch {
                what: "activation record",
                expected: l.hidden,
                found: record.hidden.len(),
            });
        }
        let w2 = &self.values[l.w2()];

        let mut hidden_grad = vec![0.0; l.hidden];
        {
            let (head, tail) = acc.split_at_mut(l.w2().start);
            let (gw2, gb2) = tail.split_at_mut(l.output * l.hidden);
            for (o, &g) in output_grad.iter().enumerate() {
                let g = g * scale;
                if g == 0.0 {
                    continue;
                }
                gb2[o] += g;
                let row = &w2[o * l.hidden..(o + 1) * l.hidden];
                let grow = &mut gw2[o * l.hidden..(o + 1) * l.hidden];
                for j in 0..l.hidden {
                    grow[j] += g * record.hidden[j];
                    hidden_grad[j] += g * row[j];
                }
            }
            let (gw1, gb1) = head.split_at_mut(l.hidden * l.input);
            for j in 0..l.hidden {
                if record.pre_hidden[j] <= 0.0 || hidden_grad[j] == 0.0 {
                    continue;
                }
                let g = hidden_grad[j];
                gb1[j] += g;
                let grow = &mut gw1[j * l.input..(j + 1) * l.input];
                for (gw, &x) in grow.iter_mut().zip(&record.input) {
                    *gw += g * x;
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Whether a step follows the gradient (`Ascend`, objective maximization) or opposes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascend,
    Descend,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    beta1_power: f64,
    beta2_power: f64,
}

impl Adam {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Adam {
            config,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            beta1_power: 1.0,
            beta2_power: 1.0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update in place. A gradient with NaN or infinite entries is
    /// rejected and leaves both `params` and the optimizer state untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], direction: Direction) -> Result<()> {
        check_len("adam parameters", self.first_moment.len(), params.len())?;
        check_len("adam gradient", self.first_moment.len(), grad.len())?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { what: "gradient" });
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps_hat,
        } = self.config;
        self.step_count += 1;
        self.beta1_power *= beta1;
        self.beta2_power *= beta2;
        let c1 = 1.0 - self.beta1_power;
        let c2 = 1.0 - self.beta2_power;
        let sign = match direction {
            Direction::Ascend => 1.0,
            Direction::Descend => -1.0,
        };
        for i in 0..params.len() {
            let g = grad[i];
            let m = beta1 * self.first_moment[i] + (1.0 - beta1) * g;
            let v = beta2 * self.second_moment[i] + (1.0 - beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / c1;
            let v_hat = v / c2;
            params[i] += sign * learning_rate * m_hat / (math::sqrt(v_hat) + eps_hat);
        }
        Ok(())
    }
}

/// Scales `grad` so its L2 norm is at most `max_norm`. Returns the norm before scaling.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = l2_norm(grad);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
    norm
}
