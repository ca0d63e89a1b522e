//! Diagonal Gaussian policy and state-value critic.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::approximator::{Activations, Layout, ParamVector};
use crate::error::{check_len, Error, Result};
use crate::math;
use crate::rng::Rng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Exponent clamp applied to the log-ratio before exponentiation.
pub const LOG_RATIO_CLAMP: f64 = 20.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Gaussian policy with a network for the mean and a state-independent
/// per-dimension `log_std`.
///
/// Flat parameter order for optimizers is the mean network followed by `log_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    mean_net: ParamVector,
    log_std: Vec<f64>,
}

/// Everything computed while scoring one `(state, action)` pair; reused to
/// backpropagate the log-density without a second forward pass.
#[derive(Debug, Clone)]
pub struct LogProbEval {
    pub log_prob: f64,
    mean: Vec<f64>,
    action: Vec<f64>,
    record: Activations,
}

impl GaussianPolicy {
    pub fn new(mean_net: ParamVector, log_std: Vec<f64>) -> Result<Self> {
        check_len("log_std", mean_net.layout().output, log_std.len())?;
        if log_std.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "log_std" });
        }
        let mut policy = GaussianPolicy { mean_net, log_std };
        policy.clamp_log_std();
        Ok(policy)
    }

    /// Freshly initialized policy with `log_std = 0`.
    pub fn init(layout: Layout, seed: u64) -> Self {
        GaussianPolicy {
            mean_net: ParamVector::init(layout, seed),
            log_std: vec![0.0; layout.output],
        }
    }

    pub fn mean_net(&self) -> &ParamVector {
        &self.mean_net
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.layout().input
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn param_count(&self) -> usize {
        self.mean_net.len() + self.log_std.len()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        flat.extend_from_slice(self.mean_net.values());
        flat.extend_from_slice(&self.log_std);
        flat
    }

    /// Overwrites all parameters from the flat layout, then clamps `log_std`.
    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        check_len("policy parameters", self.param_count(), flat.len())?;
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "policy parameter" });
        }
        let n = self.mean_net.len();
        self.mean_net.values_mut().copy_from_slice(&flat[..n]);
        self.log_std.copy_from_slice(&flat[n..]);
        self.clamp_log_std();
        Ok(())
    }

    fn clamp_log_std(&mut self) {
        for v in &mut self.log_std {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn mean(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.mean_net.eval(state)
    }

    /// Draws `mean(state) + exp(log_std) * z` and returns it with its log-density.
    pub fn sample_action(&self, state: &[f64], rng: &mut Rng) -> Result<(Vec<f64>, f64)> {
        let mean = self.mean(state)?;
        let action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(&mu, &ls)| {
                let z: f64 = rng.sample(StandardNormal);
                mu + math::exp(ls) * z
            })
            .collect();
        let log_prob = self.log_prob_given_mean(&mean, &action);
        Ok((action, log_prob))
    }

    /// `sum_i -0.5 * ((a_i - mu_i) / sigma_i)^2 - log sigma_i - 0.5 * log(2 pi)`.
    pub fn gaussian_log_prob(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        check_len("action", self.action_dim(), action.len())?;
        let mean = self.mean(state)?;
        Ok(self.log_prob_given_mean(&mean, action))
    }

    fn log_prob_given_mean(&self, mean: &[f64], action: &[f64]) -> f64 {
        mean.iter()
            .zip(action)
            .zip(&self.log_std)
            .map(|((&mu, &a), &ls)| {
                let z = (a - mu) / math::exp(ls);
                -0.5 * z * z - ls - HALF_LN_2PI
            })
            .sum()
    }

    /// Log-density plus the intermediates needed by [`Self::accumulate_log_prob_grad`].
    pub fn evaluate(&self, state: &[f64], action: &[f64]) -> Result<LogProbEval> {
        check_len("action", self.action_dim(), action.len())?;
        let (mean, record) = self.mean_net.forward(state)?;
        let log_prob = self.log_prob_given_mean(&mean, action);
        Ok(LogProbEval {
            log_prob,
            mean,
            action: action.to_vec(),
            record,
        })
    }

    /// Adds `scale * d(log pi)/d(theta)` into `acc` (flat policy layout).
    pub fn accumulate_log_prob_grad(
        &self,
        eval: &LogProbEval,
        scale: f64,
        acc: &mut [f64],
    ) -> Result<()> {
        check_len("policy gradient accumulator", self.param_count(), acc.len())?;
        let n = self.mean_net.len();
        let (net_acc, std_acc) = acc.split_at_mut(n);
        let mut mean_grad = vec![0.0; self.action_dim()];
        for i in 0..self.action_dim() {
            let inv_var = math::exp(-2.0 * self.log_std[i]);
            let diff = eval.action[i] - eval.mean[i];
            mean_grad[i] = diff * inv_var;
            std_acc[i] += scale * (diff * diff * inv_var - 1.0);
        }
        self.mean_net
            .backward_into(&eval.record, &mean_grad, scale, net_acc)
    }

    /// Differential entropy, `sum_i 0.5 * ln(2 pi e) + log_std_i`.
    pub fn entropy(&self) -> f64 {
        let per_dim = 0.5 * math::ln(2.0 * PI * core::f64::consts::E);
        self.log_std.iter().map(|ls| per_dim + ls).sum()
    }
}

/// `exp(clamp(new - old, -20, 20))`.
pub fn likelihood_ratio(log_prob_new: f64, log_prob_old: f64) -> f64 {
    math::exp((log_prob_new - log_prob_old).clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP))
}

/// `d ratio / d log_prob_new`: the ratio itself, or zero where the clamp is active.
pub fn likelihood_ratio_slope(log_prob_new: f64, log_prob_old: f64) -> f64 {
    let diff = log_prob_new - log_prob_old;
    if diff.abs() > LOG_RATIO_CLAMP {
        0.0
    } else {
        math::exp(diff)
    }
}

/// Scalar state-value network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticNet {
    value_net: ParamVector,
}

impl CriticNet {
    pub fn new(value_net: ParamVector) -> Result<Self> {
        check_len("critic output", 1, value_net.layout().output)?;
        Ok(CriticNet { value_net })
    }

    pub fn init(obs_dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        Ok(CriticNet {
            value_net: ParamVector::init(Layout::new(obs_dim, hidden, 1)?, seed),
        })
    }

    pub fn value_net(&self) -> &ParamVector {
        &self.value_net
    }

    pub fn value_net_mut(&mut self) -> &mut ParamVector {
        &mut self.value_net
    }

    pub fn state_value(&self, state: &[f64]) -> Result<f64> {
        Ok(self.value_net.eval(state)?[0])
    }

    /// Value and the activation record for backpropagation.
    pub fn forward(&self, state: &[f64]) -> Result<(f64, Activations)> {
        let (out, record) = self.value_net.forward(state)?;
        Ok((out[0], record))
    }
}


#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn self_ratio_is_one(x in -1e6f64..1e6) {
            prop_assert_eq!(likelihood_ratio(x, x), 1.0);
        }

        #[test]
        fn entropy_increases_with_log_std(base in -4.9f64..1.9, bump in 1e-6f64..0.1, dim in 0usize..3) {
            let layout = Layout::new(1, 2, 3).unwrap();
            let lo = GaussianPolicy::new(ParamVector::zeros(layout), vec![base; 3]).unwrap();
            let mut stds = vec![base; 3];
            stds[dim] = (base + bump).min(LOG_STD_MAX);
            let hi = GaussianPolicy::new(ParamVector::zeros(layout), stds).unwrap();
            prop_assert!(hi.entropy() > lo.entropy());
        }

        #[test]
        fn ratio_is_positive_and_finite(a in -1e300f64..1e300, b in -1e300f64..1e300) {
            let r = likelihood_ratio(a, b);
            prop_assert!(r > 0.0 && r.is_finite());
        }
    }
}
