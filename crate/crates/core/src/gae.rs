//! TD residuals, generalized advantage estimation and critic targets.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::math;

/// Rewards and critic values of consecutive steps.
///
/// `done[t]` marks a terminal transition: the successor of step `t` has value
/// zero and no credit flows back across it. The successor of the last step
/// has value `bootstrap_value` (ignored when that step is done).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub bootstrap_value: f64,
    pub done: Vec<bool>,
}

impl Trajectory {
    pub fn new(rewards: Vec<f64>, values: Vec<f64>, bootstrap_value: f64, done: Vec<bool>) -> Result<Self> {
        let traj = Trajectory {
            rewards,
            values,
            bootstrap_value,
            done,
        };
        traj.validate()?;
        Ok(traj)
    }

    fn validate(&self) -> Result<()> {
        if self.rewards.is_empty() {
            return Err(Error::InvalidConfig("trajectory must have at least one step".into()));
        }
        check_len("trajectory values", self.rewards.len(), self.values.len())?;
        check_len("trajectory done flags", self.rewards.len(), self.done.len())
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn next_value(&self, t: usize) -> f64 {
        if t + 1 < self.values.len() {
            self.values[t + 1]
        } else {
            self.bootstrap_value
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(alloc::format!("gamma must be in [0,1), got {gamma}")))
    }
}

/// `delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)`.
pub fn td_residuals(traj: &Trajectory, gamma: f64) -> Result<Vec<f64>> {
    traj.validate()?;
    check_gamma(gamma)?;
    Ok((0..traj.len())
        .map(|t| {
            let next = if traj.done[t] { 0.0 } else { traj.next_value(t) };
            traj.rewards[t] + gamma * next - traj.values[t]
        })
        .collect())
}

/// `A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}`, evaluated backwards.
pub fn gae_advantages(traj: &Trajectory, gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidConfig(alloc::format!("lambda must be in [0,1], got {lambda}")));
    }
    let deltas = td_residuals(traj, gamma)?;
    let mut advantages = vec![0.0; deltas.len()];
    let mut running = 0.0;
    for t in (0..deltas.len()).rev() {
        let carry = if traj.done[t] { 0.0 } else { gamma * lambda * running };
        running = deltas[t] + carry;
        advantages[t] = running;
    }
    Ok(advantages)
}

/// Regression targets `R_t = A_t + V(s_t)`.
pub fn returns_for_critic(advantages: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    check_len("values", advantages.len(), values.len())?;
    Ok(advantages.iter().zip(values).map(|(a, v)| a + v).collect())
}

/// Below this population std the advantages are treated as constant.
pub const DEGENERATE_STD: f64 = 1e-8;

/// Shifts to mean zero and scales to unit population std; all zeros if the
/// input is (numerically) constant.
pub fn normalize_advantages(advantages: &[f64]) -> Result<Vec<f64>> {
    if advantages.len() < 2 {
        return Err(Error::InvalidConfig(
            "advantage normalization needs at least two samples".into(),
        ));
    }
    let mean = math::mean(advantages);
    let std = math::std_dev(advantages);
    if std < DEGENERATE_STD {
        return Ok(vec![0.0; advantages.len()]);
    }
    Ok(advantages.iter().map(|a| (a - mean) / std).collect())
}
