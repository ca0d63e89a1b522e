//! Toy continuous-control environments and rollout collection.
//!
//! Two families, both integrated with explicit Euler steps of `dt = 0.05`:
//!
//! * **Point mass** (`reacher2d`, `pointmass-n<k>`): a mass in the box
//!   `[-1, 1]^n` steered by a force `a` in `[-1, 1]^n` towards a goal drawn
//!   uniformly from the box at every reset. Observation is
//!   `(position, goal, velocity)`, so `obs_dim = 3n`.
//!   `v <- clamp(v + dt * a, -8, 8)`, `x <- x + dt * v`; a coordinate that
//!   leaves the box is clamped to the wall and its velocity zeroed.
//!   Reward is `-|x - goal| - 0.01 * |a|^2` at the new position. Reset puts
//!   the mass at rest at a uniform position. Episodes last 100 steps.
//! * **Pendulum** (`pendulum`): angle `theta` measured from upright,
//!   observation `(cos theta, sin theta, theta_dot)`, torque in `[-2, 2]`.
//!   `theta_dot <- clamp(theta_dot + dt * (g / l * sin theta + u / (m l^2)), -8, 8)`,
//!   `theta <- theta + dt * theta_dot` with `g = 10`, `m = l = 1`. Reward is
//!   `-(wrap(theta)^2 + 0.1 * theta_dot^2 + 0.001 * u^2)` evaluated before
//!   the update. Reset draws `theta` from `[-pi, pi]` and `theta_dot` from
//!   `[-1, 1]`. Episodes last 200 steps.
//!
//! None of the environments terminate early; every episode ends by truncation.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::gae::{self, Trajectory};
use crate::math;
use crate::policy::{CriticNet, GaussianPolicy};
use crate::rng::Rng;

pub const DT: f64 = 0.05;
pub const MAX_SPEED: f64 = 8.0;
pub const ARENA: f64 = 1.0;
pub const POINT_MASS_EPISODE_STEPS: usize = 100;
pub const PENDULUM_EPISODE_STEPS: usize = 200;
pub const MAX_POINT_MASS_DIM: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub max_episode_steps: usize,
    /// Symmetric bound applied to incoming actions.
    pub action_clip: f64,
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub reward: f64,
    /// The episode reached a terminal state.
    pub terminated: bool,
    /// The episode hit its step limit.
    pub truncated: bool,
}

impl Step {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Clone)]
pub struct PointMass {
    dims: usize,
    pos: Vec<f64>,
    goal: Vec<f64>,
    vel: Vec<f64>,
}

impl PointMass {
    fn new(dims: usize) -> Self {
        PointMass {
            dims,
            pos: vec![0.0; dims],
            goal: vec![0.0; dims],
            vel: vec![0.0; dims],
        }
    }

    /// Places the mass at `pos` with velocity `vel` and goal `goal`.
    pub fn set_state(&mut self, pos: &[f64], goal: &[f64], vel: &[f64]) -> Result<()> {
        check_len("position", self.dims, pos.len())?;
        check_len("goal", self.dims, goal.len())?;
        check_len("velocity", self.dims, vel.len())?;
        self.pos.copy_from_slice(pos);
        self.goal.copy_from_slice(goal);
        self.vel.copy_from_slice(vel);
        Ok(())
    }

    fn observe(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(3 * self.dims);
        obs.extend_from_slice(&self.pos);
        obs.extend_from_slice(&self.goal);
        obs.extend_from_slice(&self.vel);
        obs
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) {
        for i in 0..self.dims {
            self.pos[i] = rng.random_range(-ARENA..=ARENA);
            self.goal[i] = rng.random_range(-ARENA..=ARENA);
            self.vel[i] = 0.0;
        }
    }

    fn step(&mut self, action: &[f64]) -> f64 {
        let mut dist2 = 0.0;
        let mut effort = 0.0;
        for (i, &a) in action.iter().enumerate().take(self.dims) {
            effort += a * a;
            self.vel[i] = (self.vel[i] + DT * a).clamp(-MAX_SPEED, MAX_SPEED);
            let x = self.pos[i] + DT * self.vel[i];
            if x.abs() > ARENA {
                self.pos[i] = x.clamp(-ARENA, ARENA);
                self.vel[i] = 0.0;
            } else {
                self.pos[i] = x;
            }
            let d = self.pos[i] - self.goal[i];
            dist2 += d * d;
        }
        -math::sqrt(dist2) - 0.01 * effort
    }
}

#[derive(Debug, Clone)]
pub struct Pendulum {
    theta: f64,
    theta_dot: f64,
}

impl Pendulum {
    pub const GRAVITY: f64 = 10.0;
    pub const MASS: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;

    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
    }

    fn observe(&self) -> Vec<f64> {
        vec![math::cos(self.theta), math::sin(self.theta), self.theta_dot]
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) {
        self.theta = rng.random_range(-PI..=PI);
        self.theta_dot = rng.random_range(-1.0..=1.0);
    }

    fn step(&mut self, torque: f64) -> f64 {
        let angle = math::wrap_angle(self.theta);
        let reward = -(angle * angle + 0.1 * self.theta_dot * self.theta_dot + 0.001 * torque * torque);
        let accel = Self::GRAVITY / Self::LENGTH * math::sin(self.theta)
            + torque / (Self::MASS * Self::LENGTH * Self::LENGTH);
        self.theta_dot = (self.theta_dot + DT * accel).clamp(-MAX_SPEED, MAX_SPEED);
        self.theta = math::wrap_angle(self.theta + DT * self.theta_dot);
        reward
    }
}

#[derive(Debug, Clone)]
enum Dynamics {
    PointMass(PointMass),
    Pendulum(Pendulum),
}

/// An environment instance selected by name.
#[derive(Debug, Clone)]
pub struct Env {
    spec: EnvSpec,
    dynamics: Dynamics,
    steps: usize,
    done: bool,
    clipped: Vec<f64>,
}

impl Env {
    /// `"reacher2d"`, `"pendulum"` or `"pointmass-n<k>"` with `1 <= k <= 128`.
    pub fn from_name(name: &str) -> Result<Env> {
        let (obs_dim, action_dim, max_steps, clip, dynamics) = match name {
            "reacher2d" => (6, 2, POINT_MASS_EPISODE_STEPS, 1.0, Dynamics::PointMass(PointMass::new(2))),
            "pendulum" => (
                3,
                1,
                PENDULUM_EPISODE_STEPS,
                2.0,
                Dynamics::Pendulum(Pendulum {
                    theta: 0.0,
                    theta_dot: 0.0,
                }),
            ),
            other => {
                let dims = other
                    .strip_prefix("pointmass-n")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|k| (1..=MAX_POINT_MASS_DIM).contains(k))
                    .ok_or_else(|| Error::UnknownEnv(other.to_string()))?;
                (
                    3 * dims,
                    dims,
                    POINT_MASS_EPISODE_STEPS,
                    1.0,
                    Dynamics::PointMass(PointMass::new(dims)),
                )
            }
        };
        Ok(Env {
            spec: EnvSpec {
                name: name.to_string(),
                obs_dim,
                action_dim,
                max_episode_steps: max_steps,
                action_clip: clip,
            },
            dynamics,
            steps: 0,
            done: true,
            clipped: vec![0.0; action_dim],
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Starts a new episode; the initial state is a pure function of `seed`.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &mut self.dynamics {
            Dynamics::PointMass(pm) => pm.reset(&mut rng),
            Dynamics::Pendulum(p) => p.reset(&mut rng),
        }
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    pub fn observe(&self) -> Vec<f64> {
        match &self.dynamics {
            Dynamics::PointMass(pm) => pm.observe(),
            Dynamics::Pendulum(p) => p.observe(),
        }
    }

    /// Direct access to point-mass internals, for constructing exact states.
    pub fn point_mass_mut(&mut self) -> Option<&mut PointMass> {
        match &mut self.dynamics {
            Dynamics::PointMass(pm) => Some(pm),
            Dynamics::Pendulum(_) => None,
        }
    }

    pub fn pendulum_mut(&mut self) -> Option<&mut Pendulum> {
        match &mut self.dynamics {
            Dynamics::Pendulum(p) => Some(p),
            Dynamics::PointMass(_) => None,
        }
    }

    /// Advances one step. Actions are clipped to `±action_clip` first.
    pub fn step(&mut self, action: &[f64]) -> Result<Step> {
        if self.done {
            return Err(Error::EpisodeOver);
        }
        check_len("action", self.spec.action_dim, action.len())?;
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite { what: "action" });
        }
        let bound = self.spec.action_clip;
        for (c, &a) in self.clipped.iter_mut().zip(action) {
            *c = a.clamp(-bound, bound);
        }
        let reward = match &mut self.dynamics {
            Dynamics::PointMass(pm) => pm.step(&self.clipped),
            Dynamics::Pendulum(p) => p.step(self.clipped[0]),
        };
        self.steps += 1;
        let truncated = self.steps >= self.spec.max_episode_steps;
        self.done = truncated;
        Ok(Step {
            state: self.observe(),
            reward,
            terminated: false,
            truncated,
        })
    }
}

/// Transitions collected with frozen parameters, plus advantage estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// Episode ended at this step, by termination or by its step limit.
    pub dones: Vec<bool>,
    /// Episode reached a terminal state at this step.
    pub terminals: Vec<bool>,
    pub log_probs_old: Vec<f64>,
    pub values_old: Vec<f64>,
    /// Critic value of the successor state wherever a segment ends without
    /// termination (step limit or end of batch); zero elsewhere.
    pub bootstrap_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Undiscounted returns of episodes that ended inside the batch.
    pub episode_returns: Vec<f64>,
    pub episode_lengths: Vec<usize>,
    /// Return and length of the episode still running when the batch filled up.
    pub partial_episode: Option<(f64, usize)>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Fills `advantages` and `returns` by running GAE over each episode segment.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let n = self.len();
        self.advantages.clear();
        self.returns.clear();
        let mut start = 0;
        while start < n {
            let mut end = start;
            while end + 1 < n && !self.dones[end] {
                end += 1;
            }
            let terminal = self.terminals[end];
            let mut done = vec![false; end - start + 1];
            *done.last_mut().unwrap() = terminal;
            let traj = Trajectory::new(
                self.rewards[start..=end].to_vec(),
                self.values_old[start..=end].to_vec(),
                if terminal { 0.0 } else { self.bootstrap_values[end] },
                done,
            )?;
            let adv = gae::gae_advantages(&traj, gamma, lambda)?;
            let ret = gae::returns_for_critic(&adv, &traj.values)?;
            self.advantages.extend(adv);
            self.returns.extend(ret);
            start = end + 1;
        }
        Ok(())
    }

    /// Mean and population std of the episode returns in this batch; falls
    /// back to the unfinished episode when no episode completed.
    pub fn episode_reward_stats(&self) -> (f64, f64) {
        if self.episode_returns.is_empty() {
            let partial = self.partial_episode.map(|(r, _)| r).unwrap_or(0.0);
            return (partial, 0.0);
        }
        (
            math::mean(&self.episode_returns),
            math::std_dev(&self.episode_returns),
        )
    }
}

/// Runs `policy` for exactly `steps` transitions, resetting on episode end.
///
/// The environment is reset at the start with a seed drawn from `rng`, and
/// again after each finished episode.
pub fn collect_rollout(
    env: &mut Env,
    policy: &GaussianPolicy,
    critic: &CriticNet,
    steps: usize,
    rng: &mut Rng,
) -> Result<RolloutBatch> {
    if steps == 0 {
        return Err(Error::InvalidConfig("rollout step budget must be at least 1".into()));
    }
    check_len("policy observation", env.spec().obs_dim, policy.obs_dim())?;
    check_len("policy action", env.spec().action_dim, policy.action_dim())?;
    let mut batch = RolloutBatch {
        states: Vec::with_capacity(steps),
        actions: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
        dones: Vec::with_capacity(steps),
        terminals: Vec::with_capacity(steps),
        log_probs_old: Vec::with_capacity(steps),
        values_old: Vec::with_capacity(steps),
        bootstrap_values: Vec::with_capacity(steps),
        advantages: Vec::new(),
        returns: Vec::new(),
        episode_returns: Vec::new(),
        episode_lengths: Vec::new(),
        partial_episode: None,
    };
    let mut state = env.reset(rng.random());
    let mut ep_return = 0.0;
    let mut ep_len = 0;
    for t in 0..steps {
        let (action, log_prob) = policy.sample_action(&state, rng)?;
        let value = critic.state_value(&state)?;
        let step = env.step(&action)?;
        ep_return += step.reward;
        ep_len += 1;
        let last = t + 1 == steps;
        let bootstrap = if !step.terminated && (step.truncated || last) {
            critic.state_value(&step.state)?
        } else {
            0.0
        };
        batch.states.push(state);
        batch.actions.push(action);
        batch.rewards.push(step.reward);
        batch.dones.push(step.done());
        batch.terminals.push(step.terminated);
        batch.log_probs_old.push(log_prob);
        batch.values_old.push(value);
        batch.bootstrap_values.push(bootstrap);
        if step.done() {
            batch.episode_returns.push(ep_return);
            batch.episode_lengths.push(ep_len);
            ep_return = 0.0;
            ep_len = 0;
            if !last {
                state = env.reset(rng.random());
            } else {
                state = step.state;
            }
        } else {
            state = step.state;
        }
    }
    if ep_len > 0 {
        batch.partial_episode = Some((ep_return, ep_len));
    }
    Ok(batch)
}
