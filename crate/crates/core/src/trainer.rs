//! Actor-critic training loop for the clipped-surrogate family.
//!
//! Each epoch collects `steps_per_epoch` transitions with frozen parameters,
//! estimates advantages with GAE, then makes `repeat_per_collect` passes over
//! shuffled minibatches. Every minibatch takes one Adam ascent step on the
//! mean clipped surrogate for the actor and one Adam descent step on the mean
//! squared error to the GAE returns for the critic. The two networks are
//! separate and have separate optimizers; there is no entropy bonus.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::approximator::{clip_grad_norm, Adam, AdamConfig, Direction, Layout};
use crate::clip::{self, ClipSpec, SurrogateSample, Variant};
use crate::env::{self, Env, RolloutBatch};
use crate::error::{Error, Result};
use crate::gae;
use crate::math;
use crate::policy::{likelihood_ratio, likelihood_ratio_slope, CriticNet, GaussianPolicy};
use crate::rng::{self, streams, Rng};

/// Hyperparameters of one run. Defaults follow the usual control-task settings:
/// `eps = 0.2`, `lr = 3e-4`, `gamma = 0.99`, `lambda = 0.95`, 100 epochs of
/// 2500 steps, 2 passes per collection, minibatches of 128, 128 hidden units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub clip: ClipSpec,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub repeat_per_collect: usize,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub env_name: String,
    pub seed: u64,
    pub normalize_advantages: bool,
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            clip: ClipSpec::new(Variant::Ppo, 0.2, 0.0).expect("default clip spec is valid"),
            gamma: 0.99,
            lambda: 0.95,
            learning_rate: 3e-4,
            epochs: 100,
            steps_per_epoch: 2500,
            repeat_per_collect: 2,
            batch_size: 128,
            hidden_dim: 128,
            env_name: "reacher2d".to_string(),
            seed: 0,
            normalize_advantages: true,
            max_grad_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(alloc::format!("gamma must be in (0,1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(alloc::format!("lambda must be in [0,1], got {}", self.lambda));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(alloc::format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        for (name, value) in [
            ("epochs", self.epochs),
            ("steps_per_epoch", self.steps_per_epoch),
            ("repeat_per_collect", self.repeat_per_collect),
            ("batch_size", self.batch_size),
            ("hidden_dim", self.hidden_dim),
        ] {
            if value == 0 {
                return bad(alloc::format!("{name} must be positive"));
            }
        }
        if let Some(norm) = self.max_grad_norm {
            if !(norm > 0.0 && norm.is_finite()) {
                return bad(alloc::format!("max_grad_norm must be positive, got {norm}"));
            }
        }
        Env::from_name(&self.env_name)?;
        Ok(())
    }
}

/// Metrics of one completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Environment steps consumed up to and including this epoch.
    pub env_steps: usize,
    pub mean_reward: f64,
    pub reward_std: f64,
    pub entropy: f64,
    /// Fraction of the epoch's samples whose ratio lies in `[1 - eps, 1 + eps]`
    /// under the policy at the end of the epoch.
    pub ratio_in_range_frac: f64,
    /// Fraction of minibatch evaluations that sat outside the clip range with
    /// the clipped branch of the min active.
    pub clip_frac: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub episodes: usize,
    pub skipped_updates: usize,
}

/// Per-epoch history of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub entries: Vec<EpochRecord>,
}

/// End-of-run figures derived from a [`RunRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub epochs: usize,
    pub env_steps: usize,
    pub episodes: usize,
    pub final_reward: f64,
    pub best_reward: f64,
    pub best_epoch: usize,
    pub final_entropy: f64,
    pub mean_ratio_in_range_frac: f64,
}

impl RunRecord {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.mean_reward).collect()
    }

    /// Index of the highest mean reward (first one on ties).
    pub fn best_epoch(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            if best.is_none_or(|(_, r)| e.mean_reward > r) {
                best = Some((i, e.mean_reward));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn summary(&self) -> Option<RunSummary> {
        let last = self.entries.last()?;
        let best = self.best_epoch()?;
        let in_range: Vec<f64> = self.entries.iter().map(|e| e.ratio_in_range_frac).collect();
        Some(RunSummary {
            epochs: self.entries.len(),
            env_steps: last.env_steps,
            episodes: self.entries.iter().map(|e| e.episodes).sum(),
            final_reward: last.mean_reward,
            best_reward: self.entries[best].mean_reward,
            best_epoch: best,
            final_entropy: last.entropy,
            mean_ratio_in_range_frac: math::mean(&in_range),
        })
    }
}

/// Where and why a run stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub epoch: usize,
    pub minibatch: usize,
    pub statistic: String,
    pub value: f64,
    /// Epochs completed before the failure.
    pub record: RunRecord,
}

/// Statistics of one actor minibatch step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorStats {
    /// Mean surrogate before the step.
    pub objective: f64,
    pub clipped: usize,
    pub samples: usize,
    pub grad_norm: f64,
    /// The gradient was non-finite and no step was taken.
    pub skipped: bool,
}

impl ActorStats {
    pub fn clip_fraction(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.clipped as f64 / self.samples as f64
        }
    }
}

/// Mean clipped surrogate over `indices` and its gradient in the flat policy layout.
///
/// The gradient chains `dL/dr` from [`clip::surrogate_gradient_wrt_ratio`]
/// with `dr/dtheta = r * grad log pi` and the network's reverse pass.
pub fn actor_objective_gradient(
    policy: &GaussianPolicy,
    batch: &RolloutBatch,
    advantages: &[f64],
    indices: &[usize],
    spec: &ClipSpec,
) -> Result<(f64, Vec<f64>, usize)> {
    let mut grad = vec![0.0; policy.param_count()];
    if indices.is_empty() {
        return Ok((0.0, grad, 0));
    }
    let inv_n = 1.0 / indices.len() as f64;
    let mut objective = 0.0;
    let mut clipped = 0;
    for &i in indices {
        let eval = policy.evaluate(&batch.states[i], &batch.actions[i])?;
        let old = batch.log_probs_old[i];
        let ratio = likelihood_ratio(eval.log_prob, old);
        let sample = SurrogateSample::new(ratio, advantages[i])?;
        objective += clip::surrogate(spec, sample);
        if !spec.in_range(ratio) && clip::clipped_branch_active(spec, sample) {
            clipped += 1;
        }
        let scale =
            clip::surrogate_gradient_wrt_ratio(spec, sample) * likelihood_ratio_slope(eval.log_prob, old) * inv_n;
        if scale != 0.0 {
            policy.accumulate_log_prob_grad(&eval, scale, &mut grad)?;
        }
    }
    Ok((objective * inv_n, grad, clipped))
}

/// One Adam ascent step on the mean clipped surrogate of the minibatch.
pub fn actor_minibatch_update(
    policy: &mut GaussianPolicy,
    batch: &RolloutBatch,
    advantages: &[f64],
    indices: &[usize],
    spec: &ClipSpec,
    adam: &mut Adam,
    max_grad_norm: Option<f64>,
) -> Result<ActorStats> {
    let (objective, mut grad, clipped) =
        actor_objective_gradient(policy, batch, advantages, indices, spec)?;
    let mut stats = ActorStats {
        objective,
        clipped,
        samples: indices.len(),
        grad_norm: crate::approximator::l2_norm(&grad),
        skipped: false,
    };
    if !stats.grad_norm.is_finite() {
        stats.skipped = true;
        return Ok(stats);
    }
    if let Some(max) = max_grad_norm {
        clip_grad_norm(&mut grad, max);
    }
    let mut flat = policy.flat_params();
    adam.step(&mut flat, &grad, Direction::Ascend)?;
    policy.set_flat_params(&flat)?;
    Ok(stats)
}

/// Mean squared error of the critic on `indices` and its gradient.
pub fn critic_loss_gradient(
    critic: &CriticNet,
    batch: &RolloutBatch,
    indices: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; critic.value_net().len()];
    if indices.is_empty() {
        return Ok((0.0, grad));
    }
    let inv_n = 1.0 / indices.len() as f64;
    let mut loss = 0.0;
    for &i in indices {
        let (value, record) = critic.forward(&batch.states[i])?;
        let err = value - batch.returns[i];
        loss += err * err;
        critic
            .value_net()
            .backward_into(&record, &[2.0 * err * inv_n], 1.0, &mut grad)?;
    }
    Ok((loss * inv_n, grad))
}

/// One Adam descent step on the critic's mean squared error; returns the loss before the step.
pub fn critic_minibatch_update(
    critic: &mut CriticNet,
    batch: &RolloutBatch,
    indices: &[usize],
    adam: &mut Adam,
    max_grad_norm: Option<f64>,
) -> Result<f64> {
    let (loss, mut grad) = critic_loss_gradient(critic, batch, indices)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite { what: "critic loss" });
    }
    if let Some(max) = max_grad_norm {
        clip_grad_norm(&mut grad, max);
    }
    adam.step(critic.value_net_mut().values_mut(), &grad, Direction::Descend)?;
    Ok(loss)
}

/// Mean and population std of the undiscounted return over `episodes`
/// episodes of the stochastic policy.
pub fn evaluate(policy: &GaussianPolicy, env: &mut Env, episodes: usize, rng: &mut Rng) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::InvalidConfig("evaluation needs at least one episode".into()));
    }
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut state = env.reset(rng.random());
        let mut total = 0.0;
        loop {
            let (action, _) = policy.sample_action(&state, rng)?;
            let step = env.step(&action)?;
            total += step.reward;
            if step.done() {
                break;
            }
            state = step.state;
        }
        returns.push(total);
    }
    Ok((math::mean(&returns), math::std_dev(&returns)))
}

/// Episode returns of a policy that draws actions uniformly from the
/// environment's action box.
pub fn uniform_random_returns(env: &mut Env, episodes: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    let dims = env.spec().action_dim;
    let bound = env.spec().action_clip;
    let mut returns = Vec::with_capacity(episodes);
    let mut action = vec![0.0; dims];
    for _ in 0..episodes {
        env.reset(rng.random());
        let mut total = 0.0;
        loop {
            for a in action.iter_mut() {
                *a = rng.random_range(-bound..=bound);
            }
            let step = env.step(&action)?;
            total += step.reward;
            if step.done() {
                break;
            }
        }
        returns.push(total);
    }
    Ok(returns)
}

/// A training run in progress.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    env: Env,
    policy: GaussianPolicy,
    critic: CriticNet,
    actor_adam: Adam,
    critic_adam: Adam,
    sampler: Rng,
    record: RunRecord,
    env_steps: usize,
}

/// Final parameters and history of a completed run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: GaussianPolicy,
    pub critic: CriticNet,
    pub record: RunRecord,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let env = Env::from_name(&config.env_name)?;
        let spec = env.spec().clone();
        let layout = Layout::new(spec.obs_dim, config.hidden_dim, spec.action_dim)?;
        let seed = config.seed;
        let policy = GaussianPolicy::init(layout, rng::stream(seed, streams::ACTOR_INIT).random());
        let critic = CriticNet::init(
            spec.obs_dim,
            config.hidden_dim,
            rng::stream(seed, streams::CRITIC_INIT).random(),
        )?;
        let adam = AdamConfig::with_learning_rate(config.learning_rate);
        Ok(Trainer {
            actor_adam: Adam::new(policy.param_count(), adam),
            critic_adam: Adam::new(critic.value_net().len(), adam),
            sampler: rng::stream(seed, streams::ACTIONS),
            policy,
            critic,
            env,
            config,
            record: RunRecord::default(),
            env_steps: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn critic(&self) -> &CriticNet {
        &self.critic
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    pub fn epochs_done(&self) -> usize {
        self.record.len()
    }

    pub fn is_finished(&self) -> bool {
        self.record.len() >= self.config.epochs
    }

    /// Collects a batch with the current (frozen) parameters and fills in
    /// advantages and returns. Does not update anything.
    pub fn collect(&mut self) -> Result<RolloutBatch> {
        let mut batch = env::collect_rollout(
            &mut self.env,
            &self.policy,
            &self.critic,
            self.config.steps_per_epoch,
            &mut self.sampler,
        )?;
        batch.compute_advantages(self.config.gamma, self.config.lambda)?;
        Ok(batch)
    }

    fn abort(&self, minibatch: usize, statistic: &str, value: f64) -> Error {
        Error::Aborted(Abort {
            epoch: self.record.len(),
            minibatch,
            statistic: statistic.to_string(),
            value,
            record: self.record.clone(),
        })
    }

    /// Runs one full epoch and appends its metrics to the record.
    ///
    /// Non-finite values anywhere in the epoch (actions, ratios, parameters,
    /// losses) stop the run with [`Error::Aborted`]; the record is left unchanged.
    pub fn run_epoch(&mut self) -> Result<&EpochRecord> {
        let mut minibatch = 0;
        match self.epoch_body(&mut minibatch) {
            Ok(entry) => {
                self.env_steps = entry.env_steps;
                self.record.entries.push(entry);
                Ok(self.record.entries.last().expect("just pushed"))
            }
            Err(Error::NonFinite { what }) => Err(self.abort(minibatch, what, f64::NAN)),
            Err(Error::Domain { what, value }) => Err(self.abort(minibatch, what, value)),
            Err(e) => Err(e),
        }
    }

    fn epoch_body(&mut self, minibatches: &mut usize) -> Result<EpochRecord> {
        let epoch = self.record.len();
        let batch = self.collect()?;
        let n = batch.len();

        let advantages = if self.config.normalize_advantages && n >= 2 {
            gae::normalize_advantages(&batch.advantages)?
        } else {
            batch.advantages.clone()
        };
        if let Some(bad) = advantages.iter().find(|a| !a.is_finite()) {
            return Err(self.abort(0, "advantage", *bad));
        }

        let spec = self.config.clip;
        let mut order: Vec<usize> = (0..n).collect();
        let mut objective_sum = 0.0;
        let mut critic_sum = 0.0;
        let mut clipped = 0usize;
        let mut evaluated = 0usize;
        let mut skipped = 0usize;
        for pass in 0..self.config.repeat_per_collect {
            order.sort_unstable();
            order.shuffle(&mut rng::substream(
                self.config.seed,
                streams::SHUFFLE,
                epoch as u64,
                pass as u64,
            ));
            for chunk in order.chunks(self.config.batch_size) {
                let stats = actor_minibatch_update(
                    &mut self.policy,
                    &batch,
                    &advantages,
                    chunk,
                    &spec,
                    &mut self.actor_adam,
                    self.config.max_grad_norm,
                )?;
                if !stats.objective.is_finite() {
                    return Err(self.abort(*minibatches, "actor loss", stats.objective));
                }
                if stats.skipped {
                    skipped += 1;
                }
                let critic_loss = critic_minibatch_update(
                    &mut self.critic,
                    &batch,
                    chunk,
                    &mut self.critic_adam,
                    self.config.max_grad_norm,
                )?;
                objective_sum += stats.objective;
                critic_sum += critic_loss;
                clipped += stats.clipped;
                evaluated += stats.samples;
                *minibatches += 1;
            }
        }

        let mut in_range = 0usize;
        for i in 0..n {
            let lp = self.policy.gaussian_log_prob(&batch.states[i], &batch.actions[i])?;
            if spec.in_range(likelihood_ratio(lp, batch.log_probs_old[i])) {
                in_range += 1;
            }
        }
        let (mean_reward, reward_std) = batch.episode_reward_stats();
        let entry = EpochRecord {
            epoch,
            env_steps: self.env_steps + n,
            mean_reward,
            reward_std,
            entropy: self.policy.entropy(),
            ratio_in_range_frac: in_range as f64 / n as f64,
            clip_frac: if evaluated == 0 { 0.0 } else { clipped as f64 / evaluated as f64 },
            // Reported as a loss: the negated mean surrogate.
            actor_loss: -objective_sum / *minibatches as f64,
            critic_loss: critic_sum / *minibatches as f64,
            episodes: batch.episode_returns.len(),
            skipped_updates: skipped,
        };
        for (name, value) in [
            ("mean reward", entry.mean_reward),
            ("entropy", entry.entropy),
            ("actor loss", entry.actor_loss),
            ("critic loss", entry.critic_loss),
        ] {
            if !value.is_finite() {
                return Err(self.abort(*minibatches, name, value));
            }
        }
        Ok(entry)
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            policy: self.policy,
            critic: self.critic,
            record: self.record,
        }
    }
}

/// Runs every epoch of `config`.
pub fn train(config: TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config)?;
    while !trainer.is_finished() {
        trainer.run_epoch()?;
    }
    Ok(trainer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::ParamVector;

    fn small_config(variant: Variant) -> TrainConfig {
        TrainConfig {
            clip: ClipSpec::new(variant, 0.2, 0.3).unwrap(),
            epochs: 2,
            steps_per_epoch: 200,
            hidden_dim: 16,
            batch_size: 64,
            seed: 4,
            ..TrainConfig::default()
        }
    }

    fn tiny_batch(states: Vec<Vec<f64>>, actions: Vec<Vec<f64>>, log_probs_old: Vec<f64>, returns: Vec<f64>) -> RolloutBatch {
        let n = states.len();
        RolloutBatch {
            states,
            actions,
            rewards: vec![0.0; n],
            dones: vec![false; n],
            terminals: vec![false; n],
            log_probs_old,
            values_old: vec![0.0; n],
            bootstrap_values: vec![0.0; n],
            advantages: vec![0.0; n],
            returns,
            episode_returns: vec![],
            episode_lengths: vec![],
            partial_episode: None,
        }
    }

    #[test]
    fn defaults_validate() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!(c.clip.epsilon(), 0.2);
        assert_eq!(c.learning_rate, 3e-4);
        assert_eq!((c.epochs, c.steps_per_epoch, c.repeat_per_collect, c.batch_size), (100, 2500, 2, 128));
        assert_eq!((c.gamma, c.lambda, c.hidden_dim), (0.99, 0.95, 128));
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = TrainConfig::default();
        for c in [
            TrainConfig { gamma: 1.0, ..base.clone() },
            TrainConfig { lambda: -0.1, ..base.clone() },
            TrainConfig { epochs: 0, ..base.clone() },
            TrainConfig { batch_size: 0, ..base.clone() },
            TrainConfig { env_name: "humanoid".into(), ..base.clone() },
            TrainConfig { max_grad_norm: Some(0.0), ..base.clone() },
        ] {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn single_short_epoch_records_once() {
        let config = TrainConfig {
            epochs: 1,
            steps_per_epoch: 64,
            hidden_dim: 8,
            ..TrainConfig::default()
        };
        let out = train(config).unwrap();
        assert_eq!(out.record.len(), 1);
        let e = &out.record.entries[0];
        assert_eq!(e.env_steps, 64);
        assert_eq!(e.episodes, 0);
        assert!(e.mean_reward.is_finite());
    }

    #[test]
    fn zero_advantages_leave_actor_unchanged() {
        let layout = Layout::new(2, 4, 1).unwrap();
        let mut policy = GaussianPolicy::init(layout, 3);
        let states = vec![vec![0.1, 0.2], vec![-0.5, 0.3], vec![0.9, -0.9]];
        let actions = vec![vec![0.4], vec![-1.0], vec![0.0]];
        let old: Vec<f64> = states
            .iter()
            .zip(&actions)
            .map(|(s, a)| policy.gaussian_log_prob(s, a).unwrap() + 0.3)
            .collect();
        let batch = tiny_batch(states, actions, old, vec![0.0; 3]);
        let before = policy.clone();
        let mut adam = Adam::new(policy.param_count(), AdamConfig::default());
        for variant in Variant::ALL {
            let spec = ClipSpec::new(variant, 0.2, 0.3).unwrap();
            actor_minibatch_update(&mut policy, &batch, &[0.0; 3], &[0, 1, 2], &spec, &mut adam, None).unwrap();
        }
        assert_eq!(policy, before);
    }

    fn one_sample_batch(policy: &GaussianPolicy, log_ratio: f64) -> RolloutBatch {
        let s = vec![0.3, -0.7];
        let a = vec![0.5];
        let lp = policy.gaussian_log_prob(&s, &a).unwrap();
        tiny_batch(vec![s], vec![a], vec![lp - log_ratio], vec![0.0])
    }

    #[test]
    fn clipped_sample_contributions() {
        let policy = GaussianPolicy::init(Layout::new(2, 4, 1).unwrap(), 9);
        let batch = one_sample_batch(&policy, 1.5f64.ln());
        let ppo = ClipSpec::ppo(0.2).unwrap();
        let (_, g, clipped) = actor_objective_gradient(&policy, &batch, &[1.0], &[0], &ppo).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
        assert_eq!(clipped, 1);

        let ppos = ClipSpec::ppos(0.2, 0.3).unwrap();
        let (_, g, _) = actor_objective_gradient(&policy, &batch, &[1.0], &[0], &ppos).unwrap();
        assert!(g.iter().any(|&x| x != 0.0));
        // A small step along the gradient lowers the ratio.
        let mut moved = policy.clone();
        let flat: Vec<f64> = policy.flat_params().iter().zip(&g).map(|(p, d)| p + 1e-3 * d).collect();
        moved.set_flat_params(&flat).unwrap();
        let r_before = likelihood_ratio(
            policy.gaussian_log_prob(&batch.states[0], &batch.actions[0]).unwrap(),
            batch.log_probs_old[0],
        );
        let r_after = likelihood_ratio(
            moved.gaussian_log_prob(&batch.states[0], &batch.actions[0]).unwrap(),
            batch.log_probs_old[0],
        );
        assert!(r_after < r_before);
    }

    #[test]
    fn interior_ratios_give_identical_updates() {
        let policy = GaussianPolicy::init(Layout::new(2, 4, 1).unwrap(), 9);
        let batch = one_sample_batch(&policy, 0.05);
        let grads: Vec<Vec<f64>> = Variant::ALL
            .iter()
            .map(|&v| {
                let spec = ClipSpec::new(v, 0.2, 0.3).unwrap();
                actor_objective_gradient(&policy, &batch, &[0.7], &[0], &spec).unwrap().1
            })
            .collect();
        assert_eq!(grads[0], grads[1]);
        assert_eq!(grads[1], grads[2]);
    }

    #[test]
    fn critic_examples() {
        let layout = Layout::new(2, 3, 1).unwrap();
        let critic = CriticNet::new(ParamVector::zeros(layout)).unwrap();
        let batch = tiny_batch(vec![vec![0.0, 1.0]; 4], vec![vec![0.0]; 4], vec![0.0; 4], vec![1.0; 4]);
        let (loss, _) = critic_loss_gradient(&critic, &batch, &[0, 1, 2, 3]).unwrap();
        assert_eq!(loss, 1.0);

        let trained = CriticNet::init(2, 8, 5).unwrap();
        let states = vec![vec![0.2, -0.4], vec![1.0, 0.5]];
        let returns: Vec<f64> = states.iter().map(|s| trained.state_value(s).unwrap()).collect();
        let batch = tiny_batch(states, vec![vec![0.0]; 2], vec![0.0; 2], returns);
        let (loss, grad) = critic_loss_gradient(&trained, &batch, &[0, 1]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn critic_loss_decreases_on_fixed_batch() {
        let mut critic = CriticNet::init(2, 16, 2).unwrap();
        let states: Vec<Vec<f64>> = (0..32).map(|i| vec![i as f64 / 16.0 - 1.0, (i % 5) as f64 / 5.0]).collect();
        let returns: Vec<f64> = states.iter().map(|s| 2.0 * s[0] - s[1] + 0.5).collect();
        let batch = tiny_batch(states, vec![vec![0.0]; 32], vec![0.0; 32], returns);
        let idx: Vec<usize> = (0..32).collect();
        let mut adam = Adam::new(critic.value_net().len(), AdamConfig::with_learning_rate(1e-2));
        let first = critic_minibatch_update(&mut critic, &batch, &idx, &mut adam, None).unwrap();
        let mut last = first;
        for _ in 0..99 {
            last = critic_minibatch_update(&mut critic, &batch, &idx, &mut adam, None).unwrap();
        }
        assert!(last < 0.1 * first, "{first} -> {last}");
    }

    #[test]
    fn evaluate_examples() {
        let mut env = Env::from_name("reacher2d").unwrap();
        let layout = Layout::new(6, 8, 2).unwrap();
        let narrow = GaussianPolicy::new(ParamVector::zeros(layout), vec![crate::policy::LOG_STD_MIN; 2]).unwrap();
        let (mean, std) = evaluate(&narrow, &mut env, 1, &mut rng::stream(1, 6)).unwrap();
        assert_eq!(std, 0.0);
        assert!(mean < 0.0);
        let a = evaluate(&narrow, &mut env, 5, &mut rng::stream(2, 6)).unwrap();
        let b = evaluate(&narrow, &mut env, 5, &mut rng::stream(2, 6)).unwrap();
        assert_eq!(a, b);
        assert!(evaluate(&narrow, &mut env, 0, &mut rng::stream(2, 6)).is_err());
    }

    #[test]
    fn near_deterministic_policy_on_fixed_start_has_tiny_spread() {
        // Same reset seed every episode, so only action noise can differ.
        let mut env = Env::from_name("pendulum").unwrap();
        let layout = Layout::new(3, 8, 1).unwrap();
        let policy = GaussianPolicy::new(ParamVector::init(layout, 4), vec![crate::policy::LOG_STD_MIN]).unwrap();
        let mut returns = Vec::new();
        let mut r = rng::stream(3, 0);
        for _ in 0..10 {
            let mut state = env.reset(17);
            let mut total = 0.0;
            loop {
                let (a, _) = policy.sample_action(&state, &mut r).unwrap();
                let step = env.step(&a).unwrap();
                total += step.reward;
                if step.done() {
                    break;
                }
                state = step.state;
            }
            returns.push(total);
        }
        let (m, s) = (math::mean(&returns), math::std_dev(&returns));
        assert!(s <= 1e-2 * m.abs() + 1e-3, "{m} {s}");
    }

    #[test]
    fn runs_are_reproducible_and_bookkept() {
        let a = train(small_config(Variant::Ppos)).unwrap();
        let b = train(small_config(Variant::Ppos)).unwrap();
        assert_eq!(a.record, b.record);
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.record.len(), 2);
        for (i, e) in a.record.entries.iter().enumerate() {
            assert_eq!(e.epoch, i);
            assert_eq!(e.env_steps, 200 * (i + 1));
            assert_eq!(e.episodes, 2);
            assert!(e.ratio_in_range_frac >= 0.0 && e.ratio_in_range_frac <= 1.0);
        }
        let summary = a.record.summary().unwrap();
        assert_eq!(summary.env_steps, 400);
        assert_eq!(summary.episodes, 4);
    }

    #[test]
    fn runaway_step_size_aborts() {
        let config = TrainConfig {
            learning_rate: 1e300,
            ..small_config(Variant::Ppo)
        };
        match train(config) {
            Err(Error::Aborted(a)) => {
                assert_eq!(a.epoch, 0);
                assert!(a.minibatch >= 1);
                assert!(a.record.is_empty());
            }
            other => panic!("expected an abort, got {other:?}"),
        }
    }

    #[test]
    fn fresh_batch_has_unit_ratios() {
        let mut trainer = Trainer::new(small_config(Variant::Pporb)).unwrap();
        trainer.run_epoch().unwrap();
        let batch = trainer.collect().unwrap();
        for i in 0..batch.len() {
            let lp = trainer.policy().gaussian_log_prob(&batch.states[i], &batch.actions[i]).unwrap();
            assert!((likelihood_ratio(lp, batch.log_probs_old[i]) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn best_epoch_picks_first_maximum() {
        let mut rec = RunRecord::default();
        for (i, r) in [1.0, 3.0, 3.0, 2.0].into_iter().enumerate() {
            rec.entries.push(EpochRecord {
                epoch: i,
                env_steps: 0,
                mean_reward: r,
                reward_std: 0.0,
                entropy: 0.0,
                ratio_in_range_frac: 1.0,
                clip_frac: 0.0,
                actor_loss: 0.0,
                critic_loss: 0.0,
                episodes: 0,
                skipped_updates: 0,
            });
        }
        assert_eq!(rec.best_epoch(), Some(1));
        assert_eq!(RunRecord::default().best_epoch(), None);
    }
}
