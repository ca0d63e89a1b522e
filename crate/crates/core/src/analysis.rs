//! Bandit experiments on the clipping rules, the alpha guide and cross-seed summaries.
//!
//! The bandit policy is `N(theta, 1)` with a single scalar parameter and no
//! state, so the ratio of a sampled action `a` is
//! `r(theta) = exp((a - theta_old)^2 / 2 - (a - theta)^2 / 2)` with
//! `dr/dtheta = r * (a - theta)`, and every quantity below is exact.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clip::{self, ClipSpec, SurrogateSample, Variant};
use crate::error::{check_len, Error, Result};
use crate::math;
use crate::rng;
use crate::trainer::RunRecord;

/// A one-parameter Gaussian bandit and the step sizes to probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremInstance {
    pub theta_old: f64,
    pub theta_0: f64,
    pub sampled_actions: Vec<f64>,
    pub advantages: Vec<f64>,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta_grid: Vec<f64>,
}

/// Outcome for one clipped sample at one step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremRow {
    pub beta: f64,
    pub sample: usize,
    pub ratio_ppos: f64,
    pub ratio_pporb: f64,
    pub dist_ppos: f64,
    pub dist_pporb: f64,
    /// `|r_ppos - 1| < |r_pporb - 1|`.
    pub inequality_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub premise_satisfied: bool,
    pub omega: Vec<usize>,
    pub grad_ppos: f64,
    pub grad_pporb: f64,
    pub rows: Vec<TheoremRow>,
}

impl TheoremInstance {
    pub fn validate(&self) -> Result<()> {
        check_len("advantages", self.sampled_actions.len(), self.advantages.len())?;
        if self.sampled_actions.is_empty() {
            return Err(Error::InvalidConfig("bandit instance needs at least one sample".into()));
        }
        if self.beta_grid.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::InvalidConfig("step sizes must be finite and non-negative".into()));
        }
        // Both specs must be constructible.
        self.spec(Variant::Pporb)?;
        self.spec(Variant::Ppos)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sampled_actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sampled_actions.is_empty()
    }

    pub fn spec(&self, variant: Variant) -> Result<ClipSpec> {
        ClipSpec::new(variant, self.epsilon, self.alpha)
    }

    /// `r_t(theta)`.
    pub fn ratio(&self, t: usize, theta: f64) -> f64 {
        let a = self.sampled_actions[t];
        let d_old = a - self.theta_old;
        let d_new = a - theta;
        math::exp(0.5 * d_old * d_old - 0.5 * d_new * d_new)
    }

    /// `dr_t/dtheta`.
    pub fn ratio_gradient(&self, t: usize, theta: f64) -> f64 {
        self.ratio(t, theta) * (self.sampled_actions[t] - theta)
    }

    /// Mean surrogate of `variant` at `theta`.
    pub fn objective(&self, variant: Variant, theta: f64) -> Result<f64> {
        let spec = self.spec(variant)?;
        let mut total = 0.0;
        for t in 0..self.len() {
            let sample = SurrogateSample::new(self.ratio(t, theta), self.advantages[t])?;
            total += clip::surrogate(&spec, sample);
        }
        Ok(total / self.len() as f64)
    }

    /// Analytic derivative of [`TheoremInstance::objective`].
    pub fn objective_gradient(&self, variant: Variant, theta: f64) -> Result<f64> {
        let spec = self.spec(variant)?;
        let mut total = 0.0;
        for t in 0..self.len() {
            let sample = SurrogateSample::new(self.ratio(t, theta), self.advantages[t])?;
            total += clip::surrogate_gradient_wrt_ratio(&spec, sample) * self.ratio_gradient(t, theta);
        }
        Ok(total / self.len() as f64)
    }
}

/// Whether sample `t` is clipped at `theta_0` in the direction of its advantage:
/// `|r - 1| >= eps` and `r * A >= 1 * A`.
pub fn omega_membership(instance: &TheoremInstance, t: usize) -> bool {
    let r = instance.ratio(t, instance.theta_0);
    let a = instance.advantages[t];
    math::abs(r - 1.0) >= instance.epsilon && r * a >= a
}

fn omega(instance: &TheoremInstance) -> Vec<usize> {
    (0..instance.len()).filter(|&t| omega_membership(instance, t)).collect()
}

/// `Omega` non-empty and every member's `dr_t * A_t` shares the sign of the sum over `Omega`.
pub fn premise_holds(instance: &TheoremInstance) -> bool {
    let members = omega(instance);
    let push = |t: usize| instance.ratio_gradient(t, instance.theta_0) * instance.advantages[t];
    let total: f64 = members.iter().map(|&t| push(t)).sum();
    !members.is_empty() && members.iter().all(|&t| push(t) * total > 0.0)
}

/// Takes one gradient-ascent step of size `beta` from `theta_0` under each
/// rule and compares how far each clipped sample's ratio lands from 1.
pub fn verify_theorem(instance: &TheoremInstance) -> Result<TheoremReport> {
    instance.validate()?;
    let grad_ppos = instance.objective_gradient(Variant::Ppos, instance.theta_0)?;
    let grad_pporb = instance.objective_gradient(Variant::Pporb, instance.theta_0)?;
    let members = omega(instance);
    let mut rows = Vec::with_capacity(members.len() * instance.beta_grid.len());
    for &beta in &instance.beta_grid {
        let theta_ppos = instance.theta_0 + beta * grad_ppos;
        let theta_pporb = instance.theta_0 + beta * grad_pporb;
        for &t in &members {
            let ratio_ppos = instance.ratio(t, theta_ppos);
            let ratio_pporb = instance.ratio(t, theta_pporb);
            let dist_ppos = math::abs(ratio_ppos - 1.0);
            let dist_pporb = math::abs(ratio_pporb - 1.0);
            rows.push(TheoremRow {
                beta,
                sample: t,
                ratio_ppos,
                ratio_pporb,
                dist_ppos,
                dist_pporb,
                inequality_holds: dist_ppos < dist_pporb,
            });
        }
    }
    Ok(TheoremReport {
        premise_satisfied: premise_holds(instance),
        omega: members,
        grad_ppos,
        grad_pporb,
        rows,
    })
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || points == 0 {
        return Err(Error::InvalidConfig(alloc::format!(
            "log grid needs 0 < lo <= hi and at least one point, got {lo}..{hi} with {points}"
        )));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (math::log10(lo), math::log10(hi));
    let step = (b - a) / (points - 1) as f64;
    Ok((0..points)
        .map(|i| match i {
            0 => lo,
            _ if i + 1 == points => hi,
            _ => math::pow(10.0, a + step * i as f64),
        })
        .collect())
}

/// Minimum distance from any ratio to a clip boundary; instances closer than
/// this are skipped so that finite differences stay away from the kinks.
pub const KINK_MARGIN: f64 = 1e-3;

/// The first `count` random bandit instances (8 samples each) that satisfy
/// the premise. Instance `k` is drawn from its own stream of `seed`.
pub fn theorem_instance_family(
    count: usize,
    seed: u64,
    epsilon: f64,
    alpha: f64,
    beta_grid: &[f64],
) -> Result<Vec<TheoremInstance>> {
    let mut family = Vec::with_capacity(count);
    let mut attempt = 0u64;
    while family.len() < count {
        if attempt >= 1000 * count as u64 + 1000 {
            return Err(Error::InvalidConfig(
                "could not find enough bandit instances satisfying the premise".into(),
            ));
        }
        let mut r = rng::substream(seed, 0, attempt, 0);
        attempt += 1;
        let theta_0 = r.random_range(0.2..0.8) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let sampled_actions: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut r)).collect();
        let advantages: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
        let instance = TheoremInstance {
            theta_old: 0.0,
            theta_0,
            sampled_actions,
            advantages,
            epsilon,
            alpha,
            beta_grid: beta_grid.to_vec(),
        };
        instance.validate()?;
        let near_kink = (0..instance.len()).any(|t| {
            let d = math::abs(instance.ratio(t, theta_0) - 1.0);
            math::abs(d - epsilon) < KINK_MARGIN
        });
        if !near_kink && premise_holds(&instance) {
            family.push(instance);
        }
    }
    Ok(family)
}

/// Fraction of rows with the inequality holding, per step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaOutcome {
    pub beta: f64,
    pub holds: usize,
    pub total: usize,
}

pub fn tally_by_beta(reports: &[TheoremReport]) -> Vec<BetaOutcome> {
    let mut out: Vec<BetaOutcome> = Vec::new();
    for row in reports.iter().flat_map(|r| &r.rows) {
        let idx = match out.iter().position(|o| o.beta == row.beta) {
            Some(i) => i,
            None => {
                out.push(BetaOutcome {
                    beta: row.beta,
                    holds: 0,
                    total: 0,
                });
                out.len() - 1
            }
        };
        out[idx].total += 1;
        out[idx].holds += row.inequality_holds as usize;
    }
    out
}

pub const ALPHA_SCALE: f64 = 0.3333;
pub const ALPHA_DECAY: f64 = 0.0048;
pub const ALPHA_FLOOR: f64 = 0.01;

/// Suggested smoothing strength for an observation space of `obs_dim`
/// dimensions: `0.3333 * exp(-0.0048 * obs_dim)`, kept in `[0.01, 0.3333]`.
pub fn alpha_for_dimension(obs_dim: usize) -> Result<f64> {
    if obs_dim == 0 {
        return Err(Error::Domain {
            what: "observation dimension",
            value: 0.0,
        });
    }
    let raw = ALPHA_SCALE * math::exp(-ALPHA_DECAY * obs_dim as f64);
    Ok(raw.clamp(ALPHA_FLOOR, ALPHA_SCALE))
}

/// Cross-run statistics in the best-window convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunsSummary {
    pub window: usize,
    /// Best-window mean reward of each record, in input order.
    pub per_run: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Epoch range `[start, end]` of `window` epochs centered on `best`, cut at the run bounds.
pub fn best_window(len: usize, best: usize, window: usize) -> (usize, usize) {
    let start = best.saturating_sub((window - 1) / 2);
    let end = (best + window / 2).min(len - 1);
    (start, end)
}

/// For each record, averages the mean reward over the window around its best
/// epoch; then reports mean and population std of those values.
pub fn summarize_runs(records: &[RunRecord], window: usize) -> Result<RunsSummary> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no runs to summarize".into()));
    }
    if window == 0 {
        return Err(Error::InvalidConfig("window must be at least 1".into()));
    }
    let mut per_run = Vec::with_capacity(records.len());
    for record in records {
        let best = record
            .best_epoch()
            .ok_or_else(|| Error::InvalidConfig("cannot summarize a run with no epochs".into()))?;
        let (start, end) = best_window(record.len(), best, window);
        let rewards: Vec<f64> = record.entries[start..=end].iter().map(|e| e.mean_reward).collect();
        per_run.push(math::mean(&rewards));
    }
    // Sorting makes the statistics independent of record order down to the last bit.
    let mut sorted = per_run.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(RunsSummary {
        window,
        mean: math::mean(&sorted),
        std: math::std_dev(&sorted),
        per_run,
    })
}
