//! Numerical checks of the clipping rules, gradients, GAE and the bandit analysis.
//!
//! Every check uses an oracle independent of the code under test: central
//! finite differences, a brute-force double sum, or hand-derived constants.

use ppos_core::analysis::{self, TheoremReport};
use ppos_core::approximator::Layout;
use ppos_core::clip::{self, ClipSpec, SurrogateSample, Variant};
use ppos_core::gae::{self, Trajectory};
use ppos_core::policy::GaussianPolicy;
use ppos_core::rng;
use ppos_core::trainer::actor_objective_gradient;
use ppos_core::RolloutBatch;
use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// Outcome recorded as data, not judged.
    Reported,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Check {
    fn judged(name: &str, ok: bool, detail: String) -> Check {
        Check {
            name: name.to_string(),
            status: if ok { Status::Pass } else { Status::Fail },
            detail,
        }
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn random_spec(rng: &mut rng::Rng, variant: Variant) -> ClipSpec {
    let eps = rng.random_range(0.05..0.5);
    let alpha = rng.random_range(0.0..1.0);
    ClipSpec::new(variant, eps, alpha).expect("sampled spec is valid")
}

/// Boundary agreement, continuity at the kinks and the boundedness contrast.
pub fn clip_calculus(seed: u64) -> Vec<Check> {
    let mut rng = rng::stream(seed, 0);
    let mut worst_boundary = 0.0f64;
    let mut worst_kink = 0.0f64;
    for _ in 0..100 {
        for variant in Variant::ALL {
            let spec = random_spec(&mut rng, variant);
            let eps = spec.epsilon();
            for edge in [1.0 - eps, 1.0 + eps] {
                worst_boundary = worst_boundary.max((spec.apply(edge).unwrap() - edge).abs());
            }
            if variant == Variant::Ppos {
                // Just outside each kink the clipped branch must meet the identity.
                let h = 1e-13;
                let up = spec.apply(1.0 + eps + h).unwrap() - (1.0 + eps);
                let down = spec.apply(1.0 - eps - h).unwrap() - (1.0 - eps);
                worst_kink = worst_kink.max(up.abs()).max(down.abs());
            }
        }
    }
    let (eps, alpha) = (0.2, 0.3);
    let bound = 1.0 + eps + 2.0 * alpha;
    let mut ppos_max = 0.0f64;
    let mut r = 1e-6;
    while r < 1e9 {
        ppos_max = ppos_max.max(clip::clip_ppos(r, eps, alpha).unwrap().abs());
        r *= 1.01;
    }
    let far = clip::clip_pporb(1e6, eps, alpha).unwrap();
    vec![
        Check::judged(
            "clip boundary agreement",
            worst_boundary <= 1e-12,
            format!("300 random specs, max |F(1±eps) - (1±eps)| = {worst_boundary:e}"),
        ),
        Check::judged(
            "smoothed clip continuity",
            worst_kink <= 1e-12,
            format!("max jump at the kinks = {worst_kink:e}"),
        ),
        Check::judged(
            "smoothed clip bounded",
            ppos_max <= bound,
            format!("sup |F| over r in [1e-6, 1e9] = {ppos_max} <= {bound}"),
        ),
        Check::judged(
            "rollback clip unbounded",
            far < -1e5,
            format!("F(1e6) = {far}"),
        ),
    ]
}

/// Draws a ratio at least `margin` away from both kinks.
fn off_kink_ratio(rng: &mut rng::Rng, eps: f64, margin: f64) -> f64 {
    loop {
        let r: f64 = rng.random_range(1e-3..3.0);
        if ((r - 1.0).abs() - eps).abs() > margin {
            return r;
        }
    }
}

/// Slopes of the clip functions and the surrogate against central differences.
pub fn derivatives(seed: u64, points: usize) -> Vec<Check> {
    let mut rng = rng::stream(seed, 1);
    let h = 1e-6;
    let mut worst_clip = 0.0f64;
    let mut worst_surrogate = 0.0f64;
    for i in 0..points {
        let spec = random_spec(&mut rng, Variant::ALL[i % 3]);
        let r = off_kink_ratio(&mut rng, spec.epsilon(), 1e-4);
        let adv = rng.random_range(-2.0..2.0);
        let fd = (spec.apply(r + h).unwrap() - spec.apply(r - h).unwrap()) / (2.0 * h);
        let slope = clip::clip_derivative(&spec, r).unwrap().value;
        worst_clip = worst_clip.max(relative_error(slope, fd, 1.0));
        let s = |x: f64| clip::surrogate(&spec, SurrogateSample::new(x, adv).unwrap());
        let fd = (s(r + h) - s(r - h)) / (2.0 * h);
        let g = clip::surrogate_gradient_wrt_ratio(&spec, SurrogateSample::new(r, adv).unwrap());
        worst_surrogate = worst_surrogate.max(relative_error(g, fd, 1.0));
    }
    vec![
        Check::judged(
            "clip derivative vs finite differences",
            worst_clip <= 1e-7,
            format!("{points} points, max relative error {worst_clip:e}"),
        ),
        Check::judged(
            "surrogate gradient vs finite differences",
            worst_surrogate <= 1e-7,
            format!("{points} points, max relative error {worst_surrogate:e}"),
        ),
    ]
}

/// A fixed 8-sample batch for a 2-4-1 policy with ratios spread over both
/// clipped regions and the interior, none near a kink.
pub fn gradient_check_batch(policy: &GaussianPolicy, seed: u64) -> (RolloutBatch, Vec<f64>) {
    let mut rng = rng::stream(seed, 2);
    let log_ratios = [0.6, -0.5, 0.05, -0.08, 0.35, -0.3, 0.0, 0.12];
    let n = log_ratios.len();
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut old = Vec::new();
    for lr in log_ratios {
        let s = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let a = vec![rng.random_range(-1.5..1.5)];
        old.push(policy.gaussian_log_prob(&s, &a).unwrap() - lr);
        states.push(s);
        actions.push(a);
    }
    let advantages = vec![1.0, -0.7, 0.4, -1.2, -0.9, 0.8, 0.3, 1.5];
    let batch = RolloutBatch {
        states,
        actions,
        rewards: vec![0.0; n],
        dones: vec![false; n],
        terminals: vec![false; n],
        log_probs_old: old,
        values_old: vec![0.0; n],
        bootstrap_values: vec![0.0; n],
        advantages: advantages.clone(),
        returns: vec![0.0; n],
        episode_returns: vec![],
        episode_lengths: vec![],
        partial_episode: None,
    };
    (batch, advantages)
}

/// Worst relative error of the analytic actor gradient over all parameters, per variant.
pub fn actor_gradient_errors(seed: u64) -> Vec<(Variant, f64)> {
    let policy = {
        let mut p = GaussianPolicy::init(Layout::new(2, 4, 1).unwrap(), seed);
        let mut flat = p.flat_params();
        *flat.last_mut().unwrap() = -0.3;
        p.set_flat_params(&flat).unwrap();
        p
    };
    let (batch, adv) = gradient_check_batch(&policy, seed);
    let idx: Vec<usize> = (0..batch.len()).collect();
    let h = 1e-6;
    Variant::ALL
        .iter()
        .map(|&variant| {
            let spec = ClipSpec::new(variant, 0.2, 0.3).unwrap();
            let (_, grad, _) = actor_objective_gradient(&policy, &batch, &adv, &idx, &spec).unwrap();
            let base = policy.flat_params();
            let objective = |flat: &[f64]| {
                let mut p = policy.clone();
                p.set_flat_params(flat).unwrap();
                actor_objective_gradient(&p, &batch, &adv, &idx, &spec).unwrap().0
            };
            let mut worst = 0.0f64;
            for k in 0..base.len() {
                let mut up = base.clone();
                let mut down = base.clone();
                up[k] += h;
                down[k] -= h;
                let fd = (objective(&up) - objective(&down)) / (2.0 * h);
                worst = worst.max(relative_error(grad[k], fd, 1e-3));
            }
            (variant, worst)
        })
        .collect()
}

pub fn actor_gradient(seed: u64) -> Vec<Check> {
    actor_gradient_errors(seed)
        .into_iter()
        .map(|(v, worst)| {
            Check::judged(
                &format!("{v} actor gradient vs finite differences"),
                worst <= 1e-5,
                format!("2-4-1 policy, 8 samples, max relative error {worst:e}"),
            )
        })
        .collect()
}

/// `A_t = sum_l (gamma lambda)^l delta_{t+l}`, summed directly and stopped at the first terminal.
pub fn gae_double_sum(tr: &Trajectory, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = tr.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let next = match (tr.done[t], t + 1 < n) {
                (true, _) => 0.0,
                (false, true) => tr.values[t + 1],
                (false, false) => tr.bootstrap_value,
            };
            tr.rewards[t] + gamma * next - tr.values[t]
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            let mut weight = 1.0;
            for (d, &done) in delta[t..].iter().zip(&tr.done[t..]) {
                total += weight * d;
                if done {
                    break;
                }
                weight *= gamma * lambda;
            }
            total
        })
        .collect()
}

pub fn gae_oracle(seed: u64, trajectories: usize) -> Vec<Check> {
    let mut rng = rng::stream(seed, 3);
    let mut worst = 0.0f64;
    for _ in 0..trajectories {
        let n = rng.random_range(1..=32);
        let tr = Trajectory::new(
            (0..n).map(|_| rng.random_range(-5.0..5.0)).collect(),
            (0..n).map(|_| rng.random_range(-5.0..5.0)).collect(),
            rng.random_range(-5.0..5.0),
            (0..n).map(|_| rng.random_bool(0.1)).collect(),
        )
        .unwrap();
        let gamma = rng.random_range(0.0..0.999);
        let lambda = rng.random_range(0.0..=1.0);
        let fast = gae::gae_advantages(&tr, gamma, lambda).unwrap();
        for (a, b) in fast.iter().zip(gae_double_sum(&tr, gamma, lambda)) {
            worst = worst.max((a - b).abs());
        }
    }
    vec![Check::judged(
        "advantage recursion vs double sum",
        worst <= 1e-10,
        format!("{trajectories} trajectories, max abs error {worst:e}"),
    )]
}

/// Slope ordering of the two restoring rules at clipped-region points.
pub fn slope_dominance(seed: u64, points: usize) -> Vec<Check> {
    let mut rng = rng::stream(seed, 4);
    let eps = 0.2;
    [0.05, 0.2, 0.3]
        .into_iter()
        .map(|alpha| {
            let ppos = ClipSpec::ppos(eps, alpha).unwrap();
            let pporb = ClipSpec::pporb(eps, alpha).unwrap();
            let mut violations = 0;
            for i in 0..points {
                let r = if i % 2 == 0 {
                    rng.random_range(1.0 + eps + 1e-9..10.0)
                } else {
                    rng.random_range(1e-6..1.0 - eps - 1e-9)
                };
                let a = clip::clip_derivative(&ppos, r).unwrap().value.abs();
                let b = clip::clip_derivative(&pporb, r).unwrap().value.abs();
                if a >= b {
                    violations += 1;
                }
            }
            Check::judged(
                &format!("slope ordering at alpha {alpha}"),
                violations == 0,
                format!("{points} clipped points, {violations} with |smoothed slope| >= |rollback slope|"),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremStudy {
    pub epsilon: f64,
    pub alpha: f64,
    pub beta_grid: Vec<f64>,
    pub instances: Vec<analysis::TheoremInstance>,
    pub reports: Vec<TheoremReport>,
    pub by_beta: Vec<analysis::BetaOutcome>,
}

pub fn theorem_study(seed: u64, count: usize, beta_grid: &[f64], epsilon: f64, alpha: f64) -> Result<TheoremStudy, String> {
    let instances = analysis::theorem_instance_family(count, seed, epsilon, alpha, beta_grid).map_err(|e| e.to_string())?;
    let reports = instances
        .iter()
        .map(analysis::verify_theorem)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let by_beta = analysis::tally_by_beta(&reports);
    Ok(TheoremStudy {
        epsilon,
        alpha,
        beta_grid: beta_grid.to_vec(),
        instances,
        reports,
        by_beta,
    })
}

pub fn theorem_checks(study: &TheoremStudy) -> Vec<Check> {
    let premised = study.reports.iter().filter(|r| r.premise_satisfied).count();
    let mut checks = vec![Check::judged(
        "bandit instances satisfy the premise",
        premised == study.reports.len() && premised >= 20,
        format!("{premised} of {} instances", study.reports.len()),
    )];
    for o in &study.by_beta {
        checks.push(Check {
            name: format!("smoothed ratio closer to 1 at beta {:e}", o.beta),
            status: Status::Reported,
            detail: format!("{} of {} clipped samples", o.holds, o.total),
        });
    }
    checks
}

/// Observation dimensions and alpha values of the reference control tasks.
pub const REFERENCE_ALPHAS: [(usize, f64); 5] = [(376, 0.05), (111, 0.2), (17, 0.3), (8, 0.3), (11, 0.3)];

/// Largest dimension at which the guide is still above its floor.
pub fn alpha_guide_floor_dim() -> usize {
    (1..).find(|&d| analysis::alpha_for_dimension(d + 1).unwrap() == analysis::ALPHA_FLOOR).unwrap()
}

pub fn alpha_guide() -> Vec<Check> {
    let worst = REFERENCE_ALPHAS
        .iter()
        .map(|&(d, a)| (analysis::alpha_for_dimension(d).unwrap() - a).abs())
        .fold(0.0f64, f64::max);
    let last = alpha_guide_floor_dim();
    let decreasing = (1..last).all(|d| {
        analysis::alpha_for_dimension(d + 1).unwrap() < analysis::alpha_for_dimension(d).unwrap()
    });
    let never_rises = (1..4 * last).all(|d| {
        analysis::alpha_for_dimension(d + 1).unwrap() <= analysis::alpha_for_dimension(d).unwrap()
    });
    vec![
        Check::judged(
            "alpha guide matches reference values",
            worst <= 0.06,
            format!("max deviation {worst:.5} over dims 376, 111, 17, 8, 11"),
        ),
        Check::judged(
            "alpha guide strictly decreasing",
            decreasing && never_rises,
            format!("strict on 1..={last}, floor {} beyond", analysis::ALPHA_FLOOR),
        ),
    ]
}

/// Everything except the bandit study, which needs a step-size grid.
pub fn hard_suite(seed: u64) -> Vec<Check> {
    let mut checks = clip_calculus(seed);
    checks.extend(derivatives(seed, 10_000));
    checks.extend(actor_gradient(seed));
    checks.extend(gae_oracle(seed, 1000));
    checks.extend(slope_dominance(seed, 1000));
    checks.extend(alpha_guide());
    checks
}
