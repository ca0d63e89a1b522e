use ppos_core::approximator::Layout;
use ppos_core::env::RolloutBatch;
use ppos_core::policy::GaussianPolicy;
use ppos_core::trainer::{self, actor_objective_gradient, Trainer};
use ppos_core::{ClipSpec, TrainConfig, Variant};

fn batch_for(policy: &GaussianPolicy, log_ratios: &[f64]) -> RolloutBatch {
    let n = log_ratios.len();
    let states: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect();
    let actions: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 * 1.3).sin() * 1.2]).collect();
    let old = states
        .iter()
        .zip(&actions)
        .zip(log_ratios)
        .map(|((s, a), lr)| policy.gaussian_log_prob(s, a).unwrap() - lr)
        .collect();
    RolloutBatch {
        states,
        actions,
        rewards: vec![0.0; n],
        dones: vec![false; n],
        terminals: vec![false; n],
        log_probs_old: old,
        values_old: vec![0.0; n],
        bootstrap_values: vec![0.0; n],
        advantages: vec![0.0; n],
        returns: vec![0.0; n],
        episode_returns: vec![],
        episode_lengths: vec![],
        partial_episode: None,
    }
}

#[test]
fn actor_gradient_matches_central_differences() {
    let policy = GaussianPolicy::init(Layout::new(2, 4, 1).unwrap(), 12);
    let batch = batch_for(&policy, &[0.5, -0.45, 0.1, -0.1, 0.3, -0.6, 0.02, 0.7]);
    let adv = [0.8, -1.1, 0.5, 0.9, -0.4, 0.6, -1.3, 1.0];
    let idx: Vec<usize> = (0..8).collect();
    let h = 1e-6;
    for variant in Variant::ALL {
        let spec = ClipSpec::new(variant, 0.2, 0.3).unwrap();
        let (_, grad, _) = actor_objective_gradient(&policy, &batch, &adv, &idx, &spec).unwrap();
        let base = policy.flat_params();
        for k in 0..base.len() {
            let at = |delta: f64| {
                let mut flat = base.clone();
                flat[k] += delta;
                let mut p = policy.clone();
                p.set_flat_params(&flat).unwrap();
                actor_objective_gradient(&p, &batch, &adv, &idx, &spec).unwrap().0
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let rel = (grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1e-3);
            assert!(rel <= 1e-5, "{variant} parameter {k}: {} vs {fd}", grad[k]);
        }
    }
}

#[test]
fn unclippable_range_makes_variants_identical() {
    let make = |v| {
        Trainer::new(TrainConfig {
            clip: ClipSpec::with_wide_range(v, 1e3, 0.3).unwrap(),
            epochs: 3,
            steps_per_epoch: 300,
            hidden_dim: 16,
            env_name: "pendulum".into(),
            seed: 8,
            ..TrainConfig::default()
        })
        .unwrap()
    };
    let mut runs: Vec<Trainer> = Variant::ALL.iter().map(|&v| make(v)).collect();
    for _ in 0..3 {
        for r in runs.iter_mut() {
            r.run_epoch().unwrap();
        }
        assert_eq!(runs[0].policy(), runs[1].policy());
        assert_eq!(runs[1].policy(), runs[2].policy());
        assert_eq!(runs[0].critic(), runs[2].critic());
    }
}

#[test]
fn bookkeeping_reconciles_with_config() {
    for (env, steps, episode_len) in [("reacher2d", 450, 100), ("pendulum", 450, 200), ("pointmass-n3", 250, 100)] {
        let config = TrainConfig {
            clip: ClipSpec::ppos(0.2, 0.25).unwrap(),
            epochs: 3,
            steps_per_epoch: steps,
            batch_size: 64,
            hidden_dim: 8,
            env_name: env.into(),
            seed: 3,
            ..TrainConfig::default()
        };
        let out = trainer::train(config).unwrap();
        assert_eq!(out.record.len(), 3);
        for (i, e) in out.record.entries.iter().enumerate() {
            assert_eq!(e.env_steps, steps * (i + 1));
            // Every batch starts from a reset, so completed episodes are floor(steps / length).
            assert_eq!(e.episodes, steps / episode_len, "{env}");
            assert!(e.clip_frac >= 0.0 && e.clip_frac <= 1.0);
            assert!(e.mean_reward.is_finite() && e.critic_loss.is_finite());
        }
        let s = out.record.summary().unwrap();
        assert_eq!(s.env_steps, 3 * steps);
        assert_eq!(s.episodes, 3 * (steps / episode_len));
    }
}
