//! Run configuration from layered sources: flags over plan file over defaults.

use std::fs;
use std::path::{Path, PathBuf};

use ppos_core::analysis::alpha_for_dimension;
use ppos_core::{ClipSpec, Env, TrainConfig, Variant};
use serde::{Deserialize, Serialize};

/// Alpha used for rollback clipping when none is given.
pub const DEFAULT_ROLLBACK_ALPHA: f64 = 0.3;
pub const DEFAULT_EPSILON: f64 = 0.2;

/// Any subset of the training settings. Unset fields fall through to the next layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub env: Option<String>,
    pub variant: Option<Variant>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub steps_per_epoch: Option<usize>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub learning_rate: Option<f64>,
    pub repeat_per_collect: Option<usize>,
    pub batch_size: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub normalize_advantages: Option<bool>,
    pub max_grad_norm: Option<f64>,
}

macro_rules! layer {
    ($self:ident, $lower:ident, $($field:ident),*) => {
        Overrides { $($field: $self.$field.clone().or_else(|| $lower.$field.clone()),)* }
    };
}

impl Overrides {
    /// Fields set here win; the rest come from `lower`.
    pub fn over(&self, lower: &Overrides) -> Overrides {
        layer!(
            self, lower, env, variant, alpha, epsilon, seed, epochs, steps_per_epoch, gamma, lambda,
            learning_rate, repeat_per_collect, batch_size, hidden_dim, normalize_advantages, max_grad_norm
        )
    }

    /// Fills the remaining gaps from the defaults and validates.
    pub fn resolve(&self) -> Result<TrainConfig, String> {
        let d = TrainConfig::default();
        let env_name = self.env.clone().unwrap_or(d.env_name);
        let env = Env::from_name(&env_name).map_err(|e| e.to_string())?;
        let variant = self.variant.unwrap_or(Variant::Ppo);
        let alpha = match (variant, self.alpha) {
            (Variant::Ppo, _) => 0.0,
            (_, Some(a)) => a,
            (Variant::Pporb, None) => DEFAULT_ROLLBACK_ALPHA,
            (Variant::Ppos, None) => alpha_for_dimension(env.spec().obs_dim).map_err(|e| e.to_string())?,
        };
        let clip = ClipSpec::new(variant, self.epsilon.unwrap_or(DEFAULT_EPSILON), alpha)
            .map_err(|e| e.to_string())?;
        let config = TrainConfig {
            clip,
            gamma: self.gamma.unwrap_or(d.gamma),
            lambda: self.lambda.unwrap_or(d.lambda),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            epochs: self.epochs.unwrap_or(d.epochs),
            steps_per_epoch: self.steps_per_epoch.unwrap_or(d.steps_per_epoch),
            repeat_per_collect: self.repeat_per_collect.unwrap_or(d.repeat_per_collect),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            hidden_dim: self.hidden_dim.unwrap_or(d.hidden_dim),
            env_name,
            seed: self.seed.unwrap_or(d.seed),
            normalize_advantages: self.normalize_advantages.unwrap_or(d.normalize_advantages),
            max_grad_norm: self.max_grad_norm.or(d.max_grad_norm),
        };
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }

    /// Whether an alpha was given that the chosen variant will not use.
    pub fn alpha_ignored(&self) -> bool {
        self.alpha.is_some() && self.variant.unwrap_or(Variant::Ppo) == Variant::Ppo
    }
}

/// Contents of a `--plan` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    #[serde(default)]
    pub base: Overrides,
    pub variants: Option<Vec<Variant>>,
    pub seeds: Option<Vec<u64>>,
    pub alphas: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
}

impl PlanFile {
    pub fn load(path: &Path) -> Result<PlanFile, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read plan {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid plan {}: {e}", path.display()))
    }
}

/// Parses `a..b` (inclusive) or a comma list of seeds; rejects duplicates.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let seeds: Vec<u64> = if let Some((lo, hi)) = s.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| format!("bad seed range {s:?}"))?;
        let hi: u64 = hi.trim().parse().map_err(|_| format!("bad seed range {s:?}"))?;
        if hi < lo {
            return Err(format!("empty seed range {s:?}"));
        }
        (lo..=hi).collect()
    } else {
        s.split(',')
            .map(|x| x.trim().parse::<u64>().map_err(|_| format!("bad seed {x:?}")))
            .collect::<Result<_, _>>()?
    };
    check_distinct(&seeds, "seed")?;
    Ok(seeds)
}

pub fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>, String> {
    let values: Vec<f64> = s
        .split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("bad {what} {x:?}"))
        })
        .collect::<Result<_, _>>()?;
    Ok(values)
}

pub fn check_distinct<T: PartialEq + std::fmt::Debug>(values: &[T], what: &str) -> Result<(), String> {
    if values.is_empty() {
        return Err(format!("{what} list is empty"));
    }
    for (i, v) in values.iter().enumerate() {
        if values[..i].contains(v) {
            return Err(format!("duplicate {what} {v:?}"));
        }
    }
    Ok(())
}

pub fn parse_variants(s: &str) -> Result<Vec<Variant>, String> {
    let v: Vec<Variant> = s
        .split(',')
        .map(|x| Variant::parse(x.trim()).ok_or_else(|| format!("unknown variant {x:?}")))
        .collect::<Result<_, _>>()?;
    check_distinct(&v, "variant")?;
    Ok(v)
}

/// `lo..hi` of positive reals.
pub fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once("..").ok_or_else(|| format!("expected lo..hi, found {s:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad range start in {s:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad range end in {s:?}"))?;
    Ok((lo, hi))
}
