//! Clipping functions for the likelihood ratio and the per-sample surrogate.
//!
//! All three rules agree with the identity on `(1 - eps, 1 + eps)` and differ
//! only outside it:
//!
//! ```text
//! flat      F(r) = 1 ± eps
//! rollback  F(r) = -alpha * r + (1 + alpha)(1 ± eps)
//! smoothed  F(r) = -alpha * tanh(r - 1) + 1 ± eps ± alpha * tanh(eps)
//! ```
//!
//! The surrogate for one sample is `min(r * A, F(r) * A)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Which clipping rule to apply outside the clip range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Flat clipping.
    Ppo,
    /// Rollback clipping: a straight line of slope `-alpha`.
    Pporb,
    /// Smoothed clipping: `-alpha * tanh(r - 1)` shifted to stay continuous.
    Ppos,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Ppo, Variant::Pporb, Variant::Ppos];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ppo => "ppo",
            Variant::Pporb => "pporb",
            Variant::Ppos => "ppos",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s.to_ascii_lowercase().as_str() {
            "ppo" => Some(Variant::Ppo),
            "pporb" => Some(Variant::Pporb),
            "ppos" => Some(Variant::Ppos),
            _ => None,
        }
    }
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// A clipping rule together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipSpec {
    variant: Variant,
    epsilon: f64,
    alpha: f64,
}

impl ClipSpec {
    /// Validated constructor: `0 < epsilon < 1`, finite `alpha`, and
    /// `alpha >= 0` unless the variant is [`Variant::Ppos`]. `alpha` is
    /// stored but unused for [`Variant::Ppo`].
    pub fn new(variant: Variant, epsilon: f64, alpha: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "epsilon must be in (0,1), got {epsilon}"
            )));
        }
        Self::with_wide_range(variant, epsilon, alpha)
    }

    /// Like [`ClipSpec::new`] but accepts any positive finite `epsilon`.
    ///
    /// With `epsilon >= 1` the lower clip boundary is non-positive and never
    /// reached; a very large `epsilon` disables clipping altogether, which is
    /// how the three variants are checked for identical behavior.
    pub fn with_wide_range(variant: Variant, epsilon: f64, alpha: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        if !alpha.is_finite() {
            return Err(Error::InvalidConfig(alloc::format!(
                "alpha must be finite, got {alpha}"
            )));
        }
        if alpha < 0.0 && variant == Variant::Pporb {
            return Err(Error::InvalidConfig(alloc::format!(
                "alpha must be non-negative for pporb, got {alpha}"
            )));
        }
        Ok(ClipSpec {
            variant,
            epsilon,
            alpha,
        })
    }

    pub fn ppo(epsilon: f64) -> Result<Self> {
        Self::new(Variant::Ppo, epsilon, 0.0)
    }

    pub fn pporb(epsilon: f64, alpha: f64) -> Result<Self> {
        Self::new(Variant::Pporb, epsilon, alpha)
    }

    pub fn ppos(epsilon: f64, alpha: f64) -> Result<Self> {
        Self::new(Variant::Ppos, epsilon, alpha)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The slope/scale coefficient; meaningless for flat clipping.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Whether `ratio` lies in the closed clip range `[1 - eps, 1 + eps]`.
    pub fn in_range(&self, ratio: f64) -> bool {
        ratio >= 1.0 - self.epsilon && ratio <= 1.0 + self.epsilon
    }

    /// Evaluates the clipping function selected by this spec.
    pub fn apply(&self, ratio: f64) -> Result<f64> {
        match self.variant {
            Variant::Ppo => clip_ppo(ratio, self.epsilon),
            Variant::Pporb => clip_pporb(ratio, self.epsilon, self.alpha),
            Variant::Ppos => clip_ppos(ratio, self.epsilon, self.alpha),
        }
    }
}

/// One `(ratio, advantage)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateSample {
    ratio: f64,
    advantage: f64,
}

impl SurrogateSample {
    pub fn new(ratio: f64, advantage: f64) -> Result<Self> {
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::Domain {
                what: "ratio",
                value: ratio,
            });
        }
        if !advantage.is_finite() {
            return Err(Error::Domain {
                what: "advantage",
                value: advantage,
            });
        }
        Ok(SurrogateSample { ratio, advantage })
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn advantage(&self) -> f64 {
        self.advantage
    }
}

fn finite_ratio(ratio: f64) -> Result<f64> {
    if ratio.is_finite() {
        Ok(ratio)
    } else {
        Err(Error::Domain {
            what: "ratio",
            value: ratio,
        })
    }
}

/// Flat clipping of `ratio` to `[1 - epsilon, 1 + epsilon]`.
pub fn clip_ppo(ratio: f64, epsilon: f64) -> Result<f64> {
    let r = finite_ratio(ratio)?;
    Ok(if r <= 1.0 - epsilon {
        1.0 - epsilon
    } else if r >= 1.0 + epsilon {
        1.0 + epsilon
    } else {
        r
    })
}

/// Rollback clipping. Unbounded below as `ratio` grows.
pub fn clip_pporb(ratio: f64, epsilon: f64, alpha: f64) -> Result<f64> {
    let r = finite_ratio(ratio)?;
    Ok(if r <= 1.0 - epsilon {
        -alpha * r + (1.0 + alpha) * (1.0 - epsilon)
    } else if r >= 1.0 + epsilon {
        -alpha * r + (1.0 + alpha) * (1.0 + epsilon)
    } else {
        r
    })
}

/// Smoothed `tanh` clipping, continuous at both boundaries.
pub fn clip_ppos(ratio: f64, epsilon: f64, alpha: f64) -> Result<f64> {
    let r = finite_ratio(ratio)?;
    let shift = alpha * math::tanh(epsilon);
    Ok(if r >= 1.0 + epsilon {
        -alpha * math::tanh(r - 1.0) + 1.0 + epsilon + shift
    } else if r <= 1.0 - epsilon {
        -alpha * math::tanh(r - 1.0) + 1.0 - epsilon - shift
    } else {
        r
    })
}

/// Smoothed clipping with the branch offsets exchanged, i.e. the lower branch
/// carries `1 + eps + alpha * tanh(eps)` and the upper one `1 - eps - alpha * tanh(eps)`.
///
/// This form jumps at both boundaries. It exists for side-by-side comparison
/// in the verification report and is never used for training.
pub fn clip_ppos_swapped_offsets(ratio: f64, epsilon: f64, alpha: f64) -> Result<f64> {
    let r = finite_ratio(ratio)?;
    let shift = alpha * math::tanh(epsilon);
    Ok(if r <= 1.0 - epsilon {
        -alpha * math::tanh(r - 1.0) + 1.0 + epsilon + shift
    } else if r >= 1.0 + epsilon {
        -alpha * math::tanh(r - 1.0) + 1.0 - epsilon - shift
    } else {
        r
    })
}

/// Derivative of a clipping function with respect to the ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slope {
    pub value: f64,
    /// Set when the ratio sits exactly on `1 ± eps`; `value` is then the
    /// one-sided derivative of the clipped branch.
    pub at_kink: bool,
}

/// `dF/dr` for the clipping function selected by `spec`.
pub fn clip_derivative(spec: &ClipSpec, ratio: f64) -> Result<Slope> {
    let r = finite_ratio(ratio)?;
    let lo = 1.0 - spec.epsilon;
    let hi = 1.0 + spec.epsilon;
    if r > lo && r < hi {
        return Ok(Slope {
            value: 1.0,
            at_kink: false,
        });
    }
    let value = match spec.variant {
        Variant::Ppo => 0.0,
        Variant::Pporb => -spec.alpha,
        Variant::Ppos => {
            let t = math::tanh(r - 1.0);
            -spec.alpha * (1.0 - t * t)
        }
    };
    Ok(Slope {
        value,
        at_kink: r == lo || r == hi,
    })
}

/// Per-sample surrogate `min(r * A, F(r) * A)`.
pub fn surrogate(spec: &ClipSpec, sample: SurrogateSample) -> f64 {
    let (unclipped, clipped) = branches(spec, sample);
    unclipped.min(clipped)
}

/// Whether the clipped branch of the min is the active one (ties count as clipped).
pub fn clipped_branch_active(spec: &ClipSpec, sample: SurrogateSample) -> bool {
    let (unclipped, clipped) = branches(spec, sample);
    clipped <= unclipped
}

fn branches(spec: &ClipSpec, sample: SurrogateSample) -> (f64, f64) {
    // Sample construction already rejected non-finite ratios.
    let clipped_ratio = spec.apply(sample.ratio).unwrap_or(sample.ratio);
    (
        sample.ratio * sample.advantage,
        clipped_ratio * sample.advantage,
    )
}

/// `dL/dr` of the per-sample surrogate, following whichever branch of the min
/// is active. On a tie the clipped branch is used.
pub fn surrogate_gradient_wrt_ratio(spec: &ClipSpec, sample: SurrogateSample) -> f64 {
    if clipped_branch_active(spec, sample) {
        let slope = clip_derivative(spec, sample.ratio)
            .map(|s| s.value)
            .unwrap_or(0.0);
        sample.advantage * slope
    } else {
        sample.advantage
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TANH_05: f64 = 0.462_117_157_260_009_8;
    const TANH_02: f64 = 0.197_375_320_224_904;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn flat_clip_examples() {
        assert_eq!(clip_ppo(1.0, 0.2).unwrap(), 1.0);
        assert!(close(clip_ppo(1.5, 0.2).unwrap(), 1.2, 1e-15));
        assert!(close(clip_ppo(0.5, 0.2).unwrap(), 0.8, 1e-15));
    }

    #[test]
    fn rollback_examples() {
        assert_eq!(clip_pporb(1.0, 0.2, 0.3).unwrap(), 1.0);
        assert!(close(clip_pporb(1.5, 0.2, 0.3).unwrap(), 1.11, 1e-12));
        assert!(close(clip_pporb(10.0, 0.2, 0.3).unwrap(), -1.44, 1e-12));
    }

    #[test]
    fn smoothed_examples() {
        assert!(close(clip_ppos(1.2, 0.2, 0.3).unwrap(), 1.2, 1e-15));
        assert!(close(clip_ppos(1.5, 0.2, 0.3).unwrap(), 1.120577, 1e-6));
        assert!(close(
            clip_ppos(1.5, 0.2, 0.3).unwrap(),
            -0.3 * TANH_05 + 1.2 + 0.3 * TANH_02,
            1e-15
        ));
        assert!(close(clip_ppos(0.8, 0.2, 0.3).unwrap(), 0.8, 1e-15));
    }

    #[test]
    fn non_finite_ratio_is_domain_error() {
        for f in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
            assert!(matches!(clip_ppo(f, 0.2), Err(Error::Domain { .. })));
            assert!(matches!(clip_pporb(f, 0.2, 0.3), Err(Error::Domain { .. })));
            assert!(matches!(clip_ppos(f, 0.2, 0.3), Err(Error::Domain { .. })));
        }
    }

    #[test]
    fn swapped_offsets_jump_at_upper_boundary() {
        let eps = 0.2;
        let alpha = 0.3;
        let at = clip_ppos_swapped_offsets(1.0 + eps, eps, alpha).unwrap();
        assert!(close(at, 1.0 - eps - 2.0 * alpha * TANH_02, 1e-12));
        assert!((at - (1.0 + eps)).abs() > 0.1);
    }

    #[test]
    fn derivative_examples() {
        let ppos = ClipSpec::ppos(0.2, 0.3).unwrap();
        let pporb = ClipSpec::pporb(0.2, 0.3).unwrap();
        let d = clip_derivative(&ppos, 1.5).unwrap();
        assert!(close(d.value, -0.235934, 1e-6));
        assert!(!d.at_kink);
        assert_eq!(clip_derivative(&pporb, 1.5).unwrap().value, -0.3);
        for spec in [ClipSpec::ppo(0.2).unwrap(), pporb, ppos] {
            assert_eq!(clip_derivative(&spec, 1.0).unwrap().value, 1.0);
        }
    }

    #[test]
    fn derivative_at_kink_is_clipped_branch_and_flagged() {
        let ppo = ClipSpec::ppo(0.25).unwrap();
        let d = clip_derivative(&ppo, 1.25).unwrap();
        assert!(d.at_kink);
        assert_eq!(d.value, 0.0);
        let rb = ClipSpec::pporb(0.25, 0.3).unwrap();
        let d = clip_derivative(&rb, 0.75).unwrap();
        assert!(d.at_kink);
        assert_eq!(d.value, -0.3);
    }

    #[test]
    fn surrogate_examples() {
        let ppo = ClipSpec::ppo(0.2).unwrap();
        let s = |r, a| SurrogateSample::new(r, a).unwrap();
        assert!(close(surrogate(&ppo, s(1.5, 1.0)), 1.2, 1e-15));
        assert!(close(surrogate(&ppo, s(0.5, -1.0)), -0.8, 1e-15));
        for spec in [
            ppo,
            ClipSpec::pporb(0.2, 0.3).unwrap(),
            ClipSpec::ppos(0.2, 0.3).unwrap(),
        ] {
            assert_eq!(surrogate(&spec, s(1.0, 2.0)), 2.0);
            assert_eq!(surrogate_gradient_wrt_ratio(&spec, s(1.0, 3.0)), 3.0);
        }
    }

    #[test]
    fn surrogate_gradient_examples() {
        let s = |r, a| SurrogateSample::new(r, a).unwrap();
        let ppo = ClipSpec::ppo(0.2).unwrap();
        assert_eq!(surrogate_gradient_wrt_ratio(&ppo, s(1.5, 1.0)), 0.0);
        let ppos = ClipSpec::ppos(0.2, 0.3).unwrap();
        assert!(close(
            surrogate_gradient_wrt_ratio(&ppos, s(1.5, 1.0)),
            -0.235934,
            1e-6
        ));
        // Negative advantage above the range: the unclipped branch is the min.
        assert_eq!(surrogate_gradient_wrt_ratio(&ppo, s(1.5, -2.0)), -2.0);
    }

    #[test]
    fn spec_validation() {
        assert!(ClipSpec::ppo(0.0).is_err());
        assert!(ClipSpec::ppo(1.0).is_err());
        assert!(ClipSpec::ppo(1.5).is_err());
        assert!(ClipSpec::pporb(0.2, -0.1).is_err());
        assert!(ClipSpec::ppos(0.2, -0.1).is_ok());
        assert!(ClipSpec::ppos(0.2, f64::NAN).is_err());
        assert!(ClipSpec::with_wide_range(Variant::Ppo, 1e3, 0.0).is_ok());
        assert!(ClipSpec::with_wide_range(Variant::Ppo, f64::INFINITY, 0.0).is_err());
        assert!(SurrogateSample::new(0.0, 1.0).is_err());
        assert!(SurrogateSample::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()), Some(v));
        }
        assert_eq!(Variant::parse("PPOS"), Some(Variant::Ppos));
        assert_eq!(Variant::parse("trpo"), None);
    }
}
