//! Clipped-surrogate policy optimization without the standard library.
//!
//! The crate implements three clipping rules for the likelihood ratio of a
//! proximal policy update (flat, rollback and smoothed `tanh` clipping), a
//! small one-hidden-layer network with hand-written reverse mode and Adam, a
//! diagonal Gaussian policy, generalized advantage estimation, a handful of
//! toy continuous-control environments and the actor-critic training loop
//! that ties them together. The [`analysis`] module carries the bandit
//! experiments used to compare the clipping rules directly.
//!
//! Everything here needs only `alloc`. File formats, the command line and
//! multi-run orchestration live in the `ppos` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod approximator;
pub mod clip;
pub mod env;
mod error;
pub mod gae;
pub(crate) mod math;
pub mod policy;
pub mod rng;
pub mod trainer;

pub use approximator::{Adam, AdamConfig, Direction, Gradient, Layout, ParamVector};
pub use clip::{ClipSpec, SurrogateSample, Variant};
pub use env::{Env, EnvSpec, RolloutBatch};
pub use error::{Error, Result};
pub use policy::{CriticNet, GaussianPolicy};
pub use trainer::{RunRecord, TrainConfig, Trainer};
