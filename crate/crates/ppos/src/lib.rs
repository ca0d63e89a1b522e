//! File formats, experiment orchestration, the check suite and the command
//! line for [`ppos_core`].

pub mod cli;
pub mod experiment;
pub mod format;
pub mod plan;
pub mod verify;
