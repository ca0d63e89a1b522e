//! On-disk formats: parameter checkpoints, per-epoch curve CSV and JSON documents.
//!
//! A network checkpoint is plain text:
//!
//! ```text
//! dims <input> <hidden> <output>
//! <one parameter per line, flat order W1, b1, W2, b2>
//! ```
//!
//! A policy checkpoint appends one line `log_std <v1> <v2> ...`. Numbers use
//! the shortest representation that round-trips exactly.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use ppos_core::approximator::{Layout, ParamVector};
use ppos_core::trainer::RunRecord;
use ppos_core::{CriticNet, GaussianPolicy};
use serde::Serialize;

pub const CURVE_COLUMNS: [&str; 9] = [
    "epoch",
    "env_steps",
    "mean_reward",
    "reward_std",
    "entropy",
    "ratio_in_range_frac",
    "clip_frac",
    "actor_loss",
    "critic_loss",
];

#[derive(Debug)]
pub enum FormatError {
    Io(io::Error),
    Parse { line: usize, message: String },
    Model(ppos_core::Error),
}

impl std::fmt::Display for FormatError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FormatError::Io(e) => write!(f, "{e}"),
            FormatError::Parse { line, message } => write!(f, "line {line}: {message}"),
            FormatError::Model(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for FormatError {}

impl From<io::Error> for FormatError {
    fn from(e: io::Error) -> Self {
        FormatError::Io(e)
    }
}

impl From<ppos_core::Error> for FormatError {
    fn from(e: ppos_core::Error) -> Self {
        FormatError::Model(e)
    }
}

fn write_params(out: &mut String, params: &ParamVector) {
    let l = params.layout();
    writeln!(out, "dims {} {} {}", l.input, l.hidden, l.output).unwrap();
    for v in params.values() {
        writeln!(out, "{v}").unwrap();
    }
}

pub fn network_to_string(params: &ParamVector) -> String {
    let mut out = String::new();
    write_params(&mut out, params);
    out
}

pub fn policy_to_string(policy: &GaussianPolicy) -> String {
    let mut out = network_to_string(policy.mean_net());
    out.push_str("log_std");
    for v in policy.log_std() {
        write!(out, " {v}").unwrap();
    }
    out.push('\n');
    out
}

fn parse_f64(line: usize, s: &str) -> Result<f64, FormatError> {
    s.trim().parse::<f64>().map_err(|_| FormatError::Parse {
        line,
        message: format!("expected a number, found {s:?}"),
    })
}

/// Parses a network checkpoint; returns the network and any lines left over.
fn parse_network<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>) -> Result<ParamVector, FormatError> {
    let (n, header) = lines.next().ok_or(FormatError::Parse {
        line: 1,
        message: "empty checkpoint".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "dims" {
        return Err(FormatError::Parse {
            line: n,
            message: format!("expected `dims <in> <hidden> <out>`, found {header:?}"),
        });
    }
    let mut dims = [0usize; 3];
    for (d, f) in dims.iter_mut().zip(&fields[1..]) {
        *d = f.parse().map_err(|_| FormatError::Parse {
            line: n,
            message: format!("bad dimension {f:?}"),
        })?;
    }
    let layout = Layout::new(dims[0], dims[1], dims[2])?;
    let mut values = Vec::with_capacity(layout.param_count());
    for _ in 0..layout.param_count() {
        let (n, s) = lines.next().ok_or(FormatError::Parse {
            line: n + values.len() + 1,
            message: format!("expected {} parameters, found {}", layout.param_count(), values.len()),
        })?;
        values.push(parse_f64(n, s)?);
    }
    Ok(ParamVector::from_values(layout, values)?)
}

fn numbered(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty())
}

fn expect_end<'a>(mut lines: impl Iterator<Item = (usize, &'a str)>) -> Result<(), FormatError> {
    match lines.next() {
        None => Ok(()),
        Some((n, l)) => Err(FormatError::Parse {
            line: n,
            message: format!("unexpected trailing content {l:?}"),
        }),
    }
}

pub fn network_from_str(text: &str) -> Result<ParamVector, FormatError> {
    let mut lines = numbered(text);
    let net = parse_network(&mut lines)?;
    expect_end(lines)?;
    Ok(net)
}

pub fn policy_from_str(text: &str) -> Result<GaussianPolicy, FormatError> {
    let mut lines = numbered(text);
    let net = parse_network(&mut lines)?;
    let (n, line) = lines.next().ok_or(FormatError::Parse {
        line: 0,
        message: "missing log_std line".into(),
    })?;
    let mut fields = line.split_whitespace();
    if fields.next() != Some("log_std") {
        return Err(FormatError::Parse {
            line: n,
            message: format!("expected `log_std ...`, found {line:?}"),
        });
    }
    let log_std = fields.map(|f| parse_f64(n, f)).collect::<Result<Vec<_>, _>>()?;
    expect_end(lines)?;
    Ok(GaussianPolicy::new(net, log_std)?)
}

pub fn critic_from_str(text: &str) -> Result<CriticNet, FormatError> {
    Ok(CriticNet::new(network_from_str(text)?)?)
}

pub fn curve_csv(record: &RunRecord) -> String {
    let mut out = CURVE_COLUMNS.join(",");
    out.push('\n');
    for e in &record.entries {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            e.epoch,
            e.env_steps,
            e.mean_reward,
            e.reward_std,
            e.entropy,
            e.ratio_in_range_frac,
            e.clip_frac,
            e.actor_loss,
            e.critic_loss
        )
        .unwrap();
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    fs::write(path, to_json(value))
}
