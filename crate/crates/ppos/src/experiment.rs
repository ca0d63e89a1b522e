//! Independent training runs over a grid of cells, and their aggregation.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ppos_core::analysis::{self, RunsSummary};
use ppos_core::trainer::{self, Abort, RunSummary, TrainOutcome};
use ppos_core::{Error, RunRecord, TrainConfig, Variant};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::format;

/// Epochs averaged around the best epoch in summaries.
pub const DEFAULT_WINDOW: usize = 50;

/// Directory name of a cell: `<env>-<variant>-a<alpha>-e<epsilon>-s<seed>`.
pub fn cell_name(config: &TrainConfig) -> String {
    format!(
        "{}-{}-a{}-e{}-s{}",
        config.env_name,
        config.clip.variant(),
        config.clip.alpha(),
        config.clip.epsilon(),
        config.seed
    )
}

#[derive(Debug, Clone)]
pub enum CellFailure {
    Aborted(Abort),
    Error(String),
}

impl std::fmt::Display for CellFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellFailure::Aborted(a) => write!(
                f,
                "run aborted at epoch {} minibatch {}: non-finite {} ({})",
                a.epoch, a.minibatch, a.statistic, a.value
            ),
            CellFailure::Error(e) => f.write_str(e),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub config: TrainConfig,
    pub result: Result<TrainOutcome, CellFailure>,
}

impl CellOutcome {
    pub fn record(&self) -> Option<&RunRecord> {
        self.result.as_ref().ok().map(|o| &o.record)
    }
}

pub fn run_cell(config: TrainConfig) -> CellOutcome {
    let result = trainer::train(config.clone()).map_err(|e| match e {
        Error::Aborted(abort) => CellFailure::Aborted(abort),
        other => CellFailure::Error(other.to_string()),
    });
    CellOutcome { config, result }
}

/// Runs every cell on a pool of `jobs` threads; results come back in input order.
pub fn run_cells(configs: Vec<TrainConfig>, jobs: usize) -> Vec<CellOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| configs.into_par_iter().map(run_cell).collect())
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub config: TrainConfig,
    pub summary: RunSummary,
    pub window: usize,
    pub best_window_reward: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub config: TrainConfig,
    pub error: String,
    pub abort: Option<Abort>,
}

/// Writes `curve.csv`, `summary.json` and the checkpoints of a finished cell,
/// or `diagnostics.json` (plus the partial curve) of a failed one.
pub fn write_cell(out: &Path, cell: &CellOutcome, window: usize) -> io::Result<PathBuf> {
    let dir = out.join(cell_name(&cell.config));
    fs::create_dir_all(&dir)?;
    match &cell.result {
        Ok(done) => {
            fs::write(dir.join("curve.csv"), format::curve_csv(&done.record))?;
            let summary = CellSummary {
                config: cell.config.clone(),
                summary: done.record.summary().expect("completed runs have epochs"),
                window,
                best_window_reward: analysis::summarize_runs(std::slice::from_ref(&done.record), window)
                    .expect("completed runs have epochs")
                    .mean,
            };
            format::write_json(&dir.join("summary.json"), &summary)?;
            fs::write(dir.join("policy.ckpt"), format::policy_to_string(&done.policy))?;
            fs::write(dir.join("critic.ckpt"), format::network_to_string(done.critic.value_net()))?;
        }
        Err(failure) => {
            let abort = match failure {
                CellFailure::Aborted(a) => {
                    fs::write(dir.join("curve.csv"), format::curve_csv(&a.record))?;
                    Some(a.clone())
                }
                CellFailure::Error(_) => None,
            };
            let diag = Diagnostics {
                config: cell.config.clone(),
                error: failure.to_string(),
                abort,
            };
            format::write_json(&dir.join("diagnostics.json"), &diag)?;
        }
    }
    Ok(dir)
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub epoch: usize,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    pub p20: f64,
    pub p80: f64,
}

/// Per-epoch mean, population std and 20th/80th percentiles across runs.
pub fn band(records: &[&RunRecord], metric: impl Fn(&trainer::EpochRecord) -> f64) -> Vec<BandRow> {
    let epochs = records.iter().map(|r| r.len()).max().unwrap_or(0);
    (0..epochs)
        .map(|epoch| {
            let mut values: Vec<f64> = records
                .iter()
                .filter_map(|r| r.entries.get(epoch))
                .map(&metric)
                .collect();
            values.sort_by(f64::total_cmp);
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            BandRow {
                epoch,
                runs: values.len(),
                mean,
                std: var.sqrt(),
                p20: percentile(&values, 0.2),
                p80: percentile(&values, 0.8),
            }
        })
        .collect()
}

pub const BAND_COLUMNS: &str = "epoch,runs,mean,std,p20,p80";

pub fn band_csv(rows: &[BandRow]) -> String {
    let mut out = String::from(BAND_COLUMNS);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{},{},{}\n", r.epoch, r.runs, r.mean, r.std, r.p20, r.p80));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedValue {
    pub seed: u64,
    pub value: f64,
}

/// One row of the cross-seed table: a variant (and alpha) over all its seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub variant: Variant,
    pub alpha: f64,
    pub epsilon: f64,
    pub runs: usize,
    pub failed: Vec<u64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub per_seed: Vec<SeedValue>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table {
    pub env: String,
    pub window: usize,
    pub base: TrainConfig,
    pub rows: Vec<TableRow>,
}

/// Groups cells by (variant, alpha, epsilon) in first-seen order and summarizes each group.
pub fn table(cells: &[CellOutcome], base: &TrainConfig, window: usize) -> Table {
    let mut groups: Vec<(Variant, f64, f64, Vec<&CellOutcome>)> = Vec::new();
    for cell in cells {
        let key = (cell.config.clip.variant(), cell.config.clip.alpha(), cell.config.clip.epsilon());
        match groups.iter_mut().find(|g| (g.0, g.1, g.2) == key) {
            Some(g) => g.3.push(cell),
            None => groups.push((key.0, key.1, key.2, vec![cell])),
        }
    }
    let rows = groups
        .into_iter()
        .map(|(variant, alpha, epsilon, members)| {
            let ok: Vec<&CellOutcome> = members.iter().copied().filter(|c| c.result.is_ok()).collect();
            let records: Vec<RunRecord> = ok.iter().filter_map(|c| c.record().cloned()).collect();
            let summary: Option<RunsSummary> = analysis::summarize_runs(&records, window).ok();
            TableRow {
                variant,
                alpha,
                epsilon,
                runs: members.len(),
                failed: members.iter().filter(|c| c.result.is_err()).map(|c| c.config.seed).collect(),
                mean: summary.as_ref().map(|s| s.mean),
                std: summary.as_ref().map(|s| s.std),
                per_seed: summary
                    .map(|s| {
                        ok.iter()
                            .zip(s.per_run)
                            .map(|(c, value)| SeedValue {
                                seed: c.config.seed,
                                value,
                            })
                            .collect()
                    })
                    .unwrap_or_default(),
            }
        })
        .collect();
    Table {
        env: base.env_name.clone(),
        window,
        base: base.clone(),
        rows,
    }
}
