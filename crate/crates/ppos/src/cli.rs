//! Command-line front end: `train`, `compare`, `verify` and `alpha-sweep`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ppos_core::analysis;
use ppos_core::{TrainConfig, Variant};
use serde::Serialize;

use crate::experiment::{self, CellFailure, CellOutcome, DEFAULT_WINDOW};
use crate::format;
use crate::plan::{self, Overrides, PlanFile};
use crate::verify::{self, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ABORTED: i32 = 3;

pub const DEFAULT_SWEEP_ALPHAS: [f64; 5] = [-0.1, 0.05, 0.1, 0.2, 0.3];

#[derive(Debug, Parser)]
#[command(name = "ppos", version, about = "Clipped-surrogate policy optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one policy and write its curve, summary and checkpoints.
    Train(TrainArgs),
    /// Train every variant over a set of seeds and tabulate the results.
    Compare(CompareArgs),
    /// Run the numerical check suite and the bandit study.
    Verify(VerifyArgs),
    /// Train smoothed clipping over a list of alpha values.
    AlphaSweep(SweepArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON plan file; flags take precedence over it.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    repeat_per_collect: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    max_grad_norm: Option<f64>,
    /// Use raw advantages instead of normalizing them per batch.
    #[arg(long)]
    raw_advantages: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            env: self.env.clone(),
            variant: None,
            alpha: self.alpha,
            epsilon: self.epsilon,
            seed: None,
            epochs: self.epochs,
            steps_per_epoch: self.steps_per_epoch,
            gamma: self.gamma,
            lambda: self.lambda,
            learning_rate: self.learning_rate,
            repeat_per_collect: self.repeat_per_collect,
            batch_size: self.batch_size,
            hidden_dim: self.hidden,
            normalize_advantages: self.raw_advantages.then_some(false),
            max_grad_norm: self.max_grad_norm,
        }
    }

    fn plan(&self) -> Result<PlanFile, String> {
        match &self.plan {
            Some(path) => PlanFile::load(path),
            None => Ok(PlanFile::default()),
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated variants (default: all three).
    #[arg(long)]
    variants: Option<String>,
    /// Seeds as `a..b` or a comma list (default 1..10).
    #[arg(long)]
    seeds: Option<String>,
    /// Concurrent runs (default: available parallelism).
    #[arg(long)]
    jobs: Option<usize>,
    /// Epochs averaged around the best epoch.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated alpha values.
    #[arg(long, allow_hyphen_values = true)]
    alphas: Option<String>,
    /// Seeds as `a..b` or a comma list (default 1..5).
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Observation dimensions for the alpha table.
    #[arg(long, default_value = "8,11,17,111,376")]
    alpha_table: String,
    /// Step sizes `lo..hi`, log-spaced.
    #[arg(long, default_value = "1e-5..1e-1")]
    beta_grid: String,
    #[arg(long, default_value_t = 5)]
    beta_points: usize,
    /// Number of bandit instances.
    #[arg(long, default_value_t = 20)]
    instances: usize,
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command; returns the exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a, stdout, stderr),
        Command::Compare(a) => cmd_compare(a, stdout, stderr),
        Command::Verify(a) => cmd_verify(a, stdout, stderr),
        Command::AlphaSweep(a) => cmd_alpha_sweep(a, stdout, stderr),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Io(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_FAILED
        }
    }
}

enum Failure {
    Usage(String),
    Io(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type CmdResult = Result<i32, Failure>;

fn usage<T>(r: Result<T, String>) -> Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn out_dir(flag: &Option<PathBuf>, plan: &PlanFile, default: &str) -> PathBuf {
    flag.clone()
        .or_else(|| plan.out.clone())
        .unwrap_or_else(|| PathBuf::from(default))
}

fn warn_alpha(o: &Overrides, stderr: &mut dyn Write) {
    if o.alpha_ignored() {
        let _ = writeln!(stderr, "warning: alpha is ignored for ppo");
    }
}

fn cmd_train(args: TrainArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let plan = usage(args.config.plan())?;
    let mut flags = args.config.overrides();
    flags.variant = match &args.variant {
        Some(v) => Some(usage(Variant::parse(v).ok_or_else(|| format!("unknown variant {v:?}")))?),
        None => None,
    };
    flags.seed = args.seed;
    let layered = flags.over(&plan.base);
    warn_alpha(&layered, stderr);
    let config = usage(layered.resolve())?;
    let out = out_dir(&args.config.out, &plan, "runs");
    let cell = experiment::run_cell(config);
    let dir = experiment::write_cell(&out, &cell, DEFAULT_WINDOW)?;
    match &cell.result {
        Ok(done) => {
            let s = done.record.summary().expect("completed runs have epochs");
            let _ = writeln!(
                stdout,
                "{}: {} epochs, {} steps, final reward {:.3}, best {:.3} at epoch {}",
                dir.display(),
                s.epochs,
                s.env_steps,
                s.final_reward,
                s.best_reward,
                s.best_epoch
            );
            Ok(EXIT_OK)
        }
        Err(f) => {
            let _ = writeln!(stderr, "error: {f}; diagnostics in {}", dir.join("diagnostics.json").display());
            Ok(match f {
                CellFailure::Aborted(_) => EXIT_ABORTED,
                CellFailure::Error(_) => EXIT_FAILED,
            })
        }
    }
}

/// Writes every cell, the table and the per-group curves; returns the exit status.
#[allow(clippy::too_many_arguments)]
fn finish_grid(
    out: &Path,
    cells: &[CellOutcome],
    base: &TrainConfig,
    window: usize,
    curve_label: impl Fn(&TrainConfig) -> String,
    table_name: &str,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CmdResult {
    fs::create_dir_all(out)?;
    let mut failed = 0;
    for cell in cells {
        experiment::write_cell(out, cell, window)?;
        if let Err(f) = &cell.result {
            failed += 1;
            let _ = writeln!(stderr, "cell {} failed: {f}", experiment::cell_name(&cell.config));
        }
    }
    let table = experiment::table(cells, base, window);
    format::write_json(&out.join(table_name), &table)?;

    let curves = out.join("curves");
    fs::create_dir_all(&curves)?;
    let mut labels: Vec<String> = Vec::new();
    for cell in cells {
        let label = curve_label(&cell.config);
        if !labels.contains(&label) {
            labels.push(label);
        }
    }
    for label in &labels {
        let records: Vec<_> = cells
            .iter()
            .filter(|c| &curve_label(&c.config) == label)
            .filter_map(|c| c.record())
            .collect();
        let reward = experiment::band(&records, |e| e.mean_reward);
        let entropy = experiment::band(&records, |e| e.entropy);
        fs::write(curves.join(format!("{label}_reward.csv")), experiment::band_csv(&reward))?;
        fs::write(curves.join(format!("{label}_entropy.csv")), experiment::band_csv(&entropy))?;
    }

    let _ = writeln!(stdout, "{} (window {window})", table.env);
    for row in &table.rows {
        let stats = match (row.mean, row.std) {
            (Some(m), Some(s)) => format!("{m:.3} ± {s:.3}"),
            _ => "no completed runs".to_string(),
        };
        let _ = writeln!(
            stdout,
            "  {:<6} alpha {:<6} {stats}  ({} runs, {} failed)",
            row.variant.name(),
            row.alpha,
            row.runs,
            row.failed.len()
        );
    }
    Ok(if failed > 0 { EXIT_FAILED } else { EXIT_OK })
}

fn cmd_compare(args: CompareArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let plan = usage(args.config.plan())?;
    let layered = args.config.overrides().over(&plan.base);
    let variants = match &args.variants {
        Some(s) => usage(plan::parse_variants(s))?,
        None => plan.variants.clone().unwrap_or_else(|| Variant::ALL.to_vec()),
    };
    usage(plan::check_distinct(&variants, "variant"))?;
    let seeds = match &args.seeds {
        Some(s) => usage(plan::parse_seeds(s))?,
        None => plan.seeds.clone().unwrap_or_else(|| (1..=10).collect()),
    };
    usage(plan::check_distinct(&seeds, "seed"))?;
    if args.window == 0 {
        return Err(Failure::Usage("window must be at least 1".into()));
    }
    if layered.alpha.is_some() && variants.contains(&Variant::Ppo) {
        let _ = writeln!(stderr, "warning: alpha is ignored for ppo");
    }
    let mut configs = Vec::new();
    for &variant in &variants {
        for &seed in &seeds {
            let o = Overrides {
                variant: Some(variant),
                seed: Some(seed),
                ..Default::default()
            };
            configs.push(usage(o.over(&layered).resolve())?);
        }
    }
    let base = usage(layered.resolve())?;
    let out = out_dir(&args.config.out, &plan, "compare");
    let cells = experiment::run_cells(configs, args.jobs.unwrap_or_else(experiment::default_jobs));
    finish_grid(
        &out,
        &cells,
        &base,
        args.window,
        |c| c.clip.variant().name().to_string(),
        "table1.json",
        stdout,
        stderr,
    )
}

#[derive(Serialize)]
struct SweepSummary {
    env: String,
    obs_dim: usize,
    guide_alpha: f64,
    best_alpha: Option<f64>,
    table: experiment::Table,
}

fn cmd_alpha_sweep(args: SweepArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let plan = usage(args.config.plan())?;
    let mut layered = args.config.overrides().over(&plan.base);
    if layered.env.is_none() {
        layered.env = Some("pointmass-n8".into());
    }
    layered.variant = Some(Variant::Ppos);
    let alphas = match &args.alphas {
        Some(s) => usage(plan::parse_f64_list(s, "alpha"))?,
        None => plan.alphas.clone().unwrap_or_else(|| DEFAULT_SWEEP_ALPHAS.to_vec()),
    };
    usage(plan::check_distinct(&alphas, "alpha"))?;
    let seeds = match &args.seeds {
        Some(s) => usage(plan::parse_seeds(s))?,
        None => plan.seeds.clone().unwrap_or_else(|| (1..=5).collect()),
    };
    usage(plan::check_distinct(&seeds, "seed"))?;
    if args.window == 0 {
        return Err(Failure::Usage("window must be at least 1".into()));
    }
    let mut configs = Vec::new();
    for &alpha in &alphas {
        for &seed in &seeds {
            let o = Overrides {
                alpha: Some(alpha),
                seed: Some(seed),
                ..Default::default()
            };
            configs.push(usage(o.over(&layered).resolve())?);
        }
    }
    let base = usage(layered.resolve())?;
    let out = out_dir(&args.config.out, &plan, "alpha-sweep");
    let cells = experiment::run_cells(configs, args.jobs.unwrap_or_else(experiment::default_jobs));
    let code = finish_grid(
        &out,
        &cells,
        &base,
        args.window,
        |c| format!("ppos_a{}", c.clip.alpha()),
        "alpha_table.json",
        stdout,
        stderr,
    )?;
    let table = experiment::table(&cells, &base, args.window);
    let best_alpha = table
        .rows
        .iter()
        .filter_map(|r| r.mean.map(|m| (r.alpha, m)))
        .fold(None::<(f64, f64)>, |best, (a, m)| match best {
            Some((_, bm)) if bm >= m => best,
            _ => Some((a, m)),
        })
        .map(|(a, _)| a);
    let obs_dim = ppos_core::Env::from_name(&base.env_name)
        .map_err(|e| Failure::Usage(e.to_string()))?
        .spec()
        .obs_dim;
    let summary = SweepSummary {
        env: base.env_name.clone(),
        obs_dim,
        guide_alpha: analysis::alpha_for_dimension(obs_dim).expect("obs_dim >= 1"),
        best_alpha,
        table,
    };
    format::write_json(&out.join("alpha_sweep.json"), &summary)?;
    if let Some(a) = best_alpha {
        let _ = writeln!(
            stdout,
            "best alpha {a} (guide suggests {:.4} for obs_dim {obs_dim})",
            summary.guide_alpha
        );
    }
    Ok(code)
}

#[derive(Serialize)]
struct AlphaRow {
    obs_dim: usize,
    alpha: f64,
    reference: Option<f64>,
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    checks: &'a [verify::Check],
    alpha_table: Vec<AlphaRow>,
    theorem: verify::TheoremStudy,
}

fn cmd_verify(args: VerifyArgs, stdout: &mut dyn Write, _stderr: &mut dyn Write) -> CmdResult {
    let dims: Vec<usize> = usage(
        args.alpha_table
            .split(',')
            .map(|d| match d.trim().parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(format!("bad observation dimension {d:?}")),
            })
            .collect(),
    )?;
    let (lo, hi) = usage(plan::parse_range(&args.beta_grid))?;
    let grid = usage(analysis::log_grid(lo, hi, args.beta_points).map_err(|e| e.to_string()))?;
    if args.instances == 0 {
        return Err(Failure::Usage("need at least one bandit instance".into()));
    }
    let theorem = usage(verify::theorem_study(args.seed, args.instances, &grid, args.epsilon, args.alpha))?;

    let mut checks = verify::hard_suite(args.seed);
    checks.extend(verify::theorem_checks(&theorem));
    for c in &checks {
        let tag = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Reported => "DATA",
        };
        let _ = writeln!(stdout, "[{tag}] {}: {}", c.name, c.detail);
    }

    let _ = writeln!(stdout, "\nobs_dim  alpha    reference");
    let alpha_table: Vec<AlphaRow> = dims
        .iter()
        .map(|&d| AlphaRow {
            obs_dim: d,
            alpha: analysis::alpha_for_dimension(d).expect("obs_dim >= 1"),
            reference: verify::REFERENCE_ALPHAS.iter().find(|r| r.0 == d).map(|r| r.1),
        })
        .collect();
    for row in &alpha_table {
        let reference = row.reference.map(|r| r.to_string()).unwrap_or_else(|| "-".into());
        let _ = writeln!(stdout, "{:<8} {:<8.5} {reference}", row.obs_dim, row.alpha);
    }

    fs::create_dir_all(&args.out)?;
    let path = args.out.join("theorem_report.json");
    let report = VerifyReport {
        checks: &checks,
        alpha_table,
        theorem,
    };
    format::write_json(&path, &report)?;
    let failed = checks.iter().filter(|c| !c.passed()).count();
    let _ = writeln!(stdout, "\n{} checks, {failed} failed; report in {}", checks.len(), path.display());
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILED })
}
