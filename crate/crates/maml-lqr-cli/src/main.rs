//! Experiment runner for exact meta-learning on LQR landscapes.
//!
//! Five subcommands: `scan` (dense objective tables), `landscape`
//! (stationary-point reports), `train` (meta-training traces), `sweep`
//! (perturbation robustness), and `presets` (the shipped experiments).
//! Configs are JSON with a strict schema; every preset is compiled in.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use maml_lqr::landscape::{self, MamlObjective};
use maml_lqr::maml::{self, Variant};
use maml_lqr::optim::{self, BatchMode};
use maml_lqr::{Policy, StopRule, TaskSet};

use config::{preset, ExperimentConfig, GridSpec, PRESET_NAMES};
use output::fmt_f64;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or invalid config: exit 2.
    Config(String),
    /// The experiment itself failed numerically: exit 3.
    Run(maml_lqr::Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Run(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<maml_lqr::Error> for CliError {
    fn from(e: maml_lqr::Error) -> Self {
        CliError::Run(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) | CliError::Io(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "maml-lqr",
    version,
    about = "Exact meta-learning experiments on LQR cost landscapes"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Densely evaluate the meta-objective over the grid; write a CSV
    /// table (plus per-task curves for multi-task configs).
    Scan(RunArgs),
    /// Find and classify stationary points; report the globality gap,
    /// degeneracy check, and masked fraction as JSON.
    Landscape(RunArgs),
    /// Meta-train from the configured initialization and record the full
    /// trace; prints the final value and the step-size certificate.
    Train(RunArgs),
    /// Re-analyze the landscape across randomly perturbed task draws.
    Sweep(RunArgs),
    /// List the shipped experiment presets with full parameters.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// Path to a JSON experiment config.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a shipped preset (see `presets`).
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Override the RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the adaptation variant.
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Override the inner adaptation step size.
    #[arg(long)]
    eta: Option<f64>,
    /// Override the outer training step size.
    #[arg(long)]
    beta: Option<f64>,
    /// Override the scan grid.
    #[arg(long, value_name = "LO,HI,N")]
    grid: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Vanilla,
    Normalized,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Vanilla => Variant::Vanilla,
            VariantArg::Normalized => Variant::Normalized,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Scan(args) => with_config(args, cmd_scan),
        Cmd::Landscape(args) => with_config(args, cmd_landscape),
        Cmd::Train(args) => with_config(args, cmd_train),
        Cmd::Sweep(args) => with_config(args, cmd_sweep),
        Cmd::Presets => cmd_presets(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn with_config(
    args: RunArgs,
    body: fn(&ExperimentConfig, &std::path::Path) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let cfg = resolve_config(&args)?;
    output::ensure_dir(&args.out)?;
    body(&cfg, &args.out)?;
    output::write_meta(&args.out, &cfg)
}

fn resolve_config(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), None) => {
            let body = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read {}: {e}", path.display()))
            })?;
            ExperimentConfig::from_json(&body)?
        }
        (None, Some(name)) => preset(name)?,
        (None, None) => {
            return Err(CliError::Config(
                "either --config <PATH> or --preset <NAME> is required".into(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(variant) = args.variant {
        cfg.variant = variant.into();
    }
    if let Some(eta) = args.eta {
        cfg.eta = eta;
    }
    if let Some(beta) = args.beta {
        cfg.beta = beta;
    }
    if let Some(grid) = &args.grid {
        cfg.grid = parse_grid(grid)?;
    }
    Ok(cfg)
}

fn parse_grid(s: &str) -> Result<GridSpec, CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || CliError::Config(format!("bad --grid {s:?}; expected LO,HI,N"));
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok(GridSpec {
        lo: parts[0].trim().parse().map_err(|_| bad())?,
        hi: parts[1].trim().parse().map_err(|_| bad())?,
        resolution: parts[2].trim().parse().map_err(|_| bad())?,
    })
}

fn cmd_scan(cfg: &ExperimentConfig, out: &std::path::Path) -> Result<(), CliError> {
    let tasks = cfg.build_taskset()?;
    let mcfg = cfg.build_maml_config()?;
    let grid = cfg.build_grid()?;
    let objective = MamlObjective::new(&tasks, &mcfg);
    let table = landscape::grid_scan(&objective, &grid)?;

    // Multi-task configs also get each task's own singleton meta-objective
    // (the dashed per-task curves alongside the solid average).
    let mut singles = Vec::new();
    if tasks.len() > 1 {
        for task in tasks.tasks() {
            let single = TaskSet::uniform(vec![task.clone()])?;
            let single_obj = MamlObjective::new(&single, &mcfg);
            singles.push(landscape::grid_scan(&single_obj, &grid)?);
        }
    }

    let axes = grid.axes();
    let mut csv = String::new();
    for i in 0..axes {
        csv.push_str(&format!("w_{},", i + 1));
    }
    csv.push_str("value,defined");
    for i in 0..singles.len() {
        csv.push_str(&format!(",h_task_{i}"));
    }
    csv.push('\n');
    for (row_idx, row) in table.rows.iter().enumerate() {
        for x in row.policy.to_vec().iter() {
            csv.push_str(&fmt_f64(*x));
            csv.push(',');
        }
        csv.push_str(&fmt_f64(row.value.unwrap_or(f64::INFINITY)));
        csv.push_str(if row.value.is_some() { ",1" } else { ",0" });
        for single in &singles {
            csv.push(',');
            csv.push_str(&fmt_f64(
                single.rows[row_idx].value.unwrap_or(f64::INFINITY),
            ));
        }
        csv.push('\n');
    }
    output::write_text(&out.join("scan.csv"), &csv)?;

    println!("scan: {} points, masked fraction {:.4}", table.rows.len(), table.masked_fraction());
    if let Some(best) = table.min_row() {
        println!(
            "min value {} at {:?}",
            fmt_f64(best.value.unwrap()),
            best.policy.to_vec().as_slice()
        );
    }
    Ok(())
}

fn cmd_landscape(cfg: &ExperimentConfig, out: &std::path::Path) -> Result<(), CliError> {
    let tasks = cfg.build_taskset()?;
    let mcfg = cfg.build_maml_config()?;
    let grid = cfg.build_grid()?;
    let objective = MamlObjective::new(&tasks, &mcfg);
    let report = landscape::analyze(&objective, &grid, cfg.extra_seeds)?;
    output::write_json(&out.join("landscape.json"), &report)?;

    let minima = report.local_minima().count();
    println!(
        "{} stationary points ({} local minima), masked fraction {:.4}",
        report.points.len(),
        minima,
        report.masked_fraction
    );
    println!(
        "global min {} | epsilon gap {} | every minimum global: {} | non-degenerate: {}",
        fmt_f64(report.global_min_value),
        fmt_f64(report.epsilon_gap),
        report.is_global(),
        report.assumption1_ok
    );
    Ok(())
}

fn cmd_train(cfg: &ExperimentConfig, out: &std::path::Path) -> Result<(), CliError> {
    let tasks = cfg.build_taskset()?;
    let mcfg = cfg.build_maml_config()?;
    let t = &cfg.train;
    let stop = StopRule::new(t.grad_tol, t.max_iter, t.value_blowup)
        .map_err(|e| CliError::Config(format!("bad stop rule: {e}")))?;
    let init = Policy::scalar(t.init);
    let record = if t.line_search {
        optim::maml_train_armijo(&tasks, &mcfg, &init, &stop)?
    } else {
        let mode = match t.batch {
            Some(batch) => BatchMode::Sampled {
                seed: cfg.seed,
                batch,
            },
            None => BatchMode::FullBatch,
        };
        optim::maml_train(&tasks, &mcfg, &init, &stop, mode)?
    };
    output::write_json(&out.join("train.json"), &record)?;

    let mut csv = String::from("iter");
    let axes = init.rows() * init.cols();
    for i in 0..axes {
        csv.push_str(&format!(",w_{}", i + 1));
    }
    csv.push_str(",value,grad_norm\n");
    for (i, w) in record.iterates.iter().enumerate() {
        csv.push_str(&i.to_string());
        for x in w.to_vec().iter() {
            csv.push(',');
            csv.push_str(&fmt_f64(*x));
        }
        csv.push(',');
        csv.push_str(&fmt_f64(record.values[i]));
        csv.push(',');
        csv.push_str(&fmt_f64(record.grad_norms[i]));
        csv.push('\n');
    }
    output::write_text(&out.join("train.csv"), &csv)?;

    let final_policy = record.final_policy();
    println!(
        "stopped after {} iterations: {:?}",
        record.len(),
        record.stop_reason
    );
    println!("final value: {}", fmt_f64(record.final_value()));
    println!(
        "final grad norm: {}",
        fmt_f64(*record.grad_norms.last().unwrap_or(&f64::NAN))
    );
    // Step-size certificate: the smallest per-task open-map margin at the
    // final policy. Positive means the adaptation step size is strictly
    // inside the regime where descent cannot create spurious minima.
    let margin = tasks
        .tasks()
        .iter()
        .map(|task| maml::open_map_margin(task, final_policy, &mcfg))
        .try_fold(f64::INFINITY, |acc, m| m.map(|m| acc.min(m)));
    match margin {
        Ok(m) if m > 0.0 => println!("certificate: positive (margin {})", fmt_f64(m)),
        Ok(m) => println!("certificate: non-positive (margin {})", fmt_f64(m)),
        Err(e) => println!("certificate: undefined ({e})"),
    }
    Ok(())
}

/// Per-sweep summary plus the per-trial reports.
#[derive(serde::Serialize)]
struct SweepOutput {
    summary: SweepSummary,
    reports: Vec<maml_lqr::LandscapeReport>,
}

#[derive(serde::Serialize)]
struct SweepSummary {
    trials: usize,
    k: usize,
    delta: f64,
    max_epsilon_gap: f64,
    max_relative_gap: f64,
    trials_all_global: usize,
    /// Minimizer of the configured (unperturbed) meta-objective.
    maml_argmin: Option<Vec<f64>>,
    /// Minimizer of the configured tasks' average plain cost.
    average_cost_argmin: Option<Vec<f64>>,
    /// Distance between the two minimizers.
    argmin_distance: Option<f64>,
}

fn cmd_sweep(cfg: &ExperimentConfig, out: &std::path::Path) -> Result<(), CliError> {
    let mcfg = cfg.build_maml_config()?;
    let grid = cfg.build_grid()?;
    let base = cfg.sweep_base()?;
    let s = &cfg.sweep;
    let reports =
        landscape::perturb_sweep(&base, s.delta, s.k, s.trials, cfg.seed, &mcfg, &grid)?;

    let max_epsilon_gap = reports.iter().map(|r| r.epsilon_gap).fold(0.0, f64::max);
    let max_relative_gap = reports
        .iter()
        .map(|r| r.epsilon_gap / 1.0f64.max(r.global_min_value.abs()))
        .fold(0.0, f64::max);
    let trials_all_global = reports.iter().filter(|r| r.is_global()).count();

    // How the configured (unperturbed) task family's meta-minimizer relates
    // to the plain average-cost minimizer.
    let tasks = cfg.build_taskset()?;
    let maml_argmin = landscape::analyze(&MamlObjective::new(&tasks, &mcfg), &grid, cfg.extra_seeds)
        .ok()
        .and_then(|r| {
            r.local_minima()
                .min_by(|a, b| a.value.total_cmp(&b.value))
                .map(|p| p.policy.to_vec().as_slice().to_vec())
        });
    let average_cost_argmin = landscape::average_cost_argmin(&tasks, &grid)
        .ok()
        .map(|p| p.to_vec().as_slice().to_vec());
    let argmin_distance = match (&maml_argmin, &average_cost_argmin) {
        (Some(a), Some(b)) => Some(
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        ),
        _ => None,
    };

    let outcome = SweepOutput {
        summary: SweepSummary {
            trials: s.trials,
            k: s.k,
            delta: s.delta,
            max_epsilon_gap,
            max_relative_gap,
            trials_all_global,
            maml_argmin,
            average_cost_argmin,
            argmin_distance,
        },
        reports,
    };
    output::write_json(&out.join("sweep.json"), &outcome)?;

    println!(
        "{} trials (k={}, delta={}): max epsilon gap {}, {} trials fully global",
        s.trials,
        s.k,
        s.delta,
        fmt_f64(max_epsilon_gap),
        trials_all_global
    );
    if let Some(d) = outcome.summary.argmin_distance {
        println!("meta-argmin to average-cost-argmin distance: {}", fmt_f64(d));
    }
    Ok(())
}

fn cmd_presets() -> Result<(), CliError> {
    for name in PRESET_NAMES {
        let cfg = preset(name)?;
        let tasks: Vec<String> = cfg
            .tasks
            .iter()
            .map(|[a, b, q, r, s0]| format!("({a}, {b}, {q}, {r}, {s0})"))
            .collect();
        println!(
            "{name}: tasks [{}], eta={}, variant={:?}, grid=[{}, {}] x {}",
            tasks.join(", "),
            cfg.eta,
            cfg.variant,
            cfg.grid.lo,
            cfg.grid.hi,
            cfg.grid.resolution
        );
    }
    Ok(())
}
