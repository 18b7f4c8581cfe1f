//! Command-line experiment driver.
//!
//! Exit code is 0 on success; nonzero only for configuration errors. Failures
//! inside individual trials are captured into their records and do not change
//! the exit code.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use matcomp::harness::{fig2_grid, fig3_grid, fig4_grid, run_sweep, run_trial_detailed, SweepGrid};
use matcomp::{EntryDistribution, InstanceSpec, SolverOptions, Strategy};

#[derive(Parser)]
#[command(
    name = "matcomp",
    version,
    about = "Low-rank matrix completion with designed observation sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance and emit it as CSV (17 significant digits).
    Gen(GenArgs),
    /// Run a single trial and emit a JSON report.
    Trial(TrialArgs),
    /// Run a sweep grid and emit one CSV row per (cell, strategy, trial).
    Sweep(SweepArgs),
    /// Canned three-strategy comparison: 50x50, t=20, k=2, p=0.3.
    Fig2(FigArgs),
    /// Canned gain surface over t in {5..25} and k in {1..10} at p=0.3.
    Fig3(FigArgs),
    /// Canned error-vs-rate curves for k=1 and k=4 on a 30x30 instance.
    Fig4(FigArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// Rows of the instance.
    #[arg(long, default_value_t = 50)]
    m: usize,
    /// Columns of the instance.
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// Width of the structured (first) column block.
    #[arg(long, default_value_t = 20)]
    t: usize,
    /// Rank of the structured block.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Rank of the remaining columns.
    #[arg(long, default_value_t = 4)]
    r_rest: usize,
    /// Entry distribution of the random factors.
    #[arg(long, value_parser = ["gaussian", "integer"], default_value = "gaussian")]
    dist: String,
    /// Magnitude bound for the integer distribution.
    #[arg(long, default_value_t = 2)]
    mag: u32,
}

impl SpecArgs {
    fn distribution(&self) -> EntryDistribution {
        match self.dist.as_str() {
            "integer" => EntryDistribution::Integer {
                magnitude: self.mag,
            },
            _ => EntryDistribution::Gaussian,
        }
    }

    fn spec(&self, seed: u64) -> InstanceSpec {
        InstanceSpec {
            m: self.m,
            n: self.n,
            t: self.t,
            k: self.k,
            r_rest: self.r_rest,
            seed,
            distribution: self.distribution(),
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Splitting penalty.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Iteration cap for the splitting loop.
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    /// Relative stopping tolerance.
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            rho: self.rho,
            max_iters: self.max_iters,
            tol: self.tol,
            ..SolverOptions::default()
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Instance seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrialArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Observation rate in [0, 1].
    #[arg(long, default_value_t = 0.3)]
    p: f64,
    /// Sampling strategy.
    #[arg(long)]
    strategy: Strategy,
    /// Trial seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relation count for the selective strategy (default: half of t-k).
    #[arg(long)]
    relations: Option<usize>,
    /// Include the reconstructed matrix in the JSON report.
    #[arg(long)]
    emit_matrix: bool,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Rows of every instance.
    #[arg(long, default_value_t = 50)]
    m: usize,
    /// Columns of every instance.
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// Rank of the remaining columns.
    #[arg(long, default_value_t = 4)]
    r_rest: usize,
    /// Block widths to sweep (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "20")]
    t: Vec<usize>,
    /// Block ranks to sweep (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "2")]
    k: Vec<usize>,
    /// Observation rates to sweep (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "0.3")]
    p: Vec<f64>,
    /// Trials per cell.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Base seed; trial i uses base_seed + i.
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    /// Strategies to run (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "uniform,optimal,selective")]
    strategies: Vec<Strategy>,
    /// Relation count for the selective strategy (default: half of t-k).
    #[arg(long)]
    relations: Option<usize>,
    /// Entry distribution of the random factors.
    #[arg(long, value_parser = ["gaussian", "integer"], default_value = "gaussian")]
    dist: String,
    /// Magnitude bound for the integer distribution.
    #[arg(long, default_value_t = 2)]
    mag: u32,
    /// Record real wall-clock timings (breaks byte-identical reruns).
    #[arg(long)]
    timing: bool,
    /// Worker thread count (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Per-trial CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Aggregate CSV path (per-cell means and gains).
    #[arg(long)]
    agg: Option<PathBuf>,
}

#[derive(Args)]
struct FigArgs {
    /// Trials per cell.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Base seed; trial i uses base_seed + i.
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    /// Record real wall-clock timings (breaks byte-identical reruns).
    #[arg(long)]
    timing: bool,
    /// Worker thread count (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Aggregated (plot-ready) CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional per-trial CSV dump.
    #[arg(long)]
    rows: Option<PathBuf>,
}

fn write_output(path: Option<&PathBuf>, content: &str) -> matcomp::Result<()> {
    match path {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            w.write_all(content.as_bytes())?;
            w.flush()?;
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            w.write_all(content.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_gen(args: &GenArgs) -> matcomp::Result<()> {
    let (matrix, _) = matcomp::generate(&args.spec.spec(args.seed))?;
    write_output(args.out.as_ref(), &matrix.to_csv_string())
}

fn cmd_trial(args: &TrialArgs) -> matcomp::Result<()> {
    let spec = args.spec.spec(args.seed);
    let (record, report) = run_trial_detailed(
        &spec,
        args.p,
        args.strategy,
        args.relations,
        &args.solver.options(),
        true,
    )?;
    let mut doc = serde_json::json!({ "record": record });
    if let Some(report) = report {
        let solve: serde_json::Value =
            serde_json::from_str(&report.to_json(args.emit_matrix)).expect("report JSON");
        doc["solve"] = solve;
    }
    let mut text = serde_json::to_string_pretty(&doc).expect("trial JSON");
    text.push('\n');
    write_output(args.out.as_ref(), &text)
}

fn cmd_sweep(args: &SweepArgs) -> matcomp::Result<()> {
    let grid = SweepGrid {
        m: args.m,
        n: args.n,
        r_rest: args.r_rest,
        t_values: args.t.clone(),
        k_values: args.k.clone(),
        p_values: args.p.clone(),
        trials: args.trials,
        base_seed: args.base_seed,
        strategies: args.strategies.clone(),
        relations: args.relations,
        distribution: match args.dist.as_str() {
            "integer" => EntryDistribution::Integer { magnitude: args.mag },
            _ => EntryDistribution::Gaussian,
        },
    };
    let result = run_sweep(&grid, &args.solver.options(), args.timing, args.threads)?;
    write_output(args.out.as_ref(), &result.records_csv())?;
    if let Some(agg) = &args.agg {
        write_output(Some(agg), &result.aggregates_csv())?;
    }
    Ok(())
}

fn cmd_fig(grid: SweepGrid, args: &FigArgs) -> matcomp::Result<()> {
    let result = run_sweep(&grid, &args.solver.options(), args.timing, args.threads)?;
    write_output(args.out.as_ref(), &result.aggregates_csv())?;
    if let Some(rows) = &args.rows {
        write_output(Some(rows), &result.records_csv())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Trial(args) => cmd_trial(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Fig2(args) => cmd_fig(fig2_grid(args.trials, args.base_seed), args),
        Command::Fig3(args) => cmd_fig(fig3_grid(args.trials, args.base_seed), args),
        Command::Fig4(args) => cmd_fig(fig4_grid(args.trials, args.base_seed), args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
