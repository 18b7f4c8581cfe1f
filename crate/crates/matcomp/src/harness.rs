//! Seeded multi-trial experiment driver.
//!
//! A sweep runs a grid of (t, k, p) cells; within a cell, trial i of every
//! strategy shares one instance seed (`base_seed + i`), so strategy
//! comparisons are paired. Trials execute in parallel but records are emitted
//! in deterministic (cell, strategy, trial) order, and every per-trial
//! computation is seed-driven, so the CSV output is byte-identical across
//! runs and worker counts. Wall-clock timing is zeroed unless explicitly
//! requested, since real timings would break that reproducibility.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observe::budget_for_rate;
use crate::rng::{RngStream, STREAM_SAMPLING};
use crate::sampling::{
    default_relation_count, optimal_sample, selective_sample, uniform_sample, MatrixOracle,
    SamplingPlan, Strategy,
};
use crate::solver::{relative_error, solve, solve_decoupled, CompletionProblem, SolverOptions};
use crate::structure::min_optimal_observations;
use crate::synth::{generate, EntryDistribution, InstanceSpec};

/// Outcome of one (instance, strategy, seed) run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialRecord {
    pub m: usize,
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub r_rest: usize,
    pub p: f64,
    pub strategy: Strategy,
    pub trial: usize,
    pub seed: u64,
    /// Operator-norm relative error; NaN when no solve happened.
    pub rel_error: f64,
    pub obs_used: usize,
    pub wasted: usize,
    pub iters: usize,
    pub converged: bool,
    /// Optimal strategy with a budget below the block-recovery count: the
    /// trial is recorded but not solved.
    pub below_budget: bool,
    pub wall_ms: u64,
    /// Captured sampler/solver failure, if any. Not part of the CSV schema.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const RECORD_CSV_HEADER: &str =
    "m,n,t,k,r_rest,p,strategy,trial,seed,rel_error,obs_used,wasted,iters,converged,below_budget,wall_ms";

impl TrialRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serialization")
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.m,
            self.n,
            self.t,
            self.k,
            self.r_rest,
            self.p,
            self.strategy,
            self.trial,
            self.seed,
            self.rel_error,
            self.obs_used,
            self.wasted,
            self.iters,
            self.converged,
            self.below_budget,
            self.wall_ms
        )
    }
}

/// Relative reduction of error versus the uniform baseline, in percent.
/// Undefined (None) when the baseline error is zero or not finite.
pub fn accuracy_gain(err_uniform: f64, err_method: f64) -> Option<f64> {
    if err_uniform > 0.0 && err_uniform.is_finite() && err_method.is_finite() {
        Some(100.0 * (err_uniform - err_method) / err_uniform)
    } else {
        None
    }
}

/// Runs one trial: generate the instance from `spec.seed`, sample with the
/// given strategy under budget ⌊p·m·n⌋, solve, and measure the error.
/// Sampler and solver failures are captured into the record; only
/// configuration errors propagate.
pub fn run_trial(
    spec: &InstanceSpec,
    p: f64,
    strategy: Strategy,
    relations: Option<usize>,
    opts: &SolverOptions,
    timing: bool,
) -> Result<TrialRecord> {
    run_trial_detailed(spec, p, strategy, relations, opts, timing).map(|(record, _)| record)
}

/// [`run_trial`] plus the full solve report (when a solve happened), for
/// surfaces that want the reconstructed matrix.
pub fn run_trial_detailed(
    spec: &InstanceSpec,
    p: f64,
    strategy: Strategy,
    relations: Option<usize>,
    opts: &SolverOptions,
    timing: bool,
) -> Result<(TrialRecord, Option<crate::solver::SolveReport>)> {
    spec.validate()?;
    opts.validate()?;
    let budget = budget_for_rate(p, spec.m, spec.n)?;
    let mut record = TrialRecord {
        m: spec.m,
        n: spec.n,
        t: spec.t,
        k: spec.k,
        r_rest: if spec.t < spec.n { spec.r_rest } else { 0 },
        p,
        strategy,
        trial: 0,
        seed: spec.seed,
        rel_error: f64::NAN,
        obs_used: 0,
        wasted: 0,
        iters: 0,
        converged: false,
        below_budget: false,
        wall_ms: 0,
        error: None,
    };

    if strategy == Strategy::Optimal {
        let needed = min_optimal_observations(spec.k, spec.t, spec.m)?;
        if budget < needed {
            record.below_budget = true;
            return Ok((record, None));
        }
    }

    let started = Instant::now();
    let outcome = (|| -> Result<(SamplingPlan, f64, crate::solver::SolveReport)> {
        let (matrix, cols) = generate(spec)?;
        let mut rng = RngStream::with_stream(spec.seed, STREAM_SAMPLING);
        let oracle = MatrixOracle::new(&matrix, budget);
        let plan = match strategy {
            Strategy::Uniform => uniform_sample(oracle, budget, &mut rng)?,
            Strategy::Optimal => optimal_sample(oracle, &cols, spec.k, &mut rng)?,
            Strategy::Selective => {
                let count =
                    relations.unwrap_or_else(|| default_relation_count(spec.t, spec.k));
                selective_sample(oracle, &cols, spec.k, count, &mut rng)?
            }
        };
        let problem = CompletionProblem::from_plan(&plan)?;
        let report = match strategy {
            Strategy::Optimal => solve_decoupled(&problem, opts)?,
            _ => solve(&problem, opts)?,
        };
        let rel = relative_error(&report.x_hat, &matrix)?;
        Ok((plan, rel, report))
    })();

    let mut solve_report = None;
    match outcome {
        Ok((plan, rel, report)) => {
            record.rel_error = rel;
            record.obs_used = plan.ledger().spent();
            record.wasted = plan.ledger().wasted();
            record.iters = report.iterations;
            record.converged = report.converged;
            solve_report = Some(report);
        }
        Err(e) => {
            if let Some(ledger) = e.ledger() {
                record.obs_used = ledger.spent();
                record.wasted = ledger.wasted();
            }
            record.error = Some(e.to_string());
        }
    }
    if timing {
        record.wall_ms = started.elapsed().as_millis() as u64;
    }
    Ok((record, solve_report))
}

/// Grid of sweep cells plus the fixed instance dimensions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepGrid {
    pub m: usize,
    pub n: usize,
    pub r_rest: usize,
    pub t_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub p_values: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub strategies: Vec<Strategy>,
    /// Selective relation-count override; default is half the recoverable.
    pub relations: Option<usize>,
    pub distribution: EntryDistribution,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.t_values.is_empty() || self.k_values.is_empty() || self.p_values.is_empty() {
            return Err(Error::Domain("sweep grid lists must be nonempty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Domain("trials per cell must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Domain("at least one strategy is required".into()));
        }
        for &p in &self.p_values {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("observation rate {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Cells in deterministic (t, k, p) order, invalid combinations skipped.
    pub fn cells(&self) -> Vec<(usize, usize, f64)> {
        let mut cells = Vec::new();
        for &t in &self.t_values {
            for &k in &self.k_values {
                for &p in &self.p_values {
                    let spec = InstanceSpec {
                        m: self.m,
                        n: self.n,
                        t,
                        k,
                        r_rest: self.r_rest,
                        seed: 0,
                        distribution: self.distribution,
                    };
                    if spec.validate().is_ok() {
                        cells.push((t, k, p));
                    }
                }
            }
        }
        cells
    }
}

/// One row of the per-cell aggregate table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregateRow {
    pub m: usize,
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub r_rest: usize,
    pub p: f64,
    pub strategy: Strategy,
    pub trials: usize,
    pub solved: usize,
    pub below_budget: usize,
    pub failed: usize,
    /// Mean over solved trials; NaN when nothing solved.
    pub mean_rel_error: f64,
    /// Gain versus the uniform mean in the same cell; NaN when undefined.
    pub gain_vs_uniform_pct: f64,
}

pub const AGGREGATE_CSV_HEADER: &str =
    "m,n,t,k,r_rest,p,strategy,trials,solved,below_budget,failed,mean_rel_error,gain_vs_uniform_pct";

impl AggregateRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.m,
            self.n,
            self.t,
            self.k,
            self.r_rest,
            self.p,
            self.strategy,
            self.trials,
            self.solved,
            self.below_budget,
            self.failed,
            self.mean_rel_error,
            self.gain_vs_uniform_pct
        )
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<AggregateRow>,
}

impl SweepResult {
    pub fn records_csv(&self) -> String {
        let mut out = String::from(RECORD_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn aggregates_csv(&self) -> String {
        let mut out = String::from(AGGREGATE_CSV_HEADER);
        out.push('\n');
        for r in &self.aggregates {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Runs every (cell, strategy, trial) of the grid, in parallel when
/// `threads != Some(1)`, and aggregates per-cell means and gains.
pub fn run_sweep(
    grid: &SweepGrid,
    opts: &SolverOptions,
    timing: bool,
    threads: Option<usize>,
) -> Result<SweepResult> {
    grid.validate()?;
    let cells = grid.cells();

    struct Task {
        spec: InstanceSpec,
        p: f64,
        strategy: Strategy,
        trial: usize,
    }
    let mut tasks = Vec::new();
    for &(t, k, p) in &cells {
        for &strategy in &grid.strategies {
            for trial in 0..grid.trials {
                tasks.push(Task {
                    spec: InstanceSpec {
                        m: grid.m,
                        n: grid.n,
                        t,
                        k,
                        r_rest: grid.r_rest,
                        seed: grid.base_seed.wrapping_add(trial as u64),
                        distribution: grid.distribution,
                    },
                    p,
                    strategy,
                    trial,
                });
            }
        }
    }

    let run_all = || -> Result<Vec<TrialRecord>> {
        tasks
            .par_iter()
            .map(|task| {
                let mut record = run_trial(
                    &task.spec,
                    task.p,
                    task.strategy,
                    grid.relations,
                    opts,
                    timing,
                )?;
                record.trial = task.trial;
                Ok(record)
            })
            .collect()
    };
    let records = match threads {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?
            .install(run_all),
        None => run_all(),
    }?;

    // Aggregate in record order: records are laid out cell-major, then
    // strategy, then trial.
    let mut aggregates = Vec::new();
    let per_cell = grid.strategies.len() * grid.trials;
    for (ci, &(t, k, p)) in cells.iter().enumerate() {
        let cell_rows = &records[ci * per_cell..(ci + 1) * per_cell];
        let mean_for = |strategy: Strategy| -> (usize, usize, usize, f64) {
            let rows = cell_rows.iter().filter(|r| r.strategy == strategy);
            let (mut solved, mut below, mut failed, mut sum) = (0usize, 0usize, 0usize, 0.0f64);
            for r in rows {
                if r.below_budget {
                    below += 1;
                } else if r.error.is_some() || !r.rel_error.is_finite() {
                    failed += 1;
                } else {
                    solved += 1;
                    sum += r.rel_error;
                }
            }
            let mean = if solved > 0 {
                sum / solved as f64
            } else {
                f64::NAN
            };
            (solved, below, failed, mean)
        };
        let uniform_mean = grid
            .strategies
            .iter()
            .find(|&&s| s == Strategy::Uniform)
            .map(|_| mean_for(Strategy::Uniform).3);
        for &strategy in &grid.strategies {
            let (solved, below, failed, mean) = mean_for(strategy);
            let gain = match (strategy, uniform_mean) {
                (Strategy::Uniform, Some(u)) if u.is_finite() && u > 0.0 => 0.0,
                (_, Some(u)) => accuracy_gain(u, mean).unwrap_or(f64::NAN),
                (_, None) => f64::NAN,
            };
            aggregates.push(AggregateRow {
                m: grid.m,
                n: grid.n,
                t,
                k,
                r_rest: grid.r_rest,
                p,
                strategy,
                trials: grid.trials,
                solved,
                below_budget: below,
                failed,
                mean_rel_error: mean,
                gain_vs_uniform_pct: gain,
            });
        }
    }

    Ok(SweepResult {
        records,
        aggregates,
    })
}

// --- canned figure grids ------------------------------------------------

/// 50×50, rank-2 block of width 20, 30% observed: the headline three-way
/// strategy comparison.
pub fn fig2_grid(trials: usize, base_seed: u64) -> SweepGrid {
    SweepGrid {
        m: 50,
        n: 50,
        r_rest: 4,
        t_values: vec![20],
        k_values: vec![2],
        p_values: vec![0.3],
        trials,
        base_seed,
        strategies: vec![Strategy::Uniform, Strategy::Optimal, Strategy::Selective],
        relations: None,
        distribution: EntryDistribution::Gaussian,
    }
}

/// Gain surface over block width and rank at fixed p = 0.3.
pub fn fig3_grid(trials: usize, base_seed: u64) -> SweepGrid {
    SweepGrid {
        m: 50,
        n: 50,
        r_rest: 4,
        t_values: vec![5, 10, 15, 20, 25],
        k_values: (1..=10).collect(),
        p_values: vec![0.3],
        trials,
        base_seed,
        strategies: vec![Strategy::Uniform, Strategy::Optimal],
        relations: None,
        distribution: EntryDistribution::Gaussian,
    }
}

/// Error versus observation rate at two block ranks on a 30×30 instance.
pub fn fig4_grid(trials: usize, base_seed: u64) -> SweepGrid {
    SweepGrid {
        m: 30,
        n: 30,
        r_rest: 4,
        t_values: vec![10],
        k_values: vec![1, 4],
        p_values: (1..=20).map(|i| i as f64 / 20.0).collect(),
        trials,
        base_seed,
        strategies: vec![Strategy::Uniform, Strategy::Optimal],
        relations: None,
        distribution: EntryDistribution::Gaussian,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_grid() -> SweepGrid {
        SweepGrid {
            m: 16,
            n: 16,
            r_rest: 2,
            t_values: vec![6],
            k_values: vec![2],
            p_values: vec![0.5],
            trials: 2,
            base_seed: 1,
            strategies: vec![Strategy::Uniform, Strategy::Optimal, Strategy::Selective],
            relations: None,
            distribution: EntryDistribution::Gaussian,
        }
    }

    #[test]
    fn gain_examples() {
        assert_eq!(accuracy_gain(0.10, 0.02), Some(80.0));
        assert_eq!(accuracy_gain(0.10, 0.10), Some(0.0));
        assert!((accuracy_gain(0.10, 0.06).unwrap() - 40.0).abs() < 1e-12);
        assert_eq!(accuracy_gain(0.0, 0.1), None);
    }

    #[test]
    fn full_observation_trial_is_exact_for_all_strategies() {
        for strategy in Strategy::ALL {
            let spec = InstanceSpec::new(12, 12, 5, 2, 2, 3);
            let record =
                run_trial(&spec, 1.0, strategy, None, &SolverOptions::default(), false).unwrap();
            assert!(record.error.is_none(), "{:?}", record.error);
            assert!(record.rel_error <= 1e-6, "{strategy}: {}", record.rel_error);
        }
    }

    #[test]
    fn below_budget_optimal_trial_skips_solving() {
        // k(t+m-k) = 4*(10+30-4) = 144 > 0.1*900 = 90.
        let spec = InstanceSpec::new(30, 30, 10, 4, 4, 0);
        let record = run_trial(
            &spec,
            0.1,
            Strategy::Optimal,
            None,
            &SolverOptions::default(),
            false,
        )
        .unwrap();
        assert!(record.below_budget);
        assert!(record.rel_error.is_nan());
        assert_eq!(record.obs_used, 0);
        assert_eq!(record.iters, 0);
    }

    #[test]
    fn sweep_layout_and_aggregates() {
        let grid = quick_grid();
        let result = run_sweep(&grid, &SolverOptions::default(), false, Some(1)).unwrap();
        // Single cell, three strategies, two trials.
        assert_eq!(result.records.len(), 6);
        assert_eq!(result.aggregates.len(), 3);
        for (idx, record) in result.records.iter().enumerate() {
            assert_eq!(record.strategy, grid.strategies[idx / 2]);
            assert_eq!(record.trial, idx % 2);
            assert_eq!(record.seed, grid.base_seed + (idx % 2) as u64);
        }
        // Aggregate means equal the mean of their rows.
        for agg in &result.aggregates {
            let rows: Vec<&TrialRecord> = result
                .records
                .iter()
                .filter(|r| r.strategy == agg.strategy)
                .collect();
            let mean = rows.iter().map(|r| r.rel_error).sum::<f64>() / rows.len() as f64;
            assert!((agg.mean_rel_error - mean).abs() <= 1e-12);
        }
    }

    #[test]
    fn sweep_csv_is_deterministic_across_runs_and_threads() {
        let grid = quick_grid();
        let opts = SolverOptions::default();
        let a = run_sweep(&grid, &opts, false, Some(1)).unwrap();
        let b = run_sweep(&grid, &opts, false, Some(2)).unwrap();
        let c = run_sweep(&grid, &opts, false, None).unwrap();
        assert_eq!(a.records_csv(), b.records_csv());
        assert_eq!(a.records_csv(), c.records_csv());
        assert_eq!(a.aggregates_csv(), b.aggregates_csv());
    }

    #[test]
    fn single_cell_single_trial_emits_one_row_per_strategy() {
        let mut grid = quick_grid();
        grid.trials = 1;
        let result = run_sweep(&grid, &SolverOptions::default(), false, Some(1)).unwrap();
        assert_eq!(result.records.len(), 3);
        let csv = result.records_csv();
        assert_eq!(csv.lines().count(), 4); // header + 3 rows
        assert!(csv.starts_with(RECORD_CSV_HEADER));
    }

    #[test]
    fn invalid_cells_are_skipped() {
        let mut grid = quick_grid();
        grid.k_values = vec![2, 7]; // k = 7 > t = 6 is invalid
        let result = run_sweep(&grid, &SolverOptions::default(), false, Some(1)).unwrap();
        assert_eq!(result.records.len(), 6);
        assert!(result.records.iter().all(|r| r.k == 2));
    }
}
