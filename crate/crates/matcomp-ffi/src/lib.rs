//! C ABI for the matcomp toolkit.
//!
//! Conventions:
//! - Every fallible call returns an [`McStatus`]; results come back through
//!   `out` pointers that are written only on `MC_STATUS_OK`.
//! - Handles (`McMatrix`, `McPlan`, `McReport`) are opaque; free them with
//!   their matching `*_free` function. Strings returned by this library are
//!   NUL-terminated, UTF-8, and freed with `mc_string_free`.
//! - On failure, `mc_last_error_message` returns a thread-local description
//!   valid until the next failing call on the same thread.
//! - Panics never unwind across the boundary; they surface as
//!   `MC_STATUS_PANIC`.

// Pointer arguments are null-checked at entry and each function documents its
// contract; the exported surface stays plain `extern "C"` so bindings see
// ordinary functions rather than unsafe ones.
#![allow(clippy::not_unsafe_ptr_arg_deref)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use matcomp::harness::run_trial;
use matcomp::{
    optimal_sample, selective_sample, uniform_sample, CompletionProblem, DenseMatrix, Error,
    InstanceSpec, MatrixOracle, SamplingPlan, SolverOptions, Strategy,
};
use matcomp::rng::{RngStream, STREAM_SAMPLING};
use matcomp::solver::{relative_error, solve, solve_decoupled, SolveReport};
use matcomp::structure::ColumnSet;
use matcomp::synth::EntryDistribution;

/// Status code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum McStatus {
    Ok = 0,
    NullPointer = 1,
    Utf8 = 2,
    InvalidArgument = 3,
    Dimension = 4,
    Numeric = 5,
    Singular = 6,
    ProbeCapExceeded = 7,
    BudgetExhausted = 8,
    Inconsistent = 9,
    ParseError = 10,
    IoError = 11,
    NonConvergence = 12,
    Panic = 13,
}

/// Sampling strategy selector.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum McStrategy {
    Uniform = 0,
    Optimal = 1,
    Selective = 2,
}

impl From<McStrategy> for Strategy {
    fn from(s: McStrategy) -> Self {
        match s {
            McStrategy::Uniform => Strategy::Uniform,
            McStrategy::Optimal => Strategy::Optimal,
            McStrategy::Selective => Strategy::Selective,
        }
    }
}

/// Entry distribution selector for generated instances.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum McDistribution {
    Gaussian = 0,
    Integer = 1,
}

/// Solver options; zero-initialize and call `mc_solver_options_default`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct McSolverOptions {
    pub rho: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub rcond_tol: f64,
}

impl From<McSolverOptions> for SolverOptions {
    fn from(o: McSolverOptions) -> Self {
        SolverOptions {
            rho: o.rho,
            max_iters: o.max_iters,
            tol: o.tol,
            rcond_tol: o.rcond_tol,
        }
    }
}

/// Opaque dense matrix handle.
pub struct McMatrix(DenseMatrix);
/// Opaque sampling-plan handle.
pub struct McPlan(SamplingPlan);
/// Opaque solve-report handle.
pub struct McReport(SolveReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let cstring = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error message unavailable").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn status_of(err: &Error) -> McStatus {
    match err {
        Error::Dimension(_) => McStatus::Dimension,
        Error::Domain(_) => McStatus::InvalidArgument,
        Error::Numeric(_) => McStatus::Numeric,
        Error::NonConvergence { .. } => McStatus::NonConvergence,
        Error::Singular { .. } => McStatus::Singular,
        Error::ProbeCapExceeded { .. } => McStatus::ProbeCapExceeded,
        Error::BudgetExhausted { .. } => McStatus::BudgetExhausted,
        Error::Inconsistent(_) => McStatus::Inconsistent,
        Error::Parse(_) => McStatus::ParseError,
        Error::Io(_) => McStatus::IoError,
    }
}

fn fail(err: Error) -> McStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Runs `f` with panics converted to `MC_STATUS_PANIC`.
fn guarded(f: impl FnOnce() -> McStatus) -> McStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            McStatus::Panic
        }
    }
}

macro_rules! nonnull {
    ($ptr:expr) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => {
                set_error(format!("null pointer argument: {}", stringify!($ptr)));
                return McStatus::NullPointer;
            }
        }
    };
}

macro_rules! out_param {
    ($ptr:expr) => {
        match unsafe { $ptr.as_mut() } {
            Some(r) => r,
            None => {
                set_error(format!("null output pointer: {}", stringify!($ptr)));
                return McStatus::NullPointer;
            }
        }
    };
}

fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, McStatus> {
    if ptr.is_null() {
        set_error("null string argument".into());
        return Err(McStatus::NullPointer);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|e| {
        set_error(format!("invalid UTF-8: {e}"));
        McStatus::Utf8
    })
}

fn give_string(out: &mut *mut c_char, text: String) -> McStatus {
    match CString::new(text) {
        Ok(c) => {
            *out = c.into_raw();
            McStatus::Ok
        }
        Err(e) => {
            set_error(format!("string contained NUL: {e}"));
            McStatus::Numeric
        }
    }
}

// --- version and errors ---------------------------------------------------

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failing call on this thread, or NULL.
/// Valid until the next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn mc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|c| c.as_ptr())
            .unwrap_or(ptr::null())
    })
}

/// Frees a string returned by this library.
#[no_mangle]
pub extern "C" fn mc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Fills `out` with the default solver options.
#[no_mangle]
pub extern "C" fn mc_solver_options_default(out: *mut McSolverOptions) -> McStatus {
    guarded(|| {
        let out = out_param!(out);
        let d = SolverOptions::default();
        *out = McSolverOptions {
            rho: d.rho,
            max_iters: d.max_iters,
            tol: d.tol,
            rcond_tol: d.rcond_tol,
        };
        McStatus::Ok
    })
}

// --- matrices ---------------------------------------------------------------

/// Generates a synthetic instance: a rank-`k` block in the first `t` columns
/// plus an independent rank-`r_rest` remainder. `magnitude` is used only by
/// the integer distribution.
#[no_mangle]
pub extern "C" fn mc_matrix_generate(
    m: usize,
    n: usize,
    t: usize,
    k: usize,
    r_rest: usize,
    seed: u64,
    distribution: McDistribution,
    magnitude: u32,
    out: *mut *mut McMatrix,
) -> McStatus {
    guarded(|| {
        let out = out_param!(out);
        let spec = InstanceSpec {
            m,
            n,
            t,
            k,
            r_rest,
            seed,
            distribution: match distribution {
                McDistribution::Gaussian => EntryDistribution::Gaussian,
                McDistribution::Integer => EntryDistribution::Integer { magnitude },
            },
        };
        match matcomp::generate(&spec) {
            Ok((matrix, _)) => {
                *out = Box::into_raw(Box::new(McMatrix(matrix)));
                McStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Parses a matrix from CSV text (one row per line).
#[no_mangle]
pub extern "C" fn mc_matrix_from_csv_text(
    text: *const c_char,
    out: *mut *mut McMatrix,
) -> McStatus {
    guarded(|| {
        let out = out_param!(out);
        let text = match str_arg(text) {
            Ok(t) => t,
            Err(status) => return status,
        };
        match DenseMatrix::from_csv_str(text) {
            Ok(matrix) => {
                *out = Box::into_raw(Box::new(McMatrix(matrix)));
                McStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Renders a matrix as CSV text (17 significant digits, lossless).
#[no_mangle]
pub extern "C" fn mc_matrix_to_csv_text(
    matrix: *const McMatrix,
    out: *mut *mut c_char,
) -> McStatus {
    guarded(|| {
        let matrix = nonnull!(matrix);
        let out = out_param!(out);
        give_string(out, matrix.0.to_csv_string())
    })
}

/// Row count; 0 for a null handle.
#[no_mangle]
pub extern "C" fn mc_matrix_rows(matrix: *const McMatrix) -> usize {
    unsafe { matrix.as_ref() }.map_or(0, |m| m.0.rows())
}

/// Column count; 0 for a null handle.
#[no_mangle]
pub extern "C" fn mc_matrix_cols(matrix: *const McMatrix) -> usize {
    unsafe { matrix.as_ref() }.map_or(0, |m| m.0.cols())
}

/// Reads one entry (0-based indices).
#[no_mangle]
pub extern "C" fn mc_matrix_get(
    matrix: *const McMatrix,
    row: usize,
    col: usize,
    out: *mut f64,
) -> McStatus {
    guarded(|| {
        let matrix = nonnull!(matrix);
        let out = out_param!(out);
        if row >= matrix.0.rows() || col >= matrix.0.cols() {
            set_error(format!(
                "index ({row}, {col}) out of range for {}x{}",
                matrix.0.rows(),
                matrix.0.cols()
            ));
            return McStatus::InvalidArgument;
        }
        *out = matrix.0.get(row, col);
        McStatus::Ok
    })
}

#[no_mangle]
pub extern "C" fn mc_matrix_free(matrix: *mut McMatrix) {
    if !matrix.is_null() {
        drop(unsafe { Box::from_raw(matrix) });
    }
}

// --- sampling plans ---------------------------------------------------------

/// Builds a sampling plan against `matrix`, treating its first `t` columns as
/// the structured block of rank `k`. `budget` is the total observation count;
/// `relations < 0` asks for the default relation count (selective only).
#[no_mangle]
pub extern "C" fn mc_plan_build(
    matrix: *const McMatrix,
    strategy: McStrategy,
    t: usize,
    k: usize,
    budget: usize,
    relations: i64,
    seed: u64,
    out: *mut *mut McPlan,
) -> McStatus {
    guarded(|| {
        let matrix = nonnull!(matrix);
        let out = out_param!(out);
        let result = (|| -> matcomp::Result<SamplingPlan> {
            let cols = ColumnSet::first(matrix.0.cols(), t)?;
            let oracle = MatrixOracle::new(&matrix.0, budget);
            let mut rng = RngStream::with_stream(seed, STREAM_SAMPLING);
            match Strategy::from(strategy) {
                Strategy::Uniform => uniform_sample(oracle, budget, &mut rng),
                Strategy::Optimal => optimal_sample(oracle, &cols, k, &mut rng),
                Strategy::Selective => {
                    let count = if relations < 0 {
                        matcomp::default_relation_count(t, k)
                    } else {
                        relations as usize
                    };
                    selective_sample(oracle, &cols, k, count, &mut rng)
                }
            }
        })();
        match result {
            Ok(plan) => {
                *out = Box::into_raw(Box::new(McPlan(plan)));
                McStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Serializes a plan to its JSON document (1-based indices).
#[no_mangle]
pub extern "C" fn mc_plan_to_json(plan: *const McPlan, out: *mut *mut c_char) -> McStatus {
    guarded(|| {
        let plan = nonnull!(plan);
        let out = out_param!(out);
        give_string(out, plan.0.to_json())
    })
}

/// Parses a plan from its JSON document.
#[no_mangle]
pub extern "C" fn mc_plan_from_json(text: *const c_char, out: *mut *mut McPlan) -> McStatus {
    guarded(|| {
        let out = out_param!(out);
        let text = match str_arg(text) {
            Ok(t) => t,
            Err(status) => return status,
        };
        match SamplingPlan::from_json(text) {
            Ok(plan) => {
                *out = Box::into_raw(Box::new(McPlan(plan)));
                McStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of observed entries in the plan.
#[no_mangle]
pub extern "C" fn mc_plan_observation_count(plan: *const McPlan) -> usize {
    unsafe { plan.as_ref() }.map_or(0, |p| p.0.omega().len())
}

/// Copies the plan's budget ledger counters into the given slots (any may be
/// NULL to skip).
#[no_mangle]
pub extern "C" fn mc_plan_ledger(
    plan: *const McPlan,
    total_budget: *mut usize,
    spent_structured: *mut usize,
    spent_uniform: *mut usize,
    wasted: *mut usize,
) -> McStatus {
    guarded(|| {
        let plan = nonnull!(plan);
        let ledger = plan.0.ledger();
        unsafe {
            if let Some(slot) = total_budget.as_mut() {
                *slot = ledger.total_budget();
            }
            if let Some(slot) = spent_structured.as_mut() {
                *slot = ledger.spent_structured();
            }
            if let Some(slot) = spent_uniform.as_mut() {
                *slot = ledger.spent_uniform();
            }
            if let Some(slot) = wasted.as_mut() {
                *slot = ledger.wasted();
            }
        }
        McStatus::Ok
    })
}

#[no_mangle]
pub extern "C" fn mc_plan_free(plan: *mut McPlan) {
    if !plan.is_null() {
        drop(unsafe { Box::from_raw(plan) });
    }
}

// --- solving ----------------------------------------------------------------

/// Completes the matrix described by a plan. Optimal plans take the decoupled
/// fast path (block filled exactly, splitting solver on the remainder); other
/// plans run the full splitting solver. `opts` may be NULL for defaults.
#[no_mangle]
pub extern "C" fn mc_solve_plan(
    plan: *const McPlan,
    opts: *const McSolverOptions,
    out: *mut *mut McReport,
) -> McStatus {
    guarded(|| {
        let plan = nonnull!(plan);
        let out = out_param!(out);
        let options: SolverOptions = unsafe { opts.as_ref() }
            .map(|o| SolverOptions::from(*o))
            .unwrap_or_default();
        let result = (|| -> matcomp::Result<SolveReport> {
            let problem = CompletionProblem::from_plan(&plan.0)?;
            match plan.0.strategy() {
                Strategy::Optimal => solve_decoupled(&problem, &options),
                _ => solve(&problem, &options),
            }
        })();
        match result {
            Ok(report) => {
                *out = Box::into_raw(Box::new(McReport(report)));
                McStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// True when the solver met its tolerance within the iteration cap.
#[no_mangle]
pub extern "C" fn mc_report_converged(report: *const McReport) -> bool {
    unsafe { report.as_ref() }.is_some_and(|r| r.0.converged)
}

#[no_mangle]
pub extern "C" fn mc_report_iterations(report: *const McReport) -> usize {
    unsafe { report.as_ref() }.map_or(0, |r| r.0.iterations)
}

#[no_mangle]
pub extern "C" fn mc_report_primal_residual(report: *const McReport) -> f64 {
    unsafe { report.as_ref() }.map_or(f64::NAN, |r| r.0.primal_residual)
}

#[no_mangle]
pub extern "C" fn mc_report_dual_residual(report: *const McReport) -> f64 {
    unsafe { report.as_ref() }.map_or(f64::NAN, |r| r.0.dual_residual)
}

#[no_mangle]
pub extern "C" fn mc_report_constraint_violation(report: *const McReport) -> f64 {
    unsafe { report.as_ref() }.map_or(f64::NAN, |r| r.0.constraint_violation_max)
}

/// Copies the reconstructed matrix out of a report.
#[no_mangle]
pub extern "C" fn mc_report_matrix(report: *const McReport, out: *mut *mut McMatrix) -> McStatus {
    guarded(|| {
        let report = nonnull!(report);
        let out = out_param!(out);
        *out = Box::into_raw(Box::new(McMatrix(report.0.x_hat.clone())));
        McStatus::Ok
    })
}

/// Serializes a report to JSON, optionally embedding the matrix payload.
#[no_mangle]
pub extern "C" fn mc_report_to_json(
    report: *const McReport,
    include_matrix: bool,
    out: *mut *mut c_char,
) -> McStatus {
    guarded(|| {
        let report = nonnull!(report);
        let out = out_param!(out);
        give_string(out, report.0.to_json(include_matrix))
    })
}

#[no_mangle]
pub extern "C" fn mc_report_free(report: *mut McReport) {
    if !report.is_null() {
        drop(unsafe { Box::from_raw(report) });
    }
}

/// Operator-norm relative error of `estimate` against `truth`.
#[no_mangle]
pub extern "C" fn mc_relative_error(
    estimate: *const McMatrix,
    truth: *const McMatrix,
    out: *mut f64,
) -> McStatus {
    guarded(|| {
        let estimate = nonnull!(estimate);
        let truth = nonnull!(truth);
        let out = out_param!(out);
        match relative_error(&estimate.0, &truth.0) {
            Ok(v) => {
                *out = v;
                McStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// One-shot trial: generate, sample, solve, and return the trial record as
/// JSON. `relations < 0` asks for the default count. `p` is the observation
/// rate in [0, 1].
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub extern "C" fn mc_run_trial_json(
    m: usize,
    n: usize,
    t: usize,
    k: usize,
    r_rest: usize,
    p: f64,
    strategy: McStrategy,
    seed: u64,
    relations: i64,
    out: *mut *mut c_char,
) -> McStatus {
    guarded(|| {
        let out = out_param!(out);
        let spec = InstanceSpec::new(m, n, t, k, r_rest, seed);
        let rel = (relations >= 0).then_some(relations as usize);
        match run_trial(
            &spec,
            p,
            Strategy::from(strategy),
            rel,
            &SolverOptions::default(),
            true,
        ) {
            Ok(record) => give_string(out, record.to_json()),
            Err(e) => fail(e),
        }
    })
}
