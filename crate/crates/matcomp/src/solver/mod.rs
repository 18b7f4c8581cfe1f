//! Nuclear-norm minimization over observation and column-structure
//! constraints.
//!
//! The feasible set is affine: observed entries are pinned and every column
//! relation (including the block equation, which decomposes into one relation
//! per non-basis column) acts row-wise. The solver alternates the
//! singular-value thresholding prox with an exact projection onto that set,
//! plus a scaled dual update, stopping when both residuals fall below
//! `tol`·max(1, ‖X‖_F). Non-convergence at the iteration cap is a reported
//! state, not an error.

mod projector;

pub use projector::AffineRowProjector;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, svt};
use crate::matrix::DenseMatrix;
use crate::observe::ObservationSet;
use crate::sampling::SamplingPlan;
use crate::structure::{BlockConstraint, ColumnRelation};

/// Tolerance for agreement between an observed entry and what a relation
/// predicts for it, scaled by the entry magnitude.
pub const CONSISTENCY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Splitting penalty; the prox threshold is its reciprocal.
    pub rho: f64,
    pub max_iters: usize,
    /// Relative stopping tolerance on both residuals.
    pub tol: f64,
    /// Reciprocal-condition threshold handed to linear subroutines.
    pub rcond_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iters: 2000,
            tol: 1e-7,
            rcond_tol: 1e-10,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Domain(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Domain(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Domain("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// A completion task: observations plus optional column structure, validated
/// for mutual consistency at construction.
#[derive(Clone, Debug)]
pub struct CompletionProblem {
    rows: usize,
    cols: usize,
    omega: ObservationSet,
    block: Option<BlockConstraint>,
    relations: Vec<ColumnRelation>,
}

impl CompletionProblem {
    pub fn new(
        rows: usize,
        cols: usize,
        omega: ObservationSet,
        block: Option<BlockConstraint>,
        relations: Vec<ColumnRelation>,
    ) -> Result<Self> {
        if omega.shape() != (rows, cols) {
            return Err(Error::Dimension(format!(
                "observation set is {:?}, problem is {rows}x{cols}",
                omega.shape()
            )));
        }
        if let Some(block) = &block {
            if block.cols().n() != cols {
                return Err(Error::Dimension(format!(
                    "block is over n = {}, problem has {cols} columns",
                    block.cols().n()
                )));
            }
            // The block equation is only usable when the basis values are
            // fully known.
            for &j in block.basis_cols() {
                if !omega.column_fully_observed(j) {
                    return Err(Error::Domain(format!(
                        "basis column {j} must be fully observed"
                    )));
                }
            }
        }
        for rel in &relations {
            let out_of_range = rel
                .basis_cols()
                .iter()
                .chain(std::iter::once(&rel.target_col()))
                .any(|&j| j >= cols);
            if out_of_range {
                return Err(Error::Dimension(format!(
                    "relation for column {} references columns outside 0..{cols}",
                    rel.target_col()
                )));
            }
        }
        let problem = Self {
            rows,
            cols,
            omega,
            block,
            relations,
        };
        problem.check_consistency()?;
        Ok(problem)
    }

    pub fn from_plan(plan: &SamplingPlan) -> Result<Self> {
        let (rows, cols) = plan.omega().shape();
        Self::new(
            rows,
            cols,
            plan.omega().clone(),
            plan.block().cloned(),
            plan.relations().to_vec(),
        )
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn omega(&self) -> &ObservationSet {
        &self.omega
    }

    pub fn block(&self) -> Option<&BlockConstraint> {
        self.block.as_ref()
    }

    pub fn relations(&self) -> &[ColumnRelation] {
        &self.relations
    }

    /// Explicit relations plus the block equation decomposed column-wise.
    /// One constraint mechanism serves both.
    pub fn effective_relations(&self) -> Vec<ColumnRelation> {
        let mut all = self.relations.clone();
        if let Some(block) = &self.block {
            all.extend(block.to_relations());
        }
        all
    }

    /// Every entry pinned by both an observation and a relation must agree.
    fn check_consistency(&self) -> Result<()> {
        for rel in self.effective_relations() {
            for i in 0..self.rows {
                let Some(observed) = self.omega.get(i, rel.target_col()) else {
                    continue;
                };
                let basis: Option<Vec<f64>> = rel
                    .basis_cols()
                    .iter()
                    .map(|&j| self.omega.get(i, j))
                    .collect();
                let Some(basis) = basis else { continue };
                let predicted = rel.predict(&basis);
                let scale = 1.0 + observed.abs().max(predicted.abs());
                if (predicted - observed).abs() > CONSISTENCY_TOL * scale {
                    return Err(Error::Inconsistent(format!(
                        "row {i}, column {}: observed {observed} but relation predicts {predicted}",
                        rel.target_col()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub x_hat: DenseMatrix,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    pub constraint_violation_max: f64,
}

#[derive(Serialize, Deserialize)]
struct ReportDoc {
    converged: bool,
    iterations: usize,
    primal_residual: f64,
    dual_residual: f64,
    constraint_violation_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_hat: Option<DenseMatrix>,
}

impl SolveReport {
    /// JSON export; the matrix payload is included only on request.
    pub fn to_json(&self, include_matrix: bool) -> String {
        serde_json::to_string_pretty(&ReportDoc {
            converged: self.converged,
            iterations: self.iterations,
            primal_residual: self.primal_residual,
            dual_residual: self.dual_residual,
            constraint_violation_max: self.constraint_violation_max,
            x_hat: include_matrix.then(|| self.x_hat.clone()),
        })
        .expect("report serialization")
    }
}

fn frobenius_of_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Minimizes the nuclear norm over the problem's affine feasible set by
/// prox/projection splitting. Returns the projected (feasible) iterate.
pub fn solve(problem: &CompletionProblem, opts: &SolverOptions) -> Result<SolveReport> {
    opts.validate()?;
    let (m, n) = problem.shape();
    let relations = problem.effective_relations();
    let projector = AffineRowProjector::build(m, n, problem.omega(), &relations)?;

    // Start from the projection of the zero matrix and a zero dual.
    let mut z = DenseMatrix::zeros(m, n);
    projector.project(&mut z);
    let mut u = DenseMatrix::zeros(m, n);
    let mut scratch = DenseMatrix::zeros(m, n);

    let theta = 1.0 / opts.rho;
    let mut iterations = 0;
    let mut converged = false;
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);

    for iter in 1..=opts.max_iters {
        iterations = iter;

        // Prox step on Z - U.
        for ((s, zv), uv) in scratch
            .as_mut_slice()
            .iter_mut()
            .zip(z.as_slice())
            .zip(u.as_slice())
        {
            *s = zv - uv;
        }
        let x = svt(&scratch, theta)?;

        // Exact projection of X + U.
        for ((s, xv), uv) in scratch
            .as_mut_slice()
            .iter_mut()
            .zip(x.as_slice())
            .zip(u.as_slice())
        {
            *s = xv + uv;
        }
        projector.project(&mut scratch);

        primal = frobenius_of_diff(&x, &scratch);
        dual = opts.rho * frobenius_of_diff(&scratch, &z);

        for ((uv, xv), zv) in u
            .as_mut_slice()
            .iter_mut()
            .zip(x.as_slice())
            .zip(scratch.as_slice())
        {
            *uv += xv - zv;
        }
        std::mem::swap(&mut z, &mut scratch);

        let scale = x.frobenius_norm().max(1.0);
        if primal <= opts.tol * scale && dual <= opts.tol * scale {
            converged = true;
            break;
        }
    }

    let constraint_violation_max = projector.max_violation(&z);
    Ok(SolveReport {
        x_hat: z,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        converged,
        constraint_violation_max,
    })
}

/// Fast path for plans whose block basis is fully observed: the block columns
/// are filled in exactly from the basis values and coordinates, and the
/// splitting solver runs only on the remaining columns.
pub fn solve_decoupled(problem: &CompletionProblem, opts: &SolverOptions) -> Result<SolveReport> {
    let block = problem.block().ok_or_else(|| {
        Error::Domain("the decoupled path needs a block constraint".into())
    })?;
    if !problem.relations().is_empty() {
        return Err(Error::Domain(
            "the decoupled path takes no extra column relations".into(),
        ));
    }
    let (m, n) = problem.shape();
    let omega = problem.omega();

    let mut x_hat = DenseMatrix::zeros(m, n);

    // Basis columns straight from the observations (fully observed by the
    // problem invariant).
    let k = block.rank();
    let basis_values = DenseMatrix::from_fn(m, k, |i, q| {
        omega
            .get(i, block.basis_cols()[q])
            .expect("basis columns are fully observed")
    });
    for (q, &j) in block.basis_cols().iter().enumerate() {
        for i in 0..m {
            x_hat.set(i, j, basis_values.get(i, q));
        }
    }
    if let Some(coords) = block.coords() {
        let filled = basis_values.matmul(coords)?;
        for (pos, &j) in block.non_basis_cols().iter().enumerate() {
            for i in 0..m {
                x_hat.set(i, j, filled.get(i, pos));
            }
        }
    }

    let rest: Vec<usize> = (0..n).filter(|&j| !block.cols().contains(j)).collect();
    let sub = if rest.is_empty() {
        None
    } else {
        let sub_omega = omega.restrict_to_columns(&rest);
        let sub_problem = CompletionProblem::new(m, rest.len(), sub_omega, None, vec![])?;
        let report = solve(&sub_problem, opts)?;
        for (pos, &j) in rest.iter().enumerate() {
            for i in 0..m {
                x_hat.set(i, j, report.x_hat.get(i, pos));
            }
        }
        Some(report)
    };

    let projector =
        AffineRowProjector::build(m, n, omega, &problem.effective_relations())?;
    let constraint_violation_max = projector.max_violation(&x_hat);
    Ok(match sub {
        None => SolveReport {
            x_hat,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            converged: true,
            constraint_violation_max,
        },
        Some(report) => SolveReport {
            x_hat,
            iterations: report.iterations,
            primal_residual: report.primal_residual,
            dual_residual: report.dual_residual,
            converged: report.converged,
            constraint_violation_max,
        },
    })
}

/// Reconstruction error in the operator norm, relative to ‖truth‖₂.
pub fn relative_error(x_hat: &DenseMatrix, truth: &DenseMatrix) -> Result<f64> {
    if x_hat.shape() != truth.shape() {
        return Err(Error::Dimension(format!(
            "estimate is {:?}, truth is {:?}",
            x_hat.shape(),
            truth.shape()
        )));
    }
    let denom = operator_norm(truth)?;
    if denom == 0.0 {
        return Err(Error::Domain(
            "relative error is undefined against a zero matrix".into(),
        ));
    }
    Ok(operator_norm(&x_hat.sub(truth)?)? / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::nuclear_norm;
    use crate::rng::{RngStream, STREAM_SAMPLING};
    use crate::sampling::{optimal_sample, uniform_sample, MatrixOracle};
    use crate::structure::ColumnSet;
    use crate::synth::{generate, InstanceSpec};

    fn observe_all_but(m: &DenseMatrix, skip: &[(usize, usize)]) -> ObservationSet {
        let mut omega = ObservationSet::new(m.rows(), m.cols());
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if !skip.contains(&(i, j)) {
                    omega.insert(i, j, m.get(i, j)).unwrap();
                }
            }
        }
        omega
    }

    #[test]
    fn full_observation_recovers_exactly() {
        let (m, _) = generate(&InstanceSpec::new(12, 10, 4, 2, 3, 5)).unwrap();
        let omega = ObservationSet::full(&m);
        let problem = CompletionProblem::new(12, 10, omega, None, vec![]).unwrap();
        let report = solve(&problem, &SolverOptions::default()).unwrap();
        assert!(report.converged);
        assert!(report.x_hat.max_abs_diff(&m) <= 1e-9);
        assert!(report.iterations <= 5);
    }

    #[test]
    fn two_by_two_missing_entry_matches_analytic_minimizer() {
        // For [[1,2],[2,x]] the nuclear norm is sqrt(9 + x² + 2|x-4|),
        // minimized at x = 1 (value 4), not at the rank-1 completion x = 4
        // (value 5).
        let m = DenseMatrix::new(2, 2, vec![1.0, 2.0, 2.0, 0.0]).unwrap();
        let omega = observe_all_but(&m, &[(1, 1)]);
        let problem = CompletionProblem::new(2, 2, omega, None, vec![]).unwrap();
        let report = solve(&problem, &SolverOptions::default()).unwrap();
        assert!(report.converged);
        assert!(
            (report.x_hat.get(1, 1) - 1.0).abs() <= 1e-4,
            "got {}",
            report.x_hat.get(1, 1)
        );
    }

    #[test]
    fn inconsistent_pinning_is_rejected_at_construction() {
        let mut omega = ObservationSet::new(2, 3);
        omega.insert(0, 0, 1.0).unwrap();
        omega.insert(0, 1, 2.0).unwrap();
        omega.insert(0, 2, 99.0).unwrap(); // relation predicts 3.0
        let rel = ColumnRelation::new(vec![0, 1], 2, vec![1.0, 1.0]).unwrap();
        let err = CompletionProblem::new(2, 3, omega, None, vec![rel]).unwrap_err();
        assert!(matches!(err, Error::Inconsistent(_)));
    }

    #[test]
    fn solve_enforces_block_equation_exactly() {
        let (m, cols) = generate(&InstanceSpec::new(50, 50, 20, 2, 4, 42)).unwrap();
        let plan = optimal_sample(
            MatrixOracle::new(&m, 750),
            &cols,
            2,
            &mut RngStream::with_stream(42, STREAM_SAMPLING),
        )
        .unwrap();
        let problem = CompletionProblem::from_plan(&plan).unwrap();
        let report = solve(&problem, &SolverOptions::default()).unwrap();
        // Exact projection keeps the block equation satisfied on the output.
        assert!(report.constraint_violation_max <= 1e-8);
    }

    #[test]
    fn feasibility_and_objective_sanity_on_seeded_instance() {
        let (m, _) = generate(&InstanceSpec::new(30, 30, 10, 2, 3, 7)).unwrap();
        let plan = uniform_sample(
            MatrixOracle::new(&m, 450),
            450,
            &mut RngStream::with_stream(7, STREAM_SAMPLING),
        )
        .unwrap();
        let problem = CompletionProblem::from_plan(&plan).unwrap();
        let report = solve(&problem, &SolverOptions::default()).unwrap();
        // Feasibility on the observed entries.
        let mut worst: f64 = 0.0;
        for (i, j, v) in problem.omega().iter() {
            worst = worst.max((report.x_hat.get(i, j) - v).abs());
        }
        assert!(worst <= 1e-6 * (1.0 + m.max_abs()));
        // The truth is feasible, so the solver cannot do meaningfully worse.
        let ours = nuclear_norm(&report.x_hat).unwrap();
        let truth = nuclear_norm(&m).unwrap();
        assert!(ours <= truth + 1e-4, "{ours} > {truth} + 1e-4");
    }

    #[test]
    fn nonconvergence_is_reported_not_raised() {
        let (m, _) = generate(&InstanceSpec::new(20, 20, 6, 2, 3, 3)).unwrap();
        let plan = uniform_sample(
            MatrixOracle::new(&m, 120),
            120,
            &mut RngStream::with_stream(3, STREAM_SAMPLING),
        )
        .unwrap();
        let problem = CompletionProblem::from_plan(&plan).unwrap();
        let opts = SolverOptions {
            max_iters: 3,
            ..SolverOptions::default()
        };
        let report = solve(&problem, &opts).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 3);
    }

    #[test]
    fn decoupled_block_only_problem_is_exact() {
        // t = n: nothing outside the block, the answer is assembled directly.
        let (m, _) = generate(&InstanceSpec::new(10, 6, 6, 2, 1, 11)).unwrap();
        let cols = ColumnSet::first(6, 6).unwrap();
        let plan = optimal_sample(
            MatrixOracle::new(&m, 60),
            &cols,
            2,
            &mut RngStream::with_stream(11, STREAM_SAMPLING),
        )
        .unwrap();
        let problem = CompletionProblem::from_plan(&plan).unwrap();
        let report = solve_decoupled(&problem, &SolverOptions::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
        assert!(report.x_hat.max_abs_diff(&m) <= 1e-8);
    }

    #[test]
    fn decoupled_requires_a_block() {
        let (m, _) = generate(&InstanceSpec::new(8, 8, 3, 1, 2, 1)).unwrap();
        let plan = uniform_sample(
            MatrixOracle::new(&m, 30),
            30,
            &mut RngStream::with_stream(1, STREAM_SAMPLING),
        )
        .unwrap();
        let problem = CompletionProblem::from_plan(&plan).unwrap();
        assert!(matches!(
            solve_decoupled(&problem, &SolverOptions::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn relative_error_examples() {
        let m = DenseMatrix::identity(3);
        assert_eq!(relative_error(&m, &m).unwrap(), 0.0);
        assert!((relative_error(&m.scale(2.0), &m).unwrap() - 1.0).abs() < 1e-12);
        let mut perturbed = m.clone();
        perturbed.set(0, 0, 1.0 + 1e-3);
        assert!((relative_error(&perturbed, &m).unwrap() - 1e-3).abs() < 1e-12);
        assert!(relative_error(&DenseMatrix::zeros(3, 3), &DenseMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn report_json_matrix_payload_is_optional() {
        let m = DenseMatrix::identity(2);
        let omega = ObservationSet::full(&m);
        let problem = CompletionProblem::new(2, 2, omega, None, vec![]).unwrap();
        let report = solve(&problem, &SolverOptions::default()).unwrap();
        let with: serde_json::Value =
            serde_json::from_str(&report.to_json(true)).unwrap();
        let without: serde_json::Value =
            serde_json::from_str(&report.to_json(false)).unwrap();
        assert!(with.get("x_hat").is_some());
        assert!(without.get("x_hat").is_none());
        assert_eq!(with["converged"], true);
    }
}
