//! Observation-design strategies.
//!
//! A sampler never reads the hidden matrix directly: it goes through a
//! [`MatrixOracle`], which logs every reveal into an [`ObservationSet`] and a
//! [`BudgetLedger`]. Re-revealing an index is free. The output of a strategy
//! is a [`SamplingPlan`]: the observation set plus whatever column structure
//! the strategy recovered, with exact budget accounting.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_invertible, solve_square, DEFAULT_RCOND};
use crate::matrix::DenseMatrix;
use crate::observe::{BudgetLedger, ObservationSet};
use crate::rng::RngStream;
use crate::structure::{min_optimal_observations, BlockConstraint, ColumnRelation, ColumnSet};

/// Consecutive (selective) or total (optimal) singular-probe attempts before
/// a sampler gives up.
pub const PROBE_CAP: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Uniform,
    Optimal,
    Selective,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Uniform, Strategy::Optimal, Strategy::Selective];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::Optimal => "optimal",
            Strategy::Selective => "selective",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Strategy::Uniform),
            "optimal" => Ok(Strategy::Optimal),
            "selective" => Ok(Strategy::Selective),
            other => Err(Error::Parse(format!("unknown strategy {other:?}"))),
        }
    }
}

/// What a reveal is charged as.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Structured,
    Uniform,
}

/// Query-only view of a hidden matrix with budget accounting.
///
/// `reveal` is deterministic and idempotent: the first call on an index
/// charges the ledger, later calls return the recorded value for free.
pub struct MatrixOracle<'a> {
    hidden: &'a DenseMatrix,
    ledger: BudgetLedger,
    omega: ObservationSet,
}

impl<'a> MatrixOracle<'a> {
    pub fn new(hidden: &'a DenseMatrix, total_budget: usize) -> Self {
        Self {
            hidden,
            ledger: BudgetLedger::new(total_budget),
            omega: ObservationSet::new(hidden.rows(), hidden.cols()),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.hidden.shape()
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn observed(&self) -> &ObservationSet {
        &self.omega
    }

    pub fn remaining(&self) -> usize {
        self.ledger.remaining()
    }

    pub fn reveal(&mut self, i: usize, j: usize, phase: Phase) -> Result<f64> {
        if let Some(v) = self.omega.get(i, j) {
            return Ok(v);
        }
        match phase {
            Phase::Structured => self.ledger.charge_structured()?,
            Phase::Uniform => self.ledger.charge_uniform()?,
        }
        let v = self.hidden.get(i, j);
        self.omega.insert(i, j, v)?;
        Ok(v)
    }

    fn into_parts(self) -> (ObservationSet, BudgetLedger) {
        (self.omega, self.ledger)
    }
}

/// Output of a sampling strategy.
#[derive(Clone, Debug)]
pub struct SamplingPlan {
    strategy: Strategy,
    omega: ObservationSet,
    block: Option<BlockConstraint>,
    relations: Vec<ColumnRelation>,
    ledger: BudgetLedger,
    seed: u64,
    probe_attempts: usize,
}

impl SamplingPlan {
    fn assemble(
        strategy: Strategy,
        omega: ObservationSet,
        block: Option<BlockConstraint>,
        relations: Vec<ColumnRelation>,
        ledger: BudgetLedger,
        seed: u64,
        probe_attempts: usize,
    ) -> Result<Self> {
        if block.is_some() != (strategy == Strategy::Optimal) {
            return Err(Error::Domain(
                "a block constraint is carried exactly by optimal plans".into(),
            ));
        }
        if !relations.is_empty() && strategy != Strategy::Selective {
            return Err(Error::Domain(
                "column relations are carried only by selective plans".into(),
            ));
        }
        let plan = Self {
            strategy,
            omega,
            block,
            relations,
            ledger,
            seed,
            probe_attempts,
        };
        plan.check_support()?;
        Ok(plan)
    }

    /// Every index the structural payload relies on must have been revealed.
    fn check_support(&self) -> Result<()> {
        let (m, _) = self.omega.shape();
        if let Some(block) = &self.block {
            for &j in block.basis_cols() {
                if !self.omega.column_fully_observed(j) {
                    return Err(Error::Domain(format!(
                        "basis column {j} of the block is not fully observed"
                    )));
                }
            }
        }
        for rel in &self.relations {
            let k = rel.basis_cols().len();
            let supported = (0..m)
                .filter(|&i| {
                    self.omega.contains(i, rel.target_col())
                        && rel.basis_cols().iter().all(|&j| self.omega.contains(i, j))
                })
                .count();
            if supported < k {
                return Err(Error::Domain(format!(
                    "relation for column {} is supported by {supported} rows, needs {k}",
                    rel.target_col()
                )));
            }
        }
        Ok(())
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
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

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of k×k probes drawn (0 for uniform plans).
    pub fn probe_attempts(&self) -> usize {
        self.probe_attempts
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PlanDoc::from(self)).expect("plan serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PlanDoc =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("plan JSON: {e}")))?;
        doc.into_plan()
    }
}

// --- strategies -------------------------------------------------------------

/// Reveals `count` indices drawn uniformly without replacement from the grid.
pub fn uniform_sample(
    mut oracle: MatrixOracle,
    count: usize,
    rng: &mut RngStream,
) -> Result<SamplingPlan> {
    let (m, n) = oracle.shape();
    if count > m * n {
        return Err(Error::Domain(format!(
            "cannot draw {count} distinct entries from a {m}x{n} grid"
        )));
    }
    if count > oracle.remaining() {
        return Err(Error::Domain(format!(
            "count {count} exceeds the remaining budget {}",
            oracle.remaining()
        )));
    }
    for linear in rand::seq::index::sample(rng, m * n, count) {
        oracle.reveal(linear / n, linear % n, Phase::Uniform)?;
    }
    let seed = rng.seed();
    let (omega, ledger) = oracle.into_parts();
    SamplingPlan::assemble(Strategy::Uniform, omega, None, vec![], ledger, seed, 0)
}

/// Sorted without-replacement draw of `k` items from `0..len`, mapped through
/// `items`.
fn sorted_draw(rng: &mut RngStream, items: &[usize], k: usize) -> Vec<usize> {
    let mut picks: Vec<usize> = rand::seq::index::sample(rng, items.len(), k)
        .into_iter()
        .map(|pos| items[pos])
        .collect();
    picks.sort_unstable();
    picks
}

/// Spends remaining budget uniformly over unobserved indices accepted by
/// `admit`, then — only if the region saturates — over the rest of the grid,
/// so a completed plan always holds exactly `min(budget, m·n)` observations.
fn fill_uniform(
    oracle: &mut MatrixOracle,
    rng: &mut RngStream,
    admit: impl Fn(usize, usize) -> bool,
) -> Result<()> {
    for pass in 0..2 {
        if oracle.remaining() == 0 {
            return Ok(());
        }
        let (m, n) = oracle.shape();
        let mut candidates = Vec::new();
        for i in 0..m {
            for j in 0..n {
                if !oracle.observed().contains(i, j) && (pass == 1 || admit(i, j)) {
                    candidates.push((i, j));
                }
            }
        }
        let take = oracle.remaining().min(candidates.len());
        if take > 0 {
            for pos in rand::seq::index::sample(rng, candidates.len(), take) {
                let (i, j) = candidates[pos];
                oracle.reveal(i, j, Phase::Uniform)?;
            }
        }
    }
    Ok(())
}

/// Recovers the whole block exactly: probes random k×k submatrices until one
/// is invertible (cap [`PROBE_CAP`] total attempts, failed probes retained),
/// then reveals the probe rows across the block and the probe columns in
/// full, solves for the basis coordinates, and spends the rest of the budget
/// uniformly outside the block.
pub fn optimal_sample(
    mut oracle: MatrixOracle,
    block_cols: &ColumnSet,
    k: usize,
    rng: &mut RngStream,
) -> Result<SamplingPlan> {
    let (m, n) = oracle.shape();
    let t = block_cols.len();
    if block_cols.n() != n {
        return Err(Error::Dimension(format!(
            "column set is over n = {} but the matrix has {n} columns",
            block_cols.n()
        )));
    }
    let needed = min_optimal_observations(k, t, m)?;
    if oracle.ledger().total_budget() < needed {
        return Err(Error::Domain(format!(
            "budget {} cannot cover the {needed} observations the block recovery needs",
            oracle.ledger().total_budget()
        )));
    }

    let rows: Vec<usize> = (0..m).collect();
    let mut attempts = 0;
    let (probe_rows, probe_cols, coords) = loop {
        attempts += 1;
        if attempts > PROBE_CAP {
            // Nothing structured survived; every probe observation is waste.
            let (_, mut ledger) = oracle.into_parts();
            ledger.set_wasted(ledger.spent_structured());
            return Err(Error::ProbeCapExceeded {
                attempts: PROBE_CAP,
                ledger,
            });
        }
        let i_set = sorted_draw(rng, &rows, k);
        let j_set = sorted_draw(rng, block_cols.members(), k);
        let mut probe = DenseMatrix::zeros(k, k);
        for (pi, &i) in i_set.iter().enumerate() {
            for (pj, &j) in j_set.iter().enumerate() {
                probe.set(pi, pj, oracle.reveal(i, j, Phase::Structured)?);
            }
        }
        if !is_invertible(&probe, DEFAULT_RCOND)? {
            // Singular: keep the observations and draw again.
            continue;
        }

        // Rest of the probe rows across the block, then solve for the basis
        // coordinates of every non-basis column.
        let non_basis: Vec<usize> = block_cols
            .iter()
            .filter(|j| !j_set.contains(j))
            .collect();
        if non_basis.is_empty() {
            break (i_set, j_set, None);
        }
        let mut rhs = DenseMatrix::zeros(k, non_basis.len());
        for (pi, &i) in i_set.iter().enumerate() {
            for (pj, &j) in non_basis.iter().enumerate() {
                rhs.set(pi, pj, oracle.reveal(i, j, Phase::Structured)?);
            }
        }
        match solve_square(&probe, &rhs) {
            Ok(b) => break (i_set, j_set, Some(b)),
            // Invertibility was borderline; the observations stay, re-probe.
            Err(Error::Singular { .. }) => continue,
            Err(e) => return Err(e),
        }
    };

    // Remaining entries of the basis columns, so they are known in full.
    for i in 0..m {
        if probe_rows.contains(&i) {
            continue;
        }
        for &j in &probe_cols {
            oracle.reveal(i, j, Phase::Structured)?;
        }
    }

    // Structured spend beyond the optimal count is what failed probes cost.
    let wasted = oracle.ledger.spent_structured() - needed;
    oracle.ledger.set_wasted(wasted);

    fill_uniform(&mut oracle, rng, |_, j| !block_cols.contains(j))?;

    let block = BlockConstraint::new(block_cols.clone(), probe_cols, coords)?;
    let seed = rng.seed();
    let (omega, ledger) = oracle.into_parts();
    SamplingPlan::assemble(
        Strategy::Optimal,
        omega,
        Some(block),
        vec![],
        ledger,
        seed,
        attempts,
    )
}

/// Discovers `num_relations` single-column relations from k×k probes without
/// revealing full rows or columns, then spends the remaining budget uniformly
/// over the grid minus the resolved target columns (their unobserved entries
/// are already determined by the relations). Stops hunting early when the
/// worst-case cost of another relation (k² + k fresh reveals) no longer fits
/// the budget.
pub fn selective_sample(
    mut oracle: MatrixOracle,
    block_cols: &ColumnSet,
    k: usize,
    num_relations: usize,
    rng: &mut RngStream,
) -> Result<SamplingPlan> {
    let (m, n) = oracle.shape();
    let t = block_cols.len();
    if block_cols.n() != n {
        return Err(Error::Dimension(format!(
            "column set is over n = {} but the matrix has {n} columns",
            block_cols.n()
        )));
    }
    if k == 0 || k > t.min(m) {
        return Err(Error::Domain(format!(
            "rank k = {k} must satisfy 1 <= k <= min(t = {t}, m = {m})"
        )));
    }
    if num_relations > t - k {
        return Err(Error::Domain(format!(
            "cannot recover {num_relations} relations from a rank-{k} block of width {t}"
        )));
    }

    let rows: Vec<usize> = (0..m).collect();
    let mut resolved: Vec<usize> = Vec::new();
    let mut relations: Vec<ColumnRelation> = Vec::new();
    let mut useful: HashSet<(usize, usize)> = HashSet::new();
    let mut consecutive_fails = 0;
    let mut attempts = 0;

    while relations.len() < num_relations {
        if consecutive_fails >= PROBE_CAP {
            let (_, mut ledger) = oracle.into_parts();
            ledger.set_wasted(ledger.spent_structured() - useful.len());
            return Err(Error::ProbeCapExceeded {
                attempts: PROBE_CAP,
                ledger,
            });
        }
        // Worst case for one more relation: a fresh probe plus a fresh
        // target column segment.
        if oracle.remaining() < k * k + k {
            break;
        }
        attempts += 1;
        let i_set = sorted_draw(rng, &rows, k);
        let j_set = sorted_draw(rng, block_cols.members(), k);
        let mut probe = DenseMatrix::zeros(k, k);
        for (pi, &i) in i_set.iter().enumerate() {
            for (pj, &j) in j_set.iter().enumerate() {
                probe.set(pi, pj, oracle.reveal(i, j, Phase::Structured)?);
            }
        }
        if !is_invertible(&probe, DEFAULT_RCOND)? {
            consecutive_fails += 1;
            continue;
        }

        // Target column: uniform over the block columns not yet resolved and
        // not in the probe basis, so a relation never references itself.
        let candidates: Vec<usize> = block_cols
            .iter()
            .filter(|j| !resolved.contains(j) && !j_set.contains(j))
            .collect();
        debug_assert!(!candidates.is_empty(), "guaranteed by num_relations <= t - k");
        let target = candidates[rng.random_range(0..candidates.len())];

        let mut rhs = DenseMatrix::zeros(k, 1);
        for (pi, &i) in i_set.iter().enumerate() {
            rhs.set(pi, 0, oracle.reveal(i, target, Phase::Structured)?);
        }
        let coords = match solve_square(&probe, &rhs) {
            Ok(c) => c,
            // Invertibility was borderline; treat like a failed probe.
            Err(Error::Singular { .. }) => {
                consecutive_fails += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        consecutive_fails = 0;

        relations.push(ColumnRelation::new(
            j_set.clone(),
            target,
            coords.column(0),
        )?);
        resolved.push(target);
        for &i in &i_set {
            for &j in &j_set {
                useful.insert((i, j));
            }
            useful.insert((i, target));
        }
    }

    let wasted = oracle.ledger.spent_structured() - useful.len();
    oracle.ledger.set_wasted(wasted);

    // Leftover budget covers the grid uniformly, skipping resolved target
    // columns: their unobserved entries are already determined by the
    // recovered relations, so observations there buy nothing.
    fill_uniform(&mut oracle, rng, |_, j| !resolved.contains(&j))?;

    let seed = rng.seed();
    let (omega, ledger) = oracle.into_parts();
    SamplingPlan::assemble(
        Strategy::Selective,
        omega,
        None,
        relations,
        ledger,
        seed,
        attempts,
    )
}

/// Default relation count when the caller does not fix one: two thirds of
/// what the block could yield. Enough that the discovered structure carries
/// real weight, while the remaining unresolved columns keep the relation web
/// anchored by ordinary observations.
pub fn default_relation_count(t: usize, k: usize) -> usize {
    (2 * t.saturating_sub(k)).div_ceil(3)
}

// --- JSON document ----------------------------------------------------------
//
// Indices are 1-based on this surface.

#[derive(Serialize, Deserialize)]
struct PlanDoc {
    format: u32,
    rows: usize,
    cols: usize,
    strategy: Strategy,
    seed: u64,
    probe_attempts: usize,
    observations: Vec<ObsDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    block: Option<BlockDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    relations: Vec<RelationDoc>,
    ledger: LedgerDoc,
}

#[derive(Serialize, Deserialize)]
struct ObsDoc {
    row: usize,
    col: usize,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct BlockDoc {
    cols: Vec<usize>,
    basis_cols: Vec<usize>,
    coords: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RelationDoc {
    basis_cols: Vec<usize>,
    target_col: usize,
    coords: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LedgerDoc {
    total_budget: usize,
    spent_structured: usize,
    spent_uniform: usize,
    wasted: usize,
}

impl From<&SamplingPlan> for PlanDoc {
    fn from(plan: &SamplingPlan) -> Self {
        let (rows, cols) = plan.omega.shape();
        Self {
            format: 1,
            rows,
            cols,
            strategy: plan.strategy,
            seed: plan.seed,
            probe_attempts: plan.probe_attempts,
            observations: plan
                .omega
                .iter()
                .map(|(i, j, v)| ObsDoc {
                    row: i + 1,
                    col: j + 1,
                    value: v,
                })
                .collect(),
            block: plan.block.as_ref().map(|b| BlockDoc {
                cols: b.cols().iter().map(|j| j + 1).collect(),
                basis_cols: b.basis_cols().iter().map(|j| j + 1).collect(),
                coords: match b.coords() {
                    Some(c) => (0..c.rows()).map(|i| c.row(i).to_vec()).collect(),
                    None => vec![],
                },
            }),
            relations: plan
                .relations
                .iter()
                .map(|r| RelationDoc {
                    basis_cols: r.basis_cols().iter().map(|j| j + 1).collect(),
                    target_col: r.target_col() + 1,
                    coords: r.coords().to_vec(),
                })
                .collect(),
            ledger: LedgerDoc {
                total_budget: plan.ledger.total_budget(),
                spent_structured: plan.ledger.spent_structured(),
                spent_uniform: plan.ledger.spent_uniform(),
                wasted: plan.ledger.wasted(),
            },
        }
    }
}

impl PlanDoc {
    fn into_plan(self) -> Result<SamplingPlan> {
        if self.format != 1 {
            return Err(Error::Parse(format!(
                "unsupported plan format {}",
                self.format
            )));
        }
        let one_based = |v: usize, what: &str| -> Result<usize> {
            v.checked_sub(1)
                .ok_or_else(|| Error::Parse(format!("{what} index 0 on a 1-based surface")))
        };
        let mut omega = ObservationSet::new(self.rows, self.cols);
        for obs in &self.observations {
            omega.insert(
                one_based(obs.row, "row")?,
                one_based(obs.col, "col")?,
                obs.value,
            )?;
        }
        let block = match self.block {
            None => None,
            Some(doc) => {
                let cols = ColumnSet::new(
                    self.cols,
                    doc.cols
                        .iter()
                        .map(|&j| one_based(j, "block col"))
                        .collect::<Result<Vec<_>>>()?,
                )?;
                let basis = doc
                    .basis_cols
                    .iter()
                    .map(|&j| one_based(j, "basis col"))
                    .collect::<Result<Vec<_>>>()?;
                let coords = if doc.coords.is_empty() {
                    None
                } else {
                    let rows = doc.coords.len();
                    let width = doc.coords[0].len();
                    let flat: Vec<f64> = doc.coords.iter().flatten().copied().collect();
                    Some(DenseMatrix::new(rows, width, flat)?)
                };
                Some(BlockConstraint::new(cols, basis, coords)?)
            }
        };
        let relations = self
            .relations
            .into_iter()
            .map(|doc| {
                let basis = doc
                    .basis_cols
                    .iter()
                    .map(|&j| one_based(j, "relation basis col"))
                    .collect::<Result<Vec<_>>>()?;
                ColumnRelation::new(basis, one_based(doc.target_col, "target col")?, doc.coords)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ledger = BudgetLedger::new(self.ledger.total_budget);
        for _ in 0..self.ledger.spent_structured {
            ledger.charge_structured()?;
        }
        for _ in 0..self.ledger.spent_uniform {
            ledger.charge_uniform()?;
        }
        ledger.set_wasted(self.ledger.wasted);
        SamplingPlan::assemble(
            self.strategy,
            omega,
            block,
            relations,
            ledger,
            self.seed,
            self.probe_attempts,
        )
    }
}
