//! Observation sets and budget accounting.
//!
//! An [`ObservationSet`] is the only channel through which solvers see the
//! hidden matrix: an index set with one value per index. Iteration order is
//! insertion order, so identical construction histories iterate identically.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Set of revealed entries of an m×n matrix, with their values.
#[derive(Clone, Debug, Default)]
pub struct ObservationSet {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
    index: HashMap<(usize, usize), usize>,
}

impl ObservationSet {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Records `(i, j) -> value`. Returns `Ok(true)` for a fresh index,
    /// `Ok(false)` for a repeat with the same value; a repeat with a
    /// conflicting value is an error since observations are deterministic.
    pub fn insert(&mut self, i: usize, j: usize, value: f64) -> Result<bool> {
        if i >= self.rows || j >= self.cols {
            return Err(Error::Domain(format!(
                "index ({i}, {j}) out of range for {}x{} observation set",
                self.rows, self.cols
            )));
        }
        if !value.is_finite() {
            return Err(Error::Domain(format!(
                "non-finite observation {value} at ({i}, {j})"
            )));
        }
        match self.index.get(&(i, j)) {
            Some(&pos) => {
                let existing = self.entries[pos].2;
                if existing == value {
                    Ok(false)
                } else {
                    Err(Error::Inconsistent(format!(
                        "entry ({i}, {j}) observed twice with different values: {existing} vs {value}"
                    )))
                }
            }
            None => {
                self.index.insert((i, j), self.entries.len());
                self.entries.push((i, j, value));
                Ok(true)
            }
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.index.contains_key(&(i, j))
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.index.get(&(i, j)).map(|&pos| self.entries[pos].2)
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    /// Every entry of the full grid, taken from `m`.
    pub fn full(m: &DenseMatrix) -> Self {
        let mut set = Self::new(m.rows(), m.cols());
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                set.insert(i, j, m.get(i, j)).expect("fresh index");
            }
        }
        set
    }

    /// Restriction to the listed columns, with column indices remapped to
    /// 0..keep.len() in the order given. Insertion order is preserved.
    pub fn restrict_to_columns(&self, keep: &[usize]) -> Self {
        let mut remap = HashMap::new();
        for (new, &old) in keep.iter().enumerate() {
            remap.insert(old, new);
        }
        let mut out = Self::new(self.rows, keep.len());
        for (i, j, v) in self.iter() {
            if let Some(&nj) = remap.get(&j) {
                out.insert(i, nj, v).expect("fresh index");
            }
        }
        out
    }

    /// True when every entry of column `j` is observed.
    pub fn column_fully_observed(&self, j: usize) -> bool {
        (0..self.rows).all(|i| self.contains(i, j))
    }
}

/// Masks `x` to the observed index set: entries in the set keep `x`'s value,
/// everything else is zero.
pub fn project_observed(x: &DenseMatrix, omega: &ObservationSet) -> Result<DenseMatrix> {
    if x.shape() != omega.shape() {
        return Err(Error::Dimension(format!(
            "matrix is {}x{} but observation set is {}x{}",
            x.rows(),
            x.cols(),
            omega.shape().0,
            omega.shape().1
        )));
    }
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    for (i, j, _) in omega.iter() {
        out.set(i, j, x.get(i, j));
    }
    Ok(out)
}

/// Observation budget with exactly-once accounting.
///
/// Fresh reveals are charged to the structured or uniform counter; re-reveals
/// cost nothing. `wasted` counts structured observations that probing spent on
/// singular submatrices and that the recovered structure never used.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    total_budget: usize,
    spent_structured: usize,
    spent_uniform: usize,
    wasted: usize,
}

impl BudgetLedger {
    pub fn new(total_budget: usize) -> Self {
        Self {
            total_budget,
            ..Self::default()
        }
    }

    pub fn total_budget(&self) -> usize {
        self.total_budget
    }

    pub fn spent_structured(&self) -> usize {
        self.spent_structured
    }

    pub fn spent_uniform(&self) -> usize {
        self.spent_uniform
    }

    pub fn wasted(&self) -> usize {
        self.wasted
    }

    pub fn spent(&self) -> usize {
        self.spent_structured + self.spent_uniform
    }

    pub fn remaining(&self) -> usize {
        self.total_budget - self.spent()
    }

    pub(crate) fn charge_structured(&mut self) -> Result<()> {
        if self.remaining() == 0 {
            return Err(Error::BudgetExhausted {
                ledger: self.clone(),
            });
        }
        self.spent_structured += 1;
        Ok(())
    }

    pub(crate) fn charge_uniform(&mut self) -> Result<()> {
        if self.remaining() == 0 {
            return Err(Error::BudgetExhausted {
                ledger: self.clone(),
            });
        }
        self.spent_uniform += 1;
        Ok(())
    }

    pub(crate) fn set_wasted(&mut self, wasted: usize) {
        debug_assert!(wasted <= self.spent_structured);
        self.wasted = wasted;
    }
}

/// Budget for an observation rate: ⌊p·m·n⌋.
pub fn budget_for_rate(p: f64, rows: usize, cols: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "observation rate must lie in [0, 1], got {p}"
        )));
    }
    Ok((p * (rows * cols) as f64).floor() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_matrix() -> DenseMatrix {
        DenseMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn projection_masks_by_definition() {
        let x = sample_matrix();
        let mut omega = ObservationSet::new(2, 2);
        omega.insert(0, 1, 2.0).unwrap();
        let y = project_observed(&x, &omega).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn projection_full_and_empty() {
        let x = sample_matrix();
        let full = ObservationSet::full(&x);
        assert_eq!(project_observed(&x, &full).unwrap(), x);
        let empty = ObservationSet::new(2, 2);
        assert_eq!(
            project_observed(&x, &empty).unwrap().as_slice(),
            &[0.0; 4]
        );
    }

    #[test]
    fn projection_rejects_shape_mismatch() {
        let x = sample_matrix();
        let omega = ObservationSet::new(3, 2);
        assert!(project_observed(&x, &omega).is_err());
    }

    #[test]
    fn duplicate_insert_with_same_value_is_free() {
        let mut omega = ObservationSet::new(2, 2);
        assert!(omega.insert(0, 0, 1.5).unwrap());
        assert!(!omega.insert(0, 0, 1.5).unwrap());
        assert!(omega.insert(0, 0, 2.5).is_err());
        assert_eq!(omega.len(), 1);
    }

    #[test]
    fn ledger_counts_each_reveal_once() {
        let mut ledger = BudgetLedger::new(2);
        ledger.charge_structured().unwrap();
        ledger.charge_uniform().unwrap();
        assert_eq!(ledger.spent(), 2);
        assert_eq!(ledger.remaining(), 0);
        assert!(matches!(
            ledger.charge_uniform(),
            Err(Error::BudgetExhausted { .. })
        ));
    }

    #[test]
    fn rate_budget_floors() {
        assert_eq!(budget_for_rate(0.3, 50, 50).unwrap(), 750);
        assert_eq!(budget_for_rate(1.0, 7, 3).unwrap(), 21);
        assert_eq!(budget_for_rate(0.0, 7, 3).unwrap(), 0);
        assert!(budget_for_rate(1.5, 2, 2).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        /// Shape plus an arbitrary subset of indices and two value grids.
        fn mask_and_values() -> impl Strategy<Value = (usize, usize, Vec<bool>, Vec<f64>, Vec<f64>)>
        {
            (1usize..8, 1usize..8).prop_flat_map(|(m, n)| {
                (
                    Just(m),
                    Just(n),
                    prop::collection::vec(any::<bool>(), m * n),
                    prop::collection::vec(-100.0f64..100.0, m * n),
                    prop::collection::vec(-100.0f64..100.0, m * n),
                )
            })
        }

        proptest! {
            #[test]
            fn projection_is_idempotent_and_linear(
                (m, n, mask, xs, ys) in mask_and_values(),
                a in -10.0f64..10.0,
                b in -10.0f64..10.0,
            ) {
                let x = DenseMatrix::new(m, n, xs).unwrap();
                let y = DenseMatrix::new(m, n, ys).unwrap();
                let mut omega = ObservationSet::new(m, n);
                for i in 0..m {
                    for j in 0..n {
                        if mask[i * n + j] {
                            omega.insert(i, j, x.get(i, j)).unwrap();
                        }
                    }
                }
                let px = project_observed(&x, &omega).unwrap();
                // Idempotence.
                let ppx = project_observed(&px, &omega).unwrap();
                prop_assert_eq!(&ppx, &px);
                // Linearity to 1e-12 relative.
                let combo = DenseMatrix::from_fn(m, n, |i, j| a * x.get(i, j) + b * y.get(i, j));
                let lhs = project_observed(&combo, &omega).unwrap();
                let py = project_observed(&y, &omega).unwrap();
                let rhs = DenseMatrix::from_fn(m, n, |i, j| a * px.get(i, j) + b * py.get(i, j));
                let scale = rhs.max_abs().max(1.0);
                prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * scale);
            }

            #[test]
            fn repeated_reveals_never_move_the_ledger(
                seed in any::<u64>(),
                repeats in 1usize..5,
            ) {
                let hidden = DenseMatrix::from_fn(4, 5, |i, j| (i * 5 + j) as f64 + seed as f64);
                let mut oracle = crate::sampling::MatrixOracle::new(&hidden, 20);
                let mut order: Vec<(usize, usize)> = (0..4)
                    .flat_map(|i| (0..5).map(move |j| (i, j)))
                    .collect();
                // Seed-driven shuffle of first reveals.
                order.rotate_left((seed % 20) as usize);
                for &(i, j) in order.iter().take(10) {
                    oracle
                        .reveal(i, j, crate::sampling::Phase::Uniform)
                        .unwrap();
                }
                let snapshot = oracle.ledger().clone();
                for _ in 0..repeats {
                    for &(i, j) in order.iter().take(10) {
                        oracle
                            .reveal(i, j, crate::sampling::Phase::Structured)
                            .unwrap();
                    }
                }
                prop_assert_eq!(oracle.ledger(), &snapshot);
                prop_assert_eq!(oracle.observed().len(), 10);
            }
        }
    }
}
