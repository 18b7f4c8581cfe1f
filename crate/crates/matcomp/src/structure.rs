//! Column-structure side information: column sets, single-column relations,
//! and whole-block basis/coordinate constraints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Sorted set of column indices of an n-column matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSet {
    n: usize,
    members: Vec<usize>,
}

impl ColumnSet {
    /// Builds from arbitrary order; duplicates and out-of-range indices are
    /// rejected, members are stored ascending.
    pub fn new(n: usize, members: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut members: Vec<usize> = members.into_iter().collect();
        members.sort_unstable();
        if let Some(&bad) = members.iter().find(|&&j| j >= n) {
            return Err(Error::Domain(format!(
                "column index {bad} out of range for n = {n}"
            )));
        }
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("duplicate column index".into()));
        }
        Ok(Self { n, members })
    }

    /// The first `t` columns of an n-column matrix.
    pub fn first(n: usize, t: usize) -> Result<Self> {
        if t > n {
            return Err(Error::Domain(format!("width {t} exceeds n = {n}")));
        }
        Self::new(n, 0..t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.members.binary_search(&j).is_ok()
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }
}

/// One linear identity between columns: the target column equals the basis
/// columns times `coords`. Discovered by selective sampling; also the unit a
/// block constraint decomposes into.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnRelation {
    basis_cols: Vec<usize>,
    target_col: usize,
    coords: Vec<f64>,
}

impl ColumnRelation {
    pub fn new(basis_cols: Vec<usize>, target_col: usize, coords: Vec<f64>) -> Result<Self> {
        if basis_cols.is_empty() {
            return Err(Error::Domain("relation needs at least one basis column".into()));
        }
        if coords.len() != basis_cols.len() {
            return Err(Error::Dimension(format!(
                "{} coordinates for {} basis columns",
                coords.len(),
                basis_cols.len()
            )));
        }
        let mut seen = basis_cols.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("duplicate basis column in relation".into()));
        }
        if basis_cols.contains(&target_col) {
            return Err(Error::Domain(format!(
                "target column {target_col} appears in its own basis"
            )));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("non-finite coordinate {bad}")));
        }
        Ok(Self {
            basis_cols,
            target_col,
            coords,
        })
    }

    pub fn basis_cols(&self) -> &[usize] {
        &self.basis_cols
    }

    pub fn target_col(&self) -> usize {
        self.target_col
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Predicted target value on one row, given the basis values of that row.
    pub fn predict(&self, basis_values: &[f64]) -> f64 {
        debug_assert_eq!(basis_values.len(), self.coords.len());
        self.coords
            .iter()
            .zip(basis_values)
            .map(|(c, v)| c * v)
            .sum()
    }
}

/// Basis/coordinate description of a whole low-rank column block: `basis_cols`
/// index k columns inside `cols`, and `coords` (k×(t−k)) expresses every
/// non-basis column of the block in that basis, non-basis columns taken in
/// ascending order. A full-rank block (k = t) has no non-basis columns and
/// carries no coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockConstraint {
    cols: ColumnSet,
    basis_cols: Vec<usize>,
    coords: Option<DenseMatrix>,
}

impl BlockConstraint {
    pub fn new(
        cols: ColumnSet,
        mut basis_cols: Vec<usize>,
        coords: Option<DenseMatrix>,
    ) -> Result<Self> {
        basis_cols.sort_unstable();
        if basis_cols.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("duplicate basis column".into()));
        }
        if basis_cols.is_empty() {
            return Err(Error::Domain("block constraint needs a nonempty basis".into()));
        }
        if let Some(&bad) = basis_cols.iter().find(|&&j| !cols.contains(j)) {
            return Err(Error::Domain(format!(
                "basis column {bad} is not part of the block"
            )));
        }
        let k = basis_cols.len();
        let non_basis = cols.len() - k;
        match &coords {
            Some(c) if c.rows() == k && c.cols() == non_basis => {}
            None if non_basis == 0 => {}
            Some(c) => {
                return Err(Error::Dimension(format!(
                    "coordinate matrix is {}x{}, expected {k}x{non_basis}",
                    c.rows(),
                    c.cols()
                )))
            }
            None => {
                return Err(Error::Dimension(format!(
                    "missing {k}x{non_basis} coordinate matrix"
                )))
            }
        }
        Ok(Self {
            cols,
            basis_cols,
            coords,
        })
    }

    pub fn cols(&self) -> &ColumnSet {
        &self.cols
    }

    pub fn basis_cols(&self) -> &[usize] {
        &self.basis_cols
    }

    pub fn rank(&self) -> usize {
        self.basis_cols.len()
    }

    /// Non-basis columns of the block, ascending.
    pub fn non_basis_cols(&self) -> Vec<usize> {
        self.cols
            .iter()
            .filter(|j| !self.basis_cols.contains(j))
            .collect()
    }

    pub fn coords(&self) -> Option<&DenseMatrix> {
        self.coords.as_ref()
    }

    /// Decomposes the block equation into one relation per non-basis column.
    pub fn to_relations(&self) -> Vec<ColumnRelation> {
        let Some(coords) = &self.coords else {
            return vec![];
        };
        self.non_basis_cols()
            .iter()
            .enumerate()
            .map(|(pos, &target)| {
                let col = (0..self.rank()).map(|r| coords.get(r, pos)).collect();
                ColumnRelation::new(self.basis_cols.clone(), target, col)
                    .expect("block constraint invariants imply valid relations")
            })
            .collect()
    }
}

/// Observations needed to recover a rank-k block of width t over m rows by
/// probing a k×k invertible submatrix, its rows, and its columns.
pub fn min_optimal_observations(k: usize, t: usize, m: usize) -> Result<usize> {
    if k == 0 || k > t.min(m) {
        return Err(Error::Domain(format!(
            "rank k = {k} must satisfy 1 <= k <= min(t = {t}, m = {m})"
        )));
    }
    Ok(k * (t + m - k))
}
