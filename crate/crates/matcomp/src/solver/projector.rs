//! Exact projection onto the affine constraint set.
//!
//! Every constraint acts within a single row: observed entries pin
//! coordinates, and each column relation `x[target] = Σ coords·x[basis]` is a
//! homogeneous equation over one row. Rows therefore project independently,
//! and each row's factorization is computed once and reused for every
//! iteration. Results do not depend on traversal order, so any internal
//! parallelism over rows would be bitwise equivalent; at this scale a serial
//! sweep is fastest.

use crate::error::Result;
use crate::linalg::svd;
use crate::matrix::DenseMatrix;
use crate::observe::ObservationSet;
use crate::structure::ColumnRelation;

/// Relative cutoff below which singular values are treated as zero when
/// forming the pseudoinverse. Redundant (duplicated) relations make the
/// per-row system rank deficient on purpose; the pseudoinverse absorbs them.
const PINV_RTOL: f64 = 1e-12;

pub struct AffineRowProjector {
    cols: usize,
    /// Stacked relation rows (L×n): +1 at the target, -coords at the basis.
    relation_rows: Option<DenseMatrix>,
    plans: Vec<RowPlan>,
}

struct RowPlan {
    /// Observed (column, value), ascending by column.
    pinned: Vec<(usize, f64)>,
    /// Unobserved columns, ascending.
    free_cols: Vec<usize>,
    system: Option<RowSystem>,
}

/// Relation system restricted to a row's free columns: `b` (L×F), its
/// pseudoinverse `pinv` (F×L), and the offset the pinned columns contribute.
struct RowSystem {
    b: DenseMatrix,
    pinv: DenseMatrix,
    rhs: Vec<f64>,
}

impl AffineRowProjector {
    pub fn build(
        rows: usize,
        cols: usize,
        omega: &ObservationSet,
        relations: &[ColumnRelation],
    ) -> Result<Self> {
        assert_eq!(omega.shape(), (rows, cols));
        let relation_rows = if relations.is_empty() {
            None
        } else {
            let mut a = DenseMatrix::zeros(relations.len(), cols);
            for (r, rel) in relations.iter().enumerate() {
                a.set(r, rel.target_col(), 1.0);
                for (q, &j) in rel.basis_cols().iter().enumerate() {
                    a.set(r, j, -rel.coords()[q]);
                }
            }
            Some(a)
        };

        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
        for (i, j, v) in omega.iter() {
            per_row[i].push((j, v));
        }

        let mut plans = Vec::with_capacity(rows);
        for pinned in &mut per_row {
            pinned.sort_unstable_by_key(|&(j, _)| j);
            let observed_mask: Vec<bool> = {
                let mut mask = vec![false; cols];
                for &(j, _) in pinned.iter() {
                    mask[j] = true;
                }
                mask
            };
            let free_cols: Vec<usize> = (0..cols).filter(|&j| !observed_mask[j]).collect();

            let system = match (&relation_rows, free_cols.is_empty()) {
                (Some(a), false) => {
                    let l = a.rows();
                    let mut b = DenseMatrix::zeros(l, free_cols.len());
                    for r in 0..l {
                        for (f, &j) in free_cols.iter().enumerate() {
                            b.set(r, f, a.get(r, j));
                        }
                    }
                    let mut rhs = vec![0.0; l];
                    for (r, slot) in rhs.iter_mut().enumerate() {
                        let mut c = 0.0;
                        for &(j, v) in pinned.iter() {
                            c -= a.get(r, j) * v;
                        }
                        *slot = c;
                    }
                    let pinv = pseudoinverse(&b)?;
                    Some(RowSystem { b, pinv, rhs })
                }
                _ => None,
            };
            plans.push(RowPlan {
                pinned: std::mem::take(pinned),
                free_cols,
                system,
            });
        }
        Ok(Self {
            cols,
            relation_rows,
            plans,
        })
    }

    /// Projects `x` onto the constraint set in place.
    pub fn project(&self, x: &mut DenseMatrix) {
        assert_eq!(x.cols(), self.cols);
        assert_eq!(x.rows(), self.plans.len());
        for (i, plan) in self.plans.iter().enumerate() {
            self.project_row(plan, x.row_mut(i));
        }
    }

    fn project_row(&self, plan: &RowPlan, row: &mut [f64]) {
        for &(j, v) in &plan.pinned {
            row[j] = v;
        }
        let Some(sys) = &plan.system else {
            return;
        };
        let nf = plan.free_cols.len();
        let l = sys.b.rows();
        // residual = B·x_free - rhs
        let mut residual = vec![0.0; l];
        for (r, slot) in residual.iter_mut().enumerate() {
            let mut acc = -sys.rhs[r];
            let brow = sys.b.row(r);
            for (f, &j) in plan.free_cols.iter().enumerate() {
                acc += brow[f] * row[j];
            }
            *slot = acc;
        }
        // x_free -= pinv · residual
        for f in 0..nf {
            let grow = sys.pinv.row(f);
            let mut corr = 0.0;
            for r in 0..l {
                corr += grow[r] * residual[r];
            }
            row[plan.free_cols[f]] -= corr;
        }
    }

    /// Largest constraint violation of `x`: observed-entry mismatch and
    /// relation-equation residual, whichever is worse.
    pub fn max_violation(&self, x: &DenseMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, plan) in self.plans.iter().enumerate() {
            for &(j, v) in &plan.pinned {
                worst = worst.max((x.get(i, j) - v).abs());
            }
        }
        if let Some(a) = &self.relation_rows {
            for r in 0..a.rows() {
                let arow = a.row(r);
                for i in 0..x.rows() {
                    let xrow = x.row(i);
                    let resid: f64 = arow.iter().zip(xrow).map(|(c, v)| c * v).sum();
                    worst = worst.max(resid.abs());
                }
            }
        }
        worst
    }
}

/// Moore–Penrose pseudoinverse via the SVD, dropping σ ≤ PINV_RTOL·σ₁.
fn pseudoinverse(b: &DenseMatrix) -> Result<DenseMatrix> {
    let f = svd(b)?;
    let top = f.singular_values().first().copied().unwrap_or(0.0);
    let inv: Vec<f64> = f
        .singular_values()
        .iter()
        .map(|&s| if s > PINV_RTOL * top && s > 0.0 { 1.0 / s } else { 0.0 })
        .collect();
    // pinv = V · diag(inv) · Uᵀ
    let (rows, cols) = (b.cols(), b.rows());
    let mut out = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for (q, &w) in inv.iter().enumerate() {
                if w != 0.0 {
                    acc += f.v().get(i, q) * w * f.u().get(j, q);
                }
            }
            out.set(i, j, acc);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A consistent 1-row setting: ground truth x*, some entries observed,
    /// relations that x* satisfies by construction.
    fn one_row_setup(
        rng: &mut ChaCha8Rng,
        n: usize,
        relations: &[ColumnRelation],
    ) -> (Vec<f64>, ObservationSet) {
        // Draw free values, then enforce relation targets.
        let mut truth: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        for rel in relations {
            let basis: Vec<f64> = rel.basis_cols().iter().map(|&j| truth[j]).collect();
            truth[rel.target_col()] = rel.predict(&basis);
        }
        let mut omega = ObservationSet::new(1, n);
        for j in 0..n {
            // Observe non-target entries with probability 1/2.
            if relations.iter().all(|r| r.target_col() != j) && rng.random_bool(0.5) {
                omega.insert(0, j, truth[j]).unwrap();
            }
        }
        (truth, omega)
    }

    fn demo_relations() -> Vec<ColumnRelation> {
        vec![
            ColumnRelation::new(vec![0, 1], 2, vec![1.0, -2.0]).unwrap(),
            ColumnRelation::new(vec![1, 3], 5, vec![0.5, 3.0]).unwrap(),
        ]
    }

    #[test]
    fn projection_is_idempotent_and_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let relations = demo_relations();
            let (_, omega) = one_row_setup(&mut rng, 8, &relations);
            let proj = AffineRowProjector::build(1, 8, &omega, &relations).unwrap();
            let mut x = DenseMatrix::from_fn(1, 8, |_, _| rng.random_range(-3.0..3.0));
            proj.project(&mut x);
            assert!(proj.max_violation(&x) <= 1e-10);
            let once = x.clone();
            proj.project(&mut x);
            assert!(x.max_abs_diff(&once) <= 1e-10);
        }
    }

    #[test]
    fn projection_satisfies_obtuse_angle_optimality() {
        // <v - P(v), y - P(v)> <= 0 (to tolerance) for any feasible y.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let relations = demo_relations();
            let (_, omega) = one_row_setup(&mut rng, 8, &relations);
            let proj = AffineRowProjector::build(1, 8, &omega, &relations).unwrap();
            let v = DenseMatrix::from_fn(1, 8, |_, _| rng.random_range(-3.0..3.0));
            let mut pv = v.clone();
            proj.project(&mut pv);
            let mut y = DenseMatrix::from_fn(1, 8, |_, _| rng.random_range(-3.0..3.0));
            proj.project(&mut y);
            let inner: f64 = (0..8)
                .map(|j| (v.get(0, j) - pv.get(0, j)) * (y.get(0, j) - pv.get(0, j)))
                .sum();
            assert!(inner <= 1e-10, "angle condition violated: {inner}");
        }
    }

    #[test]
    fn redundant_relations_do_not_break_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut relations = demo_relations();
        relations.push(relations[0].clone()); // exact duplicate
        let (_, omega) = one_row_setup(&mut rng, 8, &relations);
        let proj = AffineRowProjector::build(1, 8, &omega, &relations).unwrap();
        let mut x = DenseMatrix::from_fn(1, 8, |_, _| rng.random_range(-3.0..3.0));
        proj.project(&mut x);
        assert!(proj.max_violation(&x) <= 1e-10);
    }

    #[test]
    fn fully_observed_row_projects_to_observed_values() {
        let truth = DenseMatrix::new(1, 3, vec![1.0, 2.0, 4.0]).unwrap();
        let omega = ObservationSet::full(&truth);
        let proj = AffineRowProjector::build(1, 3, &omega, &[]).unwrap();
        let mut x = DenseMatrix::zeros(1, 3);
        proj.project(&mut x);
        assert_eq!(x, truth);
    }

    #[test]
    fn relation_with_all_columns_observed_degenerates_cleanly() {
        // x2 = x0 + x1 with all three observed consistently: the restricted
        // system has a zero row, which the pseudoinverse must absorb while
        // the remaining free coordinates stay untouched by it.
        let rel = ColumnRelation::new(vec![0, 1], 2, vec![1.0, 1.0]).unwrap();
        let mut omega = ObservationSet::new(1, 5);
        omega.insert(0, 0, 1.0).unwrap();
        omega.insert(0, 1, 2.0).unwrap();
        omega.insert(0, 2, 3.0).unwrap();
        let proj = AffineRowProjector::build(1, 5, &omega, &[rel]).unwrap();
        let mut x = DenseMatrix::new(1, 5, vec![9.0, 9.0, 9.0, -1.5, 2.5]).unwrap();
        proj.project(&mut x);
        assert_eq!(x.as_slice()[..3], [1.0, 2.0, 3.0]);
        assert_eq!(x.as_slice()[3..], [-1.5, 2.5], "free entries must not move");
        assert!(proj.max_violation(&x) <= 1e-12);
    }
}
