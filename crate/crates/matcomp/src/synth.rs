//! Synthetic low-rank instances: a rank-k block in the first t columns glued
//! to an independent low-rank remainder.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::singular_values;
use crate::matrix::DenseMatrix;
use crate::rng::{RngStream, STREAM_INSTANCE};
use crate::structure::ColumnSet;

/// Entry distribution for the random factors.
///
/// `Integer` draws factor entries uniformly from {-magnitude, ..., magnitude},
/// which makes singular probe submatrices likely and exercises the
/// wasted-observation path; `Gaussian` makes them almost surely invertible.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryDistribution {
    #[default]
    Gaussian,
    Integer { magnitude: u32 },
}

/// Parameters of one synthetic instance. The structured block is always the
/// first `t` columns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub m: usize,
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub r_rest: usize,
    pub seed: u64,
    #[serde(default)]
    pub distribution: EntryDistribution,
}

impl InstanceSpec {
    pub fn new(m: usize, n: usize, t: usize, k: usize, r_rest: usize, seed: u64) -> Self {
        Self {
            m,
            n,
            t,
            k,
            r_rest,
            seed,
            distribution: EntryDistribution::Gaussian,
        }
    }

    pub fn with_distribution(mut self, distribution: EntryDistribution) -> Self {
        self.distribution = distribution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Domain("matrix shape must be positive".into()));
        }
        if self.t > self.n {
            return Err(Error::Domain(format!(
                "block width t = {} exceeds n = {}",
                self.t, self.n
            )));
        }
        if self.k == 0 || self.k > self.m.min(self.t) {
            return Err(Error::Domain(format!(
                "block rank k = {} must satisfy 1 <= k <= min(m = {}, t = {})",
                self.k, self.m, self.t
            )));
        }
        if self.t < self.n && (self.r_rest == 0 || self.r_rest > self.m.min(self.n - self.t)) {
            return Err(Error::Domain(format!(
                "remainder rank r_rest = {} must satisfy 1 <= r_rest <= min(m = {}, n - t = {})",
                self.r_rest,
                self.m,
                self.n - self.t
            )));
        }
        Ok(())
    }

    /// Generic rank of the whole matrix under independent factors.
    pub fn full_rank(&self) -> usize {
        let rest = if self.t < self.n { self.r_rest } else { 0 };
        (self.k + rest).min(self.m).min(self.n)
    }
}

fn draw_factor(
    rng: &mut RngStream,
    rows: usize,
    cols: usize,
    distribution: EntryDistribution,
) -> DenseMatrix {
    match distribution {
        EntryDistribution::Gaussian => DenseMatrix::from_fn(rows, cols, |_, _| {
            rng.sample(rand_distr::StandardNormal)
        }),
        EntryDistribution::Integer { magnitude } => {
            let q = magnitude as i64;
            DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-q..=q) as f64)
        }
    }
}

/// Numerical rank with the certification thresholds used throughout: rank r
/// means σ_r/σ₁ > 1e-10 ≥ σ_{r+1}/σ₁.
fn numerical_rank(x: &DenseMatrix) -> Result<usize> {
    let sv = singular_values(x)?;
    let top = sv[0];
    if top <= 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s / top > 1e-10).count())
}

/// Generates the instance matrix and its structured column set.
///
/// The block is G₁·C₁ (m×k times k×t) and the remainder G₂·C₂, all factors
/// drawn independently from the spec's distribution. The block's numerical
/// rank is certified to equal k; integer draws retry until it does.
pub fn generate(spec: &InstanceSpec) -> Result<(DenseMatrix, ColumnSet)> {
    spec.validate()?;
    let mut rng = RngStream::with_stream(spec.seed, STREAM_INSTANCE);
    let (m, n, t, k) = (spec.m, spec.n, spec.t, spec.k);

    // Integer factors collide often at small magnitude; retry keeps the
    // rank contract while preserving determinism (the stream just advances).
    let max_attempts = match spec.distribution {
        EntryDistribution::Gaussian => 1,
        EntryDistribution::Integer { .. } => 200,
    };

    let mut block = None;
    for _ in 0..max_attempts {
        let g1 = draw_factor(&mut rng, m, k, spec.distribution);
        let c1 = draw_factor(&mut rng, k, t, spec.distribution);
        let candidate = g1.matmul(&c1)?;
        if numerical_rank(&candidate)? == k {
            block = Some(candidate);
            break;
        }
    }
    let block = block.ok_or_else(|| {
        Error::Numeric(format!(
            "could not draw a rank-{k} block after {max_attempts} attempts"
        ))
    })?;

    let mut matrix = DenseMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..t {
            matrix.set(i, j, block.get(i, j));
        }
    }
    if t < n {
        let g2 = draw_factor(&mut rng, m, spec.r_rest, spec.distribution);
        let c2 = draw_factor(&mut rng, spec.r_rest, n - t, spec.distribution);
        let rest = g2.matmul(&c2)?;
        for i in 0..m {
            for j in 0..(n - t) {
                matrix.set(i, t + j, rest.get(i, j));
            }
        }
    }

    let cols = ColumnSet::first(n, t)?;
    Ok((matrix, cols))
}
