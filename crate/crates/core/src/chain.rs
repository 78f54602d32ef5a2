//! Exact finite Markov chains: a row-stochastic matrix, its stationary
//! measure, and the algebra the comparison arguments need (composition,
//! mixtures, laziness, adjoints, reversiblization).
//!
//! Chains built from a spin system carry their [`StateSpace`] so rows can be
//! decoded back to configurations; synthetic chains (random reversible test
//! chains, tensor products) may omit it.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::measure::{ExactMeasure, StateSpace};
use crate::model::Spin;
use crate::{Error, Result, Scalar};

/// Largest state count for which dense transition matrices are materialized.
pub const MAX_DENSE_STATES: usize = 4096;

/// A finite Markov chain held exactly: transition matrix plus the measure it
/// is claimed (and verified) to leave invariant.
#[derive(Debug, Clone)]
pub struct ExactChain<S: Scalar> {
    space: Option<Arc<StateSpace>>,
    matrix: DMatrix<S>,
    stationary: DVector<S>,
}

fn loose_tol<S: Scalar>() -> S {
    S::default_epsilon().sqrt()
}

impl<S: Scalar> ExactChain<S> {
    /// Wraps a matrix after verifying squareness, nonnegativity,
    /// row-stochasticity, and invariance of `stationary`.
    pub fn new(
        space: Option<Arc<StateSpace>>,
        matrix: DMatrix<S>,
        stationary: DVector<S>,
    ) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::InvalidInput(
                "transition matrix must be square".into(),
            ));
        }
        if n == 0 {
            return Err(Error::InvalidInput("empty state space".into()));
        }
        if n > MAX_DENSE_STATES {
            return Err(Error::Capacity(format!(
                "{n} states exceeds the dense-matrix guard of {MAX_DENSE_STATES}"
            )));
        }
        if let Some(space) = &space {
            if space.len() != n {
                return Err(Error::InvalidInput(format!(
                    "state space has {} states but the matrix has {n} rows",
                    space.len()
                )));
            }
        }
        if stationary.len() != n {
            return Err(Error::InvalidInput(format!(
                "stationary vector has {} entries for {n} states",
                stationary.len()
            )));
        }
        let tol = loose_tol::<S>();
        let mass: S = stationary.iter().copied().sum();
        if (mass - S::one()).abs() > tol || stationary.iter().any(|&p| p < -tol) {
            return Err(Error::InvalidInput(
                "stationary vector is not a probability distribution".into(),
            ));
        }
        let chain = ExactChain {
            space,
            matrix,
            stationary,
        };
        if chain.min_entry() < -tol {
            return Err(Error::InvalidInput(
                "transition matrix has a negative entry".into(),
            ));
        }
        if chain.row_sum_residual() > tol {
            return Err(Error::InvalidInput(format!(
                "rows do not sum to 1 (residual {:e})",
                chain.row_sum_residual()
            )));
        }
        if chain.stationarity_residual() > tol {
            return Err(Error::InvalidInput(format!(
                "claimed stationary measure is not invariant (residual {:e})",
                chain.stationarity_residual()
            )));
        }
        Ok(chain)
    }

    /// The identity chain on the support of `mu`.
    pub fn identity_for(mu: &ExactMeasure<S>) -> Result<Self> {
        let n = mu.space().len();
        ExactChain::new(
            Some(mu.space().clone()),
            DMatrix::identity(n, n),
            DVector::from_column_slice(mu.probs()),
        )
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn space(&self) -> Option<&Arc<StateSpace>> {
        self.space.as_ref()
    }

    pub fn matrix(&self) -> &DMatrix<S> {
        &self.matrix
    }

    pub fn stationary(&self) -> &DVector<S> {
        &self.stationary
    }

    pub fn transition(&self, from: usize, to: usize) -> S {
        self.matrix[(from, to)]
    }

    fn compatible(&self, other: &Self) -> Result<()> {
        if self.n() != other.n() {
            return Err(Error::InvalidInput(
                "chains live on state spaces of different sizes".into(),
            ));
        }
        if let (Some(a), Some(b)) = (&self.space, &other.space) {
            if !a.same_as(b) {
                return Err(Error::InvalidInput(
                    "chains live on different state spaces".into(),
                ));
            }
        }
        let tol = loose_tol::<S>();
        let drift = self
            .stationary
            .iter()
            .zip(other.stationary.iter())
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), |m, d| if d > m { d } else { m });
        if drift > tol {
            return Err(Error::InvalidInput(format!(
                "chains disagree on the stationary measure (drift {drift:e})"
            )));
        }
        Ok(())
    }

    fn carry_space(&self, other: &Self) -> Option<Arc<StateSpace>> {
        self.space.clone().or_else(|| other.space.clone())
    }

    /// `self` applied first, then `other`: the matrix product `P·Q` in the
    /// row-vector convention.
    pub fn then(&self, other: &Self) -> Result<Self> {
        self.compatible(other)?;
        ExactChain::new(
            self.carry_space(other),
            &self.matrix * &other.matrix,
            self.stationary.clone(),
        )
    }

    /// Convex combination of chains on one state space.
    pub fn mixture(parts: &[(S, &Self)]) -> Result<Self> {
        let Some(((w0, first), rest)) = parts.split_first() else {
            return Err(Error::InvalidInput("mixture of no chains".into()));
        };
        let tol = loose_tol::<S>();
        let total: S = parts.iter().map(|&(w, _)| w).sum();
        if (total - S::one()).abs() > tol || parts.iter().any(|&(w, _)| w < S::zero()) {
            return Err(Error::InvalidInput(
                "mixture weights must be nonnegative and sum to 1".into(),
            ));
        }
        let mut matrix = first.matrix.clone() * *w0;
        let mut space = first.space.clone();
        for (w, part) in rest {
            first.compatible(part)?;
            matrix += &part.matrix * *w;
            space = space.or_else(|| part.space.clone());
        }
        ExactChain::new(space, matrix, first.stationary.clone())
    }

    /// `hold·I + (1−hold)·P`.
    pub fn lazy(&self, hold: S) -> Result<Self> {
        if hold < S::zero() || hold >= S::one() {
            return Err(Error::InvalidInput(
                "hold probability must lie in [0, 1)".into(),
            ));
        }
        let n = self.n();
        let matrix = DMatrix::identity(n, n) * hold + &self.matrix * (S::one() - hold);
        ExactChain::new(self.space.clone(), matrix, self.stationary.clone())
    }

    /// The adjoint in L2(μ): `P*(x,y) = μ(y)P(y,x)/μ(x)`.
    pub fn adjoint(&self) -> Result<Self> {
        let n = self.n();
        if self.stationary.iter().any(|&p| !(p > S::zero())) {
            return Err(Error::DegenerateMeasure(
                "adjoint needs a strictly positive stationary measure".into(),
            ));
        }
        let mut matrix = DMatrix::zeros(n, n);
        for x in 0..n {
            for y in 0..n {
                matrix[(x, y)] = self.stationary[y] * self.matrix[(y, x)] / self.stationary[x];
            }
        }
        ExactChain::new(self.space.clone(), matrix, self.stationary.clone())
    }

    /// The multiplicative reversiblization `P·P*`.
    pub fn reversiblization(&self) -> Result<Self> {
        self.then(&self.adjoint()?)
    }

    /// Largest deviation of a row sum from 1.
    pub fn row_sum_residual(&self) -> S {
        let mut worst = S::zero();
        for x in 0..self.n() {
            let d = (self.matrix.row(x).iter().copied().sum::<S>() - S::one()).abs();
            if d > worst {
                worst = d;
            }
        }
        worst
    }

    /// Largest entry of |μᵀP − μᵀ|.
    pub fn stationarity_residual(&self) -> S {
        let image = self.matrix.tr_mul(&self.stationary);
        image
            .iter()
            .zip(self.stationary.iter())
            .map(|(&a, &b)| (a - b).abs())
            .fold(S::zero(), |m, d| if d > m { d } else { m })
    }

    /// Largest detailed-balance violation `|μ(x)P(x,y) − μ(y)P(y,x)|`.
    pub fn reversibility_residual(&self) -> S {
        let n = self.n();
        let mut worst = S::zero();
        for x in 0..n {
            for y in (x + 1)..n {
                let d = (self.stationary[x] * self.matrix[(x, y)]
                    - self.stationary[y] * self.matrix[(y, x)])
                .abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    pub fn is_reversible(&self, tol: S) -> bool {
        self.reversibility_residual() <= tol
    }

    pub fn min_entry(&self) -> S {
        self.matrix
            .iter()
            .copied()
            .fold(S::one(), |m, v| if v < m { v } else { m })
    }
}

/// The heat-bath matrix that resamples the coordinates listed in `region`
/// from `probs` conditioned on the remaining coordinates.
///
/// `space` enumerates joint configurations, `probs` is a positive measure on
/// it, and `region` lists coordinate positions (indices into the space's
/// site list). Rows are grouped by the off-region restriction; within a
/// group the row is the renormalized measure.
pub fn conditional_resample_matrix<S: Scalar>(
    space: &StateSpace,
    probs: &[S],
    region: &[usize],
) -> Result<DMatrix<S>> {
    let n_states = space.len();
    let n_sites = space.vertices();
    if probs.len() != n_states {
        return Err(Error::InvalidInput(
            "measure length does not match the state space".into(),
        ));
    }
    let mut region = region.to_vec();
    region.sort_unstable();
    region.dedup();
    if region.last().is_some_and(|&v| v >= n_sites) {
        return Err(Error::InvalidInput(
            "resample region names a coordinate outside the space".into(),
        ));
    }
    if n_states > MAX_DENSE_STATES {
        return Err(Error::Capacity(format!(
            "{n_states} states exceeds the dense-matrix guard of {MAX_DENSE_STATES}"
        )));
    }
    let in_region: Vec<bool> = {
        let mut mask = vec![false; n_sites];
        for &v in &region {
            mask[v] = true;
        }
        mask
    };

    let mut key_buf: Vec<Spin> = Vec::with_capacity(n_sites - region.len());
    let mut bucket_of = vec![0usize; n_states];
    let mut buckets: Vec<Vec<usize>> = Vec::new();
    let mut lookup: HashMap<Vec<Spin>, usize> = HashMap::new();
    let mut config = vec![0 as Spin; n_sites];
    for rank in 0..n_states {
        space.write_config(rank, &mut config);
        key_buf.clear();
        for (site, &s) in config.iter().enumerate() {
            if !in_region[site] {
                key_buf.push(s);
            }
        }
        let id = match lookup.get(&key_buf) {
            Some(&id) => id,
            None => {
                let id = buckets.len();
                lookup.insert(key_buf.clone(), id);
                buckets.push(Vec::new());
                id
            }
        };
        bucket_of[rank] = id;
        buckets[id].push(rank);
    }

    let mut matrix = DMatrix::zeros(n_states, n_states);
    for members in &buckets {
        let mass: S = members.iter().map(|&r| probs[r]).sum();
        if !(mass > S::zero()) {
            return Err(Error::DegenerateMeasure(
                "a conditioning class carries zero mass".into(),
            ));
        }
        for &row in members {
            for &col in members {
                matrix[(row, col)] = probs[col] / mass;
            }
        }
    }
    Ok(matrix)
}
