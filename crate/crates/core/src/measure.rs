//! Exact finite measures: enumeration of configuration spaces, Gibbs
//! distributions, conditional distributions on sub-regions, marginals, and
//! total-variation distance. All weights are handled in log-space with a
//! max-shift, so large couplings neither overflow nor lose normalization.

use std::collections::HashMap;
use std::sync::Arc;

use crate::model::{Spin, SpinConfig, System};
use crate::{Error, Result, Scalar};

/// Enumeration guard: spaces larger than `2^24` configurations are refused.
pub const MAX_ENUMERATION_BITS: f64 = 24.0;

/// Checks the enumeration guard for `n` vertices and `q` spins without
/// building the space.
pub fn enumeration_guard(n: usize, q: usize) -> Result<()> {
    enumeration_size(n, q).map(|_| ())
}

fn enumeration_size(n: usize, q: usize) -> Result<usize> {
    let bits = n as f64 * (q as f64).log2();
    if bits > MAX_ENUMERATION_BITS {
        return Err(Error::Capacity(format!(
            "state space needs n*log2(q) = {bits:.1} bits, enumeration guard is {MAX_ENUMERATION_BITS}"
        )));
    }
    Ok((q as u64).pow(n as u32) as usize)
}

/// An enumerated configuration space on `n` vertices with spins in `0..q`,
/// in lexicographic order. Systems with hard constraints enumerate only the
/// valid configurations.
#[derive(Debug, Clone)]
pub enum StateSpace {
    Full {
        n: usize,
        q: usize,
    },
    Filtered {
        n: usize,
        q: usize,
        configs: Vec<SpinConfig>,
        index: HashMap<SpinConfig, usize>,
    },
}

impl StateSpace {
    /// All `q^n` configurations, subject to the enumeration guard.
    pub fn full(n: usize, q: usize) -> Result<Self> {
        enumeration_size(n, q)?;
        Ok(StateSpace::Full { n, q })
    }

    /// The valid configurations of a bound system, in lexicographic order.
    pub fn enumerate<S: Scalar>(system: &System<S>) -> Result<Self> {
        let n = system.cube().len();
        let q = system.model().q();
        let total = enumeration_size(n, q)?;
        if !system.model().has_hard_constraints() {
            return Ok(StateSpace::Full { n, q });
        }
        let mut configs = Vec::new();
        let mut config: SpinConfig = vec![0; n];
        for _ in 0..total {
            if system.config_is_valid(&config) {
                configs.push(config.clone());
            }
            advance(&mut config, q);
        }
        let index = configs
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Ok(StateSpace::Filtered {
            n,
            q,
            configs,
            index,
        })
    }

    pub fn len(&self) -> usize {
        match self {
            StateSpace::Full { n, q } => (*q as u64).pow(*n as u32) as usize,
            StateSpace::Filtered { configs, .. } => configs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn vertices(&self) -> usize {
        match self {
            StateSpace::Full { n, .. } => *n,
            StateSpace::Filtered { n, .. } => *n,
        }
    }

    pub fn q(&self) -> usize {
        match self {
            StateSpace::Full { q, .. } => *q,
            StateSpace::Filtered { q, .. } => *q,
        }
    }

    /// Writes the configuration with the given rank into `buf`.
    pub fn write_config(&self, rank: usize, buf: &mut SpinConfig) {
        match self {
            StateSpace::Full { n, q } => {
                buf.resize(*n, 0);
                let mut r = rank;
                for v in (0..*n).rev() {
                    buf[v] = (r % q) as Spin;
                    r /= q;
                }
                debug_assert_eq!(r, 0, "rank out of range");
            }
            StateSpace::Filtered { configs, .. } => {
                buf.clear();
                buf.extend_from_slice(&configs[rank]);
            }
        }
    }

    pub fn config(&self, rank: usize) -> SpinConfig {
        let mut buf = Vec::new();
        self.write_config(rank, &mut buf);
        buf
    }

    /// Rank of a configuration, if it belongs to the space.
    pub fn index_of(&self, config: &[Spin]) -> Option<usize> {
        match self {
            StateSpace::Full { n, q } => {
                if config.len() != *n {
                    return None;
                }
                let mut rank = 0usize;
                for &s in config {
                    if s as usize >= *q {
                        return None;
                    }
                    rank = rank * q + s as usize;
                }
                Some(rank)
            }
            StateSpace::Filtered { index, .. } => index.get(config).copied(),
        }
    }

    /// Calls `f(rank, config)` for every configuration, in order.
    pub fn for_each<F: FnMut(usize, &[Spin])>(&self, mut f: F) {
        match self {
            StateSpace::Full { n, q } => {
                let mut config: SpinConfig = vec![0; *n];
                for rank in 0..self.len() {
                    f(rank, &config);
                    advance(&mut config, *q);
                }
            }
            StateSpace::Filtered { configs, .. } => {
                for (rank, config) in configs.iter().enumerate() {
                    f(rank, config);
                }
            }
        }
    }

    /// Structural equality; cheap for full spaces.
    pub fn same_as(&self, other: &StateSpace) -> bool {
        match (self, other) {
            (StateSpace::Full { n, q }, StateSpace::Full { n: n2, q: q2 }) => n == n2 && q == q2,
            (
                StateSpace::Filtered { configs, n, q, .. },
                StateSpace::Filtered {
                    configs: c2,
                    n: n2,
                    q: q2,
                    ..
                },
            ) => n == n2 && q == q2 && configs == c2,
            _ => false,
        }
    }
}

fn advance(config: &mut [Spin], q: usize) {
    for v in (0..config.len()).rev() {
        config[v] += 1;
        if (config[v] as usize) < q {
            return;
        }
        config[v] = 0;
    }
}

/// A probability vector over an enumerated space, together with the
/// log-partition function of the weights it was normalized from.
#[derive(Debug, Clone)]
pub struct ExactMeasure<S> {
    space: Arc<StateSpace>,
    probs: Vec<S>,
    log_z: S,
}

impl<S: Scalar> ExactMeasure<S> {
    /// Wraps an explicit probability vector; it must be nonnegative and sum
    /// to one within `1e-12`.
    pub fn new(space: Arc<StateSpace>, probs: Vec<S>, log_z: S) -> Result<Self> {
        if probs.len() != space.len() {
            return Err(Error::InvalidInput(format!(
                "{} probabilities for a space of {} states",
                probs.len(),
                space.len()
            )));
        }
        if probs.iter().any(|p| *p < S::zero() || !p.is_finite()) {
            return Err(Error::InvalidInput(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let total: S = probs.iter().copied().sum();
        if (total - S::one()).abs() > crate::scalar(1e-12) {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(ExactMeasure {
            space,
            probs,
            log_z,
        })
    }

    /// Normalizes a log-weight vector with a max-shift. Entries of `None`
    /// are hard-forbidden and get probability zero.
    pub fn from_log_weights(space: Arc<StateSpace>, log_weights: &[Option<S>]) -> Result<Self> {
        if log_weights.len() != space.len() {
            return Err(Error::InvalidInput(
                "one log weight per state is required".into(),
            ));
        }
        let shift = log_weights
            .iter()
            .flatten()
            .copied()
            .fold(None::<S>, |acc, w| {
                Some(acc.map_or(w, |m| if w > m { w } else { m }))
            });
        let Some(shift) = shift else {
            return Err(Error::DegenerateMeasure(
                "every configuration has weight zero".into(),
            ));
        };
        let mut probs: Vec<S> = log_weights
            .iter()
            .map(|w| w.map_or(S::zero(), |w| (w - shift).exp()))
            .collect();
        let total: S = probs.iter().copied().sum();
        if !(total > S::zero()) || !total.is_finite() {
            return Err(Error::Numerical(format!(
                "normalizer came out as {total}"
            )));
        }
        for p in &mut probs {
            *p /= total;
        }
        Ok(ExactMeasure {
            space,
            probs,
            log_z: shift + total.ln(),
        })
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    pub fn prob(&self, rank: usize) -> S {
        self.probs[rank]
    }

    /// Log of the partition function the probabilities were normalized from.
    pub fn log_z(&self) -> S {
        self.log_z
    }

    pub fn expectation(&self, f: &[S]) -> S {
        assert_eq!(f.len(), self.probs.len(), "function must match the space");
        self.probs.iter().zip(f).map(|(&p, &x)| p * x).sum()
    }
}

/// The Gibbs distribution of a bound system, by exhaustive enumeration.
pub fn gibbs_distribution<S: Scalar>(system: &System<S>) -> Result<ExactMeasure<S>> {
    let space = Arc::new(StateSpace::enumerate(system)?);
    let mut log_weights = vec![None; space.len()];
    space.for_each(|rank, config| {
        log_weights[rank] = system.log_weight(config);
    });
    ExactMeasure::from_log_weights(space, &log_weights)
}

/// The conditional Gibbs distribution on `region`, given the spins that
/// `exterior` assigns outside the region (entries inside it are ignored).
///
/// The returned measure lives on the region's own configuration space,
/// ordered by the sorted region vertices.
pub fn conditional_distribution<S: Scalar>(
    system: &System<S>,
    region: &[usize],
    exterior: &[Spin],
) -> Result<ExactMeasure<S>> {
    let n = system.cube().len();
    let q = system.model().q();
    let region = validated_region(region, n)?;
    if exterior.len() != n {
        return Err(Error::InvalidInput(
            "exterior must assign every vertex of the box".into(),
        ));
    }
    if exterior.iter().any(|&s| s as usize >= q) {
        return Err(Error::InvalidInput("exterior spin out of range".into()));
    }

    let mut in_region = vec![false; n];
    for &v in &region {
        in_region[v] = true;
    }
    exterior_must_be_valid(system, &in_region, exterior)?;

    let total = enumeration_size(region.len(), q)?;
    let model = system.model();
    let incident: Vec<(usize, usize)> = system
        .cube()
        .edges()
        .iter()
        .copied()
        .filter(|&(u, v)| in_region[u] || in_region[v])
        .collect();

    let mut scratch: SpinConfig = exterior.to_vec();
    let mut assignment: SpinConfig = vec![0; region.len()];
    let mut log_weights: Vec<Option<S>> = Vec::with_capacity(total);
    for _ in 0..total {
        for (i, &v) in region.iter().enumerate() {
            scratch[v] = assignment[i];
        }
        let mut lw = Some(S::zero());
        for &(u, v) in &incident {
            lw = lw.and_then(|acc| {
                model
                    .edge_potential(scratch[u], scratch[v])
                    .map(|t| acc + t)
            });
        }
        for &v in &region {
            lw = lw.and_then(|acc| model.vertex_potential(scratch[v]).map(|t| acc + t));
            for &b in system.boundary_spins(v) {
                lw = lw.and_then(|acc| model.edge_potential(b, scratch[v]).map(|t| acc + t));
            }
        }
        log_weights.push(lw);
        advance(&mut assignment, q);
    }

    let space = if log_weights.iter().all(Option::is_some) {
        StateSpace::full(region.len(), q)?
    } else {
        let mut configs = Vec::new();
        let mut c: SpinConfig = vec![0; region.len()];
        for lw in &log_weights {
            if lw.is_some() {
                configs.push(c.clone());
            }
            advance(&mut c, q);
        }
        let index = configs
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        StateSpace::Filtered {
            n: region.len(),
            q,
            configs,
            index,
        }
    };
    let kept: Vec<Option<S>> = log_weights.into_iter().flatten().map(Some).collect();
    if kept.is_empty() {
        return Err(Error::DegenerateMeasure(
            "no valid region configuration under this exterior".into(),
        ));
    }
    ExactMeasure::from_log_weights(Arc::new(space), &kept)
}

fn validated_region(region: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut region = region.to_vec();
    region.sort_unstable();
    region.dedup();
    if region.is_empty() {
        return Err(Error::InvalidInput("region must be nonempty".into()));
    }
    if *region.last().expect("nonempty") >= n {
        return Err(Error::InvalidInput("region vertex out of range".into()));
    }
    Ok(region)
}

fn exterior_must_be_valid<S: Scalar>(
    system: &System<S>,
    in_region: &[bool],
    exterior: &[Spin],
) -> Result<()> {
    let model = system.model();
    let bad = |what: String| Err(Error::InvalidInput(what));
    for &(u, v) in system.cube().edges() {
        if !in_region[u] && !in_region[v] && model.edge_potential(exterior[u], exterior[v]).is_none()
        {
            return bad(format!("exterior violates a hard constraint on edge ({u}, {v})"));
        }
    }
    for v in 0..exterior.len() {
        if in_region[v] {
            continue;
        }
        if model.vertex_potential(exterior[v]).is_none() {
            return bad(format!("exterior violates a hard constraint at vertex {v}"));
        }
        for &b in system.boundary_spins(v) {
            if model.edge_potential(b, exterior[v]).is_none() {
                return bad(format!(
                    "exterior violates a hard constraint against the boundary at vertex {v}"
                ));
            }
        }
    }
    Ok(())
}

/// Marginal of a measure on a sorted set of vertices. The result lives on
/// the full spin space of the region.
pub fn marginal<S: Scalar>(measure: &ExactMeasure<S>, region: &[usize]) -> Result<ExactMeasure<S>> {
    let n = measure.space().vertices();
    let q = measure.space().q();
    let region = validated_region(region, n)?;
    let out_space = Arc::new(StateSpace::full(region.len(), q)?);
    let mut probs = vec![S::zero(); out_space.len()];
    let mut restricted: SpinConfig = vec![0; region.len()];
    measure.space().for_each(|rank, config| {
        for (i, &v) in region.iter().enumerate() {
            restricted[i] = config[v];
        }
        let out_rank = out_space
            .index_of(&restricted)
            .expect("restriction lies in the full region space");
        probs[out_rank] += measure.prob(rank);
    });
    let log_z = measure.log_z();
    ExactMeasure::new(out_space, probs, log_z)
}

/// Total-variation distance between two measures on the same space.
pub fn tv_distance<S: Scalar>(p: &ExactMeasure<S>, q: &ExactMeasure<S>) -> Result<S> {
    if !p.space().same_as(q.space()) {
        return Err(Error::InvalidInput(
            "total variation needs a common state space".into(),
        ));
    }
    let half: S = crate::scalar(0.5);
    Ok(half
        * p.probs()
            .iter()
            .zip(q.probs())
            .map(|(&a, &b)| (a - b).abs())
            .sum())
}
