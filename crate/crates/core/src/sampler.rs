//! Exact conditional sampling on vertex blocks.
//!
//! A heat-bath update resamples a block from its conditional Gibbs
//! distribution given everything outside. Three exact routes cover the
//! blocks that arise: independent sets factor into single-site draws;
//! sub-boxes (in particular every clipped cube of a tiling) are sampled by a
//! forward-filter backward-sample dynamic program over a frontier of
//! bounded width; small irregular blocks fall back to enumeration.
//!
//! All routes draw their randomness from a [`UniformSource`] and consume a
//! number of uniforms that depends only on the block, never on the current
//! configuration. Couplings exploit this: recording a [`Tape`] and replaying
//! it in two copies yields the shared-randomness coupling, and replaying in
//! copies whose exteriors agree reproduces identical output.

use crate::measure::conditional_distribution;
use crate::model::{Spin, SpinConfig, System};
use crate::{scalar, Error, Result, Scalar};

/// Supplies uniform draws in `[0, 1)`.
pub trait UniformSource {
    fn next_unit(&mut self) -> f64;
}

impl UniformSource for crate::stream::StreamRng {
    fn next_unit(&mut self) -> f64 {
        rand::Rng::random(self)
    }
}

/// A recorded sequence of uniforms, for replaying one batch of randomness
/// through several copies of a dynamics.
#[derive(Debug, Clone)]
pub struct Tape {
    draws: Vec<f64>,
}

impl Tape {
    pub fn record<R: rand::Rng>(len: usize, rng: &mut R) -> Self {
        Tape {
            draws: (0..len).map(|_| rng.random()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn reader(&self) -> TapeReader<'_> {
        TapeReader {
            draws: &self.draws,
            pos: 0,
        }
    }
}

/// Sequential reader over a [`Tape`]; panics if read past the end, which
/// would mean a sampler's declared draw count is wrong.
#[derive(Debug)]
pub struct TapeReader<'a> {
    draws: &'a [f64],
    pos: usize,
}

impl TapeReader<'_> {
    pub fn consumed(&self) -> usize {
        self.pos
    }
}

impl UniformSource for TapeReader<'_> {
    fn next_unit(&mut self) -> f64 {
        let u = self.draws[self.pos];
        self.pos += 1;
        u
    }
}

/// Picks an index from unnormalized nonnegative weights by inverse CDF.
fn pick<S: Scalar>(weights: &[S], u: f64) -> Result<usize> {
    let total: S = weights.iter().copied().sum();
    if !(total > S::zero()) || !total.is_finite() {
        return Err(Error::DegenerateMeasure(
            "conditional weights sum to zero".into(),
        ));
    }
    let threshold = scalar::<S>(u) * total;
    let mut cum = S::zero();
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > S::zero() {
            last_positive = Some(i);
        }
        cum += w;
        if cum > threshold {
            return Ok(i);
        }
    }
    Ok(last_positive.expect("positive total implies a positive weight"))
}

/// Normalized single-site conditional distribution at `v`, indexed by spin.
pub fn site_distribution<S: Scalar>(
    system: &System<S>,
    v: usize,
    config: &[Spin],
) -> Result<Vec<S>> {
    let q = system.model().q();
    let mut log_weights: Vec<Option<S>> = Vec::with_capacity(q);
    let mut shift: Option<S> = None;
    for s in 0..q as Spin {
        let lw = system.site_log_weight(v, s, config);
        if let Some(w) = lw {
            shift = Some(shift.map_or(w, |m| if w > m { w } else { m }));
        }
        log_weights.push(lw);
    }
    let Some(shift) = shift else {
        return Err(Error::DegenerateMeasure(format!(
            "every spin at vertex {v} is forbidden by its surroundings"
        )));
    };
    let mut probs: Vec<S> = log_weights
        .iter()
        .map(|lw| lw.map_or(S::zero(), |w| (w - shift).exp()))
        .collect();
    let total: S = probs.iter().copied().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

/// Heat-bath draw at a single vertex by inverse CDF in the model's spin
/// order (the monotone order when the model carries one, so shared uniforms
/// give the monotone coupling).
pub fn sample_site<S: Scalar>(
    system: &System<S>,
    v: usize,
    config: &[Spin],
    u: f64,
) -> Result<Spin> {
    let probs = site_distribution(system, v, config)?;
    let order = system.model().spin_order();
    let ordered: Vec<S> = order.iter().map(|&s| probs[s as usize]).collect();
    Ok(order[pick(&ordered, u)?])
}

/// How a block gets resampled exactly.
#[derive(Debug, Clone)]
enum BlockKind {
    Empty,
    /// Pairwise non-adjacent vertices: a product of single-site draws.
    IndependentSet,
    /// A full sub-box: transfer-matrix DP over a frontier.
    SubBox(BoxPlan),
    /// Small irregular block: enumerate the conditional.
    Enumerated,
}

/// Precomputed DP layout for a sub-box block.
#[derive(Debug, Clone)]
struct BoxPlan {
    /// Vertices in DP order: lexicographic after permuting axes so the
    /// longest extent comes first, which minimizes the frontier.
    order: Vec<usize>,
    /// Frontier width: product of all extents but the first.
    window: usize,
    /// Frontier state count `q^window`.
    states: usize,
    /// For each DP position, the frontier digits holding already-placed
    /// in-box neighbors.
    pred_digits: Vec<Vec<usize>>,
    /// Powers of q up to the frontier width.
    q_pows: Vec<usize>,
}

/// A vertex block bound to one box, analyzed once and reusable for many
/// resampling steps.
#[derive(Debug, Clone)]
pub struct Block {
    vertices: Vec<usize>,
    kind: BlockKind,
    draws: usize,
}

/// Enumeration fallback guard: blocks with more than `2^20` joint spin
/// assignments are refused.
const MAX_BLOCK_ENUM: f64 = 20.0;
/// Frontier guard for the sub-box DP.
const MAX_FRONTIER_STATES: f64 = 21.0;

impl Block {
    /// Classifies a block of the system's box and fixes its sampling plan.
    pub fn analyze<S: Scalar>(system: &System<S>, vertices: &[usize]) -> Result<Self> {
        let cube = system.cube();
        let q = system.model().q();
        let n = cube.len();
        let mut vertices = vertices.to_vec();
        vertices.sort_unstable();
        vertices.dedup();
        if vertices.last().is_some_and(|&v| v >= n) {
            return Err(Error::InvalidInput("block vertex out of range".into()));
        }

        if vertices.is_empty() {
            return Ok(Block {
                vertices,
                kind: BlockKind::Empty,
                draws: 0,
            });
        }

        let independent = vertices.iter().all(|&v| {
            cube.neighbors(v)
                .iter()
                .all(|u| vertices.binary_search(u).is_err())
        });
        if independent {
            let draws = vertices.len();
            return Ok(Block {
                vertices,
                kind: BlockKind::IndependentSet,
                draws,
            });
        }

        if let Some(plan) = BoxPlan::try_build(system, &vertices)? {
            let draws = 1 + plan.order.len().saturating_sub(plan.window);
            return Ok(Block {
                vertices,
                kind: BlockKind::SubBox(plan),
                draws,
            });
        }

        let bits = vertices.len() as f64 * (q as f64).log2();
        if bits > MAX_BLOCK_ENUM {
            return Err(Error::Capacity(format!(
                "irregular block needs q^|A| = 2^{bits:.1} enumeration, guard is 2^{MAX_BLOCK_ENUM}"
            )));
        }
        Ok(Block {
            vertices,
            kind: BlockKind::Enumerated,
            draws: 1,
        })
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// Uniform draws one resampling consumes; fixed per block.
    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Resamples the block in place from its exact conditional distribution
    /// given the configuration outside it.
    pub fn sample<S: Scalar>(
        &self,
        system: &System<S>,
        config: &mut SpinConfig,
        src: &mut dyn UniformSource,
    ) -> Result<()> {
        match &self.kind {
            BlockKind::Empty => Ok(()),
            BlockKind::IndependentSet => {
                for &v in &self.vertices {
                    config[v] = sample_site(system, v, config, src.next_unit())?;
                }
                Ok(())
            }
            BlockKind::SubBox(plan) => plan.sample(system, config, src),
            BlockKind::Enumerated => {
                let mu = conditional_distribution(system, &self.vertices, config)?;
                let probs = mu.probs().to_vec();
                let rank = pick(&probs, src.next_unit())?;
                let assignment = mu.space().config(rank);
                for (i, &v) in self.vertices.iter().enumerate() {
                    config[v] = assignment[i];
                }
                Ok(())
            }
        }
    }

    /// Log-partition function of the block's conditional distribution; an
    /// exact cross-check between the DP and plain enumeration.
    pub fn conditional_log_z<S: Scalar>(
        &self,
        system: &System<S>,
        config: &[Spin],
    ) -> Result<S> {
        match &self.kind {
            BlockKind::Empty => Ok(S::zero()),
            BlockKind::SubBox(plan) => plan.forward(system, config).map(|f| f.log_z),
            _ => {
                let mu = conditional_distribution(system, &self.vertices, config)?;
                Ok(mu.log_z())
            }
        }
    }
}

struct Forward<S> {
    /// `filters[t]` is the (rescaled) weight vector over frontier states
    /// after placing `t` vertices.
    filters: Vec<Vec<S>>,
    /// Per-position local field log-weights, indexed `[t][spin]`.
    fields: Vec<Vec<Option<S>>>,
    log_z: S,
}

impl BoxPlan {
    /// Returns a plan when the block is exactly a sub-box of the lattice
    /// box, `None` when it is not.
    fn try_build<S: Scalar>(system: &System<S>, vertices: &[usize]) -> Result<Option<BoxPlan>> {
        let cube = system.cube();
        let q = system.model().q();
        let d = cube.dimension();
        let mut lo = vec![i64::MAX; d];
        let mut hi = vec![i64::MIN; d];
        for &v in vertices {
            for (a, &c) in cube.coord(v).iter().enumerate() {
                lo[a] = lo[a].min(c);
                hi[a] = hi[a].max(c);
            }
        }
        let extents: Vec<usize> = (0..d).map(|a| (hi[a] - lo[a] + 1) as usize).collect();
        let volume: usize = extents.iter().product();
        if volume != vertices.len() {
            return Ok(None);
        }

        let mut axes: Vec<usize> = (0..d).collect();
        axes.sort_by_key(|&a| std::cmp::Reverse(extents[a]));
        let permuted: Vec<usize> = axes.iter().map(|&a| extents[a]).collect();
        let window: usize = permuted.iter().skip(1).product();

        let bits = (window as f64 + 1.0) * (q as f64).log2();
        if bits > MAX_FRONTIER_STATES {
            return Err(Error::Capacity(format!(
                "sub-box frontier needs q^(w+1) = 2^{bits:.1} states, guard is 2^{MAX_FRONTIER_STATES}"
            )));
        }
        let states = (q as u64).pow(window as u32) as usize;

        let mut strides = vec![1usize; d];
        for i in (0..d.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * permuted[i + 1];
        }

        let mut order = vec![0usize; volume];
        for &v in vertices {
            let coord = cube.coord(v);
            let mut local = 0usize;
            for (i, &a) in axes.iter().enumerate() {
                local += (coord[a] - lo[a]) as usize * strides[i];
            }
            order[local] = v;
        }

        let mut pred_digits = Vec::with_capacity(volume);
        for t in 0..volume {
            let mut digits = Vec::new();
            let mut rest = t;
            for i in 0..d {
                let c = rest / strides[i];
                rest %= strides[i];
                if c > 0 {
                    digits.push(strides[i] - 1);
                }
            }
            pred_digits.push(digits);
        }

        let mut q_pows = vec![1usize; window + 1];
        for i in 1..=window {
            q_pows[i] = q_pows[i - 1] * q;
        }

        Ok(Some(BoxPlan {
            order,
            window,
            states,
            pred_digits,
            q_pows,
        }))
    }

    fn local_fields<S: Scalar>(
        &self,
        system: &System<S>,
        config: &[Spin],
    ) -> Vec<Vec<Option<S>>> {
        let model = system.model();
        let q = model.q();
        let cube = system.cube();
        self.order
            .iter()
            .map(|&v| {
                (0..q as Spin)
                    .map(|s| {
                        let mut lw = model.vertex_potential(s)?;
                        for &u in cube.neighbors(v) {
                            if self.order.contains(&u) {
                                continue;
                            }
                            lw += model.edge_potential(s, config[u])?;
                        }
                        for &b in system.boundary_spins(v) {
                            lw += model.edge_potential(b, s)?;
                        }
                        Some(lw)
                    })
                    .collect()
            })
            .collect()
    }

    fn forward<S: Scalar>(&self, system: &System<S>, config: &[Spin]) -> Result<Forward<S>> {
        let model = system.model();
        let q = model.q();
        let fields = self.local_fields(system, config);
        let nloc = self.order.len();

        let mut filters: Vec<Vec<S>> = Vec::with_capacity(nloc + 1);
        filters.push(vec![S::one()]);
        let mut log_z = S::zero();

        for t in 0..nloc {
            let old_states = filters[t].len();
            let new_states = if t + 1 >= self.window {
                self.states
            } else {
                old_states * q
            };

            // First pass: log-weights of every (old state, spin) transition,
            // to find the shift.
            let mut trans: Vec<Option<S>> = vec![None; old_states * q];
            let mut shift: Option<S> = None;
            for fs in 0..old_states {
                if !(filters[t][fs] > S::zero()) {
                    continue;
                }
                for s in 0..q {
                    let mut lw = fields[t][s];
                    for &k in &self.pred_digits[t] {
                        let nbr_spin = ((fs / self.q_pows[k]) % q) as Spin;
                        lw = lw.and_then(|acc| {
                            model
                                .edge_potential(s as Spin, nbr_spin)
                                .map(|e| acc + e)
                        });
                    }
                    if let Some(w) = lw {
                        shift = Some(shift.map_or(w, |m| if w > m { w } else { m }));
                    }
                    trans[fs * q + s] = lw;
                }
            }
            let Some(shift) = shift else {
                return Err(Error::DegenerateMeasure(
                    "sub-box conditional has no valid configuration".into(),
                ));
            };

            let mut next = vec![S::zero(); new_states];
            for fs in 0..old_states {
                let weight = filters[t][fs];
                if !(weight > S::zero()) {
                    continue;
                }
                for s in 0..q {
                    if let Some(lw) = trans[fs * q + s] {
                        let new_fs = self.push(fs, s as Spin, t, q);
                        next[new_fs] += weight * (lw - shift).exp();
                    }
                }
            }
            let peak = next
                .iter()
                .copied()
                .fold(S::zero(), |m, w| if w > m { w } else { m });
            if !(peak > S::zero()) {
                return Err(Error::DegenerateMeasure(
                    "sub-box conditional has no valid configuration".into(),
                ));
            }
            for w in &mut next {
                *w /= peak;
            }
            log_z += shift + peak.ln();
            filters.push(next);
        }

        let total: S = filters[nloc].iter().copied().sum();
        log_z += total.ln();
        Ok(Forward {
            filters,
            fields,
            log_z,
        })
    }

    /// New frontier state after placing spin `s` at DP position `t`.
    fn push(&self, fs: usize, s: Spin, t: usize, q: usize) -> usize {
        let grown = fs * q + s as usize;
        if t + 1 >= self.window {
            grown % self.states
        } else {
            grown
        }
    }

    fn sample<S: Scalar>(
        &self,
        system: &System<S>,
        config: &mut SpinConfig,
        src: &mut dyn UniformSource,
    ) -> Result<()> {
        let model = system.model();
        let q = model.q();
        let fwd = self.forward(system, config)?;
        let nloc = self.order.len();

        let final_weights = &fwd.filters[nloc];
        let mut fs = pick(final_weights, src.next_unit())?;
        let mut spins = vec![0 as Spin; nloc];

        for t in (0..nloc).rev() {
            let s = (fs % q) as Spin;
            spins[t] = s;
            let base = fs / q;
            if t >= self.window {
                // The dropped digit is ambiguous: weigh each candidate by
                // filter mass times transition weight.
                let step = self.states / q;
                let candidates: Vec<usize> = (0..q).map(|m| base + m * step).collect();
                let mut weights = vec![S::zero(); q];
                let mut shift: Option<S> = None;
                let mut lws: Vec<Option<S>> = Vec::with_capacity(q);
                for &cand in &candidates {
                    let mut lw = fwd.fields[t][s as usize];
                    for &k in &self.pred_digits[t] {
                        let nbr_spin = ((cand / self.q_pows[k]) % q) as Spin;
                        lw = lw.and_then(|acc| {
                            model.edge_potential(s, nbr_spin).map(|e| acc + e)
                        });
                    }
                    if let Some(w) = lw {
                        shift = Some(shift.map_or(w, |m2| if w > m2 { w } else { m2 }));
                    }
                    lws.push(lw);
                }
                let shift = shift.ok_or_else(|| {
                    Error::Numerical("backward pass lost every candidate".into())
                })?;
                for (i, lw) in lws.iter().enumerate() {
                    if let Some(w) = lw {
                        weights[i] = fwd.filters[t][candidates[i]] * (*w - shift).exp();
                    }
                }
                fs = candidates[pick(&weights, src.next_unit())?];
            } else {
                fs = base;
            }
        }

        for (t, &v) in self.order.iter().enumerate() {
            config[v] = spins[t];
        }
        Ok(())
    }
}
