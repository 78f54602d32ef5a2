//! The named spectral-gap inequalities of the theory, each evaluated
//! exactly on guarded instances and reported with its signed margin, plus
//! the variance-functional facts (decomposition, monotonicity,
//! tensorization, commutation, positive semidefiniteness) they rest on.
//!
//! Every check computes both sides from scratch; a failed inequality is a
//! failed check, never a warning.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chain::{conditional_resample_matrix, ExactChain};
use crate::geometry::{even_odd_partition, LatticeCube, TilingFamily};
use crate::kernels::{
    conditional_isolated_chain, es_factorize, tiling_inner_chain, InnerKernel, Kernel,
};
use crate::measure::{gibbs_distribution, StateSpace};
use crate::model::{Spin, SpinConfig, System};
use crate::spectral::{dirichlet_form, spectral_gap};
use crate::stream::StreamRng;
use crate::{scalar, scalar_usize, Error, Result, Scalar};

/// A comparison holds when its margin is at least this far above zero
/// (negative values this small are attributed to rounding).
pub const COMPARISON_TOLERANCE: f64 = 1e-9;

/// Residual ceiling for the variance facts.
pub const VARIANCE_TOLERANCE: f64 = 1e-9;

/// One exact inequality check, stated as `lhs >= rhs`; `margin` is
/// `lhs - rhs` and `holds` allows for `COMPARISON_TOLERANCE` of rounding.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport<S: Scalar> {
    pub name: &'static str,
    pub instance: String,
    pub lhs: S,
    pub rhs: S,
    pub margin: S,
    pub holds: bool,
}

impl<S: Scalar> ComparisonReport<S> {
    fn of(name: &'static str, instance: String, lhs: S, rhs: S) -> Self {
        let margin = lhs - rhs;
        ComparisonReport {
            name,
            instance,
            lhs,
            rhs,
            margin,
            holds: margin >= -scalar::<S>(COMPARISON_TOLERANCE),
        }
    }
}

fn instance_label<S: Scalar>(system: &System<S>) -> String {
    format!(
        "q={} box={:?}",
        system.model().q(),
        system.cube().sides()
    )
}

/// The SW gap dominates the isolated-vertex variant: lambda(SW) >= lambda(I_SW).
pub fn sw_vs_isolated<S: Scalar>(system: &Arc<System<S>>) -> Result<ComparisonReport<S>> {
    let sw = spectral_gap(&Kernel::sw(system.clone())?.exact_matrix()?)?.gap;
    let iso = spectral_gap(&Kernel::isolated_sw(system.clone())?.exact_matrix()?)?.gap;
    Ok(ComparisonReport::of(
        "sw-vs-isolated",
        instance_label(system),
        sw,
        iso,
    ))
}

/// The isolated-vertex gap dominates its tiled average:
/// lambda(I_SW) >= lambda(I_D).
pub fn isolated_vs_tiled<S: Scalar>(
    system: &Arc<System<S>>,
    l: usize,
) -> Result<ComparisonReport<S>> {
    let iso = spectral_gap(&Kernel::isolated_sw(system.clone())?.exact_matrix()?)?.gap;
    let tiled =
        spectral_gap(&Kernel::tiled_isolated_sw(system.clone(), l)?.exact_matrix()?)?.gap;
    Ok(ComparisonReport::of(
        "isolated-vs-tiled",
        format!("{} l={l}", instance_label(system)),
        iso,
        tiled,
    ))
}

/// Whether the spins outside the marked region form a valid partial
/// configuration on their own (all touched potentials finite).
fn exterior_is_valid<S: Scalar>(system: &System<S>, in_region: &[bool], config: &[Spin]) -> bool {
    let cube = system.cube();
    let model = system.model();
    for &(u, v) in cube.edges() {
        if !in_region[u]
            && !in_region[v]
            && model.edge_potential(config[u], config[v]).is_none()
        {
            return false;
        }
    }
    for v in 0..cube.len() {
        if in_region[v] {
            continue;
        }
        if model.vertex_potential(config[v]).is_none() {
            return false;
        }
        for &b in system.boundary_spins(v) {
            if model.edge_potential(b, config[v]).is_none() {
                return false;
            }
        }
    }
    true
}

/// Calls `f` with every valid exterior configuration of the region's
/// complement (region entries are zero-filled placeholders).
fn for_each_exterior<S, F>(system: &System<S>, region: &[usize], mut f: F) -> Result<()>
where
    S: Scalar,
    F: FnMut(&[Spin]) -> Result<()>,
{
    let n = system.cube().len();
    let q = system.model().q();
    let mut in_region = vec![false; n];
    for &v in region {
        in_region[v] = true;
    }
    let outside: Vec<usize> = (0..n).filter(|&v| !in_region[v]).collect();
    let space = StateSpace::full(outside.len(), q)?;
    let mut partial = vec![0 as Spin; outside.len()];
    let mut exterior: SpinConfig = vec![0; n];
    for rank in 0..space.len() {
        space.write_config(rank, &mut partial);
        for (i, &v) in outside.iter().enumerate() {
            exterior[v] = partial[i];
        }
        if exterior_is_valid(system, &in_region, &exterior) {
            f(&exterior)?;
        }
    }
    Ok(())
}

/// The generic-tiled comparison: lambda(S_D) >= lambda(B_D) times the
/// smallest gap of any restricted chain S_k^tau, the minimum running over
/// every tiling and every valid exterior configuration. Empty tilings
/// update nothing and impose no constraint, so they are skipped.
pub fn tiled_lower_bound<S: Scalar>(
    system: &Arc<System<S>>,
    l: usize,
    inner: &Arc<dyn InnerKernel<S>>,
) -> Result<ComparisonReport<S>> {
    let s_d = Kernel::tiled_generic(system.clone(), l, inner.clone())?;
    let lhs = spectral_gap(&s_d.exact_matrix()?)?.gap;
    let b_d =
        spectral_gap(&Kernel::tiled_heat_bath(system.clone(), l)?.exact_matrix()?)?.gap;
    let family = s_d
        .tiling_family()
        .expect("a tiled kernel carries its tiling family")
        .clone();

    let mut min_local = S::one();
    let mut evaluations = 0usize;
    for tiling in family.tilings() {
        if tiling.is_empty() {
            continue;
        }
        for_each_exterior(system, tiling.vertices(), |exterior| {
            let local = tiling_inner_chain(system, tiling, &**inner, exterior)?;
            let gap = spectral_gap(&local)?.gap;
            if gap < min_local {
                min_local = gap;
            }
            evaluations += 1;
            Ok(())
        })?;
    }
    Ok(ComparisonReport::of(
        "tiled-lower-bound",
        format!(
            "{} l={l} inner={} evaluations={evaluations}",
            instance_label(system),
            inner.name()
        ),
        lhs,
        b_d * min_local,
    ))
}

/// The exact minimum over every tiling and every valid exterior of the
/// conditional isolated-update gap, against the closed-form floor
/// (1/7) e^{-2 beta d L^d}. Empty tilings are skipped as in
/// [`tiled_lower_bound`].
pub fn isolated_local_gap<S: Scalar>(
    system: &Arc<System<S>>,
    l: usize,
) -> Result<ComparisonReport<S>> {
    let Some(beta) = system.model().as_zero_field_potts() else {
        return Err(Error::UnsupportedModel(
            "the isolated local-gap bound needs a zero-field Potts model".into(),
        ));
    };
    let cube = system.cube();
    let d = cube.dimension();
    let family = TilingFamily::build(cube, l)?;

    let mut minimum = S::one();
    let mut evaluations = 0usize;
    for tiling in family.tilings() {
        if tiling.is_empty() {
            continue;
        }
        for_each_exterior(system, tiling.vertices(), |exterior| {
            let chain = conditional_isolated_chain(system, tiling.vertices(), exterior)?;
            let gap = spectral_gap(&chain)?.gap;
            if gap < minimum {
                minimum = gap;
            }
            evaluations += 1;
            Ok(())
        })?;
    }

    let volume = scalar_usize::<S>(l.pow(d as u32));
    let exponent = scalar::<S>(2.0) * beta * scalar_usize::<S>(d) * volume;
    let bound = (-exponent).exp() / scalar::<S>(7.0);
    Ok(ComparisonReport::of(
        "isolated-local-gap",
        format!(
            "{} L={l} evaluations={evaluations}",
            instance_label(system)
        ),
        minimum,
        bound,
    ))
}

/// The block-dynamics reduction: lambda(B_A) >= lambda(B_eo) / r for any
/// covering family of r blocks, with B_eo the even/odd block dynamics.
pub fn block_vs_eo<S: Scalar>(
    system: &Arc<System<S>>,
    blocks: &[Vec<usize>],
) -> Result<ComparisonReport<S>> {
    let r = blocks.len();
    let b_a =
        spectral_gap(&Kernel::block_dynamics(system.clone(), blocks)?.exact_matrix()?)?.gap;
    let (even, odd) = even_odd_partition(system.cube());
    let b_eo = spectral_gap(
        &Kernel::block_dynamics(system.clone(), &[even, odd])?.exact_matrix()?,
    )?
    .gap;
    Ok(ComparisonReport::of(
        "block-vs-eo",
        format!("{} r={r}", instance_label(system)),
        b_a,
        b_eo / scalar_usize::<S>(r),
    ))
}

fn sts_gaps<S: Scalar>(
    system: &Arc<System<S>>,
    s_vertices: &[usize],
    t_vertices: &[usize],
    a: S,
) -> Result<(S, S)> {
    let s = Kernel::heat_bath_block(system.clone(), s_vertices)?;
    let t = Kernel::heat_bath_block(system.clone(), t_vertices)?;
    let sts = Kernel::composition(system.clone(), vec![s.clone(), t.clone(), s.clone()])?;
    let gap_sts = spectral_gap(&sts.exact_matrix()?)?.gap;
    let s_chain = s.exact_matrix()?;
    let t_chain = t.exact_matrix()?;
    let mix = ExactChain::mixture(&[(a, &s_chain), (S::one() - a, &t_chain)])?;
    let gap_mix = spectral_gap(&mix)?.gap;
    Ok((gap_sts, gap_mix))
}

/// The sandwich inequality for heat-bath blocks:
/// lambda(STS) >= lambda(aS + (1-a)T) for any a in [0, 1].
pub fn sts_vs_mixture<S: Scalar>(
    system: &Arc<System<S>>,
    s_vertices: &[usize],
    t_vertices: &[usize],
    a: S,
) -> Result<ComparisonReport<S>> {
    if a < S::zero() || a > S::one() {
        return Err(Error::InvalidInput(
            "the mixture weight must lie in [0, 1]".into(),
        ));
    }
    let (gap_sts, gap_mix) = sts_gaps(system, s_vertices, t_vertices, a)?;
    Ok(ComparisonReport::of(
        "sts-vs-mixture",
        format!("{} a={a:?}", instance_label(system)),
        gap_sts,
        gap_mix,
    ))
}

/// The reverse sandwich estimate:
/// lambda(STS) <= 3 / (a^2 (1-a)) * lambda(aS + (1-a)T) for a in (0, 1),
/// reported as `bound >= lambda(STS)`.
pub fn sts_upper<S: Scalar>(
    system: &Arc<System<S>>,
    s_vertices: &[usize],
    t_vertices: &[usize],
    a: S,
) -> Result<ComparisonReport<S>> {
    if a <= S::zero() || a >= S::one() {
        return Err(Error::InvalidInput(
            "the mixture weight must lie strictly inside (0, 1)".into(),
        ));
    }
    let (gap_sts, gap_mix) = sts_gaps(system, s_vertices, t_vertices, a)?;
    let bound = scalar::<S>(3.0) / (a * a * (S::one() - a)) * gap_mix;
    Ok(ComparisonReport::of(
        "sts-upper",
        format!("{} a={a:?}", instance_label(system)),
        bound,
        gap_sts,
    ))
}

/// Residual ceiling for the exact cluster-dynamics factorizations.
pub const FACTORIZATION_TOLERANCE: f64 = 1e-12;

/// Max-abs-entry residuals of the joint-space factorizations of the
/// cluster dynamics: each kernel against its lifted form, the recoloring
/// projection identities, and the spin marginal of the joint measure.
#[derive(Debug, Clone, Serialize)]
pub struct FactorizationReport<S: Scalar> {
    pub instance: String,
    pub joint_states: usize,
    pub tilings: usize,
    /// max |SW - T R T*|.
    pub sw_residual: S,
    /// max |I_SW - T Q T*|.
    pub isolated_residual: S,
    /// max |I_D - (1/m) sum_k T Q_k T*|.
    pub tiled_residual: S,
    /// max |R - Q R Q|.
    pub recolor_projection_residual: S,
    /// max over k of max |Q - Q_k Q Q_k|.
    pub isolated_projection_residual: S,
    /// max |spin marginal of nu - pi|.
    pub marginal_residual: S,
    pub holds: bool,
}

fn max_abs_diff<S: Scalar>(a: &DMatrix<S>, b: &DMatrix<S>) -> S {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y).abs())
        .fold(S::zero(), S::max)
}

/// Builds the joint Edwards-Sokal factors for the tiling family with cube
/// parameter `l` and measures every factorization identity exactly: the
/// three cluster kernels against their lifted forms, the projection
/// identities R = QRQ and Q = Q_k Q Q_k, and the agreement of the joint
/// measure's spin marginal with the Gibbs measure.
pub fn factorization_report<S: Scalar>(
    system: &Arc<System<S>>,
    l: usize,
) -> Result<FactorizationReport<S>> {
    let factors = es_factorize(system, l)?;
    let sw = Kernel::sw(system.clone())?.exact_matrix()?;
    let isolated = Kernel::isolated_sw(system.clone())?.exact_matrix()?;
    let tiled = Kernel::tiled_isolated_sw(system.clone(), l)?.exact_matrix()?;
    let lift = |mid: &DMatrix<S>| &factors.t * mid * &factors.t_star;
    let sw_residual = max_abs_diff(sw.matrix(), &lift(&factors.r));
    let isolated_residual = max_abs_diff(isolated.matrix(), &lift(&factors.q));
    let mut averaged = DMatrix::zeros(sw.n(), sw.n());
    for q_k in &factors.q_k {
        averaged += lift(q_k);
    }
    averaged /= scalar_usize::<S>(factors.q_k.len());
    let tiled_residual = max_abs_diff(tiled.matrix(), &averaged);
    let recolor_projection_residual =
        max_abs_diff(&factors.r, &(&factors.q * &factors.r * &factors.q));
    let isolated_projection_residual = factors
        .q_k
        .iter()
        .map(|q_k| max_abs_diff(&factors.q, &(q_k * &factors.q * q_k)))
        .fold(S::zero(), S::max);
    let space = factors.spin_measure.space().clone();
    let mut spin_marginal = vec![S::zero(); space.len()];
    for (j, joint) in factors.joint.iter().enumerate() {
        let rank = space
            .index_of(&joint.spins)
            .expect("joint spins form a state");
        spin_marginal[rank] += factors.nu[j];
    }
    let marginal_residual = spin_marginal
        .iter()
        .zip(factors.spin_measure.probs())
        .map(|(&a, &b)| (a - b).abs())
        .fold(S::zero(), S::max);
    let tolerance = scalar::<S>(FACTORIZATION_TOLERANCE);
    let holds = [
        sw_residual,
        isolated_residual,
        tiled_residual,
        recolor_projection_residual,
        isolated_projection_residual,
        marginal_residual,
    ]
    .iter()
    .all(|&r| r <= tolerance);
    Ok(FactorizationReport {
        instance: format!("{} l={l}", instance_label(system)),
        joint_states: factors.joint.len(),
        tilings: factors.q_k.len(),
        sw_residual,
        isolated_residual,
        tiled_residual,
        recolor_projection_residual,
        isolated_projection_residual,
        marginal_residual,
        holds,
    })
}

/// Outcome of the variance-functional facts on one instance; every field
/// is the worst case over the random functions.
#[derive(Debug, Clone, Serialize)]
pub struct VarianceFactsReport<S: Scalar> {
    pub instance: String,
    pub functions: usize,
    /// Worst |E_A(f) - sum_tau Var_A^tau(f) mu(tau)| over blocks and f.
    pub decomposition_residual: S,
    /// Smallest E_B(f) - E_A(f) over nested pairs A within B.
    pub monotonicity_margin: S,
    /// Smallest sum_i E_{U_i}(f) - E_U(f) for the even sublattice split
    /// into singletons.
    pub tensorization_margin: S,
    /// Largest entry of |K_i K_j - K_j K_i| over singleton pairs at
    /// distance two or more.
    pub commutator_residual: S,
    /// Smallest eigenvalue over every heat-bath block matrix used.
    pub min_heat_bath_eigenvalue: S,
    pub holds: bool,
}

/// Verifies the variance facts on one instance with `functions` random
/// test functions drawn from `rng`: the conditional-variance decomposition
/// of each block Dirichlet form, monotonicity under block inclusion,
/// tensorization across the even sublattice, commutation of far-apart
/// single-site updates, and positive semidefiniteness of every heat-bath
/// matrix involved.
pub fn verify_variance_facts<S: Scalar>(
    system: &Arc<System<S>>,
    functions: usize,
    rng: &mut StreamRng,
) -> Result<VarianceFactsReport<S>> {
    let mu = gibbs_distribution(system)?;
    let space = mu.space().clone();
    let n_states = space.len();
    let cube = system.cube();
    let n = cube.len();

    let (even, _) = even_odd_partition(cube);
    let singletons: Vec<Vec<usize>> = even.iter().map(|&v| vec![v]).collect();

    let mut nested: Vec<(Vec<usize>, Vec<usize>)> = vec![(even.clone(), even.clone())];
    for _ in 0..8 {
        let b = random_nonempty_subset(n, rng);
        let mut a: Vec<usize> = b
            .iter()
            .copied()
            .filter(|_| rand::Rng::random_bool(rng, 0.5))
            .collect();
        if a.is_empty() {
            a.push(b[0]);
        }
        nested.push((a, b));
    }

    let chain_for = |region: &[usize]| -> Result<ExactChain<S>> {
        let matrix = conditional_resample_matrix(&space, mu.probs(), region)?;
        ExactChain::new(
            Some(space.clone()),
            matrix,
            nalgebra::DVector::from_column_slice(mu.probs()),
        )
    };

    let mut blocks: Vec<Vec<usize>> = vec![even.clone()];
    blocks.extend(singletons.iter().cloned());
    for (a, b) in &nested {
        blocks.push(a.clone());
        blocks.push(b.clone());
    }

    let mut min_eigenvalue = S::one();
    for region in &blocks {
        let report = spectral_gap(&chain_for(region)?)?;
        if report.lambda_min < min_eigenvalue {
            min_eigenvalue = report.lambda_min;
        }
    }

    let mut commutator = S::zero();
    for i in 0..singletons.len() {
        for j in (i + 1)..singletons.len() {
            let ki = conditional_resample_matrix(&space, mu.probs(), &singletons[i])?;
            let kj = conditional_resample_matrix(&space, mu.probs(), &singletons[j])?;
            let diff = &ki * &kj - &kj * &ki;
            for entry in diff.iter() {
                if entry.abs() > commutator {
                    commutator = entry.abs();
                }
            }
        }
    }

    // Complement-restriction classes of each block, for the conditional
    // variance decomposition.
    let buckets_for = |region: &[usize]| -> Vec<Vec<usize>> {
        let mut in_region = vec![false; n];
        for &v in region {
            in_region[v] = true;
        }
        let mut buckets: std::collections::BTreeMap<Vec<Spin>, Vec<usize>> =
            std::collections::BTreeMap::new();
        let mut config = vec![0 as Spin; n];
        for rank in 0..n_states {
            space.write_config(rank, &mut config);
            let key: Vec<Spin> = config
                .iter()
                .enumerate()
                .filter_map(|(v, &s)| (!in_region[v]).then_some(s))
                .collect();
            buckets.entry(key).or_default().push(rank);
        }
        buckets.into_values().collect()
    };

    let decomposition_blocks: Vec<&Vec<usize>> = blocks.iter().take(4).collect();
    let decomposition_data: Vec<(ExactChain<S>, Vec<Vec<usize>>)> = decomposition_blocks
        .iter()
        .map(|region| Ok((chain_for(region)?, buckets_for(region))))
        .collect::<Result<_>>()?;

    let nested_chains: Vec<(ExactChain<S>, ExactChain<S>)> = nested
        .iter()
        .map(|(a, b)| Ok((chain_for(a)?, chain_for(b)?)))
        .collect::<Result<_>>()?;

    let even_chain = chain_for(&even)?;
    let singleton_chains: Vec<ExactChain<S>> = singletons
        .iter()
        .map(|s| chain_for(s))
        .collect::<Result<_>>()?;

    let mut decomposition_residual = S::zero();
    let mut monotonicity_margin = S::one();
    let mut tensorization_margin = S::one();

    for _ in 0..functions {
        let f: Vec<S> = (0..n_states)
            .map(|_| scalar::<S>(rand::Rng::random_range(rng, -1.0..1.0)))
            .collect();

        for (chain, buckets) in &decomposition_data {
            let direct = dirichlet_form(chain, &f)?;
            let mut decomposed = S::zero();
            for members in buckets {
                let mut w = S::zero();
                let mut m1 = S::zero();
                let mut m2 = S::zero();
                for &rank in members {
                    let p = mu.prob(rank);
                    w += p;
                    m1 += p * f[rank];
                    m2 += p * f[rank] * f[rank];
                }
                if w > S::zero() {
                    decomposed += m2 - m1 * m1 / w;
                }
            }
            let residual = (direct - decomposed).abs();
            if residual > decomposition_residual {
                decomposition_residual = residual;
            }
        }

        for (chain_a, chain_b) in &nested_chains {
            let margin = dirichlet_form(chain_b, &f)? - dirichlet_form(chain_a, &f)?;
            if margin < monotonicity_margin {
                monotonicity_margin = margin;
            }
        }

        let whole = dirichlet_form(&even_chain, &f)?;
        let mut parts = S::zero();
        for chain in &singleton_chains {
            parts += dirichlet_form(chain, &f)?;
        }
        let margin = parts - whole;
        if margin < tensorization_margin {
            tensorization_margin = margin;
        }
    }

    let tol = scalar::<S>(VARIANCE_TOLERANCE);
    let holds = decomposition_residual <= tol
        && monotonicity_margin >= -tol
        && tensorization_margin >= -tol
        && commutator <= tol
        && min_eigenvalue >= -tol;
    Ok(VarianceFactsReport {
        instance: instance_label(system),
        functions,
        decomposition_residual,
        monotonicity_margin,
        tensorization_margin,
        commutator_residual: commutator,
        min_heat_bath_eigenvalue: min_eigenvalue,
        holds,
    })
}

/// A random nonempty vertex subset, each vertex kept with probability 1/2.
pub fn random_nonempty_subset(n: usize, rng: &mut StreamRng) -> Vec<usize> {
    let mut subset: Vec<usize> = (0..n)
        .filter(|_| rand::Rng::random_bool(rng, 0.5))
        .collect();
    if subset.is_empty() {
        subset.push(rand::Rng::random_range(rng, 0..n));
    }
    subset
}

/// A random family of `r` nonempty blocks that jointly cover the box.
pub fn random_block_family(cube: &LatticeCube, r: usize, rng: &mut StreamRng) -> Vec<Vec<usize>> {
    let n = cube.len();
    let mut blocks: Vec<Vec<usize>> = (0..r)
        .map(|_| {
            (0..n)
                .filter(|_| rand::Rng::random_bool(rng, 0.5))
                .collect()
        })
        .collect();
    let mut covered = vec![false; n];
    for block in &blocks {
        for &v in block {
            covered[v] = true;
        }
    }
    for v in 0..n {
        if !covered[v] {
            let i = rand::Rng::random_range(rng, 0..r);
            blocks[i].push(v);
        }
    }
    for block in &mut blocks {
        if block.is_empty() {
            block.push(rand::Rng::random_range(rng, 0..n));
        }
        block.sort_unstable();
    }
    blocks
}

/// A random ergodic reversible chain on `n` states: a Metropolis walk for a
/// random positive measure, made half-lazy so the spectrum lies in [0, 1].
pub fn random_reversible_chain<S: Scalar>(n: usize, rng: &mut StreamRng) -> Result<ExactChain<S>> {
    if n < 2 {
        return Err(Error::InvalidInput(
            "a random chain needs at least two states".into(),
        ));
    }
    let weights: Vec<S> = (0..n)
        .map(|_| scalar::<S>(rand::Rng::random_range(rng, 0.2..1.0)))
        .collect();
    let total = weights.iter().fold(S::zero(), |acc, &w| acc + w);
    let mu: Vec<S> = weights.iter().map(|&w| w / total).collect();

    let inv_n = S::one() / scalar_usize::<S>(n);
    let half = scalar::<S>(0.5);
    let mut matrix = DMatrix::<S>::zeros(n, n);
    for x in 0..n {
        let mut off = S::zero();
        for y in 0..n {
            if y == x {
                continue;
            }
            let accept = if mu[y] < mu[x] { mu[y] / mu[x] } else { S::one() };
            let rate = inv_n * accept * half;
            matrix[(x, y)] = rate;
            off += rate;
        }
        matrix[(x, x)] = S::one() - off;
    }
    ExactChain::new(None, matrix, nalgebra::DVector::from_vec(mu))
}
