//! Exact spectral analysis of enumerated chains: absolute spectral gaps,
//! Dirichlet forms, the variational characterization of the gap,
//! product-chain gaps, relaxation times for non-reversible scans, and exact
//! total-variation mixing times.
//!
//! Reversible chains are eigensolved on the symmetric similarity transform
//! `D^{1/2} P D^{-1/2}` (D the diagonal of the stationary measure), which
//! preserves the spectrum and keeps the eigenproblem stable. Non-reversible
//! chains are never eigensolved directly; their relaxation time goes through
//! the multiplicative reversiblization `P P*`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::chain::ExactChain;
use crate::measure::ExactMeasure;
use crate::stream::{domain, Streams};
use crate::{scalar, Error, Result, Scalar};

/// Largest reversibility residual accepted before eigensolving.
pub const REVERSIBILITY_PRECHECK: f64 = 1e-8;
/// A minimum eigenvalue at or above this threshold certifies the chain as
/// positive semidefinite.
pub const PSD_TOLERANCE: f64 = -1e-9;
/// Largest state count handed to the dense symmetric eigensolver; larger
/// chains fall back to deflated power iteration.
pub const DENSE_EIGEN_LIMIT: usize = 4096;
/// Convergence tolerance of the power-iteration fallback.
pub const POWER_TOLERANCE: f64 = 1e-9;
/// Iteration cap of the power-iteration fallback.
pub const POWER_MAX_ITERATIONS: usize = 1_000_000;
/// Step cap for exact mixing-time computation.
pub const MIXING_STEP_CAP: usize = 100_000;

/// Spectral summary of one reversible chain.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport<S: Scalar> {
    /// Number of states.
    pub n: usize,
    /// How the extreme eigenvalues were obtained.
    pub method: &'static str,
    /// Absolute spectral gap `1 - max(|lambda2|, |lambda_min|)`, clamped at 0.
    pub gap: S,
    /// Second-largest eigenvalue.
    pub lambda2: S,
    /// Smallest eigenvalue.
    pub lambda_min: S,
    /// Whether the detailed-balance residual passed the precheck.
    pub reversible: bool,
    /// The detailed-balance residual itself.
    pub reversibility_residual: S,
    /// Whether the smallest eigenvalue certifies positive semidefiniteness.
    pub psd: bool,
    /// Relaxation time `1 / gap` (infinite for gap 0).
    pub relaxation: S,
}

/// Relaxation bookkeeping for a non-reversible chain: the spectral report of
/// its multiplicative reversiblization `P P*` plus the induced relaxation
/// time `1 / (1 - sqrt(1 - gap(P P*)))`.
#[derive(Debug, Clone, Serialize)]
pub struct ReversiblizedReport<S: Scalar> {
    pub multiplicative: SpectralReport<S>,
    pub relaxation: S,
}

/// Outcome of checking the variational characterization of the gap.
#[derive(Debug, Clone, Serialize)]
pub struct VariationalReport<S: Scalar> {
    /// The chain's absolute spectral gap.
    pub gap: S,
    /// Dirichlet/variance ratio of the second eigenvector.
    pub eigenvector_ratio: S,
    /// `|eigenvector_ratio - gap|`.
    pub eigenvector_margin: S,
    /// Smallest value of `ratio - gap` over the random test functions.
    pub worst_random_margin: S,
    /// Whether the eigenvector achieves the gap within 1e-8 and every random
    /// ratio clears it within the same slack.
    pub holds: bool,
}

fn require_two_states<S: Scalar>(chain: &ExactChain<S>) -> Result<()> {
    if chain.n() < 2 {
        return Err(Error::InvalidInput(
            "spectral analysis needs at least two states".into(),
        ));
    }
    Ok(())
}

fn require_reversible<S: Scalar>(chain: &ExactChain<S>) -> Result<S> {
    let residual = chain.reversibility_residual();
    if residual > scalar::<S>(REVERSIBILITY_PRECHECK) {
        return Err(Error::InvalidInput(format!(
            "chain is not reversible (detailed-balance residual {residual:e}); \
             analyze its reversiblization P P* instead"
        )));
    }
    Ok(residual)
}

fn require_positive_stationary<S: Scalar>(chain: &ExactChain<S>) -> Result<()> {
    if chain.stationary().iter().any(|&p| !(p > S::zero())) {
        return Err(Error::DegenerateMeasure(
            "spectral analysis needs a strictly positive stationary measure".into(),
        ));
    }
    Ok(())
}

/// The symmetric similarity transform `D^{1/2} P D^{-1/2}`, averaged with
/// its transpose so the eigensolver sees an exactly symmetric matrix.
fn symmetrized<S: Scalar>(chain: &ExactChain<S>) -> DMatrix<S> {
    let n = chain.n();
    let mu = chain.stationary();
    let roots: Vec<S> = mu.iter().map(|&p| p.sqrt()).collect();
    let mut m = chain.matrix().clone();
    for x in 0..n {
        for y in 0..n {
            m[(x, y)] *= roots[x] / roots[y];
        }
    }
    let mt = m.transpose();
    (m + mt) * scalar::<S>(0.5)
}

fn sqrt_stationary<S: Scalar>(chain: &ExactChain<S>) -> DVector<S> {
    DVector::from_iterator(chain.n(), chain.stationary().iter().map(|&p| p.sqrt()))
}

fn report_from_extremes<S: Scalar>(
    chain: &ExactChain<S>,
    method: &'static str,
    lambda2: S,
    lambda_min: S,
    residual: S,
) -> SpectralReport<S> {
    let star = lambda2.abs().max(lambda_min.abs());
    let gap = (S::one() - star).max(S::zero());
    SpectralReport {
        n: chain.n(),
        method,
        gap,
        lambda2,
        lambda_min,
        reversible: true,
        reversibility_residual: residual,
        psd: lambda_min >= scalar::<S>(PSD_TOLERANCE),
        relaxation: S::one() / gap,
    }
}

fn dense_eigen<S: Scalar>(m: DMatrix<S>) -> Result<SymmetricEigen<S, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m, S::default_epsilon(), 100_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))
}

fn dense_extremes<S: Scalar>(m: DMatrix<S>) -> Result<(S, S)> {
    let eigen = dense_eigen(m)?;
    let mut values: Vec<S> = eigen.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| b.partial_cmp(a).expect("eigenvalues are ordered"));
    Ok((values[1], *values.last().expect("nonempty spectrum")))
}

/// A fixed, platform-independent pseudorandom start vector.
fn deterministic_start<S: Scalar>(n: usize) -> DVector<S> {
    DVector::from_fn(n, |i, _| {
        let h = (i as u64)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .rotate_left(31)
            .wrapping_mul(0xBF58_476D_1CE4_E5B9);
        scalar::<S>((h >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
    })
}

/// Power iteration for the top eigenvalue of a PSD operator restricted to
/// the orthogonal complement of `deflate`.
fn power_top<S: Scalar>(
    apply: impl Fn(&DVector<S>) -> DVector<S>,
    deflate: &DVector<S>,
    n: usize,
) -> Result<S> {
    let mut v = deterministic_start::<S>(n);
    v -= deflate * deflate.dot(&v);
    let norm = v.norm();
    if !(norm > S::zero()) {
        return Err(Error::Numerical("degenerate power-iteration start".into()));
    }
    v /= norm;
    let tol = scalar::<S>(POWER_TOLERANCE);
    for _ in 0..POWER_MAX_ITERATIONS {
        let mut z = apply(&v);
        z -= deflate * deflate.dot(&z);
        let theta = v.dot(&z);
        let residual = (&z - &v * theta).norm();
        let z_norm = z.norm();
        if !(z_norm > S::default_epsilon()) {
            return Ok(S::zero());
        }
        if residual <= tol * theta.abs().max(S::one()) {
            return Ok(theta);
        }
        v = z / z_norm;
    }
    Err(Error::Numerical(format!(
        "power iteration did not converge in {POWER_MAX_ITERATIONS} steps"
    )))
}

/// Extreme nontrivial eigenvalues via two shifted power iterations: the top
/// of `I + M` (deflated) locates the second-largest eigenvalue, the top of
/// `I - M` locates the smallest; both shifted operators are PSD, so power
/// iteration converges to the signed extremes.
fn power_extremes<S: Scalar>(m: &DMatrix<S>, sqrt_mu: &DVector<S>) -> Result<(S, S)> {
    let n = m.nrows();
    let plus = power_top(|v: &DVector<S>| v + m * v, sqrt_mu, n)?;
    let minus = power_top(|v: &DVector<S>| v - m * v, sqrt_mu, n)?;
    Ok((plus - S::one(), S::one() - minus))
}

/// Spectral report of a reversible chain, eigensolving densely when the
/// state space fits under [`DENSE_EIGEN_LIMIT`] and falling back to deflated
/// power iteration otherwise.
pub fn spectral_gap<S: Scalar>(chain: &ExactChain<S>) -> Result<SpectralReport<S>> {
    require_two_states(chain)?;
    require_positive_stationary(chain)?;
    let residual = require_reversible(chain)?;
    if chain.n() <= DENSE_EIGEN_LIMIT {
        let (lambda2, lambda_min) = dense_extremes(symmetrized(chain))?;
        Ok(report_from_extremes(chain, "dense", lambda2, lambda_min, residual))
    } else {
        spectral_gap_via_power(chain)
    }
}

/// Spectral report computed by the power-iteration path regardless of size;
/// exposed so the two eigensolvers can cross-check each other.
pub fn spectral_gap_via_power<S: Scalar>(chain: &ExactChain<S>) -> Result<SpectralReport<S>> {
    require_two_states(chain)?;
    require_positive_stationary(chain)?;
    let residual = require_reversible(chain)?;
    let m = symmetrized(chain);
    let (lambda2, lambda_min) = power_extremes(&m, &sqrt_stationary(chain))?;
    Ok(report_from_extremes(chain, "power", lambda2, lambda_min, residual))
}

/// Relaxation time of a (possibly non-reversible) chain through its
/// multiplicative reversiblization: `1 / (1 - sqrt(1 - gap(P P*)))`.
pub fn reversiblized_relaxation<S: Scalar>(
    chain: &ExactChain<S>,
) -> Result<ReversiblizedReport<S>> {
    let multiplicative = spectral_gap(&chain.reversiblization()?)?;
    let relaxation = S::one() / (S::one() - (S::one() - multiplicative.gap).max(S::zero()).sqrt());
    Ok(ReversiblizedReport {
        multiplicative,
        relaxation,
    })
}

/// The Dirichlet form `<f, (I - P) f>_mu`, cross-checked against the
/// half-double-sum form `(1/2) sum mu(x) P(x,y) (f(x) - f(y))^2`.
pub fn dirichlet_form<S: Scalar>(chain: &ExactChain<S>, f: &[S]) -> Result<S> {
    let n = chain.n();
    if f.len() != n {
        return Err(Error::InvalidInput(format!(
            "test function has {} entries for a chain with {n} states",
            f.len()
        )));
    }
    require_reversible(chain)?;
    let mu = chain.stationary();
    let p = chain.matrix();

    let fv = DVector::from_column_slice(f);
    let pf = p * &fv;
    let mut inner = S::zero();
    for x in 0..n {
        inner += mu[x] * f[x] * (f[x] - pf[x]);
    }

    let half = scalar::<S>(0.5);
    let mut double_sum = S::zero();
    for x in 0..n {
        for y in 0..n {
            let d = f[x] - f[y];
            double_sum += mu[x] * p[(x, y)] * d * d;
        }
    }
    double_sum *= half;

    let scale = S::one().max(inner.abs()).max(double_sum.abs());
    if (inner - double_sum).abs() > scalar::<S>(1e-10) * scale {
        return Err(Error::Numerical(format!(
            "Dirichlet forms disagree: inner-product {inner:e} vs double-sum {double_sum:e}"
        )));
    }
    Ok(double_sum)
}

/// The variance of `f` under a weight vector summing to 1.
pub fn weighted_variance<S: Scalar>(weights: &[S], f: &[S]) -> Result<S> {
    if weights.len() != f.len() {
        return Err(Error::InvalidInput(format!(
            "variance needs matching lengths, got {} weights and {} values",
            weights.len(),
            f.len()
        )));
    }
    let mean: S = weights.iter().zip(f).map(|(&w, &v)| w * v).sum();
    Ok(weights
        .iter()
        .zip(f)
        .map(|(&w, &v)| w * (v - mean) * (v - mean))
        .sum())
}

/// The variance of `f` under an exact measure.
pub fn variance<S: Scalar>(measure: &ExactMeasure<S>, f: &[S]) -> Result<S> {
    weighted_variance(measure.probs(), f)
}

/// Checks the variational characterization `gap = min_f E(f,f) / Var(f)` on
/// a PSD reversible chain: the second eigenvector must achieve the gap
/// within 1e-8 and 200 seeded random functions must not beat it.
pub fn verify_variational_gap<S: Scalar>(
    chain: &ExactChain<S>,
    streams: &Streams,
) -> Result<VariationalReport<S>> {
    require_two_states(chain)?;
    require_positive_stationary(chain)?;
    let residual = require_reversible(chain)?;
    if chain.n() > DENSE_EIGEN_LIMIT {
        return Err(Error::Capacity(format!(
            "variational check needs eigenvectors, so the state space must \
             stay at or under {DENSE_EIGEN_LIMIT}"
        )));
    }

    let eigen = dense_eigen(symmetrized(chain))?;
    let n = chain.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .expect("eigenvalues are ordered")
    });
    let lambda2 = eigen.eigenvalues[order[1]];
    let lambda_min = eigen.eigenvalues[*order.last().expect("nonempty spectrum")];
    let report = report_from_extremes(chain, "dense", lambda2, lambda_min, residual);
    if !report.psd {
        return Err(Error::InvalidInput(format!(
            "variational check needs a PSD chain; smallest eigenvalue is {lambda_min:e}"
        )));
    }

    let mu = chain.stationary();
    let second = eigen.eigenvectors.column(order[1]);
    let f2: Vec<S> = (0..n).map(|x| second[x] / mu[x].sqrt()).collect();
    let var2 = weighted_variance(mu.as_slice(), &f2)?;
    let eigenvector_ratio = dirichlet_form(chain, &f2)? / var2;
    let eigenvector_margin = (eigenvector_ratio - report.gap).abs();

    let slack = scalar::<S>(1e-8);
    let mut rng = streams.stream(domain::FUNCTION, 0);
    let mut worst_random_margin = S::one() / S::zero();
    for _ in 0..200 {
        let f: Vec<S> = (0..n)
            .map(|_| scalar::<S>(rand::Rng::random_range(&mut rng, -1.0..1.0)))
            .collect();
        let var = weighted_variance(mu.as_slice(), &f)?;
        if !(var > S::default_epsilon()) {
            continue;
        }
        let margin = dirichlet_form(chain, &f)? / var - report.gap;
        if margin < worst_random_margin {
            worst_random_margin = margin;
        }
    }
    Ok(VariationalReport {
        gap: report.gap,
        eigenvector_ratio,
        eigenvector_margin,
        worst_random_margin,
        holds: eigenvector_margin <= slack && worst_random_margin >= -slack,
    })
}

/// The tensor-product chain of the factors: every coordinate moves
/// simultaneously and independently.
pub fn product_chain<S: Scalar>(factors: &[&ExactChain<S>]) -> Result<ExactChain<S>> {
    let Some((first, rest)) = factors.split_first() else {
        return Err(Error::InvalidInput("product of no chains".into()));
    };
    let mut size = first.n();
    for factor in rest {
        size = size.checked_mul(factor.n()).unwrap_or(usize::MAX);
        if size > crate::chain::MAX_DENSE_STATES {
            return Err(Error::Capacity(format!(
                "product space exceeds the dense guard of {}",
                crate::chain::MAX_DENSE_STATES
            )));
        }
    }
    let mut matrix = first.matrix().clone();
    let mut stationary = first.stationary().clone();
    for factor in rest {
        matrix = matrix.kronecker(factor.matrix());
        stationary = stationary.kronecker(factor.stationary());
    }
    ExactChain::new(None, matrix, stationary)
}

/// Builds the tensor-product chain, computes its absolute gap, and checks
/// the product law `gap = min over factor gaps` within 1e-9.
pub fn product_chain_gap<S: Scalar>(factors: &[&ExactChain<S>]) -> Result<S> {
    let product = product_chain(factors)?;
    let product_gap = spectral_gap(&product)?.gap;
    let mut min_factor_gap = S::one();
    for factor in factors {
        let gap = spectral_gap(factor)?.gap;
        if gap < min_factor_gap {
            min_factor_gap = gap;
        }
    }
    if (product_gap - min_factor_gap).abs() > scalar::<S>(1e-9) {
        return Err(Error::Numerical(format!(
            "product-chain gap {product_gap:e} disagrees with the factor minimum \
             {min_factor_gap:e}"
        )));
    }
    Ok(product_gap)
}

/// The mixing lower bound `(1/gap - 1) log(1/(2 eps))` induced by the gap.
pub fn gap_mixing_lower_bound<S: Scalar>(gap: S, eps: S) -> S {
    (S::one() / gap - S::one()) * (S::one() / (scalar::<S>(2.0) * eps)).ln()
}

/// The exact total-variation mixing time from the worst starting state:
/// the first `t` with `max_x TV(P^t(x, .), mu) <= eps`.
pub fn mixing_time_exact<S: Scalar>(chain: &ExactChain<S>, eps: S) -> Result<usize> {
    if !(eps > S::zero()) || eps >= S::one() {
        return Err(Error::InvalidInput(
            "mixing threshold must lie in (0, 1)".into(),
        ));
    }
    let n = chain.n();
    let mu = chain.stationary();
    let half = scalar::<S>(0.5);
    let worst_tv = |power: &DMatrix<S>| -> S {
        let mut worst = S::zero();
        for x in 0..n {
            let tv: S = (0..n)
                .map(|y| (power[(x, y)] - mu[y]).abs())
                .sum::<S>()
                * half;
            if tv > worst {
                worst = tv;
            }
        }
        worst
    };
    let mut power = DMatrix::<S>::identity(n, n);
    for t in 0..=MIXING_STEP_CAP {
        if worst_tv(&power) <= eps {
            return Ok(t);
        }
        power *= chain.matrix();
    }
    Err(Error::Numerical(format!(
        "chain did not mix within {MIXING_STEP_CAP} steps"
    )))
}
