//! Coupled runs of the samplers: the shared-tape grand coupling that every
//! kernel supports, monotone sweeps driven by one uniform per site,
//! coupling-time estimation with bootstrap intervals, path-coupling
//! contraction estimates for the tiled dynamics, and per-vertex
//! disagreement frequencies with Wilson intervals.

use rand::Rng;
use serde::Serialize;

use crate::geometry::VertexOrdering;
use crate::kernels::Kernel;
use crate::model::{config_leq, Spin, SpinConfig, System};
use crate::sampler::{sample_site, Tape};
use crate::stream::{domain, StreamRng, Streams};
use crate::{scalar_usize, Error, Result, Scalar};

/// Resamples drawn when bootstrapping a confidence interval.
pub const BOOTSTRAP_RESAMPLES: usize = 1_000;

/// A coupled run is abandoned after this many steps per vertex.
pub const COUPLING_CAP_FACTOR: usize = 10_000;

/// The coupling time is the first step by which this share of the runs has
/// coalesced, so the remaining disagreement probability is at most 1/4.
pub const COUPLING_TIME_QUANTILE: f64 = 0.75;

/// Adjacent pairs are enumerated exhaustively when at most this many are
/// distinct, and this many are sampled with replacement beyond that.
pub const SAMPLED_PAIRS: usize = 1_000;

/// One-sided 99% normal quantile, for contraction upper confidence bounds.
pub const Z_99: f64 = 2.326_347_874_040_841;

/// Two-sided 95% normal quantile, for Wilson intervals.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Counts the sites where two configurations differ.
pub fn hamming_distance(x: &[Spin], y: &[Spin]) -> usize {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).filter(|(a, b)| a != b).count()
}

/// Advances both copies through one shared uniform tape, the grand coupling
/// of the kernel: equal states read equal randomness and stay equal, and
/// each copy alone moves by the kernel's own law.
pub fn coupled_step<S: Scalar>(
    kernel: &Kernel<S>,
    x: &mut SpinConfig,
    y: &mut SpinConfig,
    rng: &mut StreamRng,
) -> Result<()> {
    let tape = Tape::record(kernel.draw_bound(), rng);
    kernel.step_with(x, &mut tape.reader())?;
    kernel.step_with(y, &mut tape.reader())
}

/// One coupled trajectory: the Hamming disagreement after each step, up to
/// coalescence or the step cap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CouplingRun {
    pub hamming: Vec<usize>,
    pub coalesced_at: Option<usize>,
}

/// Runs the grand coupling until the copies meet, checking that a met pair
/// stays met for one further step. A run that exhausts `cap` steps reports
/// `coalesced_at: None` rather than failing.
pub fn coupled_run<S: Scalar>(
    kernel: &Kernel<S>,
    x0: &SpinConfig,
    y0: &SpinConfig,
    cap: usize,
    rng: &mut StreamRng,
) -> Result<CouplingRun> {
    let mut x = x0.clone();
    let mut y = y0.clone();
    let mut hamming = Vec::new();
    let mut coalesced_at = None;
    for step in 1..=cap {
        coupled_step(kernel, &mut x, &mut y, rng)?;
        let h = hamming_distance(&x, &y);
        hamming.push(h);
        if h == 0 {
            coalesced_at = Some(step);
            break;
        }
    }
    if coalesced_at.is_some() {
        coupled_step(kernel, &mut x, &mut y, rng)?;
        assert_eq!(
            hamming_distance(&x, &y),
            0,
            "coalescence must be absorbing"
        );
    }
    Ok(CouplingRun {
        hamming,
        coalesced_at,
    })
}

/// Empirical coupling time with a bootstrap confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingTimeReport {
    pub trials: usize,
    pub cap: usize,
    pub timed_out: usize,
    pub quantile: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean: f64,
}

/// Estimates the coupling time as the empirical 75% quantile of coalescence
/// steps over independent coupled runs, each on its own substream, with a
/// 95% percentile-bootstrap interval from [`BOOTSTRAP_RESAMPLES`] resamples.
///
/// Runs still apart after [`COUPLING_CAP_FACTOR`] steps per vertex enter
/// the sample at the cap and are counted in `timed_out`, biasing the
/// estimate downward instead of aborting it.
pub fn coupling_time<S: Scalar>(
    kernel: &Kernel<S>,
    x0: &SpinConfig,
    y0: &SpinConfig,
    trials: usize,
    streams: &Streams,
) -> Result<CouplingTimeReport> {
    let cap = COUPLING_CAP_FACTOR.saturating_mul(kernel.system().cube().len());
    let runs = coupled_trials(kernel, x0, y0, trials, cap, streams)?;
    coupling_time_report(&runs, cap, streams)
}

/// Summarizes already-collected coupled runs into a coupling-time report,
/// treating runs without coalescence as censored at `cap`.
pub fn coupling_time_report(
    runs: &[TrialRun],
    cap: usize,
    streams: &Streams,
) -> Result<CouplingTimeReport> {
    if runs.is_empty() {
        return Err(Error::InvalidInput(
            "the coupling time needs at least one trial".into(),
        ));
    }
    let trials = runs.len();
    let mut times = Vec::with_capacity(trials);
    let mut timed_out = 0usize;
    for run in runs {
        times.push(match run.run.coalesced_at {
            Some(t) => t as f64,
            None => {
                timed_out += 1;
                cap as f64
            }
        });
    }
    let mean = times.iter().sum::<f64>() / trials as f64;
    times.sort_by(f64::total_cmp);
    let quantile = empirical_quantile(&times, COUPLING_TIME_QUANTILE);
    let mut boot = streams.stream(domain::BOOTSTRAP, 0);
    let mut resampled = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut sample = vec![0.0; trials];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for slot in sample.iter_mut() {
            *slot = times[boot.random_range(0..trials)];
        }
        sample.sort_by(f64::total_cmp);
        resampled.push(empirical_quantile(&sample, COUPLING_TIME_QUANTILE));
    }
    resampled.sort_by(f64::total_cmp);
    let ci_low = empirical_quantile(&resampled, 0.025);
    let ci_high = empirical_quantile(&resampled, 0.975);
    Ok(CouplingTimeReport {
        trials,
        cap,
        timed_out,
        quantile,
        ci_low,
        ci_high,
        mean,
    })
}

/// Smallest sample value with at least a `frac` share of the sample at or
/// below it.
fn empirical_quantile(sorted: &[f64], frac: f64) -> f64 {
    let len = sorted.len();
    let idx = ((len as f64 * frac).ceil() as usize).clamp(1, len) - 1;
    sorted[idx]
}

/// The all-top and all-bottom configurations of a monotone model.
pub fn extremal_pair<S: Scalar>(system: &System<S>) -> Result<(SpinConfig, SpinConfig)> {
    if !system.model().has_monotone_order() {
        return Err(Error::UnsupportedModel(
            "extremal starts need a monotone spin order".into(),
        ));
    }
    let order = system.model().spin_order();
    let n = system.cube().len();
    Ok((vec![*order.last().expect("q >= 1"); n], vec![order[0]; n]))
}

/// One coupled systematic sweep of an ordered pair of copies: every site
/// reads the same uniform through its two conditional quantile functions,
/// which for a monotone model preserves the partial order.
///
/// Starts from `x` above `y` pointwise and asserts the order again after
/// the sweep.
pub fn monotone_coupled_sweep<S: Scalar>(
    system: &System<S>,
    order: &VertexOrdering,
    x: &mut SpinConfig,
    y: &mut SpinConfig,
    rng: &mut StreamRng,
) -> Result<()> {
    if !config_leq(system.model(), y, x)? {
        return Err(Error::InvalidInput(
            "the monotone sweep starts from an ordered pair, upper copy first".into(),
        ));
    }
    for &v in order.order() {
        let u = rng.random::<f64>();
        x[v] = sample_site(system, v, x, u)?;
        y[v] = sample_site(system, v, y, u)?;
    }
    assert!(
        config_leq(system.model(), y, x)?,
        "the quantile coupling must preserve the monotone order"
    );
    Ok(())
}

/// Wilson score interval for a binomial rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WilsonInterval {
    pub successes: usize,
    pub trials: usize,
    pub rate: f64,
    pub low: f64,
    pub high: f64,
}

/// Wilson score interval at normal quantile `z`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> WilsonInterval {
    assert!(trials > 0, "a rate needs at least one trial");
    assert!(successes <= trials, "more successes than trials");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    WilsonInterval {
        successes,
        trials,
        rate: p,
        low: (center - half).max(0.0),
        high: (center + half).min(1.0),
    }
}

/// Per-vertex disagreement frequencies of the monotone sweep coupling from
/// the extremal starts, with Wilson 95% intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisagreementReport {
    pub sweeps: usize,
    pub trials: usize,
    pub per_vertex: Vec<WilsonInterval>,
    pub max_rate: f64,
    pub max_upper: f64,
}

/// Runs `trials` monotone coupled trajectories of `sweeps` systematic
/// sweeps from the extremal starts and reports how often each vertex still
/// disagrees, one substream per trial.
pub fn disagreement_probability<S: Scalar>(
    system: &System<S>,
    order: &VertexOrdering,
    sweeps: usize,
    trials: usize,
    streams: &Streams,
) -> Result<DisagreementReport> {
    if trials == 0 {
        return Err(Error::InvalidInput(
            "disagreement rates need at least one trial".into(),
        ));
    }
    let (top, bottom) = extremal_pair(system)?;
    let n = top.len();
    let mut counts = vec![0usize; n];
    for trial in 0..trials {
        let mut rng = streams.stream(domain::TRIAL, trial as u64);
        let mut x = top.clone();
        let mut y = bottom.clone();
        for _ in 0..sweeps {
            monotone_coupled_sweep(system, order, &mut x, &mut y, &mut rng)?;
        }
        for (v, count) in counts.iter_mut().enumerate() {
            if x[v] != y[v] {
                *count += 1;
            }
        }
    }
    let per_vertex: Vec<WilsonInterval> = counts
        .iter()
        .map(|&c| wilson_interval(c, trials, Z_95))
        .collect();
    let max_rate = per_vertex.iter().map(|w| w.rate).fold(0.0, f64::max);
    let max_upper = per_vertex.iter().map(|w| w.high).fold(0.0, f64::max);
    Ok(DisagreementReport {
        sweeps,
        trials,
        per_vertex,
        max_rate,
        max_upper,
    })
}

/// Worst-case one-step contraction estimate over pairs differing at a
/// single site.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub pairs: usize,
    pub trials: usize,
    pub exhaustive: bool,
    pub worst_mean: f64,
    pub worst_upper: f64,
    pub mean: f64,
}

/// Estimates the expected Hamming distance after one coupled step from a
/// pair differing at a single site, maximized over discrepancies.
///
/// Every (site, spin pair) discrepancy is enumerated when at most
/// [`SAMPLED_PAIRS`] are distinct, concentrating the per-pair trial budget;
/// beyond that, [`SAMPLED_PAIRS`] discrepancies are sampled with
/// replacement. The surrounding sites are drawn uniformly afresh each
/// trial, which is why hard-constraint models are rejected. The shared tape
/// couples the copies, so a block whose exterior misses the discrepancy
/// resamples identically while a block that sees it reads the same uniforms
/// through its two conditionals. `worst_upper` adds a one-sided 99% normal
/// bound to the worst pair's mean; `mean` averages over all pairs.
pub fn path_coupling_contraction<S: Scalar>(
    kernel: &Kernel<S>,
    trials: usize,
    streams: &Streams,
) -> Result<ContractionReport> {
    if trials == 0 {
        return Err(Error::InvalidInput(
            "the contraction estimate needs at least one trial".into(),
        ));
    }
    let system = kernel.system();
    if system.model().has_hard_constraints() {
        return Err(Error::UnsupportedModel(
            "contraction sampling draws uniform surroundings, which hard constraints forbid"
                .into(),
        ));
    }
    let n = system.cube().len();
    let q = system.model().q();
    if q < 2 {
        return Err(Error::InvalidInput(
            "adjacent pairs need at least two spin values".into(),
        ));
    }
    let distinct = n * (q * (q - 1) / 2);
    let exhaustive = distinct <= SAMPLED_PAIRS;
    let pairs: Vec<(usize, Spin, Spin)> = if exhaustive {
        let mut out = Vec::new();
        for v in 0..n {
            for a in 0..q {
                for b in (a + 1)..q {
                    out.push((v, a as Spin, b as Spin));
                }
            }
        }
        out
    } else {
        let mut rng = streams.stream(domain::PAIR, 0);
        (0..SAMPLED_PAIRS)
            .map(|_| {
                let v = rng.random_range(0..n);
                let a = rng.random_range(0..q);
                let mut b = rng.random_range(0..q - 1);
                if b >= a {
                    b += 1;
                }
                (v, a as Spin, b as Spin)
            })
            .collect()
    };
    let mut worst_mean = 0.0f64;
    let mut worst_upper = 0.0f64;
    let mut total = 0.0f64;
    for (index, &(v, a, b)) in pairs.iter().enumerate() {
        let mut rng = streams.stream(domain::PAIR, 1 + index as u64);
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        for _ in 0..trials {
            let mut x: SpinConfig = (0..n).map(|_| rng.random_range(0..q) as Spin).collect();
            x[v] = a;
            let mut y = x.clone();
            y[v] = b;
            coupled_step(kernel, &mut x, &mut y, &mut rng)?;
            let h = hamming_distance(&x, &y) as f64;
            sum += h;
            sum_sq += h * h;
        }
        let mean = sum / trials as f64;
        let variance = if trials > 1 {
            ((sum_sq - sum * sum / trials as f64) / (trials - 1) as f64).max(0.0)
        } else {
            0.0
        };
        let upper = mean + Z_99 * (variance / trials as f64).sqrt();
        total += mean;
        worst_mean = worst_mean.max(mean);
        worst_upper = worst_upper.max(upper);
    }
    Ok(ContractionReport {
        pairs: pairs.len(),
        trials,
        exhaustive,
        worst_mean,
        worst_upper,
        mean: total / pairs.len() as f64,
    })
}

/// Exact expected one-step disagreement of a coupled tiled kernel from a
/// pair differing at `v`, for models with no edge interaction.
///
/// With every edge potential zero, each block's conditional law ignores its
/// exterior, so the shared tape updates both copies identically on every
/// covered cube: the discrepancy is erased exactly when the chosen tiling
/// covers `v` and survives alone otherwise, whatever the surrounding
/// configuration.
pub fn exact_independent_contraction<S: Scalar>(kernel: &Kernel<S>, v: usize) -> Result<S> {
    let system = kernel.system();
    let model = system.model();
    for a in 0..model.q() {
        for b in 0..model.q() {
            if model.edge_potential(a as Spin, b as Spin) != Some(S::zero()) {
                return Err(Error::UnsupportedModel(
                    "the exact contraction needs vanishing edge interaction".into(),
                ));
            }
        }
    }
    let family = kernel.tiling_family().ok_or_else(|| {
        Error::InvalidInput("the exact contraction is for tiled kernels".into())
    })?;
    if v >= system.cube().len() {
        return Err(Error::InvalidInput(
            "the discrepancy site is outside the box".into(),
        ));
    }
    Ok(S::one() - scalar_usize::<S>(family.membership_count(v)) / scalar_usize::<S>(family.len()))
}

/// A coupled trajectory paired with its trial index, the unit of the CSV
/// trajectory log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrialRun {
    pub trial: usize,
    pub run: CouplingRun,
}

/// Collects full coupled trajectories, one substream per trial, for
/// trajectory-level logging.
pub fn coupled_trials<S: Scalar>(
    kernel: &Kernel<S>,
    x0: &SpinConfig,
    y0: &SpinConfig,
    trials: usize,
    cap: usize,
    streams: &Streams,
) -> Result<Vec<TrialRun>> {
    (0..trials)
        .map(|trial| {
            let mut rng = streams.stream(domain::TRIAL, trial as u64);
            Ok(TrialRun {
                trial,
                run: coupled_run(kernel, x0, y0, cap, &mut rng)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LatticeCube;
    use crate::model::{BoundaryCondition, SpinModel};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    type Real = f64;

    fn ising_system(sides: &[usize], beta: f64, field: f64) -> Arc<System<Real>> {
        let cube = LatticeCube::build(sides).unwrap();
        Arc::new(System::free(SpinModel::ising(beta, field), cube))
    }

    fn potts_system(sides: &[usize], q: usize, beta: f64) -> Arc<System<Real>> {
        let cube = LatticeCube::build(sides).unwrap();
        Arc::new(System::free(
            SpinModel::potts(q, beta, &vec![0.0; q]).unwrap(),
            cube,
        ))
    }

    #[test]
    fn equal_copies_stay_equal_under_every_kernel() {
        let streams = Streams::new(11);
        let strip = ising_system(&[7], 0.5, 0.1);
        let pair = potts_system(&[2], 2, 0.6);
        let kernels: Vec<Kernel<Real>> = vec![
            Kernel::glauber(strip.clone()),
            Kernel::tiled_heat_bath(strip.clone(), 3).unwrap(),
            Kernel::even_odd_scan(strip.clone()).unwrap(),
            Kernel::sw(pair.clone()).unwrap(),
            Kernel::tiled_isolated_sw(potts_system(&[5], 3, 0.4), 3).unwrap(),
        ];
        for (i, kernel) in kernels.iter().enumerate() {
            let n = kernel.system().cube().len();
            let q = kernel.system().model().q();
            let mut rng = streams.stream(domain::CHAIN, i as u64);
            let mut x: SpinConfig = (0..n).map(|_| rng.random_range(0..q) as Spin).collect();
            let mut y = x.clone();
            for _ in 0..50 {
                coupled_step(kernel, &mut x, &mut y, &mut rng).unwrap();
                assert_eq!(x, y, "{}", kernel.name());
            }
        }
    }

    #[test]
    fn coupled_marginals_follow_the_kernel_row() {
        let streams = Streams::new(23);
        let checks: Vec<(Kernel<Real>, SpinConfig, SpinConfig)> = vec![
            (
                Kernel::glauber(ising_system(&[3], 0.6, 0.2)),
                vec![0, 0, 1],
                vec![1, 0, 0],
            ),
            (
                Kernel::sw(potts_system(&[2], 2, 0.7)).unwrap(),
                vec![0, 1],
                vec![1, 1],
            ),
        ];
        let trials = 200_000usize;
        for (which, (kernel, x0, y0)) in checks.into_iter().enumerate() {
            let chain = kernel.exact_matrix().unwrap();
            let space = chain.space().unwrap().clone();
            let mut count_x = vec![0usize; space.len()];
            let mut count_y = vec![0usize; space.len()];
            let mut rng = streams.stream(domain::CHAIN, which as u64);
            for _ in 0..trials {
                let mut x = x0.clone();
                let mut y = y0.clone();
                coupled_step(&kernel, &mut x, &mut y, &mut rng).unwrap();
                count_x[space.index_of(&x).unwrap()] += 1;
                count_y[space.index_of(&y).unwrap()] += 1;
            }
            let row_x = space.index_of(&x0).unwrap();
            let row_y = space.index_of(&y0).unwrap();
            for j in 0..space.len() {
                for (counts, row) in [(&count_x, row_x), (&count_y, row_y)] {
                    let expected = chain.transition(row, j);
                    let observed = counts[j] as f64 / trials as f64;
                    let sigma = (expected * (1.0 - expected) / trials as f64).sqrt();
                    assert!(
                        (observed - expected).abs() <= 4.0 * sigma + 2.0 / trials as f64,
                        "{} state {j}: {observed} vs {expected}",
                        kernel.name()
                    );
                }
            }
        }
    }

    #[test]
    fn infinite_temperature_scan_coalesces_in_one_sweep() {
        let system = ising_system(&[5], 0.0, 0.3);
        let kernel = Kernel::even_odd_scan(system.clone()).unwrap();
        let (top, bottom) = extremal_pair(system.as_ref()).unwrap();
        let streams = Streams::new(5);
        for trial in 0..50 {
            let mut rng = streams.stream(domain::TRIAL, trial);
            let run = coupled_run(&kernel, &top, &bottom, 10, &mut rng).unwrap();
            assert_eq!(run.coalesced_at, Some(1));
        }
        let report = coupling_time(&kernel, &top, &bottom, 200, &streams).unwrap();
        assert_eq!(report.quantile, 1.0);
        assert_eq!(report.ci_low, 1.0);
        assert_eq!(report.ci_high, 1.0);
        assert_eq!(report.mean, 1.0);
        assert_eq!(report.timed_out, 0);
    }

    #[test]
    fn free_glauber_couples_at_the_coupon_collector_rate() {
        let system = ising_system(&[4], 0.0, 0.0);
        let kernel = Kernel::glauber(system.clone());
        let (top, bottom) = extremal_pair(system.as_ref()).unwrap();
        let streams = Streams::new(7);
        let trials = 20_000;
        let report = coupling_time(&kernel, &top, &bottom, trials, &streams).unwrap();
        let collector_mean = 25.0 / 3.0;
        let collector_sd = (4.0 / 9.0 + 2.0 + 12.0f64).sqrt();
        let band = 4.0 * collector_sd / (trials as f64).sqrt();
        assert!(
            (report.mean - collector_mean).abs() <= band,
            "mean {} vs {collector_mean}",
            report.mean
        );
        assert_eq!(report.timed_out, 0);
        assert!(report.ci_low <= report.quantile && report.quantile <= report.ci_high);
    }

    #[test]
    fn monotone_sweep_preserves_order_and_coalesces() {
        let system = ising_system(&[3, 3], 0.3, 0.0);
        let order = VertexOrdering::even_odd(system.cube());
        let (top, bottom) = extremal_pair(system.as_ref()).unwrap();
        let streams = Streams::new(31);
        for trial in 0..40 {
            let mut rng = streams.stream(domain::TRIAL, trial);
            let mut x = top.clone();
            let mut y = bottom.clone();
            let mut met = None;
            for sweep in 1..=500 {
                monotone_coupled_sweep(system.as_ref(), &order, &mut x, &mut y, &mut rng)
                    .unwrap();
                if x == y {
                    met = Some(sweep);
                    break;
                }
            }
            let met = met.expect("a warm small square couples quickly");
            for _ in 0..3 {
                monotone_coupled_sweep(system.as_ref(), &order, &mut x, &mut y, &mut rng)
                    .unwrap();
                assert_eq!(x, y, "trial {trial} after sweep {met}");
            }
        }
    }

    #[test]
    fn monotone_sweep_rejects_bad_inputs() {
        let potts = potts_system(&[4], 3, 0.4);
        let order = VertexOrdering::lexicographic(potts.cube());
        let mut x: SpinConfig = vec![2; 4];
        let mut y: SpinConfig = vec![0; 4];
        let mut rng = Streams::new(1).stream(domain::TRIAL, 0);
        match monotone_coupled_sweep(potts.as_ref(), &order, &mut x, &mut y, &mut rng) {
            Err(Error::UnsupportedModel(_)) => {}
            other => panic!("expected a model rejection, got {other:?}"),
        }
        let ising = ising_system(&[4], 0.3, 0.0);
        let order = VertexOrdering::lexicographic(ising.cube());
        let mut x: SpinConfig = vec![0; 4];
        let mut y: SpinConfig = vec![1; 4];
        match monotone_coupled_sweep(ising.as_ref(), &order, &mut x, &mut y, &mut rng) {
            Err(Error::InvalidInput(_)) => {}
            other => panic!("expected an order rejection, got {other:?}"),
        }
    }

    #[test]
    fn disagreement_rates_start_at_one_and_vanish_at_infinite_temperature() {
        let streams = Streams::new(3);
        let system = ising_system(&[2, 2], 0.4, 0.0);
        let order = VertexOrdering::even_odd(system.cube());
        let at_start = disagreement_probability(system.as_ref(), &order, 0, 50, &streams).unwrap();
        assert_eq!(at_start.max_rate, 1.0);
        for w in &at_start.per_vertex {
            assert_eq!(w.rate, 1.0);
            assert!(w.low < 1.0);
            assert_eq!(w.high, 1.0);
        }
        let free = ising_system(&[2, 2], 0.0, 0.2);
        let after_one = disagreement_probability(free.as_ref(), &order, 1, 50, &streams).unwrap();
        assert_eq!(after_one.max_rate, 0.0);
        assert!(after_one.max_upper < 0.1);
    }

    #[test]
    fn disagreement_rates_decay_on_a_warm_square() {
        let streams = Streams::new(17);
        let system = ising_system(&[4, 4], 0.3, 0.0);
        let order = VertexOrdering::even_odd(system.cube());
        let early = disagreement_probability(system.as_ref(), &order, 1, 400, &streams).unwrap();
        let late = disagreement_probability(system.as_ref(), &order, 6, 400, &streams).unwrap();
        assert!(
            late.max_rate < early.max_rate,
            "{} vs {}",
            late.max_rate,
            early.max_rate
        );
        assert_eq!(early.per_vertex.len(), 16);
    }

    #[test]
    fn contraction_is_exact_without_interaction() {
        let system = ising_system(&[7], 0.0, 0.2);
        let heat_bath = Kernel::tiled_heat_bath(system.clone(), 3).unwrap();
        for v in 0..7 {
            let exact = exact_independent_contraction(&heat_bath, v).unwrap();
            assert_abs_diff_eq!(exact, 0.5, epsilon = 1e-15);
        }
        let potts = potts_system(&[5], 2, 0.0);
        let isolated = Kernel::tiled_isolated_sw(potts, 3).unwrap();
        for v in 0..5 {
            let exact = exact_independent_contraction(&isolated, v).unwrap();
            assert_abs_diff_eq!(exact, 0.5, epsilon = 1e-15);
        }
        let streams = Streams::new(29);
        let report = path_coupling_contraction(&heat_bath, 400, &streams).unwrap();
        assert!(report.exhaustive);
        assert_eq!(report.pairs, 7);
        assert_abs_diff_eq!(report.mean, 0.5, epsilon = 0.05);
        assert_abs_diff_eq!(report.worst_mean, 0.5, epsilon = 0.08);
    }

    #[test]
    fn exact_contraction_rejects_interacting_or_untiled_kernels() {
        let warm = ising_system(&[7], 0.3, 0.0);
        let tiled = Kernel::tiled_heat_bath(warm.clone(), 3).unwrap();
        match exact_independent_contraction(&tiled, 0) {
            Err(Error::UnsupportedModel(_)) => {}
            other => panic!("expected a model rejection, got {other:?}"),
        }
        let free = ising_system(&[7], 0.0, 0.0);
        match exact_independent_contraction(&Kernel::glauber(free), 0) {
            Err(Error::InvalidInput(_)) => {}
            other => panic!("expected a kernel rejection, got {other:?}"),
        }
    }

    #[test]
    fn contraction_shrinks_for_the_tiled_chain_on_a_warm_strip() {
        let system = ising_system(&[7], 0.15, 0.0);
        let kernel = Kernel::tiled_heat_bath(system, 3).unwrap();
        let streams = Streams::new(41);
        let report = path_coupling_contraction(&kernel, 600, &streams).unwrap();
        assert!(report.worst_upper < 1.0, "upper {}", report.worst_upper);
        assert!(report.worst_mean >= report.mean);
    }

    #[test]
    fn contraction_validates_its_inputs() {
        let hard = {
            let cube = LatticeCube::build(&[4]).unwrap();
            Arc::new(System::free(SpinModel::hard_core(1.0).unwrap(), cube))
        };
        let streams = Streams::new(2);
        match path_coupling_contraction(&Kernel::glauber(hard), 10, &streams) {
            Err(Error::UnsupportedModel(_)) => {}
            other => panic!("expected a model rejection, got {other:?}"),
        }
        let soft = ising_system(&[4], 0.2, 0.0);
        match path_coupling_contraction(&Kernel::glauber(soft), 0, &streams) {
            Err(Error::InvalidInput(_)) => {}
            other => panic!("expected a trial rejection, got {other:?}"),
        }
    }

    #[test]
    fn coupling_time_reports_timeouts_without_failing() {
        let system = ising_system(&[2], 0.4, 0.0);
        let identity = Kernel::composition(system.clone(), vec![]).unwrap();
        let (top, bottom) = extremal_pair(system.as_ref()).unwrap();
        let streams = Streams::new(9);
        let report = coupling_time(&identity, &top, &bottom, 3, &streams).unwrap();
        assert_eq!(report.timed_out, 3);
        assert_eq!(report.cap, 20_000);
        assert_eq!(report.quantile, 20_000.0);
    }

    #[test]
    fn coalescence_boosts_like_a_quarter_power() {
        let system = ising_system(&[2, 2], 0.35, 0.0);
        let kernel = Kernel::even_odd_scan(system.clone()).unwrap();
        let (top, bottom) = extremal_pair(system.as_ref()).unwrap();
        let measure = Streams::new(51);
        let trials = 2_000;
        let report = coupling_time(&kernel, &top, &bottom, trials, &measure).unwrap();
        let t = report.quantile.ceil() as usize;
        let fresh = Streams::new(52);
        for k in 1..=2usize {
            let mut open = 0usize;
            for trial in 0..trials {
                let mut rng = fresh.stream(domain::TRIAL, (k * trials + trial) as u64);
                let run = coupled_run(&kernel, &top, &bottom, k * t, &mut rng).unwrap();
                if run.coalesced_at.is_none() {
                    open += 1;
                }
            }
            let bound = 0.25f64.powi(k as i32);
            let sigma = (bound * (1.0 - bound) / trials as f64).sqrt();
            assert!(
                open as f64 / trials as f64 <= bound + 3.0 * sigma,
                "k={k}: {} vs {bound}",
                open as f64 / trials as f64
            );
        }
    }

    #[test]
    fn wilson_intervals_bracket_the_rate() {
        let none = wilson_interval(0, 40, Z_95);
        assert_eq!(none.low, 0.0);
        assert!(none.high > 0.0 && none.high < 0.2);
        let all = wilson_interval(40, 40, Z_95);
        assert_eq!(all.high, 1.0);
        assert!(all.low > 0.8 && all.low < 1.0);
        let half = wilson_interval(20, 40, Z_95);
        assert!(half.low < 0.5 && half.high > 0.5);
        assert_abs_diff_eq!(half.low + half.high, 1.0, epsilon = 1e-12);
        let wide = wilson_interval(5, 10, Z_95);
        assert!(wide.high - wide.low > half.high - half.low);
    }

    #[test]
    fn coupled_runs_are_deterministic_for_a_fixed_seed() {
        let system = ising_system(&[3, 3], 0.3, 0.1);
        let kernel = Kernel::tiled_heat_bath(system.clone(), 3).unwrap();
        let (top, bottom) = extremal_pair(system.as_ref()).unwrap();
        let first = coupling_time(&kernel, &top, &bottom, 60, &Streams::new(77)).unwrap();
        let second = coupling_time(&kernel, &top, &bottom, 60, &Streams::new(77)).unwrap();
        assert_eq!(first, second);
        let runs_a = coupled_trials(&kernel, &top, &bottom, 5, 400, &Streams::new(78)).unwrap();
        let runs_b = coupled_trials(&kernel, &top, &bottom, 5, 400, &Streams::new(78)).unwrap();
        assert_eq!(runs_a, runs_b);
        assert!(runs_a.iter().all(|r| r.run.coalesced_at.is_some()));
    }

    #[test]
    fn boundary_conditions_enter_the_coupled_conditionals() {
        let cube = LatticeCube::build(&[3]).unwrap();
        let plus = BoundaryCondition::constant(&cube, 1);
        let system = Arc::new(
            System::free(SpinModel::ising(0.8, 0.0), cube)
                .with_boundary(plus)
                .unwrap(),
        );
        let order = VertexOrdering::lexicographic(system.cube());
        let streams = Streams::new(13);
        let report =
            disagreement_probability(system.as_ref(), &order, 12, 300, &streams).unwrap();
        assert!(
            report.max_rate < 0.35,
            "a strong plus boundary should pull the copies together, got {}",
            report.max_rate
        );
    }
}
