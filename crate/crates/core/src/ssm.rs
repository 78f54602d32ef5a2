//! Exact strong-spatial-mixing measurements: the total-variation response
//! of a target region's marginal to a single boundary-site change, the
//! exponential-decay fit of that response over distance, and exhaustive
//! scans of enumerable boxes.
//!
//! A scan of desk-sized boxes is evidence of decay, never a certificate:
//! the mixing condition itself quantifies over all boxes.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::geometry::LatticeCube;
use crate::measure::{gibbs_distribution, marginal, tv_distance, ExactMeasure};
use crate::model::{BoundaryCondition, Spin, SpinModel, System};
use crate::{scalar, scalar_usize, Error, Result, Scalar};

/// Samples with TV below this floor are excluded from the log fit.
pub const TV_FLOOR: f64 = 1e-12;

/// Distinct positive-TV distances needed before the decay fit is attempted.
pub const MIN_FIT_DISTANCES: usize = 3;

/// Boxes above this many vertices refuse the full subset scan.
pub const SUBSET_SCAN_LIMIT: usize = 9;

/// One exact spatial-mixing measurement: the TV distance between the
/// marginals on `target` induced by two boundary conditions that agree
/// everywhere except at one boundary site.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SSMSample<S: Scalar> {
    pub sides: Vec<usize>,
    pub target: Vec<usize>,
    /// Index of the differing site in the box's boundary-site list.
    pub site: usize,
    /// The two spins pinned at the differing site.
    pub spins: (Spin, Spin),
    /// L1 distance from the differing site to the target set.
    pub dist: usize,
    pub tv: S,
}

fn canonical_target(cube: &LatticeCube, target: &[usize]) -> Result<Vec<usize>> {
    if target.is_empty() {
        return Err(Error::InvalidInput("the target set is empty".into()));
    }
    let mut target = target.to_vec();
    target.sort_unstable();
    target.dedup();
    if let Some(&v) = target.last() {
        if v >= cube.len() {
            return Err(Error::InvalidInput(format!(
                "target vertex {v} is outside the box"
            )));
        }
    }
    Ok(target)
}

fn coord_l1(a: &[i64], b: &[i64]) -> usize {
    a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).sum::<u64>() as usize
}

fn sample_from_measures<S: Scalar>(
    cube: &LatticeCube,
    target: Vec<usize>,
    site: usize,
    spins: (Spin, Spin),
    p: &ExactMeasure<S>,
    p_u: &ExactMeasure<S>,
) -> Result<SSMSample<S>> {
    let tv = tv_distance(&marginal(p, &target)?, &marginal(p_u, &target)?)?;
    let u_coord = &cube.boundary()[site];
    let dist = target
        .iter()
        .map(|&v| coord_l1(cube.coord(v), u_coord))
        .min()
        .expect("the target is nonempty");
    debug_assert!(dist >= 1, "boundary sites sit outside the box");
    Ok(SSMSample {
        sides: cube.sides().to_vec(),
        target,
        site,
        spins,
        dist,
        tv,
    })
}

/// Exact TV distance between the marginals on `target` under a pair of
/// boundary conditions that agree everywhere except at boundary site
/// `site`, which both must pin (possibly to the same spin).
pub fn ssm_discrepancy<S: Scalar>(
    model: &SpinModel<S>,
    cube: &LatticeCube,
    target: &[usize],
    site: usize,
    psi: &BoundaryCondition,
    psi_u: &BoundaryCondition,
) -> Result<SSMSample<S>> {
    let boundary = cube.boundary();
    if site >= boundary.len() {
        return Err(Error::InvalidInput(format!(
            "boundary site {site} is out of range, the box has {}",
            boundary.len()
        )));
    }
    let u_coord = &boundary[site];
    let (Some(first), Some(second)) = (psi.get(u_coord), psi_u.get(u_coord)) else {
        return Err(Error::InvalidInput(
            "both boundary conditions must pin the differing site".into(),
        ));
    };
    for (c, _) in psi.assigned().iter().chain(psi_u.assigned()) {
        if c != u_coord && psi.get(c) != psi_u.get(c) {
            return Err(Error::InvalidInput(
                "the boundary pair differs away from the chosen site".into(),
            ));
        }
    }
    let target = canonical_target(cube, target)?;
    let p = gibbs_distribution(
        &System::free(model.clone(), cube.clone()).with_boundary(psi.clone())?,
    )?;
    let p_u = gibbs_distribution(
        &System::free(model.clone(), cube.clone()).with_boundary(psi_u.clone())?,
    )?;
    sample_from_measures(cube, target, site, (first, second), &p, &p_u)
}

/// Every single-site change of `base` crossed with every target: for each
/// boundary site pinned by `base` and each alternative spin there, the
/// exact TV response of each target's marginal.
pub fn ssm_scan<S: Scalar>(
    model: &SpinModel<S>,
    cube: &LatticeCube,
    base: &BoundaryCondition,
    targets: &[Vec<usize>],
) -> Result<Vec<SSMSample<S>>> {
    if targets.is_empty() {
        return Err(Error::InvalidInput("the scan needs at least one target".into()));
    }
    let targets: Vec<Vec<usize>> = targets
        .iter()
        .map(|t| canonical_target(cube, t))
        .collect::<Result<_>>()?;
    let q = model.q();
    let base_measure = gibbs_distribution(
        &System::free(model.clone(), cube.clone()).with_boundary(base.clone())?,
    )?;
    let mut samples = Vec::new();
    for (site, coord) in cube.boundary().iter().enumerate() {
        let Some(pinned) = base.get(coord) else {
            continue;
        };
        for s in 0..q as Spin {
            if s == pinned {
                continue;
            }
            let flipped = base.with_site(coord.clone(), s);
            let measure = gibbs_distribution(
                &System::free(model.clone(), cube.clone()).with_boundary(flipped)?,
            )?;
            for target in &targets {
                samples.push(sample_from_measures(
                    cube,
                    target.clone(),
                    site,
                    (pinned, s),
                    &base_measure,
                    &measure,
                )?);
            }
        }
    }
    Ok(samples)
}

/// The default scan targets: every singleton vertex set.
pub fn singleton_targets(cube: &LatticeCube) -> Vec<Vec<usize>> {
    (0..cube.len()).map(|v| vec![v]).collect()
}

/// Every nonempty vertex subset, for exhaustive scans of tiny boxes.
pub fn all_subset_targets(cube: &LatticeCube) -> Result<Vec<Vec<usize>>> {
    let n = cube.len();
    if n > SUBSET_SCAN_LIMIT {
        return Err(Error::Capacity(format!(
            "subset scans cover at most {SUBSET_SCAN_LIMIT} vertices, the box has {n}"
        )));
    }
    Ok((1..(1usize << n))
        .map(|mask| (0..n).filter(|v| mask >> v & 1 == 1).collect())
        .collect())
}

/// Pools samples into the maximum TV observed at each distance, ascending
/// in distance.
pub fn max_tv_profile<S: Scalar>(samples: &[SSMSample<S>]) -> Vec<(usize, S)> {
    let mut by_dist: BTreeMap<usize, S> = BTreeMap::new();
    for sample in samples {
        let slot = by_dist.entry(sample.dist).or_insert_with(S::zero);
        if sample.tv > *slot {
            *slot = sample.tv;
        }
    }
    by_dist.into_iter().collect()
}

/// How a decay fit ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FitStatus {
    /// Enough distance spread for a least-squares fit.
    Fitted,
    /// Every sample sat below the floor: decay unmeasurably fast.
    AllZero,
    /// Positive samples exist but cover too few distances.
    Undetermined,
}

/// Exponential-decay fit and envelope verdict for a batch of samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SSMFit<S: Scalar> {
    pub status: FitStatus,
    pub a_hat: Option<S>,
    pub b_hat: Option<S>,
    /// Root-mean-square residual of the log fit over the used samples.
    pub rms: Option<S>,
    pub used: usize,
    pub excluded: usize,
    /// Whether every sample, excluded ones included, sits under the
    /// supplied envelope `b * exp(-a * dist)`.
    pub pass: bool,
}

/// Fits `log tv = log b_hat - a_hat * dist` by least squares over the
/// samples with TV at least [`TV_FLOOR`] and checks the whole batch against
/// the supplied envelope.
///
/// All samples below the floor report `AllZero` (and pass any positive
/// envelope); fewer than [`MIN_FIT_DISTANCES`] distinct used distances
/// report `Undetermined`. The envelope verdict is evaluated either way.
pub fn ssm_fit<S: Scalar>(samples: &[SSMSample<S>], a: S, b: S) -> Result<SSMFit<S>> {
    if a <= S::zero() || b <= S::zero() {
        return Err(Error::InvalidInput(
            "the envelope needs a > 0 and b > 0".into(),
        ));
    }
    if samples.is_empty() {
        return Err(Error::InvalidInput("the fit needs at least one sample".into()));
    }
    let pass = samples
        .iter()
        .all(|s| s.tv <= b * (-a * scalar_usize::<S>(s.dist)).exp());
    let floor = scalar::<S>(TV_FLOOR);
    let used: Vec<&SSMSample<S>> = samples.iter().filter(|s| s.tv >= floor).collect();
    let excluded = samples.len() - used.len();
    if used.is_empty() {
        return Ok(SSMFit {
            status: FitStatus::AllZero,
            a_hat: None,
            b_hat: None,
            rms: None,
            used: 0,
            excluded,
            pass,
        });
    }
    let mut distances: Vec<usize> = used.iter().map(|s| s.dist).collect();
    distances.sort_unstable();
    distances.dedup();
    if distances.len() < MIN_FIT_DISTANCES {
        return Ok(SSMFit {
            status: FitStatus::Undetermined,
            a_hat: None,
            b_hat: None,
            rms: None,
            used: used.len(),
            excluded,
            pass,
        });
    }
    let m = scalar_usize::<S>(used.len());
    let sx: S = used.iter().map(|s| scalar_usize::<S>(s.dist)).sum();
    let sy: S = used.iter().map(|s| s.tv.ln()).sum();
    let sxx: S = used
        .iter()
        .map(|s| {
            let x = scalar_usize::<S>(s.dist);
            x * x
        })
        .sum();
    let sxy: S = used
        .iter()
        .map(|s| scalar_usize::<S>(s.dist) * s.tv.ln())
        .sum();
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let intercept = (sy - slope * sx) / m;
    let rss: S = used
        .iter()
        .map(|s| {
            let r = s.tv.ln() - (intercept + slope * scalar_usize::<S>(s.dist));
            r * r
        })
        .sum();
    Ok(SSMFit {
        status: FitStatus::Fitted,
        a_hat: Some(-slope),
        b_hat: Some(intercept.exp()),
        rms: Some((rss / m).sqrt()),
        used: used.len(),
        excluded,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    type Real = f64;

    fn square(side: usize) -> LatticeCube {
        LatticeCube::build(&[side, side]).unwrap()
    }

    fn synthetic(dist: usize, tv: Real) -> SSMSample<Real> {
        SSMSample {
            sides: vec![3, 3],
            target: vec![4],
            site: 0,
            spins: (0, 1),
            dist,
            tv,
        }
    }

    #[test]
    fn free_models_show_no_boundary_response() {
        let cube = square(3);
        let model: SpinModel<Real> = SpinModel::potts(3, 0.0, &[0.3, 0.0, -0.1]).unwrap();
        let base = BoundaryCondition::constant(&cube, 1);
        let samples = ssm_scan(&model, &cube, &base, &singleton_targets(&cube)).unwrap();
        assert_eq!(samples.len(), cube.boundary().len() * 2 * 9);
        for sample in &samples {
            assert_eq!(sample.tv, 0.0);
            assert!(sample.dist >= 1);
        }
        let fit = ssm_fit(&samples, 0.5, 1.0).unwrap();
        assert_eq!(fit.status, FitStatus::AllZero);
        assert!(fit.pass);
        assert_eq!(fit.excluded, samples.len());
        for (_, tv) in max_tv_profile(&samples) {
            assert_eq!(tv, 0.0);
        }
    }

    #[test]
    fn identical_pairs_have_zero_discrepancy() {
        let cube = square(3);
        let model: SpinModel<Real> = SpinModel::ising(0.7, 0.0);
        let psi = BoundaryCondition::constant(&cube, 1);
        let sample = ssm_discrepancy(&model, &cube, &[4], 0, &psi, &psi).unwrap();
        assert_eq!(sample.tv, 0.0);
        assert_eq!(sample.spins, (1, 1));
    }

    #[test]
    fn center_response_matches_a_brute_force_enumeration() {
        let cube = square(3);
        let model: SpinModel<Real> = SpinModel::ising(0.5, 0.0);
        let psi = BoundaryCondition::constant(&cube, 1);
        let corner = cube.boundary_neighbors(0)[0];
        let flipped = psi.with_site(cube.boundary()[corner].clone(), 0);
        let sample = ssm_discrepancy(&model, &cube, &[4], corner, &psi, &flipped).unwrap();

        let weight = |config: &[Spin], boundary: &BoundaryCondition| -> Real {
            let mut lw = 0.0;
            for &(a, b) in cube.edges() {
                lw += model
                    .edge_potential(config[a], config[b])
                    .expect("soft model");
            }
            for v in 0..cube.len() {
                lw += model.vertex_potential(config[v]).expect("soft model");
                for &b in cube.boundary_neighbors(v) {
                    let spin = boundary.get(&cube.boundary()[b]).expect("constant");
                    lw += model.edge_potential(config[v], spin).expect("soft model");
                }
            }
            lw.exp()
        };
        let mut center = [[0.0; 2]; 2];
        let mut totals = [0.0; 2];
        for rank in 0..512usize {
            let config: Vec<Spin> = (0..9).map(|v| (rank >> v & 1) as Spin).collect();
            for (which, boundary) in [&psi, &flipped].into_iter().enumerate() {
                let w = weight(&config, boundary);
                center[which][config[4] as usize] += w;
                totals[which] += w;
            }
        }
        let oracle = 0.5
            * ((center[0][0] / totals[0] - center[1][0] / totals[1]).abs()
                + (center[0][1] / totals[0] - center[1][1] / totals[1]).abs());
        assert!(oracle > 1e-4, "the flip must be felt at the center");
        assert_abs_diff_eq!(sample.tv, oracle, epsilon = 1e-12);
    }

    #[test]
    fn discrepancy_rejects_malformed_input() {
        let cube = square(3);
        let model: SpinModel<Real> = SpinModel::ising(0.4, 0.0);
        let psi = BoundaryCondition::constant(&cube, 1);
        let twice = psi
            .with_site(cube.boundary()[0].clone(), 0)
            .with_site(cube.boundary()[1].clone(), 0);
        match ssm_discrepancy(&model, &cube, &[4], 0, &psi, &twice) {
            Err(Error::InvalidInput(_)) => {}
            other => panic!("expected a pair rejection, got {other:?}"),
        }
        let free = BoundaryCondition::free();
        match ssm_discrepancy(&model, &cube, &[4], 0, &free, &free) {
            Err(Error::InvalidInput(_)) => {}
            other => panic!("expected a pinning rejection, got {other:?}"),
        }
        match ssm_discrepancy(&model, &cube, &[4], 99, &psi, &psi) {
            Err(Error::InvalidInput(_)) => {}
            other => panic!("expected a site rejection, got {other:?}"),
        }
        match ssm_discrepancy(&model, &cube, &[], 0, &psi, &psi) {
            Err(Error::InvalidInput(_)) => {}
            other => panic!("expected a target rejection, got {other:?}"),
        }
        match all_subset_targets(&square(4)) {
            Err(Error::Capacity(_)) => {}
            other => panic!("expected a capacity rejection, got {other:?}"),
        }
    }

    #[test]
    fn tv_is_symmetric_and_relabel_invariant_on_a_square() {
        let cube = square(3);
        let model: SpinModel<Real> = SpinModel::potts(3, 0.6, &[0.0; 3]).unwrap();
        let sites = cube.boundary().len();
        let mut table = vec![[[0.0; 3]; 3]; sites];
        for c in 0..3u8 {
            let base = BoundaryCondition::constant(&cube, c);
            for site in 0..sites {
                for s in 0..3u8 {
                    let flipped = base.with_site(cube.boundary()[site].clone(), s);
                    let forward =
                        ssm_discrepancy(&model, &cube, &[4], site, &base, &flipped).unwrap();
                    let backward =
                        ssm_discrepancy(&model, &cube, &[4], site, &flipped, &base).unwrap();
                    assert_eq!(forward.tv, backward.tv, "site {site} {c}->{s}");
                    table[site][c as usize][s as usize] = forward.tv;
                }
            }
        }
        let permutations = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for sigma in permutations {
            for site in 0..sites {
                for c in 0..3 {
                    for s in 0..3 {
                        assert_abs_diff_eq!(
                            table[site][c][s],
                            table[site][sigma[c]][sigma[s]],
                            epsilon = 1e-12
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn nested_targets_respond_monotonically() {
        let cube = square(3);
        let model: SpinModel<Real> = SpinModel::ising(0.5, 0.1);
        let psi = BoundaryCondition::constant(&cube, 1);
        let corner = 0usize;
        let flipped = psi.with_site(cube.boundary()[corner].clone(), 0);
        let p = gibbs_distribution(
            &System::free(model.clone(), cube.clone())
                .with_boundary(psi)
                .unwrap(),
        )
        .unwrap();
        let p_u = gibbs_distribution(
            &System::free(model.clone(), cube.clone())
                .with_boundary(flipped)
                .unwrap(),
        )
        .unwrap();
        let targets = all_subset_targets(&cube).unwrap();
        assert_eq!(targets.len(), 511);
        let mut tv = vec![0.0; 512];
        for target in &targets {
            let mask = target.iter().fold(0usize, |m, &v| m | 1 << v);
            tv[mask] =
                tv_distance(&marginal(&p, target).unwrap(), &marginal(&p_u, target).unwrap())
                    .unwrap();
        }
        for mask in 1..512usize {
            for v in 0..9 {
                if mask >> v & 1 == 0 {
                    assert!(
                        tv[mask] <= tv[mask | 1 << v] + 1e-12,
                        "target {mask:b} vs {v}"
                    );
                }
            }
        }
    }

    #[test]
    fn synthetic_decay_fits_exactly() {
        let samples: Vec<SSMSample<Real>> = (1..=6)
            .map(|d| synthetic(d, 0.5 * (-0.7 * d as Real).exp()))
            .collect();
        let fit = ssm_fit(&samples, 0.65, 0.5).unwrap();
        assert_eq!(fit.status, FitStatus::Fitted);
        assert_abs_diff_eq!(fit.a_hat.unwrap(), 0.7, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.b_hat.unwrap(), 0.5, epsilon = 1e-6);
        assert!(fit.rms.unwrap() < 1e-7);
        assert_eq!(fit.used, 6);
        assert!(fit.pass, "a shallower envelope dominates the decay");
        let strict = ssm_fit(&samples, 0.75, 0.5).unwrap();
        assert!(!strict.pass, "a steeper envelope is undercut at distance 1");
    }

    #[test]
    fn degenerate_batches_report_their_status() {
        let zeros: Vec<SSMSample<Real>> = (1..=4).map(|d| synthetic(d, 0.0)).collect();
        let fit = ssm_fit(&zeros, 2.0, 0.01).unwrap();
        assert_eq!(fit.status, FitStatus::AllZero);
        assert!(fit.pass);
        let narrow: Vec<SSMSample<Real>> =
            vec![synthetic(1, 0.2), synthetic(2, 0.1), synthetic(2, 0.08)];
        let fit = ssm_fit(&narrow, 1.0, 1.0).unwrap();
        assert_eq!(fit.status, FitStatus::Undetermined);
        assert!(fit.a_hat.is_none());
        assert!(fit.pass);
        match ssm_fit(&narrow, 0.0, 1.0) {
            Err(Error::InvalidInput(_)) => {}
            other => panic!("expected an envelope rejection, got {other:?}"),
        }
        match ssm_fit::<Real>(&[], 1.0, 1.0) {
            Err(Error::InvalidInput(_)) => {}
            other => panic!("expected an empty rejection, got {other:?}"),
        }
    }

    #[test]
    fn warm_square_scan_decays_with_distance() {
        let cube = square(3);
        let model: SpinModel<Real> = SpinModel::ising(0.4, 0.0);
        let base = BoundaryCondition::constant(&cube, 1);
        let samples = ssm_scan(&model, &cube, &base, &singleton_targets(&cube)).unwrap();
        assert_eq!(samples.len(), cube.boundary().len() * 9);
        let profile = max_tv_profile(&samples);
        assert!(profile.len() >= 3);
        for pair in profile.windows(2) {
            assert!(
                pair[1].1 <= pair[0].1 + 1e-12,
                "profile must not grow: {pair:?}"
            );
        }
        let fit = ssm_fit(&samples, 0.1, 1.0).unwrap();
        assert_eq!(fit.status, FitStatus::Fitted);
        assert!(fit.a_hat.unwrap() > 0.0, "the response must decay");
        let rerun = ssm_scan(&model, &cube, &base, &singleton_targets(&cube)).unwrap();
        assert_eq!(samples, rerun);
    }
}
