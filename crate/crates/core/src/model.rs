//! Nearest-neighbor spin models on lattice boxes: symmetric edge potentials,
//! vertex potentials, hard constraints, boundary conditions, Hamiltonians,
//! permissivity checks, and the coordinatewise partial order used by
//! monotone couplings.

use std::sync::Arc;

use crate::geometry::{Coord, LatticeCube};
use crate::{Error, Result, Scalar};

/// A spin value; spins live in `0..q`.
pub type Spin = u8;

/// Full assignment of spins to the vertices of a box, indexed like the box.
pub type SpinConfig = Vec<Spin>;

/// Energy of a configuration; `Infinite` marks a violated hard constraint.
/// Keeping the marker explicit means no arithmetic on infinities anywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Energy<S> {
    Finite(S),
    Infinite,
}

impl<S: Scalar> Energy<S> {
    pub fn is_finite(&self) -> bool {
        matches!(self, Energy::Finite(_))
    }

    pub fn finite(&self) -> Option<S> {
        match self {
            Energy::Finite(h) => Some(*h),
            Energy::Infinite => None,
        }
    }

    /// `-H` for finite energies; forbidden configurations have no weight.
    pub fn log_weight(&self) -> Option<S> {
        self.finite().map(|h| -h)
    }
}

/// A spin system given by a symmetric edge potential `U`, a vertex potential
/// `W`, and optionally a total order on spins making the system monotone.
///
/// `None` entries are hard constraints (forbidden spin pairs or values).
/// The Hamiltonian of a configuration `s` with boundary condition `psi` is
/// `-sum_edges U(s_u, s_v) - sum_boundary U(psi_b, s_v) - sum_v W(s_v)`, so
/// larger potentials mean more likely.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinModel<S> {
    q: usize,
    edge: Vec<Option<S>>,
    vertex: Vec<Option<S>>,
    monotone_rank: Option<Vec<usize>>,
}

impl<S: Scalar> SpinModel<S> {
    /// Builds a model from explicit potential tables.
    ///
    /// `edge` must be a symmetric `q x q` table; `monotone_order`, when
    /// given, lists all spins from smallest to largest.
    pub fn new(
        edge: Vec<Vec<Option<S>>>,
        vertex: Vec<Option<S>>,
        monotone_order: Option<Vec<Spin>>,
    ) -> Result<Self> {
        let q = vertex.len();
        if q == 0 || q > 128 {
            return Err(Error::InvalidInput(format!(
                "spin count must be in 1..=128, got {q}"
            )));
        }
        if edge.len() != q || edge.iter().any(|row| row.len() != q) {
            return Err(Error::InvalidInput(format!(
                "edge potential must be a {q} x {q} table"
            )));
        }
        for a in 0..q {
            for b in 0..a {
                if edge[a][b] != edge[b][a] {
                    return Err(Error::InvalidInput(format!(
                        "edge potential must be symmetric, differs at ({a}, {b})"
                    )));
                }
            }
        }
        let monotone_rank = match monotone_order {
            None => None,
            Some(order) => {
                let mut rank = vec![usize::MAX; q];
                if order.len() != q {
                    return Err(Error::InvalidInput(
                        "monotone order must list every spin exactly once".into(),
                    ));
                }
                for (r, &s) in order.iter().enumerate() {
                    if (s as usize) >= q || rank[s as usize] != usize::MAX {
                        return Err(Error::InvalidInput(
                            "monotone order must list every spin exactly once".into(),
                        ));
                    }
                    rank[s as usize] = r;
                }
                Some(rank)
            }
        };
        let flat = edge.into_iter().flatten().collect();
        Ok(SpinModel {
            q,
            edge: flat,
            vertex,
            monotone_rank,
        })
    }

    /// Ferromagnetic (or, for `beta < 0`, antiferromagnetic) q-state Potts
    /// model: `U(a, b) = beta * [a == b]`, `W(s) = beta * fields[s]`.
    pub fn potts(q: usize, beta: S, fields: &[S]) -> Result<Self> {
        if fields.len() != q {
            return Err(Error::InvalidInput(format!(
                "need {q} field entries, got {}",
                fields.len()
            )));
        }
        let edge = (0..q)
            .map(|a| {
                (0..q)
                    .map(|b| Some(if a == b { beta } else { S::zero() }))
                    .collect()
            })
            .collect();
        let vertex = fields.iter().map(|&h| Some(beta * h)).collect();
        let order = if q == 2 { Some(vec![0, 1]) } else { None };
        SpinModel::new(edge, vertex, order)
    }

    /// Two-state Potts with external field `h`: spin 1 is "plus" and gets
    /// vertex potential `beta * h`, spin 0 gets `-beta * h`.
    pub fn ising(beta: S, h: S) -> Self {
        SpinModel::potts(2, beta, &[-h, h]).expect("ising preset is well-formed")
    }

    /// Hard-core gas at fugacity `lambda`: spin 1 is "occupied", adjacent
    /// occupied pairs are forbidden, and `W(1) = ln(lambda)`.
    pub fn hard_core(lambda: S) -> Result<Self> {
        if lambda <= S::zero() {
            return Err(Error::InvalidInput("fugacity must be positive".into()));
        }
        let z = Some(S::zero());
        let edge = vec![vec![z, z], vec![z, None]];
        SpinModel::new(edge, vec![z, Some(lambda.ln())], Some(vec![0, 1]))
    }

    /// Uniform proper q-colorings: equal adjacent spins are forbidden.
    pub fn proper_colorings(q: usize) -> Result<Self> {
        let edge = (0..q)
            .map(|a| {
                (0..q)
                    .map(|b| if a == b { None } else { Some(S::zero()) })
                    .collect()
            })
            .collect();
        SpinModel::new(edge, vec![Some(S::zero()); q], None)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn edge_potential(&self, a: Spin, b: Spin) -> Option<S> {
        self.edge[a as usize * self.q + b as usize]
    }

    pub fn vertex_potential(&self, s: Spin) -> Option<S> {
        self.vertex[s as usize]
    }

    pub fn has_hard_constraints(&self) -> bool {
        self.edge.iter().any(Option::is_none) || self.vertex.iter().any(Option::is_none)
    }

    pub fn has_monotone_order(&self) -> bool {
        self.monotone_rank.is_some()
    }

    /// Position of `s` in the monotone spin order, if the model carries one.
    pub fn monotone_rank(&self, s: Spin) -> Option<usize> {
        self.monotone_rank.as_ref().map(|r| r[s as usize])
    }

    /// Spins listed smallest-first in the monotone order when present,
    /// otherwise in natural order. Quantile sampling uses this order, which
    /// is what makes shared-uniform couplings monotone.
    pub fn spin_order(&self) -> Vec<Spin> {
        match &self.monotone_rank {
            None => (0..self.q as Spin).collect(),
            Some(rank) => {
                let mut spins: Vec<Spin> = (0..self.q as Spin).collect();
                spins.sort_by_key(|&s| rank[s as usize]);
                spins
            }
        }
    }

    /// The inverse temperature if the model is exactly a zero-field Potts
    /// model (the class the cluster dynamics are defined for).
    pub fn as_zero_field_potts(&self) -> Option<S> {
        let beta = self.edge_potential(0, 0)?;
        for a in 0..self.q as Spin {
            if self.vertex_potential(a)? != S::zero() {
                return None;
            }
            for b in 0..self.q as Spin {
                let expect = if a == b { beta } else { S::zero() };
                if self.edge_potential(a, b)? != expect {
                    return None;
                }
            }
        }
        Some(beta)
    }
}

/// Spins pinned on exterior boundary sites. Sites not mentioned are free.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BoundaryCondition {
    assigned: Vec<(Coord, Spin)>,
}

impl BoundaryCondition {
    pub fn free() -> Self {
        BoundaryCondition::default()
    }

    /// Pins the listed sites; coordinates must be distinct.
    pub fn from_pairs(mut pairs: Vec<(Coord, Spin)>) -> Result<Self> {
        pairs.sort();
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidInput(format!(
                    "boundary site {:?} assigned twice",
                    w[0].0
                )));
            }
        }
        Ok(BoundaryCondition { assigned: pairs })
    }

    /// Pins every boundary site of the box to one spin.
    pub fn constant(cube: &LatticeCube, s: Spin) -> Self {
        BoundaryCondition {
            assigned: cube.boundary().iter().map(|c| (c.clone(), s)).collect(),
        }
    }

    /// Copy of this condition with one site re-pinned (or newly pinned).
    pub fn with_site(&self, coord: Coord, s: Spin) -> Self {
        let mut assigned = self.assigned.clone();
        match assigned.binary_search_by(|(c, _)| c.cmp(&coord)) {
            Ok(i) => assigned[i].1 = s,
            Err(i) => assigned.insert(i, (coord, s)),
        }
        BoundaryCondition { assigned }
    }

    pub fn get(&self, coord: &[i64]) -> Option<Spin> {
        self.assigned
            .binary_search_by(|(c, _)| c.as_slice().cmp(coord))
            .ok()
            .map(|i| self.assigned[i].1)
    }

    pub fn assigned(&self) -> &[(Coord, Spin)] {
        &self.assigned
    }

    pub fn is_free(&self) -> bool {
        self.assigned.is_empty()
    }
}

/// A spin model bound to a box and a boundary condition; the unit most
/// operations work on. Adjacent pinned boundary spins are cached per vertex.
#[derive(Debug, Clone)]
pub struct System<S> {
    model: SpinModel<S>,
    cube: LatticeCube,
    boundary: BoundaryCondition,
    bc_spins: Vec<Vec<Spin>>,
}

impl<S: Scalar> System<S> {
    pub fn new(model: SpinModel<S>, cube: LatticeCube, boundary: BoundaryCondition) -> Result<Self> {
        for (coord, s) in boundary.assigned() {
            if cube.boundary_site_index(coord).is_none() {
                return Err(Error::InvalidInput(format!(
                    "{coord:?} is not a boundary site of the box"
                )));
            }
            if *s as usize >= model.q() {
                return Err(Error::InvalidInput(format!(
                    "boundary spin {s} out of range for q = {}",
                    model.q()
                )));
            }
        }
        let bc_spins = (0..cube.len())
            .map(|v| {
                cube.boundary_neighbors(v)
                    .iter()
                    .filter_map(|&b| boundary.get(&cube.boundary()[b]))
                    .collect()
            })
            .collect();
        Ok(System {
            model,
            cube,
            boundary,
            bc_spins,
        })
    }

    /// Binds with the free boundary condition.
    pub fn free(model: SpinModel<S>, cube: LatticeCube) -> Self {
        System::new(model, cube, BoundaryCondition::free()).expect("free boundary always binds")
    }

    /// Same model and box under a different boundary condition.
    pub fn with_boundary(&self, boundary: BoundaryCondition) -> Result<Self> {
        System::new(self.model.clone(), self.cube.clone(), boundary)
    }

    pub fn model(&self) -> &SpinModel<S> {
        &self.model
    }

    pub fn cube(&self) -> &LatticeCube {
        &self.cube
    }

    pub fn boundary(&self) -> &BoundaryCondition {
        &self.boundary
    }

    /// Spins of the pinned boundary sites adjacent to vertex `v`.
    pub fn boundary_spins(&self, v: usize) -> &[Spin] {
        &self.bc_spins[v]
    }

    pub fn shared(self) -> Arc<Self> {
        Arc::new(self)
    }

    fn validate_config(&self, config: &[Spin]) -> Result<()> {
        if config.len() != self.cube.len() {
            return Err(Error::InvalidInput(format!(
                "configuration has {} spins, box has {}",
                config.len(),
                self.cube.len()
            )));
        }
        if let Some(&s) = config.iter().find(|&&s| s as usize >= self.model.q()) {
            return Err(Error::InvalidInput(format!(
                "spin {s} out of range for q = {}",
                self.model.q()
            )));
        }
        Ok(())
    }

    /// Energy of a full configuration under the bound boundary condition.
    pub fn hamiltonian(&self, config: &[Spin]) -> Result<Energy<S>> {
        self.validate_config(config)?;
        Ok(match self.log_weight(config) {
            Some(lw) => Energy::Finite(-lw),
            None => Energy::Infinite,
        })
    }

    /// `-H` of a shape-valid configuration, `None` if a hard constraint is
    /// violated. The hot path behind measures and samplers.
    pub fn log_weight(&self, config: &[Spin]) -> Option<S> {
        let model = &self.model;
        let mut total = S::zero();
        for &(u, v) in self.cube.edges() {
            total += model.edge_potential(config[u], config[v])?;
        }
        for (v, &s) in config.iter().enumerate() {
            total += model.vertex_potential(s)?;
            for &b in &self.bc_spins[v] {
                total += model.edge_potential(b, s)?;
            }
        }
        Some(total)
    }

    /// Log weight of spin `s` at vertex `v` against the rest of `config`:
    /// `W(s)` plus edge terms to interior neighbors and pinned boundary
    /// sites. The single-site conditional is the normalization of these.
    pub fn site_log_weight(&self, v: usize, s: Spin, config: &[Spin]) -> Option<S> {
        let model = &self.model;
        let mut total = model.vertex_potential(s)?;
        for &u in self.cube.neighbors(v) {
            total += model.edge_potential(s, config[u])?;
        }
        for &b in &self.bc_spins[v] {
            total += model.edge_potential(b, s)?;
        }
        Some(total)
    }

    /// True when no hard constraint is violated.
    pub fn config_is_valid(&self, config: &[Spin]) -> bool {
        self.log_weight(config).is_some()
    }
}

/// Coordinatewise comparison in the model's monotone spin order.
pub fn config_leq<S: Scalar>(model: &SpinModel<S>, x: &[Spin], y: &[Spin]) -> Result<bool> {
    if !model.has_monotone_order() {
        return Err(Error::UnsupportedModel(
            "model carries no monotone spin order".into(),
        ));
    }
    if x.len() != y.len() {
        return Err(Error::InvalidInput(
            "configurations have different lengths".into(),
        ));
    }
    Ok(x.iter().zip(y).all(|(&a, &b)| {
        model.monotone_rank(a).expect("order present") <= model.monotone_rank(b).expect("order present")
    }))
}

/// Exhaustively checks that every exterior assignment of every nonempty
/// region leaves at least one valid configuration on the region.
///
/// Soft models are trivially permissive; the hard-core model is permissive
/// for every fugacity; proper colorings may or may not be, depending on the
/// boundary condition.
pub fn check_permissive<S: Scalar>(system: &System<S>) -> Result<bool> {
    let n = system.cube().len();
    let q = system.model().q();
    let cost = (2.0 * q as f64).powi(n as i32);
    if cost > 3.0e7 {
        return Err(Error::Capacity(format!(
            "permissivity exhaustion needs (2q)^n = {cost:.1e} cases, guard is 3e7"
        )));
    }
    if !system.model().has_hard_constraints() {
        return true_when_fields_finite(system);
    }

    let mut exterior: SpinConfig = vec![0; n];
    for region_mask in 1u64..(1u64 << n) {
        let region: Vec<usize> = (0..n).filter(|&v| region_mask & (1 << v) != 0).collect();
        let outside: Vec<usize> = (0..n).filter(|&v| region_mask & (1 << v) == 0).collect();
        let mut done = false;
        while !done {
            if !region_admits_valid_config(system, &region, &exterior) {
                return Ok(false);
            }
            done = true;
            for &v in &outside {
                exterior[v] += 1;
                if (exterior[v] as usize) < q {
                    done = false;
                    break;
                }
                exterior[v] = 0;
            }
        }
    }
    Ok(true)
}

fn true_when_fields_finite<S: Scalar>(_system: &System<S>) -> Result<bool> {
    Ok(true)
}

/// Depth-first search for one valid region assignment given everything else.
fn region_admits_valid_config<S: Scalar>(
    system: &System<S>,
    region: &[usize],
    exterior: &[Spin],
) -> bool {
    let model = system.model();
    let q = model.q() as Spin;
    let in_region: Vec<Option<usize>> = {
        let mut pos = vec![None; system.cube().len()];
        for (i, &v) in region.iter().enumerate() {
            pos[v] = Some(i);
        }
        pos
    };
    let mut chosen: Vec<Spin> = Vec::with_capacity(region.len());

    // Compatibility of spin s at region position i with everything already
    // fixed: earlier region vertices, exterior vertices, pinned boundary.
    let compatible = |chosen: &[Spin], i: usize, s: Spin| -> bool {
        if model.vertex_potential(s).is_none() {
            return false;
        }
        let v = region[i];
        for &u in system.cube().neighbors(v) {
            let other = match in_region[u] {
                Some(j) if j < chosen.len() => chosen[j],
                Some(_) => continue,
                None => exterior[u],
            };
            if model.edge_potential(s, other).is_none() {
                return false;
            }
        }
        system
            .boundary_spins(v)
            .iter()
            .all(|&b| model.edge_potential(b, s).is_some())
    };

    let mut next_spin: Vec<Spin> = vec![0];
    loop {
        let i = chosen.len();
        let mut s = *next_spin.last().expect("stack nonempty");
        let mut advanced = false;
        while s < q {
            if compatible(&chosen, i, s) {
                *next_spin.last_mut().expect("stack nonempty") = s + 1;
                chosen.push(s);
                next_spin.push(0);
                advanced = true;
                break;
            }
            s += 1;
        }
        if advanced {
            if chosen.len() == region.len() {
                return true;
            }
            continue;
        }
        next_spin.pop();
        if chosen.pop().is_none() {
            return false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{scalar, Real};
    use approx::assert_relative_eq;

    fn pair_system(beta: Real) -> System<Real> {
        let cube = LatticeCube::build(&[2]).unwrap();
        System::free(SpinModel::potts(3, beta, &[0.0; 3]).unwrap(), cube)
    }

    #[test]
    fn aligned_pair_energy_is_minus_beta() {
        let system = pair_system(0.7);
        let h = system.hamiltonian(&[1, 1]).unwrap().finite().unwrap();
        assert_relative_eq!(h, -0.7, max_relative = 1e-15);
        let h = system.hamiltonian(&[1, 2]).unwrap().finite().unwrap();
        assert_relative_eq!(h, 0.0, max_relative = 1e-15);
    }

    #[test]
    fn antiferromagnetic_sign_flips() {
        let system = pair_system(-0.7);
        let h = system.hamiltonian(&[2, 2]).unwrap().finite().unwrap();
        assert_relative_eq!(h, 0.7, max_relative = 1e-15);
    }

    #[test]
    fn all_plus_three_by_three_counts_every_edge() {
        let beta = 0.44;
        let cube = LatticeCube::build(&[3, 3]).unwrap();
        let system = System::free(SpinModel::ising(beta, 0.0), cube);
        let h = system.hamiltonian(&vec![1; 9]).unwrap().finite().unwrap();
        assert_relative_eq!(h, -12.0 * beta, max_relative = 1e-14);
    }

    #[test]
    fn boundary_terms_count_adjacent_pinned_sites() {
        let beta = 0.3;
        let cube = LatticeCube::build(&[1]).unwrap();
        let bc = BoundaryCondition::constant(&cube, 1);
        let system = System::new(SpinModel::ising(beta, 0.0), cube, bc).unwrap();
        let h_plus = system.hamiltonian(&[1]).unwrap().finite().unwrap();
        let h_minus = system.hamiltonian(&[0]).unwrap().finite().unwrap();
        assert_relative_eq!(h_plus, -2.0 * beta, max_relative = 1e-15);
        assert_relative_eq!(h_minus, 0.0, max_relative = 1e-15);
    }

    #[test]
    fn ising_field_enters_through_vertex_potential() {
        let system = System::free(
            SpinModel::ising(0.5, 2.0),
            LatticeCube::build(&[1]).unwrap(),
        );
        let h_plus = system.hamiltonian(&[1]).unwrap().finite().unwrap();
        let h_minus = system.hamiltonian(&[0]).unwrap().finite().unwrap();
        assert_relative_eq!(h_plus, -1.0, max_relative = 1e-15);
        assert_relative_eq!(h_minus, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn hard_core_forbids_adjacent_occupation() {
        let cube = LatticeCube::build(&[2]).unwrap();
        let system = System::free(SpinModel::hard_core(1.5 as Real).unwrap(), cube);
        assert_eq!(system.hamiltonian(&[1, 1]).unwrap(), Energy::Infinite);
        let h = system.hamiltonian(&[1, 0]).unwrap().finite().unwrap();
        assert_relative_eq!(h, -(1.5f64.ln()), max_relative = 1e-15);
    }

    #[test]
    fn potts_energy_is_label_blind() {
        let cube = LatticeCube::build(&[2, 2]).unwrap();
        let system = System::free(SpinModel::potts(3, 0.8, &[0.0; 3]).unwrap(), cube);
        let perms: [[Spin; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let config: SpinConfig = vec![0, 1, 1, 2];
        let base = system.hamiltonian(&config).unwrap().finite().unwrap();
        for perm in perms {
            let relabeled: SpinConfig = config.iter().map(|&s| perm[s as usize]).collect();
            let h = system.hamiltonian(&relabeled).unwrap().finite().unwrap();
            assert_relative_eq!(h, base, max_relative = 1e-15);
        }
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let cube = LatticeCube::build(&[2]).unwrap();
        let system = System::free(SpinModel::ising(0.5 as Real, 0.0), cube.clone());
        assert!(system.hamiltonian(&[1]).is_err());
        assert!(system.hamiltonian(&[1, 2]).is_err());

        let bad_site = BoundaryCondition::from_pairs(vec![(vec![9], 0)]).unwrap();
        assert!(System::new(SpinModel::<Real>::ising(0.5, 0.0), cube.clone(), bad_site).is_err());
        let bad_spin = BoundaryCondition::from_pairs(vec![(vec![-1], 7)]).unwrap();
        assert!(System::new(SpinModel::<Real>::ising(0.5, 0.0), cube, bad_spin).is_err());

        assert!(BoundaryCondition::from_pairs(vec![(vec![-1], 0), (vec![-1], 1)]).is_err());
        let asym = SpinModel::<Real>::new(
            vec![
                vec![Some(0.0), Some(1.0)],
                vec![Some(2.0), Some(0.0)],
            ],
            vec![Some(0.0), Some(0.0)],
            None,
        );
        assert!(asym.is_err());
    }

    #[test]
    fn site_log_weight_sums_local_terms() {
        let beta = 0.6;
        let cube = LatticeCube::build(&[3]).unwrap();
        let bc = BoundaryCondition::from_pairs(vec![(vec![-1], 1)]).unwrap();
        let system = System::new(SpinModel::ising(beta, 0.0), cube, bc).unwrap();
        // Vertex 0 sees pinned plus on the left and its interior neighbor.
        let w = system.site_log_weight(0, 1, &[0, 1, 0]).unwrap();
        assert_relative_eq!(w, 2.0 * beta, max_relative = 1e-15);
        let w = system.site_log_weight(0, 0, &[0, 0, 0]).unwrap();
        assert_relative_eq!(w, beta, max_relative = 1e-15);
    }

    #[test]
    fn config_order_requires_monotone_model() {
        let potts = SpinModel::<Real>::potts(3, 0.5, &[0.0; 3]).unwrap();
        assert!(config_leq(&potts, &[0], &[1]).is_err());

        let ising = SpinModel::<Real>::ising(0.5, 0.0);
        assert!(config_leq(&ising, &[0, 1], &[1, 1]).unwrap());
        assert!(config_leq(&ising, &[0, 1], &[0, 1]).unwrap());
        assert!(!config_leq(&ising, &[1, 0], &[0, 1]).unwrap());
    }

    #[test]
    fn config_order_is_a_partial_order() {
        use rand::Rng;
        use rand::SeedableRng;
        let model = SpinModel::<Real>::ising(0.5, 0.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 6;
        let random = |rng: &mut rand_chacha::ChaCha8Rng| -> SpinConfig {
            (0..n).map(|_| rng.random_range(0..2) as Spin).collect()
        };
        for _ in 0..200 {
            let x = random(&mut rng);
            let y = random(&mut rng);
            let z = random(&mut rng);
            assert!(config_leq(&model, &x, &x).unwrap());
            if config_leq(&model, &x, &y).unwrap() && config_leq(&model, &y, &x).unwrap() {
                assert_eq!(x, y);
            }
            if config_leq(&model, &x, &y).unwrap() && config_leq(&model, &y, &z).unwrap() {
                assert!(config_leq(&model, &x, &z).unwrap());
            }
        }
    }

    #[test]
    fn extremal_configs_bound_everything() {
        let model = SpinModel::<Real>::ising(0.5, 0.0);
        let top: SpinConfig = vec![1; 5];
        let bottom: SpinConfig = vec![0; 5];
        for mask in 0u32..(1 << 5) {
            let mid: SpinConfig = (0..5).map(|i| ((mask >> i) & 1) as Spin).collect();
            assert!(config_leq(&model, &bottom, &mid).unwrap());
            assert!(config_leq(&model, &mid, &top).unwrap());
        }
    }

    #[test]
    fn soft_models_are_permissive() {
        let cube = LatticeCube::build(&[2, 2]).unwrap();
        let system = System::free(SpinModel::<Real>::ising(0.9, 0.3), cube);
        assert!(check_permissive(&system).unwrap());
    }

    #[test]
    fn hard_core_is_permissive_for_any_fugacity() {
        for lambda in [0.2, 1.0, 5.0] {
            let cube = LatticeCube::build(&[2, 2]).unwrap();
            let bc = BoundaryCondition::constant(&cube, 1);
            let system =
                System::new(SpinModel::<Real>::hard_core(lambda).unwrap(), cube, bc).unwrap();
            assert!(check_permissive(&system).unwrap());
        }
    }

    #[test]
    fn three_colorings_fail_under_adversarial_boundary() {
        let cube = LatticeCube::build(&[2, 2]).unwrap();
        // Vertex (0,0) sees boundary colors 0 and 1; its interior neighbors
        // can then take color 2, leaving nothing for the corner.
        let bc = BoundaryCondition::from_pairs(vec![(vec![-1, 0], 0), (vec![0, -1], 1)]).unwrap();
        let system =
            System::new(SpinModel::<Real>::proper_colorings(3).unwrap(), cube.clone(), bc)
                .unwrap();
        assert!(!check_permissive(&system).unwrap());

        let free = System::free(SpinModel::<Real>::proper_colorings(3).unwrap(), cube.clone());
        assert!(check_permissive(&free).unwrap());

        let five = System::new(
            SpinModel::<Real>::proper_colorings(5).unwrap(),
            cube.clone(),
            BoundaryCondition::from_pairs(vec![
                (vec![-1, 0], 0),
                (vec![0, -1], 1),
                (vec![-1, 1], 2),
                (vec![1, -1], 3),
            ])
            .unwrap(),
        )
        .unwrap();
        assert!(check_permissive(&five).unwrap());
    }

    #[test]
    fn permissivity_guard_names_the_bound() {
        let cube = LatticeCube::build(&[5, 5]).unwrap();
        let system = System::free(SpinModel::<Real>::hard_core(1.0).unwrap(), cube);
        match check_permissive(&system) {
            Err(Error::Capacity(msg)) => assert!(msg.contains("(2q)^n")),
            other => panic!("expected capacity guard, got {other:?}"),
        }
    }

    #[test]
    fn zero_field_potts_detection() {
        assert_eq!(
            SpinModel::<Real>::potts(3, 0.7, &[0.0; 3])
                .unwrap()
                .as_zero_field_potts(),
            Some(0.7)
        );
        assert_eq!(
            SpinModel::<Real>::ising(0.7, 0.1).as_zero_field_potts(),
            None
        );
        assert_eq!(
            SpinModel::<Real>::hard_core(1.0).unwrap().as_zero_field_potts(),
            None
        );
    }

    #[test]
    fn generic_scalar_instantiates_at_f32() {
        let cube = LatticeCube::build(&[2]).unwrap();
        let system = System::free(SpinModel::<f32>::ising(0.5, 0.0), cube);
        let h = system.hamiltonian(&[1, 1]).unwrap().finite().unwrap();
        assert!((h + 0.5).abs() < 1e-6);
        let _: f32 = scalar(0.25);
    }
}
