//! Every dynamics of the laboratory, twice: as a one-step random sampler
//! driven by a [`UniformSource`], and as an exact row-stochastic matrix on
//! the enumerated state space.
//!
//! The sampler side reads its uniforms in a fixed order that depends only on
//! the kernel (and on shared branch draws such as the chosen tiling), so
//! replaying one recorded tape through two copies realizes the grand
//! coupling for free. The matrix side is assembled independently of the
//! samplers wherever possible, so the two act as oracles for each other.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::chain::{conditional_resample_matrix, ExactChain, MAX_DENSE_STATES};
use crate::geometry::{LatticeCube, Tiling, TilingFamily, VertexOrdering};
use crate::measure::{conditional_distribution, gibbs_distribution, ExactMeasure, StateSpace};
use crate::model::{Spin, SpinConfig, System};
use crate::sampler::{sample_site, Block, UniformSource};
use crate::stream::StreamRng;
use crate::{scalar, scalar_usize, Error, Result, Scalar};

/// Row-enumeration guards for SW-family exact matrices.
pub const MAX_SW_EDGES: usize = 13;
pub const MAX_SW_VERTICES: usize = 9;
/// Guards for the Edwards-Sokal joint-space factorization.
pub const MAX_ES_EDGES: usize = 10;
pub const MAX_ES_VERTICES: usize = 8;
/// Dense guard on the joint space itself.
pub const MAX_JOINT_STATES: usize = 4096;

fn index_from(u: f64, n: usize) -> usize {
    ((u * n as f64) as usize).min(n - 1)
}

fn uniform_spin(u: f64, q: usize) -> Spin {
    ((u * q as f64) as usize).min(q - 1) as Spin
}

/// Checks that the system supports SW-style percolation (zero-field
/// ferromagnetic Potts with a free boundary) and returns p = 1 - e^{-beta}.
pub fn sw_percolation_probability<S: Scalar>(system: &System<S>) -> Result<S> {
    let Some(beta) = system.model().as_zero_field_potts() else {
        return Err(Error::UnsupportedModel(
            "SW-family dynamics need a zero-field ferromagnetic Potts model".into(),
        ));
    };
    if beta < S::zero() {
        return Err(Error::UnsupportedModel(
            "SW-family dynamics need beta >= 0".into(),
        ));
    }
    if !system.boundary().is_free() {
        return Err(Error::UnsupportedModel(
            "SW-family dynamics need a free boundary".into(),
        ));
    }
    Ok(-(-beta).exp_m1())
}

/// The box edges with at least one endpoint in `vertices` (sorted), in box
/// edge order.
fn incident_edges(cube: &LatticeCube, vertices: &[usize]) -> Vec<(usize, usize)> {
    cube.edges()
        .iter()
        .copied()
        .filter(|&(a, b)| {
            vertices.binary_search(&a).is_ok() || vertices.binary_search(&b).is_ok()
        })
        .collect()
}

/// Union-find whose component representative is always the minimum vertex.
struct MinUnionFind {
    parent: Vec<usize>,
}

impl MinUnionFind {
    fn new(n: usize) -> Self {
        MinUnionFind {
            parent: (0..n).collect(),
        }
    }

    fn reset(&mut self) {
        for (v, p) in self.parent.iter_mut().enumerate() {
            *p = v;
        }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
        } else if ra < rb {
            self.parent[rb] = ra;
        } else {
            self.parent[ra] = rb;
        }
    }
}

/// Which vertices an SW-style step recolors after percolation.
enum SwScope<'a> {
    /// Every connected component, with one shared color draw per component.
    Components,
    /// Only vertices with no retained incident edge, optionally restricted
    /// to a membership mask.
    Isolated(Option<&'a [bool]>),
}

/// A dynamics bound to one spin system.
#[derive(Debug, Clone)]
pub struct Kernel<S: Scalar> {
    system: Arc<System<S>>,
    kind: Kind<S>,
}

#[derive(Debug, Clone)]
pub(crate) enum Kind<S: Scalar> {
    Glauber,
    HeatBathBlock {
        block: Block,
    },
    BlockDynamics {
        blocks: Vec<Block>,
    },
    TiledHeatBath {
        family: Arc<TilingFamily>,
        blocks: Vec<Vec<Block>>,
    },
    TiledGeneric {
        family: Arc<TilingFamily>,
        blocks: Vec<Vec<Block>>,
        inner: Arc<dyn InnerKernel<S>>,
    },
    Sw,
    IsolatedSw,
    TiledIsolatedSw {
        family: Arc<TilingFamily>,
        masks: Vec<Vec<bool>>,
    },
    Scan {
        order: VertexOrdering,
    },
    Composition {
        parts: Vec<Kernel<S>>,
    },
    Lazy {
        base: Box<Kernel<S>>,
        hold: S,
    },
    Reversiblization {
        base: Box<Kernel<S>>,
    },
}

/// A single-cube kernel family for the generic tiled dynamics: one member
/// acts on each cube of the chosen tiling against the frozen exterior.
pub trait InnerKernel<S: Scalar>: std::fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;

    /// Upper bound on the uniforms one application consumes; the actual
    /// consumption may depend only on shared leading draws.
    fn draws(&self, system: &System<S>, block: &Block) -> usize;

    fn apply(
        &self,
        system: &System<S>,
        block: &Block,
        config: &mut SpinConfig,
        src: &mut dyn UniformSource,
    ) -> Result<()>;

    /// Exact transition matrix on the cube's conditional state space given
    /// the exterior configuration (`cond` is the conditional measure).
    fn local_matrix(
        &self,
        system: &System<S>,
        block: &Block,
        exterior: &[Spin],
        cond: &ExactMeasure<S>,
    ) -> Result<DMatrix<S>>;
}

/// Heat-bath on the whole cube: the inner family that makes the generic
/// tiled dynamics coincide with the tiled heat-bath.
#[derive(Debug, Clone, Copy)]
pub struct HeatBathInner;

impl<S: Scalar> InnerKernel<S> for HeatBathInner {
    fn name(&self) -> &'static str {
        "heat-bath"
    }

    fn draws(&self, _system: &System<S>, block: &Block) -> usize {
        block.draws()
    }

    fn apply(
        &self,
        system: &System<S>,
        block: &Block,
        config: &mut SpinConfig,
        src: &mut dyn UniformSource,
    ) -> Result<()> {
        block.sample(system, config, src)
    }

    fn local_matrix(
        &self,
        _system: &System<S>,
        _block: &Block,
        _exterior: &[Spin],
        cond: &ExactMeasure<S>,
    ) -> Result<DMatrix<S>> {
        let n = cond.space().len();
        Ok(DMatrix::from_fn(n, n, |_, j| cond.prob(j)))
    }
}

/// With probability 1/2 resample the even-parity vertices of the cube,
/// otherwise the odd-parity ones.
#[derive(Debug, Clone, Copy)]
pub struct EvenOddHalfInner;

impl EvenOddHalfInner {
    /// Splits a block's vertices by global coordinate-sum parity, returning
    /// (even, odd) vertex lists.
    fn split<S: Scalar>(system: &System<S>, block: &Block) -> (Vec<usize>, Vec<usize>) {
        let cube = system.cube();
        let mut even = Vec::new();
        let mut odd = Vec::new();
        for &v in block.vertices() {
            let sum: i64 = cube.coord(v).iter().sum();
            if sum.rem_euclid(2) == 0 {
                even.push(v);
            } else {
                odd.push(v);
            }
        }
        (even, odd)
    }
}

impl<S: Scalar> InnerKernel<S> for EvenOddHalfInner {
    fn name(&self) -> &'static str {
        "even-odd-half"
    }

    fn draws(&self, system: &System<S>, block: &Block) -> usize {
        let (even, odd) = Self::split(system, block);
        1 + even.len().max(odd.len())
    }

    fn apply(
        &self,
        system: &System<S>,
        block: &Block,
        config: &mut SpinConfig,
        src: &mut dyn UniformSource,
    ) -> Result<()> {
        let (even, odd) = Self::split(system, block);
        let class = if src.next_unit() < 0.5 { even } else { odd };
        for v in class {
            config[v] = sample_site(system, v, config, src.next_unit())?;
        }
        Ok(())
    }

    fn local_matrix(
        &self,
        system: &System<S>,
        block: &Block,
        _exterior: &[Spin],
        cond: &ExactMeasure<S>,
    ) -> Result<DMatrix<S>> {
        let (even, odd) = Self::split(system, block);
        let positions = |class: &[usize]| -> Vec<usize> {
            class
                .iter()
                .map(|v| {
                    block
                        .vertices()
                        .binary_search(v)
                        .expect("class vertex belongs to the block")
                })
                .collect()
        };
        let k_even =
            conditional_resample_matrix(cond.space(), cond.probs(), &positions(&even))?;
        let k_odd = conditional_resample_matrix(cond.space(), cond.probs(), &positions(&odd))?;
        let half = scalar::<S>(0.5);
        Ok(k_even * half + k_odd * half)
    }
}

/// Per-cube isolated-vertex SW update: percolates the monochromatic box
/// edges incident to the cube and recolors uniformly the cube vertices left
/// with no retained edge. Because the cubes of a tiling keep their incident
/// edge sets disjoint, applying this to every cube reproduces the tiled
/// isolated-vertex dynamics restricted to that tiling.
#[derive(Debug, Clone, Copy)]
pub struct IsolatedSwInner;

impl<S: Scalar> InnerKernel<S> for IsolatedSwInner {
    fn name(&self) -> &'static str {
        "isolated-sw"
    }

    fn draws(&self, system: &System<S>, block: &Block) -> usize {
        incident_edges(system.cube(), block.vertices()).len() + block.vertices().len()
    }

    fn apply(
        &self,
        system: &System<S>,
        block: &Block,
        config: &mut SpinConfig,
        src: &mut dyn UniformSource,
    ) -> Result<()> {
        let p = sw_percolation_probability(system)?;
        let cube = system.cube();
        let q = system.model().q();
        let mut touched = vec![false; cube.len()];
        for (a, b) in incident_edges(cube, block.vertices()) {
            let u = src.next_unit();
            if config[a] == config[b] && scalar::<S>(u) < p {
                touched[a] = true;
                touched[b] = true;
            }
        }
        for &v in block.vertices() {
            let u = src.next_unit();
            if !touched[v] {
                config[v] = uniform_spin(u, q);
            }
        }
        Ok(())
    }

    fn local_matrix(
        &self,
        system: &System<S>,
        block: &Block,
        exterior: &[Spin],
        cond: &ExactMeasure<S>,
    ) -> Result<DMatrix<S>> {
        isolated_update_matrix(system, block.vertices(), exterior, cond)
    }
}

impl<S: Scalar> Kernel<S> {
    pub fn glauber(system: Arc<System<S>>) -> Self {
        Kernel {
            system,
            kind: Kind::Glauber,
        }
    }

    pub fn heat_bath_block(system: Arc<System<S>>, vertices: &[usize]) -> Result<Self> {
        let block = Block::analyze(&system, vertices)?;
        Ok(Kernel {
            system,
            kind: Kind::HeatBathBlock { block },
        })
    }

    /// Uniformly picks one of the blocks and heat-bath resamples it; the
    /// blocks must jointly cover every vertex.
    pub fn block_dynamics(system: Arc<System<S>>, blocks: &[Vec<usize>]) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidInput("block dynamics needs blocks".into()));
        }
        let mut covered = vec![false; system.cube().len()];
        let mut analyzed = Vec::with_capacity(blocks.len());
        for vertices in blocks {
            let block = Block::analyze(&system, vertices)?;
            for &v in block.vertices() {
                covered[v] = true;
            }
            analyzed.push(block);
        }
        if covered.iter().any(|&c| !c) {
            return Err(Error::InvalidInput(
                "block dynamics must cover every vertex".into(),
            ));
        }
        Ok(Kernel {
            system,
            kind: Kind::BlockDynamics { blocks: analyzed },
        })
    }

    fn tiling_blocks(
        system: &System<S>,
        family: &TilingFamily,
    ) -> Result<Vec<Vec<Block>>> {
        family
            .tilings()
            .iter()
            .map(|tiling| {
                tiling
                    .cubes()
                    .iter()
                    .map(|cube| Block::analyze(system, cube))
                    .collect()
            })
            .collect()
    }

    /// The tiled block dynamics: a uniform tiling, every cube resampled from
    /// its conditional given the frozen exterior.
    pub fn tiled_heat_bath(system: Arc<System<S>>, l: usize) -> Result<Self> {
        let family = Arc::new(TilingFamily::build(system.cube(), l)?);
        let blocks = Self::tiling_blocks(&system, &family)?;
        Ok(Kernel {
            system,
            kind: Kind::TiledHeatBath { family, blocks },
        })
    }

    /// The generic tiled dynamics: a uniform tiling, one application of the
    /// inner kernel to each of its cubes.
    pub fn tiled_generic(
        system: Arc<System<S>>,
        l: usize,
        inner: Arc<dyn InnerKernel<S>>,
    ) -> Result<Self> {
        let family = Arc::new(TilingFamily::build(system.cube(), l)?);
        let blocks = Self::tiling_blocks(&system, &family)?;
        Ok(Kernel {
            system,
            kind: Kind::TiledGeneric {
                family,
                blocks,
                inner,
            },
        })
    }

    fn require_sw_model(system: &System<S>) -> Result<S> {
        sw_percolation_probability(system)
    }

    pub fn sw(system: Arc<System<S>>) -> Result<Self> {
        Self::require_sw_model(&system)?;
        Ok(Kernel {
            system,
            kind: Kind::Sw,
        })
    }

    pub fn isolated_sw(system: Arc<System<S>>) -> Result<Self> {
        Self::require_sw_model(&system)?;
        Ok(Kernel {
            system,
            kind: Kind::IsolatedSw,
        })
    }

    pub fn tiled_isolated_sw(system: Arc<System<S>>, l: usize) -> Result<Self> {
        Self::require_sw_model(&system)?;
        let family = Arc::new(TilingFamily::build(system.cube(), l)?);
        let n = system.cube().len();
        let masks = family
            .tilings()
            .iter()
            .map(|tiling| {
                let mut mask = vec![false; n];
                for &v in tiling.vertices() {
                    mask[v] = true;
                }
                mask
            })
            .collect();
        Ok(Kernel {
            system,
            kind: Kind::TiledIsolatedSw { family, masks },
        })
    }

    pub fn scan(system: Arc<System<S>>, order: VertexOrdering) -> Result<Self> {
        if order.order().len() != system.cube().len() {
            return Err(Error::InvalidInput(
                "scan order does not cover the box".into(),
            ));
        }
        Ok(Kernel {
            system,
            kind: Kind::Scan { order },
        })
    }

    /// The alternating (even-then-odd) scan.
    pub fn even_odd_scan(system: Arc<System<S>>) -> Result<Self> {
        let order = VertexOrdering::even_odd(system.cube());
        Self::scan(system, order)
    }

    /// Sequential composition; an empty list is the identity kernel.
    pub fn composition(system: Arc<System<S>>, parts: Vec<Kernel<S>>) -> Result<Self> {
        for part in &parts {
            if !Arc::ptr_eq(&part.system, &system) {
                return Err(Error::InvalidInput(
                    "composition parts must share one system".into(),
                ));
            }
        }
        Ok(Kernel {
            system,
            kind: Kind::Composition { parts },
        })
    }

    pub fn lazy(self, hold: S) -> Result<Self> {
        if hold < S::zero() || hold >= S::one() {
            return Err(Error::InvalidInput(
                "hold probability must lie in [0, 1)".into(),
            ));
        }
        let system = self.system.clone();
        Ok(Kernel {
            system,
            kind: Kind::Lazy {
                base: Box::new(self),
                hold,
            },
        })
    }

    pub fn reversiblization(self) -> Self {
        let system = self.system.clone();
        Kernel {
            system,
            kind: Kind::Reversiblization {
                base: Box::new(self),
            },
        }
    }

    pub fn system(&self) -> &Arc<System<S>> {
        &self.system
    }

    /// The tiling family a tiled kind averages over, if any.
    pub fn tiling_family(&self) -> Option<&Arc<TilingFamily>> {
        match &self.kind {
            Kind::TiledHeatBath { family, .. }
            | Kind::TiledGeneric { family, .. }
            | Kind::TiledIsolatedSw { family, .. } => Some(family),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match &self.kind {
            Kind::Glauber => "glauber",
            Kind::HeatBathBlock { .. } => "heat-bath-block",
            Kind::BlockDynamics { .. } => "block-dynamics",
            Kind::TiledHeatBath { .. } => "tiled-heat-bath",
            Kind::TiledGeneric { .. } => "tiled-generic",
            Kind::Sw => "sw",
            Kind::IsolatedSw => "isolated-sw",
            Kind::TiledIsolatedSw { .. } => "tiled-isolated-sw",
            Kind::Scan { .. } => "scan",
            Kind::Composition { .. } => "composition",
            Kind::Lazy { .. } => "lazy",
            Kind::Reversiblization { .. } => "reversiblization",
        }
    }

    /// Upper bound on the uniforms one step consumes; replaying a tape of
    /// this length through two copies yields the grand coupling.
    pub fn draw_bound(&self) -> usize {
        let cube = self.system.cube();
        match &self.kind {
            Kind::Glauber => 2,
            Kind::HeatBathBlock { block } => block.draws(),
            Kind::BlockDynamics { blocks } => {
                1 + blocks.iter().map(Block::draws).max().unwrap_or(0)
            }
            Kind::TiledHeatBath { blocks, .. } => {
                1 + blocks
                    .iter()
                    .map(|cubes| cubes.iter().map(Block::draws).sum::<usize>())
                    .max()
                    .unwrap_or(0)
            }
            Kind::TiledGeneric { blocks, inner, .. } => {
                1 + blocks
                    .iter()
                    .map(|cubes| {
                        cubes
                            .iter()
                            .map(|b| inner.draws(&self.system, b))
                            .sum::<usize>()
                    })
                    .max()
                    .unwrap_or(0)
            }
            Kind::Sw | Kind::IsolatedSw => cube.edges().len() + cube.len(),
            Kind::TiledIsolatedSw { .. } => 1 + cube.edges().len() + cube.len(),
            Kind::Scan { order } => order.order().len(),
            Kind::Composition { parts } => parts.iter().map(Kernel::draw_bound).sum(),
            Kind::Lazy { base, .. } => 1 + base.draw_bound(),
            Kind::Reversiblization { base } => 2 * base.draw_bound(),
        }
    }

    /// One step of the dynamics, drawing uniforms from `src` in the kernel's
    /// fixed order.
    pub fn step_with(
        &self,
        config: &mut SpinConfig,
        src: &mut dyn UniformSource,
    ) -> Result<()> {
        match &self.kind {
            Kind::Glauber => {
                let v = index_from(src.next_unit(), self.system.cube().len());
                config[v] = sample_site(&self.system, v, config, src.next_unit())?;
                Ok(())
            }
            Kind::HeatBathBlock { block } => block.sample(&self.system, config, src),
            Kind::BlockDynamics { blocks } => {
                let i = index_from(src.next_unit(), blocks.len());
                blocks[i].sample(&self.system, config, src)
            }
            Kind::TiledHeatBath { blocks, .. } => {
                let k = index_from(src.next_unit(), blocks.len());
                for block in &blocks[k] {
                    block.sample(&self.system, config, src)?;
                }
                Ok(())
            }
            Kind::TiledGeneric { blocks, inner, .. } => {
                let k = index_from(src.next_unit(), blocks.len());
                for block in &blocks[k] {
                    inner.apply(&self.system, block, config, src)?;
                }
                Ok(())
            }
            Kind::Sw => self.sw_style_step(SwScope::Components, config, src),
            Kind::IsolatedSw => self.sw_style_step(SwScope::Isolated(None), config, src),
            Kind::TiledIsolatedSw { masks, .. } => {
                let k = index_from(src.next_unit(), masks.len());
                self.sw_style_step(SwScope::Isolated(Some(&masks[k])), config, src)
            }
            Kind::Scan { order } => {
                for &v in order.order() {
                    config[v] = sample_site(&self.system, v, config, src.next_unit())?;
                }
                Ok(())
            }
            Kind::Composition { parts } => {
                for part in parts {
                    part.step_with(config, src)?;
                }
                Ok(())
            }
            Kind::Lazy { base, hold } => {
                if scalar::<S>(src.next_unit()) < *hold {
                    Ok(())
                } else {
                    base.step_with(config, src)
                }
            }
            Kind::Reversiblization { base } => {
                base.step_with(config, src)?;
                base.adjoint_step_with(config, src)
            }
        }
    }

    /// One step of the μ-adjoint dynamics. Reversible kinds are their own
    /// adjoint; scans reverse their order; compositions reverse and adjoin
    /// their parts.
    fn adjoint_step_with(
        &self,
        config: &mut SpinConfig,
        src: &mut dyn UniformSource,
    ) -> Result<()> {
        match &self.kind {
            Kind::Scan { order } => {
                for &v in order.order().iter().rev() {
                    config[v] = sample_site(&self.system, v, config, src.next_unit())?;
                }
                Ok(())
            }
            Kind::Composition { parts } => {
                for part in parts.iter().rev() {
                    part.adjoint_step_with(config, src)?;
                }
                Ok(())
            }
            Kind::Lazy { base, hold } => {
                if scalar::<S>(src.next_unit()) < *hold {
                    Ok(())
                } else {
                    base.adjoint_step_with(config, src)
                }
            }
            _ => self.step_with(config, src),
        }
    }

    pub fn step(&self, config: &mut SpinConfig, rng: &mut StreamRng) -> Result<()> {
        self.step_with(config, rng)
    }

    fn sw_style_step(
        &self,
        scope: SwScope<'_>,
        config: &mut SpinConfig,
        src: &mut dyn UniformSource,
    ) -> Result<()> {
        let p = Self::require_sw_model(&self.system)?;
        let cube = self.system.cube();
        let q = self.system.model().q();
        let n = cube.len();
        let mut uf = MinUnionFind::new(n);
        let mut incident = vec![false; n];
        for &(a, b) in cube.edges() {
            let u = src.next_unit();
            if config[a] == config[b] && scalar::<S>(u) < p {
                uf.union(a, b);
                incident[a] = true;
                incident[b] = true;
            }
        }
        let colors: Vec<f64> = (0..n).map(|_| src.next_unit()).collect();
        match scope {
            SwScope::Components => {
                for v in 0..n {
                    let root = uf.find(v);
                    config[v] = uniform_spin(colors[root], q);
                }
            }
            SwScope::Isolated(mask) => {
                for v in 0..n {
                    if !incident[v] && mask.is_none_or(|m| m[v]) {
                        config[v] = uniform_spin(colors[v], q);
                    }
                }
            }
        }
        Ok(())
    }

    /// Builds the exact transition matrix together with its verified
    /// stationary Gibbs measure.
    pub fn exact_matrix(&self) -> Result<ExactChain<S>> {
        let mu = gibbs_distribution(&self.system)?;
        if mu.space().len() > MAX_DENSE_STATES {
            return Err(Error::Capacity(format!(
                "{} states exceeds the dense-matrix guard of {MAX_DENSE_STATES}",
                mu.space().len()
            )));
        }
        let matrix = self.matrix_on(&mu)?;
        ExactChain::new(
            Some(mu.space().clone()),
            matrix,
            DVector::from_column_slice(mu.probs()),
        )
    }

    fn matrix_on(&self, mu: &ExactMeasure<S>) -> Result<DMatrix<S>> {
        let space = mu.space();
        let n_states = space.len();
        match &self.kind {
            Kind::Glauber => {
                let n = self.system.cube().len();
                let mut sum = DMatrix::zeros(n_states, n_states);
                for v in 0..n {
                    sum += conditional_resample_matrix(space, mu.probs(), &[v])?;
                }
                Ok(sum / scalar_usize::<S>(n))
            }
            Kind::HeatBathBlock { block } => {
                conditional_resample_matrix(space, mu.probs(), block.vertices())
            }
            Kind::BlockDynamics { blocks } => {
                let mut sum = DMatrix::zeros(n_states, n_states);
                for block in blocks {
                    sum += conditional_resample_matrix(space, mu.probs(), block.vertices())?;
                }
                Ok(sum / scalar_usize::<S>(blocks.len()))
            }
            Kind::TiledHeatBath { family, .. } => {
                let mut sum = DMatrix::zeros(n_states, n_states);
                for tiling in family.tilings() {
                    if tiling.is_empty() {
                        sum += DMatrix::identity(n_states, n_states);
                    } else {
                        sum +=
                            conditional_resample_matrix(space, mu.probs(), tiling.vertices())?;
                    }
                }
                Ok(sum / scalar_usize::<S>(family.len()))
            }
            Kind::TiledGeneric { blocks, inner, .. } => {
                let mut sum = DMatrix::zeros(n_states, n_states);
                for cubes in blocks {
                    let mut product = DMatrix::identity(n_states, n_states);
                    for block in cubes {
                        product *= embedded_block_matrix(&self.system, mu, block, &**inner)?;
                    }
                    sum += product;
                }
                Ok(sum / scalar_usize::<S>(blocks.len()))
            }
            Kind::Sw => self.sw_family_matrix(mu, SwScope::Components),
            Kind::IsolatedSw => self.sw_family_matrix(mu, SwScope::Isolated(None)),
            Kind::TiledIsolatedSw { masks, .. } => {
                let mut sum = DMatrix::zeros(n_states, n_states);
                for mask in masks {
                    sum += self.sw_family_matrix(mu, SwScope::Isolated(Some(mask)))?;
                }
                Ok(sum / scalar_usize::<S>(masks.len()))
            }
            Kind::Scan { order } => {
                let mut product = DMatrix::identity(n_states, n_states);
                for &v in order.order() {
                    product *= conditional_resample_matrix(space, mu.probs(), &[v])?;
                }
                Ok(product)
            }
            Kind::Composition { parts } => {
                let mut product = DMatrix::identity(n_states, n_states);
                for part in parts {
                    product *= part.matrix_on(mu)?;
                }
                Ok(product)
            }
            Kind::Lazy { base, hold } => {
                let inner = base.matrix_on(mu)?;
                Ok(DMatrix::identity(n_states, n_states) * *hold
                    + inner * (S::one() - *hold))
            }
            Kind::Reversiblization { base } => {
                let inner = base.matrix_on(mu)?;
                let mut adjoint = DMatrix::zeros(n_states, n_states);
                for x in 0..n_states {
                    for y in 0..n_states {
                        adjoint[(x, y)] = mu.prob(y) * inner[(y, x)] / mu.prob(x);
                    }
                }
                Ok(inner * adjoint)
            }
        }
    }

    /// Exact rows of an SW-style kernel by enumerating retained edge sets.
    fn sw_family_matrix(
        &self,
        mu: &ExactMeasure<S>,
        scope: SwScope<'_>,
    ) -> Result<DMatrix<S>> {
        let p = Self::require_sw_model(&self.system)?;
        let cube = self.system.cube();
        let q = self.system.model().q();
        let n = cube.len();
        let edges = cube.edges();
        if edges.len() > MAX_SW_EDGES || n > MAX_SW_VERTICES {
            return Err(Error::Capacity(format!(
                "SW row enumeration needs |E| <= {MAX_SW_EDGES} and n <= {MAX_SW_VERTICES}, \
                 got |E| = {} and n = {}",
                edges.len(),
                n
            )));
        }
        let space = mu.space();
        let n_states = space.len();

        let mut pow_p = vec![S::one(); edges.len() + 1];
        let mut pow_1mp = vec![S::one(); edges.len() + 1];
        for i in 1..=edges.len() {
            pow_p[i] = pow_p[i - 1] * p;
            pow_1mp[i] = pow_1mp[i - 1] * (S::one() - p);
        }
        let inv_q = S::one() / scalar_usize::<S>(q);

        let mut matrix = DMatrix::zeros(n_states, n_states);
        let mut uf = MinUnionFind::new(n);
        let mut config = vec![0 as Spin; n];
        let mut target = vec![0 as Spin; n];
        for rank in 0..n_states {
            space.write_config(rank, &mut config);
            let mono: Vec<(usize, usize)> = edges
                .iter()
                .copied()
                .filter(|&(a, b)| config[a] == config[b])
                .collect();
            for mask in 0u64..(1u64 << mono.len()) {
                let kept = mask.count_ones() as usize;
                let weight = pow_p[kept] * pow_1mp[mono.len() - kept];
                if !(weight > S::zero()) {
                    continue;
                }
                uf.reset();
                let mut incident = vec![false; n];
                for (i, &(a, b)) in mono.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        uf.union(a, b);
                        incident[a] = true;
                        incident[b] = true;
                    }
                }
                match &scope {
                    SwScope::Components => {
                        let mut roots: Vec<usize> =
                            (0..n).filter(|&v| uf.find(v) == v).collect();
                        roots.sort_unstable();
                        let c = roots.len();
                        let mut slot = vec![0usize; n];
                        for (i, &r) in roots.iter().enumerate() {
                            slot[r] = i;
                        }
                        let share = weight * inv_q.powi(c as i32);
                        let mut digits = vec![0 as Spin; c];
                        loop {
                            for v in 0..n {
                                target[v] = digits[slot[uf.find(v)]];
                            }
                            let idx = space
                                .index_of(&target)
                                .expect("recoloring stays in the state space");
                            matrix[(rank, idx)] += share;
                            if !advance(&mut digits, q) {
                                break;
                            }
                        }
                    }
                    SwScope::Isolated(mask_opt) => {
                        let iso: Vec<usize> = (0..n)
                            .filter(|&v| {
                                !incident[v] && mask_opt.is_none_or(|m| m[v])
                            })
                            .collect();
                        let share = weight * inv_q.powi(iso.len() as i32);
                        let mut digits = vec![0 as Spin; iso.len()];
                        target.copy_from_slice(&config);
                        loop {
                            for (i, &v) in iso.iter().enumerate() {
                                target[v] = digits[i];
                            }
                            let idx = space
                                .index_of(&target)
                                .expect("recoloring stays in the state space");
                            matrix[(rank, idx)] += share;
                            if !advance(&mut digits, q) {
                                break;
                            }
                        }
                    }
                }
            }
        }
        Ok(matrix)
    }
}

/// Advances a base-`q` odometer; returns false after wrapping to all zeros.
fn advance(digits: &mut [Spin], q: usize) -> bool {
    for d in digits.iter_mut().rev() {
        if (*d as usize) + 1 < q {
            *d += 1;
            return true;
        }
        *d = 0;
    }
    false
}

/// Embeds an inner kernel acting on `block` into the global state space,
/// freezing each exterior class.
fn embedded_block_matrix<S: Scalar>(
    system: &System<S>,
    mu: &ExactMeasure<S>,
    block: &Block,
    inner: &dyn InnerKernel<S>,
) -> Result<DMatrix<S>> {
    let region: Vec<usize> = (0..system.cube().len()).collect();
    let base = vec![0 as Spin; region.len()];
    embedded_inner_on_region(system, &region, mu.space(), &base, block, inner)
}

/// Embeds an inner kernel acting on `block` into the state space of a
/// containing region, freezing the rest of the region and taking the spins
/// outside the region from `base`.
fn embedded_inner_on_region<S: Scalar>(
    system: &System<S>,
    region: &[usize],
    space: &StateSpace,
    base: &[Spin],
    block: &Block,
    inner: &dyn InnerKernel<S>,
) -> Result<DMatrix<S>> {
    let n_states = space.len();
    let width = region.len();
    let block_pos: Vec<usize> = block
        .vertices()
        .iter()
        .map(|v| {
            region
                .binary_search(v)
                .expect("block vertex belongs to the region")
        })
        .collect();
    let in_block: Vec<bool> = {
        let mut mask = vec![false; width];
        for &i in &block_pos {
            mask[i] = true;
        }
        mask
    };

    let mut buckets: std::collections::HashMap<Vec<Spin>, Vec<usize>> =
        std::collections::HashMap::new();
    let mut local = vec![0 as Spin; width];
    for rank in 0..n_states {
        space.write_config(rank, &mut local);
        let key: Vec<Spin> = local
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| (!in_block[i]).then_some(s))
            .collect();
        buckets.entry(key).or_default().push(rank);
    }

    let mut matrix = DMatrix::zeros(n_states, n_states);
    let mut full = base.to_vec();
    let mut restricted = vec![0 as Spin; block.vertices().len()];
    for members in buckets.values() {
        space.write_config(members[0], &mut local);
        for (i, &v) in region.iter().enumerate() {
            full[v] = local[i];
        }
        let cond = conditional_distribution(system, block.vertices(), &full)?;
        if cond.space().len() != members.len() {
            return Err(Error::Numerical(
                "conditional space does not match the exterior class".into(),
            ));
        }
        let local_matrix = inner.local_matrix(system, block, &full, &cond)?;
        let local_rank: Vec<usize> = members
            .iter()
            .map(|&rank| {
                space.write_config(rank, &mut local);
                for (j, &i) in block_pos.iter().enumerate() {
                    restricted[j] = local[i];
                }
                cond.space()
                    .index_of(&restricted)
                    .expect("bucket member restricts into the conditional space")
            })
            .collect();
        for (i, &gi) in members.iter().enumerate() {
            for (j, &gj) in members.iter().enumerate() {
                matrix[(gi, gj)] = local_matrix[(local_rank[i], local_rank[j])];
            }
        }
    }
    Ok(matrix)
}

/// Exact rows of the isolated-vertex update on a region: every retained
/// subset of the monochromatic incident edges, then a uniform recoloring of
/// the untouched region vertices. `exterior` supplies the spins outside the
/// region; `cond` is the conditional measure whose space indexes the rows.
fn isolated_update_matrix<S: Scalar>(
    system: &System<S>,
    vertices: &[usize],
    exterior: &[Spin],
    cond: &ExactMeasure<S>,
) -> Result<DMatrix<S>> {
    let p = sw_percolation_probability(system)?;
    let cube = system.cube();
    let q = system.model().q();
    let incident = incident_edges(cube, vertices);
    if incident.len() > MAX_SW_EDGES || vertices.len() > MAX_SW_VERTICES {
        return Err(Error::Capacity(format!(
            "isolated-update row enumeration needs incident edges <= {MAX_SW_EDGES} and \
             region size <= {MAX_SW_VERTICES}, got {} and {}",
            incident.len(),
            vertices.len()
        )));
    }
    let space = cond.space();
    let n_states = space.len();

    let mut pow_p = vec![S::one(); incident.len() + 1];
    let mut pow_1mp = vec![S::one(); incident.len() + 1];
    for i in 1..=incident.len() {
        pow_p[i] = pow_p[i - 1] * p;
        pow_1mp[i] = pow_1mp[i - 1] * (S::one() - p);
    }
    let inv_q = S::one() / scalar_usize::<S>(q);
    let mut pos = vec![usize::MAX; cube.len()];
    for (i, &v) in vertices.iter().enumerate() {
        pos[v] = i;
    }

    let mut matrix = DMatrix::zeros(n_states, n_states);
    let mut full = exterior.to_vec();
    let mut local = vec![0 as Spin; vertices.len()];
    let mut target = vec![0 as Spin; vertices.len()];
    for rank in 0..n_states {
        space.write_config(rank, &mut local);
        for (i, &v) in vertices.iter().enumerate() {
            full[v] = local[i];
        }
        let mono: Vec<(usize, usize)> = incident
            .iter()
            .copied()
            .filter(|&(a, b)| full[a] == full[b])
            .collect();
        for mask in 0u64..(1u64 << mono.len()) {
            let kept = mask.count_ones() as usize;
            let weight = pow_p[kept] * pow_1mp[mono.len() - kept];
            if !(weight > S::zero()) {
                continue;
            }
            let mut touched = vec![false; vertices.len()];
            for (i, &(a, b)) in mono.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    if pos[a] != usize::MAX {
                        touched[pos[a]] = true;
                    }
                    if pos[b] != usize::MAX {
                        touched[pos[b]] = true;
                    }
                }
            }
            let iso: Vec<usize> = (0..vertices.len()).filter(|&i| !touched[i]).collect();
            let share = weight * inv_q.powi(iso.len() as i32);
            let mut digits = vec![0 as Spin; iso.len()];
            target.copy_from_slice(&local);
            loop {
                for (j, &i) in iso.iter().enumerate() {
                    target[i] = digits[j];
                }
                let idx = space
                    .index_of(&target)
                    .expect("recoloring stays in the conditional space");
                matrix[(rank, idx)] += share;
                if !advance(&mut digits, q) {
                    break;
                }
            }
        }
    }
    Ok(matrix)
}

/// The conditional isolated-update chain on a region with the exterior
/// frozen: percolate every monochromatic edge incident to the region, then
/// recolor uniformly the region vertices left with no retained edge. Its
/// stationary measure is the conditional Gibbs measure of the region.
pub fn conditional_isolated_chain<S: Scalar>(
    system: &System<S>,
    region: &[usize],
    exterior: &[Spin],
) -> Result<ExactChain<S>> {
    let mut vertices = region.to_vec();
    vertices.sort_unstable();
    vertices.dedup();
    if vertices.is_empty() {
        return Err(Error::InvalidInput("the region must be nonempty".into()));
    }
    let cond = conditional_distribution(system, &vertices, exterior)?;
    if cond.space().len() > MAX_DENSE_STATES {
        return Err(Error::Capacity(format!(
            "{} conditional states exceeds the dense-matrix guard of {MAX_DENSE_STATES}",
            cond.space().len()
        )));
    }
    let matrix = isolated_update_matrix(system, &vertices, exterior, &cond)?;
    ExactChain::new(
        Some(cond.space().clone()),
        matrix,
        DVector::from_column_slice(cond.probs()),
    )
}

/// The restriction of one tiling's member of the generic tiled dynamics to
/// that tiling with the exterior frozen: the inner kernel applied to each
/// cube in order, as a chain on the tiling's conditional state space.
pub fn tiling_inner_chain<S: Scalar>(
    system: &System<S>,
    tiling: &Tiling,
    inner: &dyn InnerKernel<S>,
    exterior: &[Spin],
) -> Result<ExactChain<S>> {
    if tiling.is_empty() {
        return Err(Error::InvalidInput("the tiling must be nonempty".into()));
    }
    let region = tiling.vertices();
    let cond = conditional_distribution(system, region, exterior)?;
    if cond.space().len() > MAX_DENSE_STATES {
        return Err(Error::Capacity(format!(
            "{} conditional states exceeds the dense-matrix guard of {MAX_DENSE_STATES}",
            cond.space().len()
        )));
    }
    let n_states = cond.space().len();
    let mut product = DMatrix::identity(n_states, n_states);
    for cube_vertices in tiling.cubes() {
        let block = Block::analyze(system, cube_vertices)?;
        product *= embedded_inner_on_region(system, region, cond.space(), exterior, &block, inner)?;
    }
    ExactChain::new(
        Some(cond.space().clone()),
        product,
        DVector::from_column_slice(cond.probs()),
    )
}

/// One Edwards-Sokal joint configuration: a retained edge set (bitmask over
/// the box's edge list) together with a spin configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointConfig {
    pub edges: u32,
    pub spins: SpinConfig,
}

/// The unnormalized Edwards-Sokal weight `p^|A| (1-p)^{|E|-|A|} 1(A ⊆ E(σ))`.
pub fn es_joint_weight<S: Scalar>(system: &System<S>, joint: &JointConfig) -> Result<S> {
    let p = Kernel::require_sw_model(system)?;
    let cube = system.cube();
    let edges = cube.edges();
    if joint.spins.len() != cube.len() {
        return Err(Error::InvalidInput(
            "joint spin configuration has the wrong length".into(),
        ));
    }
    if joint.edges >> edges.len() != 0 {
        return Err(Error::InvalidInput(
            "joint edge set names edges outside the box".into(),
        ));
    }
    let mut kept = 0usize;
    for (i, &(a, b)) in edges.iter().enumerate() {
        if joint.edges >> i & 1 == 1 {
            if joint.spins[a] != joint.spins[b] {
                return Ok(S::zero());
            }
            kept += 1;
        }
    }
    Ok(p.powi(kept as i32) * (S::one() - p).powi((edges.len() - kept) as i32))
}

/// The Edwards-Sokal lifting machinery on an enumerated joint space.
#[derive(Debug, Clone)]
pub struct EsFactors<S: Scalar> {
    /// Joint states in enumeration order.
    pub joint: Vec<JointConfig>,
    /// Normalized joint measure ν.
    pub nu: DVector<S>,
    /// Spin ranks aligned with the ambient Gibbs space.
    pub spin_measure: ExactMeasure<S>,
    /// Lift: spin space to joint space.
    pub t: DMatrix<S>,
    /// Projection: joint space to spin space (forgets the edges).
    pub t_star: DMatrix<S>,
    /// Recolors every component uniformly.
    pub r: DMatrix<S>,
    /// Recolors only isolated vertices.
    pub q: DMatrix<S>,
    /// Recolors only isolated vertices inside each tiling.
    pub q_k: Vec<DMatrix<S>>,
}

/// Enumerates the joint Edwards-Sokal space and builds T, T*, R, Q and the
/// per-tiling Q_k for the tiling family with cube parameter `l`.
pub fn es_factorize<S: Scalar>(system: &System<S>, l: usize) -> Result<EsFactors<S>> {
    let p = Kernel::require_sw_model(system)?;
    let cube = system.cube();
    let q_colors = system.model().q();
    let n = cube.len();
    let edges = cube.edges();
    if edges.len() > MAX_ES_EDGES || n > MAX_ES_VERTICES {
        return Err(Error::Capacity(format!(
            "ES factorization needs |E| <= {MAX_ES_EDGES} and n <= {MAX_ES_VERTICES}, \
             got |E| = {} and n = {}",
            edges.len(),
            n
        )));
    }
    let family = TilingFamily::build(cube, l)?;
    let mu = gibbs_distribution(system)?;
    let space = mu.space();
    let n_spin = space.len();

    let mut joint: Vec<JointConfig> = Vec::new();
    let mut joint_of: std::collections::HashMap<(u32, usize), usize> =
        std::collections::HashMap::new();
    let mut config = vec![0 as Spin; n];
    for rank in 0..n_spin {
        space.write_config(rank, &mut config);
        let mono: Vec<usize> = edges
            .iter()
            .enumerate()
            .filter_map(|(i, &(a, b))| (config[a] == config[b]).then_some(i))
            .collect();
        for mask in 0u64..(1u64 << mono.len()) {
            let mut bits = 0u32;
            for (i, &e) in mono.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    bits |= 1 << e;
                }
            }
            joint_of.insert((bits, rank), joint.len());
            joint.push(JointConfig {
                edges: bits,
                spins: config.clone(),
            });
            if joint.len() > MAX_JOINT_STATES {
                return Err(Error::Capacity(format!(
                    "joint space exceeds the guard of {MAX_JOINT_STATES} states"
                )));
            }
        }
    }
    let n_joint = joint.len();

    let mut nu = DVector::zeros(n_joint);
    for (j, jc) in joint.iter().enumerate() {
        let kept = jc.edges.count_ones() as usize;
        nu[j] = p.powi(kept as i32) * (S::one() - p).powi((edges.len() - kept) as i32);
    }
    let z: S = nu.iter().copied().sum();
    nu /= z;

    let mut t = DMatrix::zeros(n_spin, n_joint);
    let mut t_star = DMatrix::zeros(n_joint, n_spin);
    for (j, jc) in joint.iter().enumerate() {
        let rank = space.index_of(&jc.spins).expect("joint spins are a state");
        let kept = jc.edges.count_ones() as usize;
        let mono = edges
            .iter()
            .filter(|&&(a, b)| jc.spins[a] == jc.spins[b])
            .count();
        t[(rank, j)] = p.powi(kept as i32) * (S::one() - p).powi((mono - kept) as i32);
        t_star[(j, rank)] = S::one();
    }

    let inv_q = S::one() / scalar_usize::<S>(q_colors);
    let mut r = DMatrix::zeros(n_joint, n_joint);
    let mut q_mat = DMatrix::zeros(n_joint, n_joint);
    let mut q_k: Vec<DMatrix<S>> = (0..family.len())
        .map(|_| DMatrix::zeros(n_joint, n_joint))
        .collect();
    let mut uf = MinUnionFind::new(n);
    let mut target = vec![0 as Spin; n];
    for (j, jc) in joint.iter().enumerate() {
        uf.reset();
        let mut incident = vec![false; n];
        for (i, &(a, b)) in edges.iter().enumerate() {
            if jc.edges >> i & 1 == 1 {
                uf.union(a, b);
                incident[a] = true;
                incident[b] = true;
            }
        }

        let mut roots: Vec<usize> = (0..n).filter(|&v| uf.find(v) == v).collect();
        roots.sort_unstable();
        let mut slot = vec![0usize; n];
        for (i, &root) in roots.iter().enumerate() {
            slot[root] = i;
        }
        let share = inv_q.powi(roots.len() as i32);
        let mut digits = vec![0 as Spin; roots.len()];
        loop {
            for v in 0..n {
                target[v] = digits[slot[uf.find(v)]];
            }
            let rank = space.index_of(&target).expect("recoloring is a state");
            let jj = joint_of[&(jc.edges, rank)];
            r[(j, jj)] += share;
            if !advance(&mut digits, q_colors) {
                break;
            }
        }

        recolor_subset(
            &mut q_mat,
            j,
            jc,
            &(0..n).filter(|&v| !incident[v]).collect::<Vec<_>>(),
            q_colors,
            space,
            &joint_of,
        );
        for (k, qk) in q_k.iter_mut().enumerate() {
            let members: Vec<usize> = family
                .tiling(k)
                .vertices()
                .iter()
                .copied()
                .filter(|&v| !incident[v])
                .collect();
            recolor_subset(qk, j, jc, &members, q_colors, space, &joint_of);
        }
    }

    Ok(EsFactors {
        joint,
        nu,
        spin_measure: mu,
        t,
        t_star,
        r,
        q: q_mat,
        q_k,
    })
}

/// Adds to `row j` of `matrix` the uniform recoloring of `vertices`, keeping
/// the edge set and every other spin fixed.
fn recolor_subset<S: Scalar>(
    matrix: &mut DMatrix<S>,
    j: usize,
    jc: &JointConfig,
    vertices: &[usize],
    q_colors: usize,
    space: &crate::measure::StateSpace,
    joint_of: &std::collections::HashMap<(u32, usize), usize>,
) {
    let share = (S::one() / scalar_usize::<S>(q_colors)).powi(vertices.len() as i32);
    let mut digits = vec![0 as Spin; vertices.len()];
    let mut target = jc.spins.clone();
    loop {
        for (i, &v) in vertices.iter().enumerate() {
            target[v] = digits[i];
        }
        let rank = space.index_of(&target).expect("recoloring is a state");
        let jj = joint_of[&(jc.edges, rank)];
        matrix[(j, jj)] += share;
        if !advance(&mut digits, q_colors) {
            break;
        }
    }
}
