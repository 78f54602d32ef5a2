//! Finite boxes of the integer lattice and their combinatorial structure:
//! vertex/edge enumeration, exterior boundary, even/odd sublattices, scan
//! orderings, and the shifted families of well-separated cubes used by the
//! tiled block dynamics.

use std::collections::HashMap;

use crate::{Error, Result};

/// Lattice coordinate.
pub type Coord = Vec<i64>;

/// An axis-aligned box `{0..sides[0]-1} x ... x {0..sides[d-1]-1}` of the
/// d-dimensional integer lattice, with nearest-neighbor edges.
///
/// Vertices are indexed in row-major lexicographic order on coordinates
/// (last axis fastest), and every derived list (edges, boundary sites,
/// adjacency) is deterministic given `sides`.
#[derive(Debug, Clone)]
pub struct LatticeCube {
    sides: Vec<usize>,
    strides: Vec<usize>,
    vertices: Vec<Coord>,
    edges: Vec<(usize, usize)>,
    boundary: Vec<Coord>,
    boundary_index: HashMap<Coord, usize>,
    adjacency: Vec<Vec<usize>>,
    boundary_adjacency: Vec<Vec<usize>>,
}

impl LatticeCube {
    /// Builds the box with the given per-axis vertex counts.
    pub fn build(sides: &[usize]) -> Result<Self> {
        if sides.is_empty() {
            return Err(Error::InvalidInput("box needs at least one axis".into()));
        }
        if sides.iter().any(|&s| s == 0) {
            return Err(Error::InvalidInput(format!(
                "every side must be at least 1, got {sides:?}"
            )));
        }
        let d = sides.len();
        let n: usize = sides.iter().product();

        let mut strides = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * sides[a + 1];
        }

        let mut vertices = Vec::with_capacity(n);
        let mut coord = vec![0i64; d];
        for _ in 0..n {
            vertices.push(coord.clone());
            for a in (0..d).rev() {
                coord[a] += 1;
                if coord[a] < sides[a] as i64 {
                    break;
                }
                coord[a] = 0;
            }
        }

        let mut edges = Vec::new();
        let mut adjacency = vec![Vec::new(); n];
        for u in 0..n {
            for a in 0..d {
                if vertices[u][a] + 1 < sides[a] as i64 {
                    let v = u + strides[a];
                    edges.push((u, v));
                    adjacency[u].push(v);
                    adjacency[v].push(u);
                }
            }
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }

        let mut boundary = Vec::new();
        let mut seen = HashMap::new();
        for u in 0..n {
            for a in 0..d {
                for step in [-1i64, 1] {
                    let c = vertices[u][a] + step;
                    if c < 0 || c >= sides[a] as i64 {
                        let mut site = vertices[u].clone();
                        site[a] = c;
                        if !seen.contains_key(&site) {
                            seen.insert(site.clone(), ());
                            boundary.push(site);
                        }
                    }
                }
            }
        }
        boundary.sort_unstable();
        let boundary_index: HashMap<Coord, usize> = boundary
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();

        let mut boundary_adjacency = vec![Vec::new(); n];
        for u in 0..n {
            for a in 0..d {
                for step in [-1i64, 1] {
                    let c = vertices[u][a] + step;
                    if c < 0 || c >= sides[a] as i64 {
                        let mut site = vertices[u].clone();
                        site[a] = c;
                        boundary_adjacency[u].push(boundary_index[&site]);
                    }
                }
            }
        }
        for nbrs in &mut boundary_adjacency {
            nbrs.sort_unstable();
        }

        Ok(LatticeCube {
            sides: sides.to_vec(),
            strides,
            vertices,
            edges,
            boundary,
            boundary_index,
            adjacency,
            boundary_adjacency,
        })
    }

    pub fn dimension(&self) -> usize {
        self.sides.len()
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    /// Number of vertices.
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vertices(&self) -> &[Coord] {
        &self.vertices
    }

    pub fn coord(&self, v: usize) -> &Coord {
        &self.vertices[v]
    }

    /// Vertex index of an interior coordinate, if it lies in the box.
    pub fn index_of(&self, coord: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for (a, &c) in coord.iter().enumerate() {
            if c < 0 || c >= self.sides[a] as i64 {
                return None;
            }
            idx += c as usize * self.strides[a];
        }
        if coord.len() == self.sides.len() {
            Some(idx)
        } else {
            None
        }
    }

    /// Nearest-neighbor edges as index pairs `(u, v)` with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Exterior boundary: lattice sites outside the box at L1 distance 1
    /// from it, in lexicographic order.
    pub fn boundary(&self) -> &[Coord] {
        &self.boundary
    }

    pub fn boundary_site_index(&self, coord: &[i64]) -> Option<usize> {
        self.boundary_index.get(coord).copied()
    }

    /// Interior neighbors of vertex `v`, sorted.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    /// Boundary-site indices adjacent to vertex `v`, sorted.
    pub fn boundary_neighbors(&self, v: usize) -> &[usize] {
        &self.boundary_adjacency[v]
    }

    pub fn are_adjacent(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// L1 distance between two vertices.
    pub fn l1_distance(&self, u: usize, v: usize) -> i64 {
        coord_l1(&self.vertices[u], &self.vertices[v])
    }

    /// Minimal L1 distance between two nonempty vertex sets.
    pub fn set_l1_distance(&self, a: &[usize], b: &[usize]) -> i64 {
        let mut best = i64::MAX;
        for &u in a {
            for &v in b {
                best = best.min(self.l1_distance(u, v));
            }
        }
        best
    }
}

fn coord_l1(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Splits the vertices into the even and odd sublattices by coordinate-sum
/// parity. Both halves are independent sets and their union is everything.
pub fn even_odd_partition(cube: &LatticeCube) -> (Vec<usize>, Vec<usize>) {
    let mut even = Vec::new();
    let mut odd = Vec::new();
    for (v, coord) in cube.vertices().iter().enumerate() {
        let parity: i64 = coord.iter().map(|c| c.rem_euclid(2)).sum::<i64>() % 2;
        if parity == 0 {
            even.push(v);
        } else {
            odd.push(v);
        }
    }
    (even, odd)
}

/// A visiting order for systematic-scan dynamics: a permutation of the
/// vertices together with the length of its longest path subsequence.
#[derive(Debug, Clone)]
pub struct VertexOrdering {
    order: Vec<usize>,
    path_length: usize,
}

impl VertexOrdering {
    /// Wraps and validates a permutation of `0..cube.len()`.
    pub fn new(cube: &LatticeCube, order: Vec<usize>) -> Result<Self> {
        let n = cube.len();
        if order.len() != n {
            return Err(Error::InvalidInput(format!(
                "ordering visits {} vertices, box has {n}",
                order.len()
            )));
        }
        let mut seen = vec![false; n];
        for &v in &order {
            if v >= n || seen[v] {
                return Err(Error::InvalidInput(format!(
                    "ordering is not a permutation of 0..{n}"
                )));
            }
            seen[v] = true;
        }
        let path_length = longest_path_subsequence(cube, &order);
        Ok(VertexOrdering { order, path_length })
    }

    /// Vertices in index (lexicographic) order.
    pub fn lexicographic(cube: &LatticeCube) -> Self {
        VertexOrdering::new(cube, (0..cube.len()).collect()).expect("identity is a permutation")
    }

    /// All even vertices (lexicographically), then all odd vertices.
    pub fn even_odd(cube: &LatticeCube) -> Self {
        let (mut even, odd) = even_odd_partition(cube);
        even.extend(odd);
        VertexOrdering::new(cube, even).expect("even-odd order is a permutation")
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Length of the longest subsequence that forms a path in the box.
    pub fn path_length(&self) -> usize {
        self.path_length
    }
}

/// Longest subsequence of `order` whose consecutive entries are adjacent in
/// the box. Quadratic dynamic program over positions.
pub fn longest_path_subsequence(cube: &LatticeCube, order: &[usize]) -> usize {
    let mut best = vec![1usize; order.len()];
    let mut overall = 0usize;
    for i in 0..order.len() {
        for j in 0..i {
            if cube.are_adjacent(order[j], order[i]) && best[j] + 1 > best[i] {
                best[i] = best[j] + 1;
            }
        }
        overall = overall.max(best[i]);
    }
    overall
}

/// One shifted tiling: a family of pairwise far-apart boxes (cubes of the
/// infinite pattern clipped to the lattice box) together with their union.
#[derive(Debug, Clone)]
pub struct Tiling {
    cubes: Vec<Vec<usize>>,
    vertices: Vec<usize>,
}

impl Tiling {
    /// The clipped cubes, each a sorted list of vertex indices.
    pub fn cubes(&self) -> &[Vec<usize>] {
        &self.cubes
    }

    /// Union of the cubes, sorted.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }
}

/// The full family of `(L+3)^d` shifted tilings for an odd cube parameter
/// `L`.
///
/// For each offset `x` in `{0..L+2}^d`, the tiling's cubes have `L` vertices
/// per axis and centers `x + (L+3)h` over integer `h`, clipped to the box;
/// distinct cubes of one tiling are at L1 distance at least 4, and every
/// vertex of the box lies in exactly `L^d` of the tilings.
#[derive(Debug, Clone)]
pub struct TilingFamily {
    l: usize,
    tilings: Vec<Tiling>,
}

impl TilingFamily {
    pub fn build(cube: &LatticeCube, l: usize) -> Result<Self> {
        if l == 0 || l % 2 == 0 {
            return Err(Error::InvalidInput(format!(
                "cube parameter must be odd and positive, got {l}"
            )));
        }
        let d = cube.dimension();
        let period = (l + 3) as i64;
        let m = (l + 3).checked_pow(d as u32).filter(|&m| m <= 1_000_000);
        let Some(m) = m else {
            return Err(Error::Capacity(format!(
                "tiling family size (L+3)^d exceeds 1e6 for L={l}, d={d}"
            )));
        };
        let radius = ((l - 1) / 2) as i64;

        let mut tilings = Vec::with_capacity(m);
        let mut offset = vec![0i64; d];
        for _ in 0..m {
            tilings.push(build_tiling(cube, &offset, period, radius));
            for a in (0..d).rev() {
                offset[a] += 1;
                if offset[a] < period {
                    break;
                }
                offset[a] = 0;
            }
        }
        Ok(TilingFamily { l, tilings })
    }

    /// Odd cube parameter `L`.
    pub fn cube_parameter(&self) -> usize {
        self.l
    }

    /// Number of tilings, `(L+3)^d`.
    pub fn len(&self) -> usize {
        self.tilings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tilings.is_empty()
    }

    pub fn tiling(&self, k: usize) -> &Tiling {
        &self.tilings[k]
    }

    pub fn tilings(&self) -> &[Tiling] {
        &self.tilings
    }

    /// Number of tilings whose union contains vertex `v`.
    pub fn membership_count(&self, v: usize) -> usize {
        self.tilings
            .iter()
            .filter(|t| t.vertices.binary_search(&v).is_ok())
            .count()
    }
}

fn build_tiling(cube: &LatticeCube, offset: &[i64], period: i64, radius: i64) -> Tiling {
    let d = cube.dimension();
    let sides = cube.sides();

    // Per-axis range of pattern steps h whose cube touches the box.
    let mut h_ranges = Vec::with_capacity(d);
    for a in 0..d {
        let hi = sides[a] as i64 - 1;
        let h_min = div_ceil(-radius - offset[a], period);
        let h_max = div_floor(hi + radius - offset[a], period);
        h_ranges.push((h_min, h_max));
    }
    if h_ranges.iter().any(|(lo, hi)| lo > hi) {
        return Tiling {
            cubes: Vec::new(),
            vertices: Vec::new(),
        };
    }

    let mut cubes = Vec::new();
    let mut h = h_ranges.iter().map(|&(lo, _)| lo).collect::<Vec<_>>();
    'outer: loop {
        let mut lo = Vec::with_capacity(d);
        let mut hi = Vec::with_capacity(d);
        let mut empty = false;
        for a in 0..d {
            let center = offset[a] + h[a] * period;
            let l = (center - radius).max(0);
            let r = (center + radius).min(sides[a] as i64 - 1);
            if l > r {
                empty = true;
                break;
            }
            lo.push(l);
            hi.push(r);
        }
        if !empty {
            cubes.push(box_vertices(cube, &lo, &hi));
        }
        for a in (0..d).rev() {
            h[a] += 1;
            if h[a] <= h_ranges[a].1 {
                continue 'outer;
            }
            h[a] = h_ranges[a].0;
            if a == 0 {
                break 'outer;
            }
        }
    }

    let mut vertices: Vec<usize> = cubes.iter().flatten().copied().collect();
    vertices.sort_unstable();
    Tiling { cubes, vertices }
}

/// Vertex indices of the sub-box `[lo, hi]`, in lexicographic order.
fn box_vertices(cube: &LatticeCube, lo: &[i64], hi: &[i64]) -> Vec<usize> {
    let d = lo.len();
    let mut out = Vec::new();
    let mut coord = lo.to_vec();
    'outer: loop {
        out.push(
            cube.index_of(&coord)
                .expect("clipped cube coordinate lies in the box"),
        );
        for a in (0..d).rev() {
            coord[a] += 1;
            if coord[a] <= hi[a] {
                continue 'outer;
            }
            coord[a] = lo[a];
            if a == 0 {
                break 'outer;
            }
        }
    }
    out
}

fn div_floor(a: i64, b: i64) -> i64 {
    let q = a / b;
    if a % b != 0 && (a < 0) != (b < 0) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i64, b: i64) -> i64 {
    -div_floor(-a, b)
}
