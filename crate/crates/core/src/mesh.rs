//! Single-tree quadtree meshes over a rectangular box.
//!
//! Cells are addressed by `(level, morton)` and mapped onto an integer lattice of
//! `2^MAX_LEVEL` units per side, so containment and adjacency tests are exact.
//! Leaves are always kept in Z-order (Morton order of their anchors), which makes
//! point location a binary search: the leaves tile the key space in contiguous
//! intervals.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Deepest level a cell may reach.
pub const MAX_LEVEL: u8 = 30;
const ROOT_LEN: u64 = 1 << MAX_LEVEL;

/// The artificial (background) domain `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxDomain {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl BoxDomain {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        for k in 0..2 {
            if !(hi[k] > lo[k]) || !lo[k].is_finite() || !hi[k].is_finite() {
                return Err(Error::Parameter(format!(
                    "box domain requires lo < hi componentwise, got lo={lo:?} hi={hi:?}"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn unit() -> Self {
        Self { lo: [0.0, 0.0], hi: [1.0, 1.0] }
    }

    /// `[-1, 1]^2`, the background box of the pacman benchmarks.
    pub fn symmetric() -> Self {
        Self { lo: [-1.0, -1.0], hi: [1.0, 1.0] }
    }

    pub fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }

    /// Maps lattice coordinates to physical coordinates.
    pub fn to_physical(&self, p: [u32; 2]) -> [f64; 2] {
        let s = 1.0 / ROOT_LEN as f64;
        [
            self.lo[0] + (self.hi[0] - self.lo[0]) * (p[0] as f64 * s),
            self.lo[1] + (self.hi[1] - self.lo[1]) * (p[1] as f64 * s),
        ]
    }

    fn scale(&self) -> [f64; 2] {
        let s = 1.0 / ROOT_LEN as f64;
        [(self.hi[0] - self.lo[0]) * s, (self.hi[1] - self.lo[1]) * s]
    }
}

fn spread_bits(v: u32) -> u64 {
    let mut x = v as u64 & 0xffff_ffff;
    x = (x | (x << 16)) & 0x0000_ffff_0000_ffff;
    x = (x | (x << 8)) & 0x00ff_00ff_00ff_00ff;
    x = (x | (x << 4)) & 0x0f0f_0f0f_0f0f_0f0f;
    x = (x | (x << 2)) & 0x3333_3333_3333_3333;
    x = (x | (x << 1)) & 0x5555_5555_5555_5555;
    x
}

fn compact_bits(v: u64) -> u32 {
    let mut x = v & 0x5555_5555_5555_5555;
    x = (x | (x >> 1)) & 0x3333_3333_3333_3333;
    x = (x | (x >> 2)) & 0x0f0f_0f0f_0f0f_0f0f;
    x = (x | (x >> 4)) & 0x00ff_00ff_00ff_00ff;
    x = (x | (x >> 8)) & 0x0000_ffff_0000_ffff;
    x = (x | (x >> 16)) & 0x0000_0000_ffff_ffff;
    x as u32
}

/// Z-order key of a lattice point.
pub fn morton_key(p: [u32; 2]) -> u64 {
    spread_bits(p[0]) | (spread_bits(p[1]) << 1)
}

/// Address of a quadtree cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub level: u8,
    pub morton: u64,
}

impl CellId {
    pub fn new(level: u8, morton: u64) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::Parameter(format!("level {level} exceeds {MAX_LEVEL}")));
        }
        if morton >= 1u64 << (2 * level as u32) {
            return Err(Error::Parameter(format!(
                "morton index {morton} out of range for level {level}"
            )));
        }
        Ok(Self { level, morton })
    }

    pub fn root() -> Self {
        Self { level: 0, morton: 0 }
    }

    /// Cell at integer position `(i, j)` of the uniform grid at `level`.
    pub fn from_coords(level: u8, i: u32, j: u32) -> Self {
        Self { level, morton: morton_key([i, j]) }
    }

    /// Grid position within the level.
    pub fn coords(&self) -> [u32; 2] {
        [compact_bits(self.morton), compact_bits(self.morton >> 1)]
    }

    /// Side length in lattice units.
    pub fn size(&self) -> u32 {
        1u32 << (MAX_LEVEL - self.level)
    }

    /// Lower-left corner in lattice units.
    pub fn anchor(&self) -> [u32; 2] {
        let [i, j] = self.coords();
        let shift = MAX_LEVEL - self.level;
        [i << shift, j << shift]
    }

    /// Lower-left and upper-right lattice corners.
    pub fn lattice_bounds(&self) -> ([u64; 2], [u64; 2]) {
        let a = self.anchor();
        let s = self.size() as u64;
        ([a[0] as u64, a[1] as u64], [a[0] as u64 + s, a[1] as u64 + s])
    }

    pub fn key(&self) -> u64 {
        morton_key(self.anchor())
    }

    /// Children in Z-order: (0,0), (1,0), (0,1), (1,1).
    pub fn children(&self) -> [CellId; 4] {
        let l = self.level + 1;
        let m = self.morton << 2;
        [
            CellId { level: l, morton: m },
            CellId { level: l, morton: m | 1 },
            CellId { level: l, morton: m | 2 },
            CellId { level: l, morton: m | 3 },
        ]
    }

    pub fn parent(&self) -> Option<CellId> {
        (self.level > 0).then(|| CellId { level: self.level - 1, morton: self.morton >> 2 })
    }

    /// Corners in local order (0,0), (1,0), (0,1), (1,1).
    pub fn corners(&self) -> [[u32; 2]; 4] {
        let a = self.anchor();
        let s = self.size();
        [a, [a[0] + s, a[1]], [a[0], a[1] + s], [a[0] + s, a[1] + s]]
    }
}

/// Side of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];
}

/// A leaf sharing (part of) an edge with a given cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FacetNeighbor {
    pub index: usize,
    pub cell: CellId,
    /// Side of the query cell through which the neighbour is reached.
    pub side: Side,
    /// Endpoints of `closure(T) ∩ closure(T')` in lattice units.
    pub shared: [[u32; 2]; 2],
}

/// A 2:1-balanceable quadtree with leaves in Z-order.
#[derive(Clone, Debug)]
pub struct ForestMesh {
    domain: BoxDomain,
    leaves: Vec<CellId>,
    keys: Vec<u64>,
    generation: u64,
}

impl ForestMesh {
    /// `4^level` congruent leaves.
    pub fn new_uniform(domain: BoxDomain, level: u32) -> Result<Self> {
        if level > MAX_LEVEL as u32 {
            return Err(Error::Parameter(format!("level {level} out of range 0..={MAX_LEVEL}")));
        }
        if level > 13 {
            return Err(Error::Parameter(format!(
                "uniform level {level} would allocate {} leaves",
                1u64 << (2 * level)
            )));
        }
        let n = 1u64 << (2 * level);
        let leaves: Vec<CellId> = (0..n).map(|m| CellId { level: level as u8, morton: m }).collect();
        Ok(Self::from_sorted(domain, leaves, 0))
    }

    fn from_sorted(domain: BoxDomain, leaves: Vec<CellId>, generation: u64) -> Self {
        let keys = leaves.iter().map(CellId::key).collect();
        Self { domain, leaves, keys, generation }
    }

    /// Builds a mesh from an arbitrary leaf set; checks that it tiles the box.
    pub fn from_leaves(domain: BoxDomain, mut leaves: Vec<CellId>) -> Result<Self> {
        leaves.sort_by_key(CellId::key);
        let mesh = Self::from_sorted(domain, leaves, 0);
        let covered: u128 = mesh
            .leaves
            .iter()
            .map(|c| (c.size() as u128) * (c.size() as u128))
            .sum();
        if covered != (ROOT_LEN as u128) * (ROOT_LEN as u128) {
            return Err(Error::InvariantViolation("leaves do not tile the domain".into()));
        }
        for w in mesh.leaves.windows(2) {
            let (_, hi) = w[0].lattice_bounds();
            let end = morton_key([(hi[0] - 1) as u32, (hi[1] - 1) as u32]);
            if end >= w[1].key() {
                return Err(Error::InvariantViolation(format!(
                    "leaves {:?} and {:?} overlap",
                    w[0], w[1]
                )));
            }
        }
        Ok(mesh)
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn leaves(&self) -> &[CellId] {
        &self.leaves
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn cell(&self, index: usize) -> CellId {
        self.leaves[index]
    }

    pub fn max_level(&self) -> u8 {
        self.leaves.iter().map(|c| c.level).max().unwrap_or(0)
    }

    /// Leaf index of `cell`, if it is a leaf.
    pub fn index_of(&self, cell: CellId) -> Option<usize> {
        let key = cell.key();
        let i = self.keys.partition_point(|&k| k < key);
        (i < self.leaves.len() && self.leaves[i] == cell).then_some(i)
    }

    /// Leaf containing the lattice point (points on shared boundaries go to the
    /// leaf whose half-open box contains them).
    pub fn locate(&self, p: [u32; 2]) -> Option<usize> {
        if p[0] as u64 >= ROOT_LEN || p[1] as u64 >= ROOT_LEN {
            return None;
        }
        let key = morton_key(p);
        let i = self.keys.partition_point(|&k| k <= key);
        i.checked_sub(1)
    }

    fn locate_signed(&self, x: i64, y: i64) -> Option<usize> {
        if x < 0 || y < 0 || x as u64 >= ROOT_LEN || y as u64 >= ROOT_LEN {
            return None;
        }
        self.locate([x as u32, y as u32])
    }

    /// Physical lower-left and upper-right corners of leaf `index`.
    pub fn cell_bounds(&self, index: usize) -> ([f64; 2], [f64; 2]) {
        let c = self.leaves[index];
        let a = c.anchor();
        let s = c.size();
        (
            self.domain.to_physical(a),
            self.domain.to_physical([a[0] + s, a[1] + s]),
        )
    }

    /// Characteristic size `h_T` (longest side).
    pub fn cell_h(&self, index: usize) -> f64 {
        let sc = self.domain.scale();
        let s = self.leaves[index].size() as f64;
        (s * sc[0]).max(s * sc[1])
    }

    pub fn cell_area(&self, index: usize) -> f64 {
        let sc = self.domain.scale();
        let s = self.leaves[index].size() as f64;
        s * s * sc[0] * sc[1]
    }

    pub fn to_physical(&self, p: [u32; 2]) -> [f64; 2] {
        self.domain.to_physical(p)
    }

    /// Replaces each flagged leaf by its four children. The result is not balanced.
    /// `parent_map[new] = old`.
    pub fn refine(&self, flags: &[bool]) -> Result<(ForestMesh, Vec<usize>)> {
        if flags.len() != self.leaves.len() {
            return Err(Error::Parameter(format!(
                "refine flags have length {} but the mesh has {} leaves",
                flags.len(),
                self.leaves.len()
            )));
        }
        let extra = flags.iter().filter(|&&f| f).count();
        let mut leaves = Vec::with_capacity(self.leaves.len() + 3 * extra);
        let mut parent_map = Vec::with_capacity(leaves.capacity());
        for (i, (&cell, &flag)) in self.leaves.iter().zip(flags).enumerate() {
            if flag {
                if cell.level >= MAX_LEVEL {
                    return Err(Error::Parameter(format!(
                        "cannot refine {cell:?} beyond level {MAX_LEVEL}"
                    )));
                }
                for child in cell.children() {
                    leaves.push(child);
                    parent_map.push(i);
                }
            } else {
                leaves.push(cell);
                parent_map.push(i);
            }
        }
        let generation = self.generation + u64::from(extra > 0);
        Ok((Self::from_sorted(self.domain, leaves, generation), parent_map))
    }

    fn probes(cell: CellId) -> [(i64, i64); 8] {
        let a = cell.anchor();
        let (x, y, s) = (a[0] as i64, a[1] as i64, cell.size() as i64);
        [
            (x - 1, y),
            (x + s, y),
            (x, y - 1),
            (x, y + s),
            (x - 1, y - 1),
            (x + s, y - 1),
            (x - 1, y + s),
            (x + s, y + s),
        ]
    }

    /// Refines the minimal set of leaves so that edge- and vertex-adjacent leaves
    /// differ by at most one level. Returns the composed `parent_map`.
    pub fn enforce_two_one_balance(&self) -> (ForestMesh, Vec<usize>) {
        let mut mesh = self.clone();
        let mut parent_map: Vec<usize> = (0..self.len()).collect();
        loop {
            let mut flags = vec![false; mesh.len()];
            let mut any = false;
            for &cell in &mesh.leaves {
                if cell.level < 2 {
                    continue;
                }
                for (px, py) in Self::probes(cell) {
                    if let Some(j) = mesh.locate_signed(px, py) {
                        if mesh.leaves[j].level + 1 < cell.level && !flags[j] {
                            flags[j] = true;
                            any = true;
                        }
                    }
                }
            }
            if !any {
                break;
            }
            let (next, map) = mesh.refine(&flags).expect("balance refinement stays in range");
            parent_map = map.iter().map(|&old| parent_map[old]).collect();
            mesh = next;
        }
        (mesh, parent_map)
    }

    /// Leaves sharing an edge segment of positive length with leaf `index`.
    pub fn facet_neighbors(&self, index: usize) -> Vec<FacetNeighbor> {
        let cell = self.leaves[index];
        let a = cell.anchor();
        let s = cell.size() as i64;
        let (x0, y0) = (a[0] as i64, a[1] as i64);
        let mut out = Vec::with_capacity(4);
        for side in Side::ALL {
            // Walk along the side, probing just outside.
            let (fixed, start, vertical) = match side {
                Side::Left => (x0 - 1, y0, true),
                Side::Right => (x0 + s, y0, true),
                Side::Bottom => (y0 - 1, x0, false),
                Side::Top => (y0 + s, x0, false),
            };
            let line = match side {
                Side::Left => x0,
                Side::Right => x0 + s,
                Side::Bottom => y0,
                Side::Top => y0 + s,
            };
            let end = start + s;
            let mut t = start;
            while t < end {
                let probe = if vertical { (fixed, t) } else { (t, fixed) };
                let Some(j) = self.locate_signed(probe.0, probe.1) else { break };
                let nb = self.leaves[j];
                let na = nb.anchor();
                let ns = nb.size() as i64;
                let (nlo, nhi) = if vertical {
                    (na[1] as i64, na[1] as i64 + ns)
                } else {
                    (na[0] as i64, na[0] as i64 + ns)
                };
                let lo = nlo.max(start);
                let hi = nhi.min(end);
                let shared = if vertical {
                    [[line as u32, lo as u32], [line as u32, hi as u32]]
                } else {
                    [[lo as u32, line as u32], [hi as u32, line as u32]]
                };
                out.push(FacetNeighbor { index: j, cell: nb, side, shared });
                t = hi;
            }
        }
        out
    }

    /// Leaves whose closure intersects the closure of leaf `index` (excluding itself).
    pub fn touching_leaves(&self, index: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.facet_neighbors(index).iter().map(|f| f.index).collect();
        let probes = Self::probes(self.leaves[index]);
        for &(px, py) in &probes[4..] {
            if let Some(j) = self.locate_signed(px, py) {
                out.push(j);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// True when all touching leaf pairs differ by at most one level.
    pub fn is_balanced(&self) -> bool {
        self.leaves.iter().all(|&cell| {
            Self::probes(cell).iter().all(|&(px, py)| match self.locate_signed(px, py) {
                Some(j) => self.leaves[j].level + 1 >= cell.level,
                None => true,
            })
        })
    }

    /// Sum of leaf areas; equals the box area for a valid mesh.
    pub fn covered_area(&self) -> f64 {
        (0..self.len()).map(|i| self.cell_area(i)).sum()
    }

    /// Builds the VEF table of all leaves.
    pub fn build_vef_table(&self) -> Result<VefTable> {
        self.build_vef_table_filtered(|_| true)
    }

    /// Builds the VEF table of the leaves selected by `keep` (for instance the
    /// active mesh). Hanging VEFs are determined within the selected leaves.
    pub fn build_vef_table_filtered(&self, keep: impl Fn(usize) -> bool) -> Result<VefTable> {
        if !self.is_balanced() {
            return Err(Error::InvariantViolation(
                "VEF table requires a 2:1-balanced mesh".into(),
            ));
        }
        let mut vertex_index: HashMap<[u32; 2], usize> = HashMap::new();
        let mut vertices = Vec::new();
        let mut edge_index: HashMap<[[u32; 2]; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut cell_vertices = vec![None; self.len()];
        let mut cell_edges = vec![None; self.len()];
        for (i, cell) in self.leaves.iter().enumerate() {
            if !keep(i) {
                continue;
            }
            let corners = cell.corners();
            let mut vs = [0usize; 4];
            for (k, p) in corners.iter().enumerate() {
                vs[k] = *vertex_index.entry(*p).or_insert_with(|| {
                    vertices.push(*p);
                    vertices.len() - 1
                });
            }
            let mut es = [0usize; 4];
            for (k, (a, b)) in LOCAL_EDGES.iter().enumerate() {
                let key = [corners[*a], corners[*b]];
                es[k] = *edge_index.entry(key).or_insert_with(|| {
                    edges.push([vs[*a], vs[*b]]);
                    edges.len() - 1
                });
            }
            cell_vertices[i] = Some(vs);
            cell_edges[i] = Some(es);
        }
        let mut hanging = Vec::new();
        let mut vertex_owner = HashMap::new();
        for (e, &[a, b]) in edges.iter().enumerate() {
            let (pa, pb) = (vertices[a], vertices[b]);
            if (pa[0] ^ pb[0]) & 1 == 1 || (pa[1] ^ pb[1]) & 1 == 1 {
                continue;
            }
            let mid = [(pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2];
            let Some(&m) = vertex_index.get(&mid) else { continue };
            hanging.push((Vef::Vertex(m), Vef::Edge(e)));
            vertex_owner.insert(m, e);
            for half in [[pa, mid], [mid, pb]] {
                if let Some(&he) = edge_index.get(&half) {
                    hanging.push((Vef::Edge(he), Vef::Edge(e)));
                }
            }
        }
        let coords = vertices.iter().map(|&p| self.domain.to_physical(p)).collect();
        Ok(VefTable {
            vertices,
            vertex_coords: coords,
            edges,
            cell_vertices,
            cell_edges,
            hanging,
            hanging_vertex_owner: vertex_owner,
        })
    }
}

/// Local edges as pairs of local vertices: bottom, top, left, right.
pub const LOCAL_EDGES: [(usize, usize); 4] = [(0, 1), (2, 3), (0, 2), (1, 3)];

/// A vertex or an edge of the mesh skeleton.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Vef {
    Vertex(usize),
    Edge(usize),
}

/// Deduplicated vertices and edges with the hanging-VEF ownership map.
#[derive(Clone, Debug)]
pub struct VefTable {
    /// Lattice coordinates of every vertex.
    pub vertices: Vec<[u32; 2]>,
    pub vertex_coords: Vec<[f64; 2]>,
    /// Endpoint vertices of every edge.
    pub edges: Vec<[usize; 2]>,
    /// Per-leaf local-to-global vertex map (`None` for filtered-out leaves).
    pub cell_vertices: Vec<Option<[usize; 4]>>,
    /// Per-leaf local-to-global edge map, edges ordered as [`LOCAL_EDGES`].
    pub cell_edges: Vec<Option<[usize; 4]>>,
    /// `(hanging, owner)` pairs.
    pub hanging: Vec<(Vef, Vef)>,
    /// Hanging vertex → owner edge.
    pub hanging_vertex_owner: HashMap<usize, usize>,
}

impl VefTable {
    /// Lattice closure of a VEF as an axis-aligned segment.
    pub fn closure(&self, v: Vef) -> [[u32; 2]; 2] {
        match v {
            Vef::Vertex(i) => [self.vertices[i], self.vertices[i]],
            Vef::Edge(e) => [self.vertices[self.edges[e][0]], self.vertices[self.edges[e][1]]],
        }
    }

    pub fn is_hanging_vertex(&self, v: usize) -> bool {
        self.hanging_vertex_owner.contains_key(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(level: u32) -> ForestMesh {
        ForestMesh::new_uniform(BoxDomain::unit(), level).unwrap()
    }

    #[test]
    fn uniform_meshes() {
        let m0 = uniform(0);
        assert_eq!(m0.len(), 1);
        assert_eq!(m0.cell_bounds(0), ([0.0, 0.0], [1.0, 1.0]));

        let m2 = uniform(2);
        assert_eq!(m2.len(), 16);
        for i in 0..16 {
            assert!((m2.cell_h(i) - 0.25).abs() < 1e-15);
        }

        let m3 = ForestMesh::new_uniform(BoxDomain::symmetric(), 3).unwrap();
        assert_eq!(m3.len(), 64);
        assert!((m3.cell_h(17) - 0.25).abs() < 1e-15);
        assert!((m3.covered_area() - 4.0).abs() <= 4.0 * 1e-12);
        assert!(m3.is_balanced());

        assert!(ForestMesh::new_uniform(BoxDomain::unit(), 31).is_err());
    }

    #[test]
    fn bad_box_rejected() {
        assert!(BoxDomain::new([0.0, 0.0], [0.0, 1.0]).is_err());
        assert!(BoxDomain::new([1.0, 0.0], [0.0, 1.0]).is_err());
    }

    #[test]
    fn morton_roundtrip_and_order() {
        let c = CellId::from_coords(5, 19, 7);
        assert_eq!(c.coords(), [19, 7]);
        assert_eq!(c.children()[3].parent(), Some(c));
        assert!(CellId::new(1, 4).is_err());
        let m = uniform(3);
        assert!(m.keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn refine_counts() {
        let m1 = uniform(1);
        let (r, map) = m1.refine(&[true, false, false, false]).unwrap();
        assert_eq!(r.len(), 7);
        assert_eq!(map, vec![0, 0, 0, 0, 1, 2, 3]);

        let (same, id) = m1.refine(&[false; 4]).unwrap();
        assert_eq!(same.leaves(), m1.leaves());
        assert_eq!(id, vec![0, 1, 2, 3]);
        assert_eq!(same.generation(), m1.generation());

        let (all, _) = m1.refine(&[true; 4]).unwrap();
        assert_eq!(all.len(), 16);
        assert!(m1.refine(&[true]).is_err());
    }

    #[test]
    fn balance_staircase() {
        // Refine the lower-left cell of a level-2 mesh twice: the level-4 cells
        // then touch level-2 neighbours, which must be refined once.
        let m = uniform(2);
        let mut flags = vec![false; m.len()];
        flags[m.index_of(CellId::from_coords(2, 1, 1)).unwrap()] = true;
        let (m, _) = m.refine(&flags).unwrap();
        let mut flags = vec![false; m.len()];
        flags[m.index_of(CellId::from_coords(3, 3, 3)).unwrap()] = true;
        let (m, _) = m.refine(&flags).unwrap();
        assert!(!m.is_balanced());
        let (b, map) = m.enforce_two_one_balance();
        assert!(b.is_balanced());
        assert_eq!(map.len(), b.len());
        // Level-2 neighbours (2,1), (1,2), (2,2) of the refined level-3 corner get split.
        for (i, j) in [(2, 1), (1, 2), (2, 2)] {
            assert!(b.index_of(CellId::from_coords(2, i, j)).is_none());
            assert!(b.index_of(CellId::from_coords(3, 2 * i, 2 * j)).is_some());
        }
        // Far cells untouched.
        assert!(b.index_of(CellId::from_coords(2, 3, 3)).is_some());
        let (bb, _) = b.enforce_two_one_balance();
        assert_eq!(bb.leaves(), b.leaves());
    }

    #[test]
    fn single_refinement_needs_no_balancing() {
        let m = uniform(2);
        let mut flags = vec![false; 16];
        flags[5] = true;
        let (r, _) = m.refine(&flags).unwrap();
        let (b, _) = r.enforce_two_one_balance();
        assert_eq!(b.leaves(), r.leaves());
    }

    #[test]
    fn facet_neighbors_uniform_and_hanging() {
        let m = uniform(2);
        let interior = m.index_of(CellId::from_coords(2, 1, 1)).unwrap();
        assert_eq!(m.facet_neighbors(interior).len(), 4);
        let corner = m.index_of(CellId::from_coords(2, 0, 0)).unwrap();
        assert_eq!(m.facet_neighbors(corner).len(), 2);

        let mut flags = vec![false; 16];
        flags[m.index_of(CellId::from_coords(2, 2, 1)).unwrap()] = true;
        let (r, _) = m.refine(&flags).unwrap();
        let coarse = r.index_of(CellId::from_coords(2, 1, 1)).unwrap();
        let nbs = r.facet_neighbors(coarse);
        let right: Vec<_> = nbs.iter().filter(|n| n.side == Side::Right).collect();
        assert_eq!(right.len(), 2);
        assert!(right.iter().all(|n| n.cell.level == 3));
        // Symmetry: each fine cell sees the coarse one.
        for n in right {
            assert!(r.facet_neighbors(n.index).iter().any(|f| f.index == coarse));
        }
    }

    #[test]
    fn vef_table_hanging_entries() {
        let m = uniform(2);
        assert!(m.build_vef_table().unwrap().hanging.is_empty());

        let mut flags = vec![false; 16];
        flags[m.index_of(CellId::from_coords(2, 1, 1)).unwrap()] = true;
        let (r, _) = m.refine(&flags).unwrap();
        let t = r.build_vef_table().unwrap();
        // 4 coarse edges, each with 1 hanging vertex + 2 hanging half-edges.
        assert_eq!(t.hanging.len(), 12);
        assert_eq!(t.hanging_vertex_owner.len(), 4);
        for &(g, owner) in &t.hanging {
            let [a, b] = t.closure(owner);
            let [ga, gb] = t.closure(g);
            for p in [ga, gb] {
                assert!(p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]));
                assert!(p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1]));
            }
            assert!(matches!(owner, Vef::Edge(_)));
        }
    }

    #[test]
    fn unbalanced_vef_table_is_an_error() {
        let m = uniform(2);
        let mut flags = vec![false; 16];
        flags[0] = true;
        let (m, _) = m.refine(&flags).unwrap();
        let mut flags = vec![false; m.len()];
        flags[3] = true;
        let (m, _) = m.refine(&flags).unwrap();
        assert!(!m.is_balanced());
        assert!(m.build_vef_table().is_err());
    }
}
