//! Cell aggregation: every ill-posed cell is mapped to a well-posed root cell.
//!
//! Aggregates grow in rounds. In round `k` an unaggregated ill-posed cell `T`
//! looks at its facet neighbours `T'` that were aggregated in earlier rounds and
//! whose shared facet meets Ω, and attaches to the root `R(T')` minimizing
//!
//! ```text
//! d̃(T, T') = max ‖x_γ - x_δ‖_∞ / max ‖x_γ - x_γ'‖_∞,   γ, γ' ∈ verts(R(T')), δ ∈ verts(T)
//! ```
//!
//! Ties go to the root with the higher position in the leaf order.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::{segment_meets_domain, CellClass, CellClasses, LevelSet};
use crate::mesh::ForestMesh;

/// Root map `R` together with the attachment records.
#[derive(Clone, Debug, PartialEq)]
pub struct RootCellMap {
    /// `R(T)` for active leaves, `None` for exterior ones.
    pub root: Vec<Option<usize>>,
    /// Round in which the leaf joined its aggregate (0 for roots).
    pub round: Vec<Option<usize>>,
    /// Facet neighbour through which an ill-posed leaf attached.
    pub partner: Vec<Option<usize>>,
    /// Winning `d̃` of an ill-posed leaf.
    pub distance: Vec<Option<f64>>,
}

impl RootCellMap {
    /// Members of each aggregate, keyed by root, in leaf order.
    pub fn aggregates(&self) -> Vec<(usize, Vec<usize>)> {
        let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, r) in self.root.iter().enumerate() {
            if let Some(r) = r {
                by_root.entry(*r).or_default().push(i);
            }
        }
        by_root.into_iter().collect()
    }

    pub fn max_round(&self) -> usize {
        self.round.iter().flatten().copied().max().unwrap_or(0)
    }

    pub fn max_distance(&self) -> f64 {
        self.distance.iter().flatten().copied().fold(0.0, f64::max)
    }
}

fn corners(mesh: &ForestMesh, i: usize) -> [[f64; 2]; 4] {
    let (lo, hi) = mesh.cell_bounds(i);
    [lo, [hi[0], lo[1]], [lo[0], hi[1]], hi]
}

/// `d̃` between cell `t` and root `r`.
pub fn relative_distance(mesh: &ForestMesh, t: usize, r: usize) -> f64 {
    let inf = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).abs().max((a[1] - b[1]).abs());
    let cr = corners(mesh, r);
    let ct = corners(mesh, t);
    let num = cr.iter().flat_map(|a| ct.iter().map(move |b| inf(*a, *b))).fold(0.0, f64::max);
    let den = cr.iter().flat_map(|a| cr.iter().map(move |b| inf(*a, *b))).fold(0.0, f64::max);
    num / den
}

/// Builds the root map. Facet intersections with Ω are tested by sampling `ls`.
pub fn build_root_map(
    mesh: &ForestMesh,
    classes: &CellClasses,
    ls: &LevelSet,
) -> Result<RootCellMap> {
    let n = mesh.len();
    if classes.class.len() != n {
        return Err(Error::Parameter("cell classes do not match the mesh".into()));
    }
    let mut map = RootCellMap {
        root: vec![None; n],
        round: vec![None; n],
        partner: vec![None; n],
        distance: vec![None; n],
    };
    let mut pending = Vec::new();
    for (i, c) in classes.class.iter().enumerate() {
        match c {
            CellClass::WellPosed => {
                map.root[i] = Some(i);
                map.round[i] = Some(0);
            }
            CellClass::IllPosed => pending.push(i),
            CellClass::Exterior => {}
        }
    }
    if !pending.is_empty() && classes.count(CellClass::WellPosed) == 0 {
        return Err(Error::AggregationFailure { cell: mesh.cell(pending[0]), index: pending[0] });
    }
    let mut k = 0;
    while !pending.is_empty() {
        k += 1;
        let mut attach = Vec::new();
        let mut still = Vec::new();
        for &t in &pending {
            let mut best: Option<(f64, usize, usize)> = None;
            for nb in mesh.facet_neighbors(t) {
                let tp = nb.index;
                let Some(r) = map.root[tp] else { continue };
                if map.round[tp].is_none_or(|rk| rk >= k) {
                    continue;
                }
                let a = mesh.to_physical(nb.shared[0]);
                let b = mesh.to_physical(nb.shared[1]);
                if !segment_meets_domain(ls, a, b) {
                    continue;
                }
                let d = relative_distance(mesh, t, r);
                let better = match best {
                    None => true,
                    Some((bd, br, _)) => d < bd - 1e-12 || ((d - bd).abs() <= 1e-12 && r > br),
                };
                if better {
                    best = Some((d, r, tp));
                }
            }
            match best {
                Some(b) => attach.push((t, b)),
                None => still.push(t),
            }
        }
        if attach.is_empty() {
            let t = still[0];
            return Err(Error::AggregationFailure { cell: mesh.cell(t), index: t });
        }
        for (t, (d, r, tp)) in attach {
            map.root[t] = Some(r);
            map.round[t] = Some(k);
            map.partner[t] = Some(tp);
            map.distance[t] = Some(d);
        }
        pending = still;
    }
    Ok(map)
}

/// Summary checks of a root map.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateDiagnostics {
    /// Largest aggregate bounding-box side divided by its root's `h_T`.
    pub max_size_ratio: f64,
    pub max_members: usize,
    pub max_round: usize,
    pub max_distance: f64,
    /// Every aggregate is facet-connected through its attachment partners.
    pub connected: bool,
    /// Aggregates partition the active cells and roots are well-posed.
    pub partition_ok: bool,
}

pub fn validate_aggregates(
    map: &RootCellMap,
    mesh: &ForestMesh,
    classes: &CellClasses,
) -> AggregateDiagnostics {
    let mut partition_ok = map.root.len() == mesh.len();
    for i in 0..mesh.len().min(map.root.len()) {
        match (classes.class[i], map.root[i]) {
            (CellClass::Exterior, None) => {}
            (CellClass::WellPosed, Some(r)) => partition_ok &= r == i,
            (CellClass::IllPosed, Some(r)) => {
                partition_ok &= classes.class[r] == CellClass::WellPosed
            }
            _ => partition_ok = false,
        }
    }
    let mut connected = true;
    let mut max_size_ratio: f64 = 0.0;
    let mut max_members = 0;
    for (r, members) in map.aggregates() {
        max_members = max_members.max(members.len());
        // Walk from the root along partner links in reverse.
        let mut seen = vec![false; members.len()];
        let pos = |c: usize| members.binary_search(&c).ok();
        let mut queue = VecDeque::new();
        if let Some(p) = pos(r) {
            seen[p] = true;
            queue.push_back(r);
        }
        while let Some(c) = queue.pop_front() {
            for (k, &m) in members.iter().enumerate() {
                if !seen[k] && map.partner[m] == Some(c) {
                    let shares_facet = mesh.facet_neighbors(m).iter().any(|f| f.index == c);
                    if shares_facet {
                        seen[k] = true;
                        queue.push_back(m);
                    }
                }
            }
        }
        connected &= seen.iter().all(|&s| s);
        let (mut lo, mut hi) = mesh.cell_bounds(r);
        for &m in &members {
            let (a, b) = mesh.cell_bounds(m);
            for d in 0..2 {
                lo[d] = lo[d].min(a[d]);
                hi[d] = hi[d].max(b[d]);
            }
        }
        let side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        max_size_ratio = max_size_ratio.max(side / mesh.cell_h(r));
    }
    AggregateDiagnostics {
        max_size_ratio,
        max_members,
        max_round: map.max_round(),
        max_distance: map.max_distance(),
        connected,
        partition_ok,
    }
}
