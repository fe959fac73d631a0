//! Q1 spaces on the active mesh: dof numbering, hanging constraints, dof
//! classification and the aggregated constraint set.
//!
//! Local vertex order on a cell is (0,0), (1,0), (0,1), (1,1) and the bilinear
//! basis is `φ0 = (1-ξ)(1-η)`, `φ1 = ξ(1-η)`, `φ2 = (1-ξ)η`, `φ3 = ξη`.
//!
//! Constrained dofs are eliminated by expressing them through well-posed free
//! dofs:
//!
//! * well-posed hanging dofs keep their hanging constraint,
//! * ill-posed free dofs are extrapolated from the root cell of an ill-posed cell
//!   around them, with hanging root dofs substituted by their own masters,
//! * ill-posed hanging dofs substitute the extrapolation of any ill-posed master.

use std::collections::BTreeMap;

use crate::aggregation::{build_root_map, RootCellMap};
use crate::error::{Error, Result};
use crate::geometry::{CellClasses, LevelSet};
use crate::mesh::{ForestMesh, VefTable};

/// Drop threshold for constraint coefficients.
pub const COEFF_TOL: f64 = 1e-12;

/// Bilinear basis values on `[lo, hi]` at `x` (also outside the cell).
pub fn q1_basis(lo: [f64; 2], hi: [f64; 2], x: [f64; 2]) -> [f64; 4] {
    let xi = (x[0] - lo[0]) / (hi[0] - lo[0]);
    let eta = (x[1] - lo[1]) / (hi[1] - lo[1]);
    [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), (1.0 - xi) * eta, xi * eta]
}

/// Physical gradients of the bilinear basis.
pub fn q1_grad(lo: [f64; 2], hi: [f64; 2], x: [f64; 2]) -> [[f64; 2]; 4] {
    let (hx, hy) = (hi[0] - lo[0], hi[1] - lo[1]);
    let xi = (x[0] - lo[0]) / hx;
    let eta = (x[1] - lo[1]) / hy;
    [
        [-(1.0 - eta) / hx, -(1.0 - xi) / hy],
        [(1.0 - eta) / hx, -xi / hy],
        [-eta / hx, (1.0 - xi) / hy],
        [eta / hx, xi / hy],
    ]
}

/// Global dofs of the active mesh.
#[derive(Clone, Debug)]
pub struct DofTable {
    pub coords: Vec<[f64; 2]>,
    pub lattice: Vec<[u32; 2]>,
    /// Per leaf; `None` for exterior leaves.
    pub cell_dofs: Vec<Option<[usize; 4]>>,
    /// Physical bounds of every leaf.
    pub cell_box: Vec<([f64; 2], [f64; 2])>,
    /// Active leaves having the dof as a vertex.
    pub support: Vec<Vec<usize>>,
    pub hanging: Vec<bool>,
    /// VEF table of the active leaves; vertex ids coincide with dof ids.
    pub vef: VefTable,
}

impl DofTable {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// FE function with nodal `values`, evaluated through cell `c`.
    pub fn eval_cell(&self, c: usize, values: &[f64], x: [f64; 2]) -> f64 {
        let (lo, hi) = self.cell_box[c];
        let dofs = self.cell_dofs[c].expect("active cell");
        let b = q1_basis(lo, hi, x);
        (0..4).map(|k| b[k] * values[dofs[k]]).sum()
    }
}

/// Numbers the vertices of active leaves in leaf order (first encounter).
pub fn distribute_dofs(mesh: &ForestMesh, classes: &CellClasses) -> Result<DofTable> {
    distribute_dofs_filtered(mesh, |i| classes.is_active(i))
}

/// Dof table over the leaves selected by `keep` only.
pub fn distribute_dofs_filtered(mesh: &ForestMesh, keep: impl Fn(usize) -> bool) -> Result<DofTable> {
    let vef = mesh.build_vef_table_filtered(keep)?;
    let n = vef.vertices.len();
    let mut support = vec![Vec::new(); n];
    for (c, vs) in vef.cell_vertices.iter().enumerate() {
        if let Some(vs) = vs {
            for &v in vs {
                support[v].push(c);
            }
        }
    }
    let hanging = (0..n).map(|v| vef.is_hanging_vertex(v)).collect();
    Ok(DofTable {
        coords: vef.vertex_coords.clone(),
        lattice: vef.vertices.clone(),
        cell_dofs: vef.cell_vertices.clone(),
        cell_box: (0..mesh.len()).map(|i| mesh.cell_bounds(i)).collect(),
        support,
        hanging,
        vef,
    })
}

/// Origin of a constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    /// Hanging-node interpolation.
    H,
    /// Extrapolation from a root cell.
    A,
    /// Hanging constraint with extrapolated masters.
    HA,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    /// `(master dof, coefficient)`, sorted by dof.
    pub masters: Vec<(usize, f64)>,
    pub provenance: Provenance,
}

/// Linear constraints `u_σ = Σ C_σσ' u_σ'` and the numbering of free dofs.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    pub n_dofs: usize,
    pub constraints: Vec<Option<Constraint>>,
    /// Free dof ids in increasing order; position = reduced index.
    pub free: Vec<usize>,
    pub free_index: Vec<Option<usize>>,
    /// Root cell used to extrapolate each ill-posed free dof.
    pub k_map: Vec<Option<usize>>,
}

impl ConstraintSet {
    fn from_parts(
        n_dofs: usize,
        constraints: Vec<Option<Constraint>>,
        is_free: impl Fn(usize) -> bool,
        k_map: Vec<Option<usize>>,
    ) -> Self {
        let free: Vec<usize> = (0..n_dofs).filter(|&d| is_free(d)).collect();
        let mut free_index = vec![None; n_dofs];
        for (k, &d) in free.iter().enumerate() {
            free_index[d] = Some(k);
        }
        Self { n_dofs, constraints, free, free_index, k_map }
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn n_constrained(&self) -> usize {
        self.constraints.iter().filter(|c| c.is_some()).count()
    }

    pub fn get(&self, dof: usize) -> Option<&Constraint> {
        self.constraints[dof].as_ref()
    }

    /// Expresses `dof` in reduced indices. Dofs that are neither free nor
    /// constrained (none exist in a valid set) expand to nothing.
    pub fn expand(&self, dof: usize) -> Vec<(usize, f64)> {
        if let Some(k) = self.free_index[dof] {
            return vec![(k, 1.0)];
        }
        match &self.constraints[dof] {
            Some(c) => c
                .masters
                .iter()
                .filter_map(|&(m, w)| self.free_index[m].map(|k| (k, w)))
                .collect(),
            None => Vec::new(),
        }
    }

    /// Fills constrained entries from free values.
    pub fn prolongate(&self, free_values: &[f64]) -> Result<Vec<f64>> {
        if free_values.len() != self.free.len() {
            return Err(Error::Parameter(format!(
                "prolongation expects {} free values, got {}",
                self.free.len(),
                free_values.len()
            )));
        }
        let mut out = vec![0.0; self.n_dofs];
        for (k, &d) in self.free.iter().enumerate() {
            out[d] = free_values[k];
        }
        for (d, c) in self.constraints.iter().enumerate() {
            if let Some(c) = c {
                out[d] = c
                    .masters
                    .iter()
                    .map(|&(m, w)| w * free_values[self.free_index[m].expect("master is free")])
                    .sum();
            }
        }
        Ok(out)
    }

    /// Largest `|C_σσ'|`.
    pub fn max_coefficient(&self) -> f64 {
        self.constraints
            .iter()
            .flatten()
            .flat_map(|c| c.masters.iter().map(|m| m.1.abs()))
            .fold(0.0, f64::max)
    }

    /// Checks master containment and the one-hop (acyclic) structure.
    pub fn check_masters(&self) -> Result<()> {
        for (d, c) in self.constraints.iter().enumerate() {
            let Some(c) = c else { continue };
            if self.free_index[d].is_some() {
                return Err(Error::Constraint { dof: d, reason: "dof is both free and constrained".into() });
            }
            for &(m, _) in &c.masters {
                if self.free_index[m].is_none() {
                    return Err(Error::Constraint {
                        dof: d,
                        reason: format!("master {m} is not a well-posed free dof"),
                    });
                }
            }
        }
        Ok(())
    }
}

fn merge(terms: impl IntoIterator<Item = (usize, f64)>) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for (m, w) in terms {
        *acc.entry(m).or_insert(0.0) += w;
    }
    acc.into_iter().filter(|(_, w)| w.abs() >= COEFF_TOL).collect()
}

/// Hanging constraints: each edge-midpoint hanging dof is the mean of the owner
/// edge's endpoints. Only hanging dofs carry constraints; all others are free.
pub fn hanging_constraints(dofs: &DofTable) -> Result<ConstraintSet> {
    let n = dofs.len();
    let mut constraints = vec![None; n];
    for (&v, &e) in &dofs.vef.hanging_vertex_owner {
        let [a, b] = dofs.vef.edges[e];
        for m in [a, b] {
            if dofs.hanging[m] {
                return Err(Error::Constraint {
                    dof: v,
                    reason: format!("owner edge endpoint {m} is itself hanging"),
                });
            }
        }
        // Coarse Q1 shape values at the midpoint.
        constraints[v] = Some(Constraint {
            masters: merge([(a, 0.5), (b, 0.5)]),
            provenance: Provenance::H,
        });
    }
    Ok(ConstraintSet::from_parts(n, constraints, |d| !dofs.hanging[d], vec![None; n]))
}

/// The standard conforming space: all non-hanging dofs are free.
pub fn standard_constraints(dofs: &DofTable, hanging: &ConstraintSet) -> ConstraintSet {
    ConstraintSet::from_parts(dofs.len(), hanging.constraints.clone(), |d| !dofs.hanging[d], vec![
        None;
        dofs.len()
    ])
}

/// Well/ill-posed × free/hanging label of a dof.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DofClass {
    WellFree,
    WellHanging,
    IllFree,
    IllHanging,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DofClassification {
    pub class: Vec<DofClass>,
}

impl DofClassification {
    pub fn count(&self, c: DofClass) -> usize {
        self.class.iter().filter(|&&x| x == c).count()
    }
}

/// A dof is well-posed when it touches a well-posed cell, or (if free) when it
/// masters a well-posed hanging dof.
pub fn classify_dofs(
    dofs: &DofTable,
    classes: &CellClasses,
    hanging: &ConstraintSet,
) -> DofClassification {
    let n = dofs.len();
    let well_support: Vec<bool> =
        (0..n).map(|d| dofs.support[d].iter().any(|&c| classes.is_well_posed(c))).collect();
    let mut masters_wh = vec![false; n];
    for d in 0..n {
        if dofs.hanging[d] && well_support[d] {
            if let Some(c) = hanging.get(d) {
                for &(m, _) in &c.masters {
                    masters_wh[m] = true;
                }
            }
        }
    }
    let class = (0..n)
        .map(|d| match (dofs.hanging[d], well_support[d] || masters_wh[d]) {
            (true, _) if well_support[d] => DofClass::WellHanging,
            (true, _) => DofClass::IllHanging,
            (false, true) => DofClass::WellFree,
            (false, false) => DofClass::IllFree,
        })
        .collect();
    DofClassification { class }
}

/// `K(σ)`: the largest root index among the ill-posed cells around `d`.
pub fn ill_free_root(dofs: &DofTable, roots: &RootCellMap, d: usize) -> Option<usize> {
    dofs.support[d].iter().filter_map(|&c| roots.root[c].filter(|&r| r != c)).max()
}

/// Extrapolation of the root cell's Q1 function to dof `d`, with well-posed
/// hanging root dofs replaced by their hanging masters.
pub fn extrapolation_constraint(
    dofs: &DofTable,
    class: impl Fn(usize) -> DofClass,
    hanging: &ConstraintSet,
    d: usize,
    root: usize,
) -> Result<Constraint> {
    let root_dofs = dofs.cell_dofs[root].ok_or_else(|| Error::Constraint {
        dof: d,
        reason: format!("root cell {root} is not available"),
    })?;
    let (lo, hi) = dofs.cell_box[root];
    let b = q1_basis(lo, hi, dofs.coords[d]);
    let mut terms = Vec::with_capacity(8);
    for k in 0..4 {
        let w = b[k];
        if w.abs() < COEFF_TOL {
            continue;
        }
        let s = root_dofs[k];
        match class(s) {
            DofClass::WellFree => terms.push((s, w)),
            DofClass::WellHanging => {
                let h = hanging.get(s).ok_or_else(|| Error::Constraint {
                    dof: d,
                    reason: format!("hanging root dof {s} has no hanging constraint"),
                })?;
                terms.extend(h.masters.iter().map(|&(m, c)| (m, w * c)));
            }
            _ => {
                return Err(Error::Constraint {
                    dof: d,
                    reason: format!("root cell {root} carries non-well-posed dof {s}"),
                })
            }
        }
    }
    Ok(Constraint { masters: merge(terms), provenance: Provenance::A })
}

/// Hanging constraint of an ill-posed hanging dof with its ill-posed free
/// masters replaced by their extrapolations.
pub fn ill_hanging_constraint(
    h: &Constraint,
    class: impl Fn(usize) -> DofClass,
    mut extrapolate: impl FnMut(usize) -> Result<Constraint>,
) -> Result<Constraint> {
    let mut terms = Vec::new();
    let mut mixed = false;
    for &(m, w) in &h.masters {
        if class(m) == DofClass::IllFree {
            let a = extrapolate(m)?;
            terms.extend(a.masters.iter().map(|&(mm, c)| (mm, w * c)));
            mixed = true;
        } else {
            terms.push((m, w));
        }
    }
    let provenance = if mixed { Provenance::HA } else { Provenance::H };
    Ok(Constraint { masters: merge(terms), provenance })
}

/// The unified aggregated constraint set over the well-posed free dofs.
pub fn aggregation_constraints(
    dofs: &DofTable,
    classif: &DofClassification,
    roots: &RootCellMap,
    hanging: &ConstraintSet,
) -> Result<ConstraintSet> {
    let n = dofs.len();
    let class = |d: usize| classif.class[d];
    let mut constraints: Vec<Option<Constraint>> = vec![None; n];
    let mut k_map = vec![None; n];
    for d in 0..n {
        if class(d) != DofClass::IllFree {
            continue;
        }
        let root = ill_free_root(dofs, roots, d).ok_or_else(|| Error::Constraint {
            dof: d,
            reason: "ill-posed free dof has no surrounding ill-posed cell".into(),
        })?;
        k_map[d] = Some(root);
        constraints[d] = Some(extrapolation_constraint(dofs, class, hanging, d, root)?);
    }
    for d in 0..n {
        let Some(h) = hanging.get(d) else { continue };
        constraints[d] = Some(match class(d) {
            DofClass::WellHanging => h.clone(),
            DofClass::IllHanging => ill_hanging_constraint(h, class, |m| {
                Ok(constraints[m].clone().expect("ill-posed free dof resolved"))
            })?,
            _ => unreachable!("hanging dofs are classified as hanging"),
        });
    }
    let set = ConstraintSet::from_parts(n, constraints, |d| class(d) == DofClass::WellFree, k_map);
    set.check_masters()?;
    Ok(set)
}

/// Which of the two spaces to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceKind {
    Aggregated,
    Standard,
}

/// A complete constrained Q1 space on the active mesh.
#[derive(Clone, Debug)]
pub struct FeSpace {
    pub kind: SpaceKind,
    pub dofs: DofTable,
    pub classification: DofClassification,
    pub hanging: ConstraintSet,
    pub constraints: ConstraintSet,
    pub roots: Option<RootCellMap>,
}

impl FeSpace {
    pub fn build(
        mesh: &ForestMesh,
        classes: &CellClasses,
        ls: &LevelSet,
        kind: SpaceKind,
    ) -> Result<Self> {
        let dofs = distribute_dofs(mesh, classes)?;
        let hanging = hanging_constraints(&dofs)?;
        let classification = classify_dofs(&dofs, classes, &hanging);
        let (constraints, roots) = match kind {
            SpaceKind::Standard => (standard_constraints(&dofs, &hanging), None),
            SpaceKind::Aggregated => {
                let roots = build_root_map(mesh, classes, ls)?;
                let cs = aggregation_constraints(&dofs, &classification, &roots, &hanging)?;
                (cs, Some(roots))
            }
        };
        Ok(Self { kind, dofs, classification, hanging, constraints, roots })
    }

    pub fn n_free(&self) -> usize {
        self.constraints.n_free()
    }

    /// Nodal interpolant of `f` restricted to the free dofs.
    pub fn interpolate_free(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.constraints.free.iter().map(|&d| f(self.dofs.coords[d])).collect()
    }
}

/// Largest jump of the FE function with nodal `values` across facets between
/// active leaves of different levels, sampled at 10 points per facet.
pub fn max_hanging_jump(mesh: &ForestMesh, dofs: &DofTable, values: &[f64]) -> f64 {
    let mut jump: f64 = 0.0;
    for c in 0..mesh.len() {
        if dofs.cell_dofs[c].is_none() {
            continue;
        }
        for nb in mesh.facet_neighbors(c) {
            if dofs.cell_dofs[nb.index].is_none() || nb.cell.level >= mesh.cell(c).level {
                continue;
            }
            let a = mesh.to_physical(nb.shared[0]);
            let b = mesh.to_physical(nb.shared[1]);
            for k in 0..10 {
                let t = (k as f64 + 0.5) / 10.0;
                let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                let diff = dofs.eval_cell(c, values, x) - dofs.eval_cell(nb.index, values, x);
                jump = jump.max(diff.abs());
            }
        }
    }
    jump
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CellClass;
    use crate::mesh::{BoxDomain, CellId};

    fn refined_mesh(level: u32, refine: &[(u32, u32)]) -> ForestMesh {
        let mesh = ForestMesh::new_uniform(BoxDomain::unit(), level).unwrap();
        let mut flags = vec![false; mesh.len()];
        for &(x, y) in refine {
            flags[mesh.index_of(CellId::from_coords(level as u8, x, y)).unwrap()] = true;
        }
        mesh.refine(&flags).unwrap().0
    }

    fn classes_from(mesh: &ForestMesh, f: impl Fn(CellId) -> CellClass) -> CellClasses {
        let class: Vec<CellClass> = mesh.leaves().iter().map(|&c| f(c)).collect();
        let eta = class
            .iter()
            .map(|c| match c {
                CellClass::WellPosed => 1.0,
                CellClass::IllPosed => 0.1,
                CellClass::Exterior => 0.0,
            })
            .collect();
        CellClasses { class, eta, eta0: 0.5 }
    }

    fn dof_at(dofs: &DofTable, x: [f64; 2]) -> usize {
        dofs.coords
            .iter()
            .position(|c| (c[0] - x[0]).abs() < 1e-12 && (c[1] - x[1]).abs() < 1e-12)
            .unwrap_or_else(|| panic!("no dof at {x:?}"))
    }

    #[test]
    fn basis_extrapolation() {
        assert_eq!(q1_basis([0.0, 0.0], [1.0, 1.0], [2.0, 0.0]), [-1.0, 2.0, 0.0, 0.0]);
        let b = q1_basis([0.0, 0.0], [1.0, 1.0], [1.0, 0.0]);
        assert_eq!(b, [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn dof_counts() {
        let m = ForestMesh::new_uniform(BoxDomain::unit(), 1).unwrap();
        let all = classes_from(&m, |_| CellClass::WellPosed);
        assert_eq!(distribute_dofs(&m, &all).unwrap().len(), 9);

        let r = refined_mesh(1, &[(0, 0)]);
        let all = classes_from(&r, |_| CellClass::WellPosed);
        let dofs = distribute_dofs(&r, &all).unwrap();
        assert_eq!(dofs.len(), 14);
        assert_eq!(dofs.hanging.iter().filter(|&&h| h).count(), 2);

        // Exterior-only vertices disappear.
        let some = classes_from(&m, |c| {
            if c.coords() == [1, 1] { CellClass::Exterior } else { CellClass::WellPosed }
        });
        let dofs = distribute_dofs(&m, &some).unwrap();
        assert_eq!(dofs.len(), 8);
        assert!(dofs.coords.iter().all(|c| *c != [1.0, 1.0]));
    }

    #[test]
    fn hanging_midpoints() {
        let r = refined_mesh(2, &[(1, 1), (2, 1)]);
        let all = classes_from(&r, |_| CellClass::WellPosed);
        let dofs = distribute_dofs(&r, &all).unwrap();
        let h = hanging_constraints(&dofs).unwrap();
        assert_eq!(h.n_constrained(), 6);
        // Midpoint of the coarse edge below the refined pair, under cell (1,0).
        let s = dof_at(&dofs, [0.375, 0.25]);
        let c = h.get(s).unwrap();
        let a = dof_at(&dofs, [0.25, 0.25]);
        let b = dof_at(&dofs, [0.5, 0.25]);
        assert_eq!(c.masters, vec![(a.min(b), 0.5), (a.max(b), 0.5)]);
        // The shared vertical edge between the refined cells is conforming.
        assert!(!dofs.hanging[dof_at(&dofs, [0.5, 0.375])]);
        let uni = ForestMesh::new_uniform(BoxDomain::unit(), 2).unwrap();
        let d = distribute_dofs(&uni, &classes_from(&uni, |_| CellClass::WellPosed)).unwrap();
        assert_eq!(hanging_constraints(&d).unwrap().n_constrained(), 0);
    }

    /// Level-2 mesh with cell (1,1) refined; R = upper-right child. Active cells:
    /// R and (2,1) well-posed, the upper-left child and (1,2) ill-posed.
    fn mixed_mock() -> (ForestMesh, CellClasses, FeSpace) {
        let mesh = refined_mesh(2, &[(1, 1)]);
        let classes = classes_from(&mesh, |c| match (c.level, c.coords()) {
            (3, [3, 3]) | (2, [2, 1]) => CellClass::WellPosed,
            (3, [2, 3]) | (2, [1, 2]) => CellClass::IllPosed,
            _ => CellClass::Exterior,
        });
        let everywhere = LevelSet::custom(|_| -1.0, 1.0);
        let space = FeSpace::build(&mesh, &classes, &everywhere, SpaceKind::Aggregated).unwrap();
        (mesh, classes, space)
    }

    #[test]
    fn free_dof_mastering_well_posed_hanging_dof_is_well_posed() {
        let (_, _, space) = mixed_mock();
        let d = &space.dofs;
        let cls = &space.classification.class;
        assert_eq!(cls[dof_at(d, [0.375, 0.5])], DofClass::WellHanging);
        // Only ill-posed cells around it, but it masters the dof above.
        assert_eq!(cls[dof_at(d, [0.25, 0.5])], DofClass::WellFree);
        assert_eq!(cls[dof_at(d, [0.25, 0.75])], DofClass::IllFree);
        assert_eq!(cls[dof_at(d, [0.25, 0.375])], DofClass::IllFree);
    }

    #[test]
    fn mixed_constraint_matches_two_layer_substitution() {
        let (mesh, _, space) = mixed_mock();
        let d = &space.dofs;
        let sigma = dof_at(d, [0.25, 0.75]);
        let c = space.constraints.get(sigma).unwrap();
        assert_eq!(c.provenance, Provenance::A);
        let root = mesh.index_of(CellId::from_coords(3, 3, 3)).unwrap();
        assert_eq!(space.constraints.k_map[sigma], Some(root));
        // Root [3/8, 1/2]^2 evaluated at (1/4, 3/4): ξ = -1, η = 3 gives
        // (-4, 2, 6, -3); corners 1 and 2 hang on coarse edges with weights 1/2.
        let mut expected = vec![
            (dof_at(d, [0.375, 0.375]), -4.0),
            (dof_at(d, [0.5, 0.25]), 1.0),
            (dof_at(d, [0.5, 0.5]), 1.0),
            (dof_at(d, [0.25, 0.5]), 3.0),
        ];
        expected.sort_by_key(|e| e.0);
        assert_eq!(c.masters.len(), expected.len());
        for (got, want) in c.masters.iter().zip(&expected) {
            assert_eq!(got.0, want.0);
            assert!((got.1 - want.1).abs() < 1e-12, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn coincident_vertex_has_unit_coefficient() {
        let (_, _, space) = mixed_mock();
        // The ill-posed dof (1/4, 3/8) is extrapolated from R = [3/8,1/2]^2:
        // ξ = -1, η = 0 gives weights (2, -1, 0, 0).
        let d = &space.dofs;
        let c = space.constraints.get(dof_at(d, [0.25, 0.375])).unwrap();
        let lookup = |x| c.masters.iter().find(|m| m.0 == dof_at(d, x)).map(|m| m.1);
        assert_eq!(lookup([0.375, 0.375]), Some(2.0));
        assert_eq!(lookup([0.5, 0.25]), Some(-0.5));
        assert_eq!(lookup([0.5, 0.5]), Some(-0.5));
        // Nodal interpolation at a root vertex is the identity.
        let b = q1_basis([0.375, 0.375], [0.5, 0.5], [0.375, 0.375]);
        assert_eq!(b, [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn affine_reproduction_and_partition_of_unity() {
        let (mesh, _, space) = mixed_mock();
        let f = |x: [f64; 2]| 2.0 * x[0] - x[1] + 3.0;
        let full = space.constraints.prolongate(&space.interpolate_free(f)).unwrap();
        for (d, v) in full.iter().enumerate() {
            assert!((v - f(space.dofs.coords[d])).abs() < 1e-12);
        }
        let ones = space.constraints.prolongate(&vec![1.0; space.n_free()]).unwrap();
        assert!(ones.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(max_hanging_jump(&mesh, &space.dofs, &full) < 1e-12);
        assert!(space.constraints.prolongate(&[1.0]).is_err());
    }

    #[test]
    fn all_well_posed_classification() {
        let r = refined_mesh(2, &[(1, 1)]);
        let all = classes_from(&r, |_| CellClass::WellPosed);
        let everywhere = LevelSet::custom(|_| -1.0, 1.0);
        let s = FeSpace::build(&r, &all, &everywhere, SpaceKind::Aggregated).unwrap();
        assert_eq!(s.classification.count(DofClass::IllFree), 0);
        assert_eq!(s.classification.count(DofClass::IllHanging), 0);
        assert_eq!(s.classification.count(DofClass::WellHanging), 4);
        let std = FeSpace::build(&r, &all, &everywhere, SpaceKind::Standard).unwrap();
        assert_eq!(std.constraints, s.constraints);
    }
}
