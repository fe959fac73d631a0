//! Single-process simulation of the distributed-memory setting: space-filling
//! curve partition, ghost layers, the nearest-neighbour exchange of dof
//! well-posedness and per-subdomain constraint resolution.
//!
//! Communication is modelled as explicit restriction of global data to the
//! cells a subdomain can see, followed by merge steps. Data of dofs that are
//! not local to a subdomain (their class and `K(σ)`) is taken from the owner,
//! as an ordinary ghost-dof exchange would provide it.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::assembly::{assemble, assemble_cells, CsrMatrix, WeakFormConfig};
use crate::benchmarks::Benchmark;
use crate::error::{Error, Result};
use crate::fe_space::{
    classify_dofs, distribute_dofs_filtered, extrapolation_constraint, hanging_constraints,
    ill_free_root, ill_hanging_constraint, Constraint, DofClass, DofTable, FeSpace,
};
use crate::geometry::{CellClasses, CutQuadrature};
use crate::mesh::ForestMesh;

/// Coefficient tolerance of the distributed/serial comparison.
pub const EQUALITY_TOL: f64 = 1e-14;

/// Owner subdomain of every leaf and the per-subdomain cell sets.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionLayout {
    pub n_parts: usize,
    pub owner: Vec<usize>,
    /// `T_h^L(S)`, sorted.
    pub local: Vec<Vec<usize>>,
    /// `T_h^TG(S)`: non-local leaves whose closure touches a local leaf.
    pub true_ghost: Vec<Vec<usize>>,
    /// `T_h^RG(S)`: missing remote roots and their coarser neighbours.
    pub remote_ghost: Vec<Vec<usize>>,
}

impl PartitionLayout {
    /// Layout with prescribed owners; ghost sets are left empty.
    pub fn from_owners(mesh: &ForestMesh, n_parts: usize, owner: Vec<usize>) -> Result<Self> {
        if owner.len() != mesh.len() {
            return Err(Error::Parameter(format!(
                "{} owners for {} leaves",
                owner.len(),
                mesh.len()
            )));
        }
        if n_parts == 0 || owner.iter().any(|&o| o >= n_parts) {
            return Err(Error::Parameter(format!("owners must lie in 0..{n_parts}")));
        }
        let mut local = vec![Vec::new(); n_parts];
        for (i, &o) in owner.iter().enumerate() {
            local[o].push(i);
        }
        Ok(Self {
            n_parts,
            owner,
            local,
            true_ghost: vec![Vec::new(); n_parts],
            remote_ghost: vec![Vec::new(); n_parts],
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.local.iter().map(Vec::len).collect()
    }

    /// `L ∪ TG`, sorted.
    pub fn visible(&self, s: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.local[s].iter().chain(&self.true_ghost[s]).copied().collect();
        v.sort_unstable();
        v
    }

    /// `L ∪ TG ∪ RG`, sorted.
    pub fn extended(&self, s: usize) -> Vec<usize> {
        let mut v = self.visible(s);
        v.extend(&self.remote_ghost[s]);
        v.sort_unstable();
        v
    }

    /// Subdomains owning a true ghost of `s`.
    pub fn neighbours(&self, s: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self.true_ghost[s].iter().map(|&c| self.owner[c]).collect();
        set.into_iter().collect()
    }
}

/// Contiguous Morton chunks whose sizes differ by at most one (larger first).
pub fn partition_sfc(mesh: &ForestMesh, n_parts: usize) -> Result<PartitionLayout> {
    let n = mesh.len();
    if n_parts == 0 || n_parts > n {
        return Err(Error::Parameter(format!("subdomain count {n_parts} outside 1..={n}")));
    }
    let mut owner = Vec::with_capacity(n);
    for (s, size) in chunk_sizes(n, n_parts).into_iter().enumerate() {
        owner.extend(std::iter::repeat_n(s, size));
    }
    PartitionLayout::from_owners(mesh, n_parts, owner)
}

/// Sizes of `p` contiguous chunks of `n` items, larger chunks first.
pub fn chunk_sizes(n: usize, p: usize) -> Vec<usize> {
    (0..p).map(|s| n / p + usize::from(s < n % p)).collect()
}

fn ill_root(space: &FeSpace, c: usize) -> Option<usize> {
    space.roots.as_ref()?.root[c].filter(|&r| r != c)
}

/// Fills the true and remote ghost sets.
///
/// Remote roots are the roots of ill-posed visible cells and the roots `K(σ)`
/// of visible ill-posed free dofs. Each needed root brings along its coarser
/// facet or vertex neighbours, which carry the masters of its hanging dofs.
pub fn build_ghost_layers(mut layout: PartitionLayout, mesh: &ForestMesh, space: &FeSpace) -> PartitionLayout {
    let dofs = &space.dofs;
    let (tg, rg): (Vec<Vec<usize>>, Vec<Vec<usize>>) = (0..layout.n_parts)
        .into_par_iter()
        .map(|s| {
            let mut tg = BTreeSet::new();
            for &c in &layout.local[s] {
                for t in mesh.touching_leaves(c) {
                    if layout.owner[t] != s {
                        tg.insert(t);
                    }
                }
            }
            let visible: BTreeSet<usize> = layout.local[s].iter().chain(&tg).copied().collect();
            let mut roots = BTreeSet::new();
            for &c in &visible {
                roots.extend(ill_root(space, c));
                if let Some(cd) = dofs.cell_dofs[c] {
                    for d in cd {
                        roots.extend(space.constraints.k_map[d]);
                    }
                }
            }
            let mut rg = BTreeSet::new();
            for &r in &roots {
                if !visible.contains(&r) {
                    rg.insert(r);
                }
                let level = mesh.cell(r).level;
                for t in mesh.touching_leaves(r) {
                    if mesh.cell(t).level < level && !visible.contains(&t) {
                        rg.insert(t);
                    }
                }
            }
            (tg.into_iter().collect(), rg.into_iter().collect())
        })
        .unzip();
    layout.true_ghost = tg;
    layout.remote_ghost = rg;
    layout
}

/// Dof classes of one subdomain, keyed by lattice position.
#[derive(Clone, Debug, PartialEq)]
pub struct SubdomainStatus {
    /// Well-posed flags computed from `L ∪ TG` alone.
    pub provisional: BTreeMap<[u32; 2], bool>,
    /// Classes of the local dofs after the neighbour merge.
    pub merged: BTreeMap<[u32; 2], DofClass>,
}

fn local_dofs(layout: &PartitionLayout, s: usize, dofs: &DofTable) -> BTreeSet<[u32; 2]> {
    layout.local[s]
        .iter()
        .filter_map(|&c| dofs.cell_dofs[c])
        .flatten()
        .map(|d| dofs.lattice[d])
        .collect()
}

fn provisional_status(
    mesh: &ForestMesh,
    classes: &CellClasses,
    layout: &PartitionLayout,
    s: usize,
) -> Result<(DofTable, BTreeMap<[u32; 2], bool>)> {
    let visible: BTreeSet<usize> = layout.visible(s).into_iter().collect();
    let dofs = distribute_dofs_filtered(mesh, |c| classes.is_active(c) && visible.contains(&c))?;
    let hanging = hanging_constraints(&dofs)?;
    let classif = classify_dofs(&dofs, classes, &hanging);
    let flags = (0..dofs.len())
        .map(|d| {
            let well = matches!(classif.class[d], DofClass::WellFree | DofClass::WellHanging);
            (dofs.lattice[d], well)
        })
        .collect();
    Ok((dofs, flags))
}

/// One round of nearest-neighbour exchange of "has well-posed support".
///
/// Each subdomain classifies the dofs it sees from `L ∪ TG`, then ORs in the
/// flags its neighbours computed for the shared dofs. The merged classes of
/// the local dofs are checked against `serial`.
pub fn exchange_wellposed_status(
    layout: &PartitionLayout,
    mesh: &ForestMesh,
    classes: &CellClasses,
    serial: &FeSpace,
) -> Result<Vec<SubdomainStatus>> {
    let prov: Vec<(DofTable, BTreeMap<[u32; 2], bool>)> = (0..layout.n_parts)
        .into_par_iter()
        .map(|s| provisional_status(mesh, classes, layout, s))
        .collect::<Result<_>>()?;
    let serial_index: HashMap<[u32; 2], usize> =
        serial.dofs.lattice.iter().enumerate().map(|(d, &p)| (p, d)).collect();
    let mut out = Vec::with_capacity(layout.n_parts);
    for s in 0..layout.n_parts {
        let (dofs, flags) = &prov[s];
        let index: HashMap<[u32; 2], usize> =
            dofs.lattice.iter().enumerate().map(|(d, &p)| (p, d)).collect();
        let neighbours = layout.neighbours(s);
        let mut merged = BTreeMap::new();
        for p in local_dofs(layout, s, &serial.dofs) {
            let mut well = flags[&p];
            for &n in &neighbours {
                well |= prov[n].1.get(&p).copied().unwrap_or(false);
            }
            let class = match (dofs.hanging[index[&p]], well) {
                (true, true) => DofClass::WellHanging,
                (true, false) => DofClass::IllHanging,
                (false, true) => DofClass::WellFree,
                (false, false) => DofClass::IllFree,
            };
            let expected = serial.classification.class[serial_index[&p]];
            if class != expected {
                return Err(Error::InvariantViolation(format!(
                    "subdomain {s}: dof at {p:?} classified {class:?} after one exchange, serial {expected:?}"
                )));
            }
            merged.insert(p, class);
        }
        out.push(SubdomainStatus { provisional: flags.clone(), merged });
    }
    Ok(out)
}

/// One row of the partition report.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubdomainReport {
    pub subdomain: usize,
    pub n_local: usize,
    pub n_true_ghost: usize,
    pub n_remote_ghost: usize,
    pub constraints_checked: usize,
    pub max_masters: usize,
}

fn localization(s: usize, dof: usize, e: Error) -> Error {
    let reason = match e {
        Error::Constraint { reason, .. } => reason,
        other => other.to_string(),
    };
    Error::Localization { subdomain: s, dof, reason }
}

/// Rebuilds the constraints of the local constrained dofs of subdomain `s`
/// from `L ∪ TG ∪ RG` and compares them with the serial set.
fn verify_subdomain(
    layout: &PartitionLayout,
    mesh: &ForestMesh,
    classes: &CellClasses,
    serial: &FeSpace,
    status: &SubdomainStatus,
    serial_index: &HashMap<[u32; 2], usize>,
    s: usize,
) -> Result<SubdomainReport> {
    let ext: BTreeSet<usize> = layout.extended(s).into_iter().collect();
    let dofs = distribute_dofs_filtered(mesh, |c| classes.is_active(c) && ext.contains(&c))?;
    let hanging = hanging_constraints(&dofs)?;
    let sdof = |d: usize| serial_index[&dofs.lattice[d]];
    let class = |d: usize| match status.merged.get(&dofs.lattice[d]) {
        Some(&c) => c,
        None => serial.classification.class[sdof(d)],
    };
    let roots = serial.roots.as_ref();
    let extrapolate = |d: usize| -> Result<Constraint> {
        let p = dofs.lattice[d];
        let root = if status.merged.contains_key(&p) {
            roots.and_then(|r| ill_free_root(&dofs, r, d))
        } else {
            serial.constraints.k_map[sdof(d)]
        }
        .ok_or_else(|| localization(s, sdof(d), Error::Parameter("no root for ill-posed free dof".into())))?;
        extrapolation_constraint(&dofs, class, &hanging, d, root).map_err(|e| localization(s, sdof(d), e))
    };
    let mut checked = 0;
    let mut max_masters = 0;
    for d in 0..dofs.len() {
        let p = dofs.lattice[d];
        if !status.merged.contains_key(&p) {
            continue;
        }
        let local = match class(d) {
            DofClass::WellFree => None,
            DofClass::IllFree => Some(extrapolate(d)?),
            DofClass::WellHanging | DofClass::IllHanging => {
                let h = hanging.get(d).ok_or_else(|| {
                    localization(s, sdof(d), Error::Parameter("hanging constraint not resolvable".into()))
                })?;
                if class(d) == DofClass::WellHanging {
                    Some(h.clone())
                } else {
                    Some(ill_hanging_constraint(h, class, &extrapolate).map_err(|e| localization(s, sdof(d), e))?)
                }
            }
        };
        let expected = serial.constraints.get(sdof(d));
        let same = match (&local, expected) {
            (None, None) => true,
            (Some(a), Some(b)) => {
                let mut la: Vec<([u32; 2], f64)> = a.masters.iter().map(|&(m, w)| (dofs.lattice[m], w)).collect();
                let mut lb: Vec<([u32; 2], f64)> =
                    b.masters.iter().map(|&(m, w)| (serial.dofs.lattice[m], w)).collect();
                la.sort_by_key(|x| x.0);
                lb.sort_by_key(|x| x.0);
                a.provenance == b.provenance
                    && la.len() == lb.len()
                    && la.iter().zip(&lb).all(|(x, y)| x.0 == y.0 && (x.1 - y.1).abs() <= EQUALITY_TOL)
            }
            _ => false,
        };
        if !same {
            return Err(Error::Localization {
                subdomain: s,
                dof: sdof(d),
                reason: format!("local constraint {local:?} differs from serial {expected:?}"),
            });
        }
        if let Some(c) = local {
            checked += 1;
            max_masters = max_masters.max(c.masters.len());
        }
    }
    Ok(SubdomainReport {
        subdomain: s,
        n_local: layout.local[s].len(),
        n_true_ghost: layout.true_ghost[s].len(),
        n_remote_ghost: layout.remote_ghost[s].len(),
        constraints_checked: checked,
        max_masters,
    })
}

/// Checks that every subdomain resolves the constraints of its local dofs from
/// `L ∪ TG ∪ RG` exactly as the serial build does.
pub fn verify_distributed_constraints(
    layout: &PartitionLayout,
    mesh: &ForestMesh,
    classes: &CellClasses,
    serial: &FeSpace,
    status: &[SubdomainStatus],
) -> Result<Vec<SubdomainReport>> {
    let serial_index: HashMap<[u32; 2], usize> =
        serial.dofs.lattice.iter().enumerate().map(|(d, &p)| (p, d)).collect();
    (0..layout.n_parts)
        .into_par_iter()
        .map(|s| verify_subdomain(layout, mesh, classes, serial, &status[s], &serial_index, s))
        .collect()
}

/// Largest entry of `|Σ_S A_S - A|` relative to `max |A|`, where `A_S` holds
/// the contributions of the active local cells of `S`.
pub fn distributed_assembly_deviation(
    layout: &PartitionLayout,
    mesh: &ForestMesh,
    space: &FeSpace,
    cut: &CutQuadrature,
    cfg: &WeakFormConfig,
    problem: &Benchmark,
) -> Result<f64> {
    let serial = assemble(mesh, space, cut, cfg, problem)?;
    let parts = (0..layout.n_parts)
        .into_par_iter()
        .map(|s| {
            let cells: Vec<usize> =
                layout.local[s].iter().copied().filter(|&c| space.dofs.cell_dofs[c].is_some()).collect();
            assemble_cells(mesh, space, cut, cfg, problem, &cells)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = serial.n();
    let mut trips = Vec::new();
    let mut b = vec![0.0; n];
    for p in &parts {
        for i in 0..n {
            b[i] += p.b[i];
            for k in p.a.row_ptr[i]..p.a.row_ptr[i + 1] {
                trips.push((i, p.a.col[k], p.a.val[k]));
            }
        }
    }
    let sum = CsrMatrix::from_triplets(n, trips);
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for k in sum.row_ptr[i]..sum.row_ptr[i + 1] {
            dev = dev.max((sum.val[k] - serial.a.get(i, sum.col[k])).abs());
        }
        for k in serial.a.row_ptr[i]..serial.a.row_ptr[i + 1] {
            dev = dev.max((serial.a.val[k] - sum.get(i, serial.a.col[k])).abs());
        }
    }
    let scale = serial.a.max_abs().max(f64::MIN_POSITIVE);
    let bscale = serial.b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let bdev = b.iter().zip(&serial.b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    Ok((dev / scale).max(bdev / bscale))
}

/// Runs ghost construction, the status exchange and the constraint check.
pub fn check_partition(
    mesh: &ForestMesh,
    classes: &CellClasses,
    serial: &FeSpace,
    layout: PartitionLayout,
) -> Result<(PartitionLayout, Vec<SubdomainReport>)> {
    let layout = build_ghost_layers(layout, mesh, serial);
    let status = exchange_wellposed_status(&layout, mesh, classes, serial)?;
    let report = verify_distributed_constraints(&layout, mesh, classes, serial, &status)?;
    Ok((layout, report))
}
