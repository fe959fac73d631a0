//! Level-set geometry, cut-cell quadrature and cell classification.
//!
//! The physical domain is `{x : φ(x) < 0}`. Cut cells are resolved by recursive
//! bisection down to `max_subdiv` levels; sub-cells that the level set still
//! crosses are split by marching squares. Each interface chord is lifted to a
//! quadratic arc through a third point on the zero level set, which makes the
//! area and perimeter errors third order in the sub-cell size.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{BoxDomain, CellId, ForestMesh};
use crate::quadrature::{gauss_01, tensor_rule, QuadRule};

/// Rotation about the origin followed by a translation.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigidTransform {
    pub translation: [f64; 2],
    /// Counter-clockwise, radians.
    pub rotation: f64,
}

impl RigidTransform {
    pub fn translate(t: [f64; 2]) -> Self {
        Self { translation: t, rotation: 0.0 }
    }

    /// Maps a physical point back into the shape's reference frame.
    pub fn pull_back(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.translation[0], x[1] - self.translation[1]];
        if self.rotation == 0.0 {
            return d;
        }
        let (s, c) = self.rotation.sin_cos();
        [c * d[0] + s * d[1], -s * d[0] + c * d[1]]
    }

    /// Maps a reference-frame vector into the physical frame.
    pub fn push_vector(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }
}

/// Closed-form shapes. All built-in shapes are 1-Lipschitz.
#[derive(Clone)]
pub enum Shape {
    Circle { center: [f64; 2], radius: f64 },
    /// `φ = (x - point)·normal`, `normal` normalized on construction.
    HalfPlane { point: [f64; 2], normal: [f64; 2] },
    /// Disk of radius `radius` at the origin minus the wedge of opening
    /// `wedge` between the angles `-wedge` and `0`.
    Pacman { wedge: f64, radius: f64 },
    Annulus { center: [f64; 2], inner: f64, outer: f64 },
    Custom { f: Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>, lipschitz: f64 },
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Circle { center, radius } => {
                write!(f, "Circle {{ center: {center:?}, radius: {radius} }}")
            }
            Shape::HalfPlane { point, normal } => {
                write!(f, "HalfPlane {{ point: {point:?}, normal: {normal:?} }}")
            }
            Shape::Pacman { wedge, radius } => {
                write!(f, "Pacman {{ wedge: {wedge}, radius: {radius} }}")
            }
            Shape::Annulus { center, inner, outer } => {
                write!(f, "Annulus {{ center: {center:?}, inner: {inner}, outer: {outer} }}")
            }
            Shape::Custom { lipschitz, .. } => write!(f, "Custom {{ lipschitz: {lipschitz} }}"),
        }
    }
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

impl Shape {
    fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            Shape::Circle { center, radius } => norm([x[0] - center[0], x[1] - center[1]]) - radius,
            Shape::HalfPlane { point, normal } => {
                (x[0] - point[0]) * normal[0] + (x[1] - point[1]) * normal[1]
            }
            Shape::Pacman { wedge, radius } => {
                let a1 = 2.0 * std::f64::consts::PI - wedge;
                let d1 = [a1.cos(), a1.sin()];
                let h1 = d1[0] * x[1] - d1[1] * x[0];
                let h2 = -x[1];
                // Positive inside the removed wedge.
                let g = if *wedge <= std::f64::consts::PI { h1.min(h2) } else { h1.max(h2) };
                (norm(x) - radius).max(g)
            }
            Shape::Annulus { center, inner, outer } => {
                let r = norm([x[0] - center[0], x[1] - center[1]]);
                (inner - r).max(r - outer)
            }
            Shape::Custom { f, .. } => f(x),
        }
    }

    fn lipschitz(&self) -> f64 {
        match self {
            Shape::Custom { lipschitz, .. } => *lipschitz,
            _ => 1.0,
        }
    }
}

/// A level-set function `φ` with an optional rigid motion.
#[derive(Clone, Debug)]
pub struct LevelSet {
    pub shape: Shape,
    pub transform: RigidTransform,
}

impl LevelSet {
    pub fn new(shape: Shape) -> Self {
        Self { shape, transform: RigidTransform::default() }
    }

    pub fn circle(center: [f64; 2], radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Parameter(format!("circle radius must be positive, got {radius}")));
        }
        Ok(Self::new(Shape::Circle { center, radius }))
    }

    pub fn half_plane(point: [f64; 2], normal: [f64; 2]) -> Result<Self> {
        let n = norm(normal);
        if !(n > 0.0) {
            return Err(Error::Parameter("half-plane normal must be nonzero".into()));
        }
        Ok(Self::new(Shape::HalfPlane { point, normal: [normal[0] / n, normal[1] / n] }))
    }

    pub fn pacman(wedge: f64, radius: f64) -> Result<Self> {
        if !(wedge > 0.0 && wedge < 2.0 * std::f64::consts::PI) {
            return Err(Error::Parameter(format!("wedge angle must lie in (0, 2π), got {wedge}")));
        }
        if !(radius > 0.0) {
            return Err(Error::Parameter(format!("pacman radius must be positive, got {radius}")));
        }
        Ok(Self::new(Shape::Pacman { wedge, radius }))
    }

    pub fn annulus(center: [f64; 2], inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && outer > inner) {
            return Err(Error::Parameter(format!(
                "annulus needs 0 < inner < outer, got {inner}, {outer}"
            )));
        }
        Ok(Self::new(Shape::Annulus { center, inner, outer }))
    }

    /// A user level set with a known Lipschitz bound (used to skip uncut sub-cells).
    pub fn custom(f: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static, lipschitz: f64) -> Self {
        Self::new(Shape::Custom { f: Arc::new(f), lipschitz })
    }

    pub fn with_transform(mut self, transform: RigidTransform) -> Self {
        self.transform = transform;
        self
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.shape.eval(self.transform.pull_back(x))
    }

    pub fn lipschitz(&self) -> f64 {
        self.shape.lipschitz()
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        self.eval(x) < 0.0
    }

    /// Samples a 256×256 grid of the box and rejects non-finite values.
    pub fn check_finite(&self, domain: &BoxDomain) -> Result<()> {
        let n = 256;
        for j in 0..n {
            for i in 0..n {
                let x = [
                    domain.lo[0] + (domain.hi[0] - domain.lo[0]) * i as f64 / (n - 1) as f64,
                    domain.lo[1] + (domain.hi[1] - domain.lo[1]) * j as f64 / (n - 1) as f64,
                ];
                let v = self.eval(x);
                if !v.is_finite() {
                    return Err(Error::Parameter(format!("level set is {v} at {x:?}")));
                }
            }
        }
        Ok(())
    }
}

/// Boundary quadrature with outward unit normals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundaryRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub normals: Vec<[f64; 2]>,
}

impl BoundaryRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Quadrature of one leaf.
#[derive(Clone, Debug, PartialEq)]
pub enum CellRule {
    /// Entirely inside Ω; integrate with the tensor rule.
    Full,
    /// Entirely outside Ω.
    Empty,
    Cut { interior: QuadRule, boundary: BoundaryRule },
}

/// Interior and boundary rules for every leaf.
#[derive(Clone, Debug)]
pub struct CutQuadrature {
    pub order: usize,
    pub max_subdiv: usize,
    pub cells: Vec<CellRule>,
}

impl CutQuadrature {
    /// Interior rule of leaf `i` (a tensor rule for uncut cells, empty outside Ω).
    pub fn interior_rule(&self, mesh: &ForestMesh, i: usize) -> QuadRule {
        match &self.cells[i] {
            CellRule::Full => {
                let (lo, hi) = mesh.cell_bounds(i);
                tensor_rule(self.order, lo, hi).expect("order validated on construction")
            }
            CellRule::Empty => QuadRule::default(),
            CellRule::Cut { interior, .. } => interior.clone(),
        }
    }

    pub fn boundary_rule(&self, i: usize) -> Option<&BoundaryRule> {
        match &self.cells[i] {
            CellRule::Cut { boundary, .. } if !boundary.is_empty() => Some(boundary),
            _ => None,
        }
    }

    /// `|T ∩ Ω|` as seen by the quadrature.
    pub fn interior_area(&self, mesh: &ForestMesh, i: usize) -> f64 {
        match &self.cells[i] {
            CellRule::Full => mesh.cell_area(i),
            CellRule::Empty => 0.0,
            CellRule::Cut { interior, .. } => interior.total_weight(),
        }
    }

    pub fn total_area(&self, mesh: &ForestMesh) -> f64 {
        (0..self.cells.len()).map(|i| self.interior_area(mesh, i)).sum()
    }

    pub fn total_perimeter(&self) -> f64 {
        (0..self.cells.len())
            .filter_map(|i| self.boundary_rule(i))
            .map(BoundaryRule::total_weight)
            .sum()
    }

    pub fn is_cut(&self, i: usize) -> bool {
        matches!(self.cells[i], CellRule::Cut { .. })
    }
}

/// Builds interior and boundary rules for all leaves.
pub fn cut_quadrature(
    mesh: &ForestMesh,
    ls: &LevelSet,
    order: usize,
    max_subdiv: usize,
) -> Result<CutQuadrature> {
    if !(1..=5).contains(&order) {
        return Err(Error::Parameter(format!("quadrature order {order} outside 1..=5")));
    }
    if max_subdiv > 8 {
        return Err(Error::Parameter(format!("max_subdiv {max_subdiv} outside 0..=8")));
    }
    let cells = (0..mesh.len())
        .into_par_iter()
        .map(|i| {
            let (lo, hi) = mesh.cell_bounds(i);
            cell_rule(ls, mesh.cell(i), lo, hi, order, max_subdiv)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CutQuadrature { order, max_subdiv, cells })
}

/// One interior piece of a cell, with the parts of its outline lying on sub-grid
/// lines (used for the connectivity check).
struct Piece {
    /// `(axis, line, lo, hi)`: axis 0 is a line `x = line`, interval in y.
    sides: Vec<(u8, i64, f64, f64)>,
}

struct CellBuilder<'a> {
    ls: &'a LevelSet,
    cell: CellId,
    lo: [f64; 2],
    size: [f64; 2],
    /// Sub-grid resolution `2^max_subdiv`.
    n: i64,
    max_subdiv: usize,
    order: usize,
    gx: Vec<f64>,
    gw: Vec<f64>,
    interior: QuadRule,
    boundary: BoundaryRule,
    pieces: Vec<Piece>,
    any_full: bool,
    any_empty: bool,
    any_cut: bool,
}

fn cell_rule(
    ls: &LevelSet,
    cell: CellId,
    lo: [f64; 2],
    hi: [f64; 2],
    order: usize,
    max_subdiv: usize,
) -> Result<CellRule> {
    let (gx, gw) = gauss_01(order)?;
    let mut b = CellBuilder {
        ls,
        cell,
        lo,
        size: [hi[0] - lo[0], hi[1] - lo[1]],
        n: 1 << max_subdiv,
        max_subdiv,
        order,
        gx,
        gw,
        interior: QuadRule::default(),
        boundary: BoundaryRule::default(),
        pieces: Vec::new(),
        any_full: false,
        any_empty: false,
        any_cut: false,
    };
    b.recurse([0, 0], 0)?;
    if !b.any_cut && !b.any_empty {
        return Ok(CellRule::Full);
    }
    if !b.any_cut && !b.any_full {
        return Ok(CellRule::Empty);
    }
    let components = b.components();
    if components > 1 {
        return Err(Error::DisconnectedCut { cell, components });
    }
    Ok(CellRule::Cut { interior: b.interior, boundary: b.boundary })
}

/// The bulge `d` of edge `ab` if the curved triangle `(p0, a, b)` keeps a
/// positive Jacobian, otherwise zero. The boundary and interior rules must use
/// the same value.
fn admissible_bulge(p0: [f64; 2], a: [f64; 2], b: [f64; 2], d: [f64; 2]) -> [f64; 2] {
    let ea = [a[0] - p0[0], a[1] - p0[1]];
    let eb = [b[0] - p0[0], b[1] - p0[1]];
    let cross = |u: [f64; 2], v: [f64; 2]| u[0] * v[1] - u[1] * v[0];
    let base = cross(ea, eb);
    // The Jacobian is affine in (s, t); positivity at the vertices suffices.
    let jac = |s: f64, t: f64| {
        let xs = [ea[0] + 4.0 * t * d[0], ea[1] + 4.0 * t * d[1]];
        let xt = [eb[0] + 4.0 * s * d[0], eb[1] + 4.0 * s * d[1]];
        cross(xs, xt) * base.signum()
    };
    if base != 0.0 && jac(1.0, 0.0) > 0.0 && jac(0.0, 1.0) > 0.0 && jac(0.0, 0.0) > 0.0 {
        d
    } else {
        [0.0, 0.0]
    }
}

/// Corners of the unit square in counter-clockwise order.
const CCW: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

impl CellBuilder<'_> {
    fn grid_to_phys(&self, g: [f64; 2]) -> [f64; 2] {
        let n = self.n as f64;
        [self.lo[0] + self.size[0] * g[0] / n, self.lo[1] + self.size[1] * g[1] / n]
    }

    /// Sub-cell at `depth` with lower-left sub-grid index `idx` (in units of the
    /// finest sub-grid).
    fn recurse(&mut self, idx: [i64; 2], depth: usize) -> Result<()> {
        let span = 1i64 << (self.max_subdiv - depth);
        let g0 = [idx[0] as f64, idx[1] as f64];
        let g1 = [(idx[0] + span) as f64, (idx[1] + span) as f64];
        let lo = self.grid_to_phys(g0);
        let hi = self.grid_to_phys(g1);
        let h = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let corner = |k: usize| {
            [lo[0] + CCW[k][0] * (hi[0] - lo[0]), lo[1] + CCW[k][1] * (hi[1] - lo[1])]
        };
        let raw: [f64; 4] = std::array::from_fn(|k| self.ls.eval(corner(k)));
        let center = self.ls.eval([0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])]);
        let half_diag = 0.5 * (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
        if raw.iter().chain(std::iter::once(&center)).any(|v| !v.is_finite()) {
            return Err(Error::DegenerateGeometry {
                cell: self.cell,
                reason: "non-finite level-set value".into(),
            });
        }
        let all_neg = raw.iter().all(|&v| v < 0.0);
        let all_pos = raw.iter().all(|&v| v > 0.0);
        let clear = center.abs() >= self.ls.lipschitz() * half_diag;
        if (all_neg || all_pos) && clear {
            let full = all_neg;
            self.emit_block(idx, span, lo, hi, full);
            return Ok(());
        }
        if depth < self.max_subdiv {
            let s = span / 2;
            for (dx, dy) in [(0, 0), (s, 0), (0, s), (s, s)] {
                self.recurse([idx[0] + dx, idx[1] + dy], depth + 1)?;
            }
            return Ok(());
        }
        if raw.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateGeometry {
                cell: self.cell,
                reason: "level set vanishes at all four corners of a sub-cell".into(),
            });
        }
        let eps = 1e-14 * h;
        let v: [f64; 4] = raw.map(|x| if x.abs() < eps { eps } else { x });
        if v.iter().all(|&x| x > 0.0) {
            self.any_empty = true;
            return Ok(());
        }
        if v.iter().all(|&x| x < 0.0) {
            self.emit_block(idx, span, lo, hi, true);
            return Ok(());
        }
        self.marching_square(idx, lo, hi, v, center)
    }

    fn emit_block(&mut self, idx: [i64; 2], span: i64, lo: [f64; 2], hi: [f64; 2], full: bool) {
        if !full {
            self.any_empty = true;
            return;
        }
        self.any_full = true;
        self.interior.append(&tensor_rule(self.order, lo, hi).expect("order validated"));
        let (i0, j0, i1, j1) = (idx[0], idx[1], idx[0] + span, idx[1] + span);
        self.pieces.push(Piece {
            sides: vec![
                (0, i0, j0 as f64, j1 as f64),
                (0, i1, j0 as f64, j1 as f64),
                (1, j0, i0 as f64, i1 as f64),
                (1, j1, i0 as f64, i1 as f64),
            ],
        });
    }

    /// Crossing on the sub-cell edge from corner `k` to corner `k + 1`, in local
    /// unit coordinates.
    fn crossing(&self, lo: [f64; 2], hi: [f64; 2], v: &[f64; 4], k: usize) -> [f64; 2] {
        let a = CCW[k];
        let b = CCW[(k + 1) % 4];
        let to_phys = |p: [f64; 2]| [lo[0] + p[0] * (hi[0] - lo[0]), lo[1] + p[1] * (hi[1] - lo[1])];
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        let va = v[k];
        // Bisect to 1e-12 of the sub-cell edge length.
        let mut it = 0;
        while t1 - t0 > 1e-12 && it < 200 {
            let tm = 0.5 * (t0 + t1);
            let p = [a[0] + tm * (b[0] - a[0]), a[1] + tm * (b[1] - a[1])];
            let fm = self.ls.eval(to_phys(p));
            if (fm < 0.0) == (va < 0.0) {
                t0 = tm;
            } else {
                t1 = tm;
            }
            it += 1;
        }
        let t = 0.5 * (t0 + t1);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    fn marching_square(
        &mut self,
        idx: [i64; 2],
        lo: [f64; 2],
        hi: [f64; 2],
        v: [f64; 4],
        center: f64,
    ) -> Result<()> {
        self.any_cut = true;
        let neg = v.map(|x| x < 0.0);
        let saddle = neg[0] == neg[2] && neg[1] == neg[3] && neg[0] != neg[1];
        // Each polygon is a list of (local point, tag); tag = Some(k) for a crossing
        // on edge k, None for a corner.
        let mut polygons: Vec<Vec<([f64; 2], Option<usize>)>> = Vec::new();
        let cross: [Option<[f64; 2]>; 4] = std::array::from_fn(|k| {
            (neg[k] != neg[(k + 1) % 4]).then(|| self.crossing(lo, hi, &v, k))
        });
        if saddle && center >= 0.0 {
            // Two separate corner triangles around the negative corners.
            for k in 0..4 {
                if neg[k] {
                    let prev = (k + 3) % 4;
                    polygons.push(vec![
                        (CCW[k], None),
                        (cross[k].unwrap(), Some(k)),
                        (cross[prev].unwrap(), Some(prev)),
                    ]);
                }
            }
        } else {
            let mut poly = Vec::with_capacity(6);
            for k in 0..4 {
                if neg[k] {
                    poly.push((CCW[k], None));
                }
                if let Some(c) = cross[k] {
                    poly.push((c, Some(k)));
                }
            }
            polygons.push(poly);
        }
        for poly in polygons {
            self.emit_polygon(idx, lo, hi, &v, &poly)?;
        }
        Ok(())
    }

    fn emit_polygon(
        &mut self,
        idx: [i64; 2],
        lo: [f64; 2],
        hi: [f64; 2],
        v: &[f64; 4],
        poly: &[([f64; 2], Option<usize>)],
    ) -> Result<()> {
        let m = poly.len();
        let to_phys = |p: [f64; 2]| [lo[0] + p[0] * (hi[0] - lo[0]), lo[1] + p[1] * (hi[1] - lo[1])];
        // Sides on the sub-cell outline.
        let mut sides = Vec::new();
        for e in 0..m {
            let (p, q) = (poly[e].0, poly[(e + 1) % m].0);
            for axis in 0..2 {
                for line in [0.0, 1.0] {
                    if p[axis] == line && q[axis] == line {
                        let o = 1 - axis;
                        let (a, b) = (p[o].min(q[o]), p[o].max(q[o]));
                        sides.push((
                            axis as u8,
                            idx[axis] + line as i64,
                            idx[o] as f64 + a,
                            idx[o] as f64 + b,
                        ));
                    }
                }
            }
        }
        self.pieces.push(Piece { sides });
        // Interface edges: consecutive crossings.
        let apex = poly.iter().position(|(_, t)| t.is_none()).expect("polygon has a corner");
        let p0 = to_phys(poly[apex].0);
        for step in 1..m - 1 {
            let ia = (apex + step) % m;
            let ib = (apex + step + 1) % m;
            let a = to_phys(poly[ia].0);
            let b = to_phys(poly[ib].0);
            let curved = match (poly[ia].1, poly[ib].1) {
                (Some(ka), Some(_)) => Some(ka),
                _ => None,
            };
            let bulge = match curved {
                Some(ka) => {
                    let d = admissible_bulge(p0, a, b, self.bulge(lo, hi, a, b));
                    let pos = self.positive_corner(lo, hi, v, ka);
                    self.emit_boundary(a, b, d, pos);
                    d
                }
                None => [0.0, 0.0],
            };
            self.emit_triangle(p0, a, b, bulge);
        }
        Ok(())
    }

    /// Positive corner (physical) of sub-cell edge `k`.
    fn positive_corner(&self, lo: [f64; 2], hi: [f64; 2], v: &[f64; 4], k: usize) -> [f64; 2] {
        let c = if v[k] > 0.0 { k } else { (k + 1) % 4 };
        [lo[0] + CCW[c][0] * (hi[0] - lo[0]), lo[1] + CCW[c][1] * (hi[1] - lo[1])]
    }

    /// Offset `d` moving the chord midpoint onto the zero level set, or zero if
    /// no root is found inside the sub-cell.
    fn bulge(&self, lo: [f64; 2], hi: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        let t = [b[0] - a[0], b[1] - a[1]];
        let len = norm(t);
        if len == 0.0 {
            return [0.0, 0.0];
        }
        let n = [-t[1] / len, t[0] / len];
        let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let smax = 0.25 * len;
        let at = |s: f64| [m[0] + s * n[0], m[1] + s * n[1]];
        let f0 = self.ls.eval(m);
        if f0 == 0.0 {
            return [0.0, 0.0];
        }
        // Search both directions for a sign change.
        let mut bracket = None;
        for dir in [1.0, -1.0] {
            let fs = self.ls.eval(at(dir * smax));
            if (fs < 0.0) != (f0 < 0.0) {
                bracket = Some((0.0, dir * smax));
                break;
            }
        }
        let Some((mut s0, mut s1)) = bracket else { return [0.0, 0.0] };
        for _ in 0..60 {
            let sm = 0.5 * (s0 + s1);
            if (self.ls.eval(at(sm)) < 0.0) == (f0 < 0.0) {
                s0 = sm;
            } else {
                s1 = sm;
            }
            if (s1 - s0).abs() <= 1e-13 * len {
                break;
            }
        }
        let s = 0.5 * (s0 + s1);
        let c = at(s);
        let tol = 1e-12 * len;
        let inside = c[0] >= lo[0] - tol && c[0] <= hi[0] + tol && c[1] >= lo[1] - tol && c[1] <= hi[1] + tol;
        if !inside {
            return [0.0, 0.0];
        }
        [c[0] - m[0], c[1] - m[1]]
    }

    /// Quadratic arc `x(u) = a + u (b - a) + 4 u (1 - u) d`.
    fn emit_boundary(&mut self, a: [f64; 2], b: [f64; 2], d: [f64; 2], pos: [f64; 2]) {
        let chord = [b[0] - a[0], b[1] - a[1]];
        let mut nc = [chord[1], -chord[0]];
        if (pos[0] - a[0]) * nc[0] + (pos[1] - a[1]) * nc[1] < 0.0 {
            nc = [-nc[0], -nc[1]];
        }
        for (u, w) in self.gx.iter().zip(&self.gw) {
            let s = 4.0 * u * (1.0 - u);
            let x = [a[0] + u * chord[0] + s * d[0], a[1] + u * chord[1] + s * d[1]];
            let ds = 4.0 * (1.0 - 2.0 * u);
            let tx = [chord[0] + ds * d[0], chord[1] + ds * d[1]];
            let speed = norm(tx);
            if speed == 0.0 {
                continue;
            }
            let mut n = [tx[1] / speed, -tx[0] / speed];
            if n[0] * nc[0] + n[1] * nc[1] < 0.0 {
                n = [-n[0], -n[1]];
            }
            self.boundary.points.push(x);
            self.boundary.weights.push(w * speed);
            self.boundary.normals.push(n);
        }
    }

    /// Triangle `(p0, a, b)` whose edge `ab` is bulged by `d` at its midpoint.
    fn emit_triangle(&mut self, p0: [f64; 2], a: [f64; 2], b: [f64; 2], d: [f64; 2]) {
        let ea = [a[0] - p0[0], a[1] - p0[1]];
        let eb = [b[0] - p0[0], b[1] - p0[1]];
        let cross = |u: [f64; 2], v: [f64; 2]| u[0] * v[1] - u[1] * v[0];
        let base = cross(ea, eb);
        if base == 0.0 {
            return;
        }
        let sign = base.signum();
        let jac = |s: f64, t: f64| {
            let xs = [ea[0] + 4.0 * t * d[0], ea[1] + 4.0 * t * d[1]];
            let xt = [eb[0] + 4.0 * s * d[0], eb[1] + 4.0 * s * d[1]];
            cross(xs, xt) * sign
        };
        for (u, wu) in self.gx.iter().zip(&self.gw) {
            for (vv, wv) in self.gx.iter().zip(&self.gw) {
                let s = *u;
                let t = (1.0 - u) * vv;
                let q = 4.0 * s * t;
                self.interior.points.push([
                    p0[0] + s * ea[0] + t * eb[0] + q * d[0],
                    p0[1] + s * ea[1] + t * eb[1] + q * d[1],
                ]);
                self.interior.weights.push(wu * wv * (1.0 - u) * jac(s, t));
            }
        }
    }

    /// Number of connected interior components.
    fn components(&self) -> usize {
        let n = self.pieces.len();
        if n <= 1 {
            return n;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut lines: std::collections::HashMap<(u8, i64), Vec<(f64, f64, usize)>> =
            std::collections::HashMap::new();
        for (k, piece) in self.pieces.iter().enumerate() {
            for &(axis, line, a, b) in &piece.sides {
                lines.entry((axis, line)).or_default().push((a, b, k));
            }
        }
        for segs in lines.values_mut() {
            segs.sort_by(|x, y| x.0.total_cmp(&y.0));
            for i in 0..segs.len() {
                for j in i + 1..segs.len() {
                    if segs[j].0 >= segs[i].1 - 1e-9 {
                        break;
                    }
                    let overlap = segs[i].1.min(segs[j].1) - segs[j].0;
                    if overlap > 1e-9 {
                        let (ra, rb) = (find(&mut parent, segs[i].2), find(&mut parent, segs[j].2));
                        parent[ra] = rb;
                    }
                }
            }
        }
        (0..n).filter(|&i| find(&mut parent, i) == i).count()
    }
}

/// Cell class with respect to the threshold `η₀`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellClass {
    WellPosed,
    IllPosed,
    Exterior,
}

/// Per-leaf classes and interior fractions `η_T`.
#[derive(Clone, Debug)]
pub struct CellClasses {
    pub class: Vec<CellClass>,
    pub eta: Vec<f64>,
    pub eta0: f64,
}

impl CellClasses {
    pub fn is_active(&self, i: usize) -> bool {
        self.class[i] != CellClass::Exterior
    }

    pub fn is_well_posed(&self, i: usize) -> bool {
        self.class[i] == CellClass::WellPosed
    }

    pub fn count(&self, c: CellClass) -> usize {
        self.class.iter().filter(|&&x| x == c).count()
    }
}

/// Classifies leaves by `η_T = |T∩Ω|/|T|` computed from the cut quadrature.
pub fn classify_cells(mesh: &ForestMesh, cut: &CutQuadrature, eta0: f64) -> Result<CellClasses> {
    if !(eta0 > 0.0 && eta0 <= 1.0) {
        return Err(Error::Parameter(format!("eta0 must lie in (0, 1], got {eta0}")));
    }
    if cut.cells.len() != mesh.len() {
        return Err(Error::Parameter("cut quadrature does not match the mesh".into()));
    }
    let mut class = Vec::with_capacity(mesh.len());
    let mut eta = Vec::with_capacity(mesh.len());
    for (i, rule) in cut.cells.iter().enumerate() {
        let e = match rule {
            CellRule::Full => 1.0,
            CellRule::Empty => 0.0,
            CellRule::Cut { interior, .. } => {
                (interior.total_weight() / mesh.cell_area(i)).clamp(0.0, 1.0)
            }
        };
        let c = if e >= eta0 {
            CellClass::WellPosed
        } else if e > 0.0 {
            CellClass::IllPosed
        } else {
            CellClass::Exterior
        };
        class.push(c);
        eta.push(e);
    }
    Ok(CellClasses { class, eta, eta0 })
}

/// True when the segment `[a, b]` meets Ω: `φ < 0` at one of 5 equispaced
/// samples, or at a bisection midpoint of a piece not excluded by the
/// Lipschitz bound (down to 1/256 of the segment).
pub fn segment_meets_domain(ls: &LevelSet, a: [f64; 2], b: [f64; 2]) -> bool {
    let at = |t: f64| ls.eval([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    if (0..5).any(|k| at(k as f64 / 4.0) < 0.0) {
        return true;
    }
    let len = (b[0] - a[0]).hypot(b[1] - a[1]) * ls.lipschitz();
    fn bisect(at: &dyn Fn(f64) -> f64, t0: f64, t1: f64, len: f64, depth: u32) -> bool {
        let v = at(0.5 * (t0 + t1));
        if v < 0.0 {
            return true;
        }
        if depth == 0 || v >= 0.5 * (t1 - t0) * len {
            return false;
        }
        let m = 0.5 * (t0 + t1);
        bisect(at, t0, m, len, depth - 1) || bisect(at, m, t1, len, depth - 1)
    }
    (0..4).any(|k| bisect(&at, k as f64 / 4.0, (k + 1) as f64 / 4.0, len, 6))
}
