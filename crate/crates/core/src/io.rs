//! Plain-text artifacts: CSV tables with a `# key=value` metadata line, legacy
//! VTK meshes, quadrature and constraint dumps, and Matrix Market files.

use std::fmt::Write as _;
use std::path::Path;

use crate::assembly::CsrMatrix;
use crate::error::{Error, Result};
use crate::fe_space::{FeSpace, Provenance};
use crate::geometry::{CellClass, CellClasses, CellRule, CutQuadrature};
use crate::mesh::ForestMesh;

/// A CSV table with metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        Self { meta: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of a column parsed as `f64` (empty cells give NaN).
    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.column(name).ok_or_else(|| Error::Format(format!("no column `{name}`")))?;
        self.rows
            .iter()
            .map(|r| {
                if r[k].is_empty() {
                    Ok(f64::NAN)
                } else {
                    r[k].parse().map_err(|_| Error::Format(format!("bad number `{}` in `{name}`", r[k])))
                }
            })
            .collect()
    }

    pub fn get_meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = String::from("#");
        for (k, v) in &self.meta {
            let _ = write!(s, " {k}={}", v.replace(' ', "_"));
        }
        s.push('\n');
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let first = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))?;
        let meta_line = first
            .strip_prefix('#')
            .ok_or_else(|| Error::Format("CSV must start with a `#` metadata line".into()))?;
        let meta = meta_line
            .split_whitespace()
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::Format(format!("metadata entry `{kv}` is not key=value")))
            })
            .collect::<Result<_>>()?;
        let columns: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Format("CSV has no column line".into()))?
            .split(',')
            .map(str::to_string)
            .collect();
        let rows = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                let r: Vec<String> = l.split(',').map(str::to_string).collect();
                if r.len() == columns.len() {
                    Ok(r)
                } else {
                    Err(Error::Format(format!("row `{l}` has {} fields, expected {}", r.len(), columns.len())))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { meta, columns, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.render())
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Number formatting for artifacts: shortest round-trip form, empty for
/// missing values.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:e}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn class_code(c: CellClass) -> i32 {
    match c {
        CellClass::WellPosed => 0,
        CellClass::IllPosed => 1,
        CellClass::Exterior => 2,
    }
}

/// Legacy ASCII VTK of the leaves as quads. `nodal` holds values of all dofs
/// of `space`; exterior cells get zeros. `cell_data` are extra per-leaf fields.
pub fn vtk_string(
    mesh: &ForestMesh,
    classes: &CellClasses,
    space: Option<(&FeSpace, &[f64])>,
    cell_data: &[(&str, &[f64])],
) -> String {
    let n = mesh.len();
    let mut s = String::from("# vtk DataFile Version 3.0\nagfem mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", 4 * n);
    for i in 0..n {
        let (lo, hi) = mesh.cell_bounds(i);
        for p in [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]] {
            let _ = writeln!(s, "{} {} 0", p[0], p[1]);
        }
    }
    let _ = writeln!(s, "CELLS {} {}", n, 5 * n);
    for i in 0..n {
        let _ = writeln!(s, "4 {} {} {} {}", 4 * i, 4 * i + 1, 4 * i + 2, 4 * i + 3);
    }
    let _ = writeln!(s, "CELL_TYPES {n}");
    for _ in 0..n {
        s.push_str("9\n");
    }
    let _ = writeln!(s, "CELL_DATA {n}");
    s.push_str("SCALARS level int 1\nLOOKUP_TABLE default\n");
    for c in mesh.leaves() {
        let _ = writeln!(s, "{}", c.level);
    }
    s.push_str("SCALARS class int 1\nLOOKUP_TABLE default\n");
    for c in &classes.class {
        let _ = writeln!(s, "{}", class_code(*c));
    }
    for (name, values) in cell_data {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in values.iter() {
            let _ = writeln!(s, "{v}");
        }
    }
    if let Some((space, nodal)) = space {
        let _ = writeln!(s, "POINT_DATA {}", 4 * n);
        s.push_str("SCALARS u_h double 1\nLOOKUP_TABLE default\n");
        for i in 0..n {
            // Quad point order (0,0), (1,0), (1,1), (0,1) against local dofs 0, 1, 3, 2.
            match space.dofs.cell_dofs[i] {
                Some(d) => {
                    for k in [0, 1, 3, 2] {
                        let _ = writeln!(s, "{}", nodal[d[k]]);
                    }
                }
                None => s.push_str("0\n0\n0\n0\n"),
            }
        }
    }
    s
}

/// Every quadrature point of the cut rules.
pub fn quadrature_table(mesh: &ForestMesh, cut: &CutQuadrature) -> CsvTable {
    let mut t = CsvTable::new(&["cell", "kind", "x", "y", "weight", "nx", "ny"]);
    t.meta("order", cut.order).meta("max_subdiv", cut.max_subdiv);
    for i in 0..mesh.len() {
        if matches!(cut.cells[i], CellRule::Empty) {
            continue;
        }
        let rule = cut.interior_rule(mesh, i);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            t.push(vec![i.to_string(), "interior".into(), fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(*w), String::new(), String::new()]);
        }
        if let Some(b) = cut.boundary_rule(i) {
            for ((p, w), nv) in b.points.iter().zip(&b.weights).zip(&b.normals) {
                t.push(vec![
                    i.to_string(),
                    "boundary".into(),
                    fmt_f64(p[0]),
                    fmt_f64(p[1]),
                    fmt_f64(*w),
                    fmt_f64(nv[0]),
                    fmt_f64(nv[1]),
                ]);
            }
        }
    }
    t
}

/// One row per (constrained dof, master).
pub fn constraint_table(space: &FeSpace) -> CsvTable {
    let mut t = CsvTable::new(&["dof", "x", "y", "provenance", "master", "coefficient"]);
    for (d, c) in space.constraints.constraints.iter().enumerate() {
        let Some(c) = c else { continue };
        let prov = match c.provenance {
            Provenance::H => "H",
            Provenance::A => "A",
            Provenance::HA => "HA",
        };
        let x = space.dofs.coords[d];
        for &(m, w) in &c.masters {
            t.push(vec![d.to_string(), fmt_f64(x[0]), fmt_f64(x[1]), prov.into(), m.to_string(), fmt_f64(w)]);
        }
    }
    t
}

/// Matrix Market coordinate format (1-based).
pub fn matrix_market(a: &CsrMatrix) -> String {
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", a.n, a.n, a.nnz());
    for i in 0..a.n {
        for k in a.row_ptr[i]..a.row_ptr[i + 1] {
            let _ = writeln!(s, "{} {} {:e}", i + 1, a.col[k] + 1, a.val[k]);
        }
    }
    s
}
