//! Writers for VTK legacy ASCII, CSV tables and MatrixMarket.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use tracefem_core::fem::{trilinear_basis, DofMap};
use tracefem_core::octree::OctreeGrid;
use tracefem_core::sparse::CsrMatrix;
use tracefem_core::surface_mesh::SurfaceTriangulation;

use crate::error::CliError;

/// Hexahedron corner order of VTK in terms of the `x + 2y + 4z` corner bits.
const VTK_HEX: [usize; 8] = [0, 1, 3, 2, 4, 5, 7, 6];

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.to_path_buf(), source: e })?;
    }
    fs::write(path, text).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
}

/// Discrete solution at the vertices of the triangulation.
pub fn vertex_values(u: &[f64], grid: &OctreeGrid, dofs: &DofMap, tri: &SurfaceTriangulation) -> Vec<f64> {
    let mut out = vec![0.0; tri.vertices.len()];
    for (cell, patch) in dofs.cells.iter().zip(&tri.patches) {
        let (origin, h) = grid.cell_box(grid.leaves()[cell.leaf as usize]);
        let corner = cell.corner_values(u);
        for t in &tri.triangles[patch.start as usize..patch.end as usize] {
            for &v in &t.vertices {
                let x = tri.vertices[v as usize];
                // vertices lie on cell faces; the clamp absorbs rounding just outside
                let b = match trilinear_basis(origin, h, x) {
                    Ok(b) => b,
                    Err(_) => continue,
                };
                out[v as usize] = (0..8).map(|c| corner[c] * b.values[c]).sum();
            }
        }
    }
    out
}

/// Triangulated surface as POLYDATA, optionally with a point scalar.
pub fn surface_vtk(tri: &SurfaceTriangulation, scalar: Option<(&str, &[f64])>) -> String {
    let mut s = String::from("# vtk DataFile Version 3.0\ntrace surface\nASCII\nDATASET POLYDATA\n");
    writeln!(s, "POINTS {} double", tri.vertices.len()).unwrap();
    for v in &tri.vertices {
        writeln!(s, "{:e} {:e} {:e}", v[0], v[1], v[2]).unwrap();
    }
    writeln!(s, "POLYGONS {} {}", tri.triangles.len(), 4 * tri.triangles.len()).unwrap();
    for t in &tri.triangles {
        writeln!(s, "3 {} {} {}", t.vertices[0], t.vertices[1], t.vertices[2]).unwrap();
    }
    if let Some((name, values)) = scalar {
        writeln!(s, "POINT_DATA {}\nSCALARS {name} double 1\nLOOKUP_TABLE default", values.len()).unwrap();
        for v in values {
            writeln!(s, "{v:e}").unwrap();
        }
    }
    s
}

/// Octree leaves as an UNSTRUCTURED_GRID of hexahedra with the refinement level as cell data.
pub fn grid_vtk(grid: &OctreeGrid) -> String {
    let mut s = String::from("# vtk DataFile Version 3.0\noctree\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(s, "POINTS {} double", grid.num_vertices()).unwrap();
    for v in 0..grid.num_vertices() as u32 {
        let p = grid.vertex_position(v);
        writeln!(s, "{:e} {:e} {:e}", p[0], p[1], p[2]).unwrap();
    }
    let n = grid.num_leaves();
    writeln!(s, "CELLS {n} {}", 9 * n).unwrap();
    for leaf in 0..n {
        let cv = grid.cell_vertices(leaf);
        s.push('8');
        for c in VTK_HEX {
            write!(s, " {}", cv[c]).unwrap();
        }
        s.push('\n');
    }
    writeln!(s, "CELL_TYPES {n}").unwrap();
    for _ in 0..n {
        s.push_str("12\n");
    }
    writeln!(s, "CELL_DATA {n}\nSCALARS level int 1\nLOOKUP_TABLE default").unwrap();
    for k in grid.leaves() {
        writeln!(s, "{}", k.level).unwrap();
    }
    s
}

pub fn matrix_market(a: &CsrMatrix) -> String {
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    writeln!(s, "{} {} {}", a.nrows, a.ncols, a.nnz()).unwrap();
    for i in 0..a.nrows {
        let (cols, vals) = a.row(i);
        for (c, v) in cols.iter().zip(vals) {
            writeln!(s, "{} {} {v:e}", i + 1, c + 1).unwrap();
        }
    }
    s
}

/// Comma-separated table. Missing values print as empty fields.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s += &r.join(",");
            s.push('\n');
        }
        s
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.6e}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
