//! Galerkin and SUPG systems on the reconstructed surface.

use alloc::vec;
use alloc::vec::Vec;

use super::dofs::{CellDofs, DofMap};
use super::{trilinear_basis, FemError};
use crate::geometry::{SourceData, SurfaceProblem};
use crate::linalg::{Mat3, Vec3};
use crate::octree::OctreeGrid;
use crate::par;
use crate::quadrature::QuadratureRule;
use crate::sparse::CsrMatrix;
use crate::surface_mesh::SurfaceTriangulation;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Variant {
    /// Tangential gradients in the diffusion term.
    SurfaceGradient,
    /// Full ambient gradients in the diffusion term.
    FullGradient,
    /// Surface-gradient form plus streamline diffusion weighted by `supg_delta`.
    Supg { delta0: f64, delta1: f64 },
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::SurfaceGradient => "surface_gradient",
            Variant::FullGradient => "full_gradient",
            Variant::Supg { .. } => "supg",
        }
    }
}

/// Stabilization parameter of one triangle.
///
/// `h` is the size of the cell containing the triangle and `w_max`, `c_max` are the largest
/// velocity magnitude and reaction coefficient over the triangle.
pub fn supg_delta(h: f64, w_max: f64, eps: f64, c_max: f64, delta0: f64, delta1: f64) -> f64 {
    let peclet = h * w_max / (2.0 * eps);
    let tilde = if peclet > 1.0 { delta0 * h / w_max } else { delta1 * h * h / eps };
    tilde.min(1.0 / c_max.max(f64::MIN_POSITIVE))
}

#[derive(Clone, Debug)]
pub struct TraceSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub variant: Variant,
    pub num_dofs: usize,
    /// Trailing multiplier rows (zero-mean closure).
    pub constraint_rows: usize,
    /// `m_i = int psi_i` over the discrete surface.
    pub mass: Vec<f64>,
    pub area: f64,
    /// `int f` over the discrete surface.
    pub load_integral: f64,
    /// True when `w = 0` and `c = 0` at every quadrature point.
    pub pure_diffusion: bool,
    pub max_delta: f64,
}

impl TraceSystem {
    pub fn solve(
        &self,
        opts: &crate::solver::SolverOptions,
    ) -> Result<(Vec<f64>, crate::solver::LinearSolveReport), crate::solver::SolverError> {
        let opts = crate::solver::SolverOptions { constraint_rows: self.constraint_rows, ..opts.clone() };
        let (mut x, rep) = crate::solver::solve(&self.matrix, &self.rhs, &opts)?;
        x.truncate(self.num_dofs);
        Ok((x, rep))
    }
}

struct CellContribution {
    matrix: Vec<f64>,
    rhs: Vec<f64>,
    mass: Vec<f64>,
    area: f64,
    load: f64,
    max_w: f64,
    max_c: f64,
    max_delta: f64,
}

#[allow(clippy::too_many_arguments)]
fn assemble_cell(
    problem: &SurfaceProblem,
    grid: &OctreeGrid,
    tri: &SurfaceTriangulation,
    cell: &CellDofs,
    patch: (usize, usize),
    variant: Variant,
    quad: &QuadratureRule,
    nodal_f: Option<&[f64]>,
) -> Result<CellContribution, FemError> {
    let corner_f = nodal_f.map(|v| cell.corner_values(v));
    let key = grid.leaves()[cell.leaf as usize];
    let (origin, h) = grid.cell_box(key);
    let mut k = [[0.0; 8]; 8];
    let mut f = [0.0; 8];
    let mut mass8 = [0.0; 8];
    let (mut area, mut load, mut max_w, mut max_c, mut max_delta) = (0.0, 0.0, 0.0_f64, 0.0_f64, 0.0_f64);
    let eps = problem.eps;
    let supg = matches!(variant, Variant::Supg { .. });
    struct Point {
        weight: f64,
        psi: [f64; 8],
        grad: [Vec3; 8],
        hess: [Mat3; 8],
        w: Vec3,
        c: f64,
        f: f64,
        div_w: f64,
    }
    let mut points: Vec<Point> = Vec::with_capacity(quad.len());
    for t in patch.0..patch.1 {
        let tr = &tri.triangles[t];
        let p = Mat3::tangential_projector(tr.normal);
        points.clear();
        let (mut tw, mut tc) = (0.0_f64, 0.0_f64);
        for (bary, &qw) in quad.points.iter().zip(&quad.weights) {
            let x = tri.map_point(t, *bary);
            let basis = trilinear_basis(origin, h, x)?;
            let data = problem.eval(x).map_err(FemError::Geometry)?;
            let div_w = if supg && problem.data.has_velocity() {
                let jac = problem.extended_velocity_jacobian(x).map_err(FemError::Geometry)?;
                p.trace_of_product(&jac)
            } else {
                0.0
            };
            tw = tw.max(data.velocity.norm());
            tc = tc.max(data.reaction);
            points.push(Point {
                weight: qw * tr.area,
                psi: basis.values,
                grad: basis.gradients,
                hess: basis.hessians,
                w: data.velocity,
                c: data.reaction,
                f: match &corner_f {
                    Some(cf) => (0..8).map(|i| basis.values[i] * cf[i]).sum(),
                    None => data.rhs,
                },
                div_w,
            });
        }
        max_w = max_w.max(tw);
        max_c = max_c.max(tc.abs());
        let delta = match variant {
            Variant::Supg { delta0, delta1 } if tw > 0.0 => supg_delta(h, tw, eps, tc, delta0, delta1),
            _ => 0.0,
        };
        max_delta = max_delta.max(delta);
        for q in &points {
            let pg: [Vec3; 8] = core::array::from_fn(|i| p.mul_vec(q.grad[i]));
            let diff_g: &[Vec3; 8] = if variant == Variant::FullGradient { &q.grad } else { &pg };
            let wpg: [f64; 8] = core::array::from_fn(|i| q.w.dot(pg[i]));
            area += q.weight;
            load += q.weight * q.f;
            for i in 0..8 {
                mass8[i] += q.weight * q.psi[i];
                f[i] += q.weight * q.f * q.psi[i];
                for j in 0..8 {
                    k[i][j] += q.weight
                        * (eps * diff_g[j].dot(diff_g[i]) - wpg[i] * q.psi[j] + q.c * q.psi[j] * q.psi[i]);
                }
            }
            if delta > 0.0 {
                let residual: [f64; 8] = core::array::from_fn(|j| {
                    -eps * p.trace_of_product(&q.hess[j]) + wpg[j] + (q.c + q.div_w) * q.psi[j]
                });
                for i in 0..8 {
                    let test = delta * q.weight * wpg[i];
                    f[i] += test * q.f;
                    for j in 0..8 {
                        k[i][j] += test * residual[j];
                    }
                }
            }
        }
    }
    // condense onto the free nodes: C^T K C
    let m = cell.dofs.len();
    let c = &cell.weights;
    let mut kc = vec![0.0; 8 * m];
    for i in 0..8 {
        for b in 0..m {
            let mut s = 0.0;
            for j in 0..8 {
                s += k[i][j] * c[j * m + b];
            }
            kc[i * m + b] = s;
        }
    }
    let mut matrix = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    let mut mass = vec![0.0; m];
    for a in 0..m {
        for i in 0..8 {
            let w = c[i * m + a];
            if w == 0.0 {
                continue;
            }
            rhs[a] += w * f[i];
            mass[a] += w * mass8[i];
            for b in 0..m {
                matrix[a * m + b] += w * kc[i * m + b];
            }
        }
    }
    Ok(CellContribution { matrix, rhs, mass, area, load, max_w, max_c, max_delta })
}

/// Row-compressed pattern coupling all unknowns that share a cell.
fn symbolic_pattern(n: usize, dofs: &DofMap) -> CsrMatrix {
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
    for cell in &dofs.cells {
        for &i in &cell.dofs {
            rows[i as usize].extend_from_slice(&cell.dofs);
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::new();
    for r in rows.iter_mut() {
        r.sort_unstable();
        r.dedup();
        col_idx.extend_from_slice(r);
        row_ptr.push(col_idx.len());
    }
    let nnz = col_idx.len();
    CsrMatrix { nrows: n, ncols: n, row_ptr, col_idx, values: vec![0.0; nnz] }
}

pub fn assemble(
    problem: &SurfaceProblem,
    grid: &OctreeGrid,
    tri: &SurfaceTriangulation,
    dofs: &DofMap,
    variant: Variant,
    quad: &QuadratureRule,
) -> Result<TraceSystem, FemError> {
    if tri.triangles.is_empty() || dofs.cells.is_empty() {
        return Err(FemError::EmptyTriangulation);
    }
    let n = dofs.num_dofs();
    let mut matrix = symbolic_pattern(n, dofs);
    let nodal_f = match problem.source {
        SourceData::Extension => None,
        SourceData::Interpolant => {
            let v = par::map(&dofs.dof_nodes, |_, &node| problem.eval(grid.vertex_position(node)).map(|d| d.rhs));
            Some(v.into_iter().collect::<Result<Vec<f64>, _>>().map_err(FemError::Geometry)?)
        }
    };
    let contributions = par::map(&dofs.cells, |idx, cell| {
        let patch = tri.patches[idx];
        let span = (patch.start as usize, patch.end as usize);
        assemble_cell(problem, grid, tri, cell, span, variant, quad, nodal_f.as_deref())
    });
    let mut rhs = vec![0.0; n];
    let mut mass = vec![0.0; n];
    let (mut area, mut load, mut max_w, mut max_c, mut max_delta) = (0.0, 0.0, 0.0_f64, 0.0_f64, 0.0_f64);
    for (cell, contrib) in dofs.cells.iter().zip(contributions) {
        let contrib = contrib?;
        let m = cell.dofs.len();
        for a in 0..m {
            let row = cell.dofs[a] as usize;
            rhs[row] += contrib.rhs[a];
            mass[row] += contrib.mass[a];
            let start = matrix.row_ptr[row];
            let cols = &matrix.col_idx[start..matrix.row_ptr[row + 1]];
            for b in 0..m {
                let p = start + cols.binary_search(&cell.dofs[b]).expect("pattern covers cell couplings");
                matrix.values[p] += contrib.matrix[a * m + b];
            }
        }
        area += contrib.area;
        load += contrib.load;
        max_w = max_w.max(contrib.max_w);
        max_c = max_c.max(contrib.max_c);
        max_delta = max_delta.max(contrib.max_delta);
    }
    for i in 0..n {
        for p in matrix.row_ptr[i]..matrix.row_ptr[i + 1] {
            if !matrix.values[p].is_finite() {
                return Err(FemError::NonFiniteEntry { row: i, col: matrix.col_idx[p] as usize });
            }
        }
        if !rhs[i].is_finite() {
            return Err(FemError::NonFiniteEntry { row: i, col: n });
        }
    }
    Ok(TraceSystem {
        matrix,
        rhs,
        variant,
        num_dofs: n,
        constraint_rows: 0,
        mass,
        area,
        load_integral: load,
        pure_diffusion: max_w == 0.0 && max_c == 0.0,
        max_delta,
    })
}

/// Fix the constant mode of a pure Laplace-Beltrami system: shift the load to zero mean
/// and border the matrix with the row `m_i = int psi_i`.
pub fn zero_mean_close(system: &TraceSystem) -> Result<TraceSystem, FemError> {
    if !system.pure_diffusion || system.constraint_rows != 0 {
        return Err(FemError::NotApplicable);
    }
    let n = system.num_dofs;
    let mean = system.load_integral / system.area;
    let a = &system.matrix;
    let mut row_ptr = Vec::with_capacity(n + 2);
    let mut col_idx = Vec::with_capacity(a.nnz() + 2 * n);
    let mut values = Vec::with_capacity(a.nnz() + 2 * n);
    row_ptr.push(0);
    for i in 0..n {
        let (cols, vals) = a.row(i);
        col_idx.extend_from_slice(cols);
        values.extend_from_slice(vals);
        col_idx.push(n as u32);
        values.push(system.mass[i]);
        row_ptr.push(col_idx.len());
    }
    col_idx.extend(0..n as u32);
    values.extend_from_slice(&system.mass);
    row_ptr.push(col_idx.len());
    let mut rhs: Vec<f64> = system.rhs.iter().zip(&system.mass).map(|(b, m)| b - mean * m).collect();
    rhs.push(0.0);
    Ok(TraceSystem {
        matrix: CsrMatrix { nrows: n + 1, ncols: n + 1, row_ptr, col_idx, values },
        rhs,
        constraint_rows: 1,
        load_integral: 0.0,
        ..system.clone()
    })
}
