//! Error norms against extended exact solutions, convergence rates and layer-fitted grids.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::fem::{trilinear_basis, DofMap, FemError};
use crate::geometry::{GeometryError, LevelSet, SurfaceProblem};
use crate::linalg::{Mat3, Vec3};
use crate::math::{ln as log, round, sqrt};
use crate::octree::{CellKey, OctreeError, OctreeGrid};
use crate::par;
use crate::quadrature::QuadratureRule;
use crate::surface_mesh::SurfaceTriangulation;

#[derive(Clone, Debug, PartialEq)]
pub enum AnalysisError {
    MissingExactSolution,
    EmptyRegion,
    Fem(FemError),
    Geometry(GeometryError),
    Octree(OctreeError),
}

impl fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalysisError::MissingExactSolution => f.write_str("the problem has no exact solution"),
            AnalysisError::EmptyRegion => f.write_str("no triangle lies in the requested region"),
            AnalysisError::Fem(e) => write!(f, "{e}"),
            AnalysisError::Geometry(e) => write!(f, "{e}"),
            AnalysisError::Octree(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for AnalysisError {}

impl From<FemError> for AnalysisError {
    fn from(e: FemError) -> Self {
        AnalysisError::Fem(e)
    }
}

impl From<GeometryError> for AnalysisError {
    fn from(e: GeometryError) -> Self {
        AnalysisError::Geometry(e)
    }
}

impl From<OctreeError> for AnalysisError {
    fn from(e: OctreeError) -> Self {
        AnalysisError::Octree(e)
    }
}

/// Errors of one discrete solution on the reconstructed surface.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub dofs: usize,
    /// Largest cut-cell size.
    pub h_max: f64,
    pub l2: f64,
    pub h1_semi: f64,
    pub h1: f64,
    /// Maximum over quadrature points.
    pub linf: f64,
    pub triangles: usize,
}

#[derive(Default, Clone, Copy)]
struct Sums {
    l2: f64,
    h1: f64,
    linf: f64,
    count: usize,
}

/// Values and tangential gradients of the discrete solution at quadrature points of every
/// triangle of `patch_idx`, passed to `visit(triangle, x, weight, u_h, grad_h)`.
fn for_each_point(
    grid: &OctreeGrid,
    dofs: &DofMap,
    tri: &SurfaceTriangulation,
    quad: &QuadratureRule,
    u: &[f64],
    patch_idx: usize,
    mut visit: impl FnMut(usize, Vec3, f64, f64, Vec3) -> Result<(), AnalysisError>,
) -> Result<(), AnalysisError> {
    let cell = &dofs.cells[patch_idx];
    let patch = tri.patches[patch_idx];
    let (origin, h) = grid.cell_box(grid.leaves()[cell.leaf as usize]);
    let corner = cell.corner_values(u);
    for t in patch.start as usize..patch.end as usize {
        let tr = &tri.triangles[t];
        let proj = Mat3::tangential_projector(tr.normal);
        for (bary, &qw) in quad.points.iter().zip(&quad.weights) {
            let x = tri.map_point(t, *bary);
            let b = trilinear_basis(origin, h, x)?;
            let mut val = 0.0;
            let mut grad = Vec3::ZERO;
            for c in 0..8 {
                val += corner[c] * b.values[c];
                grad += b.gradients[c] * corner[c];
            }
            visit(t, x, qw * tr.area, val, proj.mul_vec(grad))?;
        }
    }
    Ok(())
}

/// `L2`, `H1` and `Linf` errors of `u` (coefficients on `dofs`) against the extended exact
/// solution, over the triangles whose barycenter satisfies `region`.
pub fn restricted_error(
    u: &[f64],
    problem: &SurfaceProblem,
    grid: &OctreeGrid,
    dofs: &DofMap,
    tri: &SurfaceTriangulation,
    quad: &QuadratureRule,
    region: &(dyn Fn(Vec3) -> bool + Sync),
) -> Result<ErrorReport, AnalysisError> {
    if !problem.has_exact_solution() {
        return Err(AnalysisError::MissingExactSolution);
    }
    let parts = par::map_range(dofs.cells.len(), |idx| {
        let mut s = Sums::default();
        let patch = tri.patches[idx];
        let inside: Vec<bool> = (patch.start..patch.end).map(|t| region(tri.barycenter(t as usize))).collect();
        for_each_point(grid, dofs, tri, quad, u, idx, |t, x, w, uh, gh| {
            if !inside[t - patch.start as usize] {
                return Ok(());
            }
            let ue = problem.exact_extended(x)?.ok_or(AnalysisError::MissingExactSolution)?;
            let ge = problem.exact_extended_gradient(x)?.ok_or(AnalysisError::MissingExactSolution)?;
            let proj = Mat3::tangential_projector(tri.triangles[t].normal);
            let e = ue - uh;
            let ge = proj.mul_vec(ge) - gh;
            s.l2 += w * e * e;
            s.h1 += w * ge.norm_squared();
            s.linf = s.linf.max(e.abs());
            s.count += 1;
            Ok(())
        })?;
        Ok::<(Sums, usize), AnalysisError>((s, (patch.end - patch.start) as usize))
    });
    let mut total = Sums::default();
    let mut triangles = 0;
    let mut h_max = 0.0_f64;
    for (idx, part) in parts.into_iter().enumerate() {
        let (s, nt) = part?;
        total.l2 += s.l2;
        total.h1 += s.h1;
        total.linf = total.linf.max(s.linf);
        total.count += s.count;
        if s.count > 0 {
            triangles += nt;
            h_max = h_max.max(grid.cell_size(grid.leaves()[dofs.cells[idx].leaf as usize].level));
        }
    }
    if total.count == 0 {
        return Err(AnalysisError::EmptyRegion);
    }
    Ok(ErrorReport {
        dofs: dofs.num_dofs(),
        h_max,
        l2: sqrt(total.l2),
        h1_semi: sqrt(total.h1),
        h1: sqrt(total.l2 + total.h1),
        linf: total.linf,
        triangles,
    })
}

/// Largest `|u_h|` on the discrete surface, sampled at triangle corners and quadrature points.
pub fn max_abs_on_surface(
    u: &[f64],
    grid: &OctreeGrid,
    dofs: &DofMap,
    tri: &SurfaceTriangulation,
    quad: &QuadratureRule,
) -> Result<f64, AnalysisError> {
    let mut points = quad.clone();
    points.points.extend([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    points.weights.extend([0.0; 3]);
    let parts = par::map_range(dofs.cells.len(), |idx| {
        let mut m = 0.0_f64;
        for_each_point(grid, dofs, tri, &points, u, idx, |_, _, _, uh, _| {
            m = m.max(uh.abs());
            Ok(())
        })?;
        Ok::<f64, AnalysisError>(m)
    });
    parts.into_iter().try_fold(0.0_f64, |acc, m| Ok(acc.max(m?)))
}

pub fn error_norms(
    u: &[f64],
    problem: &SurfaceProblem,
    grid: &OctreeGrid,
    dofs: &DofMap,
    tri: &SurfaceTriangulation,
    quad: &QuadratureRule,
) -> Result<ErrorReport, AnalysisError> {
    restricted_error(u, problem, grid, dofs, tri, quad, &|_| true)
}

/// Coefficients of the nodal interpolant of the extended exact solution.
pub fn nodal_interpolant(problem: &SurfaceProblem, grid: &OctreeGrid, dofs: &DofMap) -> Result<Vec<f64>, AnalysisError> {
    let vals = par::map(&dofs.dof_nodes, |_, &n| {
        problem.exact_extended(grid.vertex_position(n))?.ok_or(AnalysisError::MissingExactSolution)
    });
    vals.into_iter().collect()
}

/// `log(e_prev / e_cur) / log(h_prev / h_cur)`.
pub fn eoc_mesh_size(e_prev: f64, e_cur: f64, h_prev: f64, h_cur: f64) -> f64 {
    log(e_prev / e_cur) / log(h_prev / h_cur)
}

/// Rate with respect to `h ~ N^{-1/2}`: `2 log(e_prev / e_cur) / log(N_cur / N_prev)`.
pub fn eoc_dofs(e_prev: f64, e_cur: f64, n_prev: usize, n_cur: usize) -> f64 {
    2.0 * log(e_prev / e_cur) / log(n_cur as f64 / n_prev as f64)
}

/// Least-squares slope of `log e` against `log N`.
pub fn loglog_slope(points: &[(usize, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| log(p.0 as f64)).collect();
    let ys: Vec<f64> = points.iter().map(|p| log(p.1)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// How successive rates are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateBasis {
    MeshSize,
    Dofs,
}

/// Rates of `(l2, h1, linf)` between consecutive reports; `None` for the first.
pub fn rates(reports: &[ErrorReport], basis: RateBasis) -> Vec<Option<[f64; 3]>> {
    let mut out = Vec::with_capacity(reports.len());
    for (k, r) in reports.iter().enumerate() {
        if k == 0 {
            out.push(None);
            continue;
        }
        let p = &reports[k - 1];
        let rate = |a: f64, b: f64| match basis {
            RateBasis::MeshSize => eoc_mesh_size(a, b, p.h_max, r.h_max),
            RateBasis::Dofs => eoc_dofs(a, b, p.dofs, r.dofs),
        };
        out.push(Some([rate(p.l2, r.l2), rate(p.h1, r.h1), rate(p.linf, r.linf)]));
    }
    out
}

/// Plain-text convergence table: dofs, then each norm followed by its rate.
pub fn eoc_table(reports: &[ErrorReport], basis: RateBasis) -> String {
    let mut s = String::from("   #dofs   L2-norm    rate   H1-norm    rate   Linf-norm  rate\n");
    for (r, rate) in reports.iter().zip(rates(reports, basis)) {
        let cell = |v: Option<f64>| match v {
            Some(x) => format!("{x:6.2}"),
            None => String::from("      "),
        };
        s += &format!(
            "{:8}  {:.3e} {}  {:.3e} {}  {:.3e} {}\n",
            r.dofs,
            r.l2,
            cell(rate.map(|x| x[0])),
            r.h1,
            cell(rate.map(|x| x[1])),
            r.linf,
            cell(rate.map(|x| x[2])),
        );
    }
    s
}

/// Layer-fitted grid: cells of size `h_min` covering the slab `|x_3| <= band_halfwidth`
/// near the surface, coarsening outward to `h_max` under 2:1 balance.
///
/// Only cells within one cell diagonal of `surface` (when given) are refined inside the slab;
/// the solution lives on the surface, so cells away from it never carry unknowns.
pub fn build_shishkin_grid(
    lo: f64,
    hi: f64,
    band_halfwidth: f64,
    h_min: f64,
    h_max: f64,
    surface: Option<&dyn LevelSet>,
) -> Result<OctreeGrid, AnalysisError> {
    let mut grid = OctreeGrid::uniform(lo, hi, h_max)?;
    let target = grid.cell_size(0) / h_min;
    let levels = log(target) / log(2.0);
    let fine_level = round(levels) as u8;
    if (levels - fine_level as f64).abs() > 1e-9 || levels < 0.0 {
        return Err(OctreeError::NonDivisibleResolution { side: hi - lo, h: h_min }.into());
    }
    loop {
        let marked: Vec<CellKey> = grid
            .leaves()
            .iter()
            .copied()
            .filter(|&key| {
                if key.level >= fine_level {
                    return false;
                }
                let (origin, h) = grid.cell_box(key);
                let (z0, z1) = (origin.z(), origin.z() + h);
                let in_slab = z1 > -band_halfwidth && z0 < band_halfwidth;
                let near = match surface {
                    None => true,
                    Some(ls) => {
                        let c = grid.cell_center(key);
                        ls.value(c).abs() <= 0.5 * sqrt(3.0) * h * 1.01 + h_min
                    }
                };
                in_slab && near
            })
            .collect();
        if marked.is_empty() {
            return Ok(grid);
        }
        grid.refine(&marked)?;
    }
}

/// Refine every leaf within one cell diagonal plus one cell size of the zero set of `surface`
/// (read as a distance). Away from the surface no cell carries unknowns, so this reproduces
/// the active space of a global uniform refinement at a fraction of the cost.
pub fn refine_near_surface(grid: &mut OctreeGrid, surface: &dyn LevelSet) -> Result<usize, AnalysisError> {
    let marked: Vec<CellKey> = grid
        .leaves()
        .iter()
        .copied()
        .filter(|&key| {
            let h = grid.cell_size(key.level);
            surface.value(grid.cell_center(key)).abs() <= (0.5 * sqrt(3.0) + 1.0) * h * 1.01
        })
        .collect();
    Ok(grid.refine(&marked)?.refined)
}
