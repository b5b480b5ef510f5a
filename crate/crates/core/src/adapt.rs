//! Residual error indicators, maximum marking and the adaptive solve loop.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::analysis::{error_norms, AnalysisError, ErrorReport};
use crate::fem::{assemble, trilinear_basis, zero_mean_close, DofMap, FemError, Variant};
use crate::geometry::{normal_hessian, GeometryError, SurfaceProblem};
use crate::linalg::{Mat3, Vec3};
use crate::math::sqrt;
use crate::octree::{CellKey, OctreeError, OctreeGrid};
use crate::par;
use crate::quadrature::{gauss3_unit, QuadratureRule};
use crate::solver::{LinearSolveReport, SolverError, SolverOptions};
use crate::surface_mesh::{extract_surface, SurfaceError, SurfaceTriangulation, TrilinearField, NO_TRIANGLE};

#[derive(Clone, Debug, PartialEq)]
pub enum AdaptError {
    /// An interior mesh edge with a single triangle; indicators need a closed surface.
    BoundaryEdge { a: u32, b: u32 },
    UnsupportedQuadrature(u32),
    Surface(SurfaceError),
    Fem(FemError),
    Solver(SolverError),
    Analysis(AnalysisError),
    Octree(OctreeError),
    Geometry(GeometryError),
}

impl fmt::Display for AdaptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdaptError::BoundaryEdge { a, b } => write!(f, "mesh edge ({a}, {b}) has one triangle"),
            AdaptError::UnsupportedQuadrature(d) => write!(f, "no triangle rule of degree {d}"),
            AdaptError::Surface(e) => write!(f, "surface extraction: {e}"),
            AdaptError::Fem(e) => write!(f, "assembly: {e}"),
            AdaptError::Solver(e) => write!(f, "linear solve: {e}"),
            AdaptError::Analysis(e) => write!(f, "error norms: {e}"),
            AdaptError::Octree(e) => write!(f, "refinement: {e}"),
            AdaptError::Geometry(e) => write!(f, "geometry: {e}"),
        }
    }
}

impl core::error::Error for AdaptError {}

macro_rules! from_err {
    ($($t:ty => $v:ident),*) => {$(
        impl From<$t> for AdaptError {
            fn from(e: $t) -> Self {
                AdaptError::$v(e)
            }
        }
    )*};
}
from_err!(SurfaceError => Surface, FemError => Fem, SolverError => Solver, AnalysisError => Analysis,
    OctreeError => Octree, GeometryError => Geometry);

/// Squared indicator parts of one triangle, before weighting.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TriangleParts {
    pub residual: f64,
    pub edge: f64,
    pub geometric: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EstimatorMode {
    /// Unit residual and edge weights; `alpha_g` scales the geometric part.
    Elliptic { alpha_g: f64 },
    /// Peclet-dependent weights `min(1/eps, h^-2)` and `min(1/eps, h^-1 eps^-1/2)`, no geometric part.
    Advection,
}

impl EstimatorMode {
    /// `(alpha_r, alpha_e, alpha_g)` for a cell of size `h`.
    pub fn weights(&self, h: f64, eps: f64) -> [f64; 3] {
        match *self {
            EstimatorMode::Elliptic { alpha_g } => [1.0, 1.0, alpha_g],
            EstimatorMode::Advection => {
                let inv = 1.0 / eps;
                [inv.min(1.0 / (h * h)), inv.min(1.0 / (h * sqrt(eps))), 0.0]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellIndicator {
    pub cell: CellKey,
    pub eta_r2: f64,
    pub eta_e2: f64,
    pub eta_g2: f64,
    pub eta: f64,
    pub weights: [f64; 3],
}

/// Shared per-triangle data: the cell box and the corner values of `u_h`.
struct Local {
    origin: Vec3,
    h: f64,
    corner: [f64; 8],
}

fn locals(grid: &OctreeGrid, dofs: &DofMap, u: &[f64]) -> Vec<Local> {
    dofs.cells
        .iter()
        .map(|c| {
            let (origin, h) = grid.cell_box(grid.leaves()[c.leaf as usize]);
            Local { origin, h, corner: c.corner_values(u) }
        })
        .collect()
}

/// Value, ambient gradient and Hessian of `u_h` at `x` inside the cell of `loc`.
fn eval_uh(loc: &Local, x: Vec3) -> Result<(f64, Vec3, Mat3), FemError> {
    let b = trilinear_basis(loc.origin, loc.h, x)?;
    let mut v = 0.0;
    let mut g = Vec3::ZERO;
    let mut hs = Mat3::ZERO;
    for c in 0..8 {
        v += loc.corner[c] * b.values[c];
        g += b.gradients[c] * loc.corner[c];
        hs = hs + b.hessians[c] * loc.corner[c];
    }
    Ok((v, g, hs))
}

fn triangle_to_patch(tri: &SurfaceTriangulation) -> Vec<u32> {
    let mut map = vec![0u32; tri.triangles.len()];
    for (i, p) in tri.patches.iter().enumerate() {
        for t in p.start..p.end {
            map[t as usize] = i as u32;
        }
    }
    map
}

/// `h_S^2 || f + eps Lap u_h - (c + div w) u_h - w . grad u_h ||^2` over triangle `t`.
pub fn eta_residual(
    problem: &SurfaceProblem,
    tri: &SurfaceTriangulation,
    t: usize,
    origin: Vec3,
    h: f64,
    corner: &[f64; 8],
    quad: &QuadratureRule,
) -> Result<f64, AdaptError> {
    let loc = Local { origin, h, corner: *corner };
    residual_part(problem, tri, t, &loc, quad)
}

fn residual_part(
    problem: &SurfaceProblem,
    tri: &SurfaceTriangulation,
    t: usize,
    loc: &Local,
    quad: &QuadratureRule,
) -> Result<f64, AdaptError> {
    let tr = &tri.triangles[t];
    let p = Mat3::tangential_projector(tr.normal);
    let mut sum = 0.0;
    for (bary, &qw) in quad.points.iter().zip(&quad.weights) {
        let x = tri.map_point(t, *bary);
        let (v, g, hs) = eval_uh(loc, x)?;
        let d = problem.eval(x)?;
        let div_w = if problem.data.has_velocity() {
            p.trace_of_product(&problem.extended_velocity_jacobian(x)?)
        } else {
            0.0
        };
        let r = d.rhs + problem.eps * p.trace_of_product(&hs) - (d.reaction + div_w) * v - d.velocity.dot(p.mul_vec(g));
        sum += qw * tr.area * r * r;
    }
    Ok(loc.h * loc.h * sum)
}

/// `h_S^4 |H|^2 (||f||^2 + ||u_h||^2_{H^1})` over triangle `t`, with the shape operator of
/// the level set taken at the barycenter (Frobenius norm).
fn geometric_part(
    problem: &SurfaceProblem,
    tri: &SurfaceTriangulation,
    t: usize,
    loc: &Local,
    quad: &QuadratureRule,
) -> Result<f64, AdaptError> {
    let tr = &tri.triangles[t];
    let curv = normal_hessian(problem.level_set.as_ref(), tri.barycenter(t))?.hessian_of_distance;
    let hn = curv.frobenius_norm();
    if hn == 0.0 {
        return Ok(0.0);
    }
    let p = Mat3::tangential_projector(tr.normal);
    let mut sum = 0.0;
    for (bary, &qw) in quad.points.iter().zip(&quad.weights) {
        let x = tri.map_point(t, *bary);
        let (v, g, _) = eval_uh(loc, x)?;
        let f = problem.eval(x)?.rhs;
        sum += qw * tr.area * (f * f + v * v + p.mul_vec(g).norm_squared());
    }
    let h2 = loc.h * loc.h;
    Ok(h2 * h2 * hn * hn * sum)
}

/// Outward in-plane unit normal of triangle `t` on its edge `(a, b)`.
fn conormal(tri: &SurfaceTriangulation, t: usize, a: Vec3, b: Vec3) -> Vec3 {
    let n = tri.triangles[t].normal;
    let m = (b - a).cross(n).normalized();
    let mid = (a + b) * 0.5;
    if m.dot(mid - tri.barycenter(t)) < 0.0 {
        -m
    } else {
        m
    }
}

/// `m+ + m-` on edge `e`: the sum of the outward co-normals of its two triangles.
pub fn conormal_jump(tri: &SurfaceTriangulation, e: usize) -> Result<Vec3, AdaptError> {
    let edge = tri.edges[e];
    if edge.triangles[1] == NO_TRIANGLE {
        return Err(AdaptError::BoundaryEdge { a: edge.a, b: edge.b });
    }
    let (a, b) = (tri.vertices[edge.a as usize], tri.vertices[edge.b as usize]);
    Ok(conormal(tri, edge.triangles[0] as usize, a, b) + conormal(tri, edge.triangles[1] as usize, a, b))
}

/// Per-edge jump terms `(||eps [grad u_h . m]||^2, ||w . [m]||^2)` on edge `e`.
fn edge_jumps(
    problem: &SurfaceProblem,
    tri: &SurfaceTriangulation,
    locs: &[Local],
    owner: &[u32],
    e: usize,
    advective: bool,
) -> Result<(f64, f64), AdaptError> {
    let edge = tri.edges[e];
    if edge.triangles[1] == NO_TRIANGLE {
        return Err(AdaptError::BoundaryEdge { a: edge.a, b: edge.b });
    }
    let (a, b) = (tri.vertices[edge.a as usize], tri.vertices[edge.b as usize]);
    let len = (b - a).norm();
    let [t1, t2] = edge.triangles.map(|t| t as usize);
    let (m1, m2) = (conormal(tri, t1, a, b), conormal(tri, t2, a, b));
    let (l1, l2) = (&locs[owner[t1] as usize], &locs[owner[t2] as usize]);
    let (p1, p2) = (
        Mat3::tangential_projector(tri.triangles[t1].normal),
        Mat3::tangential_projector(tri.triangles[t2].normal),
    );
    let mjump = m1 + m2;
    let (mut flux, mut adv) = (0.0, 0.0);
    for (s, w) in gauss3_unit() {
        let x = a + (b - a) * s;
        let g1 = p1.mul_vec(eval_uh(l1, x)?.1);
        let g2 = p2.mul_vec(eval_uh(l2, x)?.1);
        let j = problem.eps * (g1.dot(m1) + g2.dot(m2));
        flux += w * len * j * j;
        if advective && problem.data.has_velocity() {
            let wv = problem.eval(x)?.velocity.dot(mjump);
            adv += w * len * wv * wv;
        }
    }
    Ok((flux, adv))
}

/// `(||eps [grad u_h . m]||^2, ||w . [m]||^2)` on the interior edge `e` of `tri`.
pub fn edge_jump_terms(
    problem: &SurfaceProblem,
    grid: &OctreeGrid,
    dofs: &DofMap,
    tri: &SurfaceTriangulation,
    u: &[f64],
    e: usize,
) -> Result<(f64, f64), AdaptError> {
    edge_jumps(problem, tri, &locals(grid, dofs, u), &triangle_to_patch(tri), e, true)
}

/// Unweighted squared indicator parts per triangle.
pub fn triangle_indicators(
    problem: &SurfaceProblem,
    grid: &OctreeGrid,
    dofs: &DofMap,
    tri: &SurfaceTriangulation,
    u: &[f64],
    quad: &QuadratureRule,
    advective_edge_term: bool,
) -> Result<Vec<TriangleParts>, AdaptError> {
    let locs = locals(grid, dofs, u);
    let owner = triangle_to_patch(tri);
    let per_cell = par::map_range(tri.patches.len(), |i| {
        let patch = tri.patches[i];
        (patch.start as usize..patch.end as usize)
            .map(|t| {
                Ok(TriangleParts {
                    residual: residual_part(problem, tri, t, &locs[i], quad)?,
                    edge: 0.0,
                    geometric: geometric_part(problem, tri, t, &locs[i], quad)?,
                })
            })
            .collect::<Result<Vec<_>, AdaptError>>()
    });
    let mut parts = Vec::with_capacity(tri.triangles.len());
    for c in per_cell {
        parts.extend(c?);
    }
    let jumps = par::map_range(tri.edges.len(), |e| edge_jumps(problem, tri, &locs, &owner, e, advective_edge_term));
    for (e, j) in jumps.into_iter().enumerate() {
        let (flux, adv) = j?;
        for t in tri.edges[e].triangles {
            let h = locs[owner[t as usize] as usize].h;
            parts[t as usize].edge += h * (flux + adv);
        }
    }
    Ok(parts)
}

/// Weighted cell indicators: each cell sums the parts of its triangles.
pub fn combine_and_weight(
    parts: &[TriangleParts],
    grid: &OctreeGrid,
    tri: &SurfaceTriangulation,
    eps: f64,
    mode: EstimatorMode,
) -> Vec<CellIndicator> {
    tri.patches
        .iter()
        .map(|p| {
            let cell = grid.leaves()[p.leaf as usize];
            let weights = mode.weights(grid.cell_size(cell.level), eps);
            let mut sums = TriangleParts::default();
            for t in &parts[p.start as usize..p.end as usize] {
                sums.residual += t.residual;
                sums.edge += t.edge;
                sums.geometric += t.geometric;
            }
            let eta2 = weights[0] * sums.residual + weights[1] * sums.edge + weights[2] * sums.geometric;
            CellIndicator {
                cell,
                eta_r2: sums.residual,
                eta_e2: sums.edge,
                eta_g2: sums.geometric,
                eta: sqrt(eta2),
                weights,
            }
        })
        .collect()
}

/// Cells with `eta >= max(eta) / 2` (ties at the threshold are marked).
pub fn mark_maximum(indicators: &[CellIndicator]) -> Vec<CellKey> {
    let etas: Vec<f64> = indicators.iter().map(|c| c.eta).collect();
    mark_maximum_values(&etas).into_iter().map(|i| indicators[i].cell).collect()
}

/// Indices with `v >= max(v) / 2`.
pub fn mark_maximum_values(values: &[f64]) -> Vec<usize> {
    let max = values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let threshold = 0.5 * max;
    (0..values.len()).filter(|&i| values[i] >= threshold).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptControls {
    pub lo: f64,
    pub hi: f64,
    pub h0: f64,
    /// Number of refinement steps; the loop performs `steps + 1` solves at most.
    pub steps: usize,
    pub max_dofs: usize,
    pub variant: Variant,
    pub mode: EstimatorMode,
    pub advective_edge_term: bool,
    pub quad_degree: u32,
    pub solver: SolverOptions,
    pub max_level: u8,
}

impl Default for AdaptControls {
    fn default() -> Self {
        AdaptControls {
            lo: -2.0,
            hi: 2.0,
            h0: 0.25,
            steps: 5,
            max_dofs: 2_000_000,
            variant: Variant::SurfaceGradient,
            mode: EstimatorMode::Elliptic { alpha_g: 1.0 },
            advective_edge_term: true,
            quad_degree: 4,
            solver: SolverOptions::default(),
            max_level: crate::octree::DEFAULT_MAX_LEVEL,
        }
    }
}

/// One solve of the adaptive sequence.
#[derive(Clone, Debug)]
pub struct AdaptStep {
    pub step: usize,
    pub dofs: usize,
    pub leaves: usize,
    pub triangles: usize,
    pub errors: Option<ErrorReport>,
    /// `sqrt(sum eta(S)^2)`.
    pub estimate: f64,
    /// Cells marked after this solve (empty on the last step).
    pub marked: Vec<CellKey>,
    pub solve: LinearSolveReport,
}

/// Everything produced by one solve on a fixed grid.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub triangulation: SurfaceTriangulation,
    pub dofs: DofMap,
    pub solution: Vec<f64>,
    pub solve: LinearSolveReport,
}

/// Reconstruct the surface on `grid`, assemble, and solve.
pub fn solve_on_grid(
    problem: &SurfaceProblem,
    grid: &OctreeGrid,
    variant: Variant,
    quad: &QuadratureRule,
    solver: &SolverOptions,
) -> Result<Discretization, AdaptError> {
    let field = TrilinearField::interpolate(grid, problem.level_set.as_ref())?;
    let triangulation = extract_surface(grid, &field)?;
    let dofs = crate::fem::build_dof_map(grid, &triangulation);
    let mut system = assemble(problem, grid, &triangulation, &dofs, variant, quad)?;
    if problem.zero_mean {
        system = zero_mean_close(&system)?;
    }
    let (solution, solve) = system.solve(solver)?;
    Ok(Discretization { triangulation, dofs, solution, solve })
}

#[derive(Clone, Debug)]
pub struct AdaptResult {
    pub steps: Vec<AdaptStep>,
    pub grid: OctreeGrid,
    pub last: Discretization,
}

/// Solve, estimate, mark and refine until the step or dof budget is spent.
pub fn adapt_loop(problem: &SurfaceProblem, controls: &AdaptControls) -> Result<AdaptResult, AdaptError> {
    let quad = QuadratureRule::triangle(controls.quad_degree).map_err(|e| AdaptError::UnsupportedQuadrature(e.0))?;
    let mut grid = OctreeGrid::uniform_with_cap(controls.lo, controls.hi, controls.h0, controls.max_level)?;
    let mut steps = Vec::new();
    let mut step = 0;
    loop {
        let disc = solve_on_grid(problem, &grid, controls.variant, &quad, &controls.solver)?;
        let errors = if problem.has_exact_solution() {
            Some(error_norms(&disc.solution, problem, &grid, &disc.dofs, &disc.triangulation, &quad)?)
        } else {
            None
        };
        let parts = triangle_indicators(
            problem,
            &grid,
            &disc.dofs,
            &disc.triangulation,
            &disc.solution,
            &quad,
            controls.advective_edge_term,
        )?;
        let cells = combine_and_weight(&parts, &grid, &disc.triangulation, problem.eps, controls.mode);
        let estimate = sqrt(cells.iter().map(|c| c.eta * c.eta).sum());
        let dofs = disc.dofs.num_dofs();
        let last = step >= controls.steps || dofs >= controls.max_dofs;
        let marked = if last { Vec::new() } else { mark_maximum(&cells) };
        steps.push(AdaptStep {
            step,
            dofs,
            leaves: grid.num_leaves(),
            triangles: disc.triangulation.triangles.len(),
            errors,
            estimate,
            marked: marked.clone(),
            solve: disc.solve.clone(),
        });
        if last {
            return Ok(AdaptResult { steps, grid, last: disc });
        }
        grid.refine(&marked)?;
        step += 1;
    }
}
