//! The subcommands. Each writes its artifacts below `output.dir` and returns their paths
//! together with a human-readable summary.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tracefem_core::adapt::{adapt_loop, solve_on_grid, Discretization};
use tracefem_core::analysis::{
    build_shishkin_grid, eoc_table, error_norms, rates, refine_near_surface, ErrorReport, RateBasis,
};
use tracefem_core::fem::{assemble, zero_mean_close, Variant};
use tracefem_core::geometry::{LevelSet, SurfaceData, SurfaceProblem};
use tracefem_core::linalg::Vec3;
use tracefem_core::octree::{CellKey, OctreeGrid};
use tracefem_core::quadrature::QuadratureRule;
use tracefem_core::solver::SolverOptions;
use tracefem_core::surface_mesh::{audit, extract_surface, geometry_quality, TrilinearField};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::formats::{grid_vtk, matrix_market, num, opt, surface_vtk, vertex_values, write_text, Table};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Dumps {
    pub grid: bool,
    pub surface: bool,
    pub matrix: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

impl Outcome {
    fn write(&mut self, dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
        let path = dir.join(name);
        write_text(&path, text)?;
        self.artifacts.push(path);
        Ok(())
    }
}

fn quad(cfg: &RunConfig) -> Result<QuadratureRule, CliError> {
    QuadratureRule::triangle(cfg.discretization.quad_degree)
        .map_err(|e| CliError::Config(format!("no triangle quadrature of degree {}", e.0)))
}

fn uniform_grid(cfg: &RunConfig) -> Result<OctreeGrid, CliError> {
    let (lo, hi) = cfg.bounds()?;
    Ok(OctreeGrid::uniform_with_cap(lo, hi, cfg.domain.h, cfg.domain.max_level)?)
}

fn surface_artifact(out: &mut Outcome, dir: &Path, name: &str, grid: &OctreeGrid, d: &Discretization) -> Result<(), CliError> {
    let values = vertex_values(&d.solution, grid, &d.dofs, &d.triangulation);
    out.write(dir, name, &surface_vtk(&d.triangulation, Some(("u_h", &values))))
}

#[allow(clippy::too_many_arguments)]
fn dump_matrix(
    out: &mut Outcome,
    dir: &Path,
    name: &str,
    problem: &SurfaceProblem,
    grid: &OctreeGrid,
    d: &Discretization,
    variant: Variant,
    quad: &QuadratureRule,
) -> Result<(), CliError> {
    let mut sys = assemble(problem, grid, &d.triangulation, &d.dofs, variant, quad)?;
    if problem.zero_mean {
        sys = zero_mean_close(&sys)?;
    }
    out.write(dir, name, &matrix_market(&sys.matrix))
}

fn errors_row(r: Option<&ErrorReport>) -> Vec<String> {
    match r {
        Some(r) => vec![num(r.h_max), num(r.l2), num(r.h1_semi), num(r.h1), num(r.linf)],
        None => vec![String::new(); 5],
    }
}

pub fn solve(cfg: &RunConfig, dumps: Dumps) -> Result<Outcome, CliError> {
    let problem = cfg.problem()?;
    let variant = cfg.variant()?;
    let q = quad(cfg)?;
    let grid = uniform_grid(cfg)?;
    let d = solve_on_grid(&problem, &grid, variant, &q, &cfg.solver_options()?)?;
    let errors = match problem.has_exact_solution() {
        true => Some(error_norms(&d.solution, &problem, &grid, &d.dofs, &d.triangulation, &q)?),
        false => None,
    };
    let dir = &cfg.output.dir;
    let mut out = Outcome::default();
    let mut t = Table::new(&[
        "dofs", "triangles", "h_max", "l2", "h1_semi", "h1", "linf", "method", "iterations", "residual",
    ]);
    let mut row = vec![d.dofs.num_dofs().to_string(), d.triangulation.triangles.len().to_string()];
    row.extend(errors_row(errors.as_ref()));
    row.extend([d.solve.method.to_string(), d.solve.iterations.to_string(), num(d.solve.relative_residual)]);
    t.push(row);
    out.write(dir, "errors.csv", &t.to_csv())?;
    surface_artifact(&mut out, dir, "surface.vtk", &grid, &d)?;
    if dumps.grid {
        out.write(dir, "grid.vtk", &grid_vtk(&grid))?;
    }
    if dumps.matrix {
        dump_matrix(&mut out, dir, "matrix.mtx", &problem, &grid, &d, variant, &q)?;
    }
    out.summary = format!(
        "{} with {}: {} dofs, {} triangles, solver {} ({} iterations, residual {:.2e})\n",
        problem.name,
        variant.name(),
        d.dofs.num_dofs(),
        d.triangulation.triangles.len(),
        d.solve.method,
        d.solve.iterations,
        d.solve.relative_residual
    );
    if let Some(e) = errors {
        out.summary += &eoc_table(&[e], RateBasis::MeshSize);
    }
    Ok(out)
}

/// Halve the cells carrying the surface. Distance fields allow refining only near the
/// surface, which yields the same active space as a global refinement.
fn refine_uniformly(grid: &mut OctreeGrid, ls: &dyn LevelSet) -> Result<(), CliError> {
    if ls.is_signed_distance() {
        refine_near_surface(grid, ls)?;
    } else {
        grid.refine_all()?;
    }
    Ok(())
}

fn rate_table(variant: &str, reports: &[ErrorReport], t: &mut Table) {
    for (k, (r, rate)) in reports.iter().zip(rates(reports, RateBasis::MeshSize)).enumerate() {
        let rate = |i: usize| opt(rate.map(|x| x[i]));
        t.push(vec![
            variant.to_string(),
            k.to_string(),
            num(r.h_max),
            r.dofs.to_string(),
            num(r.l2),
            rate(0),
            num(r.h1),
            rate(1),
            num(r.linf),
            rate(2),
        ]);
    }
}

const RATE_HEADER: [&str; 10] = ["variant", "level", "h", "dofs", "l2", "l2_rate", "h1", "h1_rate", "linf", "linf_rate"];

pub fn converge(cfg: &RunConfig, levels: usize, dumps: Dumps) -> Result<Outcome, CliError> {
    if levels < 2 {
        return Err(CliError::InsufficientLevels(levels));
    }
    let problem = cfg.problem()?;
    let q = quad(cfg)?;
    let variants = match cfg.converge.both_variants {
        true => vec![Variant::SurfaceGradient, Variant::FullGradient],
        false => vec![cfg.variant()?],
    };
    let solver = cfg.solver_options()?;
    let dir = &cfg.output.dir;
    let mut out = Outcome::default();
    let mut table = Table::new(&RATE_HEADER);
    for variant in variants {
        let mut grid = uniform_grid(cfg)?;
        let mut reports = Vec::new();
        for level in 0..levels {
            if level > 0 {
                refine_uniformly(&mut grid, problem.level_set.as_ref())?;
            }
            let d = solve_on_grid(&problem, &grid, variant, &q, &solver)?;
            reports.push(error_norms(&d.solution, &problem, &grid, &d.dofs, &d.triangulation, &q)?);
            if dumps.surface {
                surface_artifact(&mut out, dir, &format!("surface_{}_{level}.vtk", variant.name()), &grid, &d)?;
            }
            if dumps.grid {
                out.write(dir, &format!("grid_{}_{level}.vtk", variant.name()), &grid_vtk(&grid))?;
            }
        }
        rate_table(variant.name(), &reports, &mut table);
        out.summary += &format!("{} / {}\n{}", problem.name, variant.name(), eoc_table(&reports, RateBasis::MeshSize));
    }
    out.write(dir, "convergence.csv", &table.to_csv())?;
    Ok(out)
}

pub fn adapt(cfg: &RunConfig, dumps: Dumps) -> Result<Outcome, CliError> {
    let problem = cfg.problem()?;
    let controls = cfg.adapt_controls()?;
    let r = adapt_loop(&problem, &controls)?;
    let dir = &cfg.output.dir;
    let mut out = Outcome::default();
    let mut t = Table::new(&[
        "step", "dofs", "leaves", "triangles", "estimate", "h_max", "l2", "h1_semi", "h1", "linf", "marked",
    ]);
    for s in &r.steps {
        let mut row = vec![s.step.to_string(), s.dofs.to_string(), s.leaves.to_string(), s.triangles.to_string(), num(s.estimate)];
        row.extend(errors_row(s.errors.as_ref()));
        row.push(s.marked.len().to_string());
        t.push(row);
        out.summary += &format!(
            "step {:3}  dofs {:8}  estimate {:.3e}{}\n",
            s.step,
            s.dofs,
            s.estimate,
            s.errors.as_ref().map(|e| format!("  L2 {:.3e}  H1 {:.3e}", e.l2, e.h1)).unwrap_or_default()
        );
    }
    out.write(dir, "adapt.csv", &t.to_csv())?;
    surface_artifact(&mut out, dir, "surface.vtk", &r.grid, &r.last)?;
    if dumps.grid {
        out.write(dir, "grid.vtk", &grid_vtk(&r.grid))?;
    }
    if dumps.matrix {
        let q = quad(cfg)?;
        dump_matrix(&mut out, dir, "matrix.mtx", &problem, &r.grid, &r.last, controls.variant, &q)?;
    }
    Ok(out)
}

pub fn shishkin(cfg: &RunConfig, dumps: Dumps) -> Result<Outcome, CliError> {
    let problem = cfg.problem()?;
    let variant = cfg.variant()?;
    let q = quad(cfg)?;
    let (lo, hi) = cfg.bounds()?;
    let s = &cfg.shishkin;
    if s.levels < 2 {
        return Err(CliError::InsufficientLevels(s.levels));
    }
    let ls = problem.level_set.as_ref();
    let mut grid = build_shishkin_grid(lo, hi, s.band_halfwidth, s.h_min, s.h_max, Some(ls))?;
    let solver = cfg.solver_options()?;
    let dir = &cfg.output.dir;
    let mut out = Outcome::default();
    let mut reports = Vec::new();
    for level in 0..s.levels {
        if level > 0 {
            refine_uniformly(&mut grid, ls)?;
        }
        let d = solve_on_grid(&problem, &grid, variant, &q, &solver)?;
        reports.push(error_norms(&d.solution, &problem, &grid, &d.dofs, &d.triangulation, &q)?);
        if dumps.surface {
            surface_artifact(&mut out, dir, &format!("surface_{level}.vtk"), &grid, &d)?;
        }
        if dumps.grid {
            out.write(dir, &format!("grid_{level}.vtk"), &grid_vtk(&grid))?;
        }
    }
    let mut table = Table::new(&RATE_HEADER);
    rate_table(variant.name(), &reports, &mut table);
    out.write(dir, "shishkin.csv", &table.to_csv())?;
    out.summary = format!("{} / {} on layer-fitted grids\n{}", problem.name, variant.name(), eoc_table(&reports, RateBasis::MeshSize));
    Ok(out)
}

pub fn extract(cfg: &RunConfig, dumps: Dumps) -> Result<Outcome, CliError> {
    let problem = cfg.problem()?;
    let grid = uniform_grid(cfg)?;
    let ls = problem.level_set.as_ref();
    let field = TrilinearField::interpolate(&grid, ls)?;
    let tri = extract_surface(&grid, &field)?;
    let rep = audit(&grid, &field, &tri);
    let gq = geometry_quality(&tri, ls, &quad(cfg)?)?;
    let dir = &cfg.output.dir;
    let mut out = Outcome::default();
    out.write(dir, "surface.vtk", &surface_vtk(&tri, None))?;
    if dumps.grid {
        out.write(dir, "grid.vtk", &grid_vtk(&grid))?;
    }
    let mut t = Table::new(&[
        "vertices", "triangles", "area", "euler", "closed", "outside_parent", "misoriented", "max_distance", "max_normal_error",
    ]);
    t.push(vec![
        tri.vertices.len().to_string(),
        tri.triangles.len().to_string(),
        num(tri.area()),
        tri.euler_characteristic().to_string(),
        tri.is_closed().to_string(),
        rep.outside_parent.to_string(),
        rep.misoriented.to_string(),
        num(gq.max_distance),
        num(gq.max_normal_error),
    ]);
    out.write(dir, "surface.csv", &t.to_csv())?;
    out.summary = format!(
        "{} triangles, {} vertices, area {:.6}, euler characteristic {}, closed {}\n",
        tri.triangles.len(),
        tri.vertices.len(),
        tri.area(),
        tri.euler_characteristic(),
        tri.is_closed()
    );
    Ok(out)
}

/// `u = 1` solves `-Lap u + u = 1`.
struct UnitReaction;

impl SurfaceData for UnitReaction {
    fn reaction(&self, _p: Vec3) -> f64 {
        1.0
    }

    fn rhs(&self, _p: Vec3) -> f64 {
        1.0
    }
}

/// Uniform grid plus two rounds of refining random cells near the surface.
fn seeded_adaptive_grid(cfg: &RunConfig, ls: &dyn LevelSet) -> Result<OctreeGrid, CliError> {
    let mut grid = uniform_grid(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.output.seed);
    for _ in 0..2 {
        let near: Vec<CellKey> = grid
            .leaves()
            .iter()
            .copied()
            .filter(|&k| ls.value(grid.cell_center(k)).abs() <= grid.cell_size(k.level))
            .collect();
        let n = near.len().div_ceil(3);
        let marked: Vec<CellKey> = near.choose_multiple(&mut rng, n).copied().collect();
        grid.refine(&marked)?;
    }
    Ok(grid)
}

/// Invariant audit on the configured surface: balance, hanging-node consistency,
/// watertightness of the extracted surface and the constant patch test.
pub fn check(cfg: &RunConfig, dumps: Dumps) -> Result<Outcome, CliError> {
    let problem = cfg.problem()?;
    let ls = problem.level_set.as_ref();
    let grid = seeded_adaptive_grid(cfg, ls)?;
    let q = quad(cfg)?;
    let mut t = Table::new(&["check", "value", "tolerance", "pass"]);
    let mut failed = Vec::new();
    let mut record = |name: &str, value: f64, tol: f64| {
        let pass = value <= tol;
        if !pass {
            failed.push(name.to_string());
        }
        t.push(vec![name.to_string(), num(value), num(tol), pass.to_string()]);
    };
    record("balance_violations", grid.balance_violation().map_or(0.0, |_| 1.0), 0.0);

    let f = |x: Vec3| 0.3 + x[0] - 2.0 * x[1] + 0.5 * x[2] + x[0] * x[1] - x[1] * x[2] + 0.7 * x[0] * x[1] * x[2];
    let constrained = grid.constrained_values(f);
    let hanging = grid
        .hanging_nodes()
        .iter()
        .map(|hn| (constrained[hn.node as usize] - f(grid.vertex_position(hn.node))).abs())
        .fold(0.0, f64::max);
    record("hanging_trilinear_error", hanging, 1e-13);

    let field = TrilinearField::interpolate(&grid, ls)?;
    let tri = extract_surface(&grid, &field)?;
    let rep = audit(&grid, &field, &tri);
    record("open_edges", if tri.is_closed() { 0.0 } else { 1.0 }, 0.0);
    record("outside_parent", rep.outside_parent as f64, 0.0);
    record("misoriented", rep.misoriented as f64, 0.0);
    record("vertex_residual", rep.max_vertex_residual, 1e-10 * field.scale());

    let unit = SurfaceProblem::new("patch", clone_level_set(cfg)?, 1.0, Box::new(UnitReaction));
    let d = solve_on_grid(&unit, &grid, Variant::SurfaceGradient, &q, &SolverOptions::default())?;
    let patch = d.solution.iter().map(|u| (u - 1.0).abs()).fold(0.0, f64::max);
    record("patch_test", patch, 1e-10);

    let dir = &cfg.output.dir;
    let mut out = Outcome::default();
    out.write(dir, "check.csv", &t.to_csv())?;
    if dumps.grid {
        out.write(dir, "grid.vtk", &grid_vtk(&grid))?;
    }
    if dumps.surface {
        out.write(dir, "surface.vtk", &surface_vtk(&tri, None))?;
    }
    out.summary = t.to_csv();
    if failed.is_empty() {
        Ok(out)
    } else {
        Err(CliError::Audit(failed.join(", ")))
    }
}

/// A second copy of the configured surface (level sets are not `Clone`).
fn clone_level_set(cfg: &RunConfig) -> Result<Box<dyn LevelSet>, CliError> {
    Ok(cfg.problem()?.level_set)
}
