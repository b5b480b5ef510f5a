mod common;

use common::{problem, surface, Zero};
use tracefem_core::analysis::{
    build_shishkin_grid, eoc_dofs, eoc_mesh_size, eoc_table, error_norms, loglog_slope, nodal_interpolant, rates,
    refine_near_surface, restricted_error, AnalysisError, ErrorReport, RateBasis,
};
use tracefem_core::fem::{assemble, Variant};
use tracefem_core::geometry::{builtin_problem, ProblemId, ProblemParams, Sphere};
use tracefem_core::octree::OctreeGrid;
use tracefem_core::quadrature::QuadratureRule;
use tracefem_core::solver::SolverOptions;

fn quad() -> QuadratureRule {
    QuadratureRule::triangle(4).unwrap()
}

fn report(dofs: usize, h: f64, e: f64) -> ErrorReport {
    ErrorReport { dofs, h_max: h, l2: e, h1_semi: e, h1: e, linf: e, triangles: 0 }
}

#[test]
fn rate_formulas() {
    assert!((eoc_mesh_size(4e-2, 1e-2, 0.5, 0.25) - 2.0).abs() < 1e-14);
    assert!((eoc_dofs(4e-2, 1e-2, 100, 400) - 2.0).abs() < 1e-14);
    let pts: Vec<(usize, f64)> = [100usize, 400, 1600].iter().map(|&n| (n, 3.0 / n as f64)).collect();
    assert!((loglog_slope(&pts) + 1.0).abs() < 1e-12);
}

#[test]
fn table_rates() {
    let reps = [report(100, 0.5, 4e-2), report(400, 0.25, 1e-2)];
    let r = rates(&reps, RateBasis::MeshSize);
    assert!(r[0].is_none());
    assert!((r[1].unwrap()[0] - 2.0).abs() < 1e-14);
    let table = eoc_table(&reps, RateBasis::MeshSize);
    assert!(table.contains("2.00"));
    let single = eoc_table(&reps[..1], RateBasis::MeshSize);
    assert_eq!(single.lines().count(), 2);
    assert!(!single.contains("2.00"));
}

#[test]
fn zero_function_has_zero_error() {
    let p = problem(Sphere::new(1.0), 1.0, Zero);
    let grid = OctreeGrid::uniform(-2.0, 2.0, 0.5).unwrap();
    let (tri, dofs) = surface(&grid, p.level_set.as_ref());
    let e = error_norms(&vec![0.0; dofs.num_dofs()], &p, &grid, &dofs, &tri, &quad()).unwrap();
    assert_eq!((e.l2, e.h1, e.linf), (0.0, 0.0, 0.0));
}

#[test]
fn missing_exact_solution_is_reported() {
    let p = builtin_problem(ProblemId::Ex4, ProblemParams::default()).unwrap();
    let grid = OctreeGrid::uniform(-3.0, 3.0, 0.5).unwrap();
    let (tri, dofs) = surface(&grid, p.level_set.as_ref());
    let r = error_norms(&vec![0.0; dofs.num_dofs()], &p, &grid, &dofs, &tri, &quad());
    assert_eq!(r, Err(AnalysisError::MissingExactSolution));
}

#[test]
fn restricted_norms() {
    let p = builtin_problem(ProblemId::Ex1, ProblemParams::default()).unwrap();
    let grid = OctreeGrid::uniform(-2.0, 2.0, 0.25).unwrap();
    let (tri, dofs) = surface(&grid, p.level_set.as_ref());
    let u = nodal_interpolant(&p, &grid, &dofs).unwrap();
    let all = error_norms(&u, &p, &grid, &dofs, &tri, &quad()).unwrap();
    let same = restricted_error(&u, &p, &grid, &dofs, &tri, &quad(), &|_| true).unwrap();
    assert_eq!(all, same);
    let cap = restricted_error(&u, &p, &grid, &dofs, &tri, &quad(), &|x| x[2] > 0.3).unwrap();
    assert!(cap.l2 < all.l2 && cap.triangles < all.triangles);
    let none = restricted_error(&u, &p, &grid, &dofs, &tri, &quad(), &|_| false);
    assert_eq!(none, Err(AnalysisError::EmptyRegion));
}

#[test]
fn interpolant_converges_at_optimal_orders() {
    let p = builtin_problem(ProblemId::Ex1, ProblemParams::default()).unwrap();
    let mut reps = Vec::new();
    for h in [0.25, 0.125, 0.0625] {
        let grid = OctreeGrid::uniform(-2.0, 2.0, h).unwrap();
        let (tri, dofs) = surface(&grid, p.level_set.as_ref());
        let u = nodal_interpolant(&p, &grid, &dofs).unwrap();
        reps.push(error_norms(&u, &p, &grid, &dofs, &tri, &quad()).unwrap());
    }
    for r in rates(&reps, RateBasis::MeshSize).into_iter().flatten() {
        assert!((r[0] - 2.0).abs() <= 0.3, "{r:?}");
    }
    let h1: Vec<f64> = reps.iter().map(|r| r.h1_semi).collect();
    for w in h1.windows(2) {
        assert!(((w[0] / w[1]).log2() - 1.0).abs() <= 0.3, "{h1:?}");
    }
}

#[test]
fn interpolant_and_solution_errors_are_comparable() {
    let p = builtin_problem(ProblemId::Ex1, ProblemParams::default()).unwrap();
    let grid = OctreeGrid::uniform(-2.0, 2.0, 0.125).unwrap();
    let (tri, dofs) = surface(&grid, p.level_set.as_ref());
    let ui = nodal_interpolant(&p, &grid, &dofs).unwrap();
    let ei = error_norms(&ui, &p, &grid, &dofs, &tri, &quad()).unwrap();
    let sys = assemble(&p, &grid, &tri, &dofs, Variant::SurfaceGradient, &quad()).unwrap();
    let (u, _) = sys.solve(&SolverOptions::default()).unwrap();
    let e = error_norms(&u, &p, &grid, &dofs, &tri, &quad()).unwrap();
    let ratio = ei.l2 / e.l2;
    assert!((0.25..=4.0).contains(&ratio), "{ratio}");
    assert!(e.h1 >= e.l2);
}

#[test]
fn torus_rates_near_two() {
    let p = builtin_problem(ProblemId::Ex2, ProblemParams::default()).unwrap();
    let mut reps = Vec::new();
    for h in [0.25, 0.125, 0.0625] {
        let grid = OctreeGrid::uniform(-2.0, 2.0, h).unwrap();
        let (tri, dofs) = surface(&grid, p.level_set.as_ref());
        let sys = assemble(&p, &grid, &tri, &dofs, Variant::SurfaceGradient, &quad()).unwrap();
        let (u, _) = sys.solve(&SolverOptions::default()).unwrap();
        reps.push(error_norms(&u, &p, &grid, &dofs, &tri, &quad()).unwrap());
    }
    let r = rates(&reps, RateBasis::MeshSize);
    assert!((r[1].unwrap()[0] - 2.26).abs() <= 0.3);
    assert!((r[2].unwrap()[0] - 2.27).abs() <= 0.3);
}

#[test]
fn shishkin_grid_with_full_band_is_uniform() {
    let g = build_shishkin_grid(-1.0, 1.0, 1.0, 0.25, 0.5, None).unwrap();
    assert_eq!(g.num_leaves(), 512);
    assert!(g.leaves().iter().all(|k| g.cell_size(k.level) == 0.25));
    assert!(build_shishkin_grid(-1.0, 1.0, 1.0, 0.3, 0.5, None).is_err());
}

#[test]
fn shishkin_grid_dof_count() {
    let p = builtin_problem(ProblemId::Ex6, ProblemParams { eps: 1e-4, ..Default::default() }).unwrap();
    let ls = p.level_set.as_ref();
    let grid = build_shishkin_grid(-2.0, 2.0, 1.0 / 64.0, 1.0 / 128.0, 0.25, Some(ls)).unwrap();
    assert!(grid.balance_violation().is_none());
    let (_, dofs) = surface(&grid, ls);
    let n = dofs.num_dofs() as f64;
    assert!((n / 10356.0 - 1.0).abs() <= 0.15, "{n}");
    // cells in the strip near the surface are at the finest size
    for &k in grid.leaves() {
        let c = grid.cell_center(k);
        if c[2].abs() < 1.0 / 64.0 && (c.norm() - 1.0).abs() < 0.01 {
            assert_eq!(grid.cell_size(k.level), 1.0 / 128.0);
        }
    }
}

#[test]
fn near_surface_refinement_matches_global_refinement() {
    let ls = Sphere::new(1.0);
    let mut local = OctreeGrid::uniform(-2.0, 2.0, 0.25).unwrap();
    refine_near_surface(&mut local, &ls).unwrap();
    let global = OctreeGrid::uniform(-2.0, 2.0, 0.125).unwrap();
    let (tl, dl) = surface(&local, &ls);
    let (tg, dg) = surface(&global, &ls);
    assert_eq!(dl.num_dofs(), dg.num_dofs());
    assert_eq!(tl.triangles.len(), tg.triangles.len());
    assert!((tl.area() - tg.area()).abs() < 1e-12);
}
