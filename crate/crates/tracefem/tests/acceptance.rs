//! Benchmark acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test -p tracefem --test acceptance -- 1 2 6`.
//! The process exits non-zero on a FAIL only when `ACCEPTANCE_STRICT=1`.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tracefem_core::adapt::{adapt_loop, mark_maximum_values, solve_on_grid, AdaptControls};
use tracefem_core::analysis::{
    build_shishkin_grid, error_norms, loglog_slope, max_abs_on_surface, rates, refine_near_surface, restricted_error,
    ErrorReport, RateBasis,
};
use tracefem_core::fem::{assemble, build_dof_map, supg_delta, Variant};
use tracefem_core::geometry::{
    builtin_problem, LevelSet, Plane, ProblemId, ProblemParams, SourceData, Sphere, SurfaceData, SurfaceProblem, Torus,
};
use tracefem_core::linalg::Vec3;
use tracefem_core::octree::{CellKey, OctreeGrid};
use tracefem_core::quadrature::QuadratureRule;
use tracefem_core::solver::SolverOptions;
use tracefem_core::surface_mesh::{audit, extract_surface, geometry_quality, TrilinearField};

struct Outcome {
    pass: bool,
    detail: String,
}

fn quad() -> QuadratureRule {
    QuadratureRule::triangle(4).unwrap()
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2}")).collect();
    format!("({})", parts.join(", "))
}

/// Errors on `levels` grids, the first uniform at `h0`, each next one halving the cut cells.
fn uniform_sweep(p: &SurfaceProblem, h0: f64, levels: usize, variant: Variant) -> Vec<ErrorReport> {
    let q = quad();
    let mut grid = OctreeGrid::uniform(-2.0, 2.0, h0).unwrap();
    let mut out = Vec::new();
    for level in 0..levels {
        if level > 0 {
            refine_near_surface(&mut grid, p.level_set.as_ref()).unwrap();
        }
        let d = solve_on_grid(p, &grid, variant, &q, &SolverOptions::default()).unwrap();
        out.push(error_norms(&d.solution, p, &grid, &d.dofs, &d.triangulation, &q).unwrap());
    }
    out
}

fn column(reports: &[ErrorReport], i: usize) -> Vec<f64> {
    rates(reports, RateBasis::MeshSize).into_iter().flatten().map(|r| r[i]).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let p = builtin_problem(ProblemId::Ex1, ProblemParams::default()).unwrap();
    let reps = uniform_sweep(&p, 0.25, 4, Variant::SurfaceGradient);
    let elapsed = start.elapsed();
    let l2 = column(&reps, 0);
    let linf = column(&reps, 2);
    let l2_ok = l2.iter().zip([2.20, 2.09, 2.02]).all(|(r, t)| within(*r, t, 0.3));
    let linf_ok = linf.iter().zip([2.18, 1.86, 1.86]).all(|(r, t)| within(*r, t, 0.4));
    let abs_ok = reps.iter().zip([2.672e-1, 5.813e-2, 1.366e-2, 3.364e-3]).all(|(r, t)| {
        let ratio = r.l2 / t;
        (1.0 / 3.0..=3.0).contains(&ratio)
    });
    let dofs: Vec<usize> = reps.iter().map(|r| r.dofs).collect();
    let dofs_ok = dofs.iter().zip([292.0, 1398.0, 5960.0, 24730.0]).all(|(&n, t)| (n as f64 / t - 1.0).abs() <= 0.10);
    let time_ok = elapsed < Duration::from_secs(120);
    let l2_abs: Vec<String> = reps.iter().map(|r| format!("{:.3e}", r.l2)).collect();
    Outcome {
        pass: l2_ok && linf_ok && abs_ok && dofs_ok && time_ok,
        detail: format!(
            "L2 rates {} [{}], Linf rates {} [{}], L2 {:?} [{}], dofs {:?} [{}], {:.1}s [{}]",
            fmt_list(&l2),
            ok(l2_ok),
            fmt_list(&linf),
            ok(linf_ok),
            l2_abs,
            ok(abs_ok),
            dofs,
            ok(dofs_ok),
            elapsed.as_secs_f64(),
            ok(time_ok)
        ),
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "out of range"
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let p = builtin_problem(ProblemId::Ex2, ProblemParams::default()).unwrap();
    let sg = column(&uniform_sweep(&p, 0.25, 4, Variant::SurfaceGradient), 0);
    let fg = column(&uniform_sweep(&p, 0.25, 4, Variant::FullGradient), 0);
    let elapsed = start.elapsed();
    let sg_ok = sg.iter().zip([2.26, 2.27, 2.15]).all(|(r, t)| within(*r, t, 0.3));
    let fg_ok = fg.iter().zip([1.93, 2.10, 1.97]).all(|(r, t)| within(*r, t, 0.3));
    let time_ok = elapsed < Duration::from_secs(120);
    Outcome {
        pass: sg_ok && fg_ok && time_ok,
        detail: format!(
            "surface-gradient L2 rates {} [{}], full-gradient {} [{}], {:.1}s [{}]",
            fmt_list(&sg),
            ok(sg_ok),
            fmt_list(&fg),
            ok(fg_ok),
            elapsed.as_secs_f64(),
            ok(time_ok)
        ),
    }
}

fn criterion_3() -> Outcome {
    let p = builtin_problem(ProblemId::Ex5, ProblemParams { lambda: 0.6, ..Default::default() }).unwrap();
    let uniform = column(&uniform_sweep(&p, 0.25, 4, Variant::SurfaceGradient), 0);
    let last_uniform = *uniform.last().unwrap();
    let uniform_ok = last_uniform <= 1.7;
    let r = adapt_loop(&p, &AdaptControls { h0: 0.5, steps: 12, ..Default::default() }).unwrap();
    let tail = &r.steps[r.steps.len() - 4..];
    let l2 = loglog_slope(&tail.iter().map(|s| (s.dofs, s.errors.as_ref().unwrap().l2)).collect::<Vec<_>>());
    let h1 = loglog_slope(&tail.iter().map(|s| (s.dofs, s.errors.as_ref().unwrap().h1)).collect::<Vec<_>>());
    let l2_ok = (-1.3..=-0.7).contains(&l2);
    let h1_ok = (-0.7..=-0.3).contains(&h1);
    Outcome {
        pass: uniform_ok && l2_ok && h1_ok,
        detail: format!(
            "uniform L2 rates {} [last {}], adaptive slopes over dofs {:?}: L2 {l2:.2} [{}], H1 {h1:.2} [{}]",
            fmt_list(&uniform),
            ok(uniform_ok),
            tail.iter().map(|s| s.dofs).collect::<Vec<_>>(),
            ok(l2_ok),
            ok(h1_ok)
        ),
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let q = quad();
    let p = builtin_problem(ProblemId::Ex6, ProblemParams { eps: 1e-4, ..Default::default() }).unwrap();
    let ls = p.level_set.as_ref();
    let mut grid = build_shishkin_grid(-2.0, 2.0, 1.0 / 64.0, 1.0 / 128.0, 0.25, Some(ls)).unwrap();
    let mut reps = Vec::new();
    for level in 0..3 {
        if level > 0 {
            refine_near_surface(&mut grid, ls).unwrap();
        }
        let d = solve_on_grid(&p, &grid, Variant::Supg { delta0: 1.0, delta1: 0.0 }, &q, &SolverOptions::default()).unwrap();
        reps.push(error_norms(&d.solution, &p, &grid, &d.dofs, &d.triangulation, &q).unwrap());
    }
    let (l2, h1, linf) = (column(&reps, 0), column(&reps, 1), column(&reps, 2));
    let l2_ok = l2.iter().zip([1.77, 1.93]).all(|(r, t)| within(*r, t, 0.4));
    let h1_ok = h1.iter().zip([1.05, 1.01]).all(|(r, t)| within(*r, t, 0.3));
    let linf_ok = linf.iter().zip([1.97, 1.65]).all(|(r, t)| within(*r, t, 0.6));
    let dofs: Vec<usize> = reps.iter().map(|r| r.dofs).collect();
    let dofs_ok = dofs.iter().zip([10356.0, 22830.0, 101332.0]).all(|(&n, t)| (n as f64 / t - 1.0).abs() <= 0.15);
    Outcome {
        pass: l2_ok && h1_ok && linf_ok && dofs_ok,
        detail: format!(
            "L2 rates {} [{}], H1 {} [{}], Linf {} [{}], dofs {:?} [{}], {:.0}s",
            fmt_list(&l2),
            ok(l2_ok),
            fmt_list(&h1),
            ok(h1_ok),
            fmt_list(&linf),
            ok(linf_ok),
            dofs,
            ok(dofs_ok),
            start.elapsed().as_secs_f64()
        ),
    }
}

/// Largest `|u|` of the exact solution, sampled on a fine latitude-longitude grid.
fn exact_peak(p: &SurfaceProblem) -> f64 {
    let mut peak: f64 = 0.0;
    for i in 0..=2000 {
        let theta = PI * i as f64 / 2000.0;
        for j in 0..400 {
            let phi = 2.0 * PI * j as f64 / 400.0;
            let x = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            peak = peak.max(p.data.exact(x).unwrap().abs());
        }
    }
    peak
}

/// Restricted errors and the peak of `|u_h|` on three uniform grids.
fn unresolved_layer(source: SourceData) -> (Vec<ErrorReport>, f64) {
    let q = quad();
    let p = builtin_problem(ProblemId::Ex6, ProblemParams { eps: 1e-6, ..Default::default() }).unwrap().with_source(source);
    let mut grid = OctreeGrid::uniform(-2.0, 2.0, 0.125).unwrap();
    let mut reps = Vec::new();
    let mut peak: f64 = 0.0;
    for level in 0..3 {
        if level > 0 {
            refine_near_surface(&mut grid, p.level_set.as_ref()).unwrap();
        }
        let d = solve_on_grid(&p, &grid, Variant::Supg { delta0: 1.0, delta1: 0.0 }, &q, &SolverOptions::default()).unwrap();
        reps.push(restricted_error(&d.solution, &p, &grid, &d.dofs, &d.triangulation, &q, &|x| x[2].abs() > 0.3).unwrap());
        peak = peak.max(max_abs_on_surface(&d.solution, &grid, &d.dofs, &d.triangulation, &q).unwrap());
    }
    (reps, peak)
}

fn decreasing(v: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = v.collect();
    v.windows(2).all(|w| w[1] < w[0])
}

fn criterion_5() -> (Outcome, String) {
    let p = builtin_problem(ProblemId::Ex6, ProblemParams { eps: 1e-6, ..Default::default() }).unwrap();
    let u_max = exact_peak(&p);
    let judge = |reps: &[ErrorReport], peak: f64| {
        let mono = decreasing(reps.iter().map(|r| r.l2)) && decreasing(reps.iter().map(|r| r.h1)) && decreasing(reps.iter().map(|r| r.linf));
        let bounded = peak <= 1.05 * u_max;
        let l2: Vec<String> = reps.iter().map(|r| format!("{:.2e}", r.l2)).collect();
        let detail = format!(
            "restricted L2 {:?}, monotone in L2/H1/Linf [{}], max|u_h| {peak:.4} vs 1.05 max|u| = {:.4} [{}]",
            l2,
            ok(mono),
            1.05 * u_max,
            ok(bounded)
        );
        (mono && bounded, detail)
    };
    let (reps, peak) = unresolved_layer(SourceData::Interpolant);
    let (pass, detail) = judge(&reps, peak);
    let (reps, peak) = unresolved_layer(SourceData::Extension);
    let (ext_pass, ext_detail) = judge(&reps, peak);
    let note = format!(
        "with f_h = f(p(x)) at quadrature points instead: {} ({ext_detail})",
        if ext_pass { "would pass" } else { "would fail" }
    );
    (Outcome { pass, detail: format!("f_h = nodal interpolant: {detail}") }, note)
}

/// `-Lap u + c u = c` has the solution `u = 1`.
struct Unit(f64);

impl SurfaceData for Unit {
    fn reaction(&self, _p: Vec3) -> f64 {
        self.0
    }

    fn rhs(&self, _p: Vec3) -> f64 {
        self.0
    }
}

fn random_grid(ls: &dyn LevelSet, rounds: usize, seed: u64) -> OctreeGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid = OctreeGrid::uniform(-2.0, 2.0, 0.5).unwrap();
    for _ in 0..rounds {
        let marked: Vec<CellKey> = grid
            .leaves()
            .iter()
            .copied()
            .filter(|&k| ls.value(grid.cell_center(k)).abs() < 1.5 * grid.cell_size(k.level) && rng.gen_bool(0.3))
            .collect();
        grid.refine(&marked).unwrap();
    }
    grid
}

fn hat(x: f64) -> f64 {
    (1.0 - x.abs()).max(0.0)
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let q = quad();
    let mut parts: Vec<(String, bool)> = Vec::new();

    // patch test and extraction audit on random adaptive grids
    let surfaces: [fn() -> Box<dyn LevelSet>; 2] = [|| Box::new(Sphere::new(1.0)), || Box::new(Torus::new(1.0, 0.6))];
    let (mut patch, mut clean, mut dropped) = (0.0f64, true, 0);
    for (k, make) in surfaces.iter().enumerate() {
        let p = SurfaceProblem::new("unit", make(), 0.7, Box::new(Unit(2.0)));
        for seed in 0..5 {
            let grid = random_grid(p.level_set.as_ref(), 2, 1000 * k as u64 + seed);
            let field = TrilinearField::interpolate(&grid, p.level_set.as_ref()).unwrap();
            let tri = extract_surface(&grid, &field).unwrap();
            clean &= tri.is_closed() && audit(&grid, &field, &tri).is_clean(field.scale());
            let d = solve_on_grid(&p, &grid, Variant::SurfaceGradient, &q, &SolverOptions::default()).unwrap();
            // measured on the surface: unknowns dropped for a negligible cut carry no weight there
            let e: Vec<f64> = d.solution.iter().map(|u| u - 1.0).collect();
            patch = patch.max(max_abs_on_surface(&e, &grid, &d.dofs, &d.triangulation, &q).unwrap());
            dropped += d.solve.dropped.len();
        }
    }
    parts.push((format!("patch test max|u_h - 1| on the surface = {patch:.1e} ({dropped} dropped unknowns)"), patch <= 1e-8));
    parts.push(("surfaces watertight, inside parents, oriented".into(), clean));

    // balance after every operation of a random sequence
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut grid = OctreeGrid::uniform_with_cap(0.0, 1.0, 0.25, 5).unwrap();
    let mut balanced = true;
    for _ in 0..200 {
        if rng.gen_bool(0.8) || grid.num_leaves() < 100 {
            let n = rng.gen_range(1..4);
            let marked: Vec<CellKey> =
                grid.leaves().choose_multiple(&mut rng, n).copied().filter(|k| k.level < 5).collect();
            grid.refine(&marked).unwrap();
        } else if let Some(parent) = grid.leaves().choose(&mut rng).and_then(|k| k.parent()) {
            grid.coarsen(&[parent]).unwrap();
        }
        balanced &= grid.balance_violation().is_none() && (grid.total_volume() - 1.0).abs() <= 1e-12;
    }
    parts.push(("2:1 balance after 200 random operations".into(), balanced));

    // hanging nodes reproduce trilinear functions
    let f = |x: Vec3| 0.4 - x[0] + 2.0 * x[1] * x[2] + 0.3 * x[0] * x[1] - 1.1 * x[0] * x[1] * x[2];
    let grid = random_grid(&Sphere::new(0.9), 3, 17);
    let values = grid.constrained_values(f);
    let hanging = grid
        .hanging_nodes()
        .iter()
        .map(|hn| (values[hn.node as usize] - f(grid.vertex_position(hn.node))).abs())
        .fold(0.0, f64::max);
    parts.push((format!("hanging-node reproduction {hanging:.1e}"), hanging <= 1e-13 && !grid.hanging_nodes().is_empty()));

    // single-cell mass and stiffness against a 3x3 Gauss product rule on the section z = 1/2
    let cell = OctreeGrid::uniform(0.0, 1.0, 1.0).unwrap();
    let plane = || Box::new(Plane::new(Vec3::new(0.0, 0.0, 1.0), 0.5));
    let field = TrilinearField::interpolate(&cell, &*plane()).unwrap();
    let tri = extract_surface(&cell, &field).unwrap();
    let dofs = build_dof_map(&cell, &tri);
    let mass = assemble(&SurfaceProblem::new("m", plane(), 0.0, Box::new(Unit(1.0))), &cell, &tri, &dofs, Variant::SurfaceGradient, &q)
        .unwrap()
        .matrix;
    let stiff = assemble(&SurfaceProblem::new("k", plane(), 1.0, Box::new(Unit(0.0))), &cell, &tri, &dofs, Variant::SurfaceGradient, &q)
        .unwrap()
        .matrix;
    let g = [(0.5 - 0.5 * 0.6f64.sqrt(), 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + 0.5 * 0.6f64.sqrt(), 5.0 / 18.0)];
    let nodes: Vec<Vec3> = dofs.dof_nodes.iter().map(|&n| cell.vertex_position(n)).collect();
    let mut worst: f64 = 0.0;
    for i in 0..8 {
        for j in 0..8 {
            let (a, b) = (nodes[i], nodes[j]);
            let (mut m, mut k) = (0.0, 0.0);
            for &(x, wx) in &g {
                for &(y, wy) in &g {
                    let za = hat(0.5 - a[2]);
                    let zb = hat(0.5 - b[2]);
                    let (pa, pb) = (hat(x - a[0]) * hat(y - a[1]) * za, hat(x - b[0]) * hat(y - b[1]) * zb);
                    let ga = [(2.0 * a[0] - 1.0) * hat(y - a[1]) * za, (2.0 * a[1] - 1.0) * hat(x - a[0]) * za];
                    let gb = [(2.0 * b[0] - 1.0) * hat(y - b[1]) * zb, (2.0 * b[1] - 1.0) * hat(x - b[0]) * zb];
                    m += wx * wy * pa * pb;
                    k += wx * wy * (ga[0] * gb[0] + ga[1] * gb[1]);
                }
            }
            worst = worst.max((mass.get(i, j) - m).abs()).max((stiff.get(i, j) - k).abs());
        }
    }
    parts.push((format!("single-cell mass/stiffness vs oracle {worst:.1e}"), worst <= 1e-12));

    // geometry orders on the sphere
    let sphere = Sphere::new(1.0);
    let quality: Vec<_> = [0.25, 0.125, 0.0625]
        .iter()
        .map(|&h| {
            let grid = OctreeGrid::uniform(-2.0, 2.0, h).unwrap();
            let field = TrilinearField::interpolate(&grid, &sphere).unwrap();
            geometry_quality(&extract_surface(&grid, &field).unwrap(), &sphere, &q).unwrap()
        })
        .collect();
    let eoc = |a: f64, b: f64| (a / b).log2();
    let d: Vec<f64> = quality.windows(2).map(|w| eoc(w[0].max_distance, w[1].max_distance)).collect();
    let n: Vec<f64> = quality.windows(2).map(|w| eoc(w[0].max_normal_error, w[1].max_normal_error)).collect();
    let geo_ok = d.iter().all(|r| within(*r, 2.0, 0.4)) && n.iter().all(|r| within(*r, 1.0, 0.4));
    parts.push((format!("distance EOC {}, normal EOC {}", fmt_list(&d), fmt_list(&n)), geo_ok));

    // SUPG parameter against its defining formula
    let mut rng = ChaCha8Rng::seed_from_u64(210);
    let mut delta_ok = true;
    for _ in 0..10_000 {
        let h = 0.5f64.powi(rng.gen_range(1..10));
        let w: f64 = rng.gen_range(0.0..3.0);
        let eps = 10f64.powf(rng.gen_range(-7.0..1.0));
        let c: f64 = rng.gen_range(0.0..4.0);
        let (d0, d1) = (rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
        let tilde = if h * w / (2.0 * eps) > 1.0 { d0 * h / w } else { d1 * h * h / eps };
        let expect = if c > 0.0 { tilde.min(1.0 / c) } else { tilde };
        delta_ok &= (supg_delta(h, w, eps, c, d0, d1) - expect).abs() <= 1e-15 * expect.max(1.0);
    }
    parts.push(("SUPG delta branches".into(), delta_ok));

    // marking ignores a positive rescaling of the indicators
    let mut invariant = true;
    for _ in 0..500 {
        let n = rng.gen_range(1..80);
        let etas: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
        let s = 10f64.powf(rng.gen_range(-8.0..8.0));
        let scaled: Vec<f64> = etas.iter().map(|e| e * s).collect();
        invariant &= mark_maximum_values(&etas) == mark_maximum_values(&scaled);
    }
    parts.push(("marking invariant under scaling".into(), invariant));

    let elapsed = start.elapsed();
    parts.push((format!("{:.1}s", elapsed.as_secs_f64()), elapsed < Duration::from_secs(60)));
    let pass = parts.iter().all(|(_, p)| *p);
    let detail = parts.iter().map(|(s, p)| format!("{s} [{}]", ok(*p))).collect::<Vec<_>>().join("; ");
    Outcome { pass, detail }
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |k: usize| wanted.is_empty() || wanted.contains(&k);
    let mut failed = 0;
    let mut report = |k: usize, o: Outcome| {
        if !o.pass {
            failed += 1;
        }
        println!("criterion {k}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    if run(6) {
        report(6, criterion_6());
    }
    if run(1) {
        report(1, criterion_1());
    }
    if run(2) {
        report(2, criterion_2());
    }
    if run(3) {
        report(3, criterion_3());
    }
    if run(5) {
        let (o, note) = criterion_5();
        report(5, o);
        println!("  note: {note}");
    }
    if run(4) {
        report(4, criterion_4());
    }
    println!("{failed} criteria failed");
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
