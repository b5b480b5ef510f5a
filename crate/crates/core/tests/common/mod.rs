#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tracefem_core::fem::{build_dof_map, DofMap};
use tracefem_core::geometry::{LevelSet, SurfaceData, SurfaceProblem};
use tracefem_core::linalg::Vec3;
use tracefem_core::octree::{CellKey, OctreeGrid};
use tracefem_core::surface_mesh::{extract_surface, SurfaceTriangulation, TrilinearField};

pub fn surface(grid: &OctreeGrid, ls: &dyn LevelSet) -> (SurfaceTriangulation, DofMap) {
    let field = TrilinearField::interpolate(grid, ls).unwrap();
    let tri = extract_surface(grid, &field).unwrap();
    let dofs = build_dof_map(grid, &tri);
    (tri, dofs)
}

/// Constant reaction and source, no advection.
pub struct Constant {
    pub c: f64,
    pub f: f64,
}

impl SurfaceData for Constant {
    fn reaction(&self, _p: Vec3) -> f64 {
        self.c
    }

    fn rhs(&self, _p: Vec3) -> f64 {
        self.f
    }
}

/// Exact solution zero, no source: error norms then measure the discrete function itself.
pub struct Zero;

impl SurfaceData for Zero {
    fn reaction(&self, _p: Vec3) -> f64 {
        1.0
    }

    fn rhs(&self, _p: Vec3) -> f64 {
        0.0
    }

    fn exact(&self, _p: Vec3) -> Option<f64> {
        Some(0.0)
    }

    fn exact_surface_gradient(&self, _p: Vec3) -> Option<Vec3> {
        Some(Vec3::ZERO)
    }
}

pub fn problem(ls: impl LevelSet + 'static, eps: f64, data: impl SurfaceData + 'static) -> SurfaceProblem {
    SurfaceProblem::new("test", Box::new(ls), eps, Box::new(data))
}

/// Grid on `(lo, hi)^3` at `h0`, then `rounds` refinements of random leaves near the surface.
pub fn random_adaptive_grid(lo: f64, hi: f64, h0: f64, ls: &dyn LevelSet, rounds: usize, seed: u64) -> OctreeGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid = OctreeGrid::uniform(lo, hi, h0).unwrap();
    for _ in 0..rounds {
        let marked: Vec<CellKey> = grid
            .leaves()
            .iter()
            .copied()
            .filter(|&k| {
                let h = grid.cell_size(k.level);
                ls.value(grid.cell_center(k)).abs() < 1.5 * h && rng.gen_bool(0.3)
            })
            .collect();
        grid.refine(&marked).unwrap();
    }
    grid
}

/// Every pair of leaves sharing a face or an edge differs by at most one level.
pub fn brute_force_balanced(grid: &OctreeGrid) -> bool {
    let boxes: Vec<(CellKey, Vec3, f64)> = grid
        .leaves()
        .iter()
        .map(|&k| {
            let (o, h) = grid.cell_box(k);
            (k, o, h)
        })
        .collect();
    for (i, a) in boxes.iter().enumerate() {
        for b in &boxes[i + 1..] {
            let mut positive = 0;
            let mut touching = true;
            for d in 0..3 {
                let overlap = (a.1[d] + a.2).min(b.1[d] + b.2) - a.1[d].max(b.1[d]);
                if overlap < 0.0 {
                    touching = false;
                } else if overlap > 0.0 {
                    positive += 1;
                }
            }
            if touching && positive >= 1 && (a.0.level as i32 - b.0.level as i32).abs() > 1 {
                return false;
            }
        }
    }
    true
}
