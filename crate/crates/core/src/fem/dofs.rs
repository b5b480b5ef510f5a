//! Active degrees of freedom of the trace space.

use alloc::vec;
use alloc::vec::Vec;

use crate::octree::OctreeGrid;
use crate::surface_mesh::SurfaceTriangulation;

pub const NO_DOF: u32 = u32::MAX;

/// Unknowns of one cut cell: the free nodes its corners depend on, and the
/// `8 x dofs.len()` row-major weights expressing each corner through them.
#[derive(Clone, Debug, PartialEq)]
pub struct CellDofs {
    pub leaf: u32,
    pub dofs: Vec<u32>,
    pub weights: Vec<f64>,
}

impl CellDofs {
    pub fn weight(&self, corner: usize, local: usize) -> f64 {
        self.weights[corner * self.dofs.len() + local]
    }

    /// Corner values of the finite element function with coefficients `u`.
    pub fn corner_values(&self, u: &[f64]) -> [f64; 8] {
        let m = self.dofs.len();
        core::array::from_fn(|c| (0..m).map(|j| self.weights[c * m + j] * u[self.dofs[j] as usize]).sum())
    }
}

/// Free grid nodes whose (constraint-resolved) basis function has support on a cut cell.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    pub dof_nodes: Vec<u32>,
    pub node_to_dof: Vec<u32>,
    /// One entry per cell patch of the triangulation, same order.
    pub cells: Vec<CellDofs>,
}

impl DofMap {
    pub fn num_dofs(&self) -> usize {
        self.dof_nodes.len()
    }

    /// Nodal values on the whole grid: active nodes from `u`, inactive free nodes zero,
    /// hanging nodes from their masters.
    pub fn nodal_values(&self, grid: &OctreeGrid, u: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; grid.num_vertices()];
        for (d, &n) in self.dof_nodes.iter().enumerate() {
            v[n as usize] = u[d];
        }
        grid.apply_constraints(&mut v);
        v
    }

    /// Coefficient vector of a nodal function given on the grid (hanging entries ignored).
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        self.dof_nodes.iter().map(|&n| nodal[n as usize]).collect()
    }
}

pub fn build_dof_map(grid: &OctreeGrid, tri: &SurfaceTriangulation) -> DofMap {
    let mut node_to_dof = vec![NO_DOF; grid.num_vertices()];
    let mut resolved: Vec<[Vec<(u32, f64)>; 8]> = Vec::with_capacity(tri.patches.len());
    for patch in &tri.patches {
        let cv = grid.cell_vertices(patch.leaf as usize);
        let r: [Vec<(u32, f64)>; 8] = core::array::from_fn(|c| grid.resolve_node(cv[c]));
        for list in &r {
            for &(n, _) in list {
                node_to_dof[n as usize] = 0;
            }
        }
        resolved.push(r);
    }
    let mut dof_nodes = Vec::new();
    for (n, d) in node_to_dof.iter_mut().enumerate() {
        if *d == 0 {
            *d = dof_nodes.len() as u32;
            dof_nodes.push(n as u32);
        }
    }
    let cells = tri
        .patches
        .iter()
        .zip(resolved)
        .map(|(patch, r)| {
            let mut dofs: Vec<u32> = r.iter().flatten().map(|&(n, _)| node_to_dof[n as usize]).collect();
            dofs.sort_unstable();
            dofs.dedup();
            let m = dofs.len();
            let mut weights = vec![0.0; 8 * m];
            for (c, list) in r.iter().enumerate() {
                for &(n, w) in list {
                    let j = dofs.binary_search(&node_to_dof[n as usize]).unwrap();
                    weights[c * m + j] += w;
                }
            }
            CellDofs { leaf: patch.leaf, dofs, weights }
        })
        .collect();
    DofMap { dof_nodes, node_to_dof, cells }
}
