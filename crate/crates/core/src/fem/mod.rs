//! Trace finite element spaces and system assembly.

pub mod assembly;
pub mod basis;
pub mod dofs;

use core::fmt;

use crate::geometry::GeometryError;
use crate::linalg::Vec3;

pub use assembly::{assemble, supg_delta, zero_mean_close, TraceSystem, Variant};
pub use basis::{trilinear_basis, TrilinearBasis};
pub use dofs::{build_dof_map, CellDofs, DofMap, NO_DOF};

#[derive(Clone, Debug, PartialEq)]
pub enum FemError {
    PointOutsideCell { point: Vec3 },
    EmptyTriangulation,
    NonFiniteEntry { row: usize, col: usize },
    /// The zero-mean closure needs `w = 0` and `c = 0`.
    NotApplicable,
    Geometry(GeometryError),
}

impl fmt::Display for FemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FemError::PointOutsideCell { point } => write!(f, "point {:?} lies outside the cell", point.0),
            FemError::EmptyTriangulation => f.write_str("the surface triangulation is empty"),
            FemError::NonFiniteEntry { row, col } => write!(f, "non-finite system entry at ({row}, {col})"),
            FemError::NotApplicable => {
                f.write_str("zero-mean closure applies only to pure diffusion (no advection, no reaction)")
            }
            FemError::Geometry(e) => write!(f, "geometry: {e}"),
        }
    }
}

impl core::error::Error for FemError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            FemError::Geometry(e) => Some(e),
            _ => None,
        }
    }
}
