use std::path::PathBuf;

use thiserror::Error;
use tracefem_core::adapt::AdaptError;
use tracefem_core::analysis::AnalysisError;
use tracefem_core::fem::FemError;
use tracefem_core::geometry::GeometryError;
use tracefem_core::octree::OctreeError;
use tracefem_core::solver::SolverError;
use tracefem_core::surface_mesh::SurfaceError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("a convergence study needs at least 2 levels, got {0}")]
    InsufficientLevels(usize),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("audit failed: {0}")]
    Audit(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Octree(#[from] OctreeError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
}

impl CliError {
    /// 2 for problems with the request itself, 1 for failures while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::InsufficientLevels(_) => 2,
            _ => 1,
        }
    }

    /// Short machine-readable tag for the manifest.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::InsufficientLevels(_) => "insufficient_levels",
            CliError::Io { .. } => "io",
            CliError::Audit(_) => "audit",
            CliError::Geometry(_) => "geometry",
            CliError::Octree(_) => "octree",
            CliError::Surface(_) => "surface",
            CliError::Fem(_) => "fem",
            CliError::Solver(_) => "solver",
            CliError::Analysis(_) => "analysis",
            CliError::Adapt(_) => "adapt",
        }
    }
}
