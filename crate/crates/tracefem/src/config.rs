//! Run configuration.
//!
//! A config is a TOML document: flat `key = value` pairs grouped under dotted section
//! headers. Every section and every key is optional; unknown keys are rejected.
//!
//! ```toml
//! [problem]
//! id = "ex6"             # ex1 .. ex6
//! eps = 1e-4             # diffusion (ex6 only; other problems fix it)
//! lambda = 0.6           # singularity exponent (ex5)
//! ex4_alternate_center = false
//! source = "extension"   # or "interpolant"
//!
//! [domain]
//! lo = -2.0              # defaults to the problem's box
//! hi = 2.0
//! h = 0.25
//!
//! [discretization]
//! variant = "supg"       # surface_gradient | full_gradient | supg
//! supg_delta0 = 1.0
//! supg_delta1 = 0.0
//! quad_degree = 4
//!
//! [converge]
//! levels = 4
//! both_variants = true
//!
//! [adapt]
//! steps = 12
//! max_dofs = 2000000
//! estimator = "elliptic" # or "advection"
//! alpha_g = 1.0
//! advective_edge_term = true
//!
//! [shishkin]
//! levels = 3
//! band_halfwidth = 0.015625
//! h_min = 0.0078125
//! h_max = 0.25
//!
//! [solver]
//! method = "auto"        # direct | iterative | auto
//! tol = 1e-10
//! max_iterations = 20000
//!
//! [output]
//! dir = "out"
//! seed = 0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracefem_core::adapt::{AdaptControls, EstimatorMode};
use tracefem_core::fem::Variant;
use tracefem_core::geometry::{builtin_problem, ProblemId, ProblemParams, SourceData, SurfaceProblem};
use tracefem_core::octree::DEFAULT_MAX_LEVEL;
use tracefem_core::solver::{SolveMethod, SolverOptions};

use crate::error::CliError;

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub domain: DomainSection,
    pub discretization: DiscretizationSection,
    pub converge: ConvergeSection,
    pub adapt: AdaptSection,
    pub shishkin: ShishkinSection,
    pub solver: SolverSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub id: String,
    pub eps: Option<f64>,
    pub lambda: f64,
    pub ex4_alternate_center: bool,
    pub source: SourceKind,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            id: "ex1".into(),
            eps: None,
            lambda: 0.6,
            ex4_alternate_center: false,
            source: SourceKind::Extension,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    #[default]
    Extension,
    Interpolant,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSection {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub h: f64,
    pub max_level: u8,
}

impl Default for DomainSection {
    fn default() -> Self {
        DomainSection { lo: None, hi: None, h: 0.25, max_level: DEFAULT_MAX_LEVEL }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationSection {
    pub variant: String,
    pub supg_delta0: f64,
    pub supg_delta1: f64,
    pub quad_degree: u32,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        DiscretizationSection { variant: "surface_gradient".into(), supg_delta0: 1.0, supg_delta1: 0.0, quad_degree: 4 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeSection {
    pub levels: usize,
    pub both_variants: bool,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        ConvergeSection { levels: 4, both_variants: false }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptSection {
    pub steps: usize,
    pub max_dofs: usize,
    pub estimator: String,
    pub alpha_g: f64,
    pub advective_edge_term: bool,
}

impl Default for AdaptSection {
    fn default() -> Self {
        AdaptSection {
            steps: 5,
            max_dofs: 2_000_000,
            estimator: "elliptic".into(),
            alpha_g: 1.0,
            advective_edge_term: true,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ShishkinSection {
    pub levels: usize,
    pub band_halfwidth: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for ShishkinSection {
    fn default() -> Self {
        ShishkinSection { levels: 3, band_halfwidth: 1.0 / 64.0, h_min: 1.0 / 128.0, h_max: 0.25 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub method: String,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        SolverSection { method: "auto".into(), tol: d.tol, max_iterations: d.max_iterations }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub seed: u64,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), seed: 0 }
    }
}

/// A parsed config together with the text it came from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: String,
}

impl LoadedConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(LoadedConfig { config, text: text.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
        Self::parse(&text)
    }
}

impl RunConfig {
    /// Check every string-valued choice and numeric range without building anything.
    pub fn validate(&self) -> Result<(), CliError> {
        self.problem_id()?;
        self.variant()?;
        self.estimator()?;
        self.solver_options()?;
        let bad = |what: &str| Err(CliError::Config(what.to_string()));
        if !(self.domain.h > 0.0) {
            return bad("domain.h must be positive");
        }
        if let (Some(lo), Some(hi)) = (self.domain.lo, self.domain.hi) {
            if !(hi > lo) {
                return bad("domain.hi must exceed domain.lo");
            }
        }
        if matches!(self.problem.eps, Some(e) if !(e > 0.0)) {
            return bad("problem.eps must be positive");
        }
        if !(self.problem.lambda > 0.0) {
            return bad("problem.lambda must be positive");
        }
        if !(self.shishkin.h_min > 0.0 && self.shishkin.h_max >= self.shishkin.h_min && self.shishkin.band_halfwidth > 0.0)
        {
            return bad("shishkin sizes must satisfy 0 < h_min <= h_max and band_halfwidth > 0");
        }
        Ok(())
    }

    pub fn problem_id(&self) -> Result<ProblemId, CliError> {
        self.problem.id.parse().map_err(|_| CliError::Config(format!("unknown problem id `{}`", self.problem.id)))
    }

    pub fn problem(&self) -> Result<SurfaceProblem, CliError> {
        let id = self.problem_id()?;
        let params = ProblemParams {
            eps: self.problem.eps.unwrap_or(ProblemParams::default().eps),
            lambda: self.problem.lambda,
            ex4_alternate_center: self.problem.ex4_alternate_center,
        };
        let source = match self.problem.source {
            SourceKind::Extension => SourceData::Extension,
            SourceKind::Interpolant => SourceData::Interpolant,
        };
        Ok(builtin_problem(id, params)?.with_source(source))
    }

    pub fn bounds(&self) -> Result<(f64, f64), CliError> {
        let (lo, hi) = self.problem_id()?.default_box();
        Ok((self.domain.lo.unwrap_or(lo), self.domain.hi.unwrap_or(hi)))
    }

    pub fn variant(&self) -> Result<Variant, CliError> {
        parse_variant(&self.discretization.variant, &self.discretization)
    }

    pub fn estimator(&self) -> Result<EstimatorMode, CliError> {
        match self.adapt.estimator.as_str() {
            "elliptic" => Ok(EstimatorMode::Elliptic { alpha_g: self.adapt.alpha_g }),
            "advection" => Ok(EstimatorMode::Advection),
            s => Err(CliError::Config(format!("unknown estimator `{s}` (expected elliptic or advection)"))),
        }
    }

    pub fn solver_options(&self) -> Result<SolverOptions, CliError> {
        let method = match self.solver.method.as_str() {
            "direct" => SolveMethod::Direct,
            "iterative" => SolveMethod::Iterative,
            "auto" => SolveMethod::Auto,
            s => return Err(CliError::Config(format!("unknown solver method `{s}` (expected direct, iterative or auto)"))),
        };
        Ok(SolverOptions { method, tol: self.solver.tol, max_iterations: self.solver.max_iterations, constraint_rows: 0 })
    }

    pub fn adapt_controls(&self) -> Result<AdaptControls, CliError> {
        let (lo, hi) = self.bounds()?;
        Ok(AdaptControls {
            lo,
            hi,
            h0: self.domain.h,
            steps: self.adapt.steps,
            max_dofs: self.adapt.max_dofs,
            variant: self.variant()?,
            mode: self.estimator()?,
            advective_edge_term: self.adapt.advective_edge_term,
            quad_degree: self.discretization.quad_degree,
            solver: self.solver_options()?,
            max_level: self.domain.max_level,
        })
    }
}

pub fn parse_variant(name: &str, d: &DiscretizationSection) -> Result<Variant, CliError> {
    match name {
        "surface_gradient" => Ok(Variant::SurfaceGradient),
        "full_gradient" => Ok(Variant::FullGradient),
        "supg" => Ok(Variant::Supg { delta0: d.supg_delta0, delta1: d.supg_delta1 }),
        s => Err(CliError::Config(format!(
            "unknown variant `{s}` (expected surface_gradient, full_gradient or supg)"
        ))),
    }
}
