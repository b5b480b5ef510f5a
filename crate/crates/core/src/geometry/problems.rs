use alloc::boxed::Box;
use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

use super::{
    closest_point_project, fd_gradient, normal_hessian, GeometryError, LevelSet, SixHandleSurface,
    Sphere, Torus, WavyCigar,
};
use crate::linalg::{Mat3, Vec3};
use crate::math::{atan, atan2, cos, exp, powf, sin, sqrt};

/// Problem data as functions of a point on the exact surface.
///
/// Off-surface values are obtained by composing with the closest-point
/// projection (see [`SurfaceProblem::eval`]), which makes every datum constant
/// along normals.
pub trait SurfaceData: Send + Sync {
    fn velocity(&self, _p: Vec3) -> Vec3 {
        Vec3::ZERO
    }

    /// Ambient Jacobian `d w_i / d x_j` of the velocity formula at `p`.
    fn velocity_jacobian(&self, _p: Vec3) -> Mat3 {
        Mat3::ZERO
    }

    fn has_velocity(&self) -> bool {
        false
    }

    fn reaction(&self, p: Vec3) -> f64;

    fn rhs(&self, p: Vec3) -> f64;

    fn exact(&self, _p: Vec3) -> Option<f64> {
        None
    }

    /// Tangential gradient of the exact solution at a surface point.
    fn exact_surface_gradient(&self, _p: Vec3) -> Option<Vec3> {
        None
    }
}

/// `-eps Lap_G u + w . grad_G u + (c + div_G w) u = f` on the zero set of `level_set`.
pub struct SurfaceProblem {
    pub name: String,
    pub level_set: Box<dyn LevelSet>,
    pub eps: f64,
    pub data: Box<dyn SurfaceData>,
    /// Pure Laplace-Beltrami case: the solution is fixed by a zero-mean condition.
    pub zero_mean: bool,
    pub projection_tol: f64,
    pub source: SourceData,
}

/// How the right-hand side enters the discrete load vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SourceData {
    /// `f(p(x))` evaluated at every quadrature point.
    #[default]
    Extension,
    /// Trilinear nodal interpolant of `f(p(x))` in the bulk space. Avoids the Gibbs
    /// overshoot of projecting an unresolved source layer.
    Interpolant,
}

impl fmt::Debug for SurfaceProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SurfaceProblem")
            .field("name", &self.name)
            .field("eps", &self.eps)
            .field("zero_mean", &self.zero_mean)
            .field("source", &self.source)
            .finish()
    }
}

/// Normally extended data at one ambient point.
#[derive(Clone, Copy, Debug)]
pub struct PointData {
    pub projection: Vec3,
    pub velocity: Vec3,
    pub reaction: f64,
    pub rhs: f64,
}

impl SurfaceProblem {
    pub fn new(
        name: impl Into<String>,
        level_set: Box<dyn LevelSet>,
        eps: f64,
        data: Box<dyn SurfaceData>,
    ) -> Self {
        SurfaceProblem {
            name: name.into(),
            level_set,
            eps,
            data,
            zero_mean: false,
            projection_tol: 1e-12,
            source: SourceData::Extension,
        }
    }

    pub fn with_zero_mean(mut self, yes: bool) -> Self {
        self.zero_mean = yes;
        self
    }

    pub fn with_source(mut self, source: SourceData) -> Self {
        self.source = source;
        self
    }

    /// Closest point on the surface. Points on the medial axis (where the gradient of the
    /// level set vanishes) are nudged off it first; any nearest point is then acceptable.
    pub fn project(&self, x: Vec3) -> Result<Vec3, GeometryError> {
        match closest_point_project(self.level_set.as_ref(), x, self.projection_tol) {
            Err(GeometryError::DegenerateGradient { .. }) => {
                let shift = 1e-7 * x.norm().max(1.0);
                let y = x + Vec3::new(0.6, 0.48, 0.64) * shift;
                closest_point_project(self.level_set.as_ref(), y, self.projection_tol)
            }
            r => r,
        }
    }

    pub fn has_exact_solution(&self) -> bool {
        self.data.exact(self.sample_surface_point()).is_some()
    }

    fn sample_surface_point(&self) -> Vec3 {
        // any point works for the `Option` shape of the exact solution
        Vec3::new(0.3, 0.4, 0.5)
    }

    pub fn eval(&self, x: Vec3) -> Result<PointData, GeometryError> {
        let p = self.project(x)?;
        Ok(PointData {
            projection: p,
            velocity: self.data.velocity(p),
            reaction: self.data.reaction(p),
            rhs: self.data.rhs(p),
        })
    }

    /// Extended exact solution `u(p(x))`.
    pub fn exact_extended(&self, x: Vec3) -> Result<Option<f64>, GeometryError> {
        Ok(self.data.exact(self.project(x)?))
    }

    /// Jacobian of `p(x)`: `P - d H` for distance fields, finite differences otherwise.
    pub fn projection_jacobian(&self, x: Vec3) -> Result<Mat3, GeometryError> {
        let ls = self.level_set.as_ref();
        if ls.is_signed_distance() {
            let d = normal_hessian(ls, x)?;
            return Ok(d.projector - d.hessian_of_distance * d.signed_value);
        }
        let step = 1e-6;
        let mut jac = Mat3::ZERO;
        for j in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += step;
            xm[j] -= step;
            let dp = (self.project(xp)? - self.project(xm)?) * (0.5 / step);
            for i in 0..3 {
                jac.0[i][j] = dp[i];
            }
        }
        Ok(jac)
    }

    /// `grad (w o p)(x)`, the Jacobian of the normally extended velocity.
    pub fn extended_velocity_jacobian(&self, x: Vec3) -> Result<Mat3, GeometryError> {
        if !self.data.has_velocity() {
            return Ok(Mat3::ZERO);
        }
        let p = self.project(x)?;
        Ok(self.data.velocity_jacobian(p) * self.projection_jacobian(x)?)
    }

    /// Gradient of the extended exact solution restricted to the plane with projector `proj`.
    ///
    /// Uses `(P - d H) grad_G u(p)` when the level set is a distance field and the
    /// analytic surface gradient is known, and central differences of `u o p` otherwise.
    pub fn exact_extended_gradient(&self, x: Vec3) -> Result<Option<Vec3>, GeometryError> {
        let p = self.project(x)?;
        if let Some(g) = self.data.exact_surface_gradient(p) {
            if self.level_set.is_signed_distance() {
                let jac = self.projection_jacobian(x)?;
                return Ok(Some(jac.transpose().mul_vec(g)));
            }
        }
        if self.data.exact(p).is_none() {
            return Ok(None);
        }
        let err = core::cell::Cell::new(None);
        let g = fd_gradient(
            &|y| match self.project(y) {
                Ok(q) => self.data.exact(q).unwrap_or(0.0),
                Err(e) => {
                    err.set(Some(e));
                    0.0
                }
            },
            x,
            1e-6,
        );
        match err.into_inner() {
            Some(e) => Err(e),
            None => Ok(Some(g)),
        }
    }
}

/// Identifier of a built-in benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProblemId {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
    Ex5,
    Ex6,
}

impl ProblemId {
    pub const ALL: [ProblemId; 6] = [
        ProblemId::Ex1,
        ProblemId::Ex2,
        ProblemId::Ex3,
        ProblemId::Ex4,
        ProblemId::Ex5,
        ProblemId::Ex6,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemId::Ex1 => "ex1",
            ProblemId::Ex2 => "ex2",
            ProblemId::Ex3 => "ex3",
            ProblemId::Ex4 => "ex4",
            ProblemId::Ex5 => "ex5",
            ProblemId::Ex6 => "ex6",
        }
    }

    /// Bulk box `(lo, hi)^3` used by the benchmarks.
    pub fn default_box(self) -> (f64, f64) {
        match self {
            ProblemId::Ex3 | ProblemId::Ex4 => (-3.0, 3.0),
            _ => (-2.0, 2.0),
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemId {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProblemId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| GeometryError::UnknownProblemId(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemParams {
    /// Diffusion coefficient for the advection-diffusion benchmark.
    pub eps: f64,
    /// Singularity exponent for the point-singularity benchmark.
    pub lambda: f64,
    /// Read the fourth source centre of the six-handle benchmark as `(-1, -1, -2.04)`.
    pub ex4_alternate_center: bool,
}

impl Default for ProblemParams {
    fn default() -> Self {
        ProblemParams {
            eps: 1.0,
            lambda: 0.6,
            ex4_alternate_center: false,
        }
    }
}

pub fn builtin_problem(id: ProblemId, params: ProblemParams) -> Result<SurfaceProblem, GeometryError> {
    let problem = match id {
        ProblemId::Ex1 => SurfaceProblem::new(id.as_str(), Box::new(Sphere::new(1.0)), 1.0, Box::new(SphereHarmonic { a: 12.0 })),
        ProblemId::Ex2 => SurfaceProblem::new(
            id.as_str(),
            Box::new(Torus::new(1.0, 0.6)),
            1.0,
            Box::new(TorusWaves { major: 1.0, minor: 0.6 }),
        ),
        ProblemId::Ex3 => SurfaceProblem::new(id.as_str(), Box::new(WavyCigar), 1.0, Box::new(CigarProduct)),
        ProblemId::Ex4 => {
            let x4 = if params.ex4_alternate_center {
                Vec3::new(-1.0, -1.0, -2.04)
            } else {
                Vec3::new(0.0, -1.0, -2.04)
            };
            let centers = [
                Vec3::new(-1.0, 1.0, 2.04),
                Vec3::new(1.0, 2.04, 1.0),
                Vec3::new(2.04, 0.0, 1.0),
                x4,
            ];
            SurfaceProblem::new(id.as_str(), Box::new(SixHandleSurface), 1.0, Box::new(GaussianSources { centers }))
                .with_zero_mean(true)
        }
        ProblemId::Ex5 => {
            let lambda = params.lambda;
            if !(lambda > 0.0 && lambda <= 1.0) {
                return Err(GeometryError::InvalidParameter { name: "lambda", value: lambda });
            }
            SurfaceProblem::new(id.as_str(), Box::new(Sphere::new(1.0)), 1.0, Box::new(PolarSingularity { lambda }))
        }
        ProblemId::Ex6 => {
            let eps = params.eps;
            if !(1e-6..=1.0).contains(&eps) {
                return Err(GeometryError::InvalidParameter { name: "eps", value: eps });
            }
            SurfaceProblem::new(id.as_str(), Box::new(Sphere::new(1.0)), eps, Box::new(EquatorLayer { eps }))
        }
    };
    Ok(problem)
}

/// `u = a (3 x1^2 x2 - x2^3) / |x|^3`, an eigenfunction with `-Lap u = 12 u`.
struct SphereHarmonic {
    a: f64,
}

impl SphereHarmonic {
    fn u(&self, x: Vec3) -> f64 {
        let r = x.norm();
        self.a * (3.0 * x[0] * x[0] * x[1] - x[1] * x[1] * x[1]) / (r * r * r)
    }
}

impl SurfaceData for SphereHarmonic {
    fn reaction(&self, _p: Vec3) -> f64 {
        1.0
    }

    fn rhs(&self, p: Vec3) -> f64 {
        13.0 * self.u(p)
    }

    fn exact(&self, p: Vec3) -> Option<f64> {
        Some(self.u(p))
    }

    fn exact_surface_gradient(&self, p: Vec3) -> Option<Vec3> {
        let r = p.norm();
        let num = 3.0 * p[0] * p[0] * p[1] - p[1] * p[1] * p[1];
        let dnum = Vec3::new(6.0 * p[0] * p[1], 3.0 * p[0] * p[0] - 3.0 * p[1] * p[1], 0.0);
        let g = (dnum * (1.0 / (r * r * r)) - p * (3.0 * num / (r * r * r * r * r))) * self.a;
        Some(Mat3::tangential_projector(p * (1.0 / r)).mul_vec(g))
    }
}

/// Torus data in tube coordinates `(phi, theta)`.
struct TorusWaves {
    major: f64,
    minor: f64,
}

impl TorusWaves {
    fn angles(&self, x: Vec3) -> (f64, f64) {
        let q = sqrt(x[0] * x[0] + x[1] * x[1]);
        (atan2(x[1], x[0]), atan2(x[2], q - self.major))
    }
}

impl SurfaceData for TorusWaves {
    fn reaction(&self, _p: Vec3) -> f64 {
        1.0
    }

    fn rhs(&self, p: Vec3) -> f64 {
        let (phi, th) = self.angles(p);
        let (big, r) = (self.major, self.minor);
        let u = sin(3.0 * phi) * cos(3.0 * th + phi);
        let ring = big + r * cos(th);
        9.0 * sin(3.0 * phi) * cos(3.0 * th + phi) / (r * r)
            - (-10.0 * sin(3.0 * phi) * cos(3.0 * th + phi) - 6.0 * cos(3.0 * phi) * sin(3.0 * th + phi))
                / (ring * ring)
            - 3.0 * sin(th) * sin(3.0 * phi) * sin(3.0 * th + phi) / (r * ring)
            + u
    }

    fn exact(&self, p: Vec3) -> Option<f64> {
        let (phi, th) = self.angles(p);
        Some(sin(3.0 * phi) * cos(3.0 * th + phi))
    }

    fn exact_surface_gradient(&self, p: Vec3) -> Option<Vec3> {
        let (phi, th) = self.angles(p);
        let q = sqrt(p[0] * p[0] + p[1] * p[1]);
        let a = q - self.major;
        let u_phi = 3.0 * cos(3.0 * phi) * cos(3.0 * th + phi) - sin(3.0 * phi) * sin(3.0 * th + phi);
        let u_th = -3.0 * sin(3.0 * phi) * sin(3.0 * th + phi);
        let grad_phi = Vec3::new(-p[1], p[0], 0.0) * (1.0 / (q * q));
        let grad_q = Vec3::new(p[0] / q, p[1] / q, 0.0);
        let grad_th = (grad_q * (-p[2]) + Vec3::new(0.0, 0.0, a)) * (1.0 / (a * a + p[2] * p[2]));
        Some(grad_phi * u_phi + grad_th * u_th)
    }
}

/// `u = x1 x2` on the wavy cigar; the source uses the curvature of the level set.
struct CigarProduct;

impl SurfaceData for CigarProduct {
    fn reaction(&self, _p: Vec3) -> f64 {
        1.0
    }

    fn rhs(&self, p: Vec3) -> f64 {
        let d = match normal_hessian(&WavyCigar, p) {
            Ok(d) => d,
            Err(_) => return 0.0,
        };
        let n = d.unit_normal;
        p[0] * p[1] + 2.0 * n[0] * n[1] + d.mean_curvature_trace * (p[0] * n[1] + p[1] * n[0])
    }

    fn exact(&self, p: Vec3) -> Option<f64> {
        Some(p[0] * p[1])
    }

    fn exact_surface_gradient(&self, p: Vec3) -> Option<Vec3> {
        let n = WavyCigar.gradient(p).normalized();
        Some(Mat3::tangential_projector(n).mul_vec(Vec3::new(p[1], p[0], 0.0)))
    }
}

/// Gaussian bumps near the six-handle surface; no closed-form solution.
struct GaussianSources {
    centers: [Vec3; 4],
}

impl SurfaceData for GaussianSources {
    fn reaction(&self, _p: Vec3) -> f64 {
        0.0
    }

    fn rhs(&self, p: Vec3) -> f64 {
        100.0 * self.centers.iter().map(|c| exp(-(p - *c).norm_squared())).sum::<f64>()
    }
}

/// `u = sin^lambda(theta) sin(phi)`, singular at both poles for `lambda < 1`.
struct PolarSingularity {
    lambda: f64,
}

impl SurfaceData for PolarSingularity {
    fn reaction(&self, _p: Vec3) -> f64 {
        1.0
    }

    fn rhs(&self, p: Vec3) -> f64 {
        let q = sqrt(p[0] * p[0] + p[1] * p[1]);
        if q == 0.0 {
            return 0.0;
        }
        let l = self.lambda;
        let s = q / p.norm();
        let sin_phi = p[1] / q;
        (1.0 + l * l + l) * powf(s, l) * sin_phi + (1.0 - l * l) * powf(s, l - 2.0) * sin_phi
    }

    fn exact(&self, p: Vec3) -> Option<f64> {
        let q = sqrt(p[0] * p[0] + p[1] * p[1]);
        if q == 0.0 {
            return Some(0.0);
        }
        Some(powf(q / p.norm(), self.lambda) * p[1] / q)
    }

    fn exact_surface_gradient(&self, p: Vec3) -> Option<Vec3> {
        let q = sqrt(p[0] * p[0] + p[1] * p[1]);
        if q == 0.0 {
            return Some(Vec3::ZERO);
        }
        let r = p.norm();
        let l = self.lambda;
        let s = q / r;
        let grad_s = Vec3::new(p[0] / q, p[1] / q, 0.0) * (1.0 / r) - p * (q / (r * r * r));
        let ratio = p[1] / q;
        let grad_ratio = Vec3::new(-p[0] * p[1], p[0] * p[0], 0.0) * (1.0 / (q * q * q));
        let g = grad_s * (l * powf(s, l - 1.0) * ratio) + grad_ratio * powf(s, l);
        Some(Mat3::tangential_projector(p * (1.0 / r)).mul_vec(g))
    }
}

/// Rotating flow with an internal layer of width `O(sqrt(eps))` along the equator.
struct EquatorLayer {
    eps: f64,
}

impl EquatorLayer {
    fn layer(&self, z: f64) -> (f64, f64) {
        let se = sqrt(self.eps);
        let a = atan(2.0 * z / se);
        let da = (2.0 / se) / (1.0 + 4.0 * z * z / self.eps);
        (a, da)
    }
}

impl SurfaceData for EquatorLayer {
    fn velocity(&self, p: Vec3) -> Vec3 {
        let s = sqrt((1.0 - p[2] * p[2]).max(0.0));
        Vec3::new(-p[1] * s, p[0] * s, 0.0)
    }

    fn velocity_jacobian(&self, p: Vec3) -> Mat3 {
        let s = sqrt((1.0 - p[2] * p[2]).max(0.0));
        let ds = if s > 1e-14 { -p[2] / s } else { 0.0 };
        Mat3([[0.0, -s, -p[1] * ds], [s, 0.0, p[0] * ds], [0.0, 0.0, 0.0]])
    }

    fn has_velocity(&self) -> bool {
        true
    }

    fn reaction(&self, _p: Vec3) -> f64 {
        1.0
    }

    fn rhs(&self, p: Vec3) -> f64 {
        let (x1, x2, x3) = (p[0], p[1], p[2]);
        let e = self.eps;
        let e32 = e * sqrt(e);
        let den = e + 4.0 * x3 * x3;
        let (a, _) = self.layer(x3);
        let u = x1 * x2 * a;
        12.0 * e32 * x1 * x2 * x3 / den
            + 16.0 * e32 * (1.0 - x3 * x3) * x1 * x2 * x3 / (den * den)
            + (6.0 * e * x1 * x2 + sqrt(x1 * x1 + x2 * x2) * (x1 * x1 - x2 * x2)) * a
            + u
    }

    fn exact(&self, p: Vec3) -> Option<f64> {
        Some(p[0] * p[1] * self.layer(p[2]).0)
    }

    fn exact_surface_gradient(&self, p: Vec3) -> Option<Vec3> {
        let (a, da) = self.layer(p[2]);
        let g = Vec3::new(p[1] * a, p[0] * a, p[0] * p[1] * da);
        Some(Mat3::tangential_projector(p.normalized()).mul_vec(g))
    }
}
