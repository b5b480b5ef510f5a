use alloc::boxed::Box;

use super::{fd_gradient, LevelSet};
use crate::linalg::{Mat3, Vec3};
use crate::math::{cos, sin, sqrt};
use core::f64::consts::PI;

/// Signed distance to a sphere.
#[derive(Clone, Copy, Debug)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
}

impl Sphere {
    pub fn new(radius: f64) -> Self {
        Sphere {
            center: Vec3::ZERO,
            radius,
        }
    }
}

impl LevelSet for Sphere {
    fn value(&self, x: Vec3) -> f64 {
        (x - self.center).norm() - self.radius
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        (x - self.center).normalized()
    }

    fn hessian(&self, x: Vec3) -> Mat3 {
        let r = x - self.center;
        let d = r.norm();
        if d == 0.0 {
            return Mat3::ZERO;
        }
        Mat3::tangential_projector(r * (1.0 / d)) * (1.0 / d)
    }

    fn is_signed_distance(&self) -> bool {
        true
    }
}

/// Signed distance to the torus of revolution about the `x3` axis.
#[derive(Clone, Copy, Debug)]
pub struct Torus {
    pub major: f64,
    pub minor: f64,
}

impl Torus {
    pub fn new(major: f64, minor: f64) -> Self {
        Torus { major, minor }
    }

    /// `(q, q - R, D)` with `q` the distance to the axis and `D` the distance to the core circle.
    fn radii(&self, x: Vec3) -> (f64, f64, f64) {
        let q = sqrt(x[0] * x[0] + x[1] * x[1]);
        let a = q - self.major;
        (q, a, sqrt(a * a + x[2] * x[2]))
    }
}

impl LevelSet for Torus {
    fn value(&self, x: Vec3) -> f64 {
        self.radii(x).2 - self.minor
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        let (q, a, d) = self.radii(x);
        if q == 0.0 || d == 0.0 {
            return Vec3::ZERO;
        }
        Vec3::new(a / d * x[0] / q, a / d * x[1] / q, x[2] / d)
    }

    fn hessian(&self, x: Vec3) -> Mat3 {
        // distance to the core circle: curvature 1/D across the tube, (a/D)/q along it
        let (q, a, d) = self.radii(x);
        if q == 0.0 || d == 0.0 {
            return Mat3::ZERO;
        }
        let n = self.gradient(x);
        let e_phi = Vec3::new(-x[1] / q, x[0] / q, 0.0);
        let t = e_phi.cross(n);
        t.outer(t) * (1.0 / d) + e_phi.outer(e_phi) * (a / (d * q))
    }

    fn is_signed_distance(&self) -> bool {
        true
    }
}

/// Plane `n . x = offset` with unit normal.
#[derive(Clone, Copy, Debug)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    pub fn new(normal: Vec3, offset: f64) -> Self {
        let n = normal.norm();
        Plane {
            normal: normal * (1.0 / n),
            offset: offset / n,
        }
    }
}

impl LevelSet for Plane {
    fn value(&self, x: Vec3) -> f64 {
        self.normal.dot(x) - self.offset
    }

    fn gradient(&self, _x: Vec3) -> Vec3 {
        self.normal
    }

    fn hessian(&self, _x: Vec3) -> Mat3 {
        Mat3::ZERO
    }

    fn is_signed_distance(&self) -> bool {
        true
    }
}

/// `x1^2/4 + x2^2 + 4 x3^2 / (1 + sin(pi x1)/2)^2 - 1`.
#[derive(Clone, Copy, Debug, Default)]
pub struct WavyCigar;

impl WavyCigar {
    /// `g = (1 + sin(pi x1)/2)^-2` and its first two derivatives.
    fn profile(x1: f64) -> (f64, f64, f64) {
        let s = 1.0 + 0.5 * sin(PI * x1);
        let ds = 0.5 * PI * cos(PI * x1);
        let dds = -0.5 * PI * PI * sin(PI * x1);
        let g = 1.0 / (s * s);
        let dg = -2.0 * ds / (s * s * s);
        let ddg = 6.0 * ds * ds / (s * s * s * s) - 2.0 * dds / (s * s * s);
        (g, dg, ddg)
    }
}

impl LevelSet for WavyCigar {
    fn value(&self, x: Vec3) -> f64 {
        let (g, _, _) = Self::profile(x[0]);
        0.25 * x[0] * x[0] + x[1] * x[1] + 4.0 * x[2] * x[2] * g - 1.0
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        let (g, dg, _) = Self::profile(x[0]);
        Vec3::new(0.5 * x[0] + 4.0 * x[2] * x[2] * dg, 2.0 * x[1], 8.0 * x[2] * g)
    }

    fn hessian(&self, x: Vec3) -> Mat3 {
        let (g, dg, ddg) = Self::profile(x[0]);
        let h13 = 8.0 * x[2] * dg;
        Mat3([
            [0.5 + 4.0 * x[2] * x[2] * ddg, 0.0, h13],
            [0.0, 2.0, 0.0],
            [h13, 0.0, 8.0 * g],
        ])
    }
}

/// Quartic surface homeomorphic to a sphere with six handles.
#[derive(Clone, Copy, Debug, Default)]
pub struct SixHandleSurface;

impl LevelSet for SixHandleSurface {
    fn value(&self, x: Vec3) -> f64 {
        let (a, b, c) = (x[0] * x[0], x[1] * x[1], x[2] * x[2]);
        let sq = |v: f64| v * v;
        sq(a + b - 4.0) + sq(b - 1.0) + sq(b + c - 4.0) + sq(a - 1.0) + sq(a + c - 4.0) + sq(c - 1.0)
            - 13.0
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        let (a, b, c) = (x[0] * x[0], x[1] * x[1], x[2] * x[2]);
        Vec3::new(
            4.0 * x[0] * (3.0 * a + b + c - 9.0),
            4.0 * x[1] * (a + 3.0 * b + c - 9.0),
            4.0 * x[2] * (a + b + 3.0 * c - 9.0),
        )
    }

    fn hessian(&self, x: Vec3) -> Mat3 {
        let (a, b, c) = (x[0] * x[0], x[1] * x[1], x[2] * x[2]);
        let xy = 8.0 * x[0] * x[1];
        let xz = 8.0 * x[0] * x[2];
        let yz = 8.0 * x[1] * x[2];
        Mat3([
            [4.0 * (9.0 * a + b + c - 9.0), xy, xz],
            [xy, 4.0 * (a + 9.0 * b + c - 9.0), yz],
            [xz, yz, 4.0 * (a + b + 9.0 * c - 9.0)],
        ])
    }
}

type ScalarFn = Box<dyn Fn(Vec3) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(Vec3) -> Vec3 + Send + Sync>;
type MatrixFn = Box<dyn Fn(Vec3) -> Mat3 + Send + Sync>;

/// Level set given by a closed-form expression; missing derivatives fall back to
/// central finite differences.
pub struct ExprLevelSet {
    value: ScalarFn,
    gradient: Option<VectorFn>,
    hessian: Option<MatrixFn>,
    signed_distance: bool,
    fd_step: f64,
}

impl ExprLevelSet {
    pub fn new(value: impl Fn(Vec3) -> f64 + Send + Sync + 'static) -> Self {
        ExprLevelSet {
            value: Box::new(value),
            gradient: None,
            hessian: None,
            signed_distance: false,
            fd_step: 1e-5,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(Vec3) -> Vec3 + Send + Sync + 'static) -> Self {
        self.gradient = Some(Box::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(Vec3) -> Mat3 + Send + Sync + 'static) -> Self {
        self.hessian = Some(Box::new(h));
        self
    }

    pub fn signed_distance(mut self, yes: bool) -> Self {
        self.signed_distance = yes;
        self
    }
}

impl core::fmt::Debug for ExprLevelSet {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ExprLevelSet")
            .field("analytic_gradient", &self.gradient.is_some())
            .field("analytic_hessian", &self.hessian.is_some())
            .finish()
    }
}

impl LevelSet for ExprLevelSet {
    fn value(&self, x: Vec3) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        match &self.gradient {
            Some(g) => g(x),
            None => fd_gradient(&|y| (self.value)(y), x, self.fd_step),
        }
    }

    fn hessian(&self, x: Vec3) -> Mat3 {
        if let Some(h) = &self.hessian {
            return h(x);
        }
        let mut m = Mat3::ZERO;
        for i in 0..3 {
            let row = fd_gradient(&|y| self.gradient(y)[i], x, self.fd_step);
            m.0[i] = row.0;
        }
        // symmetrise the difference quotient
        (m + m.transpose()) * 0.5
    }

    fn is_signed_distance(&self) -> bool {
        self.signed_distance
    }
}
