//! Implicit surfaces, their differential data and the built-in benchmark problems.

mod problems;
mod surfaces;

pub use problems::{builtin_problem, PointData, ProblemId, ProblemParams, SourceData, SurfaceData, SurfaceProblem};
pub use surfaces::{ExprLevelSet, Plane, SixHandleSurface, Sphere, Torus, WavyCigar};

use core::fmt;

use crate::linalg::{Mat3, Vec3};

/// Gradients shorter than this are treated as degenerate.
pub const MIN_GRADIENT: f64 = 1e-8;
/// Iteration cap for closest-point projection.
pub const MAX_PROJECTION_ITERATIONS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub enum GeometryError {
    DegenerateGradient { point: Vec3 },
    NonConvergence { point: Vec3, residual: f64 },
    UnknownProblemId(alloc::string::String),
    InvalidParameter { name: &'static str, value: f64 },
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::DegenerateGradient { point } => {
                write!(f, "level-set gradient vanishes near {:?}", point.0)
            }
            GeometryError::NonConvergence { point, residual } => write!(
                f,
                "closest-point projection of {:?} did not converge (residual {residual:e}); band too wide?",
                point.0
            ),
            GeometryError::UnknownProblemId(id) => write!(f, "unknown problem id `{id}`"),
            GeometryError::InvalidParameter { name, value } => {
                write!(f, "invalid value {value} for parameter `{name}`")
            }
        }
    }
}

impl core::error::Error for GeometryError {}

/// A scalar field whose zero level set is the surface.
///
/// Implementations must be pure: every method is called concurrently from
/// assembly and estimation kernels.
pub trait LevelSet: Send + Sync {
    fn value(&self, x: Vec3) -> f64;
    fn gradient(&self, x: Vec3) -> Vec3;
    fn hessian(&self, x: Vec3) -> Mat3;

    /// `true` when the field is the exact signed distance in a band around its zero set.
    fn is_signed_distance(&self) -> bool {
        false
    }
}

/// Normal, projector and shape operator of the level set at one point.
#[derive(Clone, Copy, Debug)]
pub struct SurfaceDiffData {
    pub point: Vec3,
    pub signed_value: f64,
    pub unit_normal: Vec3,
    pub projector: Mat3,
    /// `H = grad_Gamma n`, symmetric with `H n = 0`.
    pub hessian_of_distance: Mat3,
    /// `tr(H)`, the doubled mean curvature.
    pub mean_curvature_trace: f64,
}

impl SurfaceDiffData {
    /// The two eigenvalues of `H` belonging to tangential directions, ascending.
    pub fn principal_curvatures(&self) -> [f64; 2] {
        // shift the normal eigenvalue out of the way before sorting
        let big = 1e6 * (1.0 + self.hessian_of_distance.max_abs());
        let shifted = self.hessian_of_distance + self.unit_normal.outer(self.unit_normal) * big;
        let e = shifted.symmetric_eigenvalues();
        [e[0], e[1]]
    }
}

/// Unit normal, projector and the shape operator `H = (1/|g|) P (grad^2 phi) P`.
///
/// The entrywise expansion of this product is the closed-form curvature
/// formula for a general (non-distance) level set.
pub fn normal_hessian(ls: &dyn LevelSet, x: Vec3) -> Result<SurfaceDiffData, GeometryError> {
    let g = ls.gradient(x);
    let gn = g.norm();
    if gn < MIN_GRADIENT {
        return Err(GeometryError::DegenerateGradient { point: x });
    }
    let n = g * (1.0 / gn);
    let p = Mat3::tangential_projector(n);
    let h = (p * ls.hessian(x) * p) * (1.0 / gn);
    Ok(SurfaceDiffData {
        point: x,
        signed_value: ls.value(x),
        unit_normal: n,
        projector: p,
        hessian_of_distance: h,
        mean_curvature_trace: h.trace(),
    })
}

/// Closest point on the zero level set.
///
/// Exact signed-distance fields use `x - phi(x) n(x)`. Other fields take a damped
/// Newton search along the gradient line through `x`, followed by tangential
/// corrections (Newton on the Lagrange conditions of `min |x - p|, phi(p) = 0`)
/// until `x - p` is parallel to the normal at `p`.
pub fn closest_point_project(ls: &dyn LevelSet, x: Vec3, tol: f64) -> Result<Vec3, GeometryError> {
    let phi = ls.value(x);
    let g = ls.gradient(x);
    let gn2 = g.norm_squared();
    if gn2 < MIN_GRADIENT * MIN_GRADIENT {
        return Err(GeometryError::DegenerateGradient { point: x });
    }
    if ls.is_signed_distance() {
        return Ok(x - g * (phi / crate::math::sqrt(gn2)));
    }

    // damped Newton on psi(s) = phi(x - s g)
    let mut s = 0.0;
    let mut psi = phi;
    let mut iterations = 0;
    while psi.abs() > tol && iterations < MAX_PROJECTION_ITERATIONS {
        iterations += 1;
        let y = x - g * s;
        let dpsi = -ls.gradient(y).dot(g);
        if dpsi.abs() < MIN_GRADIENT * MIN_GRADIENT {
            return Err(GeometryError::DegenerateGradient { point: y });
        }
        let mut step = psi / dpsi;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = ls.value(x - g * (s - step));
            if trial.abs() < psi.abs() {
                s -= step;
                psi = trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let start = x - g * s;
    match lagrange_newton(ls, x, start, s, tol) {
        Err(GeometryError::NonConvergence { .. }) => {
            // near strongly curved rims Newton can stall; descend along the surface instead
            let p = surface_descent(ls, x, start, tol).ok_or(GeometryError::NonConvergence {
                point: x,
                residual: ls.value(start).abs(),
            })?;
            let lambda = (x - p).dot(ls.gradient(p)) / ls.gradient(p).norm_squared();
            lagrange_newton(ls, x, p, lambda, tol)
        }
        r => r,
    }
}

/// Newton on `x - p = lambda grad phi(p)`, `phi(p) = 0`.
fn lagrange_newton(ls: &dyn LevelSet, x: Vec3, start: Vec3, lambda: f64, tol: f64) -> Result<Vec3, GeometryError> {
    let mut p = start;
    let mut lambda = lambda;
    for _ in 0..MAX_PROJECTION_ITERATIONS {
        let gp = ls.gradient(p);
        if gp.norm() < MIN_GRADIENT {
            return Err(GeometryError::DegenerateGradient { point: p });
        }
        let r = p - x + gp * lambda;
        let rphi = ls.value(p);
        let tangential = Mat3::tangential_projector(gp.normalized()).mul_vec(x - p).norm();
        if rphi.abs() <= tol && tangential <= tol.max(1e-14) {
            return Ok(p);
        }
        let hp = ls.hessian(p);
        let mut jac = [[0.0; 4]; 4];
        let mut rhs = [0.0; 4];
        for i in 0..3 {
            for j in 0..3 {
                jac[i][j] = hp.0[i][j] * lambda + if i == j { 1.0 } else { 0.0 };
            }
            jac[i][3] = gp[i];
            jac[3][i] = gp[i];
            rhs[i] = -r[i];
        }
        rhs[3] = -rphi;
        let delta = match solve4(jac, rhs) {
            Some(d) => d,
            None => return Err(GeometryError::DegenerateGradient { point: p }),
        };
        // backtrack on |r|^2 + phi^2 so that near-medial points do not oscillate between sheets
        let merit = |q: Vec3, l: f64| (q - x + ls.gradient(q) * l).norm_squared() + ls.value(q) * ls.value(q);
        let current = r.norm_squared() + rphi * rphi;
        let mut t = 1.0;
        for _ in 0..30 {
            let q = p + Vec3::new(delta[0], delta[1], delta[2]) * t;
            if merit(q, lambda + delta[3] * t) < current {
                break;
            }
            t *= 0.5;
        }
        p += Vec3::new(delta[0], delta[1], delta[2]) * t;
        lambda += delta[3] * t;
    }
    Err(GeometryError::NonConvergence {
        point: x,
        residual: ls.value(p).abs(),
    })
}

/// Pull `q` back onto the zero level along the gradient.
fn retract(ls: &dyn LevelSet, mut q: Vec3, tol: f64) -> Option<Vec3> {
    for _ in 0..MAX_PROJECTION_ITERATIONS {
        let v = ls.value(q);
        if v.abs() <= tol {
            return Some(q);
        }
        let g = ls.gradient(q);
        let g2 = g.norm_squared();
        if g2 < MIN_GRADIENT * MIN_GRADIENT {
            return None;
        }
        q -= g * (v / g2);
    }
    None
}

/// Projected gradient descent of `|p - x|` over the surface, starting on it.
fn surface_descent(ls: &dyn LevelSet, x: Vec3, start: Vec3, tol: f64) -> Option<Vec3> {
    let mut p = retract(ls, start, tol)?;
    let mut dist = (p - x).norm();
    let mut alpha = 1.0;
    for _ in 0..2000 {
        let n = ls.gradient(p).normalized();
        let d = Mat3::tangential_projector(n).mul_vec(x - p);
        if d.norm() <= 1e-6 * dist.max(tol) {
            return Some(p);
        }
        let mut moved = false;
        while alpha > 1e-12 {
            if let Some(q) = retract(ls, p + d * alpha, tol) {
                let dq = (q - x).norm();
                if dq < dist {
                    p = q;
                    dist = dq;
                    moved = true;
                    alpha = (alpha * 2.0).min(1.0);
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !moved {
            return Some(p);
        }
    }
    Some(p)
}

/// Gaussian elimination with partial pivoting for the 4x4 projection system.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Central finite-difference gradient, used when a closed form is unavailable.
pub fn fd_gradient(f: &dyn Fn(Vec3) -> f64, x: Vec3, step: f64) -> Vec3 {
    let mut g = Vec3::ZERO;
    for i in 0..3 {
        let mut xp = x;
        let mut xm = x;
        xp[i] += step;
        xm[i] -= step;
        g[i] = (f(xp) - f(xm)) / (2.0 * step);
    }
    g
}
