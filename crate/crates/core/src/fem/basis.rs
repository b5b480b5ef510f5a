use crate::linalg::{Mat3, Vec3};

use super::FemError;

/// Values, gradients and Hessians of the eight trilinear shape functions at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrilinearBasis {
    pub values: [f64; 8],
    pub gradients: [Vec3; 8],
    pub hessians: [Mat3; 8],
}

/// Slack used when deciding whether a point lies in a cell, relative to the side length.
pub const INSIDE_SLACK: f64 = 1e-12;

/// Shape functions of the cube `origin + [0, h]^3` at `x`, corner order `x + 2y + 4z`.
pub fn trilinear_basis(origin: Vec3, h: f64, x: Vec3) -> Result<TrilinearBasis, FemError> {
    let xi = local_coords(origin, h, x)?;
    Ok(basis_at_local(xi, h))
}

/// Local coordinates in `[0, 1]^3` (clamped within the slack).
pub fn local_coords(origin: Vec3, h: f64, x: Vec3) -> Result<[f64; 3], FemError> {
    let mut xi = [0.0; 3];
    for a in 0..3 {
        let t = (x[a] - origin[a]) / h;
        if !(-INSIDE_SLACK..=1.0 + INSIDE_SLACK).contains(&t) {
            return Err(FemError::PointOutsideCell { point: x });
        }
        xi[a] = t.clamp(0.0, 1.0);
    }
    Ok(xi)
}

pub fn basis_at_local(xi: [f64; 3], h: f64) -> TrilinearBasis {
    let s = |a: usize, bit: usize| if bit == 1 { xi[a] } else { 1.0 - xi[a] };
    let ds = |bit: usize| if bit == 1 { 1.0 / h } else { -1.0 / h };
    let mut out = TrilinearBasis {
        values: [0.0; 8],
        gradients: [Vec3::ZERO; 8],
        hessians: [Mat3::ZERO; 8],
    };
    for c in 0..8 {
        let b = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
        let (sx, sy, sz) = (s(0, b[0]), s(1, b[1]), s(2, b[2]));
        let (dx, dy, dz) = (ds(b[0]), ds(b[1]), ds(b[2]));
        out.values[c] = sx * sy * sz;
        out.gradients[c] = Vec3::new(dx * sy * sz, sx * dy * sz, sx * sy * dz);
        let (hxy, hxz, hyz) = (dx * dy * sz, dx * sy * dz, sx * dy * dz);
        out.hessians[c] = Mat3([[0.0, hxy, hxz], [hxy, 0.0, hyz], [hxz, hyz, 0.0]]);
    }
    out
}

/// Value and gradient of the trilinear interpolant of `corner` values.
pub fn interpolate(origin: Vec3, h: f64, corner: &[f64; 8], x: Vec3) -> (f64, Vec3) {
    let xi: [f64; 3] = core::array::from_fn(|a| (x[a] - origin[a]) / h);
    let mut v = 0.0;
    let mut g = Vec3::ZERO;
    for (c, &cv) in corner.iter().enumerate() {
        let b = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
        let f: [f64; 3] = core::array::from_fn(|a| if b[a] == 1 { xi[a] } else { 1.0 - xi[a] });
        let d: [f64; 3] = core::array::from_fn(|a| if b[a] == 1 { 1.0 / h } else { -1.0 / h });
        v += cv * f[0] * f[1] * f[2];
        g += Vec3::new(d[0] * f[1] * f[2], f[0] * d[1] * f[2], f[0] * f[1] * d[2]) * cv;
    }
    (v, g)
}
