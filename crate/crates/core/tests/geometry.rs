use std::f64::consts::PI;

use proptest::prelude::*;
use tracefem_core::geometry::{
    closest_point_project, normal_hessian, LevelSet, Plane, SixHandleSurface, Sphere, Torus, WavyCigar,
};
use tracefem_core::linalg::{Mat3, Vec3};

fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
    (a - b).norm() <= tol
}

/// Nearest point of the torus by scanning both angles, then refining the scan locally.
fn torus_scan(x: Vec3, major: f64, minor: f64) -> Vec3 {
    let point = |t: f64, p: f64| Vec3::new((major + minor * p.cos()) * t.cos(), (major + minor * p.cos()) * t.sin(), minor * p.sin());
    let (mut bt, mut bp, mut span) = (0.0, 0.0, PI);
    let mut best = f64::INFINITY;
    let n = 400;
    let (mut ct, mut cp) = (0.0, 0.0);
    for _ in 0..6 {
        for a in 0..=n {
            for b in 0..=n {
                let t = ct + span * (2.0 * a as f64 / n as f64 - 1.0);
                let p = cp + span * (2.0 * b as f64 / n as f64 - 1.0);
                let d = (point(t, p) - x).norm();
                if d < best {
                    best = d;
                    bt = t;
                    bp = p;
                }
            }
        }
        ct = bt;
        cp = bp;
        span *= 4.0 / n as f64;
    }
    point(bt, bp)
}

#[test]
fn projection_examples() {
    let s = Sphere::new(1.0);
    assert!(close(closest_point_project(&s, Vec3::new(2.0, 0.0, 0.0), 1e-12).unwrap(), Vec3::new(1.0, 0.0, 0.0), 1e-15));
    assert!(close(closest_point_project(&s, Vec3::new(0.0, 0.0, 0.5), 1e-12).unwrap(), Vec3::new(0.0, 0.0, 1.0), 1e-15));
    let t = Torus::new(1.0, 0.6);
    let x = Vec3::new(1.8, 0.0, 0.0);
    let p = closest_point_project(&t, x, 1e-12).unwrap();
    assert!(close(p, Vec3::new(1.6, 0.0, 0.0), 1e-14));
    assert!(close(p, torus_scan(x, 1.0, 0.6), 1e-6));
    let y = Vec3::new(0.3, 1.1, -0.5);
    let (a, b) = (closest_point_project(&t, y, 1e-12).unwrap(), torus_scan(y, 1.0, 0.6));
    // the scan locates the minimiser only to the square root of its resolution
    assert!(close(a, b, 1e-6));
    assert!((a - y).norm() <= (b - y).norm() + 1e-14);
}

#[test]
fn distance_projection_is_explicit() {
    let t = Torus::new(1.0, 0.6);
    let x = Vec3::new(-0.7, 0.9, 0.35);
    let n = t.gradient(x).normalized();
    let expected = x - n * t.value(x);
    assert_eq!(closest_point_project(&t, x, 1e-12).unwrap(), expected);
}

#[test]
fn curvature_examples() {
    let d = normal_hessian(&Sphere::new(1.0), Vec3::new(1.0, 0.0, 0.0)).unwrap();
    assert!(close(d.unit_normal, Vec3::new(1.0, 0.0, 0.0), 1e-15));
    assert!((d.mean_curvature_trace - 2.0).abs() < 1e-14);

    let d = normal_hessian(&Plane::new(Vec3::new(0.0, 0.0, 1.0), 0.0), Vec3::new(0.3, -2.0, 0.7)).unwrap();
    assert!(d.hessian_of_distance.max_abs() == 0.0);

    // classical torus curvatures at the outer equator: 1/r and 1/(R + r)
    let d = normal_hessian(&Torus::new(1.0, 0.6), Vec3::new(1.6, 0.0, 0.0)).unwrap();
    let k = d.principal_curvatures();
    assert!((k[0] - 1.0 / 1.6).abs() < 1e-12 && (k[1] - 1.0 / 0.6).abs() < 1e-12, "{k:?}");
}

fn surfaces() -> Vec<(Box<dyn LevelSet>, f64)> {
    // (surface, scale of random offsets)
    vec![
        (Box::new(Sphere::new(1.0)), 0.3),
        (Box::new(Torus::new(1.0, 0.6)), 0.2),
        (Box::new(WavyCigar), 0.02),
        (Box::new(SixHandleSurface), 0.05),
    ]
}

/// A surface point found by marching from a direction on the unit sphere.
fn surface_point(ls: &dyn LevelSet, dir: Vec3) -> Option<Vec3> {
    let (mut lo, mut hi) = (0.0, 3.5);
    let (flo, fhi) = (ls.value(dir * lo), ls.value(dir * hi));
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ls.value(dir * mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(dir * (0.5 * (lo + hi)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn projection_is_idempotent_and_orthogonal(
        which in 0usize..4,
        dir in prop::array::uniform3(-1.0f64..1.0),
        off in -1.0f64..1.0,
    ) {
        let d = Vec3(dir);
        prop_assume!(d.norm() > 0.1);
        let (ls, scale) = &surfaces()[which];
        let ls = ls.as_ref();
        let Some(s) = surface_point(ls, d.normalized()) else { return Ok(()) };
        let x = s + ls.gradient(s).normalized() * (off * scale);
        let p = closest_point_project(ls, x, 1e-12).unwrap();
        prop_assert!(ls.value(p).abs() <= 1e-12);
        // x - p is normal at p
        let n = ls.gradient(p).normalized();
        let tangential = Mat3::tangential_projector(n).mul_vec(x - p).norm();
        prop_assert!(tangential <= 1e-8 * (1.0 + (x - p).norm()), "tangential {tangential}");
        // never farther than the point we started from
        prop_assert!((x - p).norm() <= (x - s).norm() + 1e-12);
        let q = closest_point_project(ls, p, 1e-12).unwrap();
        prop_assert!(close(p, q, 1e-10));
    }

    #[test]
    fn projector_properties(which in 0usize..4, dir in prop::array::uniform3(-1.0f64..1.0)) {
        let d = Vec3(dir);
        prop_assume!(d.norm() > 0.1);
        let (ls, _) = &surfaces()[which];
        let Some(s) = surface_point(ls.as_ref(), d.normalized()) else { return Ok(()) };
        let data = normal_hessian(ls.as_ref(), s).unwrap();
        let p = data.projector;
        prop_assert!((p * p - p).max_abs() <= 1e-12);
        prop_assert!((p - p.transpose()).max_abs() <= 1e-15);
        prop_assert!(p.mul_vec(data.unit_normal).norm() <= 1e-12);
        let h = data.hessian_of_distance;
        prop_assert!((h - h.transpose()).max_abs() <= 1e-10 * (1.0 + h.max_abs()));
        prop_assert!(h.mul_vec(data.unit_normal).norm() <= 1e-10 * (1.0 + h.max_abs()));
    }
}
