use alloc::vec;
use alloc::vec::Vec;

use crate::sparse::{dot, norm2, CsrMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct KrylovResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual of the recursively updated residual vector.
    pub residual: f64,
    pub converged: bool,
}

/// Conjugate gradients with the inverse diagonal as preconditioner.
pub fn conjugate_gradient(a: &CsrMatrix, b: &[f64], x0: &[f64], tol: f64, max_iterations: usize) -> KrylovResult {
    let n = b.len();
    let nb = norm2(b);
    let mut x = x0.to_vec();
    if nb == 0.0 {
        return KrylovResult { x: vec![0.0; n], iterations: 0, residual: 0.0, converged: true };
    }
    let dinv: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r: Vec<f64> = a.mul_vec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(p, q)| p * q).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut res = norm2(&r) / nb;
    let mut it = 0;
    while res > tol && it < max_iterations {
        a.mul_vec_into(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        res = norm2(&r) / nb;
    }
    KrylovResult { x, iterations: it, residual: res, converged: res <= tol }
}

/// Right-preconditioned BiCGStab; `precond(v, out)` applies an approximate inverse.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    precond: impl Fn(&[f64], &mut [f64]),
    tol: f64,
    max_iterations: usize,
) -> KrylovResult {
    let n = b.len();
    let nb = norm2(b);
    let mut x = x0.to_vec();
    if nb == 0.0 {
        return KrylovResult { x: vec![0.0; n], iterations: 0, residual: 0.0, converged: true };
    }
    let mut r: Vec<f64> = a.mul_vec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
    let mut r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ph = vec![0.0; n];
    let mut sh = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = norm2(&r) / nb;
    let mut it = 0;
    while res > tol && it < max_iterations {
        it += 1;
        let mut rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 || omega == 0.0 {
            // breakdown: restart from the current residual
            r0.copy_from_slice(&r);
            rho_new = dot(&r0, &r);
            p.iter_mut().for_each(|v| *v = 0.0);
            v.iter_mut().for_each(|x| *x = 0.0);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond(&p, &mut ph);
        a.mul_vec_into(&ph, &mut v);
        let r0v = dot(&r0, &v);
        if r0v == 0.0 || !r0v.is_finite() {
            break;
        }
        alpha = rho / r0v;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let sn = norm2(&s) / nb;
        if sn <= tol {
            for i in 0..n {
                x[i] += alpha * ph[i];
            }
            r.copy_from_slice(&s);
            res = sn;
            break;
        }
        precond(&s, &mut sh);
        a.mul_vec_into(&sh, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm2(&r) / nb;
        if !res.is_finite() {
            break;
        }
    }
    KrylovResult { x, iterations: it, residual: res, converged: res <= tol }
}
