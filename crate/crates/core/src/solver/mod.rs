//! Linear solvers for assembled trace systems.
//!
//! Every solve starts from a diagonal scaling that also drops tiny-cut unknowns. The direct
//! path is a fill-reducing LU factorization, backed by Krylov iterations when pivots had to
//! be perturbed; the iterative path is CG or BiCGStab preconditioned by the scaling.

mod ilu;
mod krylov;
mod lu;
mod ordering;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

pub use krylov::{bicgstab, conjugate_gradient, KrylovResult};
pub use lu::SparseLu;
pub use ordering::nested_dissection;

use crate::sparse::{norm2, CsrMatrix};
use ilu::Ilu0;

/// Unknowns whose diagonal falls below this fraction of the largest are dropped.
pub const TINY_DIAGONAL: f64 = 1e-14;
/// Systems up to this size go to the direct path under [`SolveMethod::Auto`].
pub const DIRECT_LIMIT: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    Direct,
    Iterative,
    Auto,
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMethod::Direct => "direct",
            SolveMethod::Iterative => "iterative",
            SolveMethod::Auto => "auto",
        })
    }
}

impl core::str::FromStr for SolveMethod {
    type Err = SolverError;
    fn from_str(s: &str) -> Result<Self, SolverError> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(SolveMethod::Direct),
            "iterative" => Ok(SolveMethod::Iterative),
            "auto" => Ok(SolveMethod::Auto),
            _ => Err(SolverError::UnknownMethod),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodTag {
    Direct,
    Iterative,
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodTag::Direct => "direct",
            MethodTag::Iterative => "iterative",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub method: SolveMethod,
    pub tol: f64,
    pub max_iterations: usize,
    /// Trailing rows that carry constraints (Lagrange multipliers). They are exempt from
    /// the tiny-diagonal guard and from scaling, and are ordered last.
    pub constraint_rows: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { method: SolveMethod::Auto, tol: 1e-10, max_iterations: 20_000, constraint_rows: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSolveReport {
    pub method: MethodTag,
    pub iterations: usize,
    /// `||Ax - b|| / ||b||` on the unscaled system restricted to the kept unknowns.
    pub relative_residual: f64,
    /// `max |d_i| / min |d_i|` over the nonzero diagonal.
    pub condition_proxy: f64,
    pub dropped: Vec<usize>,
    pub perturbed_pivots: usize,
    pub symmetric: bool,
    pub factor_nnz: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolverError {
    NotSquare { rows: usize, cols: usize },
    DimensionMismatch { expected: usize, found: usize },
    /// A row or column without a single nonzero entry.
    SingularMatrix { dof: usize },
    NoConvergence { iterations: usize, residual: f64 },
    NonFinite,
    UnknownMethod,
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::NotSquare { rows, cols } => write!(f, "matrix is {rows}x{cols}, not square"),
            SolverError::DimensionMismatch { expected, found } => {
                write!(f, "right-hand side has length {found}, expected {expected}")
            }
            SolverError::SingularMatrix { dof } => write!(f, "matrix is singular: unknown {dof} has an empty row or column"),
            SolverError::NoConvergence { iterations, residual } => {
                write!(f, "no convergence after {iterations} iterations (relative residual {residual:.3e})")
            }
            SolverError::NonFinite => f.write_str("non-finite value in matrix, right-hand side or solution"),
            SolverError::UnknownMethod => f.write_str("unknown solver method (expected direct, iterative or auto)"),
        }
    }
}

impl core::error::Error for SolverError {}

/// Scaled and reduced system produced by [`diagonal_scale`].
#[derive(Clone, Debug)]
pub struct DiagonalScaling {
    pub matrix: CsrMatrix,
    /// `sqrt|d_i|` (symmetric scaling) or `d_i` (row scaling), per kept unknown.
    pub scale: Vec<f64>,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    pub symmetric: bool,
    pub condition_proxy: f64,
    n: usize,
    constraint_rows: usize,
}

impl DiagonalScaling {
    pub fn scale_rhs(&self, b: &[f64]) -> Vec<f64> {
        self.kept
            .iter()
            .zip(&self.scale)
            .map(|(&i, &s)| b[i] / s)
            .collect()
    }

    /// Map a solution of the scaled system back; dropped unknowns get zero.
    pub fn unscale(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for ((&i, &s), &v) in self.kept.iter().zip(&self.scale).zip(y) {
            x[i] = if self.symmetric { v / s } else { v };
        }
        x
    }

    pub fn constraint_rows(&self) -> usize {
        self.constraint_rows
    }
}

/// Symmetric `D^{-1/2} A D^{-1/2}` scaling for symmetric matrices, row scaling `D^{-1} A`
/// otherwise. Unknowns with `|d_i| < TINY_DIAGONAL * max|d|` are removed.
pub fn diagonal_scale(a: &CsrMatrix, constraint_rows: usize) -> Result<DiagonalScaling, SolverError> {
    if a.nrows != a.ncols {
        return Err(SolverError::NotSquare { rows: a.nrows, cols: a.ncols });
    }
    if a.values.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite);
    }
    let n = a.nrows;
    let free = n - constraint_rows.min(n);
    let at = a.transpose();
    for i in 0..n {
        let empty = |m: &CsrMatrix| m.row(i).1.iter().all(|&v| v == 0.0);
        if empty(a) || empty(&at) {
            return Err(SolverError::SingularMatrix { dof: i });
        }
    }
    let d = a.diagonal();
    let dmax = d[..free].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cut = TINY_DIAGONAL * dmax;
    let mut kept = Vec::with_capacity(n);
    let mut dropped = Vec::new();
    for (i, di) in d.iter().enumerate() {
        if i < free && (di.abs() < cut || *di == 0.0) {
            dropped.push(i);
        } else {
            kept.push(i);
        }
    }
    let (mut dmin, mut dmx) = (f64::INFINITY, 0.0_f64);
    for &v in &d[..free] {
        if v != 0.0 {
            dmin = dmin.min(v.abs());
            dmx = dmx.max(v.abs());
        }
    }
    let condition_proxy = if dmx > 0.0 { dmx / dmin } else { 1.0 };
    let symmetric = a.is_symmetric(1e-12);
    let reduced = if dropped.is_empty() { a.clone() } else { a.submatrix(&kept) };
    let scale: Vec<f64> = kept
        .iter()
        .map(|&i| {
            if i >= free {
                1.0
            } else if symmetric {
                crate::math::sqrt(d[i].abs())
            } else {
                d[i].abs()
            }
        })
        .collect();
    let matrix = if symmetric {
        let inv: Vec<f64> = scale.iter().map(|s| 1.0 / s).collect();
        reduced.scaled(&inv, &inv)
    } else {
        let inv: Vec<f64> = scale.iter().map(|s| 1.0 / s).collect();
        reduced.scaled(&inv, &vec![1.0; inv.len()])
    };
    Ok(DiagonalScaling { matrix, scale, kept, dropped, symmetric, condition_proxy, n, constraint_rows })
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
    let nb = norm2(b);
    if nb == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / nb
    }
}

/// Solve `a x = b` to relative residual `opts.tol`.
pub fn solve(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, LinearSolveReport), SolverError> {
    if b.len() != a.nrows {
        return Err(SolverError::DimensionMismatch { expected: a.nrows, found: b.len() });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite);
    }
    let sc = diagonal_scale(a, opts.constraint_rows)?;
    let bs = sc.scale_rhs(b);
    let reduced_a = if sc.dropped.is_empty() { a.clone() } else { a.submatrix(&sc.kept) };
    let reduced_b: Vec<f64> = sc.kept.iter().map(|&i| b[i]).collect();
    let m = sc.matrix.nrows;
    let tail = opts.constraint_rows.min(m);
    let direct = match opts.method {
        SolveMethod::Direct => true,
        SolveMethod::Iterative => false,
        SolveMethod::Auto => m <= DIRECT_LIMIT,
    };
    let mut report = LinearSolveReport {
        method: if direct { MethodTag::Direct } else { MethodTag::Iterative },
        iterations: 0,
        relative_residual: 0.0,
        condition_proxy: sc.condition_proxy,
        dropped: sc.dropped.clone(),
        perturbed_pivots: 0,
        symmetric: sc.symmetric,
        factor_nnz: 0,
    };
    if norm2(&bs) == 0.0 {
        return Ok((vec![0.0; a.nrows], report));
    }
    // Residual targets refer to the unscaled system; tighten the scaled target until met.
    let check = |y: &[f64]| {
        let x = sc.unscale(y);
        let xr: Vec<f64> = sc.kept.iter().map(|&i| x[i]).collect();
        relative_residual(&reduced_a, &xr, &reduced_b)
    };
    let mut y;
    if direct {
        let lu = SparseLu::factor(&sc.matrix, tail);
        report.perturbed_pivots = lu.perturbed_pivots();
        report.factor_nnz = lu.nnz();
        y = lu.solve(&bs);
        let mut res = check(&y);
        // a few steps of iterative refinement
        let mut steps = 0;
        while res > opts.tol && steps < 3 && res.is_finite() {
            let ay = sc.matrix.mul_vec(&y);
            let r: Vec<f64> = bs.iter().zip(&ay).map(|(p, q)| p - q).collect();
            let dy = lu.solve(&r);
            let cand: Vec<f64> = y.iter().zip(&dy).map(|(p, q)| p + q).collect();
            let cres = check(&cand);
            steps += 1;
            if !(cres < res) {
                break;
            }
            y = cand;
            res = cres;
        }
        report.iterations = steps;
        let mut inner = opts.tol;
        let mut rounds = 0;
        while !(res <= opts.tol) && rounds < 4 {
            let start = if res.is_finite() { y.clone() } else { vec![0.0; m] };
            let k = bicgstab(&sc.matrix, &bs, &start, |v, out| out.copy_from_slice(&lu.solve(v)), inner, opts.max_iterations.min(500));
            report.iterations += k.iterations;
            let kres = check(&k.x);
            if kres < res || !res.is_finite() {
                y = k.x;
                res = kres;
            }
            inner *= 0.01;
            rounds += 1;
        }
        report.relative_residual = res;
    } else {
        let mut inner = opts.tol;
        y = vec![0.0; m];
        let mut res = f64::INFINITY;
        let mut total = 0;
        let ilu = if sc.symmetric && tail == 0 { None } else { Ilu0::factor(&sc.matrix) };
        if let Some(f) = &ilu {
            report.perturbed_pivots = f.perturbed_pivots();
        }
        for _ in 0..4 {
            let k = if sc.symmetric && tail == 0 {
                conjugate_gradient(&sc.matrix, &bs, &y, inner, opts.max_iterations)
            } else if let Some(ilu) = &ilu {
                bicgstab(&sc.matrix, &bs, &y, |v, out| ilu.apply(v, out), inner, opts.max_iterations)
            } else {
                let d = sc.matrix.diagonal();
                bicgstab(
                    &sc.matrix,
                    &bs,
                    &y,
                    |v, out| {
                        for i in 0..v.len() {
                            out[i] = if d[i] != 0.0 { v[i] / d[i] } else { v[i] };
                        }
                    },
                    inner,
                    opts.max_iterations,
                )
            };
            total += k.iterations;
            y = k.x;
            res = check(&y);
            if res <= opts.tol || !k.converged {
                break;
            }
            inner *= 0.01;
        }
        report.iterations = total;
        report.relative_residual = res;
    }
    if !(report.relative_residual <= opts.tol) {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite);
        }
        return Err(SolverError::NoConvergence { iterations: report.iterations, residual: report.relative_residual });
    }
    Ok((sc.unscale(&y), report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_2d(k: usize, shift: f64, adv: f64) -> CsrMatrix {
        let n = k * k;
        let mut t = Vec::new();
        for i in 0..k {
            for j in 0..k {
                let p = (i * k + j) as u32;
                t.push((p, p, 4.0 + shift));
                let mut nb = |q: usize, v: f64| t.push((p, q as u32, v));
                if i > 0 {
                    nb((i - 1) * k + j, -1.0 - adv);
                }
                if i + 1 < k {
                    nb((i + 1) * k + j, -1.0 + adv);
                }
                if j > 0 {
                    nb(i * k + j - 1, -1.0);
                }
                if j + 1 < k {
                    nb(i * k + j + 1, -1.0);
                }
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn diagonal_system() {
        let a = CsrMatrix::from_dense(&[vec![2.0, 0.0], vec![0.0, 4.0]]);
        let (x, rep) = solve(&a, &[2.0, 4.0], &SolverOptions::default()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        assert_eq!(rep.condition_proxy, 2.0);
    }

    #[test]
    fn scaling_examples() {
        let s = diagonal_scale(&CsrMatrix::identity(3), 0).unwrap();
        assert_eq!(s.matrix, CsrMatrix::identity(3));
        let s = diagonal_scale(&CsrMatrix::from_dense(&[vec![4.0, 0.0], vec![0.0, 9.0]]), 0).unwrap();
        assert_eq!(s.matrix, CsrMatrix::identity(2));
        assert_eq!(s.scale, vec![2.0, 3.0]);
    }

    #[test]
    fn empty_row_is_singular() {
        let a = CsrMatrix::from_dense(&[vec![2.0, 0.0, 1.0], vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 3.0]]);
        assert_eq!(solve(&a, &[1.0, 0.0, 1.0], &SolverOptions::default()).unwrap_err(), SolverError::SingularMatrix { dof: 1 });
    }

    #[test]
    fn tiny_diagonal_is_dropped() {
        let a = CsrMatrix::from_dense(&[vec![2.0, 1e-9, 0.0], vec![1e-9, 1e-16, 0.0], vec![0.0, 0.0, 3.0]]);
        let (x, rep) = solve(&a, &[2.0, 0.0, 3.0], &SolverOptions::default()).unwrap();
        assert_eq!(rep.dropped, vec![1]);
        assert_eq!(x[1], 0.0);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn direct_and_iterative_agree() {
        for (shift, adv) in [(0.01, 0.0), (0.5, 0.4)] {
            let a = laplace_2d(40, shift, adv);
            let b: Vec<f64> = (0..a.nrows).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
            let (xd, rd) = solve(&a, &b, &SolverOptions { method: SolveMethod::Direct, ..Default::default() }).unwrap();
            let (xi, ri) = solve(&a, &b, &SolverOptions { method: SolveMethod::Iterative, ..Default::default() }).unwrap();
            assert_eq!(rd.method, MethodTag::Direct);
            assert_eq!(ri.method, MethodTag::Iterative);
            assert!(rd.relative_residual <= 1e-10 && ri.relative_residual <= 1e-10);
            let diff = norm2(&xd.iter().zip(&xi).map(|(p, q)| p - q).collect::<Vec<_>>());
            assert!(diff <= 1e-8 * norm2(&xd), "{diff}");
        }
    }

    #[test]
    fn scaling_invariance() {
        let a = laplace_2d(15, 0.1, 0.2);
        let b: Vec<f64> = (0..a.nrows).map(|i| (i as f64).sin()).collect();
        let (x1, _) = solve(&a, &b, &SolverOptions::default()).unwrap();
        for alpha in [1e-6, 1e6] {
            let sa = a.scaled(&vec![alpha; a.nrows], &vec![1.0; a.nrows]);
            let sb: Vec<f64> = b.iter().map(|v| alpha * v).collect();
            let (x, _) = solve(&sa, &sb, &SolverOptions::default()).unwrap();
            let diff = norm2(&x.iter().zip(&x1).map(|(p, q)| p - q).collect::<Vec<_>>());
            assert!(diff <= 1e-9 * norm2(&x1));
        }
    }

    #[test]
    fn bordered_singular_block() {
        // pure Neumann Laplacian (kernel = constants) closed by a mean-value multiplier
        let k = 12;
        let n = k * k;
        let mut t = Vec::new();
        for i in 0..k {
            for j in 0..k {
                let p = i * k + j;
                let mut deg = 0.0;
                for (di, dj) in [(-1i32, 0i32), (1, 0), (0, -1), (0, 1)] {
                    let (a, b) = (i as i32 + di, j as i32 + dj);
                    if a >= 0 && b >= 0 && a < k as i32 && b < k as i32 {
                        t.push((p as u32, (a as usize * k + b as usize) as u32, -1.0));
                        deg += 1.0;
                    }
                }
                t.push((p as u32, p as u32, deg));
                t.push((p as u32, n as u32, 1.0));
                t.push((n as u32, p as u32, 1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n + 1, n + 1, &t);
        let mut b: Vec<f64> = (0..n).map(|i| ((i % 7) as f64) - 3.0).collect();
        let mean = b.iter().sum::<f64>() / n as f64;
        b.iter_mut().for_each(|v| *v -= mean);
        b.push(0.0);
        let opts = SolverOptions { constraint_rows: 1, ..Default::default() };
        let (x, rep) = solve(&a, &b, &opts).unwrap();
        assert!(rep.relative_residual <= 1e-10);
        assert!(x[..n].iter().sum::<f64>().abs() < 1e-9);
        let (xi, _) = solve(&a, &b, &SolverOptions { method: SolveMethod::Iterative, ..opts }).unwrap();
        let diff = norm2(&x.iter().zip(&xi).map(|(p, q)| p - q).collect::<Vec<_>>());
        assert!(diff <= 1e-8 * norm2(&x));
    }
}
