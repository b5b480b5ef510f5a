//! Up-looking sparse LU without pivoting for structurally symmetric matrices.
//!
//! Row `k` of `L` and column `k` of `U` share one sparsity pattern, the reach of row `k`
//! in the elimination tree, so both are computed by one sparse triangular solve.

use alloc::vec;
use alloc::vec::Vec;

use super::ordering::nested_dissection;
use crate::sparse::CsrMatrix;

const NONE: usize = usize::MAX;
/// Pivots smaller than this fraction of `max|a_ij|` are replaced by it.
const PIVOT_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SparseLu {
    n: usize,
    /// `order[new] = old`.
    order: Vec<u32>,
    /// Strictly lower factor, column-wise.
    l_ptr: Vec<usize>,
    l_idx: Vec<u32>,
    l_val: Vec<f64>,
    /// Strictly upper factor, row-wise (same pattern transposed).
    u_val: Vec<f64>,
    diag: Vec<f64>,
    perturbed: usize,
}

fn permute(a: &CsrMatrix, order: &[u32], inv: &[u32]) -> CsrMatrix {
    let n = a.nrows;
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::with_capacity(a.nnz());
    let mut values = Vec::with_capacity(a.nnz());
    let mut buf: Vec<(u32, f64)> = Vec::new();
    for &old in order {
        let (cols, vals) = a.row(old as usize);
        buf.clear();
        buf.extend(cols.iter().zip(vals).map(|(&c, &v)| (inv[c as usize], v)));
        buf.sort_unstable_by_key(|e| e.0);
        for &(c, v) in &buf {
            col_idx.push(c);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
    }
    CsrMatrix { nrows: n, ncols: n, row_ptr, col_idx, values }
}

/// Nodes of row `k`'s pattern in topological order, written to `s[top..]`.
fn ereach(k: usize, lower: &[u32], parent: &[usize], s: &mut [usize], mark: &mut [usize]) -> usize {
    let n = s.len();
    let mut top = n;
    mark[k] = k;
    for &j in lower {
        let mut len = 0;
        let mut i = j as usize;
        while mark[i] != k {
            s[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            s[top] = s[len];
        }
    }
    top
}

impl SparseLu {
    /// Factor `a`; the last `tail` unknowns are eliminated last and excluded from the ordering.
    pub fn factor(a: &CsrMatrix, tail: usize) -> SparseLu {
        let n = a.nrows;
        let head = n - tail.min(n);
        let at = a.transpose();
        // symmetric adjacency of the head block
        let mut ptr = vec![0usize];
        let mut adj: Vec<u32> = Vec::new();
        for i in 0..head {
            let start = adj.len();
            for m in [a, &at] {
                for &c in m.row(i).0 {
                    if (c as usize) < head && c as usize != i {
                        adj.push(c);
                    }
                }
            }
            adj[start..].sort_unstable();
            let mut w = start;
            for r in start..adj.len() {
                if r == start || adj[r] != adj[w - 1] {
                    adj[w] = adj[r];
                    w += 1;
                }
            }
            adj.truncate(w);
            ptr.push(adj.len());
        }
        let mut order = nested_dissection(&ptr, &adj);
        order.extend(head as u32..n as u32);
        let mut inv = vec![0u32; n];
        for (new, &old) in order.iter().enumerate() {
            inv[old as usize] = new as u32;
        }
        let ap = permute(a, &order, &inv);
        let atp = permute(&at, &order, &inv);

        // strictly lower symmetrized pattern per row
        let mut low_ptr = vec![0usize];
        let mut low: Vec<u32> = Vec::new();
        for k in 0..n {
            let start = low.len();
            for m in [&ap, &atp] {
                for &c in m.row(k).0 {
                    if (c as usize) < k {
                        low.push(c);
                    }
                }
            }
            low[start..].sort_unstable();
            let mut w = start;
            for r in start..low.len() {
                if r == start || low[r] != low[w - 1] {
                    low[w] = low[r];
                    w += 1;
                }
            }
            low.truncate(w);
            low_ptr.push(low.len());
        }

        // elimination tree
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for &j in &low[low_ptr[k]..low_ptr[k + 1]] {
                let mut i = j as usize;
                while i != NONE && i < k {
                    let next = ancestor[i];
                    ancestor[i] = k;
                    if next == NONE {
                        parent[i] = k;
                    }
                    i = next;
                }
            }
        }

        // column counts
        let mut s = vec![0usize; n];
        let mut mark = vec![NONE; n];
        let mut counts = vec![0usize; n];
        for k in 0..n {
            let top = ereach(k, &low[low_ptr[k]..low_ptr[k + 1]], &parent, &mut s, &mut mark);
            for &i in &s[top..] {
                counts[i] += 1;
            }
        }
        let mut l_ptr = vec![0usize; n + 1];
        for i in 0..n {
            l_ptr[i + 1] = l_ptr[i] + counts[i];
        }
        let nnz = l_ptr[n];
        let mut l_idx = vec![0u32; nnz];
        let mut l_val = vec![0.0; nnz];
        let mut u_val = vec![0.0; nnz];
        let mut fill = l_ptr[..n].to_vec();
        let mut diag = vec![0.0; n];

        let floor = PIVOT_FLOOR * a.max_abs();
        let mut perturbed = 0;
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        mark.iter_mut().for_each(|m| *m = NONE);
        for k in 0..n {
            let top = ereach(k, &low[low_ptr[k]..low_ptr[k + 1]], &parent, &mut s, &mut mark);
            let (cols, vals) = ap.row(k);
            for (&c, &v) in cols.iter().zip(vals) {
                if c as usize <= k {
                    x[c as usize] = v;
                }
            }
            let (cols, vals) = atp.row(k);
            for (&c, &v) in cols.iter().zip(vals) {
                if (c as usize) < k {
                    y[c as usize] = v;
                }
            }
            let mut pivot = x[k];
            x[k] = 0.0;
            for &i in &s[top..] {
                let lki = x[i] / diag[i];
                let uik = y[i];
                x[i] = 0.0;
                y[i] = 0.0;
                for p in l_ptr[i]..fill[i] {
                    let j = l_idx[p] as usize;
                    x[j] -= lki * u_val[p];
                    y[j] -= l_val[p] * uik;
                }
                pivot -= lki * uik;
                let p = fill[i];
                l_idx[p] = k as u32;
                l_val[p] = lki;
                u_val[p] = uik;
                fill[i] += 1;
            }
            if !(pivot.abs() >= floor) || pivot == 0.0 {
                pivot = if pivot < 0.0 { -floor } else { floor.max(f64::MIN_POSITIVE) };
                perturbed += 1;
            }
            diag[k] = pivot;
        }
        SparseLu { n, order, l_ptr, l_idx, l_val, u_val, diag, perturbed }
    }

    pub fn nnz(&self) -> usize {
        2 * self.l_idx.len() + self.n
    }

    pub fn perturbed_pivots(&self) -> usize {
        self.perturbed
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z: Vec<f64> = self.order.iter().map(|&o| b[o as usize]).collect();
        for i in 0..n {
            let zi = z[i];
            if zi != 0.0 {
                for p in self.l_ptr[i]..self.l_ptr[i + 1] {
                    z[self.l_idx[p] as usize] -= self.l_val[p] * zi;
                }
            }
        }
        for i in (0..n).rev() {
            let mut v = z[i];
            for p in self.l_ptr[i]..self.l_ptr[i + 1] {
                v -= self.u_val[p] * z[self.l_idx[p] as usize];
            }
            z[i] = v / self.diag[i];
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.order.iter().enumerate() {
            x[old as usize] = z[new];
        }
        x
    }
}
