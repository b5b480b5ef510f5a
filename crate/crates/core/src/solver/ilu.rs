//! Incomplete LU factorization without fill, used to precondition BiCGStab.

use alloc::vec;
use alloc::vec::Vec;

use crate::sparse::CsrMatrix;

/// `L U ~ A` on the sparsity pattern of `A`; `L` has a unit diagonal and is stored with `U`
/// in one value array.
#[derive(Clone, Debug)]
pub struct Ilu0 {
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
    diag_pos: Vec<usize>,
    perturbed: usize,
}

impl Ilu0 {
    /// Pivots smaller than `1e-12 max|a|` are replaced by that floor, keeping their sign.
    /// Column indices of each row must be sorted. `None` when a diagonal entry is not stored.
    pub fn factor(a: &CsrMatrix) -> Option<Ilu0> {
        let n = a.nrows;
        let mut values = a.values.clone();
        let floor = 1e-12 * a.max_abs().max(f64::MIN_POSITIVE);
        let mut diag_pos = vec![usize::MAX; n];
        let mut slot = vec![usize::MAX; n];
        let mut perturbed = 0;
        for i in 0..n {
            let (lo, hi) = (a.row_ptr[i], a.row_ptr[i + 1]);
            for p in lo..hi {
                slot[a.col_idx[p] as usize] = p;
            }
            for p in lo..hi {
                let k = a.col_idx[p] as usize;
                if k >= i {
                    break;
                }
                let l = values[p] / values[diag_pos[k]];
                values[p] = l;
                for q in diag_pos[k] + 1..a.row_ptr[k + 1] {
                    let s = slot[a.col_idx[q] as usize];
                    if s != usize::MAX {
                        values[s] -= l * values[q];
                    }
                }
            }
            let d = slot[i];
            if d == usize::MAX {
                return None;
            }
            if values[d].abs() < floor {
                values[d] = if values[d] < 0.0 { -floor } else { floor };
                perturbed += 1;
            }
            diag_pos[i] = d;
            for p in lo..hi {
                slot[a.col_idx[p] as usize] = usize::MAX;
            }
        }
        Some(Ilu0 { row_ptr: a.row_ptr.clone(), col_idx: a.col_idx.clone(), values, diag_pos, perturbed })
    }

    pub fn perturbed_pivots(&self) -> usize {
        self.perturbed
    }

    pub fn apply(&self, b: &[f64], x: &mut [f64]) {
        let n = b.len();
        for i in 0..n {
            let mut s = b[i];
            for p in self.row_ptr[i]..self.diag_pos[i] {
                s -= self.values[p] * x[self.col_idx[p] as usize];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for p in self.diag_pos[i] + 1..self.row_ptr[i + 1] {
                s -= self.values[p] * x[self.col_idx[p] as usize];
            }
            x[i] = s / self.values[self.diag_pos[i]];
        }
    }
}
