//! LU factorization without pivoting in variable-band (skyline) storage.
//!
//! The envelope comes from the symmetrized pattern after a bandwidth-reducing
//! permutation, so fill-in stays inside it. Without pivoting the
//! factorization is only safe for matrices whose symmetric part is positive
//! definite or that are otherwise diagonally strong; a vanishing pivot is
//! reported as an error.

use super::{ordering::reverse_cuthill_mckee, SparseMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ProfileLu {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// First column (= first row) of the envelope of each permuted row.
    first: Vec<usize>,
    offsets: Vec<usize>,
    /// Strictly lower part, row-wise: row `i` holds columns `first[i]..i`.
    lower: Vec<f64>,
    /// Upper part including the diagonal, column-wise: column `i` holds rows
    /// `first[i]..=i`.
    upper: Vec<f64>,
}

impl ProfileLu {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::invalid("LU needs a square matrix"));
        }
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for (j, _) in a.row(i) {
                let (pi, pj) = (inv[i], inv[j]);
                let (lo, hi) = if pi < pj { (pi, pj) } else { (pj, pi) };
                if lo < first[hi] {
                    first[hi] = lo;
                }
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            offsets.push(offsets[i] + (i - first[i]));
        }
        let env = offsets[n];
        let mut lower = vec![0.0; env];
        let mut upper = vec![0.0; env + n];
        let uoff = |i: usize| offsets[i] + i;
        for i in 0..n {
            for (j, v) in a.row(i) {
                let (pi, pj) = (inv[i], inv[j]);
                if pj < pi {
                    lower[offsets[pi] + pj - first[pi]] += v;
                } else {
                    upper[uoff(pj) + pi - first[pj]] += v;
                }
            }
        }

        let dot_range = |lower: &[f64], upper: &[f64], r: usize, c: usize, lo: usize| -> f64 {
            // Σ_{lo<=k<min(r,c)} L[r][k]·U[k][c]
            let end = r.min(c);
            let li = &lower[offsets[r] + lo - first[r]..offsets[r] + end - first[r]];
            let uj = &upper[uoff(c) + lo - first[c]..uoff(c) + end - first[c]];
            li.iter().zip(uj).map(|(a, b)| a * b).sum()
        };
        for i in 0..n {
            let fi = first[i];
            let ui = uoff(i);
            // column i of U above the diagonal
            for j in fi..i {
                let lo = fi.max(first[j]);
                if lo < j {
                    let s = dot_range(&lower, &upper, j, i, lo);
                    upper[ui + j - fi] -= s;
                }
            }
            // row i of L
            for j in fi..i {
                let lo = fi.max(first[j]);
                let s = if lo < j { dot_range(&lower, &upper, i, j, lo) } else { 0.0 };
                let diag = upper[uoff(j) + j - first[j]];
                let idx = offsets[i] + j - fi;
                lower[idx] = (lower[idx] - s) / diag;
            }
            if fi < i {
                let s = dot_range(&lower, &upper, i, i, fi);
                upper[ui + i - fi] -= s;
            }
            let pivot = upper[ui + i - fi];
            if !(pivot.abs() > 1e-300) || !pivot.is_finite() {
                return Err(Error::invalid(format!(
                    "zero or non-finite pivot {pivot:e} in row {i}"
                )));
            }
        }
        Ok(Self {
            n,
            perm,
            first,
            offsets,
            lower,
            upper,
        })
    }

    pub fn envelope_size(&self) -> usize {
        self.lower.len() + self.upper.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.lower[self.offsets[i]..self.offsets[i + 1]];
            let s: f64 = row.iter().zip(&y[fi..i]).map(|(l, y)| l * y).sum();
            y[i] -= s;
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let col = &self.upper[self.offsets[i] + i..self.offsets[i + 1] + i + 1];
            let xi = y[i] / col[i - fi];
            y[i] = xi;
            for (k, u) in (fi..i).zip(col) {
                y[k] -= u * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}
