//! Restarted GMRES with right preconditioning.

use super::sparse::{dot, norm2};
use super::SparseMatrix;

pub(crate) struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
}

/// Solves `A x = b` from `x0`, applying `precond` as `M⁻¹`. Stops when the
/// recursively updated relative residual drops below `tol` or after
/// `max_iter` inner iterations.
pub(crate) fn gmres(
    a: &SparseMatrix,
    b: &[f64],
    x0: Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    restart: usize,
    tol: f64,
    max_iter: usize,
) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = x0;
    let mut iterations = 0;
    let m = restart.max(1);
    while iterations < max_iter {
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm2(&r);
        if beta <= tol * bnorm {
            break;
        }
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            if iterations >= max_iter {
                break;
            }
            iterations += 1;
            let zk = precond(&v[k]);
            let mut w = a.matvec(&zk);
            z.push(zk);
            // modified Gram-Schmidt
            for (j, vj) in v.iter().enumerate() {
                let hjk = dot(&w, vj);
                h[j][k] = hjk;
                w.iter_mut().zip(vj).for_each(|(wi, vi)| *wi -= hjk * vi);
            }
            let wnorm = norm2(&w);
            h[k + 1][k] = wnorm;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() <= tol * bnorm || wnorm == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / wnorm).collect());
        }
        // back substitution for the Krylov coefficients
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = ((i + 1)..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            x.iter_mut().zip(zi).for_each(|(xj, zj)| *xj += yi * zj);
        }
        if k_used == 0 {
            break;
        }
    }
    debug_assert_eq!(x.len(), n);
    GmresOutcome { x, iterations }
}
