//! Triangular solves with a packed supernodal factor.

use alloc::vec::Vec;

use crate::{Error, NumericFactor, Result, SparseSymmetric};

/// Solves `L y = b` in place, in the permuted ordering.
pub fn forward_solve(f: &NumericFactor, x: &mut [f64]) {
    let sym = f.symbolic();
    for (s, block) in f.blocks().iter().enumerate() {
        let first = sym.partition.super_ptr[s];
        let below = sym.below_rows(s);
        let (m, w) = (block.rows, block.cols);
        for c in 0..w {
            let col = &block.data[c * m..(c + 1) * m];
            let xj = x[first + c] / col[c];
            x[first + c] = xj;
            for r in c + 1..w {
                x[first + r] -= col[r] * xj;
            }
            for (q, &i) in below.iter().enumerate() {
                x[i] -= col[w + q] * xj;
            }
        }
    }
}

/// Solves `Lᵀ x = y` in place, in the permuted ordering.
pub fn backward_solve(f: &NumericFactor, x: &mut [f64]) {
    let sym = f.symbolic();
    for (s, block) in f.blocks().iter().enumerate().rev() {
        let first = sym.partition.super_ptr[s];
        let below = sym.below_rows(s);
        let (m, w) = (block.rows, block.cols);
        for c in (0..w).rev() {
            let col = &block.data[c * m..(c + 1) * m];
            let mut acc = x[first + c];
            for r in c + 1..w {
                acc -= col[r] * x[first + r];
            }
            for (q, &i) in below.iter().enumerate() {
                acc -= col[w + q] * x[i];
            }
            x[first + c] = acc / col[c];
        }
    }
}

/// Solves `A x = b` for the original (unpermuted) matrix.
pub fn solve(f: &NumericFactor, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != f.n() {
        return Err(Error::DimensionMismatch { expected: f.n(), found: b.len() });
    }
    let mut y = f.perm().gather(b);
    forward_solve(f, &mut y);
    backward_solve(f, &mut y);
    Ok(f.perm().scatter(&y))
}

/// `‖A x − b‖_∞ / (‖A‖_∞ ‖x‖_∞ + ‖b‖_∞)`
pub fn relative_residual(a: &SparseSymmetric, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, &e| m.max(e.abs()));
    let r = ax.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    let scale = a.norm_inf() * inf(x) + inf(b);
    if scale == 0.0 {
        r
    } else {
        r / scale
    }
}
