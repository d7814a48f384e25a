//! Matrix-free conjugate gradients for symmetric positive definite operators.

use crate::grid::{laplacian_into, Grid};

pub trait LinearOperator {
    fn len(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// `I - dt * Δ_N` on a uniform grid. Symmetric positive definite for `dt >= 0`.
pub struct ShiftedLaplacian<'a> {
    pub grid: &'a Grid,
    pub dt: f64,
}

impl LinearOperator for ShiftedLaplacian<'_> {
    fn len(&self) -> usize {
        self.grid.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        laplacian_into(self.grid, x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi - self.dt * *yi;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("conjugate gradients stalled after {iterations} iterations at relative residual {relative_residual:e}")]
pub struct CgFailure {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` starting from the contents of `x`.
///
/// Converged when `||b - A x|| <= tol * ||b||`. Reductions run in index
/// order, so results are reproducible bit for bit.
pub fn conjugate_gradient(
    op: &impl LinearOperator,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgStats, CgFailure> {
    let n = op.len();
    debug_assert_eq!(b.len(), n);
    debug_assert_eq!(x.len(), n);

    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|xi| *xi = 0.0);
        return Ok(CgStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let target = tol * b_norm;

    for iteration in 0..=max_iter {
        if rr.sqrt() <= target {
            return Ok(CgStats {
                iterations: iteration,
                relative_residual: rr.sqrt() / b_norm,
            });
        }
        if iteration == max_iter {
            break;
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(CgFailure {
        iterations: max_iter,
        relative_residual: rr.sqrt() / b_norm,
    })
}
