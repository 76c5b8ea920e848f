use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Fixed-order pairwise summation. The result does not depend on how the
/// caller partitioned work across threads, only on the slice order.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Safeguarded Newton iteration on a bracket `[lo, hi]` where `f` changes
/// sign. `f` returns the value and derivative.
pub(crate) fn solve_bracketed<F>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    const MAX_ITER: usize = 200;
    let (mut f_lo, _) = f(lo);
    let (f_hi, _) = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::RootSolve(format!(
            "no sign change on [{lo}, {hi}] (f = {f_lo}, {f_hi})"
        )));
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..MAX_ITER {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == f_lo.signum() {
            lo = x;
            f_lo = fx;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= tol * (1.0 + x.abs()) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::RootSolve(format!(
        "no convergence after {MAX_ITER} iterations on [{lo}, {hi}]"
    )))
}

/// Least-squares solution of `a · x = b` through the SVD, discarding
/// singular values below `rel_cutoff · σ_max`. Returns the solution and the
/// number of discarded singular values.
pub(crate) fn svd_least_squares(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    rel_cutoff: f64,
) -> Result<(DVector<f64>, usize)> {
    if a.nrows() != b.len() {
        return Err(Error::invalid(format!(
            "least squares shape mismatch: {}x{} vs {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if s_max == 0.0 {
        return Ok((DVector::zeros(a.ncols()), a.ncols().min(a.nrows())));
    }
    let eps = rel_cutoff * s_max;
    let discarded = svd.singular_values.iter().filter(|&&s| s <= eps).count();
    let x = svd
        .solve(b, eps)
        .map_err(|e| Error::Numerical(format!("svd solve: {e}")))?;
    Ok((x, discarded))
}
