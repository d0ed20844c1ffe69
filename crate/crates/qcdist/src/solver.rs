//! Scalar root finding by bisection.
//!
//! The construction solvers only ever need roots of continuous, monotone
//! residual functions on a known interval, so plain bisection with a residual
//! stopping rule is both sufficient and fully deterministic.

use thiserror::Error;

/// Default residual tolerance for construction solves.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Default iteration budget; an interval of length one shrinks below 2⁻²⁰⁰
/// long before this is exhausted.
pub const MAX_ITER: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo:e}, f(hi) = {f_hi:e}")]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("residual {residual:e} still above tolerance {tol:e} after {iters} iterations")]
    NoConvergence { residual: f64, tol: f64, iters: usize },
    #[error("non-finite residual at x = {x}")]
    NonFinite { x: f64 },
}

/// Result of a bisection solve: the root and the residual actually achieved.
#[derive(Debug, Clone, Copy)]
pub struct Root {
    pub x: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Finds x in [lo, hi] with |f(x)| <= tol by bisection.
///
/// Requires a sign change across the interval; returns the midpoint once its
/// residual drops below `tol` (tracking the best point seen, so a flat-ish
/// region near the root cannot return a worse candidate than it visited).
pub fn bisect<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Root, SolveError> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (f(a), f(b));
    if !fa.is_finite() {
        return Err(SolveError::NonFinite { x: a });
    }
    if !fb.is_finite() {
        return Err(SolveError::NonFinite { x: b });
    }
    if fa == 0.0 {
        return Ok(Root { x: a, residual: 0.0, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, residual: 0.0, iterations: 0 });
    }
    if fa.signum() == fb.signum() {
        return Err(SolveError::NoBracket { lo, hi, f_lo: fa, f_hi: fb });
    }
    let mut best = Root { x: a, residual: fa.abs(), iterations: 0 };
    for iter in 1..=max_iter {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if !fm.is_finite() {
            return Err(SolveError::NonFinite { x: mid });
        }
        if fm.abs() < best.residual {
            best = Root { x: mid, residual: fm.abs(), iterations: iter };
        }
        if fm.abs() <= tol {
            return Ok(Root { x: mid, residual: fm.abs(), iterations: iter });
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
        if a == b {
            break;
        }
    }
    if best.residual <= tol {
        return Ok(best);
    }
    Err(SolveError::NoConvergence { residual: best.residual, tol, iters: max_iter })
}
