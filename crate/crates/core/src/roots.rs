//! Bracketed scalar solvers: bisection for roots, golden section for maxima.

use crate::error::{Error, Result};

/// Residual target for every root solved in the analytics module.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-12;
/// Interval width at which golden-section search stops.
pub const GOLDEN_INTERVAL_TOL: f64 = 1e-10;

const MAX_BISECTIONS: usize = 400;

/// Finds x in [lo, hi] with f(x) = 0, given f(lo) and f(hi) of opposite sign.
///
/// Stops at |f(x)| ≤ `tol` or when the bracket can no longer be halved in
/// floating point; the latter only succeeds if the bracket endpoints straddle
/// the root with the sign change intact.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::Convergence(format!(
            "bisection bracket [{lo}, {hi}] has no sign change ({f_lo}, {f_hi})"
        )));
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid.abs() <= tol {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Convergence(format!("bisection did not converge on [{lo}, {hi}]")))
}

/// Grows `hi` geometrically from `start` until `f(hi)` has the sign `target`.
pub fn expand_upper<F: FnMut(f64) -> f64>(mut f: F, start: f64, target_positive: bool) -> Result<f64> {
    let mut hi = start;
    for _ in 0..200 {
        let v = f(hi);
        if (v > 0.0) == target_positive && v != 0.0 {
            return Ok(hi);
        }
        hi *= 2.0;
    }
    Err(Error::Convergence(format!("could not bracket a root above {start}")))
}

/// Maximizer of a unimodal f on [lo, hi], to interval width `tol`.
pub fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
        if !(x1 > lo && x2 < hi) {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn bisect_requires_sign_change() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn golden_section_quadratic() {
        let x = golden_section_max(|x| -(x - 0.3) * (x - 0.3), -2.0, 5.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-9);
    }

    #[test]
    fn expand_finds_bracket() {
        let hi = expand_upper(|x| x - 1000.0, 1.0, true).unwrap();
        assert!(hi > 1000.0);
    }
}
