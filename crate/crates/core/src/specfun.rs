//! Special functions used by the analytic formulas and the fluid solvers.
//!
//! Everything here is real-valued and double precision. Tolerances are fixed
//! constants; the root finders in [`crate::analytics`] rely on them.

use crate::error::{Error, Result};
use std::f64::consts::{E, PI};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const SERIES_EPS: f64 = 1e-16;
const MAX_SERIES_TERMS: usize = 10_000;
const LAMBERT_MAX_ITER: usize = 50;

fn lanczos_sum(x: f64) -> f64 {
    // x here is the shifted argument (z - 1)
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    acc
}

/// Γ(x) for x > 0.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("gamma_fn requires finite x > 0, got {x}")));
    }
    if x < 0.5 {
        // Γ(x) = Γ(x + 1) / x keeps the Lanczos argument away from 0.
        return Ok(gamma_fn(x + 1.0)? / x);
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    Ok((2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * lanczos_sum(z))
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("ln_gamma requires finite x > 0, got {x}")));
    }
    if x < 0.5 {
        return Ok(ln_gamma(x + 1.0)? - x.ln());
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    Ok(0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + lanczos_sum(z).ln())
}

/// Lower incomplete gamma γ(a, x) = ∫₀ˣ t^{a−1} e^{−t} dt (not regularized).
///
/// `x = +∞` returns Γ(a).
pub fn lower_incomplete_gamma(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::domain(format!("lower_incomplete_gamma requires a > 0, got {a}")));
    }
    if !(x >= 0.0) {
        return Err(Error::domain(format!("lower_incomplete_gamma requires x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let gamma_a = gamma_fn(a)?;
    if x.is_infinite() {
        return Ok(gamma_a);
    }
    if x < a + 1.0 {
        lower_gamma_series(a, x)
    } else {
        Ok(gamma_a - upper_gamma_cf(a, x)?)
    }
}

/// Regularized lower incomplete gamma P(a, x) = γ(a, x) / Γ(a).
pub fn regularized_lower_gamma(a: f64, x: f64) -> Result<f64> {
    Ok(lower_incomplete_gamma(a, x)? / gamma_fn(a)?)
}

fn lower_gamma_series(a: f64, x: f64) -> Result<f64> {
    let mut denom = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_SERIES_TERMS {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * SERIES_EPS {
            return Ok(sum * (a * x.ln() - x).exp());
        }
    }
    Err(Error::Convergence(format!("incomplete gamma series at a={a}, x={x}")))
}

/// Upper incomplete gamma Γ(a, x) by the modified Lentz continued fraction.
fn upper_gamma_cf(a: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_SERIES_TERMS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < SERIES_EPS {
            return Ok((a * x.ln() - x).exp() * h);
        }
    }
    Err(Error::Convergence(format!("incomplete gamma continued fraction at a={a}, x={x}")))
}

/// Error function.
///
/// Maclaurin series below |x| = 2, the Laplace continued fraction for erfc above.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return -erf(-x);
    }
    if x >= 6.0 {
        return 1.0;
    }
    if x < 2.0 {
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x2 / n;
            let contrib = term / (2.0 * n + 1.0);
            sum += contrib;
            if contrib.abs() <= 1e-17 * sum.abs() {
                break;
            }
        }
        2.0 / PI.sqrt() * sum
    } else {
        1.0 - erfc_cf(x)
    }
}

/// Complementary error function for x ≥ 0 large enough that the
/// continued fraction converges quickly.
fn erfc_cf(x: f64) -> f64 {
    // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    // evaluated bottom-up with a fixed depth that is ample for x >= 2.
    let mut tail = x;
    for k in (1..=80).rev() {
        tail = x + (k as f64 / 2.0) / tail;
    }
    (-x * x).exp() / PI.sqrt() / tail
}

/// Principal branch of the Lambert W function, for x ≥ −1/e.
pub fn lambert_w0(x: f64) -> Result<f64> {
    let branch_point = -1.0 / E;
    if x.is_nan() || x < branch_point - 4.0 * f64::EPSILON {
        return Err(Error::domain(format!("lambert_w0 requires x >= -1/e, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    if x <= branch_point {
        return Ok(-1.0);
    }
    let mut w = if x < -0.25 {
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < E {
        (1.0 + x).ln() * 0.8
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..LAMBERT_MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 1e-15 * (1.0 + w.abs()) {
            return Ok(w);
        }
    }
    let residual = w * w.exp() - x;
    if residual.abs() <= 1e-12 * x.abs().max(1.0) {
        Ok(w)
    } else {
        Err(Error::Convergence(format!("lambert_w0 at x={x}")))
    }
}

/// W(e^{ln_x}) for arguments whose exponential would overflow.
///
/// Solves w + ln w = ln_x by Newton's method.
pub fn lambert_w0_of_exp(ln_x: f64) -> Result<f64> {
    if ln_x < 700.0 {
        return lambert_w0(ln_x.exp());
    }
    let mut w = ln_x - ln_x.ln();
    for _ in 0..LAMBERT_MAX_ITER {
        let f = w + w.ln() - ln_x;
        let step = f / (1.0 + 1.0 / w);
        w -= step;
        if step.abs() <= 1e-15 * w {
            return Ok(w);
        }
    }
    Err(Error::Convergence(format!("lambert_w0 of exp({ln_x})")))
}
