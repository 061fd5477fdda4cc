//! Asymptotically optimal thresholds and predicted utility rates.
//!
//! Every quantity here is a formula evaluation or a bracketed 1-D solve; the
//! simulator in [`crate::sim`] is what checks them against finite-n behavior.

use crate::error::{Error, Result};
use crate::roots::{bisect, expand_upper, golden_section_max, GOLDEN_INTERVAL_TOL, ROOT_RESIDUAL_TOL};
use crate::specfun::{gamma_fn, lower_incomplete_gamma};
use crate::utility::{Family, UtilityModel};
use std::f64::consts::PI;

/// Arrival and abandonment rates of the two sides, plus the scale n.
///
/// Arrival rates of the n-th system are nλ_b and nλ_s; each waiting agent
/// abandons at its own rate η.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    pub lambda_b: f64,
    pub lambda_s: f64,
    pub eta_b: f64,
    pub eta_s: f64,
    pub n: u64,
}

impl MarketParams {
    pub fn new(lambda_b: f64, lambda_s: f64, eta_b: f64, eta_s: f64, n: u64) -> Result<Self> {
        let rates = [lambda_b, lambda_s, eta_b, eta_s];
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) || eta_b <= 0.0 || eta_s <= 0.0 {
            return Err(Error::config(format!(
                "rates must be finite, arrivals >= 0 and abandonment > 0: {rates:?}"
            )));
        }
        if n == 0 {
            return Err(Error::config("scale n must be at least 1"));
        }
        Ok(MarketParams { lambda_b, lambda_s, eta_b, eta_s, n })
    }

    pub fn symmetric(lambda: f64, eta: f64, n: u64) -> Result<Self> {
        Self::new(lambda, lambda, eta, eta, n)
    }

    pub fn is_symmetric(&self) -> bool {
        self.lambda_b == self.lambda_s && self.eta_b == self.eta_s
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    /// (λ, η) of a symmetric market.
    fn symmetric_rates(&self, op: &str) -> Result<(f64, f64)> {
        if !self.is_symmetric() {
            return Err(Error::unsupported(format!("{op} needs a symmetric market")));
        }
        if self.lambda_b <= 0.0 {
            return Err(Error::domain(format!("{op} needs a positive arrival rate")));
        }
        Ok((self.lambda_b, self.eta_b))
    }
}

/// A solved threshold (or batch window) with its predicted performance.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSolution {
    pub threshold: f64,
    /// Stationary scaled populations (b̄, s̄).
    pub fluid_point: (f64, f64),
    pub predicted_rate: f64,
    /// Named intermediates, in the order they were computed.
    pub auxiliary: Vec<(&'static str, f64)>,
}

impl ThresholdSolution {
    pub fn aux(&self, name: &str) -> Option<f64> {
        self.auxiliary.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }
}

/// λn·m(λn/η): the rate if every arrival could be matched to the best of
/// all agents present in an unmatched system.
pub fn upper_bound_rate(model: &UtilityModel, params: &MarketParams) -> Result<f64> {
    let (lambda, eta) = params.symmetric_rates("upper_bound_rate")?;
    let n = params.nf();
    Ok(lambda * n * model.m_asymptotic((lambda * n / eta).max(1.0))?)
}

/// Greedy rate with the finite-n abandonment correction (1 − 1/√(2πn)).
pub fn greedy_rate(model: &UtilityModel, params: &MarketParams) -> Result<f64> {
    let n = params.nf();
    Ok((1.0 - 1.0 / (2.0 * PI * n).sqrt()) * greedy_rate_limit(model, params)?)
}

/// Greedy rate without the finite-n correction: nλ·m((λ/η)√(2n/π)).
pub fn greedy_rate_limit(model: &UtilityModel, params: &MarketParams) -> Result<f64> {
    let (lambda, eta) = params.symmetric_rates("greedy_rate")?;
    let n = params.nf();
    let mean_pool = (lambda / eta) * (2.0 * n / PI).sqrt();
    Ok(n * lambda * model.m_asymptotic(mean_pool.max(1.0))?)
}

/// Asymptotically optimal population threshold with the default choice
/// n/ln n for light tails.
pub fn population_threshold(model: &UtilityModel, params: &MarketParams) -> Result<ThresholdSolution> {
    population_threshold_with(model, params, None)
}

/// Population threshold; for α = 0, `delta = Some(δ)` selects n/m(n)^δ
/// instead of n/ln n. Ignored when α > 0.
pub fn population_threshold_with(
    model: &UtilityModel,
    params: &MarketParams,
    delta: Option<f64>,
) -> Result<ThresholdSolution> {
    let (lambda, eta) = params.symmetric_rates("population_threshold")?;
    let n = params.nf();
    let alpha = model.alpha();
    if alpha == 0.0 {
        if let Family::Uniform { .. } = model.family() {
            // bounded support: thickening the market cannot beat greedy
            let rate = greedy_rate(model, params)?;
            return Ok(ThresholdSolution {
                threshold: 0.0,
                fluid_point: (0.0, 0.0),
                predicted_rate: rate,
                auxiliary: vec![("rate_limit", greedy_rate_limit(model, params)?)],
            });
        }
        if n < 3.0 {
            return Err(Error::domain(format!("light-tailed population threshold needs n >= 3, got {n}")));
        }
        let threshold = match delta {
            None => n / n.ln(),
            Some(d) => {
                let m = model.m_asymptotic(n)?;
                if !(d > 0.0) || m <= 1.0 {
                    return Err(Error::domain(format!("need delta > 0 and m(n) > 1 (delta {d}, m(n) {m})")));
                }
                n / m.powf(d)
            }
        };
        let rate = lambda * n * model.m_asymptotic(threshold.max(1.0))?;
        return Ok(ThresholdSolution {
            threshold,
            fluid_point: (threshold / n, threshold / n),
            predicted_rate: rate,
            auxiliary: vec![("rate_limit", rate)],
        });
    }
    let z_star = lambda * alpha / (eta * (1.0 + alpha));
    let threshold = n * z_star;
    let rate = lambda * n * model.m_asymptotic(threshold.max(1.0))? * (1.0 - eta * z_star / lambda);
    Ok(ThresholdSolution {
        threshold,
        fluid_point: (z_star, z_star),
        predicted_rate: rate,
        auxiliary: vec![("z_star", z_star), ("rate_limit", rate)],
    })
}

/// L(x) = ln(2λ/(ηx + λ)), the scaled rate at which the threshold binds.
fn log_ratio(x: f64, lambda: f64, eta: f64) -> f64 {
    (2.0 * lambda / (eta * x + lambda)).ln()
}

/// Normalized utility threshold v(x) = (κx/L(x))^α for stationary level x.
pub fn normalized_threshold(x: f64, lambda: f64, eta: f64, alpha: f64, kappa: f64) -> f64 {
    (kappa * x / log_ratio(x, lambda, eta)).powf(alpha)
}

/// Residual of the first-order condition for the stationary level x:
/// ηx/(2λαL^α) − γ(1−α, L).
pub fn utility_foc_residual(x: f64, lambda: f64, eta: f64, alpha: f64) -> Result<f64> {
    let l = log_ratio(x, lambda, eta);
    Ok(eta * x / (2.0 * lambda * alpha * l.powf(alpha)) - lower_incomplete_gamma(1.0 - alpha, l)?)
}

/// Optimal symmetric utility threshold for heavy-tailed utilities.
pub fn utility_threshold_opt(model: &UtilityModel, params: &MarketParams) -> Result<ThresholdSolution> {
    let (lambda, eta) = params.symmetric_rates("utility_threshold_opt")?;
    let alpha = model.alpha();
    if alpha == 0.0 {
        return Err(Error::unsupported(format!(
            "{model} has alpha = 0; use the heuristic utility thresholds instead"
        )));
    }
    let kappa = model.kappa()?;
    let n = params.nf();
    let cap = lambda / eta;
    let mut failure = None;
    let x_star = bisect(
        |x| match utility_foc_residual(x, lambda, eta, alpha) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::NAN
            }
        },
        cap * 1e-12,
        cap * (1.0 - 1e-12),
        ROOT_RESIDUAL_TOL,
    )
    .map_err(|e| failure.take().unwrap_or(e))?;
    let l = log_ratio(x_star, lambda, eta);
    let v_norm = normalized_threshold(x_star, lambda, eta, alpha, kappa);
    let m_n = model.m_asymptotic(n)?;
    let rate = 2.0 * lambda * n * m_n * x_star.powf(alpha) * kappa.powf(alpha)
        * lower_incomplete_gamma(1.0 - alpha, l)?;
    Ok(ThresholdSolution {
        threshold: v_norm * m_n,
        fluid_point: (x_star, x_star),
        predicted_rate: rate,
        auxiliary: vec![
            ("x_star", x_star),
            ("log_ratio", l),
            ("v_normalized", v_norm),
            ("foc_residual", utility_foc_residual(x_star, lambda, eta, alpha)?),
        ],
    })
}

/// Heuristic utility threshold for Exponential(ν) utilities.
pub fn utility_threshold_heuristic_exp(params: &MarketParams, nu: f64) -> Result<f64> {
    let (lambda, eta) = params.symmetric_rates("utility_threshold_heuristic_exp")?;
    let n = params.nf();
    if n < 3.0 || !(nu > 0.0) {
        return Err(Error::domain(format!("need n >= 3 and nu > 0 (n {n}, nu {nu})")));
    }
    let ln_n = n.ln();
    let inner = 2.0 * lambda * ln_n / (lambda * ln_n + eta);
    if inner <= 1.0 {
        return Err(Error::domain(format!("inner log argument {inner} must exceed 1")));
    }
    Ok((ln_n - ln_n.ln() - inner.ln().ln()) / nu)
}

/// Heuristic utility threshold for Uniform(a, b) utilities.
pub fn utility_threshold_heuristic_uniform(params: &MarketParams, a: f64, b: f64) -> Result<f64> {
    let (lambda, eta) = params.symmetric_rates("utility_threshold_heuristic_uniform")?;
    if !(a < b) {
        return Err(Error::domain(format!("need a < b, got a={a}, b={b}")));
    }
    let n = params.nf();
    let base = 1.0 / (2.0 * n * PI).sqrt() + 0.5;
    let exponent = (eta / lambda) * (PI / (2.0 * n)).sqrt();
    Ok(a + (b - a) * base.powf(exponent))
}

/// Common threshold for an unbalanced market with heavy-tailed utilities.
pub fn unbalanced_utility_threshold(model: &UtilityModel, params: &MarketParams) -> Result<ThresholdSolution> {
    let MarketParams { lambda_b, lambda_s, eta_b, eta_s, .. } = *params;
    if [lambda_b, lambda_s].iter().any(|r| *r <= 0.0) {
        return Err(Error::domain("unbalanced threshold needs positive arrival rates"));
    }
    let alpha = model.alpha();
    if alpha == 0.0 {
        return Err(Error::unsupported(format!("{model} has alpha = 0")));
    }
    let kappa = model.kappa()?;
    let rho_s = lambda_s / eta_s;
    let b_of = |s: f64| (s * eta_s + lambda_b - lambda_s) / eta_b;
    let s_lo = ((lambda_s - lambda_b) / eta_s).max(0.0);
    let s_hi = rho_s;
    if !(s_hi > s_lo) {
        return Err(Error::domain("empty search interval for the seller level"));
    }
    let tau_of = |s: f64| -> Result<f64> {
        let b = b_of(s);
        let g = |t: f64| lambda_b * (-s * t).exp() + lambda_s * (-b * t).exp() - (s * eta_s + lambda_b);
        let hi = expand_upper(g, 1.0, false)?;
        bisect(g, 0.0, hi, ROOT_RESIDUAL_TOL)
    };
    let g_inc = |x: f64| lower_incomplete_gamma(1.0 - alpha, x);
    let h_of = |s: f64| -> Result<f64> {
        let b = b_of(s);
        let tau = tau_of(s)?;
        Ok(lambda_s * b.powf(alpha) * g_inc(b * tau)? + lambda_b * s.powf(alpha) * g_inc(s * tau)?)
    };
    let width = s_hi - s_lo;
    let mut failure = None;
    let s_star = golden_section_max(
        |s| match h_of(s) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::NEG_INFINITY
            }
        },
        s_lo + 1e-9 * width,
        s_hi - 1e-9 * width,
        GOLDEN_INTERVAL_TOL,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let b_star = b_of(s_star);
    let tau_star = tau_of(s_star)?;
    let m_n = model.m_asymptotic(params.nf())?;
    let v_norm = (kappa / tau_star).powf(alpha);
    let h_star = h_of(s_star)?;
    Ok(ThresholdSolution {
        threshold: v_norm * m_n,
        fluid_point: (b_star, s_star),
        predicted_rate: params.nf() * m_n * kappa.powf(alpha) * h_star,
        auxiliary: vec![
            ("s_star", s_star),
            ("b_star", b_star),
            ("tau_star", tau_star),
            ("v_normalized", v_norm),
            ("h_star", h_star),
        ],
    })
}

/// Objective H(s) of the unbalanced problem, exposed for grid checks.
pub fn unbalanced_objective(model: &UtilityModel, params: &MarketParams, s: f64) -> Result<f64> {
    let MarketParams { lambda_b, lambda_s, eta_b, eta_s, .. } = *params;
    let alpha = model.alpha();
    let b = (s * eta_s + lambda_b - lambda_s) / eta_b;
    let g = |t: f64| lambda_b * (-s * t).exp() + lambda_s * (-b * t).exp() - (s * eta_s + lambda_b);
    let tau = bisect(g, 0.0, expand_upper(g, 1.0, false)?, ROOT_RESIDUAL_TOL)?;
    Ok(lambda_s * b.powf(alpha) * lower_incomplete_gamma(1.0 - alpha, b * tau)?
        + lambda_b * s.powf(alpha) * lower_incomplete_gamma(1.0 - alpha, s * tau)?)
}

/// (1 − (3/2)e^{−1/2})², the limiting lower-bound constant of the optimal
/// assignment value per k^{α+1}.
pub fn batch_lower_bound_constant() -> f64 {
    (1.0 - 1.5 * (-0.5f64).exp()).powi(2)
}

/// Positive root y of e^y = (1+α)y + 1.
fn batch_root(alpha: f64) -> Result<f64> {
    let f = |y: f64| y.exp_m1() - (1.0 + alpha) * y;
    // f < 0 just right of 0 (slope −α), f → ∞: bracket from a small multiple of α
    let lo = (alpha * 1e-3).min(1e-3);
    let hi = expand_upper(f, 1.0, true)?;
    bisect(f, lo, hi, ROOT_RESIDUAL_TOL)
}

/// Upper bound on the batch-and-match rate at window Δ, with Pareto-type
/// scale `scale` (the constant c in c·Γ(1−α)·k^{α+1}).
pub fn batch_upper_bound(params: &MarketParams, alpha: f64, delta: f64, scale: f64) -> Result<f64> {
    let xi = batch_level(params, delta);
    let n = params.nf();
    Ok(scale * gamma_fn(1.0 - alpha)? * (xi * n).powf(alpha + 1.0) / delta)
}

/// Pre-match short-side level min{ρ_b(1−e^{−η_bΔ}), ρ_s(1−e^{−η_sΔ})}.
pub fn batch_level(params: &MarketParams, delta: f64) -> f64 {
    let side = |lambda: f64, eta: f64| -(lambda / eta) * (-eta * delta).exp_m1();
    side(params.lambda_b, params.eta_b).min(side(params.lambda_s, params.eta_s))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("batch window needs alpha in (0,1), got {alpha}")));
    }
    Ok(())
}

fn batch_solution(params: &MarketParams, alpha: f64, delta: f64) -> Result<ThresholdSolution> {
    let side = |lambda: f64, eta: f64| -(lambda / eta) * (-eta * delta).exp_m1();
    let xi = batch_level(params, delta);
    Ok(ThresholdSolution {
        threshold: delta,
        fluid_point: (side(params.lambda_b, params.eta_b), side(params.lambda_s, params.eta_s)),
        predicted_rate: batch_upper_bound(params, alpha, delta, 1.0)?,
        auxiliary: vec![
            ("delta_star", delta),
            ("matches_per_cycle", xi * params.nf()),
            ("lower_bound_constant", batch_lower_bound_constant()),
            ("lower_bound_rate", batch_lower_bound_constant() * (xi * params.nf()).powf(alpha + 1.0) / delta),
        ],
    })
}

/// Optimal batch window for a symmetric market; the predicted rate is the
/// upper bound with unit scale.
pub fn batch_window(params: &MarketParams, alpha: f64) -> Result<ThresholdSolution> {
    check_alpha(alpha)?;
    let (_, eta) = params.symmetric_rates("batch_window")?;
    let delta = batch_root(alpha)? / eta;
    batch_solution(params, alpha, delta)
}

/// Batch window for an unbalanced market: maximizes ξ^{α+1}/Δ with ξ capped
/// by both sides' pre-match levels.
///
/// The objective on each side's curve is unimodal, so the optimum is either
/// one side's unconstrained window (if that side is the short one there) or
/// a point where the two curves cross.
pub fn unbalanced_batch_window(params: &MarketParams, alpha: f64) -> Result<ThresholdSolution> {
    check_alpha(alpha)?;
    if params.lambda_b <= 0.0 || params.lambda_s <= 0.0 {
        return Err(Error::domain("batch window needs positive arrival rates"));
    }
    let y = batch_root(alpha)?;
    let objective = |d: f64| batch_level(params, d).powf(alpha + 1.0) / d;
    let side = |lambda: f64, eta: f64, d: f64| -(lambda / eta) * (-eta * d).exp_m1();
    let mut candidates = vec![y / params.eta_b, y / params.eta_s];
    // crossings of the two curves, found by scanning a log grid
    let gap = |d: f64| side(params.lambda_b, params.eta_b, d) - side(params.lambda_s, params.eta_s, d);
    let t_max = 60.0 / params.eta_b.min(params.eta_s);
    let t_min = 1e-6 / params.eta_b.max(params.eta_s);
    let steps = 4000;
    let ratio = (t_max / t_min).powf(1.0 / steps as f64);
    let mut prev = t_min;
    for _ in 0..steps {
        let next = prev * ratio;
        let (g0, g1) = (gap(prev), gap(next));
        if g0 == 0.0 {
            candidates.push(prev);
        } else if g0.signum() != g1.signum() && g1 != 0.0 {
            candidates.push(bisect(gap, prev, next, 0.0)?);
        }
        prev = next;
    }
    let best = candidates
        .into_iter()
        .max_by(|a, b| objective(*a).total_cmp(&objective(*b)))
        .expect("at least two candidates");
    batch_solution(params, alpha, best)
}
