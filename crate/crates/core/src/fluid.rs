//! Fluid (law-of-large-numbers) limits of the scaled populations B/n, S/n.
//!
//! Thresholds passed here are normalized: a utility threshold v_n of the
//! n-th system corresponds to v = v_n / m(n).

use crate::analytics::MarketParams;
use crate::error::{Error, Result};
use crate::specfun::lambert_w0_of_exp;
use crate::utility::UtilityModel;

/// Sampled path of the scaled populations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FluidTrajectory {
    pub times: Vec<f64>,
    pub b_bar: Vec<f64>,
    pub s_bar: Vec<f64>,
    /// Cumulative reflection (population threshold) or cumulative matched
    /// mass (batch); zero for the smooth systems.
    pub l_reflection: Vec<f64>,
}

impl FluidTrajectory {
    fn with_capacity(n: usize) -> Self {
        FluidTrajectory {
            times: Vec::with_capacity(n),
            b_bar: Vec::with_capacity(n),
            s_bar: Vec::with_capacity(n),
            l_reflection: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, t: f64, b: f64, s: f64, l: f64) {
        self.times.push(t);
        self.b_bar.push(b);
        self.s_bar.push(s);
        self.l_reflection.push(l);
    }

    /// Final (b̄, s̄).
    pub fn terminal(&self) -> (f64, f64) {
        (
            *self.b_bar.last().expect("trajectory is never empty"),
            *self.s_bar.last().expect("trajectory is never empty"),
        )
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// A normalized utility threshold, or none at all (arrivals never match).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cutoff {
    Finite(f64),
    Never,
}

impl Cutoff {
    /// Rate κ/v^{1/α} in the Frechet approximation P(no mate above v) ≈ e^{−rate·x}.
    fn decay(self, alpha: f64, kappa: f64) -> Result<f64> {
        match self {
            Cutoff::Never => Ok(0.0),
            Cutoff::Finite(v) if v > 0.0 && v.is_finite() => Ok(kappa / v.powf(1.0 / alpha)),
            Cutoff::Finite(v) => Err(Error::domain(format!("utility threshold must be positive and finite, got {v}"))),
        }
    }
}

fn check_horizon(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::domain(format!("need dt > 0 and finite t_end >= 0 (dt {dt}, t_end {t_end})")));
    }
    Ok((t_end / dt).ceil() as usize)
}

/// Population-threshold fluid reflected below z in both coordinates.
///
/// Each step advances the linear part exactly, then removes the common
/// overshoot above z from both sides (a match consumes one of each) and adds
/// it to L.
pub fn integrate_population_fluid(
    z: f64,
    lambda: f64,
    eta: f64,
    b0: f64,
    s0: f64,
    t_end: f64,
    dt: f64,
) -> Result<FluidTrajectory> {
    if !(z >= 0.0) || !(eta > 0.0) || !(lambda >= 0.0) {
        return Err(Error::domain(format!("need z >= 0, lambda >= 0, eta > 0 (z {z}, lambda {lambda}, eta {eta})")));
    }
    if !(b0 >= 0.0 && s0 >= 0.0) || b0 > z || s0 > z {
        return Err(Error::domain(format!("initial state ({b0}, {s0}) must lie in [0, z]^2 with z = {z}")));
    }
    let steps = check_horizon(t_end, dt)?;
    let cap = lambda / eta;
    let mut path = FluidTrajectory::with_capacity(steps + 1);
    let (mut b, mut s, mut l, mut t) = (b0, s0, 0.0, 0.0);
    path.push(t, b, s, l);
    for i in 0..steps {
        let h = if i + 1 == steps { t_end - t } else { dt };
        let decay = (-eta * h).exp();
        let b_free = cap + (b - cap) * decay;
        let s_free = cap + (s - cap) * decay;
        let push = (b_free - z).max(s_free - z).max(0.0);
        b = (b_free - push).max(0.0);
        s = (s_free - push).max(0.0);
        l += push;
        t += h;
        path.push(t, b, s, l);
    }
    Ok(path)
}

/// RK4 recorded every `dt`; each record step is split into substeps no longer
/// than 1/`stiffness` so that steep matching terms stay stable.
fn rk4<F: Fn(f64, f64) -> (f64, f64)>(
    f: F,
    b0: f64,
    s0: f64,
    t_end: f64,
    dt: f64,
    stiffness: f64,
) -> Result<FluidTrajectory> {
    let steps = check_horizon(t_end, dt)?;
    let substeps = (dt * stiffness).ceil().max(1.0) as usize;
    let mut path = FluidTrajectory::with_capacity(steps + 1);
    let (mut b, mut s, mut t) = (b0, s0, 0.0);
    path.push(t, b, s, 0.0);
    for i in 0..steps {
        let step = if i + 1 == steps { t_end - t } else { dt };
        let h = step / substeps as f64;
        for _ in 0..substeps {
            let (k1b, k1s) = f(b, s);
            let (k2b, k2s) = f(b + 0.5 * h * k1b, s + 0.5 * h * k1s);
            let (k3b, k3s) = f(b + 0.5 * h * k2b, s + 0.5 * h * k2s);
            let (k4b, k4s) = f(b + h * k3b, s + h * k3s);
            b += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
            s += h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
        }
        t += step;
        path.push(t, b, s, 0.0);
    }
    Ok(path)
}

fn heavy_tail_constants(model: &UtilityModel) -> Result<(f64, f64)> {
    let alpha = model.alpha();
    if alpha == 0.0 {
        return Err(Error::unsupported(format!("utility fluid needs alpha > 0, got {model}")));
    }
    Ok((alpha, model.kappa()?))
}

/// Symmetric utility-threshold fluid, integrated with classical RK4.
#[allow(clippy::too_many_arguments)]
pub fn integrate_utility_fluid(
    v: Cutoff,
    model: &UtilityModel,
    lambda: f64,
    eta: f64,
    b0: f64,
    s0: f64,
    t_end: f64,
    dt: f64,
) -> Result<FluidTrajectory> {
    let params = MarketParams::symmetric(lambda, eta, 1)?;
    integrate_unbalanced_fluid(v, v, model, &params, b0, s0, t_end, dt)
}

/// Two-sided utility-threshold fluid. `vb` gates arriving sellers (matched
/// against the buyer pool), `vs` gates arriving buyers.
#[allow(clippy::too_many_arguments)]
pub fn integrate_unbalanced_fluid(
    vb: Cutoff,
    vs: Cutoff,
    model: &UtilityModel,
    params: &MarketParams,
    b0: f64,
    s0: f64,
    t_end: f64,
    dt: f64,
) -> Result<FluidTrajectory> {
    let (alpha, kappa) = heavy_tail_constants(model)?;
    let rb = vb.decay(alpha, kappa)?;
    let rs = vs.decay(alpha, kappa)?;
    if !(b0 >= 0.0 && s0 >= 0.0) {
        return Err(Error::domain("initial populations must be nonnegative"));
    }
    let MarketParams { lambda_b, lambda_s, eta_b, eta_s, .. } = *params;
    let field = |b: f64, s: f64| {
        // probability that an arriving buyer (seller) finds no acceptable mate
        let buyer_joins = (-rs * s).exp();
        let seller_joins = (-rb * b).exp();
        (
            lambda_b * buyer_joins - eta_b * b - lambda_s * (1.0 - seller_joins),
            lambda_s * seller_joins - eta_s * s - lambda_b * (1.0 - buyer_joins),
        )
    };
    let stiffness = eta_b.max(eta_s) + lambda_s * rb + lambda_b * rs;
    rk4(field, b0, s0, t_end, dt, stiffness)
}

/// Stationary level x̄ of the symmetric utility fluid at normalized threshold v.
///
/// Solves ηx + λ = 2λe^{−ax}, a = κ/v^{1/α}, through Lambert W:
/// x̄ = −λ/η + W((2λa/η)e^{aλ/η})/a.
pub fn stationary_xbar(v: f64, lambda: f64, eta: f64, alpha: f64, kappa: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::domain(format!("stationary_xbar needs v > 0, got {v}")));
    }
    let cap = lambda / eta;
    let a = kappa / v.powf(1.0 / alpha);
    if a * cap < 1e-8 {
        // −cap + W(·)/a cancels badly here; the fixed-point map is a strong
        // contraction instead
        let mut x = cap;
        for _ in 0..100 {
            x = (2.0 * lambda * (-a * x).exp() - lambda) / eta;
        }
        return Ok(x);
    }
    let w = lambert_w0_of_exp((2.0 * lambda * a / eta).ln() + a * cap)?;
    Ok(-cap + w / a)
}

/// Batch fluid from an empty market: closed-form growth inside each cycle,
/// min(B̄, S̄) removed from both sides at every boundary.
///
/// Samples are taken at the cycle boundaries kΔ and hold the pre-match state;
/// `l_reflection` is the matched mass accumulated through that boundary.
pub fn integrate_batch_fluid(params: &MarketParams, delta: f64, cycles: usize) -> Result<FluidTrajectory> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::domain(format!("batch window must be positive, got {delta}")));
    }
    let MarketParams { lambda_b, lambda_s, eta_b, eta_s, .. } = *params;
    let grow = |x: f64, lambda: f64, eta: f64| {
        let cap = lambda / eta;
        cap + (x - cap) * (-eta * delta).exp()
    };
    let mut path = FluidTrajectory::with_capacity(cycles + 1);
    let (mut b, mut s, mut matched) = (0.0, 0.0, 0.0);
    path.push(0.0, b, s, matched);
    for k in 1..=cycles {
        b = grow(b, lambda_b, eta_b);
        s = grow(s, lambda_s, eta_s);
        matched += b.min(s);
        path.push(k as f64 * delta, b, s, matched);
        let m = b.min(s);
        b -= m;
        s -= m;
    }
    Ok(path)
}
