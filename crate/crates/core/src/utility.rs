//! Matching-utility distributions.
//!
//! Each family knows its tail index α, the Frechet normalizing constant κ,
//! the asymptotic and exact expected maximum m(k), and how to draw the
//! maximum of k utilities with a single uniform variate.

use crate::error::{Error, Result};
use crate::quad;
use crate::specfun::{gamma_fn, EULER_GAMMA};
use rand::RngCore;
use std::fmt;
use std::str::FromStr;

/// Relative tolerance for [`UtilityModel::m_exact`].
pub const M_EXACT_TOL: f64 = 1e-10;

/// Base Pareto of the correlated model: F(u) = 1 − (c·u)^{−3}, c = √3/2
/// (unit variance).
const CORR_SHAPE: f64 = 3.0;
const CORR_SCALE: f64 = 0.866_025_403_784_438_6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// F(v) = 1 − e^{−νv}.
    Exponential { nu: f64 },
    /// Uniform on [a, b].
    Uniform { a: f64, b: f64 },
    /// F(v) = 1 − (c·v)^{−β} for c·v ≥ 1.
    Pareto { c: f64, beta: f64 },
    /// V_i = ρU₀ + √(1−ρ²)U_i with U's i.i.d. Pareto(√3/2, 3).
    CorrelatedPareto { rho: f64 },
    /// V_i = 2^{−1/β} max(c_k W, U_i), U_i Pareto(1, β), W Frechet(β).
    FrechetCrowding { beta: f64 },
}

/// A validated utility distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityModel {
    family: Family,
    /// Γ(1 − α), cached because sampling the crowding model needs it per draw.
    gamma_one_minus_alpha: f64,
}

/// Uniform variate on the open interval (0, 1).
#[inline]
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

impl UtilityModel {
    pub fn new(family: Family) -> Result<Self> {
        let ok = match family {
            Family::Exponential { nu } => nu > 0.0 && nu.is_finite(),
            Family::Uniform { a, b } => a < b && a.is_finite() && b.is_finite() && a >= 0.0,
            Family::Pareto { c, beta } => c > 0.0 && beta > 1.0 && c.is_finite() && beta.is_finite(),
            Family::CorrelatedPareto { rho } => (0.0..1.0).contains(&rho),
            Family::FrechetCrowding { beta } => beta > 1.0 && beta.is_finite(),
        };
        if !ok {
            return Err(Error::config(format!("invalid utility model parameters: {family:?}")));
        }
        let mut model = UtilityModel { family, gamma_one_minus_alpha: 1.0 };
        let alpha = model.alpha();
        model.gamma_one_minus_alpha = gamma_fn(1.0 - alpha)?;
        Ok(model)
    }

    pub fn exponential(nu: f64) -> Result<Self> {
        Self::new(Family::Exponential { nu })
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        Self::new(Family::Uniform { a, b })
    }

    pub fn pareto(c: f64, beta: f64) -> Result<Self> {
        Self::new(Family::Pareto { c, beta })
    }

    pub fn correlated_pareto(rho: f64) -> Result<Self> {
        Self::new(Family::CorrelatedPareto { rho })
    }

    pub fn frechet_crowding(beta: f64) -> Result<Self> {
        Self::new(Family::FrechetCrowding { beta })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// True when utilities of distinct pairs are i.i.d. draws from one F.
    pub fn is_iid(&self) -> bool {
        matches!(
            self.family,
            Family::Exponential { .. } | Family::Uniform { .. } | Family::Pareto { .. }
        )
    }

    /// Regular-variation index α of m(·).
    pub fn alpha(&self) -> f64 {
        match self.family {
            Family::Exponential { .. } | Family::Uniform { .. } => 0.0,
            Family::Pareto { beta, .. } | Family::FrechetCrowding { beta } => 1.0 / beta,
            Family::CorrelatedPareto { .. } => 1.0 / CORR_SHAPE,
        }
    }

    /// κ = Γ(1−α)^{−1/α}, the constant that gives the Frechet limit of
    /// M(n)/m(n) unit mean.
    pub fn kappa(&self) -> Result<f64> {
        let alpha = self.alpha();
        if alpha == 0.0 {
            return Err(Error::unsupported(format!(
                "kappa is only defined for heavy-tailed models (alpha > 0), got {self}"
            )));
        }
        Ok(self.gamma_one_minus_alpha.powf(-1.0 / alpha))
    }

    /// Asymptotic expected maximum of k utilities.
    pub fn m_asymptotic(&self, k: f64) -> Result<f64> {
        if !(k >= 1.0) {
            return Err(Error::domain(format!("m_asymptotic requires k >= 1, got {k}")));
        }
        let g = self.gamma_one_minus_alpha;
        Ok(match self.family {
            Family::Exponential { nu } => (EULER_GAMMA + k.ln()) / nu,
            Family::Uniform { a, b } => b - (b - a) / k,
            Family::Pareto { c, beta } => g * k.powf(1.0 / beta) / c,
            // leading term only; the common factor adds ρE[U₀] = O(1)
            Family::CorrelatedPareto { rho } => (1.0 - rho * rho).sqrt() * g * k.powf(1.0 / CORR_SHAPE) / CORR_SCALE,
            Family::FrechetCrowding { beta } => {
                // max(c_k W, max U_i) is asymptotically Frechet with scale
                // (k(1 + Γ^β))^{1/β}; the 2^{-1/β} prefactor halves the k-term.
                g * (k * (1.0 + g.powf(beta)) / 2.0).powf(1.0 / beta)
            }
        })
    }

    /// Exact E[max of k i.i.d. utilities] by quadrature of ∫(1 − F(v)^k) dv.
    ///
    /// `k = 0` returns 0 (empty maximum).
    pub fn m_exact(&self, k: u64) -> Result<f64> {
        if k == 0 {
            return Ok(0.0);
        }
        let kf = k as f64;
        // 1 - F^k computed from the survival function to keep the far tail accurate
        let tail = |surv: f64| -> f64 {
            if surv >= 1.0 {
                1.0
            } else {
                -(kf * (-surv).ln_1p()).exp_m1()
            }
        };
        match self.family {
            Family::Uniform { a, b } => {
                let v = quad::integrate(|v| tail((b - v) / (b - a)), a, b, M_EXACT_TOL)?;
                Ok(a + v)
            }
            Family::Exponential { nu } => {
                let scale = (kf.ln() + 1.0) / nu;
                quad::integrate_to_infinity(|v| tail((-nu * v).exp()), 0.0, scale, M_EXACT_TOL)
            }
            Family::Pareto { c, beta } => {
                let lo = 1.0 / c;
                let scale = kf.powf(1.0 / beta) / c;
                let v = quad::integrate_to_infinity(
                    |v| tail((c * v).powf(-beta)),
                    lo,
                    scale,
                    M_EXACT_TOL,
                )?;
                Ok(lo + v)
            }
            _ => Err(Error::unsupported(format!(
                "m_exact needs an i.i.d. family; use a Monte Carlo estimate for {self}"
            ))),
        }
    }

    /// Base CDF F(v) of a single utility, i.i.d. families only.
    pub fn cdf(&self, v: f64) -> Result<f64> {
        Ok(match self.family {
            Family::Exponential { nu } => {
                if v <= 0.0 {
                    0.0
                } else {
                    -(-nu * v).exp_m1()
                }
            }
            Family::Uniform { a, b } => ((v - a) / (b - a)).clamp(0.0, 1.0),
            Family::Pareto { c, beta } => pareto_cdf(c, beta, v),
            _ => return Err(Error::unsupported(format!("no single-draw CDF for {self}"))),
        })
    }

    /// F̄^{−1}(s): the utility whose survival probability is s, i.i.d. families only.
    #[inline]
    pub fn survival_quantile(&self, s: f64) -> f64 {
        match self.family {
            Family::Exponential { nu } => -s.ln() / nu,
            Family::Uniform { a, b } => b - (b - a) * s,
            Family::Pareto { c, beta } => s.powf(-1.0 / beta) / c,
            Family::CorrelatedPareto { .. } | Family::FrechetCrowding { .. } => {
                panic!("survival_quantile called on a correlated model")
            }
        }
    }

    /// Draws max{V₁,…,V_k}; zero when k = 0.
    ///
    /// Uses F^{−1}(U^{1/k}) so the cost does not depend on k, and the draw is
    /// pointwise nondecreasing in k for a fixed uniform.
    #[inline]
    pub fn sample_max<R: RngCore + ?Sized>(&self, k: u64, rng: &mut R) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let kf = k as f64;
        match self.family {
            Family::Uniform { a, b } => {
                let u = open_unit(rng);
                a + (b - a) * (u.ln() / kf).exp()
            }
            Family::Exponential { .. } | Family::Pareto { .. } => {
                let u = open_unit(rng);
                self.survival_quantile(-(u.ln() / kf).exp_m1())
            }
            Family::CorrelatedPareto { rho } => {
                let common = pareto_survival_quantile(CORR_SCALE, CORR_SHAPE, open_unit(rng));
                let u = open_unit(rng);
                let idio = pareto_survival_quantile(CORR_SCALE, CORR_SHAPE, -(u.ln() / kf).exp_m1());
                rho * common + (1.0 - rho * rho).sqrt() * idio
            }
            Family::FrechetCrowding { beta } => {
                let c_k = kf.powf(1.0 / beta) * self.gamma_one_minus_alpha;
                let w = (-open_unit(rng).ln()).powf(-1.0 / beta);
                let u = open_unit(rng);
                let max_u = pareto_survival_quantile(1.0, beta, -(u.ln() / kf).exp_m1());
                2f64.powf(-1.0 / beta) * (c_k * w).max(max_u)
            }
        }
    }

    /// P(max{V₁,…,V_k} ≤ v).
    pub fn cdf_max(&self, k: u64, v: f64) -> Result<f64> {
        if k == 0 {
            return Ok(if v >= 0.0 { 1.0 } else { 0.0 });
        }
        let kf = k as f64;
        match self.family {
            Family::Exponential { .. } | Family::Uniform { .. } | Family::Pareto { .. } => {
                Ok(self.cdf(v)?.powf(kf))
            }
            Family::CorrelatedPareto { rho } => {
                let s = (1.0 - rho * rho).sqrt();
                let xm = 1.0 / CORR_SCALE;
                if rho == 0.0 {
                    return Ok(pareto_cdf(CORR_SCALE, CORR_SHAPE, v / s).powf(kf));
                }
                if v <= (rho + s) * xm {
                    return Ok(0.0);
                }
                // Condition on U₀ = xm·w^{−1/β} with w uniform; only w above
                // w_min leaves room for the idiosyncratic maximum.
                let w_min = ((v - s * xm) / (rho * xm)).powf(-CORR_SHAPE);
                let integrand = |w: f64| {
                    let u0 = xm * w.powf(-1.0 / CORR_SHAPE);
                    pareto_cdf(CORR_SCALE, CORR_SHAPE, (v - rho * u0) / s).powf(kf)
                };
                quad::integrate(integrand, w_min, 1.0, 1e-12)
            }
            Family::FrechetCrowding { beta } => {
                let x = v * 2f64.powf(1.0 / beta);
                if x <= 0.0 {
                    return Ok(0.0);
                }
                let c_k = kf.powf(1.0 / beta) * self.gamma_one_minus_alpha;
                let frechet = (-(x / c_k).powf(-beta)).exp();
                Ok(frechet * pareto_cdf(1.0, beta, x).powf(kf))
            }
        }
    }
}

#[inline]
fn pareto_cdf(c: f64, beta: f64, v: f64) -> f64 {
    if c * v <= 1.0 {
        0.0
    } else {
        1.0 - (c * v).powf(-beta)
    }
}

#[inline]
fn pareto_survival_quantile(c: f64, beta: f64, s: f64) -> f64 {
    s.powf(-1.0 / beta) / c
}

impl fmt::Display for UtilityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Exponential { nu } => write!(f, "exponential:nu={nu}"),
            Family::Uniform { a, b } => write!(f, "uniform:a={a},b={b}"),
            Family::Pareto { c, beta } => write!(f, "pareto:c={c},beta={beta}"),
            Family::CorrelatedPareto { rho } => write!(f, "correlated_pareto:rho={rho}"),
            Family::FrechetCrowding { beta } => write!(f, "frechet_crowding:beta={beta}"),
        }
    }
}

impl FromStr for UtilityModel {
    type Err = Error;

    /// Parses strings such as `pareto:c=1,beta=2` or `exponential:nu=1`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let mut params: Vec<(String, f64)> = Vec::new();
        for kv in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::config(format!("expected key=value in model spec, got '{kv}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad number '{v}' in model spec")))?;
            params.push((k.trim().to_ascii_lowercase(), v));
        }
        let mut take = |keys: &[&str]| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(keys.len());
            for key in keys {
                let idx = params
                    .iter()
                    .position(|(k, _)| k == key)
                    .ok_or_else(|| Error::config(format!("model '{name}' needs parameter '{key}'")))?;
                out.push(params.remove(idx).1);
            }
            if let Some((k, _)) = params.first() {
                return Err(Error::config(format!("unknown parameter '{k}' for model '{name}'")));
            }
            Ok(out)
        };
        match name.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => {
                let p = take(&["nu"])?;
                Self::exponential(p[0])
            }
            "uniform" => {
                let p = take(&["a", "b"])?;
                Self::uniform(p[0], p[1])
            }
            "pareto" => {
                let p = take(&["c", "beta"])?;
                Self::pareto(p[0], p[1])
            }
            "correlated_pareto" => {
                let p = take(&["rho"])?;
                Self::correlated_pareto(p[0])
            }
            "frechet_crowding" => {
                let p = take(&["beta"])?;
                Self::frechet_crowding(p[0])
            }
            other => Err(Error::config(format!("unknown utility model '{other}'"))),
        }
    }
}
