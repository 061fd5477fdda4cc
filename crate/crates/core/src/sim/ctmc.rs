//! Exact stationary analysis of the population-threshold chain on a
//! truncated state space, for checking the simulator on tiny markets.

use super::Policy;
use crate::analytics::MarketParams;
use crate::error::{Error, Result};
use crate::utility::UtilityModel;
use std::collections::HashMap;

/// Largest state space solved by dense elimination.
pub const MAX_STATES: usize = 4000;
/// Stationary mass allowed on the truncation boundary.
pub const BOUNDARY_MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CtmcSolution {
    /// (buyers, sellers) with stationary probability.
    pub distribution: Vec<((u64, u64), f64)>,
    pub utility_rate: f64,
}

/// Stationary law and exact utility rate of the population-threshold chain
/// with both counts capped at `state_cap`.
pub fn exact_ctmc_oracle(model: &UtilityModel, params: &MarketParams, policy: Policy, state_cap: usize) -> Result<CtmcSolution> {
    let z = match policy {
        Policy::Greedy => 0,
        Policy::PopulationThreshold(z) => z,
        other => return Err(Error::unsupported(format!("exact chain only for population thresholds, got {other}"))),
    };
    let gate = z.max(1);
    let cap = state_cap as u64;
    let nf = params.n as f64;
    let (rb, rs) = (nf * params.lambda_b, nf * params.lambda_s);

    let step = |(b, s): (u64, u64)| -> [((u64, u64), f64); 4] {
        let buyer = if s >= gate { (b, s - 1) } else { (b + 1, s) };
        let seller = if b >= gate { (b - 1, s) } else { (b, s + 1) };
        [
            (buyer, rb),
            (seller, rs),
            ((b.saturating_sub(1), s), params.eta_b * b as f64),
            ((b, s.saturating_sub(1)), params.eta_s * s as f64),
        ]
    };

    let mut states = vec![(0u64, 0u64)];
    let mut index: HashMap<(u64, u64), usize> = HashMap::from([((0, 0), 0)]);
    let mut head = 0;
    while head < states.len() {
        let x = states[head];
        head += 1;
        for (y, rate) in step(x) {
            if rate > 0.0 && y != x && y.0 <= cap && y.1 <= cap && !index.contains_key(&y) {
                if states.len() == MAX_STATES {
                    return Err(Error::unsupported(format!("state space exceeds {MAX_STATES} states; lower the cap")));
                }
                index.insert(y, states.len());
                states.push(y);
            }
        }
    }

    // Solve Qᵀπ = 0 with the last equation replaced by Σπ = 1.
    let k = states.len();
    let mut a = vec![0.0; k * k];
    for (i, &x) in states.iter().enumerate() {
        for (y, rate) in step(x) {
            if rate <= 0.0 || y == x {
                continue;
            }
            if let Some(&j) = index.get(&y) {
                a[j * k + i] += rate;
                a[i * k + i] -= rate;
            }
        }
    }
    let mut rhs = vec![0.0; k];
    a[(k - 1) * k..].iter_mut().for_each(|v| *v = 1.0);
    rhs[k - 1] = 1.0;
    let pi = solve_dense(&mut a, &mut rhs, k)?;

    let boundary: f64 = states.iter().zip(&pi).filter(|(x, _)| x.0 == cap || x.1 == cap).map(|(_, p)| p.abs()).sum();
    if boundary > BOUNDARY_MASS_TOL {
        return Err(Error::CapTooSmall { cap: state_cap, mass: boundary });
    }

    let mut m_cache: HashMap<u64, f64> = HashMap::new();
    let mut m = |k: u64| -> Result<f64> {
        if let Some(v) = m_cache.get(&k) {
            return Ok(*v);
        }
        let v = model.m_exact(k)?;
        m_cache.insert(k, v);
        Ok(v)
    };
    let mut rate = 0.0;
    for (&(b, s), &p) in states.iter().zip(&pi) {
        if s >= gate {
            rate += p * rb * m(s)?;
        }
        if b >= gate {
            rate += p * rs * m(b)?;
        }
    }
    Ok(CtmcSolution { distribution: states.into_iter().zip(pi).collect(), utility_rate: rate })
}

/// Gaussian elimination with partial pivoting on a row-major k×k system.
fn solve_dense(a: &mut [f64], b: &mut [f64], k: usize) -> Result<Vec<f64>> {
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| a[i * k + col].abs().total_cmp(&a[j * k + col].abs())).expect("nonempty");
        if a[pivot * k + col].abs() < 1e-300 {
            return Err(Error::Convergence("singular generator".into()));
        }
        if pivot != col {
            for c in 0..k {
                a.swap(pivot * k + c, col * k + c);
            }
            b.swap(pivot, col);
        }
        let d = a[col * k + col];
        for r in col + 1..k {
            let f = a[r * k + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..k {
                a[r * k + c] -= f * a[col * k + c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for r in (0..k).rev() {
        let tail: f64 = (r + 1..k).map(|c| a[r * k + c] * x[c]).sum();
        x[r] = (b[r] - tail) / a[r * k + r];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny() -> MarketParams {
        MarketParams::symmetric(1.0, 1.0, 1).unwrap()
    }

    #[test]
    fn probabilities_sum_to_one() {
        let model = UtilityModel::exponential(1.0).unwrap();
        let sol = exact_ctmc_oracle(&model, &tiny(), Policy::PopulationThreshold(2), 60).unwrap();
        let total: f64 = sol.distribution.iter().map(|(_, p)| p).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
        assert!(sol.distribution.iter().all(|(_, p)| *p > -1e-15));
        assert!(sol.utility_rate > 0.0);
    }

    #[test]
    fn greedy_chain_lives_on_the_axes() {
        let model = UtilityModel::exponential(1.0).unwrap();
        let sol = exact_ctmc_oracle(&model, &tiny(), Policy::Greedy, 40).unwrap();
        assert!(sol.distribution.iter().all(|((b, s), _)| b.min(s) == &0));
    }

    #[test]
    fn greedy_exponential_closed_form() {
        // on the axes the chain is a birth-death walk; with m(1) = 1 the
        // rate is 2·P(one side nonempty)·λ, and the net count
        // B − S is the M/M/∞-like walk with rates λ up, λ + η|k| down.
        let model = UtilityModel::exponential(1.0).unwrap();
        let sol = exact_ctmc_oracle(&model, &tiny(), Policy::Greedy, 40).unwrap();
        // solve the one-dimensional walk directly
        let mut w = vec![1.0f64];
        for k in 1..40 {
            w.push(w[k - 1] * 1.0 / (1.0 + k as f64));
        }
        let norm = w[0] + 2.0 * w[1..].iter().sum::<f64>();
        let busy = 2.0 * w[1..].iter().sum::<f64>() / norm;
        // a match happens on an arrival facing k ≥ 1 agents; m(k) = H_k
        let mut expected = 0.0;
        for (k, wk) in w.iter().enumerate().skip(1) {
            let harmonic: f64 = (1..=k).map(|j| 1.0 / j as f64).sum();
            expected += 2.0 * wk / norm * harmonic;
        }
        assert!(busy > 0.0);
        assert_relative_eq!(sol.utility_rate, expected, max_relative = 1e-10);
    }

    #[test]
    fn small_cap_rejected() {
        let model = UtilityModel::exponential(1.0).unwrap();
        let err = exact_ctmc_oracle(&model, &tiny(), Policy::PopulationThreshold(2), 4).unwrap_err();
        assert!(matches!(err, Error::CapTooSmall { cap: 4, .. }));
    }

    #[test]
    fn other_policies_unsupported() {
        let model = UtilityModel::exponential(1.0).unwrap();
        assert!(exact_ctmc_oracle(&model, &tiny(), Policy::BatchAndMatch { delta: 1.0 }, 10).is_err());
    }
}
