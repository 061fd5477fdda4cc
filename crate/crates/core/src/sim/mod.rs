//! Event simulation of the n-th market under each policy, with replication
//! statistics.

pub mod assignment;
pub mod ctmc;
mod engine;
mod exec;
mod stats;

use crate::analytics::MarketParams;
use crate::error::{Error, Result};
use crate::utility::UtilityModel;
use std::fmt;

pub use assignment::{max_weight_assignment, LazyAssignment};
pub use ctmc::{exact_ctmc_oracle, CtmcSolution};
pub use stats::{mean_ci, MeanCi};

/// Matching policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    Greedy,
    /// Match an arrival iff the other side holds at least z agents (and at least one).
    PopulationThreshold(u64),
    /// Match an arriving buyer iff its best utility exceeds `v_s`, an arriving
    /// seller iff its best utility exceeds `v_b`.
    UtilityThreshold { v_b: f64, v_s: f64 },
    /// Every `delta` time units, optimally pair min(B, S) agents.
    BatchAndMatch { delta: f64 },
}

impl Policy {
    fn validate(&self) -> Result<()> {
        match *self {
            Policy::UtilityThreshold { v_b, v_s } if !(v_b >= 0.0 && v_s >= 0.0 && v_b.is_finite() && v_s.is_finite()) => {
                Err(Error::config(format!("utility thresholds must be finite and nonnegative, got ({v_b}, {v_s})")))
            }
            Policy::BatchAndMatch { delta } if !(delta > 0.0 && delta.is_finite()) => {
                Err(Error::config(format!("batch window must be positive, got {delta}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Greedy => write!(f, "greedy"),
            Policy::PopulationThreshold(z) => write!(f, "population:z={z}"),
            Policy::UtilityThreshold { v_b, v_s } => write!(f, "utility:v_b={v_b},v_s={v_s}"),
            Policy::BatchAndMatch { delta } => write!(f, "batch:delta={delta}"),
        }
    }
}

/// One experiment: model, market, policy and protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: UtilityModel,
    pub params: MarketParams,
    pub policy: Policy,
    pub horizon: f64,
    pub warmup: f64,
    pub initial_buyers: u64,
    pub initial_sellers: u64,
    pub replications: usize,
    pub base_seed: u64,
}

impl SimConfig {
    /// Standard protocol: horizon 1500, warmup 150, start at (n, n), 100 replications.
    pub fn new(model: UtilityModel, params: MarketParams, policy: Policy) -> Result<Self> {
        let config = SimConfig {
            model,
            params,
            policy,
            horizon: 1500.0,
            warmup: 150.0,
            initial_buyers: params.n,
            initial_sellers: params.n,
            replications: 100,
            base_seed: 0,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.warmup >= 0.0 && self.warmup < self.horizon && self.horizon.is_finite()) {
            return Err(Error::config(format!(
                "need 0 ≤ warmup < horizon, got warmup {} horizon {}",
                self.warmup, self.horizon
            )));
        }
        if self.replications == 0 {
            return Err(Error::config("replications must be at least 1"));
        }
        self.policy.validate()?;
        if matches!(self.policy, Policy::BatchAndMatch { .. }) && !self.model.is_iid() {
            return Err(Error::config(format!("batch matching needs an i.i.d. utility model, got {}", self.model)));
        }
        MarketParams::new(self.params.lambda_b, self.params.lambda_s, self.params.eta_b, self.params.eta_s, self.params.n)
            .map_err(|e| Error::config(e.to_string()))?;
        Ok(())
    }

    /// Window over which utility and counters are measured.
    pub fn measured_time(&self) -> f64 {
        self.horizon - self.warmup
    }
}

/// Market state and whole-horizon counters. `cum_utility` only counts
/// matches after warmup.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SystemState {
    pub buyers: u64,
    pub sellers: u64,
    pub clock: f64,
    pub cum_utility: f64,
    pub matches: u64,
    pub abandon_b: u64,
    pub abandon_s: u64,
    pub arrivals_b: u64,
    pub arrivals_s: u64,
}

/// Counts restricted to events after warmup.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeasuredCounts {
    pub arrivals_b: u64,
    pub arrivals_s: u64,
    pub abandon_b: u64,
    pub abandon_s: u64,
    pub matches: u64,
    pub batch_epochs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub rep_index: usize,
    pub seed: u64,
    pub utility_rate: f64,
    pub abandon_frac_b: f64,
    pub abandon_frac_s: f64,
    /// Matches after warmup.
    pub matches: u64,
    /// Time averages after warmup.
    pub mean_b: f64,
    pub mean_s: f64,
    /// Fraction of post-warmup time with buyers ≥ z (population policies only).
    pub frac_time_b_at_threshold: Option<f64>,
    pub measured: MeasuredCounts,
    pub initial: (u64, u64),
    pub final_state: SystemState,
}

impl ReplicationResult {
    /// arrivals = matches + abandonments + final − initial, per side.
    pub fn flow_conserved(&self) -> bool {
        let f = &self.final_state;
        f.arrivals_b + self.initial.0 == f.matches + f.abandon_b + f.buyers
            && f.arrivals_s + self.initial.1 == f.matches + f.abandon_s + f.sellers
    }

    /// Mean pairs formed per batch epoch after warmup.
    pub fn matches_per_cycle(&self) -> Option<f64> {
        (self.measured.batch_epochs > 0).then(|| self.measured.matches as f64 / self.measured.batch_epochs as f64)
    }

    pub const CSV_HEADER: &'static str = "rep_index,seed,utility_rate,abandon_frac_b,abandon_frac_s,matches,mean_B,mean_S";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.rep_index,
            self.seed,
            self.utility_rate,
            self.abandon_frac_b,
            self.abandon_frac_s,
            self.matches,
            self.mean_b,
            self.mean_s
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub mean_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// True with one replication: the interval collapses to the mean.
    pub ci_degenerate: bool,
    /// Per-replication abandonment fractions, averaged.
    pub abandon_frac_b: f64,
    pub abandon_frac_s: f64,
    pub mean_matches_per_unit_time: f64,
    pub mean_matches_per_cycle: Option<f64>,
    pub per_replication: Vec<ReplicationResult>,
}

impl ExperimentSummary {
    pub fn ci_half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    fn from_replications(config: &SimConfig, reps: Vec<ReplicationResult>) -> Self {
        let rates: Vec<f64> = reps.iter().map(|r| r.utility_rate).collect();
        let ci = mean_ci(&rates);
        let avg = |f: &dyn Fn(&ReplicationResult) -> f64| reps.iter().map(f).sum::<f64>() / reps.len() as f64;
        let per_cycle: Vec<f64> = reps.iter().filter_map(ReplicationResult::matches_per_cycle).collect();
        ExperimentSummary {
            mean_rate: ci.mean,
            ci_low: ci.low,
            ci_high: ci.high,
            ci_degenerate: ci.degenerate,
            abandon_frac_b: avg(&|r| r.abandon_frac_b),
            abandon_frac_s: avg(&|r| r.abandon_frac_s),
            mean_matches_per_unit_time: avg(&|r| r.matches as f64 / config.measured_time()),
            mean_matches_per_cycle: (!per_cycle.is_empty()).then(|| per_cycle.iter().sum::<f64>() / per_cycle.len() as f64),
            per_replication: reps,
        }
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep`: output number rep+1 of SplitMix64 started at
/// `base_seed`. Each replication then runs ChaCha8 streams 0 (events),
/// 1 (match utilities) and 2 (batch matrices) under that seed.
pub fn replication_seed(base_seed: u64, rep: usize) -> u64 {
    let mut state = base_seed.wrapping_add((rep as u64).wrapping_mul(GOLDEN_GAMMA));
    splitmix64(&mut state)
}

/// Simulates one replication with the given seed. `config` must be valid.
pub fn run_replication(config: &SimConfig, seed: u64) -> ReplicationResult {
    engine::simulate(config, 0, seed)
}

fn run_indexed(config: &SimConfig, rep: usize) -> ReplicationResult {
    engine::simulate(config, rep, replication_seed(config.base_seed, rep))
}

/// Runs all replications, in parallel when the `parallel` feature is on.
pub fn run_experiment(config: &SimConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let reps = exec::map_indexed(config.replications, |rep| run_indexed(config, rep));
    Ok(ExperimentSummary::from_replications(config, reps))
}

/// [`run_experiment`] on the calling thread only.
pub fn run_experiment_sequential(config: &SimConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let reps = (0..config.replications).map(|rep| run_indexed(config, rep)).collect();
    Ok(ExperimentSummary::from_replications(config, reps))
}

/// Policy parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Population,
    /// Both utility thresholds set to the grid value.
    UtilityBoth,
    /// v_b varies, v_s kept from the base policy.
    UtilityBuyer,
    /// v_s varies, v_b kept from the base policy.
    UtilitySeller,
    BatchWindow,
}

impl SweepAxis {
    /// The base policy with this axis set to `value`.
    pub fn apply(self, base: Policy, value: f64) -> Result<Policy> {
        let kept = match base {
            Policy::UtilityThreshold { v_b, v_s } => (v_b, v_s),
            _ => (value, value),
        };
        let policy = match self {
            SweepAxis::Population => {
                if !(value >= 0.0 && value.fract() == 0.0 && value.is_finite()) {
                    return Err(Error::config(format!("population thresholds must be nonnegative integers, got {value}")));
                }
                Policy::PopulationThreshold(value as u64)
            }
            SweepAxis::UtilityBoth => Policy::UtilityThreshold { v_b: value, v_s: value },
            SweepAxis::UtilityBuyer => Policy::UtilityThreshold { v_b: value, v_s: kept.1 },
            SweepAxis::UtilitySeller => Policy::UtilityThreshold { v_b: kept.0, v_s: value },
            SweepAxis::BatchWindow => Policy::BatchAndMatch { delta: value },
        };
        policy.validate()?;
        Ok(policy)
    }
}

/// Evaluates the policy at every grid value. With common random numbers,
/// replication k uses the same seed at every grid point; otherwise grid
/// point g draws its seeds from base `replication_seed(base_seed, g)`.
pub fn threshold_sweep(
    config: &SimConfig,
    axis: SweepAxis,
    grid: &[f64],
    common_random_numbers: bool,
) -> Result<Vec<(f64, ExperimentSummary)>> {
    if grid.is_empty() {
        return Err(Error::config("sweep grid is empty"));
    }
    config.validate()?;
    let configs = grid
        .iter()
        .enumerate()
        .map(|(g, &value)| {
            let mut c = config.clone();
            c.policy = axis.apply(config.policy, value)?;
            if !common_random_numbers {
                c.base_seed = replication_seed(config.base_seed, g);
            }
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let reps = config.replications;
    let mut flat = exec::map_indexed(grid.len() * reps, |job| run_indexed(&configs[job / reps], job % reps)).into_iter();
    Ok(grid
        .iter()
        .zip(&configs)
        .map(|(&value, c)| (value, ExperimentSummary::from_replications(c, flat.by_ref().take(reps).collect())))
        .collect())
}

/// Index of the sweep point with the largest mean rate (first on ties).
pub fn sweep_argmax(points: &[(f64, ExperimentSummary)]) -> Option<usize> {
    (0..points.len()).reduce(|best, i| if points[i].1.mean_rate > points[best].1.mean_rate { i } else { best })
}
