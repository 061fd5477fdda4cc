//! Count-based event loop: competing exponential clocks, redrawn after
//! every event, with batch epochs cutting the current draw short.

use super::assignment::{LazyAssignment, RandomSource};
use super::{MeasuredCounts, Policy, ReplicationResult, SimConfig, SystemState};
use crate::utility::open_unit;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub(super) fn simulate(config: &SimConfig, rep_index: usize, seed: u64) -> ReplicationResult {
    debug_assert!(config.validate().is_ok());
    let p = &config.params;
    let model = &config.model;
    let nf = p.n as f64;
    let rate_b = nf * p.lambda_b;
    let rate_s = nf * p.lambda_s;
    let arrivals = rate_b + rate_s;
    let warmup = config.warmup;
    let horizon = config.horizon;

    let mut events = stream(seed, 0);
    let mut draws = stream(seed, 1);
    let mut batch_rng = stream(seed, 2);

    // population policies match only when a mate exists
    let z_gate = match config.policy {
        Policy::Greedy => Some(1),
        Policy::PopulationThreshold(z) => Some(z.max(1)),
        _ => None,
    };
    let z_report = match config.policy {
        Policy::Greedy => Some(0),
        Policy::PopulationThreshold(z) => Some(z),
        _ => None,
    };
    let (v_b, v_s) = match config.policy {
        Policy::UtilityThreshold { v_b, v_s } => (v_b, v_s),
        _ => (0.0, 0.0),
    };
    let delta = match config.policy {
        Policy::BatchAndMatch { delta } => delta,
        _ => f64::INFINITY,
    };
    let mut epoch = 1u64;
    let mut next_epoch = delta;
    let mut solver = LazyAssignment::new();

    let mut st = SystemState { buyers: config.initial_buyers, sellers: config.initial_sellers, ..Default::default() };
    let mut counts = MeasuredCounts::default();
    let mut area_b = 0.0;
    let mut area_s = 0.0;
    let mut time_b_at_z = 0.0;

    loop {
        let total = arrivals + p.eta_b * st.buyers as f64 + p.eta_s * st.sellers as f64;
        let dt = if total > 0.0 { <Exp1 as Distribution<f64>>::sample(&Exp1, &mut events) / total } else { f64::INFINITY };
        let t_next = st.clock + dt;
        let batch_due = next_epoch <= horizon && t_next >= next_epoch;
        let t_event = if batch_due { next_epoch } else { t_next.min(horizon) };

        if t_event > warmup {
            let span = t_event - st.clock.max(warmup);
            area_b += span * st.buyers as f64;
            area_s += span * st.sellers as f64;
            if z_report.is_some_and(|z| st.buyers >= z) {
                time_b_at_z += span;
            }
        }
        st.clock = t_event;
        let measured = t_event > warmup;

        if batch_due {
            let m = st.buyers.min(st.sellers);
            if m > 0 {
                if measured {
                    let mut src = RandomSource::new(model, m as usize, &mut batch_rng);
                    st.cum_utility += solver.solve(&mut src);
                    counts.matches += m;
                }
                st.buyers -= m;
                st.sellers -= m;
                st.matches += m;
            }
            if measured {
                counts.batch_epochs += 1;
            }
            epoch += 1;
            next_epoch = epoch as f64 * delta;
            continue;
        }
        if t_next >= horizon {
            break;
        }

        let x = open_unit(&mut events) * total;
        let abandon_b_edge = arrivals + p.eta_b * st.buyers as f64;
        if x < rate_b {
            st.arrivals_b += 1;
            counts.arrivals_b += measured as u64;
            let s = st.sellers;
            let utility = match (z_gate, config.policy) {
                (Some(z), _) if s >= z => Some(model.sample_max(s, &mut draws)),
                (_, Policy::UtilityThreshold { .. }) if s > 0 => Some(model.sample_max(s, &mut draws)).filter(|u| *u > v_s),
                _ => None,
            };
            match utility {
                Some(u) => {
                    st.sellers -= 1;
                    st.matches += 1;
                    if measured {
                        st.cum_utility += u;
                        counts.matches += 1;
                    }
                }
                None => st.buyers += 1,
            }
        } else if x < arrivals {
            st.arrivals_s += 1;
            counts.arrivals_s += measured as u64;
            let b = st.buyers;
            let utility = match (z_gate, config.policy) {
                (Some(z), _) if b >= z => Some(model.sample_max(b, &mut draws)),
                (_, Policy::UtilityThreshold { .. }) if b > 0 => Some(model.sample_max(b, &mut draws)).filter(|u| *u > v_b),
                _ => None,
            };
            match utility {
                Some(u) => {
                    st.buyers -= 1;
                    st.matches += 1;
                    if measured {
                        st.cum_utility += u;
                        counts.matches += 1;
                    }
                }
                None => st.sellers += 1,
            }
        } else if (x < abandon_b_edge && st.buyers > 0) || st.sellers == 0 {
            st.buyers -= 1;
            st.abandon_b += 1;
            counts.abandon_b += measured as u64;
        } else {
            st.sellers -= 1;
            st.abandon_s += 1;
            counts.abandon_s += measured as u64;
        }
    }

    let window = horizon - warmup;
    let frac = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    ReplicationResult {
        rep_index,
        seed,
        utility_rate: st.cum_utility / window,
        abandon_frac_b: frac(counts.abandon_b, counts.arrivals_b),
        abandon_frac_s: frac(counts.abandon_s, counts.arrivals_s),
        matches: counts.matches,
        mean_b: area_b / window,
        mean_s: area_s / window,
        frac_time_b_at_threshold: z_report.map(|_| time_b_at_z / window),
        measured: counts,
        initial: (config.initial_buyers, config.initial_sellers),
        final_state: st,
    }
}
