//! Subcommand bodies. Each returns a text report and, where the command
//! produces one, a CSV document; the caller owns all file writes.

use crate::error::CliError;
use crate::spec::{ExperimentSpec, FluidKind};
use matchmarket::analytics::{
    batch_window, greedy_rate, greedy_rate_limit, population_threshold, unbalanced_batch_window,
    unbalanced_utility_threshold, upper_bound_rate, utility_threshold_heuristic_exp, utility_threshold_heuristic_uniform,
    utility_threshold_opt, MarketParams,
};
use matchmarket::fluid::{
    integrate_batch_fluid, integrate_population_fluid, integrate_unbalanced_fluid, integrate_utility_fluid, stationary_xbar,
    Cutoff, FluidTrajectory,
};
use matchmarket::sim::{run_experiment, sweep_argmax, threshold_sweep, SweepAxis};
use matchmarket::{ExperimentSummary, Family, Policy, ReplicationResult, SimConfig, ThresholdSolution, UtilityModel};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: String,
    pub csv: Option<String>,
}

/// Overrides given on the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(seed) = self.seed {
            spec.base_seed = seed;
        }
        if let Some(reps) = self.reps {
            spec.replications = reps;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Reproduction {
    Table2,
    Table3,
    Unbalanced,
    Batch,
}

/// Fixed-width report lines: label, value, note.
#[derive(Default)]
struct Report {
    text: String,
}

impl Report {
    fn heading(&mut self, title: &str) {
        if !self.text.is_empty() {
            self.text.push('\n');
        }
        let _ = writeln!(self.text, "{title}");
    }

    fn row(&mut self, label: &str, value: impl std::fmt::Display, note: &str) {
        let line = format!("  {label:<36} {value:>14}  {note}");
        self.text.push_str(line.trim_end());
        self.text.push('\n');
    }

    fn num(&mut self, label: &str, value: f64, note: &str) {
        self.row(label, num(value), note);
    }

    fn missing(&mut self, label: &str, why: &matchmarket::Error) {
        self.row(label, "n/a", &why.to_string());
    }
}

fn num(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.4}")
    }
}

fn ci(s: &ExperimentSummary) -> String {
    if s.ci_degenerate {
        "(single replication)".into()
    } else {
        format!("[{}, {}]", num(s.ci_low), num(s.ci_high))
    }
}

/// Leading-order population-threshold rate with m(z_n) replaced by its
/// regular-variation form m(n)·z^α.
fn population_rate_limit(model: &UtilityModel, params: &MarketParams, sol: &ThresholdSolution) -> matchmarket::Result<f64> {
    let n = params.n as f64;
    let lambda = params.lambda_b;
    match sol.aux("z_star") {
        Some(z) => Ok(lambda * n * model.m_asymptotic(n)? * z.powf(model.alpha()) * (1.0 - params.eta_b * z / lambda)),
        None if matches!(model.family(), Family::Uniform { .. }) => greedy_rate_limit(model, params),
        None => Ok(lambda * n * model.m_asymptotic(n)?),
    }
}

pub fn analyze(spec: &ExperimentSpec) -> Result<Outcome, CliError> {
    let (model, params) = (&spec.model, &spec.params);
    let mut r = Report::default();
    r.heading(&format!("market: {model}, n = {}", params.n));
    r.row(
        "arrival / abandonment rates",
        format!("{}/{} {}/{}", params.lambda_b, params.lambda_s, params.eta_b, params.eta_s),
        "buyers/sellers",
    );
    r.num("tail index alpha", model.alpha(), "");
    if let Ok(kappa) = model.kappa() {
        r.num("kappa", kappa, "");
    }

    // the requested policy family must be analyzable
    match spec.policy {
        Some(Policy::PopulationThreshold(_)) if params.is_symmetric() => {
            population_threshold(model, params)?;
        }
        Some(Policy::UtilityThreshold { .. }) => match model.family() {
            Family::Exponential { .. } | Family::Uniform { .. } if params.is_symmetric() => {}
            _ if params.is_symmetric() => {
                utility_threshold_opt(model, params)?;
            }
            _ => {
                unbalanced_utility_threshold(model, params)?;
            }
        },
        Some(Policy::BatchAndMatch { .. }) => {
            unbalanced_batch_window(params, model.alpha())?;
        }
        _ => {}
    }

    if params.is_symmetric() {
        analyze_symmetric(&mut r, model, params)?;
    } else {
        analyze_unbalanced(&mut r, model, params);
    }
    Ok(Outcome { report: r.text, csv: None })
}

fn analyze_symmetric(r: &mut Report, model: &UtilityModel, params: &MarketParams) -> Result<(), CliError> {
    r.heading("benchmarks");
    match upper_bound_rate(model, params) {
        Ok(v) => r.num("upper bound rate", v, ""),
        Err(e) => r.missing("upper bound rate", &e),
    }
    match (greedy_rate(model, params), greedy_rate_limit(model, params)) {
        (Ok(v), Ok(l)) => {
            r.num("greedy rate", v, "finite-n");
            r.num("greedy rate", l, "limit");
        }
        (Err(e), _) | (_, Err(e)) => r.missing("greedy rate", &e),
    }

    r.heading("population threshold");
    match population_threshold(model, params) {
        Ok(sol) => {
            r.num("threshold z_n", sol.threshold, "");
            r.num("fluid point", sol.fluid_point.0, "B/n = S/n");
            r.num("predicted rate", sol.predicted_rate, "finite-n");
            match population_rate_limit(model, params, &sol) {
                Ok(l) => r.num("predicted rate", l, "limit"),
                Err(e) => r.missing("predicted rate (limit)", &e),
            }
        }
        Err(e) => r.missing("threshold z_n", &e),
    }

    r.heading("utility threshold");
    match model.family() {
        Family::Exponential { nu } => match utility_threshold_heuristic_exp(params, nu) {
            Ok(v) => r.num("heuristic threshold v_n", v, ""),
            Err(e) => r.missing("heuristic threshold v_n", &e),
        },
        Family::Uniform { a, b } => match utility_threshold_heuristic_uniform(params, a, b) {
            Ok(v) => r.num("heuristic threshold v_n", v, ""),
            Err(e) => r.missing("heuristic threshold v_n", &e),
        },
        _ => match utility_threshold_opt(model, params) {
            Ok(sol) => {
                r.num("threshold v_n", sol.threshold, "");
                for (name, value) in &sol.auxiliary {
                    r.num(name, *value, "");
                }
                let xbar = stationary_xbar(sol.aux("v_normalized").unwrap_or(f64::NAN), params.lambda_b, params.eta_b, model.alpha(), model.kappa()?)?;
                r.num("fluid point", xbar, "B/n = S/n");
                r.num("predicted rate", sol.predicted_rate, "limit, scaled by m(n)");
            }
            Err(e) => r.missing("threshold v_n", &e),
        },
    }

    r.heading("batch and match");
    match batch_window(params, model.alpha()) {
        Ok(sol) => batch_rows(r, &sol),
        Err(e) => r.missing("window", &e),
    }
    Ok(())
}

fn batch_rows(r: &mut Report, sol: &ThresholdSolution) {
    r.num("window", sol.threshold, "");
    r.num("matches per cycle", sol.aux("matches_per_cycle").unwrap_or(f64::NAN), "");
    r.num("upper bound rate", sol.predicted_rate, "");
    r.num("lower bound rate", sol.aux("lower_bound_rate").unwrap_or(f64::NAN), "");
}

fn analyze_unbalanced(r: &mut Report, model: &UtilityModel, params: &MarketParams) {
    r.heading("utility threshold (common to both sides)");
    match unbalanced_utility_threshold(model, params) {
        Ok(sol) => {
            r.num("threshold v_n", sol.threshold, "");
            for (name, value) in &sol.auxiliary {
                r.num(name, *value, "");
            }
            r.row("fluid point", format!("({}, {})", num(sol.fluid_point.0), num(sol.fluid_point.1)), "(B/n, S/n)");
            r.num("predicted rate", sol.predicted_rate, "limit, scaled by m(n)");
        }
        Err(e) => r.missing("threshold v_n", &e),
    }
    r.heading("batch and match");
    match unbalanced_batch_window(params, model.alpha()) {
        Ok(sol) => batch_rows(r, &sol),
        Err(e) => r.missing("window", &e),
    }
}

fn summary_rows(r: &mut Report, s: &ExperimentSummary, reps: usize) {
    r.row("replications", reps, "");
    r.num("utility rate", s.mean_rate, &ci(s));
    r.num("abandonment fraction, buyers", s.abandon_frac_b, "");
    r.num("abandonment fraction, sellers", s.abandon_frac_s, "");
    r.num("matches per unit time", s.mean_matches_per_unit_time, "");
    if let Some(per_cycle) = s.mean_matches_per_cycle {
        r.num("matches per cycle", per_cycle, "");
    }
}

pub fn replication_csv(reps: &[ReplicationResult]) -> String {
    let mut out = String::from(ReplicationResult::CSV_HEADER);
    out.push('\n');
    for rep in reps {
        out.push_str(&rep.csv_row());
        out.push('\n');
    }
    out
}

pub fn simulate(spec: &ExperimentSpec) -> Result<Outcome, CliError> {
    let config = spec.sim_config()?;
    let s = run_experiment(&config)?;
    let mut r = Report::default();
    r.heading(&format!("{} under {}, n = {}", config.policy, config.model, config.params.n));
    summary_rows(&mut r, &s, config.replications);
    Ok(Outcome { report: r.text, csv: Some(replication_csv(&s.per_replication)) })
}

pub fn sweep(spec: &ExperimentSpec) -> Result<Outcome, CliError> {
    let sweep = spec.sweep.as_ref().ok_or_else(|| CliError::spec(0, "sweep needs a [sweep] section"))?;
    let config = spec.sim_config_with(spec.sweep_base_policy()?)?;
    let points = threshold_sweep(&config, sweep.axis, &sweep.grid, sweep.common_random_numbers)?;
    let best = sweep_argmax(&points).expect("grid is nonempty");

    let mut csv = String::from("threshold,mean,ci_low,ci_high,argmax\n");
    for (i, (value, s)) in points.iter().enumerate() {
        let _ = writeln!(csv, "{value},{},{},{},{}", s.mean_rate, s.ci_low, s.ci_high, u8::from(i == best));
    }
    let mut r = Report::default();
    r.heading(&format!("sweep of {:?} under {}, n = {}", sweep.axis, config.model, config.params.n));
    r.row("grid points", points.len(), "");
    r.row("replications per point", config.replications, if sweep.common_random_numbers { "common random numbers" } else { "" });
    r.num("best threshold", points[best].0, "");
    r.num("best rate", points[best].1.mean_rate, &ci(&points[best].1));
    let first = &points[0];
    let gap = 1.0 - first.1.mean_rate / points[best].1.mean_rate;
    r.num(&format!("suboptimality of {}", first.0), 100.0 * gap, "percent");
    Ok(Outcome { report: r.text, csv: Some(csv) })
}

fn cutoff(v: Option<f64>) -> Cutoff {
    v.map_or(Cutoff::Never, Cutoff::Finite)
}

pub fn fluid(spec: &ExperimentSpec) -> Result<Outcome, CliError> {
    let fl = spec.fluid.ok_or_else(|| CliError::spec(0, "fluid needs a [fluid] section"))?;
    let p = &spec.params;
    let symmetric = || {
        if p.is_symmetric() {
            Ok((p.lambda_b, p.eta_b))
        } else {
            Err(CliError::spec(0, "this fluid needs a symmetric market; use kind = unbalanced"))
        }
    };
    let mut r = Report::default();
    let path: FluidTrajectory = match fl.kind {
        FluidKind::Population { z } => {
            let (lambda, eta) = symmetric()?;
            r.heading(&format!("population fluid, z = {z}"));
            let path = integrate_population_fluid(z, lambda, eta, fl.b0, fl.s0, fl.t_end, fl.dt)?;
            r.num("attractor", z.min(lambda / eta), "min(z, lambda/eta)");
            path
        }
        FluidKind::Utility { v } => {
            let (lambda, eta) = symmetric()?;
            r.heading(&format!("utility fluid, v = {}", v.map_or("never".into(), |v| v.to_string())));
            let path = integrate_utility_fluid(cutoff(v), &spec.model, lambda, eta, fl.b0, fl.s0, fl.t_end, fl.dt)?;
            match v {
                Some(v) => r.num("stationary level", stationary_xbar(v, lambda, eta, spec.model.alpha(), spec.model.kappa()?)?, ""),
                None => r.num("stationary level", lambda / eta, "no matching"),
            }
            path
        }
        FluidKind::Unbalanced { v_b, v_s } => {
            r.heading("unbalanced utility fluid");
            integrate_unbalanced_fluid(cutoff(v_b), cutoff(v_s), &spec.model, p, fl.b0, fl.s0, fl.t_end, fl.dt)?
        }
        FluidKind::Batch { delta, cycles } => {
            r.heading(&format!("batch fluid, window {delta}, {cycles} cycles"));
            integrate_batch_fluid(p, delta, cycles)?
        }
    };
    let (b, s) = path.terminal();
    r.row("terminal state", format!("({}, {})", num(b), num(s)), "(b_bar, s_bar)");
    if let FluidKind::Batch { .. } = fl.kind {
        r.num("pre-match level, last cycle", b.min(s), "");
    }

    let mut csv = String::from("time,b_bar,s_bar,l\n");
    let last = path.len() - 1;
    for i in (0..path.len()).filter(|i| i % fl.sample_every == 0 || *i == last) {
        let _ = writeln!(csv, "{},{},{},{}", path.times[i], path.b_bar[i], path.s_bar[i], path.l_reflection[i]);
    }
    Ok(Outcome { report: r.text, csv: Some(csv) })
}

/// One reproduced quantity.
struct Cell {
    table: &'static str,
    label: String,
    reference: f64,
    run: f64,
    ci: Option<(f64, f64)>,
    absolute: bool,
}

fn canonical(model: UtilityModel, params: MarketParams, policy: Policy, o: &Overrides, seed: u64) -> Result<SimConfig, CliError> {
    let mut c = SimConfig::new(model, params, policy)?;
    c.replications = o.reps.unwrap_or(100);
    c.base_seed = o.seed.unwrap_or(seed);
    c.validate()?;
    Ok(c)
}

fn models() -> Result<[(&'static str, UtilityModel); 3], CliError> {
    Ok([
        ("exponential", UtilityModel::exponential(1.0)?),
        ("Pareto(1,2)", UtilityModel::pareto(1.0, 2.0)?),
        ("uniform", UtilityModel::uniform(0.0, 1.0)?),
    ])
}

fn rate_cell(table: &'static str, label: String, reference: f64, s: &ExperimentSummary) -> Cell {
    Cell { table, label, reference, run: s.mean_rate, ci: (!s.ci_degenerate).then_some((s.ci_low, s.ci_high)), absolute: false }
}

fn abandon_cell(table: &'static str, label: String, reference: f64, s: &ExperimentSummary) -> Cell {
    let run = 0.5 * (s.abandon_frac_b + s.abandon_frac_s);
    Cell { table, label, reference, run, ci: None, absolute: true }
}

pub fn reproduce(which: Reproduction, o: &Overrides) -> Result<Outcome, CliError> {
    let sym = MarketParams::symmetric(1.0, 1.0, 1000)?;
    let mut cells = Vec::new();
    let mut notes = Report::default();
    match which {
        Reproduction::Table2 => {
            let refs = [[4833.0, 4833.0, 3462.0], [22_095.0, 22_102.0, 8259.0], [908.4, 946.3, 908.4]];
            let best = [148, 347, 22];
            for (((name, model), refs), best) in models()?.into_iter().zip(refs).zip(best) {
                let theory = population_threshold(&model, &sym)?.threshold.round() as u64;
                let policies = [(format!("z = {theory}"), Policy::PopulationThreshold(theory)), (format!("z = {best}"), Policy::PopulationThreshold(best)), ("greedy".into(), Policy::Greedy)];
                for ((label, policy), reference) in policies.into_iter().zip(refs) {
                    let s = run_experiment(&canonical(model, sym, policy, o, 2024)?)?;
                    cells.push(rate_cell("table2", format!("{name}, {label}: rate"), reference, &s));
                }
            }
        }
        Reproduction::Table3 => {
            let rows = [
                (Policy::PopulationThreshold(148), 4833.0, 0.140, Policy::UtilityThreshold { v_b: 5.6, v_s: 5.6 }, 5732.0, 0.150),
                (Policy::PopulationThreshold(347), 22_102.0, 0.334, Policy::UtilityThreshold { v_b: 42.0, v_s: 42.0 }, 43_750.0, 0.503),
                (Policy::PopulationThreshold(22), 946.3, 0.027, Policy::UtilityThreshold { v_b: 0.96, v_s: 0.96 }, 963.0, 0.021),
            ];
            for ((name, model), (pop, pop_rate, pop_ab, util, util_rate, util_ab)) in models()?.into_iter().zip(rows) {
                for (policy, rate, ab) in [(pop, pop_rate, pop_ab), (util, util_rate, util_ab)] {
                    let s = run_experiment(&canonical(model, sym, policy, o, 2024)?)?;
                    cells.push(rate_cell("table3", format!("{name}, {policy}: rate"), rate, &s));
                    cells.push(abandon_cell("table3", format!("{name}, {policy}: abandonment"), ab, &s));
                }
            }
        }
        Reproduction::Unbalanced => {
            let model = UtilityModel::pareto(1.0, 2.0)?;
            let params = MarketParams::new(2.0, 1.0, 1.0, 1.0, 1000)?;
            let sol = unbalanced_utility_threshold(&model, &params)?;
            cells.push(Cell { table: "unbalanced", label: "predicted threshold".into(), reference: 52.7, run: sol.threshold, ci: None, absolute: true });
            cells.push(Cell { table: "unbalanced", label: "predicted rate".into(), reference: 70_992.0, run: sol.predicted_rate, ci: None, absolute: false });
            let base = canonical(model, params, Policy::UtilityThreshold { v_b: 52.7, v_s: 52.7 }, o, 6060)?;
            let s = run_experiment(&base)?;
            cells.push(rate_cell("unbalanced", "rate at (52.7, 52.7)".into(), 71_010.0, &s));
            let grid: Vec<f64> = (0..=12).map(|i| 49.7 + 0.5 * i as f64).collect();
            for (axis, name, reference) in [(SweepAxis::UtilityBuyer, "v_b", 52.7), (SweepAxis::UtilitySeller, "v_s", 52.3)] {
                let points = threshold_sweep(&base, axis, &grid, true)?;
                let best = sweep_argmax(&points).expect("grid is nonempty");
                cells.push(Cell { table: "unbalanced", label: format!("sweep argmax {name}"), reference, run: points[best].0, ci: None, absolute: true });
                for (v, s) in &points {
                    notes.num(&format!("{name} = {v:.1}"), s.mean_rate, &ci(s));
                }
            }
        }
        Reproduction::Batch => {
            let model = UtilityModel::pareto(1.0, 2.0)?;
            let window = batch_window(&sym, model.alpha())?;
            cells.push(Cell { table: "batch", label: "predicted window".into(), reference: 0.76, run: window.threshold, ci: None, absolute: true });
            cells.push(Cell { table: "batch", label: "upper bound rate".into(), reference: 28_644.0, run: window.predicted_rate, ci: None, absolute: false });
            let base = canonical(model, sym, Policy::BatchAndMatch { delta: 0.75 }, o, 7070)?;
            let grid: Vec<f64> = (0..=6).map(|i| 0.60 + 0.05 * i as f64).collect();
            let points = threshold_sweep(&base, SweepAxis::BatchWindow, &grid, true)?;
            let best = sweep_argmax(&points).expect("grid is nonempty");
            cells.push(Cell { table: "batch", label: "sweep argmax".into(), reference: 0.75, run: points[best].0, ci: None, absolute: true });
            let at = points.iter().find(|(d, _)| (d - 0.75).abs() < 1e-9).map(|(_, s)| s).expect("0.75 is on the grid");
            cells.push(rate_cell("batch", "rate at 0.75".into(), 25_168.0, at));
            let per_cycle = at.mean_matches_per_cycle.unwrap_or(f64::NAN);
            cells.push(Cell { table: "batch", label: "matches per cycle at 0.75".into(), reference: 532.0, run: per_cycle, ci: None, absolute: false });
            for (d, s) in &points {
                notes.num(&format!("window {d:.2}"), s.mean_rate, &ci(s));
            }
        }
    }

    let mut r = Report::default();
    r.heading(&format!("{:<44} {:>12} {:>12} {:>10}", "quantity", "reference", "run", "error"));
    let mut csv = String::from("table,quantity,reference,run,ci_low,ci_high,error,error_kind\n");
    for c in &cells {
        let (err, kind) = if c.absolute { (c.run - c.reference, "absolute") } else { ((c.run - c.reference) / c.reference, "relative") };
        let shown = if c.absolute { format!("{err:+.4}") } else { format!("{:+.2}%", 100.0 * err) };
        let _ = writeln!(r.text, "  {:<42} {:>12} {:>12} {:>10}", c.label, num(c.reference), num(c.run), shown);
        if let Some((lo, hi)) = c.ci {
            let _ = writeln!(r.text, "  {:<42} {:>25}", "", format!("[{}, {}]", num(lo), num(hi)));
        }
        let (lo, hi) = c.ci.map_or((String::new(), String::new()), |(l, h)| (l.to_string(), h.to_string()));
        let _ = writeln!(csv, "{},\"{}\",{},{},{lo},{hi},{err},{kind}", c.table, c.label, c.reference, c.run);
    }
    if !notes.text.is_empty() {
        r.heading("sweep points");
        r.text.push_str(&notes.text);
    }
    Ok(Outcome { report: r.text, csv: Some(csv) })
}
