//! Flat `key = value` experiment files with `[section]` headers.
//!
//! ```text
//! [model]
//! spec = pareto:c=1,beta=2
//! [market]
//! n = 1000
//! [policy]
//! kind = utility
//! v = 42.0
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Unknown sections,
//! unknown keys and repeated keys are errors.

use crate::error::CliError;
use matchmarket::analytics::MarketParams;
use matchmarket::sim::SweepAxis;
use matchmarket::{Policy, SimConfig, UtilityModel};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

const SECTIONS: &[(&str, &[&str])] = &[
    ("model", &["spec"]),
    ("market", &["n", "lambda", "eta", "lambda_b", "lambda_s", "eta_b", "eta_s"]),
    ("policy", &["kind", "z", "v", "v_b", "v_s", "delta"]),
    ("protocol", &["horizon", "warmup", "replications", "base_seed", "initial_buyers", "initial_sellers"]),
    ("sweep", &["axis", "grid", "common_random_numbers"]),
    ("output", &["path"]),
    ("fluid", &["kind", "threshold", "v_b", "v_s", "b0", "s0", "t_end", "dt", "cycles", "sample_every"]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub common_random_numbers: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluidKind {
    Population { z: f64 },
    /// Normalized threshold; `None` means arrivals never match.
    Utility { v: Option<f64> },
    Unbalanced { v_b: Option<f64>, v_s: Option<f64> },
    Batch { delta: f64, cycles: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidSpec {
    pub kind: FluidKind,
    pub b0: f64,
    pub s0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub sample_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub model: UtilityModel,
    pub params: MarketParams,
    pub policy: Option<Policy>,
    pub horizon: f64,
    pub warmup: f64,
    pub replications: usize,
    pub base_seed: u64,
    pub initial: Option<(u64, u64)>,
    pub sweep: Option<SweepSpec>,
    pub output: Option<PathBuf>,
    pub fluid: Option<FluidSpec>,
}

/// Raw entries: (section, key) → (line number, value).
type Entries = BTreeMap<(String, String), (usize, String)>;

struct Fields {
    entries: Entries,
}

impl Fields {
    fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = Entries::new();
        let mut section: Option<&'static str> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                section = Some(
                    SECTIONS
                        .iter()
                        .find(|(s, _)| *s == name)
                        .map(|(s, _)| *s)
                        .ok_or_else(|| CliError::spec(line_no, format!("unknown section [{name}]")))?,
                );
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| CliError::spec(line_no, format!("expected key = value, got '{line}'")))?;
            let key = key.trim();
            let sec = section.ok_or_else(|| CliError::spec(line_no, format!("key '{key}' appears before any section")))?;
            let allowed = SECTIONS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(CliError::spec(line_no, format!("unknown key '{key}' in [{sec}]")));
            }
            let slot = (sec.to_string(), key.to_string());
            if let Some((first, _)) = entries.get(&slot) {
                return Err(CliError::spec(line_no, format!("[{sec}] {key} already set on line {first}")));
            }
            entries.insert(slot, (line_no, value.trim().to_string()));
        }
        Ok(Fields { entries })
    }

    fn raw(&self, sec: &str, key: &str) -> Option<&(usize, String)> {
        self.entries.get(&(sec.to_string(), key.to_string()))
    }

    fn has_section(&self, sec: &str) -> bool {
        self.entries.keys().any(|(s, _)| s == sec)
    }

    fn get<T: std::str::FromStr>(&self, sec: &str, key: &str) -> Result<Option<T>, CliError> {
        match self.raw(sec, key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::spec(*line, format!("cannot parse [{sec}] {key} = '{v}'"))),
        }
    }

    fn require<T: std::str::FromStr>(&self, sec: &str, key: &str) -> Result<T, CliError> {
        self.get(sec, key)?.ok_or_else(|| CliError::spec(0, format!("missing [{sec}] {key}")))
    }

    fn line(&self, sec: &str, key: &str) -> usize {
        self.raw(sec, key).map_or(0, |(l, _)| *l)
    }
}

/// `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let number = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("bad grid value '{}'", s.trim()));
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
            if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
                return Err(format!("grid range needs start ≤ stop and step > 0, got '{text}'"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            // rounding keeps decimal steps such as 0.05 on their printed values
            (0..=count).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect()
        }
        [list] => list.split(',').filter(|s| !s.trim().is_empty()).map(number).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(format!("grid must be start:stop:step or a comma list, got '{text}'")),
    };
    if grid.is_empty() {
        return Err("sweep grid is empty".into());
    }
    Ok(grid)
}

fn parse_axis(text: &str) -> Option<SweepAxis> {
    Some(match text {
        "population" => SweepAxis::Population,
        "utility" => SweepAxis::UtilityBoth,
        "utility_b" => SweepAxis::UtilityBuyer,
        "utility_s" => SweepAxis::UtilitySeller,
        "batch" => SweepAxis::BatchWindow,
        _ => return None,
    })
}

fn parse_cutoff(text: &str) -> Result<Option<f64>, ()> {
    if text == "never" {
        Ok(None)
    } else {
        text.parse().map(Some).map_err(|_| ())
    }
}

impl ExperimentSpec {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let f = Fields::parse(text)?;

        let model_text: String = f.require("model", "spec")?;
        let model: UtilityModel = model_text.parse().map_err(|e| CliError::spec(f.line("model", "spec"), e))?;

        let n: u64 = f.require("market", "n")?;
        let lambda: f64 = f.get("market", "lambda")?.unwrap_or(1.0);
        let eta: f64 = f.get("market", "eta")?.unwrap_or(1.0);
        let params = MarketParams::new(
            f.get("market", "lambda_b")?.unwrap_or(lambda),
            f.get("market", "lambda_s")?.unwrap_or(lambda),
            f.get("market", "eta_b")?.unwrap_or(eta),
            f.get("market", "eta_s")?.unwrap_or(eta),
            n,
        )
        .map_err(|e| CliError::spec(f.line("market", "n"), e))?;

        let policy = if f.has_section("policy") { Some(parse_policy(&f)?) } else { None };

        let initial = match (f.get::<u64>("protocol", "initial_buyers")?, f.get::<u64>("protocol", "initial_sellers")?) {
            (None, None) => None,
            (b, s) => Some((b.unwrap_or(n), s.unwrap_or(n))),
        };

        let sweep = if f.has_section("sweep") {
            let axis_text: String = f.require("sweep", "axis")?;
            let axis = parse_axis(&axis_text)
                .ok_or_else(|| CliError::spec(f.line("sweep", "axis"), format!("unknown sweep axis '{axis_text}'")))?;
            let grid_text: String = f.require("sweep", "grid")?;
            let grid = parse_grid(&grid_text).map_err(|e| CliError::spec(f.line("sweep", "grid"), e))?;
            Some(SweepSpec { axis, grid, common_random_numbers: f.get("sweep", "common_random_numbers")?.unwrap_or(true) })
        } else {
            None
        };

        let fluid = if f.has_section("fluid") { Some(parse_fluid(&f)?) } else { None };

        let spec = ExperimentSpec {
            model,
            params,
            policy,
            horizon: f.get("protocol", "horizon")?.unwrap_or(1500.0),
            warmup: f.get("protocol", "warmup")?.unwrap_or(150.0),
            replications: f.get("protocol", "replications")?.unwrap_or(100),
            base_seed: f.get("protocol", "base_seed")?.unwrap_or(0),
            initial,
            sweep,
            output: f.get::<String>("output", "path")?.map(PathBuf::from),
            fluid,
        };
        if spec.policy.is_some() {
            spec.sim_config()?;
        }
        Ok(spec)
    }

    /// Base policy for a sweep when `[policy]` is absent: the axis at its first grid value.
    pub fn sweep_base_policy(&self) -> Result<Policy, CliError> {
        if let Some(p) = self.policy {
            return Ok(p);
        }
        let sweep = self.sweep.as_ref().ok_or_else(|| CliError::spec(0, "missing [sweep] section"))?;
        Ok(sweep.axis.apply(Policy::Greedy, sweep.grid[0])?)
    }

    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        let policy = self.policy.ok_or_else(|| CliError::spec(0, "missing [policy] section"))?;
        self.sim_config_with(policy)
    }

    pub fn sim_config_with(&self, policy: Policy) -> Result<SimConfig, CliError> {
        let mut c = SimConfig::new(self.model, self.params, policy)?;
        c.horizon = self.horizon;
        c.warmup = self.warmup;
        c.replications = self.replications;
        c.base_seed = self.base_seed;
        if let Some((b, s)) = self.initial {
            c.initial_buyers = b;
            c.initial_sellers = s;
        }
        c.validate()?;
        Ok(c)
    }
}

fn parse_policy(f: &Fields) -> Result<Policy, CliError> {
    let kind: String = f.require("policy", "kind")?;
    let line = f.line("policy", "kind");
    let allowed: &[&str] = match kind.as_str() {
        "greedy" => &[],
        "population" => &["z"],
        "utility" => &["v", "v_b", "v_s"],
        "batch" => &["delta"],
        other => return Err(CliError::spec(line, format!("unknown policy kind '{other}'"))),
    };
    for key in ["z", "v", "v_b", "v_s", "delta"] {
        if !allowed.contains(&key) && f.raw("policy", key).is_some() {
            return Err(CliError::spec(f.line("policy", key), format!("key '{key}' does not apply to a {kind} policy")));
        }
    }
    Ok(match kind.as_str() {
        "greedy" => Policy::Greedy,
        "population" => Policy::PopulationThreshold(f.require("policy", "z")?),
        "utility" => {
            let v: Option<f64> = f.get("policy", "v")?;
            let v_b = f.get("policy", "v_b")?.or(v);
            let v_s = f.get("policy", "v_s")?.or(v);
            if v.is_some() && (f.raw("policy", "v_b").is_some() || f.raw("policy", "v_s").is_some()) {
                return Err(CliError::spec(f.line("policy", "v"), "give either v or v_b/v_s, not both"));
            }
            match (v_b, v_s) {
                (Some(v_b), Some(v_s)) => Policy::UtilityThreshold { v_b, v_s },
                _ => return Err(CliError::spec(line, "utility policy needs v, or both v_b and v_s")),
            }
        }
        _ => Policy::BatchAndMatch { delta: f.require("policy", "delta")? },
    })
}

fn parse_fluid(f: &Fields) -> Result<FluidSpec, CliError> {
    let kind: String = f.require("fluid", "kind")?;
    let cutoff = |key: &str| -> Result<Option<f64>, CliError> {
        let text: String = f.require("fluid", key)?;
        parse_cutoff(&text).map_err(|_| CliError::spec(f.line("fluid", key), format!("cannot parse [fluid] {key} = '{text}'")))
    };
    let kind = match kind.as_str() {
        "population" => FluidKind::Population { z: f.require("fluid", "threshold")? },
        "utility" => FluidKind::Utility { v: cutoff("threshold")? },
        "unbalanced" => FluidKind::Unbalanced { v_b: cutoff("v_b")?, v_s: cutoff("v_s")? },
        "batch" => FluidKind::Batch { delta: f.require("fluid", "threshold")?, cycles: f.get("fluid", "cycles")?.unwrap_or(20) },
        other => return Err(CliError::spec(f.line("fluid", "kind"), format!("unknown fluid kind '{other}'"))),
    };
    let sample_every: usize = f.get("fluid", "sample_every")?.unwrap_or(1);
    if sample_every == 0 {
        return Err(CliError::spec(f.line("fluid", "sample_every"), "sample_every must be at least 1"));
    }
    Ok(FluidSpec {
        kind,
        b0: f.get("fluid", "b0")?.unwrap_or(0.0),
        s0: f.get("fluid", "s0")?.unwrap_or(0.0),
        t_end: f.get("fluid", "t_end")?.unwrap_or(40.0),
        dt: f.get("fluid", "dt")?.unwrap_or(1e-3),
        sample_every,
    })
}
