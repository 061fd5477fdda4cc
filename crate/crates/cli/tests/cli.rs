use matchmarket::analytics::MarketParams;
use matchmarket::{Policy, SimConfig, UtilityModel};
use matchmarket_cli::ExperimentSpec;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_matchmarket"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_spec(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = "[model]\nspec = exponential:nu=1\n[market]\nn = 50\n[protocol]\nhorizon = 60\nwarmup = 6\nreplications = 4\nbase_seed = 9\n";

#[test]
fn analyze_exponential() {
    let o = run(&["analyze", "--spec", configs().join("table2_exponential_best.spec").to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    for value in ["144.8", "5552.3", "3757.3", "7485.0", "5.5586"] {
        assert!(text.contains(value), "missing {value} in\n{text}");
    }
    assert!(text.contains("finite-n") && text.contains("limit"));
}

#[test]
fn analyze_pareto_and_unbalanced() {
    let text = stdout(&run(&["analyze", "--spec", configs().join("table3_pareto_utility.spec").to_str().unwrap()]));
    for value in ["333.3", "21573.6", "42.7560", "43756.4", "8790.9", "56049.9", "0.5117", "0.7627"] {
        assert!(text.contains(value), "missing {value} in\n{text}");
    }
    let text = stdout(&run(&["analyze", "--spec", configs().join("unbalanced.spec").to_str().unwrap()]));
    for value in ["52.6617", "70992.1", "0.3648", "0.3606"] {
        assert!(text.contains(value), "missing {value} in\n{text}");
    }
}

#[test]
fn analyze_rejects_policy_without_theory() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "batch.spec", &format!("{SMALL}[policy]\nkind = batch\ndelta = 0.5\n"));
    let o = run(&["analyze", "--spec", &spec]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));
}

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "sim.spec", &format!("{SMALL}[policy]\nkind = population\nz = 10\n"));
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = run(&["simulate", "--spec", &spec, "--out", out.to_str().unwrap(), "--threads", "2"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("utility rate"));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rep_index,seed,utility_rate,abandon_frac_b,abandon_frac_s,matches,mean_B,mean_S");
    assert_eq!(lines.len(), 5);

    let other = dir.path().join("c.csv");
    run(&["simulate", "--spec", &spec, "--out", other.to_str().unwrap(), "--seed", "10"]);
    assert_ne!(text, std::fs::read_to_string(&other).unwrap());
}

#[test]
fn simulate_without_out_prints_csv() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "sim.spec", &format!("{SMALL}[policy]\nkind = greedy\n"));
    let o = run(&["simulate", "--spec", &spec, "--reps", "2"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("replications"));
}

#[test]
fn validation_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let zero = write_spec(&dir, "zero.spec", &format!("{SMALL}[policy]\nkind = greedy\n"));
    assert_eq!(run(&["simulate", "--spec", &zero, "--reps", "0"]).status.code(), Some(2));
    let unknown = write_spec(&dir, "unknown.spec", &format!("{SMALL}[policy]\nkind = greedy\ncolour = red\n"));
    let o = run(&["simulate", "--spec", &unknown]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key 'colour'"));
    assert_eq!(run(&["simulate"]).status.code(), Some(2));
    let empty = write_spec(&dir, "empty.spec", &format!("{SMALL}[sweep]\naxis = population\ngrid = ,\n"));
    assert_eq!(run(&["sweep", "--spec", &empty]).status.code(), Some(2));
}

#[test]
fn unwritable_output_fails_before_running() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "sim.spec", &format!("{SMALL}[policy]\nkind = greedy\n"));
    let out = dir.path().join("missing").join("x.csv");
    let o = run(&["simulate", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_marks_argmax() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "sweep.spec", &format!("{SMALL}[sweep]\naxis = population\ngrid = 0:20:5\n"));
    let out = dir.path().join("sweep.csv");
    let o = run(&["sweep", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "threshold,mean,ci_low,ci_high,argmax");
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[1..].iter().filter(|l| l.ends_with(",1")).count(), 1);

    let single = write_spec(&dir, "single.spec", &format!("{SMALL}[sweep]\naxis = batch\ngrid = 0.5\n"));
    let text = stdout(&run(&["sweep", "--spec", &single]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0.5,") && lines[1].ends_with(",1"));
}

#[test]
fn fluid_trajectories() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("pop.csv");
    let o = run(&["fluid", "--spec", configs().join("fluid_population.spec").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("time,b_bar,s_bar,l\n"));
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[0] - 40.0).abs() < 1e-9);
    assert!((last[1] - 1.0 / 3.0).abs() < 1e-4 && (last[2] - 1.0 / 3.0).abs() < 1e-4);

    let text = stdout(&run(&["fluid", "--spec", configs().join("fluid_batch.spec").to_str().unwrap(), "--out", dir.path().join("b.csv").to_str().unwrap()]));
    assert!(text.contains("0.5323"), "{text}");

    let text = stdout(&run(&["fluid", "--spec", configs().join("fluid_utility.spec").to_str().unwrap(), "--out", dir.path().join("u.csv").to_str().unwrap()]));
    assert!(text.contains("stationary level                             0.5117"), "{text}");
    assert!(text.contains("(0.5117, 0.5117)"), "{text}");
}

#[test]
fn reproduce_table3_with_few_replications() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("t3.csv");
    let o = run(&["reproduce", "table3", "--reps", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 13);
    assert!(stdout(&o).contains("reference"));
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.rsplitn(3, ',').collect();
        let err: f64 = fields[1].parse().unwrap();
        let bound = if fields[0] == "absolute" { 0.02 } else { 0.025 };
        assert!(err.abs() <= bound, "{line}");
    }
}

#[test]
fn checked_in_configs_parse() {
    let mut count = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "spec") {
            ExperimentSpec::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 15);
}

#[test]
fn table_configs_follow_standard_protocol() {
    let model = UtilityModel::pareto(1.0, 2.0).unwrap();
    let params = MarketParams::symmetric(1.0, 1.0, 1000).unwrap();
    let mut expected = SimConfig::new(model, params, Policy::UtilityThreshold { v_b: 42.0, v_s: 42.0 }).unwrap();
    expected.base_seed = 2024;
    let spec = ExperimentSpec::from_file(&configs().join("table3_pareto_utility.spec")).unwrap();
    assert_eq!(spec.sim_config().unwrap(), expected);
}
