use clap::{Parser, Subcommand};
use matchmarket_cli::commands::{self, Outcome, Overrides, Reproduction};
use matchmarket_cli::{CliError, ExperimentSpec};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Two-sided matching market analytics and simulation.
#[derive(Parser)]
#[command(name = "matchmarket", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment file.
    #[arg(long, global = true)]
    spec: Option<PathBuf>,

    /// Output path; overrides [output] path. Without one, CSV goes to stdout
    /// and the report to stderr.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Base seed; overrides [protocol] base_seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Replications; overrides [protocol] replications.
    #[arg(long, global = true)]
    reps: Option<usize>,

    /// Worker threads for replications (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Print thresholds, predicted rates and fluid points.
    Analyze,
    /// Run the experiment; write per-replication CSV and a summary.
    Simulate,
    /// Run the experiment over a threshold grid.
    Sweep,
    /// Integrate a fluid model; write the trajectory as CSV.
    Fluid,
    /// Run a canonical configuration and compare with reference values.
    Reproduce {
        #[arg(value_enum)]
        which: Reproduction,
    },
}

fn load(cli: &Cli, overrides: &Overrides) -> Result<ExperimentSpec, CliError> {
    let path = cli.spec.as_ref().ok_or_else(|| CliError::Usage("this command needs --spec <path>".into()))?;
    let mut spec = ExperimentSpec::from_file(path)?;
    overrides.apply(&mut spec);
    Ok(spec)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Fails early on an unwritable output path instead of after a long run.
fn check_writable(path: Option<&Path>) -> Result<(), CliError> {
    if let Some(path) = path {
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    }
    let overrides = Overrides { seed: cli.seed, reps: cli.reps };
    let spec = match cli.command {
        Command::Reproduce { .. } => None,
        _ => Some(load(cli, &overrides)?),
    };
    let out = cli.out.clone().or_else(|| spec.as_ref().and_then(|s| s.output.clone()));
    check_writable(out.as_deref())?;

    let outcome: Outcome = match (&cli.command, &spec) {
        (Command::Analyze, Some(s)) => commands::analyze(s)?,
        (Command::Simulate, Some(s)) => commands::simulate(s)?,
        (Command::Sweep, Some(s)) => commands::sweep(s)?,
        (Command::Fluid, Some(s)) => commands::fluid(s)?,
        (Command::Reproduce { which }, _) => commands::reproduce(*which, &overrides)?,
        _ => unreachable!("spec is loaded for every other command"),
    };

    let stdout = std::io::stdout();
    let mut stdout = stdout.lock();
    let io_err = |source| CliError::Io { path: PathBuf::from("<stdout>"), source };
    match (outcome.csv, out) {
        (Some(csv), Some(path)) => {
            write_file(&path, &csv)?;
            stdout.write_all(outcome.report.as_bytes()).map_err(io_err)?;
        }
        (Some(csv), None) => {
            stdout.write_all(csv.as_bytes()).map_err(io_err)?;
            eprint!("{}", outcome.report);
        }
        (None, Some(path)) => write_file(&path, &outcome.report)?,
        (None, None) => stdout.write_all(outcome.report.as_bytes()).map_err(io_err)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
