use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rootflow_lab::{run_suite, ExperimentSpec, Kind, LabError};

/// Run one rootflow experiment and write its artifacts.
///
/// Exit status: 0 all checks pass, 1 a check failed, 2 usage or
/// configuration error, 3 numerical failure. ROOTFLOW_THREADS caps the
/// worker threads.
#[derive(Debug, Parser)]
#[command(name = "rootflow", version)]
struct Cli {
    kind: Kind,
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: runs/<kind>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid size.
    #[arg(long = "M")]
    grid: Option<usize>,
    /// Comma-separated list of N (2N particles each).
    #[arg(long = "N", value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Slope floor.
    #[arg(long)]
    m: Option<f64>,
    /// Final time.
    #[arg(long = "T")]
    final_time: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// particle-run: draw the initial roots i.i.d. from the measure.
    #[arg(long)]
    iid_sample: bool,
}

fn load_spec(cli: &Cli) -> Result<ExperimentSpec, LabError> {
    let mut spec = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| LabError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let spec = ExperimentSpec::from_json(&text)?;
            if spec.kind != cli.kind {
                return Err(LabError::Config(format!(
                    "config is for {} but the command line asks for {}",
                    spec.kind.name(),
                    cli.kind.name()
                )));
            }
            spec
        }
        None => ExperimentSpec::new(cli.kind),
    };
    if cli.seed.is_some() {
        spec.seed = cli.seed;
    }
    if cli.grid.is_some() {
        spec.grid_size = cli.grid;
    }
    if cli.n.is_some() {
        spec.n_list = cli.n.clone();
    }
    if cli.m.is_some() {
        spec.m = cli.m;
    }
    if cli.final_time.is_some() {
        spec.final_time = cli.final_time;
    }
    if cli.trials.is_some() {
        spec.trials = cli.trials;
    }
    spec.iid_sample |= cli.iid_sample;
    Ok(spec)
}

fn thread_pool() -> Result<rayon::ThreadPool, LabError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("ROOTFLOW_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| LabError::Config(format!("ROOTFLOW_THREADS={v:?} is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| LabError::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> Result<bool, LabError> {
        let spec = load_spec(&cli)?;
        let out = cli
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(spec.kind.name()));
        let summary = thread_pool()?.install(|| run_suite(&spec, &out))?;
        for c in &summary.checks {
            println!(
                "{} {}: {:e} ({})",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.limit
            );
        }
        println!("artifacts in {}", out.display());
        Ok(summary.passed)
    };
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("rootflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
