use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use wallsim::harness::config::ConfigFile;
use wallsim::harness::output::write_report;
use wallsim::harness::{run, Experiment, HarnessError};

/// Run one wallsim experiment and write its tables and manifest.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// One of: prop31, couplings, backpath, midtime, localization,
    /// slowdecorr, product, scaling, tails, simulate.
    experiment: Experiment,
    /// TOML config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace every nonzero replica count of the experiment.
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: `out` from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 or absent lets rayon decide.
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(args: &Args) -> Result<bool, HarnessError> {
    let mut cfg = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if let Some(n) = args.replicas {
        cfg = cfg.with_replicas(args.experiment, n)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let dir = args.out.clone().unwrap_or_else(|| cfg.out.clone());
    let report = run(args.experiment, &cfg)?;
    let written = write_report(&report, &cfg.section(args.experiment), cfg.seed, &dir)?;
    for check in &report.checks {
        println!("{} {}: {}", if check.passed { "PASS" } else { "FAIL" }, check.name, check.detail);
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    for check in report.failures() {
        eprintln!("failed {}: {}", check.name, check.detail);
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(threads) = args.threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
