use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use martrep::harness::{run_to, verify, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(name = "martrep", version, about = "Convergence experiments for discrete martingale representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write report.json and convergence.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory. Defaults to the config's `output` field.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Recompute the exact values of a written report.
    Verify {
        #[arg(long)]
        out: PathBuf,
    },
}

const VIOLATION: u8 = 2;

fn run(
    config: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    replications: Option<usize>,
) -> Result<u8, HarnessError> {
    let mut config = ExperimentConfig::load(&config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(r) = replications {
        config.replications = r;
    }
    let out = out
        .or_else(|| config.output.clone())
        .ok_or_else(|| HarnessError::Config("no output directory: pass --out or set `output`".into()))?;
    let report = run_to(&config, &out)?;
    for l in &report.levels {
        let mc = &l.monte_carlo;
        println!(
            "k={:<5} E<N>_T={:.6e}  E d_J1(Y)={:.4}  E d_J1(int)={:.4}  L1 <Y,X°>={:.4}",
            l.k, l.exact.n_bracket, mc.y_j1.mean, mc.integral_j1.mean, mc.bracket_l1.y_circ.mean
        );
    }
    println!("wrote {}", out.display());
    if report.violations.is_empty() {
        return Ok(0);
    }
    for v in &report.violations {
        eprintln!("violation: {v}");
    }
    Ok(VIOLATION)
}

fn check(out: PathBuf) -> Result<u8, HarnessError> {
    let outcome = verify(&out)?;
    println!("checked {} levels and {} rows", outcome.levels_checked, outcome.rows_checked);
    if outcome.ok() {
        return Ok(0);
    }
    for m in &outcome.mismatches {
        eprintln!("mismatch: {m}");
    }
    Ok(VIOLATION)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run { config, out, seed, replications } => run(config, out, seed, replications),
        Command::Verify { out } => check(out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
