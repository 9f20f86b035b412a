use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod analyze;
mod manifest;
mod mitigate;
mod simulate;

/// FMCW interference simulation and adaptive-noise-canceller mitigation.
#[derive(Parser)]
#[command(name = "radar-anc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one CPI from a scenario file (or replay a run manifest).
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Run directory to create or overwrite.
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the canceller over a simulated capture and emit spectra, maps and SIR.
    Mitigate {
        /// Run directory written by `simulate`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100.0)]
        gamma: f64,
        #[arg(long, default_value_t = 8)]
        filter_len: usize,
        /// `auto` or a power level on sum |ref|^2.
        #[arg(long, default_value = "auto")]
        threshold: String,
        #[arg(long, default_value = "rect")]
        window: String,
        /// Comma-separated gammas; replaces --gamma.
        #[arg(long, value_delimiter = ',')]
        sweep_gamma: Option<Vec<f64>>,
    },
    /// Summarize a mitigated run directory.
    Analyze { run_dir: PathBuf },
}

/// Bad arguments, missing inputs or invalid configuration (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<radar_anc::Error>() {
            if matches!(
                e,
                radar_anc::Error::Config(_) | radar_anc::Error::Scenario(_) | radar_anc::Error::Misuse(_)
            ) {
                return 1;
            }
        }
    }
    2
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("RADAR_ANC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("RADAR_ANC_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    match cli.command {
        Command::Simulate { scenario, out, seed } => simulate::run(&scenario, &out, seed),
        Command::Mitigate {
            out,
            gamma,
            filter_len,
            threshold,
            window,
            sweep_gamma,
        } => {
            let opts = mitigate::Options {
                gammas: sweep_gamma.unwrap_or_else(|| vec![gamma]),
                filter_len,
                threshold: threshold.parse()?,
                window: window.parse().map_err(|e| usage(format!("--window: {e}")))?,
            };
            mitigate::run(&out, &opts)
        }
        Command::Analyze { run_dir } => analyze::run(&run_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
