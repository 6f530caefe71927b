use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use trustnet::{run_sweep, run_to_dir, SimConfig, SimError};

#[derive(Parser)]
#[command(
    name = "trustnet",
    version,
    about = "Discrete-time simulator of trust-aware, privacy-preserving search in unstructured P2P overlays",
    after_help = "Any configuration key can be overridden with `--<key> <value>` after the named options, e.g.\n  trustnet simulate --config configs/paper.conf --out out/ --peers 1000 --generations 50"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write metrics.csv, lcc.csv and census.csv
    Simulate {
        /// Flat key = value configuration file
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
        /// Trailing `--key value` configuration overrides
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Run one simulation per value of a varied key, writing suffixed CSVs
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sweep specification: key=v1,v2,...
        #[arg(long)]
        vary: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, SimError> {
    let mut pairs = Vec::new();
    let mut it = raw.iter();
    while let Some(token) = it.next() {
        let key = token
            .strip_prefix("--")
            .ok_or_else(|| SimError::config(token.clone(), "override keys must start with `--`"))?;
        let value = it
            .next()
            .ok_or_else(|| SimError::config(key.to_string(), "override is missing its value"))?;
        pairs.push((key.to_string(), value.clone()));
    }
    Ok(pairs)
}

fn run(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Simulate { config, out, overrides } => {
            let pairs = parse_overrides(&overrides)?;
            let cfg = SimConfig::load(config.as_deref(), &pairs)?;
            let output = run_to_dir(cfg, &out, "")?;
            if !output.audit_violations.is_empty() {
                for v in &output.audit_violations {
                    eprintln!("audit violation: {v}");
                }
                return Err(SimError::Protocol("graph audit failed".into()));
            }
            eprintln!(
                "simulated {} generations; wrote {}",
                output.reports.len(),
                out.join("metrics.csv").display()
            );
            Ok(())
        }
        Command::Sweep { config, vary, out, overrides } => {
            let pairs = parse_overrides(&overrides)?;
            let (key, values) = vary
                .split_once('=')
                .ok_or_else(|| SimError::config("vary", "expected key=v1,v2,..."))?;
            let values: Vec<String> = values
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(str::to_string)
                .collect();
            let written = run_sweep(config.as_deref(), &pairs, key.trim(), &values, &out)?;
            for path in &written {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
