use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hicrit::scenario::{execute, ScenarioConfig, ScenarioKind};

/// Numerical checks for weighted critical problems with concentrating solutions.
#[derive(Parser)]
#[command(name = "hicrit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a TOML file
    Run {
        config: PathBuf,
        /// output directory, overriding the config and HICRIT_OUT_DIR
        #[arg(long)]
        out: Option<PathBuf>,
        /// print every check, not only failures
        #[arg(long, short)]
        verbose: bool,
    },
    /// List the scenario kinds
    ListScenarios,
    /// Print a complete default configuration
    PrintDefaults {
        #[arg(default_value = "identities")]
        kind: String,
    },
}

fn run(config: PathBuf, out: Option<PathBuf>, verbose: bool) -> Result<bool> {
    let config = ScenarioConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
    let dir = out.unwrap_or_else(|| config.out_dir());
    let (report, written) = execute(&config, &dir)?;
    for check in &report.checks {
        if verbose || !check.pass {
            let status = if check.pass { "ok  " } else { "FAIL" };
            let detail = match (&check.error, check.residual, check.tolerance) {
                (Some(e), _, _) => format!("error: {e}"),
                (None, Some(r), Some(t)) => format!("residual {r:.3e} (tol {t:.1e})"),
                _ => String::new(),
            };
            println!("{status} {} {detail}", check.name);
        }
    }
    let failed = report.failures().count();
    println!(
        "{}: {} checks, {} failed -> {}",
        config.name,
        report.checks.len(),
        failed,
        if report.pass { "PASS" } else { "FAIL" }
    );
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out, verbose } => run(config, out, verbose),
        Command::ListScenarios => {
            for kind in ScenarioKind::ALL {
                println!("{:<16} {}", kind.as_str(), kind.describe());
            }
            Ok(true)
        }
        Command::PrintDefaults { kind } => ScenarioKind::parse(&kind)
            .and_then(|k| ScenarioConfig::defaults(k).to_toml())
            .map(|text| {
                print!("{text}");
                true
            })
            .map_err(Into::into),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
