use std::path::PathBuf;
use std::process::ExitCode;

use blebsheet_core::{parse_config, run_scenario, Error, ScenarioConfig, ScenarioKind};
use clap::{Parser, Subcommand};

/// Membrane bleb simulations on the unit square.
#[derive(Parser)]
#[command(name = "blebsheet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Sweep peak pressures and bisect the critical one.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare surface functional derivatives with their closed forms.
    VerifyGeometry {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &PathBuf, n: Option<usize>, tau: Option<f64>, workers: Option<usize>) -> Result<ScenarioConfig, Error> {
    let mut config = parse_config(path)?;
    if let Some(n) = n {
        config.n = n;
    }
    if let Some(tau) = tau {
        config.tau = tau;
    }
    if let Some(w) = workers {
        config.workers = w;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let prepared = match cli.command {
        Command::Run { config, out, n, tau, workers } => load(&config, n, tau, workers).map(|c| (c, out)),
        Command::Sweep { config } => load(&config, None, None, None).map(|mut c| {
            c.scenario = ScenarioKind::PressureSweep;
            (c, None)
        }),
        Command::VerifyGeometry { out } => Ok((ScenarioConfig::defaults(ScenarioKind::GeometryVerify), out)),
    };
    let (config, out) = match prepared {
        Ok(v) => v,
        Err(e) => {
            eprintln!("blebsheet: {e}");
            return ExitCode::from(2);
        }
    };
    let out_dir = out.unwrap_or_else(|| config.output_dir.clone());

    match run_scenario(&config, &out_dir) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report.summary).unwrap_or_default());
            if let Some(flag) = report.flag {
                eprintln!("blebsheet: {flag}");
            }
            eprintln!("blebsheet: wrote {} files to {}", report.outputs.len(), report.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("blebsheet: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 1 })
        }
    }
}
