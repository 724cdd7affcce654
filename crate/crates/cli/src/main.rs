use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use arcbound_cli::{load_config, run, validate_config, Command, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arcbound", version, about = "Switching structure and minimum-time checks for two-input driftless systems")]
struct Cli {
    /// JSON run configuration; defaults to the Heisenberg fixture.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for the JSON report and CSV traces.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Moving-basis checks for the five frame hypotheses.
    Frames,
    /// Integrate an extremal, decompose it into arcs and classify it.
    Simulate,
    /// Second-order test of six-arc candidates over a t1 sweep.
    SecondOrder,
    /// Compare 5- and 6-arc minimal times on a target grid.
    Oracle,
    /// Look for targets where 5 arcs beat 4.
    Sharpness,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => validate_config(&serde_json::json!({ "system": "heisenberg" }))?,
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = match cli.command {
        Cmd::Frames => Command::Frames,
        Cmd::Simulate => Command::Simulate,
        Cmd::SecondOrder => Command::SecondOrder,
        Cmd::Oracle => Command::Oracle,
        Cmd::Sharpness => Command::Sharpness,
    };
    let outcome = resolve(&cli).and_then(|cfg| run(cmd, &cfg, &cli.out));
    match outcome {
        Ok(o) => {
            println!("{}", o.report.display());
            for f in &o.files {
                println!("{}", f.display());
            }
            if o.violations > 0 {
                eprintln!("{} property violation(s); see {}", o.violations, o.report.display());
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
