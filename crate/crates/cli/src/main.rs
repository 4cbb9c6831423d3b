use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use swarmkin_cli::config::{apply_overrides, parse_pairs};
use swarmkin_cli::{run_command, ExperimentConfig};

/// Swarm consensus simulations, analytic oracles and reference solvers.
#[derive(Debug, Parser)]
#[command(name = "swarmkin", version)]
struct Args {
    /// simulate, oracle, hierarchy, master or compare
    command: String,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn load(args: &Args) -> Result<ExperimentConfig> {
    let text = match &args.config {
        Some(p) => {
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?
        }
        None => String::new(),
    };
    let mut pairs = parse_pairs(&text)?;
    let mut overrides = args.set.clone();
    overrides.push(format!("command={}", args.command));
    if let Some(s) = args.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(o) = &args.out {
        overrides.push(format!("output_dir={}", o.display()));
    }
    apply_overrides(&mut pairs, &overrides)?;
    Ok(ExperimentConfig::from_pairs(&pairs)?)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match run_command(&cfg) {
        Ok(m) => {
            println!(
                "{} done in {:.2}s; wrote {} files to {}",
                m.command,
                m.wall_clock_seconds,
                m.files.len(),
                cfg.output_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
