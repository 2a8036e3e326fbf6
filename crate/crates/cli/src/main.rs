use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use mpgas_cli::{experiment, load_target, presets, resolve_output_dir};

#[derive(Parser)]
#[command(
    name = "mpgas",
    version,
    about = "Marginalized particle Gibbs experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sampler in a config file or preset and write the artifacts.
    Run {
        /// Path to a JSON config, or a preset name.
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Set a config key, e.g. `sampler.iterations=500` or `runs.0.particles=50`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Write the simulated observations and states of a config.
    Simulate {
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List the bundled presets.
    ListPresets,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            chains,
            out,
            mut overrides,
        } => {
            if let Some(s) = seed {
                overrides.push(format!("sampler.seed={s}"));
            }
            if let Some(k) = chains {
                overrides.push(format!("chains={k}"));
            }
            let mut cfg = load_target(&config, &overrides)?;
            let dir = resolve_output_dir(&cfg, out.as_deref());
            cfg.output.dir = Some(dir.clone());
            let res = experiment::run_experiment(&cfg)?;
            experiment::write_outputs(&res, &dir)?;
            for r in &res.runs {
                let secs: f64 = r.chains.iter().map(|c| c.wall_seconds).sum();
                eprintln!("{}: {} chain(s), {secs:.1}s", r.label, r.chains.len());
            }
            println!("{}", dir.display());
        }
        Command::Simulate {
            config,
            out,
            overrides,
        } => {
            let cfg = load_target(&config, &overrides)?;
            let dir = resolve_output_dir(&cfg, out.as_deref());
            experiment::write_simulation(&cfg, &dir)?;
            println!("{}", dir.display());
        }
        Command::ListPresets => {
            for p in presets::PRESETS {
                println!("{:<15} {}", p.name, presets::describe(p)?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
