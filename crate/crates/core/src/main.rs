//! Command-line front end: validate scenario files and run experiments.

use anyhow::Context;
use clap::{Parser, Subcommand};
use isac_core::harness::{emit, load_scenario, run_experiment, HarnessError, RunMetadata, EXPERIMENTS};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "isac", version, about = "OAM ISAC anti-jamming simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment, or every experiment when none is named.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        experiment: Option<String>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn init_threads() -> anyhow::Result<usize> {
    if let Ok(v) = std::env::var("ISAC_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("ISAC_THREADS must be a positive integer, got `{v}`"))?;
        anyhow::ensure!(n > 0, "ISAC_THREADS must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(rayon::current_num_threads())
}

fn warn_unknown(fields: &[String]) {
    for f in fields {
        eprintln!("warning: ignoring unknown scenario field `{f}`");
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Validate { scenario } => {
            let loaded = load_scenario(&scenario)?;
            warn_unknown(&loaded.unknown_fields);
            println!("{}: ok", scenario.display());
            Ok(())
        }
        Command::Run {
            scenario,
            out,
            experiment,
            seed,
        } => {
            let loaded = load_scenario(&scenario)?;
            warn_unknown(&loaded.unknown_fields);
            let mut s = loaded.scenario;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let ids: Vec<String> = match experiment.or_else(|| s.experiment.clone()) {
                Some(id) => vec![id],
                None => EXPERIMENTS.iter().map(|e| e.to_string()).collect(),
            };
            let threads = rayon::current_num_threads();
            for id in ids {
                let start = Instant::now();
                let bundle = run_experiment(&s, &id)?;
                let meta = RunMetadata {
                    experiment: bundle.experiment.clone(),
                    seed: s.seed,
                    version: env!("CARGO_PKG_VERSION").into(),
                    threads,
                    wall_time_s: start.elapsed().as_secs_f64(),
                    unknown_fields: loaded.unknown_fields.clone(),
                };
                let manifest = emit(&bundle, &meta, &out)?;
                println!(
                    "{}: {} files in {:.1} s -> {}",
                    bundle.experiment,
                    manifest.files.len(),
                    meta.wall_time_s,
                    out.join(&bundle.experiment).display()
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
