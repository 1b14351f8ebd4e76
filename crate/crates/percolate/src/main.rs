//! `percolate`: file-driven continuum-percolation experiments.
//!
//! `percolate run <config>` executes the experiment described by a flat
//! key=value config file and writes its reports; `percolate validate
//! <config>` performs the same resolution and checks without sampling
//! and echoes the effective configuration.
//!
//! Exit codes: 0 success; 2 for data-dependent estimator outcomes
//! (threshold bracketing failure, undefined giant cluster); 1 for every
//! other error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use percolate::config::{load_config, Overrides};
use percolate::runner;

#[derive(Parser)]
#[command(
    name = "percolate",
    version,
    about = "Poisson Boolean continuum percolation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to a flat key=value config file.
    config: PathBuf,

    /// Write outputs here instead of the config's output.dir.
    #[arg(long)]
    output_dir: Option<PathBuf>,

    /// Worker threads for trial parallelism (default: machine cores).
    #[arg(long)]
    threads: Option<usize>,

    /// Replace the config's seed (recorded in the manifest).
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment and write its report files.
    Run(CommonArgs),
    /// Check the config and print the resolved settings without sampling.
    Validate(CommonArgs),
}

fn overrides_of(args: &CommonArgs) -> Overrides {
    Overrides {
        output_dir: args.output_dir.clone(),
        threads: args.threads,
        seed: args.seed_override,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Validate(args) => validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(args: &CommonArgs) -> percolate::Result<()> {
    let config = load_config(&args.config, &overrides_of(args))?;
    if config.threads > 0 {
        // Ignore failure: the global pool can only be set once, which
        // matters for tests that call run twice in one process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global();
    }
    let output = runner::execute(&config)?;
    println!("{}", output.summary);
    for file in &output.files {
        println!("wrote {}", file.display());
    }
    Ok(())
}

fn validate(args: &CommonArgs) -> percolate::Result<()> {
    let config = load_config(&args.config, &overrides_of(args))?;
    print!("{}", runner::validate_text(&config));
    Ok(())
}
