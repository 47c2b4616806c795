use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use naturerisk::io::{run, Command, RunConfig};

/// Nature-related financial risk engine.
#[derive(Debug, Parser)]
#[command(name = "naturerisk", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Input document; repeat for several.
    #[arg(long = "input")]
    input: Vec<PathBuf>,
    /// Scenario document.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory. Nothing is written outside it.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Steps to project; defaults to the scenario or series length.
    #[arg(long)]
    horizon: Option<usize>,
    /// Worker threads for parallel sections.
    #[arg(long)]
    threads: Option<usize>,
    /// Cross-check exact scores against brute-force enumeration.
    #[arg(long)]
    oracle: bool,
    /// Use the plain sigmoid in the water E-score.
    #[arg(long)]
    strict_paper_sigmoid: bool,
    /// Posterior draws; enables the sampled water outputs.
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = RunConfig {
        command: cli.command,
        inputs: cli.input,
        scenario: cli.scenario,
        output: cli.output,
        seed: cli.seed,
        horizon: cli.horizon,
        threads: cli.threads,
        oracle: cli.oracle,
        strict_paper_sigmoid: cli.strict_paper_sigmoid,
        draws: cli.draws,
        burn_in: cli.burn_in,
    };
    let outcome = run(&cfg);
    for line in &outcome.diagnostics {
        eprintln!("{line}");
    }
    for f in &outcome.files {
        println!("{}", cfg.output.join(f).display());
    }
    ExitCode::from(outcome.exit_code)
}
