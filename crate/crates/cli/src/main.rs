//! Scenario-driven command line: validate scenario files and run simulations,
//! writing CSV traces, event logs, and JSON metric/gain summaries.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use etcsim::heterogeneous::DegreeMode;
use etcsim::scenario::{Scenario, ScenarioError};

#[derive(Parser)]
#[command(
    name = "etcsim",
    version,
    about = "Event-triggered consensus simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write states.csv, events.csv, metrics.json, gains.json.
    Run(RunArgs),
    /// Check a scenario against the modeling assumptions and report each check.
    Validate { scenario: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    /// Output directory for the result files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the random seed of the scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the integration step (seconds).
    #[arg(long)]
    step: Option<f64>,
    /// Override the simulation horizon (seconds).
    #[arg(long)]
    horizon: Option<f64>,
    /// Degree convention of the observer trigger.
    #[arg(long, value_parser = parse_degree_mode)]
    degree_mode: Option<DegreeMode>,
    /// Validate only; skip the simulation.
    #[arg(long)]
    validate_only: bool,
}

fn parse_degree_mode(s: &str) -> Result<DegreeMode, String> {
    match s {
        "literal" => Ok(DegreeMode::Literal),
        "inclusive" => Ok(DegreeMode::Inclusive),
        other => Err(format!("expected 'literal' or 'inclusive', got '{other}'")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { scenario } => validate(&scenario),
        Command::Run(args) => run(args),
    }
}

fn validate(path: &PathBuf) -> ExitCode {
    let scenario = match Scenario::from_path(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let report = scenario.validate();
    print!("{}", report.render());
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn run(args: RunArgs) -> ExitCode {
    let mut scenario = match Scenario::from_path(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        scenario.set_seed(seed);
    }
    if let Some(step) = args.step {
        scenario.set_step(step);
    }
    if let Some(horizon) = args.horizon {
        scenario.set_horizon(horizon);
    }
    if let Some(mode) = args.degree_mode {
        scenario.set_degree_mode(mode);
    }

    let report = scenario.validate();
    print!("{}", report.render());
    if !report.passed {
        return ExitCode::from(2);
    }
    if args.validate_only {
        return ExitCode::SUCCESS;
    }

    match scenario.run_to_dir(&args.out) {
        Ok(artifacts) => {
            for f in &artifacts.files {
                println!("wrote {}", f.display());
            }
            let m = &artifacts.metrics;
            println!(
                "final error {:.6e}, {} events over {} steps (ratio {:.4})",
                m.final_error,
                m.event_count.iter().sum::<usize>(),
                m.grid_steps,
                m.communication_ratio
            );
            if let Some(z) = &artifacts.zeno {
                println!(
                    "inter-event bound: {} asserted windows, {} violations",
                    z.asserted_windows, z.violations
                );
            }
            ExitCode::SUCCESS
        }
        Err(ScenarioError::Engine(e)) => {
            eprintln!("simulation failed: {e}");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
