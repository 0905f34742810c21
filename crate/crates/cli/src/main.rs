use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bft_minmax::verifier::{CheckRecord, CheckStatus};
use bft_minmax_cli::generate;
use bft_minmax_cli::pipeline::{self, CliError, RunConfig, SweepSpec};
use bft_minmax_cli::report::atomic_write;
use bft_minmax_cli::scenario::Stage;

#[derive(Parser)]
#[command(
    name = "bftmm",
    version,
    about = "Fault-tolerant min-max optimization: run scenarios and verify the stated bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its report
    Run(RunArgs),
    /// Generate a random scenario file from a template
    Generate(GenerateArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario TOML file
    scenario: PathBuf,
    /// Directory for the report and CSV files
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the stages to run, comma separated
    #[arg(long, value_delimiter = ',')]
    stages: Option<Vec<Stage>>,
    /// Override the exact grid resolution, in points per axis
    #[arg(long)]
    resolution: Option<usize>,
    /// Override the refinement epsilon
    #[arg(long)]
    epsilon: Option<f64>,
    /// Sweep the refinement epsilon: epsilon=START:END:STEP
    #[arg(long)]
    sweep: Option<SweepSpec>,
    /// Omit the timestamp so reruns produce byte-identical reports
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(clap::Args)]
struct GenerateArgs {
    /// Seed for the scenario generator
    #[arg(long)]
    seed: u64,
    /// Template name, for example cones-1d or mixed-2d
    #[arg(long)]
    template: String,
    /// Output file; defaults to the scenario name in the working directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Generate(args) => generate_scenario(args),
    }
}

fn run(args: RunArgs) -> ExitCode {
    let config = RunConfig {
        scenario_path: args.scenario,
        out_dir: args.out,
        stages: args.stages,
        resolution: args.resolution,
        epsilon: args.epsilon,
        sweep: args.sweep,
        no_timestamp: args.no_timestamp,
    };
    match pipeline::run(&config) {
        Ok(outcome) => {
            for warning in &outcome.warnings {
                eprintln!("warning: {warning}");
            }
            for record in &outcome.report.checks {
                println!("{}", check_line(record));
            }
            let report = &outcome.report;
            println!(
                "{}: {} passed, {} failed, {} inconclusive, {} skipped",
                report.scenario,
                report.checks_passed,
                report.checks_failed,
                report.checks_inconclusive,
                report.checks_skipped
            );
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
            if report.all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(error) => report_error(error),
    }
}

fn check_line(record: &CheckRecord) -> String {
    let status = match record.status {
        CheckStatus::Pass => "pass",
        CheckStatus::Fail => "FAIL",
        CheckStatus::Inconclusive => "inconclusive",
        CheckStatus::Skipped => "skipped",
    };
    match record.status {
        CheckStatus::Skipped | CheckStatus::Inconclusive => {
            let note = record.note.as_deref().unwrap_or("no detail recorded");
            format!("[check] {}: {status} ({note})", record.name)
        }
        _ => format!(
            "[check] {}: {status} (lhs={}, rhs={}, tol={}, gap={})",
            record.name, record.lhs, record.rhs, record.tolerance, record.gap
        ),
    }
}

fn generate_scenario(args: GenerateArgs) -> ExitCode {
    let result = (|| -> Result<PathBuf, CliError> {
        let scenario = generate::generate(args.seed, &args.template)?;
        let path = args
            .out
            .unwrap_or_else(|| PathBuf::from(format!("{}.toml", scenario.name)));
        let text = scenario.to_toml()?;
        atomic_write(&path, text.as_bytes()).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    })();
    match result {
        Ok(path) => {
            println!("wrote {}", path.display());
            ExitCode::SUCCESS
        }
        Err(error) => report_error(error),
    }
}

fn report_error(error: CliError) -> ExitCode {
    eprintln!("error: {error}");
    ExitCode::from(error.exit_code())
}
