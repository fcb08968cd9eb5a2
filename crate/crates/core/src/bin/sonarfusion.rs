//! Command-line front end for the sonar mapping pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sonarfusion_core::inference::Strategy;
use sonarfusion_core::mapper::{run_pipeline, Model, PipelineOptions};

#[derive(Parser)]
#[command(name = "sonarfusion", version, about = "Sonar mapping simulator and inference engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario end to end and write maps plus stats.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,

    /// Mapping model to run.
    #[arg(long, value_enum)]
    model: ModelArg,

    /// Output directory for PGM images, stats, and dumps.
    #[arg(long)]
    out: PathBuf,

    /// Inference strategy for the bayes model.
    #[arg(long, value_enum, default_value_t = StrategyArg::Auto)]
    inference: StrategyArg,

    /// Sample budget for the sampling fallback.
    #[arg(long, default_value_t = 200_000)]
    samples: usize,

    /// Override the scenario RNG seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Threshold for an additional binary map; repeatable.
    #[arg(long = "threshold")]
    thresholds: Vec<f64>,

    /// Stats file destination (default: <out>/stats.txt).
    #[arg(long)]
    stats: Option<PathBuf>,

    /// Write the region table to <out>/regions.txt (bayes only).
    #[arg(long)]
    dump_regions: bool,

    /// Write the network structure to <out>/network.txt (bayes only).
    #[arg(long)]
    dump_network: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Bayes,
    Elfes,
    Ds,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Exact,
    Sampling,
    Auto,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let opts = PipelineOptions {
                model: match args.model {
                    ModelArg::Bayes => Model::Bayes,
                    ModelArg::Elfes => Model::Elfes,
                    ModelArg::Ds => Model::Ds,
                },
                strategy: match args.inference {
                    StrategyArg::Exact => Strategy::Exact,
                    StrategyArg::Sampling => Strategy::Sampling,
                    StrategyArg::Auto => Strategy::Auto,
                },
                samples: args.samples,
                seed: args.seed,
                thresholds: args.thresholds,
                out_dir: args.out,
                stats_path: args.stats,
                dump_regions: args.dump_regions,
                dump_network: args.dump_network,
            };
            match run_pipeline(&args.scenario, &opts) {
                Ok(run) => {
                    print!("{}", run.stats.to_key_values());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
