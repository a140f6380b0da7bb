//! `gralsp`: synthesize graphs, sample walks, train embeddings and evaluate
//! them.

mod commands;
mod config;
mod files;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgAction, Parser, Subcommand};

use commands::{bench, eval, gradcheck, synth, train, walks};

#[derive(Parser)]
#[command(name = "gralsp", version, about = "Graph embeddings from local structural patterns")]
struct Cli {
    /// Worker threads for walk sampling and evaluation repeats [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Log more (-v info, -vv debug)
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic graph
    Synth(synth::SynthArgs),
    /// Sample walks and write per-node and graph pattern distributions
    Walks(walks::WalksArgs),
    /// Train embeddings
    Train(train::TrainArgs),
    /// Node classification on saved embeddings
    EvalClassify(eval::ClassifyArgs),
    /// Held-out edge prediction, retraining on the reduced graph
    EvalLinkpred(eval::LinkpredArgs),
    /// Project saved embeddings to 2-D with PCA
    Project(eval::ProjectArgs),
    /// Finite-difference check of the training objective's gradient
    Gradcheck(gradcheck::GradcheckArgs),
    /// Time walk sampling and training on growing random graphs
    BenchScaling(bench::BenchArgs),
}

fn run(cli: Cli) -> Result<()> {
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Synth(a) => synth::run(a),
        Command::Walks(a) => walks::run(a),
        Command::Train(a) => train::run(a),
        Command::EvalClassify(a) => eval::run_classify(a),
        Command::EvalLinkpred(a) => eval::run_linkpred(a),
        Command::Project(a) => eval::run_project(a),
        Command::Gradcheck(a) => gradcheck::run(a),
        Command::BenchScaling(a) => bench::run(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
