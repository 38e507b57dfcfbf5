//! `declip`: command-line workflows over the decoupled projector library.

mod config;
mod data_cmds;
mod model;
mod model_cmds;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::UsageError;

#[derive(Parser, Debug)]
#[command(name = "declip", version, about = "Train, evaluate and export decoupled perceptual/semantic projectors")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Global {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel encoding and scoring
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Keep captions with enough perceptual vocabulary
    Filter(data_cmds::FilterArgs),
    /// Split captions into perceptual and semantic texts with an MLLM service
    Relabel(data_cmds::RelabelArgs),
    /// Train the projectors on an I&2T dataset
    Train(model_cmds::TrainArgs),
    /// Score a MOS dataset and report SRCC/PLCC
    Eval(model_cmds::EvalArgs),
    /// Score one image with an antonym prompt pair
    Score(model_cmds::ScoreArgs),
    /// Score one image on named attributes
    Attr(model_cmds::AttrArgs),
    /// Tune prompt context vectors against MOS
    Coop(model_cmds::CoopArgs),
    /// Write the synthetic blur/shape benchmark
    Bench(data_cmds::BenchArgs),
    /// Export a condition bundle for an external generator
    Cond(model_cmds::CondArgs),
    /// Draw a loss curve or a score scatter plot
    Plot(model_cmds::PlotArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.global.workers {
        if n == 0 {
            return Err(config::usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::Filter(a) => data_cmds::filter(g, a),
        Command::Relabel(a) => data_cmds::relabel(g, a),
        Command::Train(a) => model_cmds::train(g, a),
        Command::Eval(a) => model_cmds::eval(g, a),
        Command::Score(a) => model_cmds::score(g, a),
        Command::Attr(a) => model_cmds::attr(g, a),
        Command::Coop(a) => model_cmds::coop(g, a),
        Command::Bench(a) => data_cmds::bench(g, a),
        Command::Cond(a) => model_cmds::cond(g, a),
        Command::Plot(a) => model_cmds::plot(g, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
