use clap::{Parser, Subcommand};

use probseg_cli::commands::{
    agglomerate, evaluate, losses_check, metrics, proofread, render_cmd, segment, synth,
};

#[derive(Parser)]
#[command(
    name = "probseg",
    version,
    about = "Probabilistic instance segmentation pipeline: synthetic data, \
             mean-shift segmentation, draw agglomeration, uncertainty metrics, \
             evaluation and proofreading simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded synthetic scenes, draws and embeddings.
    Synth(synth::SynthArgs),
    /// Cluster embedding maps into instance masks.
    Segment(segment::SegmentArgs),
    /// Fuse posterior draws into probability and entropy maps.
    Agglomerate(agglomerate::AgglomerateArgs),
    /// Accuracy-vs-uncertainty curves.
    Metrics(metrics::MetricsArgs),
    /// Benchmark metric report.
    Evaluate(evaluate::EvaluateArgs),
    /// Guided-correction simulation table.
    ProofreadSim(proofread::ProofreadArgs),
    /// Gradient and default-constant self-test.
    LossesCheck(losses_check::LossesCheckArgs),
    /// PNG visualizations.
    Render(render_cmd::RenderArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => synth::run(args),
        Command::Segment(args) => segment::run(args),
        Command::Agglomerate(args) => agglomerate::run(args),
        Command::Metrics(args) => metrics::run(args),
        Command::Evaluate(args) => evaluate::run(args),
        Command::ProofreadSim(args) => proofread::run(args),
        Command::LossesCheck(args) => losses_check::run(args),
        Command::Render(args) => render_cmd::run(args),
    };
    if let Err(e) = result {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}
