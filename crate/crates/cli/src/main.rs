use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gradpca_core::pipeline::{run_stage, PipelineConfig};

#[derive(Parser)]
#[command(name = "gradpca", version, about = "PCA-reduced gradient optimization of chain band gaps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw admissible Halton points for the largest schedule entry.
    Sample(StageArgs),
    /// Evaluate the gradient field on the samples.
    Grads(StageArgs),
    /// Choose N° and p° and write the basis.
    Pca(StageArgs),
    /// Run the multi-start sweep over p and the full gradient.
    Optimize(StageArgs),
    /// All stages in order.
    Pipeline(StageArgs),
    /// Render the SVG plots from existing artifacts.
    Report(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    /// JSON configuration; omitted sections take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(&self) -> (&'static str, &StageArgs) {
        match self {
            Command::Sample(a) => ("sample", a),
            Command::Grads(a) => ("grads", a),
            Command::Pca(a) => ("pca", a),
            Command::Optimize(a) => ("optimize", a),
            Command::Pipeline(a) => ("pipeline", a),
            Command::Report(a) => ("report", a),
        }
    }
}

fn load_config(args: &StageArgs) -> anyhow::Result<PipelineConfig> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn run(stage: &str, args: &StageArgs) -> anyhow::Result<()> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("configuring worker threads")?;
    }
    let config = load_config(args)?;
    run_stage(stage, &config)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (stage, args) = cli.command.split();
    match run(stage, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error in {stage}: {e:#}");
            ExitCode::FAILURE
        }
    }
}
