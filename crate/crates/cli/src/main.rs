use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cytomap::error::{Error, ErrorCategory, Result};
use cytomap::pipeline::{run_stage, RunConfig, Stage};
use log::error;

/// Builds cortex graphs from a synthetic section stack, trains patch
/// encoders and GNN classifiers on them and reports area-classification
/// scores.
#[derive(Parser, Debug)]
#[command(name = "cytomap", version)]
struct Cli {
    /// Run configuration (TOML). Missing keys take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one configuration value, e.g. `--set phantom.areas=4`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Directory holding every stage's artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Print the fully resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Render the synthetic section stack.
    Phantom,
    /// Segment, reconstruct and mesh the midsurface, then build the graph.
    Mesh,
    /// Train the contrastive patch encoder.
    TrainEncoder,
    /// Embed every node's patch and attach the synthetic priors.
    Features,
    /// Train every configured GNN for every seed.
    TrainGnn,
    /// Predict all nodes and write the macro-F1 report.
    Eval,
    /// Write labeled and predicted meshes of the best model.
    Export,
    /// Run every stage in order.
    All,
}

impl Command {
    fn stages(self) -> Vec<Stage> {
        match self {
            Command::Phantom => vec![Stage::Phantom],
            Command::Mesh => vec![Stage::Mesh],
            Command::TrainEncoder => vec![Stage::TrainEncoder],
            Command::Features => vec![Stage::Features],
            Command::TrainGnn => vec![Stage::TrainGnn],
            Command::Eval => vec![Stage::Eval],
            Command::Export => vec![Stage::Export],
            Command::All => Stage::ALL.to_vec(),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Input => 3,
        ErrorCategory::Numeric => 4,
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path, &cli.set)?,
        None => RunConfig::from_toml_with_overrides("", &cli.set)?,
    };
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Error::Config("no subcommand given; see --help".into()));
    };
    for stage in command.stages() {
        run_stage(&cfg, stage)?;
    }
    if matches!(command, Command::Eval | Command::All) {
        let report = cfg.output_dir.join(Stage::Eval.name()).join("report.txt");
        if let Ok(text) = std::fs::read_to_string(report) {
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
