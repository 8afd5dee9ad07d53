//! Command-line driver for the narrative pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::bail;
use clap::{Parser, Subcommand};
use narrative_core::fixture;
use narrative_core::pipeline::{self, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "narrate",
    version,
    about = "Narrative sentiment around price breaks"
)]
struct Cli {
    /// flat `key = value` config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// override any config key, e.g. `--set k_max=8`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect level breaks in log price; writes breaks.csv and windows.csv
    Breaks,
    /// Build the stopword list; writes stopwords.txt
    Stopwords,
    /// Clean, filter and stem posts; writes corpus.jsonl
    Preprocess,
    /// Fit GSDMM; writes model.json and labels.csv
    Cluster,
    /// Score posts; writes sentiment.csv
    Sentiment,
    /// Daily narrative series and summaries; writes joined.csv and summary.json
    Series,
    /// All stages in order
    Run,
    /// Write the bundled synthetic posts, prices and config into a directory
    Fixture { dir: PathBuf },
}

fn config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    for o in &cli.overrides {
        let Some((key, value)) = o.split_once('=') else {
            bail!("--set expects KEY=VALUE, got '{o}'");
        };
        if let Err(e) = config.set(key, value, None) {
            bail!("--set {o}: {e}");
        }
    }
    if let Some(seed) = cli.seed {
        config.gsdmm.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        config.out_dir = dir.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Command::Fixture { dir } = &cli.command {
        fixture::write_fixture(dir)?;
        return Ok(());
    }
    let config = config(cli)?;
    match &cli.command {
        Command::Breaks => {
            pipeline::cmd_breaks(&config)?;
        }
        Command::Stopwords => {
            pipeline::cmd_stopwords(&config)?;
        }
        Command::Preprocess => {
            pipeline::cmd_preprocess(&config)?;
        }
        Command::Cluster => {
            pipeline::cmd_cluster(&config)?;
        }
        Command::Sentiment => {
            pipeline::cmd_sentiment(&config)?;
        }
        Command::Series => {
            pipeline::cmd_series(&config)?;
        }
        Command::Run => pipeline::run_all(&config)?,
        Command::Fixture { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already carry their source's message
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
