use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reqsynth::ingest::CorpusFormat;
use reqsynth::pipeline::{self, PipelineConfig, Profile, RunManifest, CONFIG_ENV};
use reqsynth::{Error, ErrorCategory};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "reqsynth", version, about = "Augment HTTP request corpora and train an anomaly detector")]
struct Cli {
    /// Pipeline config (TOML), merged over the profile preset.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Master seed; every stage derives its own seed from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Preset the config is merged over.
    #[arg(long, global = true, value_parser = ["desk", "paper"])]
    profile: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and normalize the corpus, write the train/test split.
    Ingest,
    /// Reserved tokens, generator, discriminator and the augmented datastore.
    Augment,
    /// Train and calibrate the detector on the datastore.
    TrainDetector,
    /// Classify a corpus (default: the test split).
    Detect {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "canonical", requires = "input")]
        format: String,
    },
    /// Similarity and classification reports.
    Evaluate,
    /// F1 with and without augmentation across confidence levels.
    Ablate {
        /// Comma-separated levels, e.g. 0.97,0.99,0.995.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<f64>,
    },
}

fn resolve(cli: &Cli) -> reqsynth::Result<PipelineConfig> {
    let profile = cli.profile.as_deref().map(str::parse::<Profile>).transpose()?;
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path, profile)?,
        None => PipelineConfig::preset(profile.unwrap_or(Profile::Desk)),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn summarize(m: &RunManifest) {
    for (k, v) in &m.counts {
        if !v.is_object() {
            println!("{k}: {v}");
        }
    }
    println!("artifacts in {}", m.config.output.display());
}

fn run(cli: &Cli) -> reqsynth::Result<()> {
    let config = resolve(cli)?;
    let manifest = match &cli.command {
        Command::Ingest => pipeline::cmd_ingest(&config)?,
        Command::Augment => pipeline::cmd_augment(&config)?,
        Command::TrainDetector => pipeline::cmd_train_detector(&config)?,
        Command::Detect { input, format } => {
            let format: CorpusFormat = format.parse()?;
            pipeline::cmd_detect(&config, input.as_deref().map(|p| (p, format)))?
        }
        Command::Evaluate => pipeline::cmd_evaluate(&config)?,
        Command::Ablate { levels } => {
            let levels = if levels.is_empty() { config.ablation_levels.clone() } else { levels.clone() };
            let (m, rows) = pipeline::cmd_ablate(&config, &levels)?;
            print!("{}", pipeline::render_ablation(&rows));
            m
        }
    };
    summarize(&manifest);
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => EXIT_CONFIG,
        ErrorCategory::Data => EXIT_DATA,
        ErrorCategory::Numerical => EXIT_NUMERICAL,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
