//! `asgan`: synthetic data, adversarial training, augmentation benchmarks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime
//! error.

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use asgan_core::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "asgan", version, about = "Attention-stacked WGAN augmentation for windowed sensor signals")]
struct Cli {
    /// `key = value` configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for independent cells.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,

    /// Debug output on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the seeded synthetic training and test trials as CSV.
    SynthData(SynthArgs),
    /// Train an adversarial generator on the abnormal training windows.
    Train(TrainArgs),
    /// Draw windows from a checkpoint and check their distances.
    Generate(GenerateArgs),
    /// Balance the training set with one augmenter and score the classifier.
    AugmentEval(AugmentArgs),
    /// Score one augmenter across abnormal-to-normal ratios.
    SweepRatio(RatioArgs),
    /// Score the attention-stacked augmenter across head and layer counts.
    SweepHp(GridArgs),
    /// Compare augmenters over replicates.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Samples per trial.
    #[arg(long)]
    length: Option<usize>,
    /// Test trials after the training trial.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    iterations: Option<usize>,
    /// Attention heads.
    #[arg(long)]
    he: Option<usize>,
    /// Generator layers.
    #[arg(long)]
    hf: Option<usize>,
    /// asgan, wgan or gan.
    #[arg(long)]
    kind: Option<String>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    augmenter: Option<String>,
}

#[derive(Args)]
struct RatioArgs {
    /// Comma-separated abnormal-to-normal ratios.
    #[arg(long)]
    ratios: Option<String>,
    #[arg(long)]
    augmenter: Option<String>,
    /// Replicates per cell.
    #[arg(long)]
    replicates: Option<usize>,
}

#[derive(Args)]
struct GridArgs {
    /// Comma-separated head counts.
    #[arg(long)]
    he: Option<String>,
    /// Comma-separated generator layer counts.
    #[arg(long)]
    hf: Option<String>,
    /// Replicates per cell.
    #[arg(long)]
    replicates: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated augmenter names.
    #[arg(long)]
    augmenters: Option<String>,
    /// Replicates per cell.
    #[arg(long)]
    replicates: Option<usize>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SynthData(_) => "synth-data",
            Command::Train(_) => "train",
            Command::Generate(_) => "generate",
            Command::AugmentEval(_) => "augment-eval",
            Command::SweepRatio(_) => "sweep-ratio",
            Command::SweepHp(_) => "sweep-hp",
            Command::Bench(_) => "bench",
        }
    }

    /// Subcommand flags as configuration assignments.
    fn overrides(&self) -> Vec<(&'static str, String)> {
        fn some<T: ToString>(key: &'static str, v: &Option<T>) -> Option<(&'static str, String)> {
            v.as_ref().map(|v| (key, v.to_string()))
        }
        let items = match self {
            Command::SynthData(a) => vec![some("synth.length", &a.length), some("synth.test_trials", &a.trials)],
            Command::Train(a) => vec![
                some("train.iterations", &a.iterations),
                some("train.heads", &a.he),
                some("train.layers", &a.hf),
                some("train.kind", &a.kind),
            ],
            Command::Generate(a) => vec![
                some("generate.checkpoint", &a.checkpoint.as_ref().map(|p| p.display().to_string())),
                some("generate.count", &a.count),
            ],
            Command::AugmentEval(a) => vec![some("augment.augmenter", &a.augmenter)],
            Command::SweepRatio(a) => vec![
                some("sweep.ratios", &a.ratios),
                some("augment.augmenter", &a.augmenter),
                some("replicates", &a.replicates),
            ],
            Command::SweepHp(a) => vec![some("sweep.he", &a.he), some("sweep.hf", &a.hf), some("replicates", &a.replicates)],
            Command::Bench(a) => vec![some("bench.augmenters", &a.augmenters), some("replicates", &a.replicates)],
        };
        items.into_iter().flatten().collect()
    }
}

fn resolve(cli: &Cli) -> anyhow::Result<config::RunConfig> {
    let mut cfg = config::RunConfig::default();
    let mut assignments = Vec::new();
    if let Some(path) = &cli.config {
        assignments.extend(config::parse_file(path)?);
    }
    for s in &cli.sets {
        assignments.push(config::parse_assignment(s)?);
    }
    assignments.extend(cli.command.overrides().into_iter().map(|(k, v)| (k.to_string(), v)));
    if let Some(seed) = cli.seed {
        assignments.push(("seed".into(), seed.to_string()));
    }
    if let Some(jobs) = cli.jobs {
        assignments.push(("jobs".into(), jobs.to_string()));
    }
    for (k, v) in &assignments {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Error>() {
        return match e.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Runtime => 4,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 3;
    }
    4
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let logger = run::RunLogger::install(cli.verbose);
    let outcome = resolve(&cli).and_then(|cfg| commands::execute(cli.command.name(), &cfg, logger));
    match outcome {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
