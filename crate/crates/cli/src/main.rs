use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use commentclf::ensemble::{ArrayEncoding, Recipe};
use commentclf::tuning::Strategy;
use commentclf::workflow::{self, Report, RunConfig};

/// Comment classification: features, tuning, voting ensembles, calibration reports.
#[derive(Debug, Parser)]
#[command(name = "commentclf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic labeled dataset with semantic and style embeddings.
    Synth,
    /// Extract the 30 numeric features (raw and log variants).
    Features,
    /// Search hyperparameters per fold (and per subtask for submission3).
    Tune,
    /// Train the three subtask ensembles from tuned parameters.
    Train,
    /// Predict labels, vote fractions and probabilities.
    Predict,
    /// Score predictions: metrics, reliability bins, densities, confusion counts.
    Evaluate,
}

/// Flags override values from the config file.
#[derive(Debug, Args)]
struct Overrides {
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    semantic: Option<PathBuf>,
    #[arg(long, global = true)]
    style: Option<PathBuf>,
    #[arg(long, global = true)]
    spelling: Option<PathBuf>,
    #[arg(long, global = true)]
    sentiment: Option<PathBuf>,
    #[arg(long, global = true)]
    stopwords: Option<PathBuf>,
    #[arg(long, global = true)]
    numeric_features: Option<PathBuf>,
    #[arg(long, global = true)]
    pipelines_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    best_params: Option<PathBuf>,
    #[arg(long, global = true)]
    predictions: Option<PathBuf>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// submission1, submission2 or submission3.
    #[arg(long, global = true)]
    recipe: Option<Recipe>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true, value_parser = ["random", "tpe_like"])]
    strategy: Option<String>,
    #[arg(long, global = true)]
    bins: Option<usize>,
    #[arg(long, global = true)]
    kde_bandwidth: Option<f64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_parser = ["decimal", "base64"])]
    array_encoding: Option<String>,
    /// Accept embedding tables of any width.
    #[arg(long, global = true)]
    any_width: bool,
    /// Synthetic dataset size.
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    class_separation: Option<f64>,
    /// Comma separated positive rates of the three subtasks.
    #[arg(long, global = true, value_delimiter = ',')]
    positive_rates: Option<Vec<f64>>,
    #[arg(long, global = true)]
    semantic_dim: Option<usize>,
    #[arg(long, global = true)]
    style_dim: Option<usize>,
}

impl Overrides {
    fn apply(self, mut cfg: RunConfig) -> Result<RunConfig> {
        macro_rules! set {
            ($flag:expr => $slot:expr) => {
                if let Some(v) = $flag {
                    $slot = v;
                }
            };
        }
        let p = &mut cfg.paths;
        for (flag, slot) in [
            (self.output_dir, &mut p.output_dir),
            (self.dataset, &mut p.dataset),
            (self.semantic, &mut p.semantic),
            (self.style, &mut p.style),
            (self.spelling, &mut p.spelling),
            (self.sentiment, &mut p.sentiment),
            (self.stopwords, &mut p.stopwords),
            (self.numeric_features, &mut p.numeric_features),
            (self.pipelines_dir, &mut p.pipelines_dir),
            (self.best_params, &mut p.best_params),
            (self.predictions, &mut p.predictions),
        ] {
            if flag.is_some() {
                *slot = flag;
            }
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        set!(self.folds => cfg.folds);
        set!(self.recipe => cfg.recipe);
        set!(self.trials => cfg.trials);
        set!(self.bins => cfg.bins);
        set!(self.kde_bandwidth => cfg.kde_bandwidth);
        set!(self.n => cfg.synth.n);
        set!(self.class_separation => cfg.synth.class_separation);
        set!(self.semantic_dim => cfg.synth.semantic_dim);
        set!(self.style_dim => cfg.synth.style_dim);
        if let Some(s) = self.strategy {
            cfg.strategy = serde_json::from_value::<Strategy>(serde_json::Value::String(s))?;
        }
        if let Some(e) = self.array_encoding {
            cfg.array_encoding = serde_json::from_value::<ArrayEncoding>(serde_json::Value::String(e))?;
        }
        if let Some(r) = self.positive_rates {
            let [a, b, c] = r[..] else {
                anyhow::bail!("--positive-rates takes three comma separated values, got {}", r.len());
            };
            cfg.synth.positive_rates = [a, b, c];
        }
        if self.any_width {
            cfg.strict_dims = false;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<Report> {
    let base = match &cli.overrides.config {
        Some(path) => RunConfig::from_file(path).with_context(|| format!("reading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    let cfg = cli.overrides.apply(base)?;
    let command = cli.command;
    let report = workflow::with_threads(cfg.threads, || match command {
        Command::Synth => workflow::cmd_synth(&cfg),
        Command::Features => workflow::cmd_features(&cfg),
        Command::Tune => workflow::cmd_tune(&cfg),
        Command::Train => workflow::cmd_train(&cfg),
        Command::Predict => workflow::cmd_predict(&cfg),
        Command::Evaluate => workflow::cmd_evaluate(&cfg),
    })?;
    Ok(report)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let report = run(Cli::parse())?;
    for path in &report.outputs {
        println!("{}", path.display());
    }
    Ok(())
}
