//! Command-line frontend for the spectral decomposition mixer.
//!
//! Subcommands cover the full experiment loop: dataset diagnostics,
//! season/trend decomposition, training, checkpoint evaluation, the
//! four-variant ablation, gradient verification, and report rendering.
//! Shared flags load a `key = value` configuration file and override its
//! horizon, variant, and seed; `--out` picks the output directory.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{ArgAction, Parser, Subcommand};
use sdmixer_cli::commands::{self, usage_err};
use sdmixer_cli::config::RunConfig;
use sdmixer_core::model::Variant;

#[derive(Parser)]
#[command(
    name = "sdmixer",
    version,
    about = "Season/trend decomposition mixer for long-horizon forecasting"
)]
struct Cli {
    /// Run configuration file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dataset: a CSV path or a bare stem looked up under $SDMIXER_DATA
    /// then data/. Repeatable for stats.
    #[arg(long = "dataset", global = true, action = ArgAction::Append)]
    datasets: Vec<String>,

    /// Forecast horizon override.
    #[arg(long, global = true)]
    horizon: Option<usize>,

    /// Variant override: full, no-cross, no-time, or no-freq.
    #[arg(long, global = true)]
    variant: Option<String>,

    /// Base RNG seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-dataset sizes, split row counts, forecastability, and the
    /// season/trend covariance ratio.
    Stats,
    /// Season/trend split of one raw lookback window plus its spectral
    /// energy table.
    Decompose {
        /// Season width in spectral bins; defaults to the config's k_freq.
        #[arg(long)]
        k: Option<usize>,
        /// First row of the window.
        #[arg(long, default_value_t = 0)]
        offset: usize,
    },
    /// Train one variant; writes train.log, checkpoint.sdmx, metrics.csv.
    Train,
    /// Score a saved checkpoint on the test split.
    Eval {
        /// Checkpoint file to load.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train all four variants and write the comparison table.
    Ablate,
    /// Compare tape gradients against finite differences.
    Gradcheck,
    /// Render reference tables merged with measured results.
    Report {
        /// Directory holding stats.csv, metrics.csv, ablation.csv.
        #[arg(long, default_value = "out")]
        results: PathBuf,
    },
}

fn parse_variant(text: &str) -> Result<Variant> {
    text.parse()
        .map_err(|e| usage_err(format!("bad --variant: {e}")))
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(h) = cli.horizon {
        cfg.horizon = h;
    }
    if let Some(v) = &cli.variant {
        cfg.variant = parse_variant(v)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Stats => commands::cmd_stats(&cli.datasets, &cfg, &cli.out),
        Command::Decompose { k, offset } => {
            let dataset = commands::single_dataset(&cli.datasets, "decompose")?;
            commands::cmd_decompose(dataset, &cfg, *k, *offset, &cli.out)
        }
        Command::Train => {
            let dataset = commands::single_dataset(&cli.datasets, "train")?;
            commands::cmd_train(dataset, &cfg, &cli.out)
        }
        Command::Eval { checkpoint } => {
            let dataset = commands::single_dataset(&cli.datasets, "eval")?;
            commands::cmd_eval(dataset, &cfg, checkpoint, &cli.out)
        }
        Command::Ablate => {
            let dataset = commands::single_dataset(&cli.datasets, "ablate")?;
            commands::cmd_ablate(dataset, &cfg, &cli.out)
        }
        Command::Gradcheck => {
            let variant = cli.variant.as_deref().map(parse_variant).transpose()?;
            commands::cmd_gradcheck(variant, cli.seed)
        }
        Command::Report { results } => commands::cmd_report(results, &cli.out),
    }
}

fn main() {
    // Die quietly when a downstream pipe closes, like any line-oriented
    // tool; the default Rust behavior is a panic from println.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        eprintln!("error: {err:#}");
        std::process::exit(if err.is::<commands::UsageError>() { 2 } else { 1 });
    }
}
