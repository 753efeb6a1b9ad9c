//! Experiment runner for the continual-learning power-control pipeline.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 training abort.

use clap::{Parser, Subcommand};

use clwrx_core::clcore::Strategy;
use clwrx_core::config::LoadedConfig;
use clwrx_core::error::Result;
use clwrx_core::expcli;

#[derive(Parser)]
#[command(
    name = "clwrx",
    about = "Continual learning for wireless power control: generate, label, train, eval, report",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Config file path, or a built-in recipe name
    /// (desk, paper-fig3, paper-unbalanced, desk-unbalanced).
    #[arg(long)]
    config: String,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory (resolved against the working directory).
    #[arg(long)]
    out: Option<String>,
    /// Comma-separated strategy subset, e.g. "min_max_bilevel,reservoir".
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the per-episode train/test channel datasets.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Label generated datasets with the WMMSE oracle.
    Label {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train the configured strategies over the labeled stream.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Run strategies in parallel (independent state and output dirs).
        #[arg(long)]
        parallel: bool,
    },
    /// Evaluate saved checkpoints on the labeled test sets.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Merge per-strategy metric logs into a figure-ready CSV bundle.
    Report {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn load(common: &CommonArgs) -> Result<LoadedConfig> {
    let mut lc = LoadedConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        lc.config.master_seed = seed;
    }
    if let Some(out) = &common.out {
        // keep datasets resolvable when only the output moves
        lc.config.data_dir = lc.data_dir().to_string_lossy().into_owned();
        lc.config.out_dir = out.clone();
        lc.base = std::path::PathBuf::from(".");
    }
    Ok(lc)
}

fn parse_strategies(common: &CommonArgs) -> Result<Option<Vec<Strategy>>> {
    match &common.strategies {
        None => Ok(None),
        Some(names) => {
            let mut out = Vec::with_capacity(names.len());
            for n in names {
                out.push(Strategy::parse(n.trim())?);
            }
            Ok(Some(out))
        }
    }
}

fn run() -> Result<()> {
    if let Ok(threads) = std::env::var("CLWRX_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { common } => {
            let lc = load(&common)?;
            expcli::cmd_generate(&lc)?;
        }
        Command::Label { common } => {
            let lc = load(&common)?;
            expcli::cmd_label(&lc)?;
        }
        Command::Train { common, parallel } => {
            let lc = load(&common)?;
            let strategies = parse_strategies(&common)?;
            let outcomes = expcli::cmd_train(&lc, strategies.as_deref(), parallel, true)?;
            for o in &outcomes {
                println!(
                    "[{}] done: final mixture_rate={:.4} mixture_ratio={:.4} ({})",
                    o.strategy.name(),
                    o.final_mixture_rate,
                    o.final_mixture_ratio,
                    o.run_dir.display()
                );
            }
        }
        Command::Eval { common } => {
            let lc = load(&common)?;
            let strategies = parse_strategies(&common)?;
            expcli::cmd_eval(&lc, strategies.as_deref())?;
        }
        Command::Report { common } => {
            let lc = load(&common)?;
            let strategies = parse_strategies(&common)?;
            expcli::cmd_report(&lc, strategies.as_deref())?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
