use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracklet_cli::commands::{self, EvalOptions, PlotOptions, RunOptions};
use tracklet_cli::CliError;

#[derive(Parser)]
#[command(name = "tracklet", version, about = "Visual multi-agent RL with tracklet graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory. Defaults to the config's `out_dir`, then
    /// `$TRACKLET_OUT_ROOT/<config name>`, then `runs/<config name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds, replacing the config's list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Dotted-path override such as `trainer.gamma=0.99`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Reuse a non-empty output directory.
    #[arg(long)]
    overwrite: bool,
}

impl RunArgs {
    fn options(self) -> RunOptions {
        RunOptions { config: self.config, out: self.out, seeds: self.seeds, overrides: self.overrides, overwrite: self.overwrite }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one run per seed.
    Train(RunArgs),
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `trainer.eval_episodes`.
        #[arg(long)]
        episodes: Option<u64>,
        /// Evaluation seed; defaults to the config's first seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Per-episode CSV; defaults to the checkpoint path with `.eval.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Train at each dropout rate and tabulate final metrics.
    SweepDropout {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated rates in [0, 1].
        #[arg(long, default_value = "0,0.1,0.2,0.4")]
        rates: String,
    },
    /// Learning curve across metrics files.
    Plot {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// SVG path; the aggregated CSV goes next to it.
        #[arg(long, default_value = "learning_curve.svg")]
        out: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Train(args) => commands::train(&args.options(), &mut out),
        Command::Eval { checkpoint, config, episodes, seed, out: csv, overrides } => {
            let opts = EvalOptions { checkpoint, config, overrides, episodes, seed, out: csv };
            commands::eval(&opts, &mut out).map(|_| ())
        }
        Command::SweepDropout { run, rates } => {
            let rates = commands::parse_rates(&rates)?;
            commands::sweep_dropout(&run.options(), &rates, &mut out).map(|_| ())
        }
        Command::Plot { metrics, out: svg, title } => commands::plot(&PlotOptions { metrics, out: svg, title }, &mut out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
