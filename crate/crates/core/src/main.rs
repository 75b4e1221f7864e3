use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ldlab::field::CheckMode;
use ldlab::harness::pipeline::{self, RunOptions};
use ldlab::harness::{ExperimentConfig, Summary};
use ldlab::Error;

#[derive(Parser)]
#[command(name = "ldlab", version, about = "Large-deviations checks for decoupled lattice fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `[run] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `[run] out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `[run] mode`.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Suppress the per-report summary.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Mc,
}

#[derive(Subcommand)]
enum Command {
    /// Tile the configured box and tabulate the margin fraction.
    Tiling,
    /// Check decoupling and local control.
    CheckHypotheses,
    /// Finite-volume and limit pressure curves.
    Pressure,
    /// Box-basis entropy estimates.
    Entropy,
    /// Discrete conjugate of a curve CSV.
    Lft {
        #[arg(long)]
        input: PathBuf,
    },
    /// Randomized Chebyshev upper-bound sweep.
    Chebyshev,
    /// Subadditive lemma, pressure subadditivity and concavity.
    Subadditive,
    /// Truncation family diagnostics.
    Mosco,
    /// Full duality pipeline.
    Verify,
}

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Improper(_) => 1,
        Error::NoConvergence { .. } | Error::Io(_) => 2,
        _ => 3,
    }
}

fn run(cli: &Cli) -> ldlab::Result<Summary> {
    let cfg = match &cli.config {
        Some(p) => Some(ExperimentConfig::load(p)?),
        None => None,
    };
    let mut opts = match &cfg {
        Some(c) => RunOptions::from_config(c),
        None => RunOptions { seed: 0, mode: CheckMode::Exact, out: PathBuf::from("out") },
    };
    if let Some(s) = cli.seed {
        opts.seed = s;
    }
    if let Some(o) = &cli.out {
        opts.out = o.clone();
    }
    if let Some(m) = cli.mode {
        opts.mode = match m {
            Mode::Exact => CheckMode::Exact,
            Mode::Mc => CheckMode::Mc,
        };
    }
    if let Command::Lft { input } = &cli.command {
        return pipeline::run_lft(input, cfg.as_ref(), &opts);
    }
    let cfg = cfg.ok_or_else(|| Error::Config("--config is required for this subcommand".into()))?;
    match cli.command {
        Command::Tiling => pipeline::run_tiling(&cfg, &opts),
        Command::CheckHypotheses => pipeline::run_check_hypotheses(&cfg, &opts),
        Command::Pressure => pipeline::run_pressure(&cfg, &opts),
        Command::Entropy => pipeline::run_entropy(&cfg, &opts),
        Command::Chebyshev => pipeline::run_chebyshev(&cfg, &opts),
        Command::Subadditive => pipeline::run_subadditive(&cfg, &opts),
        Command::Mosco => pipeline::run_mosco(&cfg, &opts),
        Command::Verify => pipeline::run_verify(&cfg, &opts),
        Command::Lft { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            if !cli.quiet {
                print!("{}", summary.render());
            }
            ExitCode::from(summary.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}
