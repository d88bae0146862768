use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use consensus_pd::cli::{self, CliError, LoadedConfig};
use consensus_pd::config::parse_grid_axis;
use consensus_pd::run::Mode;

#[derive(Parser)]
#[command(
    name = "consensus-pd",
    version,
    about = "Distributed primal-dual optimization experiments"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output.dir` or `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "theorem" => Ok(Mode::Theorem),
        "practical" => Ok(Mode::Practical),
        _ => Err(format!("expected theorem or practical, got {s}")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print certificate constants and the feasibility report.
    Params(Common),
    /// Run one experiment and write trace.csv, summary.txt and constants.txt.
    Run(Common),
    /// Compare two runs in lockstep (or one run against the two-term recursion).
    Compare {
        #[command(flatten)]
        common: Common,
        /// Second config; omit to compare against the reference recursion.
        #[arg(long)]
        against: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        window: usize,
    },
    /// Run a grid of config overrides, e.g. `--grid params.eta=1e-3,1e-2`.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long = "grid")]
        grid: Vec<String>,
    },
}

fn load(c: &Common) -> Result<LoadedConfig, CliError> {
    cli::load_config(&c.config, c.seed, c.mode)
}

fn dispatch(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Params(c) => cli::cmd_params(&load(&c)?, c.out.as_deref()),
        Command::Run(c) => cli::cmd_run(&load(&c)?, c.out.as_deref()),
        Command::Compare {
            common,
            against,
            window,
        } => {
            let a = load(&common)?;
            let b = match against {
                Some(p) => Some(cli::load_config(&p, common.seed, common.mode)?),
                None => None,
            };
            Ok(cli::cmd_compare(&a, b.as_ref(), window, common.out.as_deref())?.0)
        }
        Command::Sweep { common, grid } => {
            let axes = grid.iter().map(|g| parse_grid_axis(g)).collect::<Result<Vec<_>, _>>()?;
            Ok(cli::cmd_sweep(&load(&common)?, &axes, common.out.as_deref())?.0)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match dispatch(args.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
