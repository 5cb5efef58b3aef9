//! Batch front end: ingestion → encoding → transport → pipeline → outputs.
//!
//! Exit codes: 0 success, 2 data degeneracy, 64 usage, 65 config/schema,
//! 70 internal.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use commands::{CommandError, RunContext, EXIT_USAGE};
use config::{Overrides, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "simplex-ot",
    version,
    about = "Counterfactuals for categorical variables via transport of compositions on the simplex"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overrides the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root random seed, overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Log-ratio coordinates: alr, clr or ilr.
    #[arg(long)]
    transform: Option<String>,
    /// Matching counterfactual mode: euclidean_mean, aitchison_mean or argmax_row.
    #[arg(long)]
    mode: Option<String>,
    /// Boundary floor applied by the closure operator.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Transport direction: 0to1 or 1to0.
    #[arg(long)]
    direction: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit or load encoders and append per-category score columns.
    Encode {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Transport encoded compositions between the sensitive groups.
    Transport {
        #[command(flatten)]
        common: CommonArgs,
        /// gaussian or matching.
        #[arg(long)]
        method: String,
    },
    /// Run the sequential counterfactual pipeline over the declared steps.
    Pipeline {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Emit ternary SVG diagrams (3-category columns only).
    Plot {
        #[command(flatten)]
        common: CommonArgs,
        /// points, transport or contours.
        #[arg(long)]
        what: String,
        /// Column to plot; defaults to [plot].column from the config.
        #[arg(long)]
        column: Option<String>,
    },
    /// Fit per-group Dirichlet concentrations to an encoded column.
    FitDirichlet {
        #[command(flatten)]
        common: CommonArgs,
        /// Column to fit; defaults to [plot].column from the config.
        #[arg(long)]
        column: Option<String>,
    },
    /// Check an emitted coupling plan against its marginal constraints.
    Verify {
        /// Triplet plan CSV written by `transport --method matching`.
        #[arg(long)]
        plan: PathBuf,
    },
}

fn build_context(common: &CommonArgs) -> Result<RunContext, CommandError> {
    let (mut config, config_text) = RunConfig::load(&common.config)?;
    let overrides = Overrides {
        out: common.out.clone(),
        seed: common.seed,
        transform: common.transform.clone(),
        mode: common.mode.clone(),
        epsilon: common.epsilon,
        direction: common.direction.clone(),
    };
    overrides
        .apply(&mut config)
        .map_err(|e| CommandError::usage(e.to_string()))?;
    Ok(RunContext {
        config,
        config_path: common.config.clone(),
        config_text,
    })
}

fn run(cli: Cli) -> Result<(), CommandError> {
    match &cli.command {
        Command::Encode { common } => commands::cmd_encode(&build_context(common)?),
        Command::Transport { common, method } => {
            commands::cmd_transport(&build_context(common)?, method)
        }
        Command::Pipeline { common } => commands::cmd_pipeline(&build_context(common)?),
        Command::Plot {
            common,
            what,
            column,
        } => commands::cmd_plot(&build_context(common)?, what, column.as_deref()),
        Command::FitDirichlet { common, column } => {
            commands::cmd_fit_dirichlet(&build_context(common)?, column.as_deref())
        }
        Command::Verify { plan } => commands::cmd_verify(plan),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            // Help and version are successful exits; everything else is usage.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
