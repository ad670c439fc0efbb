use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gridtwin_cli::{cmd_convert_case, cmd_diagnose, cmd_solve, cmd_twin, CliError};

/// Power-flow digital twin: solve cases, run estimation experiments,
/// and trace bias outliers back to the network description.
#[derive(Parser)]
#[command(name = "gridtwin", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the AC power flow of a case file and print the solution as JSON.
    Solve {
        case: PathBuf,
        /// Also write `solution.json` into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment pipeline described by a TOML config.
    Twin {
        #[arg(long)]
        config: PathBuf,
        /// Overrides every seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write PGM heatmaps of the bias matrices.
        #[arg(long)]
        emit_heatmaps: bool,
    },
    /// Rank description-file records that may explain a bias matrix.
    Diagnose {
        /// Bias CSV written by `twin` (e.g. `lse_w4000_bias.csv`).
        #[arg(long)]
        bias: PathBuf,
        /// The description the benchmark was computed from.
        #[arg(long)]
        case: PathBuf,
        /// Robust z-score above which an entry is an outlier.
        #[arg(long, default_value_t = 5.0)]
        threshold: f64,
        /// Number of suspects to print.
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Also write `suspects.json` into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a MATPOWER `.m` case to the native case format.
    ConvertCase {
        input: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { case, out } => {
            print!("{}", cmd_solve(&case, out.as_deref())?);
        }
        Command::Twin {
            config,
            seed,
            out,
            emit_heatmaps,
        } => {
            let dir = cmd_twin(&config, seed, out.as_deref(), emit_heatmaps)?;
            println!("wrote {}", dir.join(gridtwin_cli::twin::MANIFEST).display());
        }
        Command::Diagnose {
            bias,
            case,
            threshold,
            top,
            out,
        } => {
            print!(
                "{}",
                cmd_diagnose(&bias, &case, threshold, out.as_deref())?.render(top)
            );
        }
        Command::ConvertCase { input, out } => {
            let text = cmd_convert_case(&input, out.as_deref())?;
            if out.is_none() {
                print!("{text}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
