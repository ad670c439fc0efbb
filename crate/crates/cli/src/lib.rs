//! Command implementations behind the `gridtwin` binary.
//!
//! Every command returns a [`CliError`] whose [`CliError::exit_code`] is
//! what the process exits with.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnose;
pub mod error;
pub mod manifest;
pub mod twin;

use std::path::{Path, PathBuf};

use gridtwin::estimation::OutlierRule;
use gridtwin::io::parse_csv_matrix;
use gridtwin::network::{convert_matpower, parse_case, Network};
use gridtwin::powerflow::{solve_powerflow, PowerFlowOptions, StateIndexMap};

pub use config::ExperimentConfig;
pub use diagnose::{diagnose, Diagnosis};
pub use error::CliError;
pub use twin::run_twin;

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn load_case(path: &Path) -> Result<Network<f64>, CliError> {
    parse_case(&read(path)?).map_err(|e| CliError::parse(path, e))
}

/// Solves `case` and returns the solution JSON; with `out`, also writes it
/// to `out/solution.json`.
pub fn cmd_solve(case: &Path, out: Option<&Path>) -> Result<String, CliError> {
    let net = load_case(case)?;
    let sol = solve_powerflow(&net, &PowerFlowOptions::default())?;
    let json = sol.to_json() + "\n";
    if let Some(dir) = out {
        write(&dir.join("solution.json"), &json)?;
    }
    Ok(json)
}

/// Loads a config, applies command-line overrides, and runs the pipeline.
/// Returns the output directory.
pub fn cmd_twin(
    config: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
    emit_heatmaps: bool,
) -> Result<PathBuf, CliError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = out {
        cfg.output_dir = out.to_path_buf();
    }
    cfg.emit_heatmaps |= emit_heatmaps;
    run_twin(&cfg, &cfg.output_dir)?;
    Ok(cfg.output_dir)
}

/// Ranks description-file records against a bias CSV as written by `twin`
/// (`lse_w*_bias.csv`). With `out`, also writes `out/suspects.json`.
pub fn cmd_diagnose(
    bias: &Path,
    case: &Path,
    threshold: f64,
    out: Option<&Path>,
) -> Result<Diagnosis, CliError> {
    let net = load_case(case)?;
    let (header, matrix) =
        parse_csv_matrix::<f64>(&read(bias)?).map_err(|e| CliError::parse(bias, e))?;
    let map = StateIndexMap::new(&net);
    if header != map.state_labels() || matrix.nrows() != map.dim() {
        return Err(CliError::parse(
            bias,
            format!(
                "bias is {}x{} with a header that does not match the case's {} states",
                matrix.nrows(),
                matrix.ncols(),
                map.dim()
            ),
        ));
    }
    let diagnosis = diagnose(&net, &matrix, &OutlierRule { threshold })?;
    if let Some(dir) = out {
        let json = serde_json::to_string_pretty(&diagnosis).expect("plain data serializes") + "\n";
        write(&dir.join("suspects.json"), &json)?;
    }
    Ok(diagnosis)
}

/// Converts a MATPOWER `.m` case; returns the case text and, with `out`,
/// writes it there.
pub fn cmd_convert_case(input: &Path, out: Option<&Path>) -> Result<String, CliError> {
    let text = convert_matpower(&read(input)?).map_err(|e| CliError::parse(input, e))?;
    if let Some(path) = out {
        write(path, &text)?;
    }
    Ok(text)
}
