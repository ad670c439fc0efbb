use std::path::PathBuf;

use gridtwin::error::{
    AnalyticsError, EstimationError, NetworkError, NeuralError, PowerFlowError, TelemetryError,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        CliError::Parse {
            path: path.into(),
            msg: msg.to_string(),
        }
    }

    /// Process exit code. 2 is left to argument-parsing errors.
    ///
    /// | code | failure |
    /// |---|---|
    /// | 3 | file I/O |
    /// | 4 | case, CSV or config parsing; invalid config or network edit |
    /// | 5 | power flow (non-convergence, singular Jacobian) |
    /// | 6 | telemetry, estimation, neural or analytics |
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 3,
            CliError::Parse { .. } | CliError::Config(_) | CliError::Network(_) => 4,
            CliError::PowerFlow(PowerFlowError::Network(_)) => 4,
            CliError::PowerFlow(_) => 5,
            CliError::Telemetry(TelemetryError::Sample { .. }) => 5,
            CliError::Telemetry(TelemetryError::Config(_)) => 4,
            CliError::Estimation(EstimationError::PowerFlow(_)) => 5,
            CliError::Telemetry(_)
            | CliError::Estimation(_)
            | CliError::Neural(_)
            | CliError::Analytics(_) => 6,
            CliError::Stage { source, .. } => source.exit_code(),
        }
    }
}
