use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid network: {0}")]
    Semantic(String),
    #[error("unknown branch reference: {0}")]
    UnknownBranch(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("power flow did not converge in {iterations} iterations (mismatch {mismatch:e})")]
    NonConvergence { iterations: usize, mismatch: f64 },
    #[error("singular Jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },
    #[error("position {position} out of range for axis of length {len}")]
    OutOfRange { position: usize, len: usize },
    #[error("nonpositive voltage magnitude at bus {bus}")]
    NonPositiveVoltage { bus: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TelemetryError {
    #[error("invalid fluctuation config: {0}")]
    Config(String),
    #[error("sample {sample}: {source}")]
    Sample {
        sample: usize,
        #[source]
        source: PowerFlowError,
    },
    #[error("row {row} has zero variance")]
    ZeroVariance { row: usize },
    #[error("window [{start}, {start}+{len}) out of range for {samples} samples")]
    Window {
        start: usize,
        len: usize,
        samples: usize,
    },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("underdetermined: {columns} delta columns for state dimension {dim}")]
    Underdetermined { columns: usize, dim: usize },
    #[error("ill-conditioned delta matrix: numerical rank {rank} < {dim} (condition estimate {condition:e})")]
    IllConditioned {
        rank: usize,
        dim: usize,
        condition: f64,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty series")]
    EmptySeries,
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("model format: {0}")]
    Format(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("num_factors {k} out of range (must be < {limit})")]
    FactorCount { k: usize, limit: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}
