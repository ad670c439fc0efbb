//! Data-driven digital twin of a power network: AC power flow, synthetic
//! telemetry, data-driven Jacobian estimation, a neural power-flow monitor
//! and random-matrix analytics of estimation bias.
//!
//! Every numeric type is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

// `!(x > 0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod error;
pub mod estimation;
pub mod io;
pub mod network;
pub mod neural;
pub mod powerflow;
pub mod scalar;
pub mod telemetry;

pub use scalar::Real;

pub type Network = network::Network<f64>;
pub type BranchEdit = network::BranchEdit<f64>;
pub type PowerFlowSolution = powerflow::PowerFlowSolution<f64>;
pub type JacobianMatrix = powerflow::JacobianMatrix<f64>;
pub type TelemetrySeries = telemetry::TelemetrySeries<f64>;
pub type DeltaMatrices = telemetry::DeltaMatrices<f64>;
pub type JacobianBenchmark = estimation::JacobianBenchmark<f64>;
pub type BiasReport = estimation::BiasReport<f64>;
pub type MlpModel = neural::MlpModel<f64>;
pub type FactorDecomposition = analytics::FactorDecomposition<f64>;
