use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::StateIndexMap;
use crate::scalar::Real;

/// One `(x, y)` snapshot: state `[θ; V]` and injections `[P; Q]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatingPoint<T: Real> {
    pub x: DVector<T>,
    pub y: DVector<T>,
    pub index_map: StateIndexMap,
}

/// Converged power flow.
///
/// `v`, `theta`, `p`, `q` are per bus in network order and include the
/// slack `P, Q` and PV-bus `Q` that the reduced vectors leave out.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerFlowSolution<T: Real> {
    pub point: OperatingPoint<T>,
    pub iterations: usize,
    pub final_mismatch: T,
    /// Infinity-norm mismatch before each iteration, ending with the final one.
    pub mismatch_history: Vec<T>,
    pub bus_ids: Vec<usize>,
    pub v: Vec<T>,
    pub theta: Vec<T>,
    pub p: Vec<T>,
    pub q: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusResult {
    pub id: usize,
    pub v: f64,
    pub theta_deg: f64,
    pub p: f64,
    pub q: f64,
}

/// JSON shape of a solution: bus table plus solver statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_mismatch: f64,
    pub mismatch_history: Vec<f64>,
    pub buses: Vec<BusResult>,
}

impl<T: Real> PowerFlowSolution<T> {
    pub fn report(&self) -> SolutionReport {
        SolutionReport {
            converged: true,
            iterations: self.iterations,
            final_mismatch: self.final_mismatch.as_f64(),
            mismatch_history: self.mismatch_history.iter().map(|m| m.as_f64()).collect(),
            buses: (0..self.bus_ids.len())
                .map(|i| BusResult {
                    id: self.bus_ids[i],
                    v: self.v[i].as_f64(),
                    theta_deg: self.theta[i].as_f64().to_degrees(),
                    p: self.p[i].as_f64(),
                    q: self.q[i].as_f64(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.report()).expect("plain data serializes")
    }
}
