use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::PowerFlowError;
use crate::network::{BusKind, Network};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    Theta,
    V,
    P,
    Q,
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantity::Theta => "θ",
            Quantity::V => "V",
            Quantity::P => "P",
            Quantity::Q => "Q",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    State,
    Injection,
}

/// A quantity at a bus, e.g. `θ49` or `P66`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Label {
    pub bus: usize,
    pub quantity: Quantity,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.quantity, self.bus)
    }
}

/// Formats a Jacobian entry as `∂P66/∂θ49`.
pub fn derivative_label(injection: Label, state: Label) -> String {
    format!("∂{injection}/∂{state}")
}

/// Layout of the flattened state `x = [θ; V]` and injection `y = [P; Q]`.
///
/// θ and P run over non-slack buses, V and Q over PQ buses, each in
/// ascending bus id. Positions `k` of `x` and `y` refer to the same bus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateIndexMap {
    /// `(bus id, position in the network's bus list)` for θ / P entries.
    theta: Vec<(usize, usize)>,
    /// Same for V / Q entries.
    v: Vec<(usize, usize)>,
}

impl StateIndexMap {
    pub fn new<T: Real>(net: &Network<T>) -> Self {
        let mut theta: Vec<(usize, usize)> = net
            .buses()
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind != BusKind::Slack)
            .map(|(i, b)| (b.id, i))
            .collect();
        let mut v: Vec<(usize, usize)> = net
            .buses()
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::PQ)
            .map(|(i, b)| (b.id, i))
            .collect();
        theta.sort_unstable();
        v.sort_unstable();
        StateIndexMap { theta, v }
    }

    /// State dimension `p = (n − 1) + l`.
    pub fn dim(&self) -> usize {
        self.theta.len() + self.v.len()
    }

    pub fn n_theta(&self) -> usize {
        self.theta.len()
    }

    pub fn n_v(&self) -> usize {
        self.v.len()
    }

    pub fn theta_buses(&self) -> impl Iterator<Item = usize> + '_ {
        self.theta.iter().map(|&(id, _)| id)
    }

    pub fn v_buses(&self) -> impl Iterator<Item = usize> + '_ {
        self.v.iter().map(|&(id, _)| id)
    }

    /// Network bus positions of the θ entries.
    pub(crate) fn theta_index(&self) -> impl Iterator<Item = usize> + '_ {
        self.theta.iter().map(|&(_, i)| i)
    }

    pub(crate) fn v_index(&self) -> impl Iterator<Item = usize> + '_ {
        self.v.iter().map(|&(_, i)| i)
    }

    /// Label of the zero-based position `k` along `axis`.
    pub fn label(&self, k: usize, axis: Axis) -> Result<Label, PowerFlowError> {
        let nt = self.theta.len();
        let (bus, first) = if k < nt {
            (self.theta[k].0, true)
        } else if k < self.dim() {
            (self.v[k - nt].0, false)
        } else {
            return Err(PowerFlowError::OutOfRange {
                position: k,
                len: self.dim(),
            });
        };
        let quantity = match (axis, first) {
            (Axis::State, true) => Quantity::Theta,
            (Axis::State, false) => Quantity::V,
            (Axis::Injection, true) => Quantity::P,
            (Axis::Injection, false) => Quantity::Q,
        };
        Ok(Label { bus, quantity })
    }

    /// Zero-based position of a label, if present.
    pub fn position(&self, label: Label) -> Option<usize> {
        let (list, offset) = match label.quantity {
            Quantity::Theta | Quantity::P => (&self.theta, 0),
            Quantity::V | Quantity::Q => (&self.v, self.theta.len()),
        };
        list.binary_search_by_key(&label.bus, |&(id, _)| id)
            .ok()
            .map(|k| k + offset)
    }

    /// `∂y_row/∂x_col` label for zero-based matrix coordinates.
    pub fn entry_label(&self, row: usize, col: usize) -> Result<String, PowerFlowError> {
        Ok(derivative_label(
            self.label(row, Axis::Injection)?,
            self.label(col, Axis::State)?,
        ))
    }

    /// Packs per-bus magnitudes and angles into `x`.
    pub fn state_vector<T: Real>(&self, v: &[T], theta: &[T]) -> DVector<T> {
        DVector::from_iterator(
            self.dim(),
            self.theta_index()
                .map(|i| theta[i])
                .chain(self.v_index().map(|i| v[i])),
        )
    }

    /// Packs per-bus `P`, `Q` into `y`.
    pub fn injection_vector<T: Real>(&self, p: &[T], q: &[T]) -> DVector<T> {
        DVector::from_iterator(
            self.dim(),
            self.theta_index()
                .map(|i| p[i])
                .chain(self.v_index().map(|i| q[i])),
        )
    }

    /// Writes `x` back into per-bus arrays, leaving fixed entries alone.
    pub fn scatter_state<T: Real>(&self, x: &DVector<T>, v: &mut [T], theta: &mut [T]) {
        let nt = self.theta.len();
        for (k, i) in self.theta_index().enumerate() {
            theta[i] = x[k];
        }
        for (k, i) in self.v_index().enumerate() {
            v[i] = x[nt + k];
        }
    }

    /// Per-bus `(V, θ)` for state `x`, with slack and PV values from setpoints.
    pub fn bus_state<T: Real>(&self, net: &Network<T>, x: &DVector<T>) -> (Vec<T>, Vec<T>) {
        let mut v: Vec<T> = net.buses().iter().map(|b| b.v_setpoint).collect();
        let mut theta = vec![T::zero(); net.len()];
        theta[net.slack_index()] = net.buses()[net.slack_index()].theta_setpoint;
        self.scatter_state(x, &mut v, &mut theta);
        (v, theta)
    }

    /// Column labels for a state table, e.g. `θ2,θ3,...,V4,...`.
    pub fn state_labels(&self) -> Vec<String> {
        (0..self.dim())
            .map(|k| self.label(k, Axis::State).unwrap().to_string())
            .collect()
    }

    pub fn injection_labels(&self) -> Vec<String> {
        (0..self.dim())
            .map(|k| self.label(k, Axis::Injection).unwrap().to_string())
            .collect()
    }
}

/// Label for a one-based position as printed in reports.
///
/// Position 1 is the first θ (or P) entry; `dim()` is the last V (or Q).
pub fn index_to_label(
    map: &StateIndexMap,
    position: usize,
    axis: Axis,
) -> Result<Label, PowerFlowError> {
    if position == 0 {
        return Err(PowerFlowError::OutOfRange {
            position,
            len: map.dim(),
        });
    }
    map.label(position - 1, axis)
        .map_err(|_| PowerFlowError::OutOfRange {
            position,
            len: map.dim(),
        })
}
