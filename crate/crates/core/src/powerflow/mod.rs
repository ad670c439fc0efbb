//! Power-injection equations, the analytic power-flow Jacobian and the
//! Newton-Raphson solver.
//!
//! Injections are written in the off-diagonal/to-ground split
//!
//! ```text
//! P_i = V_i Σ_{k≠i} V_k (G_ik cos θ_ik + B_ik sin θ_ik) − V_i² Σ_{k≠i} G_ik + V_i² g⁰_i
//! Q_i = V_i Σ_{k≠i} V_k (G_ik sin θ_ik − B_ik cos θ_ik) + V_i² Σ_{k≠i} B_ik − V_i² b⁰_i
//! ```
//!
//! where `g⁰_i + j b⁰_i` is the admittance from bus `i` to ground (the
//! admittance-matrix row sum: shunt, half charging, tap asymmetry). The
//! Jacobian uses the magnitude-scaled convention for the `V` columns:
//! `N_ij = V_j ∂P_i/∂V_j`, `L_ij = V_j ∂Q_i/∂V_j`.

mod index_map;
mod newton;
mod solution;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::PowerFlowError;
use crate::network::{build_ybus, AdmittanceMatrix, Network};
use crate::scalar::Real;

pub use index_map::{derivative_label, index_to_label, Axis, Label, Quantity, StateIndexMap};
pub use newton::{solve_powerflow, PowerFlowOptions, PowerFlowSolver};
pub use solution::{BusResult, OperatingPoint, PowerFlowSolution, SolutionReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Analytic,
    #[serde(rename = "LSE")]
    Lse,
    ChainRule,
}

/// Dense `p × p` power-flow Jacobian `∂y/∂x` with its layout.
///
/// Row `k` is injection `y_k`, column `k` is state `x_k`. Depending on
/// provenance the `V` columns are either magnitude-scaled (analytic) or
/// plain partial derivatives (estimates); see [`JacobianMatrix::to_plain`].
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianMatrix<T: Real> {
    pub values: DMatrix<T>,
    pub index_map: StateIndexMap,
    pub provenance: Provenance,
    /// Whether `V` columns carry the `V_j` factor.
    pub v_scaled: bool,
}

impl<T: Real> JacobianMatrix<T> {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Plain partials `∂y/∂x`: undoes the `V_j` column scaling given the
    /// state vector `x` the Jacobian was evaluated at.
    pub fn to_plain(&self, x: &nalgebra::DVector<T>) -> JacobianMatrix<T> {
        if !self.v_scaled {
            return self.clone();
        }
        let mut values = self.values.clone();
        let nt = self.index_map.n_theta();
        for c in nt..self.dim() {
            let vj = x[c];
            values.column_mut(c).unscale_mut(vj);
        }
        JacobianMatrix {
            values,
            index_map: self.index_map.clone(),
            provenance: self.provenance,
            v_scaled: false,
        }
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), PowerFlowError> {
    if expected != got {
        return Err(PowerFlowError::Dimension { expected, got });
    }
    Ok(())
}

/// Per-bus `(P, Q)` from magnitudes and angles.
pub fn injections<T: Real>(
    net: &Network<T>,
    v: &[T],
    theta: &[T],
) -> Result<(Vec<T>, Vec<T>), PowerFlowError> {
    check_len(net.len(), v.len())?;
    check_len(net.len(), theta.len())?;
    if let Some(i) = v.iter().position(|&vi| !(vi > T::zero())) {
        return Err(PowerFlowError::NonPositiveVoltage {
            bus: net.buses()[i].id,
        });
    }
    Ok(injections_with(&build_ybus(net), v, theta))
}

pub(crate) fn injections_with<T: Real>(
    y: &AdmittanceMatrix<T>,
    v: &[T],
    theta: &[T],
) -> (Vec<T>, Vec<T>) {
    let n = y.dim();
    let mut p = vec![T::zero(); n];
    let mut q = vec![T::zero(); n];
    for i in 0..n {
        let (mut sp, mut sq) = (T::zero(), T::zero());
        let (mut gsum, mut bsum) = (T::zero(), T::zero());
        let (mut g0, mut b0) = (T::zero(), T::zero());
        for (k, g, b) in y.row(i) {
            g0 += g;
            b0 += b;
            if k == i {
                continue;
            }
            let (s, c) = (theta[i] - theta[k]).sin_cos();
            sp += v[k] * (g * c + b * s);
            sq += v[k] * (g * s - b * c);
            gsum += g;
            bsum += b;
        }
        let v2 = v[i] * v[i];
        p[i] = v[i] * sp - v2 * gsum + v2 * g0;
        q[i] = v[i] * sq + v2 * bsum - v2 * b0;
    }
    (p, q)
}

/// Analytic Jacobian at per-bus state `(v, theta)`.
pub fn analytic_jacobian<T: Real>(
    net: &Network<T>,
    v: &[T],
    theta: &[T],
) -> Result<JacobianMatrix<T>, PowerFlowError> {
    check_len(net.len(), v.len())?;
    check_len(net.len(), theta.len())?;
    let map = StateIndexMap::new(net);
    Ok(jacobian_with(&build_ybus(net), &map, v, theta))
}

pub(crate) fn jacobian_with<T: Real>(
    y: &AdmittanceMatrix<T>,
    map: &StateIndexMap,
    v: &[T],
    theta: &[T],
) -> JacobianMatrix<T> {
    let n = y.dim();
    let nt = map.n_theta();
    let dim = map.dim();
    let mut theta_pos = vec![None; n];
    let mut v_pos = vec![None; n];
    for (k, i) in map.theta_index().enumerate() {
        theta_pos[i] = Some(k);
    }
    for (k, i) in map.v_index().enumerate() {
        v_pos[i] = Some(nt + k);
    }
    let (p, q) = injections_with(y, v, theta);
    let mut jac = DMatrix::zeros(dim, dim);

    for i in 0..n {
        let (rp, rq) = (theta_pos[i], v_pos[i]);
        if rp.is_none() && rq.is_none() {
            continue;
        }
        let (mut gsum, mut bsum) = (T::zero(), T::zero());
        let (mut g0, mut b0) = (T::zero(), T::zero());
        for (j, g, b) in y.row(i) {
            g0 += g;
            b0 += b;
            if j == i {
                continue;
            }
            gsum += g;
            bsum += b;
            let (s, c) = (theta[i] - theta[j]).sin_cos();
            let vv = v[i] * v[j];
            let h = vv * (g * s - b * c);
            let nn = vv * (g * c + b * s);
            if let (Some(r), Some(col)) = (rp, theta_pos[j]) {
                jac[(r, col)] = h;
            }
            if let (Some(r), Some(col)) = (rp, v_pos[j]) {
                jac[(r, col)] = nn;
            }
            if let (Some(r), Some(col)) = (rq, theta_pos[j]) {
                jac[(r, col)] = -nn;
            }
            if let (Some(r), Some(col)) = (rq, v_pos[j]) {
                jac[(r, col)] = h;
            }
        }
        // Diagonal: off-diagonal formula at θ_ii = 0 with the series-only
        // self admittance −Σ_{k≠i} Y_ik, plus δ_ij corrections.
        let v2 = v[i] * v[i];
        if let Some(r) = rp {
            jac[(r, r)] = v2 * bsum - q[i] - v2 * b0;
            if let Some(c) = rq {
                jac[(r, c)] = -v2 * gsum + p[i] + v2 * g0;
            }
        }
        if let Some(r) = rq {
            let c = theta_pos[i].expect("PQ buses carry θ");
            jac[(r, c)] = v2 * gsum + p[i] - v2 * g0;
            jac[(r, r)] = v2 * bsum + q[i] - v2 * b0;
        }
    }
    JacobianMatrix {
        values: jac,
        index_map: map.clone(),
        provenance: Provenance::Analytic,
        v_scaled: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::{bus, line, two_bus};
    use crate::network::{BusKind, Network};

    #[test]
    fn flat_lossless_two_bus_has_zero_injection() {
        let net = two_bus(0.1);
        let (p, q) = injections(&net, &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!(p.iter().chain(&q).all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn two_bus_angle_difference() {
        let net = two_bus(0.1);
        let (p, _) = injections(&net, &[1.0, 1.0], &[0.1, 0.0]).unwrap();
        assert!((p[0] - 10.0 * 0.1f64.sin()).abs() < 1e-12);
        assert!((p[0] - 0.998_334_166_468_281_5).abs() < 1e-12);
        assert!((p[0] + p[1]).abs() < 1e-12, "lossless line");
    }

    #[test]
    fn dimension_and_voltage_checks() {
        let net = two_bus(0.1);
        assert_eq!(
            injections(&net, &[1.0], &[0.0, 0.0]).unwrap_err(),
            PowerFlowError::Dimension {
                expected: 2,
                got: 1
            }
        );
        assert!(matches!(
            injections(&net, &[1.0, 0.0], &[0.0, 0.0]),
            Err(PowerFlowError::NonPositiveVoltage { bus: 2 })
        ));
        assert!(analytic_jacobian(&net, &[1.0; 3], &[0.0; 2]).is_err());
    }

    #[test]
    fn lossless_flat_state_reduces_to_minus_b() {
        // Three PQ buses around a slack, all G = 0, with shunts.
        let mut buses = vec![bus(1, BusKind::Slack)];
        for id in 2..=4 {
            let mut b = bus(id, BusKind::PQ);
            b.b_shunt = 0.05 * id as f64;
            buses.push(b);
        }
        let net = Network::new(
            buses,
            vec![
                line(1, 2, 0.0, 0.1),
                line(2, 3, 0.0, 0.2),
                line(3, 4, 0.0, 0.25),
                line(4, 1, 0.0, 0.5),
            ],
            vec![],
            100.0,
        )
        .unwrap();
        let y = build_ybus(&net);
        let (v, th) = (vec![1.0; 4], vec![0.0; 4]);
        let (_, q) = injections(&net, &v, &th).unwrap();
        let jac = analytic_jacobian(&net, &v, &th).unwrap().values;
        for r in 0..3 {
            let i = r + 1;
            for c in 0..3 {
                let j = c + 1;
                let (_, bij) = y.get(i, j);
                if i != j {
                    assert!((jac[(r, c)] + bij).abs() < 1e-12);
                } else {
                    let (_, b0) = y.ground(i);
                    let bsum: f64 = y.row(i).filter(|e| e.0 != i).map(|e| e.2).sum();
                    // −Q_i + V² b_i with the to-ground susceptance sign folded in
                    let expect = -q[i] + bsum - b0;
                    assert!((jac[(r, c)] - expect).abs() < 1e-12);
                    let (_, bii) = y.get(i, i);
                    assert!((jac[(r, c)] - (-q[i] - bii)).abs() < 1e-12);
                }
            }
        }
    }
}
