use nalgebra::DVector;

use super::{injections_with, jacobian_with, OperatingPoint, PowerFlowSolution, StateIndexMap};
use crate::error::PowerFlowError;
use crate::network::{build_ybus, AdmittanceMatrix, BusKind, Network};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerFlowOptions<T> {
    /// Infinity-norm bound on the `[P; Q]` mismatch.
    pub tolerance: T,
    pub max_iter: usize,
    /// Start from `V = 1` (setpoints at PV/slack), `θ = 0`; otherwise from
    /// the case file's `Vset` / `ThetaSet` columns.
    pub flat_start: bool,
}

impl<T: Real> Default for PowerFlowOptions<T> {
    fn default() -> Self {
        PowerFlowOptions {
            tolerance: T::of(1e-8),
            max_iter: 20,
            flat_start: true,
        }
    }
}

/// Newton-Raphson solver with the admittance matrix and index map built
/// once, for repeated solves on one topology with varying injections.
#[derive(Clone, Debug)]
pub struct PowerFlowSolver<T: Real> {
    ybus: AdmittanceMatrix<T>,
    map: StateIndexMap,
}

impl<T: Real> PowerFlowSolver<T> {
    pub fn new(net: &Network<T>) -> Self {
        PowerFlowSolver {
            ybus: build_ybus(net),
            map: StateIndexMap::new(net),
        }
    }

    pub fn index_map(&self) -> &StateIndexMap {
        &self.map
    }

    pub fn ybus(&self) -> &AdmittanceMatrix<T> {
        &self.ybus
    }

    /// Initial per-bus `(V, θ)`.
    pub fn initial_state(net: &Network<T>, flat: bool) -> (Vec<T>, Vec<T>) {
        let slack = net.slack_index();
        let v = net
            .buses()
            .iter()
            .map(|b| match b.kind {
                BusKind::PQ if flat => T::one(),
                _ => b.v_setpoint,
            })
            .collect();
        let theta = net
            .buses()
            .iter()
            .enumerate()
            .map(|(i, b)| {
                if flat && i != slack {
                    T::zero()
                } else {
                    b.theta_setpoint
                }
            })
            .collect();
        (v, theta)
    }

    /// Solves for the network's scheduled injections.
    pub fn solve(
        &self,
        net: &Network<T>,
        opts: &PowerFlowOptions<T>,
    ) -> Result<PowerFlowSolution<T>, PowerFlowError> {
        let (p, q) = net.scheduled_injections();
        let (v, theta) = Self::initial_state(net, opts.flat_start);
        self.solve_targets(net, &p, &q, v, theta, opts)
    }

    /// Solves for per-bus targets `p`, `q` from the given start.
    ///
    /// Only the entries selected by the index map are enforced; the start's
    /// slack/PV magnitudes and slack angle are held fixed.
    pub fn solve_targets(
        &self,
        net: &Network<T>,
        p: &[T],
        q: &[T],
        mut v: Vec<T>,
        mut theta: Vec<T>,
        opts: &PowerFlowOptions<T>,
    ) -> Result<PowerFlowSolution<T>, PowerFlowError> {
        let n = self.ybus.dim();
        for len in [p.len(), q.len(), v.len(), theta.len()] {
            if len != n {
                return Err(PowerFlowError::Dimension {
                    expected: n,
                    got: len,
                });
            }
        }
        let map = &self.map;
        let nt = map.n_theta();
        let target = map.injection_vector(p, q);
        let mut history = Vec::new();
        let mut iter = 0;
        loop {
            let (pc, qc) = injections_with(&self.ybus, &v, &theta);
            let mismatch = &target - map.injection_vector(&pc, &qc);
            let norm = mismatch.amax();
            history.push(norm);
            if !norm.is_finite_value() {
                return Err(PowerFlowError::NonConvergence {
                    iterations: iter,
                    mismatch: f64::INFINITY,
                });
            }
            if norm < opts.tolerance {
                let x = map.state_vector(&v, &theta);
                let y = map.injection_vector(&pc, &qc);
                return Ok(PowerFlowSolution {
                    point: OperatingPoint {
                        x,
                        y,
                        index_map: map.clone(),
                    },
                    iterations: iter,
                    final_mismatch: norm,
                    mismatch_history: history,
                    bus_ids: net.buses().iter().map(|b| b.id).collect(),
                    v,
                    theta,
                    p: pc,
                    q: qc,
                });
            }
            if iter == opts.max_iter {
                return Err(PowerFlowError::NonConvergence {
                    iterations: iter,
                    mismatch: norm.as_f64(),
                });
            }
            iter += 1;
            let jac = jacobian_with(&self.ybus, map, &v, &theta).values;
            let dx: DVector<T> = jac
                .lu()
                .solve(&mismatch)
                .filter(|dx| dx.iter().all(|d| d.is_finite_value()))
                .ok_or(PowerFlowError::SingularJacobian { iteration: iter })?;
            for (k, i) in map.theta_index().enumerate() {
                theta[i] += dx[k];
            }
            // V columns are magnitude-scaled, so the step is ΔV/V.
            for (k, i) in map.v_index().enumerate() {
                let vi = v[i];
                v[i] = vi + vi * dx[nt + k];
            }
        }
    }
}

/// Full Newton-Raphson power flow.
pub fn solve_powerflow<T: Real>(
    net: &Network<T>,
    opts: &PowerFlowOptions<T>,
) -> Result<PowerFlowSolution<T>, PowerFlowError> {
    PowerFlowSolver::new(net).solve(net, opts)
}
