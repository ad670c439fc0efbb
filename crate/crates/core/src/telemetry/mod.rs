//! Synthetic operating-point series under Gaussian injection fluctuations,
//! row standardization, and the consecutive-difference matrices `A`, `B`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::TelemetryError;
use crate::io::{matrix_to_csv, parse_csv_matrix};
use crate::network::{BusKind, Network};
use crate::powerflow::{PowerFlowOptions, PowerFlowSolver, StateIndexMap};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FluctuationConfig {
    /// Std of the multiplicative factor on nominal demands and PV generation.
    pub relative_sigma: f64,
    /// Std of additive noise applied by [`standardize`].
    pub artificial_noise_sigma: f64,
    /// Std (per-unit) of additive noise on every enforced injection: each
    /// non-slack `P` and each PQ-bus `Q`. Stands in for metering error and
    /// unmodelled small injections; without it zero-injection buses never
    /// move and `A` is rank deficient.
    pub injection_noise_sigma: f64,
    pub seed: u64,
    pub samples: usize,
}

impl Default for FluctuationConfig {
    fn default() -> Self {
        FluctuationConfig {
            relative_sigma: 0.02,
            artificial_noise_sigma: 1e-6,
            injection_noise_sigma: 3e-3,
            seed: 0,
            samples: 9600,
        }
    }
}

impl FluctuationConfig {
    pub fn validate(&self) -> Result<(), TelemetryError> {
        let bad = |what: &str| Err(TelemetryError::Config(what.into()));
        if !(self.relative_sigma >= 0.0) {
            return bad("relative_sigma must be nonnegative");
        }
        if !(self.artificial_noise_sigma >= 0.0) {
            return bad("artificial_noise_sigma must be nonnegative");
        }
        if !(self.injection_noise_sigma >= 0.0) {
            return bad("injection_noise_sigma must be nonnegative");
        }
        if self.samples < 2 {
            return bad("at least 2 samples are required");
        }
        Ok(())
    }
}

/// `p × T` state and injection series, one converged power flow per column.
#[derive(Clone, Debug, PartialEq)]
pub struct TelemetrySeries<T: Real> {
    pub x: DMatrix<T>,
    pub y: DMatrix<T>,
    pub index_map: StateIndexMap,
    pub timestamps: Vec<usize>,
}

impl<T: Real> TelemetrySeries<T> {
    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// Columns `start .. start + len` as a new series.
    pub fn window(&self, start: usize, len: usize) -> Result<Self, TelemetryError> {
        check_window(start, len, self.len())?;
        Ok(TelemetrySeries {
            x: self.x.columns(start, len).into_owned(),
            y: self.y.columns(start, len).into_owned(),
            index_map: self.index_map.clone(),
            timestamps: self.timestamps[start..start + len].to_vec(),
        })
    }
}

fn check_window(start: usize, len: usize, samples: usize) -> Result<(), TelemetryError> {
    if start.checked_add(len).is_none_or(|end| end > samples) {
        return Err(TelemetryError::Window {
            start,
            len,
            samples,
        });
    }
    Ok(())
}

/// Normal draws per bus and sample: demand P, demand Q, generation P,
/// injection noise P, injection noise Q. Fixed so that a sample's draws do
/// not depend on which buses carry load.
const DRAWS_PER_BUS: usize = 5;

fn sample_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

/// Per-bus `(P, Q)` targets for sample `t`.
fn sample_targets<T: Real>(
    net: &Network<T>,
    cfg: &FluctuationConfig,
    t: usize,
) -> (Vec<T>, Vec<T>) {
    let mut rng = sample_rng(cfg.seed, t);
    let n = net.len();
    let draws: Vec<f64> = (0..n * DRAWS_PER_BUS)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let factor = |k: usize| T::of(1.0 + cfg.relative_sigma * draws[k]);
    let slack = net.slack_index();
    let mut p = vec![T::zero(); n];
    let mut q = vec![T::zero(); n];
    for (i, bus) in net.buses().iter().enumerate() {
        let d = i * DRAWS_PER_BUS;
        p[i] = -bus.p_demand * factor(d);
        q[i] = -bus.q_demand * factor(d + 1);
    }
    for g in net.generators() {
        let i = net.bus_index(g.bus).expect("validated generator bus");
        let d = i * DRAWS_PER_BUS;
        p[i] += if i == slack {
            g.p_gen
        } else {
            g.p_gen * factor(d + 2)
        };
        q[i] += g.q_gen;
    }
    let noise = T::of(cfg.injection_noise_sigma);
    for (i, bus) in net.buses().iter().enumerate() {
        let d = i * DRAWS_PER_BUS;
        if i != slack {
            p[i] += noise * T::of(draws[d + 3]);
        }
        if bus.kind == BusKind::PQ {
            q[i] += noise * T::of(draws[d + 4]);
        }
    }
    (p, q)
}

/// Simulates `cfg.samples` independent snapshots.
///
/// Every nominal demand (P and Q) and every non-slack generator's P is
/// scaled by `1 + relative_sigma·ε`, `ε ~ N(0, 1)` i.i.d. per bus and
/// sample; injection noise is then added and the power flow solved from
/// the nominal solution. Recorded `y` are the injections evaluated at the
/// converged `x`, so every pair is exactly consistent. Sample `t` draws
/// from its own stream of the seeded generator, so the result does not
/// depend on thread scheduling.
pub fn simulate_series<T: Real>(
    net: &Network<T>,
    cfg: &FluctuationConfig,
) -> Result<TelemetrySeries<T>, TelemetryError> {
    cfg.validate()?;
    let opts = PowerFlowOptions::default();
    let solver = PowerFlowSolver::new(net);
    let nominal = solver
        .solve(net, &opts)
        .map_err(|source| TelemetryError::Sample { sample: 0, source })?;
    let columns: Vec<_> = (0..cfg.samples)
        .into_par_iter()
        .map(|t| {
            let (p, q) = sample_targets(net, cfg, t);
            solver
                .solve_targets(net, &p, &q, nominal.v.clone(), nominal.theta.clone(), &opts)
                .map(|s| (s.point.x, s.point.y))
                .map_err(|source| TelemetryError::Sample { sample: t, source })
        })
        .collect::<Result<_, _>>()?;
    let map = solver.index_map().clone();
    let dim = map.dim();
    let mut x = DMatrix::zeros(dim, cfg.samples);
    let mut y = DMatrix::zeros(dim, cfg.samples);
    for (t, (xc, yc)) in columns.into_iter().enumerate() {
        x.set_column(t, &xc);
        y.set_column(t, &yc);
    }
    Ok(TelemetrySeries {
        x,
        y,
        index_map: map,
        timestamps: (0..cfg.samples).collect(),
    })
}

/// Adds `N(0, noise_sigma²)` to every entry, then z-scores each row
/// (population standard deviation).
///
/// The noise comes from a stream of `seed` reserved for this purpose, so it
/// never coincides with the simulation draws.
pub fn standardize<T: Real>(
    m: &DMatrix<T>,
    noise_sigma: f64,
    seed: u64,
) -> Result<DMatrix<T>, TelemetryError> {
    let cols = m.ncols();
    if cols < 2 {
        return Err(TelemetryError::TooFewSamples { need: 2, got: cols });
    }
    let mut out = m.clone();
    if noise_sigma > 0.0 {
        let mut rng = sample_rng(seed, usize::MAX);
        let s = T::of(noise_sigma);
        for v in out.iter_mut() {
            *v += s * T::of(rng.sample(StandardNormal));
        }
    }
    let tn = T::of_usize(cols);
    for (r, mut row) in out.row_iter_mut().enumerate() {
        let mean = row.iter().copied().sum::<T>() / tn;
        for v in row.iter_mut() {
            *v -= mean;
        }
        // Second pass removes the rounding left in the first mean.
        let residual = row.iter().copied().sum::<T>() / tn;
        for v in row.iter_mut() {
            *v -= residual;
        }
        let std = (row.iter().map(|&v| v * v).sum::<T>() / tn).sqrt();
        // A constant row leaves only rounding noise around its mean.
        if !(std > T::of(16.0) * T::eps() * mean.abs()) {
            return Err(TelemetryError::ZeroVariance { row: r });
        }
        for v in row.iter_mut() {
            *v /= std;
        }
    }
    Ok(out)
}

/// CSV text for the state and injection tables: a header of labels
/// (`θ2,...,V9` / `P2,...,Q9`), then one row per sample.
pub fn series_to_csv<T: Real>(series: &TelemetrySeries<T>) -> (String, String) {
    let map = &series.index_map;
    (
        matrix_to_csv(&map.state_labels(), &series.x.transpose()),
        matrix_to_csv(&map.injection_labels(), &series.y.transpose()),
    )
}

/// Inverse of [`series_to_csv`]; headers must match the network's layout.
pub fn series_from_csv<T: Real>(
    net: &Network<T>,
    states: &str,
    injections: &str,
) -> Result<TelemetrySeries<T>, TelemetryError> {
    let map = StateIndexMap::new(net);
    let (hx, x) = parse_csv_matrix::<T>(states).map_err(TelemetryError::Csv)?;
    let (hy, y) = parse_csv_matrix::<T>(injections).map_err(TelemetryError::Csv)?;
    if hx != map.state_labels() || hy != map.injection_labels() {
        return Err(TelemetryError::Csv(
            "header does not match the network layout".into(),
        ));
    }
    if x.nrows() != y.nrows() {
        return Err(TelemetryError::Csv(format!(
            "{} state rows but {} injection rows",
            x.nrows(),
            y.nrows()
        )));
    }
    let t = x.nrows();
    Ok(TelemetrySeries {
        x: x.transpose(),
        y: y.transpose(),
        index_map: map,
        timestamps: (0..t).collect(),
    })
}

/// Consecutive differences `Δx`, `Δy` over a window.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaMatrices<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub index_map: StateIndexMap,
}

impl<T: Real> DeltaMatrices<T> {
    pub fn columns(&self) -> usize {
        self.a.ncols()
    }
}

fn diff<T: Real>(m: &DMatrix<T>, start: usize, len: usize) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), len - 1, |r, c| {
        m[(r, start + c + 1)] - m[(r, start + c)]
    })
}

pub fn form_deltas<T: Real>(
    series: &TelemetrySeries<T>,
    start: usize,
    len: usize,
) -> Result<DeltaMatrices<T>, TelemetryError> {
    check_window(start, len, series.len())?;
    if len < 2 {
        return Err(TelemetryError::TooFewSamples { need: 2, got: len });
    }
    Ok(DeltaMatrices {
        a: diff(&series.x, start, len),
        b: diff(&series.y, start, len),
        index_map: series.index_map.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(x: DMatrix<f64>) -> TelemetrySeries<f64> {
        let net = crate::network::tests::two_bus(0.1);
        let t = x.ncols();
        TelemetrySeries {
            y: x.clone() * 2.0,
            x,
            index_map: StateIndexMap::new(&net),
            timestamps: (0..t).collect(),
        }
    }

    #[test]
    fn deltas_are_consecutive_differences() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 4.0, 9.0, 0.5, 0.25, 2.0]);
        let d = form_deltas(&series(x), 0, 3).unwrap();
        assert_eq!(d.a, DMatrix::from_row_slice(2, 2, &[3.0, 5.0, -0.25, 1.75]));
        assert_eq!(d.b, d.a.clone() * 2.0);
    }

    #[test]
    fn window_bounds() {
        let s = series(DMatrix::zeros(2, 5));
        assert!(form_deltas(&s, 0, 5).unwrap().a.iter().all(|&v| v == 0.0));
        assert!(matches!(
            form_deltas(&s, 3, 3),
            Err(TelemetryError::Window {
                start: 3,
                len: 3,
                samples: 5
            })
        ));
        assert!(matches!(
            form_deltas(&s, 0, 1),
            Err(TelemetryError::TooFewSamples { .. })
        ));
        assert!(form_deltas(&s, usize::MAX, 2).is_err());
    }

    #[test]
    fn constant_row_without_noise_is_rejected() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 0.7, 0.7, 0.7]);
        assert!(matches!(
            standardize(&m, 0.0, 1),
            Err(TelemetryError::ZeroVariance { row: 1 })
        ));
        assert!(standardize(&m, 1e-6, 1).is_ok());
    }

    #[test]
    fn config_validation() {
        let mut cfg = FluctuationConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.samples = 1;
        assert!(cfg.validate().is_err());
        cfg.samples = 10;
        cfg.relative_sigma = -0.1;
        assert!(cfg.validate().is_err());
        cfg.relative_sigma = f64::NAN;
        assert!(cfg.validate().is_err());
    }
}
