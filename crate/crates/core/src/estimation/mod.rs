//! Data-driven Jacobian estimation by least squares and bias reporting
//! against the analytic benchmark.

mod qr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::EstimationError;
use crate::network::build_ybus;
use crate::network::Network;
use crate::powerflow::{
    derivative_label, jacobian_with, Axis, JacobianMatrix, Provenance, StateIndexMap,
};
use crate::scalar::Real;
use crate::telemetry::{form_deltas, DeltaMatrices, TelemetrySeries};

use qr::PivotedQr;

/// Elementwise mean and (population) standard deviation of the analytic
/// Jacobian over a series.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianBenchmark<T: Real> {
    pub j_mean: DMatrix<T>,
    pub j_std: DMatrix<T>,
    pub index_map: StateIndexMap,
    /// Same meaning as [`JacobianMatrix::v_scaled`].
    pub v_scaled: bool,
}

impl<T: Real> JacobianBenchmark<T> {
    pub fn mean_matrix(&self) -> JacobianMatrix<T> {
        JacobianMatrix {
            values: self.j_mean.clone(),
            index_map: self.index_map.clone(),
            provenance: Provenance::Analytic,
            v_scaled: self.v_scaled,
        }
    }
}

/// Benchmark in the block convention of the analytic Jacobian (`V` columns
/// magnitude-scaled).
pub fn benchmark_jacobian<T: Real>(
    net: &Network<T>,
    series: &TelemetrySeries<T>,
) -> Result<JacobianBenchmark<T>, EstimationError> {
    benchmark_jacobian_with(net, series, true)
}

/// Benchmark in either convention. Estimates regress `Δy` on `Δx`, so they
/// approximate the plain partials (`v_scaled = false`).
///
/// `net` is the network *description*; it may differ from the network that
/// produced the series as long as the bus layout is the same.
pub fn benchmark_jacobian_with<T: Real>(
    net: &Network<T>,
    series: &TelemetrySeries<T>,
    v_scaled: bool,
) -> Result<JacobianBenchmark<T>, EstimationError> {
    let map = StateIndexMap::new(net);
    if map != series.index_map {
        return Err(EstimationError::Dimension(
            "series layout does not match the network description".into(),
        ));
    }
    let samples = series.len();
    if samples == 0 {
        return Err(EstimationError::EmptySeries);
    }
    let ybus = build_ybus(net);
    let jac_at = |t: usize| {
        let x = series.x.column(t).into_owned();
        let (v, theta) = map.bus_state(net, &x);
        let j = jacobian_with(&ybus, &map, &v, &theta);
        if v_scaled {
            j.values
        } else {
            j.to_plain(&x).values
        }
    };
    // Sums of deviations from the first sample, accumulated in fixed-size
    // chunks and combined in order so the result is thread-count independent.
    let origin = jac_at(0);
    const CHUNK: usize = 256;
    let partial: Vec<(DMatrix<T>, DMatrix<T>)> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut s = DMatrix::zeros(map.dim(), map.dim());
            let mut s2 = s.clone();
            for t in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let d = jac_at(t) - &origin;
                s2 += d.component_mul(&d);
                s += d;
            }
            (s, s2)
        })
        .collect();
    let (mut s, mut s2) = (
        DMatrix::zeros(map.dim(), map.dim()),
        DMatrix::zeros(map.dim(), map.dim()),
    );
    for (a, b) in partial {
        s += a;
        s2 += b;
    }
    let tn = T::of_usize(samples);
    let mean_dev = s / tn;
    let j_std = (s2 / tn - mean_dev.component_mul(&mean_dev)).map(|v| v.max(T::zero()).sqrt());
    Ok(JacobianBenchmark {
        j_mean: origin + mean_dev,
        j_std,
        index_map: map,
        v_scaled,
    })
}

/// Relative pivot size below which `A` counts as rank deficient.
fn rank_tolerance<T: Real>() -> T {
    T::eps().sqrt() * T::of(1e-2)
}

/// Least-squares Jacobian: the minimizer of `‖B − J·A‖_F`, i.e.
/// `Ĵᵀ = (A Aᵀ)⁻¹ A Bᵀ`, computed by a rank-revealing QR of the
/// column-equilibrated `Aᵀ` instead of the normal equations.
///
/// The estimate holds plain partials (`∂y/∂V`, not `V ∂y/∂V`) because `A`
/// holds raw state differences.
pub fn lse_jacobian<T: Real>(
    deltas: &DeltaMatrices<T>,
) -> Result<JacobianMatrix<T>, EstimationError> {
    let (p, cols) = deltas.a.shape();
    if deltas.b.shape() != (p, cols) {
        return Err(EstimationError::Dimension(format!(
            "A is {p}×{cols} but B is {}×{}",
            deltas.b.nrows(),
            deltas.b.ncols()
        )));
    }
    if p != deltas.index_map.dim() {
        return Err(EstimationError::Dimension(format!(
            "A has {p} rows for state dimension {}",
            deltas.index_map.dim()
        )));
    }
    if cols <= p {
        return Err(EstimationError::Underdetermined {
            columns: cols,
            dim: p,
        });
    }
    let mut lambda = deltas.a.transpose();
    let mut scale = vec![T::one(); p];
    for (j, mut col) in lambda.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm > T::zero() {
            col.unscale_mut(norm);
            scale[j] = norm;
        }
    }
    let qr = PivotedQr::new(lambda);
    let diag = qr.diagonal();
    let top = diag[0];
    let tol = rank_tolerance::<T>() * top;
    let rank = diag.iter().filter(|&&d| d > tol).count();
    if rank < p {
        let last = diag[p - 1];
        let condition = if last > T::zero() {
            (top / last).as_f64()
        } else {
            f64::INFINITY
        };
        return Err(EstimationError::IllConditioned {
            rank,
            dim: p,
            condition,
        });
    }
    let mut jt = qr.solve(deltas.b.transpose());
    for (j, mut row) in jt.row_iter_mut().enumerate() {
        row.unscale_mut(scale[j]);
    }
    Ok(JacobianMatrix {
        values: jt.transpose(),
        index_map: deltas.index_map.clone(),
        provenance: Provenance::Lse,
        v_scaled: false,
    })
}

/// Outlier rule: robust z-score of `|bias|` entries,
/// `z = (|b| − median) / (1.4826·MAD)`, flagged when `z ≥ threshold`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierRule {
    pub threshold: f64,
}

impl Default for OutlierRule {
    fn default() -> Self {
        OutlierRule { threshold: 5.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    /// Zero-based injection index.
    pub row: usize,
    /// Zero-based state index.
    pub col: usize,
    pub label: String,
    pub value: f64,
    /// `true` when the injection and the state belong to different buses.
    pub cross_bus: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasReport<T: Real> {
    pub bias: DMatrix<T>,
    pub max_abs: T,
    pub frobenius_rel: T,
    /// Absolute `|bias|` level the outliers were tested against.
    pub threshold: f64,
    /// Cross-bus outliers first, then same-bus ones, each by decreasing
    /// magnitude. A branch error shifts the cross-bus entry `∂P_i/∂θ_j` and
    /// the diagonal entries by equal amounts; only the cross-bus entry says
    /// which branch, so it leads.
    pub outliers: Vec<Outlier>,
    pub index_map: StateIndexMap,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Robust location, scale and absolute threshold for `|values|`.
fn robust_threshold(abs: &[f64], z: f64) -> f64 {
    let mut sorted = abs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = median(&sorted);
    let mut dev: Vec<f64> = sorted.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mad = median(&dev) * 1.4826;
    // With a zero MAD every entry above the median is infinitely far out.
    if mad == 0.0 {
        med.next_up()
    } else {
        med + z * mad
    }
}

/// Absolute threshold and flagged entries of a bias matrix, labelled through
/// `map` and ordered as in [`BiasReport::outliers`].
pub fn find_outliers<T: Real>(
    bias: &DMatrix<T>,
    map: &StateIndexMap,
    rule: &OutlierRule,
) -> Result<(f64, Vec<Outlier>), EstimationError> {
    if bias.shape() != (map.dim(), map.dim()) {
        return Err(EstimationError::Dimension(format!(
            "bias is {:?} for state dimension {}",
            bias.shape(),
            map.dim()
        )));
    }
    let abs: Vec<f64> = bias.iter().map(|v| v.as_f64().abs()).collect();
    let threshold = robust_threshold(&abs, rule.threshold);
    let mut outliers = Vec::new();
    for c in 0..bias.ncols() {
        for r in 0..bias.nrows() {
            let value = bias[(r, c)].as_f64();
            if value.abs() >= threshold {
                let injection = map.label(r, Axis::Injection)?;
                let state = map.label(c, Axis::State)?;
                outliers.push(Outlier {
                    row: r,
                    col: c,
                    label: derivative_label(injection, state),
                    value,
                    cross_bus: injection.bus != state.bus,
                });
            }
        }
    }
    outliers.sort_by(|a, b| {
        b.cross_bus
            .cmp(&a.cross_bus)
            .then(b.value.abs().total_cmp(&a.value.abs()))
            .then((a.row, a.col).cmp(&(b.row, b.col)))
    });
    Ok((threshold, outliers))
}

pub fn bias_report<T: Real>(
    estimate: &JacobianMatrix<T>,
    benchmark: &JacobianBenchmark<T>,
    rule: &OutlierRule,
) -> Result<BiasReport<T>, EstimationError> {
    if estimate.values.shape() != benchmark.j_mean.shape()
        || estimate.index_map != benchmark.index_map
    {
        return Err(EstimationError::Dimension(format!(
            "estimate is {:?}, benchmark is {:?}",
            estimate.values.shape(),
            benchmark.j_mean.shape()
        )));
    }
    if estimate.v_scaled != benchmark.v_scaled {
        return Err(EstimationError::Dimension(
            "estimate and benchmark use different V-column conventions".into(),
        ));
    }
    let bias = &estimate.values - &benchmark.j_mean;
    let max_abs = bias.amax();
    let mean_norm = benchmark.j_mean.norm();
    let frobenius_rel = if mean_norm > T::zero() {
        bias.norm() / mean_norm
    } else {
        bias.norm()
    };
    let (threshold, outliers) = find_outliers(&bias, &benchmark.index_map, rule)?;
    let map = &benchmark.index_map;
    Ok(BiasReport {
        bias,
        max_abs,
        frobenius_rel,
        threshold,
        outliers,
        index_map: map.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    pub max_abs: f64,
    pub frobenius_rel: f64,
    pub threshold: f64,
    pub outliers: Vec<Outlier>,
}

impl<T: Real> BiasReport<T> {
    pub fn summary(&self) -> BiasSummary {
        BiasSummary {
            max_abs: self.max_abs.as_f64(),
            frobenius_rel: self.frobenius_rel.as_f64(),
            threshold: self.threshold,
            outliers: self.outliers.clone(),
        }
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("plain data serializes")
    }

    /// Bias matrix as CSV: header of state labels, one row per injection.
    pub fn to_csv(&self) -> String {
        crate::io::matrix_to_csv(&self.index_map.state_labels(), &self.bias)
    }

    /// Heatmap of `|bias|` with image rows = state index, columns =
    /// injection index.
    pub fn heatmap_pgm(&self) -> Vec<u8> {
        crate::io::heatmap_pgm(&self.bias.transpose())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowError {
    pub window: usize,
    pub frobenius_rel: f64,
    pub max_abs: f64,
}

/// LSE error against `benchmark` for each window length, all windows
/// starting at sample 0.
pub fn monotonicity_study<T: Real>(
    series: &TelemetrySeries<T>,
    windows: &[usize],
    benchmark: &JacobianBenchmark<T>,
) -> Result<Vec<WindowError>, EstimationError> {
    windows
        .par_iter()
        .map(|&w| {
            let deltas = form_deltas(series, 0, w)?;
            let est = lse_jacobian(&deltas)?;
            let report = bias_report(&est, benchmark, &OutlierRule::default())?;
            Ok(WindowError {
                window: w,
                frobenius_rel: report.frobenius_rel.as_f64(),
                max_abs: report.max_abs.as_f64(),
            })
        })
        .collect()
}
