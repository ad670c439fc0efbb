//! Factor-model decomposition and random-matrix spectral analysis.

mod marchenko_pastur;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::AnalyticsError;
use crate::scalar::Real;

pub use marchenko_pastur::{mp_cdf, mp_edges, tracy_widom_edge};

/// `X = L·F + R` with `k` factors.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorDecomposition<T: Real> {
    /// `k × T`, mutually orthogonal rows.
    pub factors: DMatrix<T>,
    /// `N × k`.
    pub loadings: DMatrix<T>,
    /// `N × T`.
    pub residues: DMatrix<T>,
    pub num_factors: usize,
    /// Eigenvalues of `(1/T)·Z Zᵀ`, descending (`Z` = row-scaled input).
    pub eigenvalues: Vec<T>,
}

/// Population standard deviation of each row, with zero-variance rows
/// reported as `None`.
fn row_std<T: Real>(x: &DMatrix<T>) -> Vec<(T, Option<T>)> {
    let tn = T::of_usize(x.ncols());
    x.row_iter()
        .map(|row| {
            let mean = row.iter().copied().sum::<T>() / tn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / tn;
            let std = var.sqrt();
            let tiny = T::of(16.0) * T::eps() * mean.abs();
            (mean, if std > tiny { Some(std) } else { None })
        })
        .collect()
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
fn sorted_eigen<T: Real>(c: DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Principal-component factor model of the row-scaled matrix.
///
/// Rows are divided by their standard deviation (not centred, so a rank-`k`
/// input is reproduced by `k` factors); `F = U_kᵀ Z` and `L = S·U_k` with
/// `U_k` the leading eigenvectors of `(1/T) Z Zᵀ`. Zero-variance rows keep
/// unit scale.
pub fn factor_decompose<T: Real>(
    x: &DMatrix<T>,
    num_factors: usize,
) -> Result<FactorDecomposition<T>, AnalyticsError> {
    let (n, t) = x.shape();
    let limit = n.min(t);
    if num_factors >= limit {
        return Err(AnalyticsError::FactorCount {
            k: num_factors,
            limit,
        });
    }
    let scale: Vec<T> = row_std(x)
        .into_iter()
        .map(|(_, s)| s.unwrap_or_else(T::one))
        .collect();
    let mut z = x.clone();
    for (r, mut row) in z.row_iter_mut().enumerate() {
        row.unscale_mut(scale[r]);
    }
    let cov = (&z * z.transpose()) / T::of_usize(t);
    let (eigenvalues, vectors) = sorted_eigen(cov);
    let uk = vectors.columns(0, num_factors).into_owned();
    let factors = uk.transpose() * &z;
    let mut loadings = uk;
    for (r, mut row) in loadings.row_iter_mut().enumerate() {
        row.scale_mut(scale[r]);
    }
    let residues = x - &loadings * &factors;
    Ok(FactorDecomposition {
        factors,
        loadings,
        residues,
        num_factors,
        eigenvalues,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Ascending, nonnegative.
    pub eigenvalues: Vec<f64>,
    /// Marchenko-Pastur bulk edges `(1 ± √(N/T))²`.
    pub mp_bulk_edges: (f64, f64),
    /// Level above which an eigenvalue counts as a spike: `λ₊` widened by
    /// the 99% Tracy-Widom fluctuation of the largest noise eigenvalue.
    pub spike_threshold: f64,
    /// Descending.
    pub spikes: Vec<f64>,
    pub ks_distance: f64,
    pub rows: usize,
    pub columns: usize,
}

/// Spectrum of `(1/T)·R̃ R̃ᵀ` where `R̃` is `r` with rows z-scored.
pub fn spectrum_report<T: Real>(r: &DMatrix<T>) -> Result<SpectrumReport, AnalyticsError> {
    let (n, t) = r.shape();
    if n < 2 || t < 2 {
        return Err(AnalyticsError::Degenerate(format!(
            "need at least 2 rows and 2 columns, got {n}×{t}"
        )));
    }
    let stats = row_std(r);
    let flat: Vec<usize> = stats
        .iter()
        .enumerate()
        .filter(|(_, s)| s.1.is_none())
        .map(|(k, _)| k)
        .collect();
    if !flat.is_empty() {
        return Err(AnalyticsError::Degenerate(format!(
            "zero-variance rows {flat:?}"
        )));
    }
    // Standardize in f64: the spectrum is reported in f64 regardless of T.
    let z = DMatrix::from_fn(n, t, |i, j| {
        let (mean, std) = stats[i];
        ((r[(i, j)] - mean) / std.expect("checked above")).as_f64()
    });
    let cov = (&z * z.transpose()) / t as f64;
    let (desc, _) = sorted_eigen(cov);
    let mut eigenvalues: Vec<f64> = desc.into_iter().map(|v| v.max(0.0)).collect();
    eigenvalues.reverse();
    let edges = mp_edges(n, t);
    let spike_threshold = edges.1.max(tracy_widom_edge(n, t));
    let spikes: Vec<f64> = eigenvalues
        .iter()
        .rev()
        .copied()
        .filter(|&v| v > spike_threshold)
        .collect();
    let ks_distance = ks_distance(&eigenvalues, n, t);
    Ok(SpectrumReport {
        eigenvalues,
        mp_bulk_edges: edges,
        spike_threshold,
        spikes,
        ks_distance,
        rows: n,
        columns: t,
    })
}

/// Kolmogorov-Smirnov distance between the empirical spectral distribution
/// of ascending `eigenvalues` and the Marchenko-Pastur law.
fn ks_distance(eigenvalues: &[f64], n: usize, t: usize) -> f64 {
    let m = eigenvalues.len() as f64;
    eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = mp_cdf(v, n, t);
            (i as f64 / m - f).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max)
}

impl SpectrumReport {
    pub fn fraction_outside_bulk(&self) -> f64 {
        let (lo, hi) = self.mp_bulk_edges;
        let outside = self
            .eigenvalues
            .iter()
            .filter(|&&v| v < lo || v > hi)
            .count();
        outside as f64 / self.eigenvalues.len() as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// Eigenvalue histogram over `[0, max(λ_max, λ₊)]` as CSV
    /// (`bin_start,bin_end,count,density,mp_density`).
    pub fn histogram_csv(&self, bins: usize) -> String {
        let top = self
            .eigenvalues
            .last()
            .copied()
            .unwrap_or(0.0)
            .max(self.mp_bulk_edges.1);
        let width = top / bins as f64;
        let mut counts = vec![0usize; bins];
        for &v in &self.eigenvalues {
            let k = ((v / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        let total = self.eigenvalues.len() as f64;
        let mut out = String::from("bin_start,bin_end,count,density,mp_density\n");
        for (k, &c) in counts.iter().enumerate() {
            let (a, b) = (k as f64 * width, (k + 1) as f64 * width);
            let mp =
                (mp_cdf(b, self.rows, self.columns) - mp_cdf(a, self.rows, self.columns)) / width;
            out.push_str(&format!("{a},{b},{c},{},{mp}\n", c as f64 / total / width));
        }
        out
    }
}

/// Spike counts of two bias matrices and of their factor residues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasSpectrum {
    /// Spectrum of the bias matrix itself; its spike count is the default
    /// factor count.
    pub bias: SpectrumReport,
    pub num_factors: usize,
    /// Spectrum of the residue after removing `num_factors` factors.
    pub residue: SpectrumReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectraComparison {
    pub a: BiasSpectrum,
    pub b: BiasSpectrum,
    pub summary: String,
}

/// Spectrum of one bias matrix and of its residue after removing
/// `num_factors` factors (default: one per spike).
pub fn bias_spectrum<T: Real>(
    bias: &DMatrix<T>,
    num_factors: Option<usize>,
) -> Result<BiasSpectrum, AnalyticsError> {
    let spectrum = spectrum_report(bias)?;
    let limit = bias.nrows().min(bias.ncols()) - 1;
    let k = num_factors.unwrap_or(spectrum.spikes.len()).min(limit);
    let residue = spectrum_report(&factor_decompose(bias, k)?.residues)?;
    Ok(BiasSpectrum {
        bias: spectrum,
        num_factors: k,
        residue,
    })
}

/// Spectral comparison of two equally shaped bias matrices.
///
/// `num_factors = None` removes as many factors as each bias spectrum has
/// spikes.
pub fn compare_bias_spectra<T: Real>(
    bias_a: &DMatrix<T>,
    bias_b: &DMatrix<T>,
    num_factors: Option<usize>,
) -> Result<SpectraComparison, AnalyticsError> {
    if bias_a.shape() != bias_b.shape() {
        return Err(AnalyticsError::Dimension(format!(
            "{:?} vs {:?}",
            bias_a.shape(),
            bias_b.shape()
        )));
    }
    let a = bias_spectrum(bias_a, num_factors)?;
    let b = bias_spectrum(bias_b, num_factors)?;
    let (sa, sb) = (a.bias.spikes.len(), b.bias.spikes.len());
    let verdict = match sa.cmp(&sb) {
        std::cmp::Ordering::Greater => "A has more spikes",
        std::cmp::Ordering::Less => "B has more spikes",
        std::cmp::Ordering::Equal => "no separation",
    };
    let summary = format!(
        "spikes A={sa} B={sb}; residue spikes A={} B={} (factors {}/{}); KS A={:.4} B={:.4}: {verdict}",
        a.residue.spikes.len(),
        b.residue.spikes.len(),
        a.num_factors,
        b.num_factors,
        a.bias.ks_distance,
        b.bias.ks_distance,
    );
    Ok(SpectraComparison { a, b, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_is_captured_by_one_factor() {
        let a = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let b = DMatrix::from_row_slice(1, 5, &[0.3, 1.0, -0.7, 2.0, 0.1]);
        let x = &a * &b;
        let d = factor_decompose(&x, 1).unwrap();
        assert!(d.residues.amax() < 1e-10);
    }

    #[test]
    fn zero_factors_leave_input_as_residue() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.0, 4.0]);
        let d = factor_decompose(&x, 0).unwrap();
        assert_eq!(d.factors.shape(), (0, 3));
        assert_eq!(d.loadings.shape(), (2, 0));
        assert_eq!(d.residues, x);
        assert!(matches!(
            factor_decompose(&x, 2),
            Err(AnalyticsError::FactorCount { k: 2, limit: 2 })
        ));
    }

    #[test]
    fn single_row_is_degenerate() {
        let x = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        assert!(matches!(
            spectrum_report(&x),
            Err(AnalyticsError::Degenerate(_))
        ));
        let flat = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 5.0, 5.0, 5.0]);
        assert!(spectrum_report(&flat)
            .unwrap_err()
            .to_string()
            .contains("[1]"));
    }

    #[test]
    fn histogram_counts_every_eigenvalue() {
        let x = DMatrix::from_fn(4, 40, |i, j| {
            ((i * 7 + j * 13) % 11) as f64 - 5.0 + i as f64 * 0.1
        });
        let rep = spectrum_report(&x).unwrap();
        let csv = rep.histogram_csv(8);
        let total: usize = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(total, 4);
    }
}
