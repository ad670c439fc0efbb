use gridtwin::analytics::{compare_bias_spectra, factor_decompose, mp_edges, spectrum_report};
use gridtwin::error::AnalyticsError;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(seed: u64, n: usize, t: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, t, |_, _| rng.sample(StandardNormal))
}

/// Noise plus one factor loading every row with strength `strength`.
fn spiked(seed: u64, n: usize, t: usize, strength: f64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let load: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let f: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
    let mut x = gaussian(seed, n, t);
    for i in 0..n {
        for j in 0..t {
            x[(i, j)] += strength * load[i] * f[j];
        }
    }
    x
}

#[test]
fn white_noise_follows_the_bulk_law() {
    for seed in 0..5 {
        let rep = spectrum_report(&gaussian(seed, 100, 1000)).unwrap();
        assert!(rep.ks_distance < 0.05, "seed {seed}: {}", rep.ks_distance);
        assert!(rep.fraction_outside_bulk() <= 0.02, "seed {seed}");
        assert!(rep.spikes.len() <= 1, "seed {seed}: {:?}", rep.spikes);
        assert_eq!(rep.mp_bulk_edges, mp_edges(100, 1000));
    }
}

#[test]
fn planted_factor_gives_one_spike() {
    let hits = (0..20)
        .filter(|&seed| {
            spectrum_report(&spiked(seed, 100, 1000, 1.0))
                .unwrap()
                .spikes
                .len()
                == 1
        })
        .count();
    assert!(hits >= 19, "{hits}/20");
}

#[test]
fn removing_the_top_noise_factor_leaves_a_bulk() {
    let (n, t) = (100, 1000);
    let x = gaussian(3, n, t);
    let d = factor_decompose(&x, 1).unwrap();
    let share = d.eigenvalues[0] / d.eigenvalues.iter().sum::<f64>();
    let edge = mp_edges(n, t).1 / n as f64;
    assert!((share - edge).abs() < 0.15 * edge, "{share} vs {edge}");
    let rep = spectrum_report(&d.residues).unwrap();
    assert!(rep.ks_distance < 0.1, "{}", rep.ks_distance);
    assert!(rep.spikes.is_empty());
}

#[test]
fn wide_noise_stays_inside_the_edges() {
    // c = T/N = 10.
    let rep = spectrum_report(&gaussian(9, 60, 600)).unwrap();
    assert!(rep.fraction_outside_bulk() < 0.02);
}

#[test]
fn pure_noise_pair_is_not_separated() {
    let c = compare_bias_spectra(&gaussian(1, 60, 60), &gaussian(2, 60, 60), None).unwrap();
    assert!(c.a.bias.spikes.len() <= 1 && c.b.bias.spikes.len() <= 1);
    if c.a.bias.spikes.len() == c.b.bias.spikes.len() {
        assert!(c.summary.contains("no separation"), "{}", c.summary);
    }
}

#[test]
fn spiked_matrix_is_separated_from_noise() {
    let c = compare_bias_spectra(&spiked(4, 80, 80, 1.0), &gaussian(5, 80, 80), Some(1)).unwrap();
    assert_eq!(c.a.bias.spikes.len(), 1);
    assert_eq!(c.b.bias.spikes.len(), 0);
    assert!(c.a.residue.spikes.is_empty());
    assert!(c.summary.contains("A has more spikes"), "{}", c.summary);
    assert!(matches!(
        compare_bias_spectra(&gaussian(1, 4, 5), &gaussian(1, 5, 4), None),
        Err(AnalyticsError::Dimension(_))
    ));
}

#[test]
fn report_exports() {
    let rep = spectrum_report(&gaussian(6, 20, 200)).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
    assert_eq!(doc["eigenvalues"].as_array().unwrap().len(), 20);
    assert!(doc["ks_distance"].as_f64().is_some());
    let csv = rep.histogram_csv(10);
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.starts_with("bin_start,bin_end,count,density,mp_density"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn decomposition_reconstructs_and_factors_are_orthogonal(
        seed in any::<u64>(), n in 2usize..8, t in 8usize..20, k in 0usize..2,
    ) {
        let x = gaussian(seed, n, t);
        let d = factor_decompose(&x, k).unwrap();
        prop_assert!((&d.loadings * &d.factors + &d.residues - &x).amax() < 1e-10);
        let gram = &d.factors * d.factors.transpose();
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    prop_assert!(gram[(i, j)].abs() < 1e-9 * gram[(i, i)].max(1.0));
                }
            }
        }
    }

    #[test]
    fn spectrum_is_nonnegative_and_spikes_are_eigenvalues(
        seed in any::<u64>(), n in 2usize..12, t in 3usize..40,
    ) {
        let rep = spectrum_report(&gaussian(seed, n, t)).unwrap();
        prop_assert!(rep.eigenvalues.iter().all(|&v| v >= 0.0));
        prop_assert!(rep.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(rep.spikes.iter().all(|s| rep.eigenvalues.contains(s)));
        prop_assert!(rep.spikes.iter().all(|&s| s > rep.mp_bulk_edges.1));
        prop_assert!((0.0..=1.0).contains(&rep.ks_distance));
    }

    #[test]
    fn factor_count_is_bounded(n in 2usize..6, t in 2usize..6) {
        let x = gaussian(0, n, t);
        let limit = n.min(t);
        let err = factor_decompose(&x, limit).unwrap_err();
        prop_assert_eq!(err, AnalyticsError::FactorCount { k: limit, limit });
    }
}
