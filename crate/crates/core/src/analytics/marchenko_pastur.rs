//! Marchenko-Pastur law for unit-variance noise with `N` rows and `T`
//! columns (ratio `y = N/T`), and the Tracy-Widom edge of its largest
//! eigenvalue.

use std::f64::consts::PI;

/// Bulk edges `((1 − √y)², (1 + √y)²)`.
pub fn mp_edges(n: usize, t: usize) -> (f64, f64) {
    let s = (n as f64 / t as f64).sqrt();
    ((1.0 - s).powi(2), (1.0 + s).powi(2))
}

/// Cumulative distribution of the Marchenko-Pastur law.
///
/// For `y > 1` the law has an atom of mass `1 − 1/y` at zero. The
/// continuous part `√((b−x)(x−a)) / (2π y x)` is integrated with the
/// substitution `x = a + (b−a)(1 − cos φ)/2`, which removes the square-root
/// endpoint behaviour, and Simpson's rule.
pub fn mp_cdf(x: f64, n: usize, t: usize) -> f64 {
    let y = n as f64 / t as f64;
    let (a, b) = mp_edges(n, t);
    let atom = if y > 1.0 { 1.0 - 1.0 / y } else { 0.0 };
    if x < 0.0 {
        return 0.0;
    }
    if x <= a {
        return atom;
    }
    if x >= b {
        return 1.0;
    }
    let half = 0.5 * (b - a);
    let phi_end = (1.0 - (x - a) / half).clamp(-1.0, 1.0).acos();
    let integrand = |phi: f64| {
        let s = phi.sin();
        let xv = a + half * (1.0 - phi.cos());
        if xv <= 0.0 {
            // y = 1, φ → 0: sin²φ / x → 4 / b.
            return half * half * 4.0 / (b * 2.0 * PI * y);
        }
        half * half * s * s / (2.0 * PI * y * xv)
    };
    const STEPS: usize = 512;
    let h = phi_end / STEPS as f64;
    let mut sum = integrand(0.0) + integrand(phi_end);
    for k in 1..STEPS {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * integrand(k as f64 * h);
    }
    (atom + sum * h / 3.0).min(1.0)
}

/// Upper 99% fluctuation level of the largest eigenvalue of `(1/T)·Z Zᵀ`
/// for row-centred `N × T` Gaussian noise: `(μ + 2.02·σ)/T` with
/// `μ = (√n + √N)²`, `σ = (√n + √N)(1/√n + 1/√N)^{1/3}` and `n = T − 1`
/// effective columns (2.02 is the 0.99 quantile of Tracy-Widom order 1).
pub fn tracy_widom_edge(n: usize, t: usize) -> f64 {
    let (rn, rt) = ((n as f64).sqrt(), ((t - 1) as f64).sqrt());
    let mu = (rt + rn).powi(2);
    let sigma = (rt + rn) * (1.0 / rt + 1.0 / rn).cbrt();
    (mu + 2.02 * sigma) / t as f64
}
