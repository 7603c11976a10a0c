//! Small statistical utilities: normal CDF/quantiles, a one-sample
//! Kolmogorov–Smirnov check against N(0,1), and deterministic stream
//! seeding for reproducible parallel Monte Carlo.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal parameters are valid")
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Upper-alpha critical value `z_alpha` with `Phi(z_alpha) = 1 - alpha`.
pub fn z_alpha(alpha: f64) -> f64 {
    normal_quantile(1.0 - alpha)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// One-sample Kolmogorov–Smirnov test of `sample` against N(0,1).
///
/// Returns `(d, p)` where `d` is the KS statistic and `p` the asymptotic
/// p-value with the small-sample correction `(sqrt(n) + 0.12 + 0.11/sqrt(n)) d`.
pub fn ks_test_std_normal(sample: &[f64]) -> (f64, f64) {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("sample values must be comparable"));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let cdf = normal_cdf(x);
        let hi = (i as f64 + 1.0) / n - cdf;
        let lo = cdf - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, kolmogorov_survival(lambda))
}

/// Survival function of the Kolmogorov distribution,
/// `Q(x) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2 k^2 x^2)`.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * x * x).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Slope of the least-squares fit of `ys` on `xs` (used for QQ diagnostics).
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Deterministic RNG derived from a list of stream labels.
///
/// Every Monte Carlo consumer (replication r, group g, draw d, ...) builds
/// its own generator from `(master_seed, labels...)`, so results do not
/// depend on scheduling and any subset of work is reproducible in isolation.
pub fn stream_rng(master_seed: u64, labels: &[u64]) -> ChaCha8Rng {
    fn mix64(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    // chained splitmix64: order-sensitive in the labels
    let mut state = mix64(master_seed ^ 0x9e37_79b9_7f4a_7c15);
    for &l in labels {
        state = mix64(
            state
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(mix64(l.wrapping_add(0x632b_e59b_d9b4_e019))),
        );
    }
    let mut seed = [0u8; 32];
    for i in 0..4 {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        seed[8 * i..8 * (i + 1)].copy_from_slice(&mix64(state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn normal_cdf_reference_values() {
        assert_relative_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(normal_cdf(1.959963984540054), 0.975, epsilon = 1e-9);
        assert_relative_eq!(z_alpha(0.05), 1.6448536269514722, epsilon = 1e-8);
    }

    #[test]
    fn ks_accepts_normal_quantiles() {
        // Deterministic "sample": the n(0,1) quantiles themselves.
        let xs: Vec<f64> = (1..=500)
            .map(|i| normal_quantile((i as f64 - 0.5) / 500.0))
            .collect();
        let (d, p) = ks_test_std_normal(&xs);
        assert!(d < 0.01, "d = {d}");
        assert!(p > 0.99, "p = {p}");
    }

    #[test]
    fn ks_rejects_shifted_sample() {
        let xs: Vec<f64> = (1..=500)
            .map(|i| normal_quantile((i as f64 - 0.5) / 500.0) + 0.5)
            .collect();
        let (_, p) = ks_test_std_normal(&xs);
        assert!(p < 1e-6, "p = {p}");
    }

    #[test]
    fn stream_rng_is_reproducible_and_label_sensitive() {
        let a: f64 = stream_rng(7, &[1, 2]).random();
        let b: f64 = stream_rng(7, &[1, 2]).random();
        let c: f64 = stream_rng(7, &[2, 1]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
