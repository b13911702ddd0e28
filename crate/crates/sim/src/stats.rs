//! Small aggregation helpers for the acceptance checks: means and percentile
//! bootstrap confidence intervals, with seeded resampling so test runs are
//! reproducible.

use rand::Rng;

use hetnet_core::rng::substream;

pub fn mean(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Percentile bootstrap CI for the mean at confidence `1 - alpha`.
pub fn bootstrap_mean_ci(samples: &[f64], iters: usize, alpha: f64, seed: u64) -> (f64, f64) {
    assert!(!samples.is_empty() && iters > 0 && alpha > 0.0 && alpha < 1.0);
    let mut rng = substream(seed, &[0xB007]);
    let mut means: Vec<f64> = (0..iters)
        .map(|_| {
            let s: f64 = (0..samples.len())
                .map(|_| samples[rng.gen_range(0..samples.len())])
                .sum();
            s / samples.len() as f64
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |p: f64| {
        let idx = ((iters as f64 - 1.0) * p).round() as usize;
        means[idx.min(iters - 1)]
    };
    (pick(alpha / 2.0), pick(1.0 - alpha / 2.0))
}

/// Bootstrap CI for the mean of paired differences `a[i] - b[i]`.
pub fn bootstrap_paired_diff_ci(
    a: &[f64],
    b: &[f64],
    iters: usize,
    alpha: f64,
    seed: u64,
) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    bootstrap_mean_ci(&diffs, iters, alpha, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_brackets_the_mean_for_a_tight_sample() {
        let samples = vec![2.0; 40];
        let (lo, hi) = bootstrap_mean_ci(&samples, 500, 0.05, 1);
        assert_eq!((lo, hi), (2.0, 2.0));
    }

    #[test]
    fn ci_is_deterministic_and_ordered() {
        let samples: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        let a = bootstrap_mean_ci(&samples, 1000, 0.05, 9);
        let b = bootstrap_mean_ci(&samples, 1000, 0.05, 9);
        assert_eq!(a, b);
        assert!(a.0 <= mean(&samples) && mean(&samples) <= a.1);
    }

    #[test]
    fn paired_diff_detects_a_shift() {
        let a: Vec<f64> = (0..30).map(|i| 1.0 + 0.01 * i as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x - 0.5).collect();
        let (lo, _) = bootstrap_paired_diff_ci(&a, &b, 500, 0.05, 4);
        assert!(lo > 0.0);
    }
}
