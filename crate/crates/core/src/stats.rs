//! Sample statistics with a fixed reduction order.
//!
//! Means are accumulated as `x[0] + pairwise_sum(x[i] - x[0]) / n`, so a
//! constant sample returns its value bit-exactly and the result does not
//! depend on how the samples were produced in parallel.

use serde::{Deserialize, Serialize};

/// Mean, standard error and count of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Summary { mean: f64::NAN, std_error: f64::NAN, n: 0 };
        }
        let mean = mean(xs);
        let std_error = if n > 1 { (variance(xs, mean) / n as f64).sqrt() } else { 0.0 };
        Summary { mean, std_error, n }
    }
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Shifted mean; exact for constant samples.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let shift = xs[0];
    let centred: Vec<f64> = xs.iter().map(|x| x - shift).collect();
    shift + pairwise_sum(&centred) / xs.len() as f64
}

/// Unbiased sample variance around a supplied mean.
pub fn variance(xs: &[f64], mean: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs, mean(xs)).sqrt()
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_mean_is_exact() {
        let xs = vec![0.1 + 0.2; 10_001];
        assert_eq!(mean(&xs), 0.1 + 0.2);
        let s = Summary::of(&xs);
        assert_eq!(s.std_error, 0.0);
        assert_eq!(s.n, 10_001);
    }

    #[test]
    fn summary_matches_textbook_values() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert!((s.mean - 2.5).abs() < 1e-15);
        // sample variance 5/3, se = sqrt(5/12)
        assert!((s.std_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn slope_of_a_line() {
        let xs = [1.0, 2.0, 3.0];
        let ys = [3.0, 5.0, 7.0];
        assert!((slope(&xs, &ys) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn empty_summary_is_nan() {
        assert!(Summary::of(&[]).mean.is_nan());
    }
}
