//! Order-independent reductions and the small set of test statistics the
//! experiments report.

use serde::{Deserialize, Serialize};

/// Pairwise (cascade) summation. Result depends only on the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
    pub fn value(&self) -> f64 {
        self.sum
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (n - 1) as f64
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// Mean with a batch-means standard error (`batches` contiguous batches).
/// Falls back to the i.i.d. formula when there are fewer samples than batches.
pub fn batch_mean(xs: &[f64], batches: usize) -> MeanEstimate {
    let n = xs.len();
    let value = mean(xs);
    if n < 2 {
        return MeanEstimate { value, stderr: 0.0 };
    }
    if n < 2 * batches || batches < 2 {
        return MeanEstimate { value, stderr: (variance(xs) / n as f64).sqrt() };
    }
    let size = n / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&xs[b * size..(b + 1) * size])).collect();
    MeanEstimate { value, stderr: (variance(&means) / batches as f64).sqrt() }
}

/// Sample variance with a batch-means standard error.
pub fn batch_variance(xs: &[f64], batches: usize) -> MeanEstimate {
    let m = mean(xs);
    let n = xs.len() as f64;
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m) * n / (n - 1.0)).collect();
    batch_mean(&dev, batches)
}

pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, q)
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// One-sample Kolmogorov–Smirnov distance to a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.total_cmp(q));
    y.sort_by(|p, q| p.total_cmp(q));
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at level `alpha`.
pub fn ks_two_sample_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Pearson χ² statistic for observed counts against expected counts.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum()
}

/// Least-squares fit `value ≈ a + b / ln N (+ c / ln² N)`; returns the
/// intercept `a`, the N → ∞ extrapolation.
pub fn extrapolate_inverse_log(ns: &[f64], values: &[f64], quadratic: bool) -> f64 {
    assert_eq!(ns.len(), values.len());
    let xs: Vec<f64> = ns.iter().map(|n| 1.0 / n.ln()).collect();
    let cols = if quadratic { 3 } else { 2 };
    assert!(xs.len() >= cols, "not enough points to extrapolate");
    // Normal equations; tiny systems.
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    for (x, y) in xs.iter().zip(values) {
        let row = [1.0, *x, x * x];
        for r in 0..cols {
            aty[r] += row[r] * y;
            for c in 0..cols {
                ata[r][c] += row[r] * row[c];
            }
        }
    }
    solve_small(&mut ata, &mut aty, cols)[0]
}

fn solve_small(a: &mut [[f64; 3]; 3], b: &mut [f64; 3], n: usize) -> [f64; 3] {
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!(ks_distance(&xs, |x| x.clamp(0.0, 1.0)) <= 0.5 / n as f64 + 1e-12);
    }

    #[test]
    fn two_sample_ks_identical_is_zero() {
        let xs: Vec<f64> = (0..50).map(|i| (i * 7 % 13) as f64).collect();
        assert_eq!(ks_two_sample(&xs, &xs), 0.0);
    }

    #[test]
    fn extrapolation_recovers_intercept() {
        let ns: Vec<f64> = (10..20).map(|k| 2f64.powi(k)).collect();
        let vals: Vec<f64> = ns.iter().map(|n| 1.5 - 2.0 / n.ln() + 0.3 / n.ln().powi(2)).collect();
        assert!((extrapolate_inverse_log(&ns, &vals, true) - 1.5).abs() < 1e-9);
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(median(&xs), 2.5);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
    }
}
