//! The underlying lattice walk: a product of two independent copies of a
//! bounded, symmetric, aperiodic one-dimensional step law with unit variance.

use serde::{Deserialize, Serialize};

use crate::stats::KahanSum;
use crate::{Error, Result};

/// One-coordinate increment law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLaw1d {
    pub support: Vec<i64>,
    pub probs: Vec<f64>,
}

impl StepLaw1d {
    pub fn new(support: Vec<i64>, probs: Vec<f64>) -> Result<Self> {
        let law = Self { support, probs };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidStepLaw(m.to_string()));
        if self.support.len() != self.probs.len() || self.support.is_empty() {
            return bad("support and probabilities must be non-empty and of equal length");
        }
        if self.probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return bad("probabilities must be finite and nonnegative");
        }
        let mut sorted = self.support.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.support.len() {
            return bad("duplicate offsets");
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad("probabilities must sum to 1");
        }
        if self.mean().abs() > 1e-12 {
            return bad("mean must be 0");
        }
        if (self.variance() - 1.0).abs() > 1e-12 {
            return bad("variance must be 1");
        }
        for needed in [0, 1, -1] {
            if self.prob(needed) <= 0.0 {
                return bad("offsets 0 and ±1 must carry positive mass");
            }
        }
        Ok(())
    }

    pub fn prob(&self, k: i64) -> f64 {
        self.support.iter().position(|&s| s == k).map_or(0.0, |i| self.probs[i])
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.probs).map(|(&k, p)| k as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.support.iter().zip(&self.probs).map(|(&k, p)| (k as f64 - m).powi(2) * p).sum()
    }

    /// Largest absolute offset.
    pub fn reach(&self) -> i64 {
        self.support.iter().map(|k| k.abs()).max().unwrap_or(0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.support.iter().zip(&self.probs).all(|(&k, &p)| (self.prob(-k) - p).abs() <= 1e-15)
    }

    /// Dense probabilities on `-reach..=reach`.
    pub fn dense(&self) -> Vec<f64> {
        let r = self.reach();
        let mut out = vec![0.0; (2 * r + 1) as usize];
        for (&k, &p) in self.support.iter().zip(&self.probs) {
            out[(k + r) as usize] = p;
        }
        out
    }

    /// True for the centred Binomial(4, 1/2) law, which has closed forms.
    pub fn is_centred_binomial4(&self) -> bool {
        let d = default_step_law();
        self.reach() == 2 && self.dense() == d.dense()
    }
}

/// P(0)=3/8, P(±1)=1/4, P(±2)=1/16 per coordinate.
pub fn default_step_law() -> StepLaw1d {
    StepLaw1d {
        support: vec![-2, -1, 0, 1, 2],
        probs: vec![1.0 / 16.0, 0.25, 0.375, 0.25, 1.0 / 16.0],
    }
}

/// `C(2m, m) / 4^m`, the central mass of Binomial(2m, 1/2).
pub fn central_binomial(m: u64) -> f64 {
    if m < 64 {
        let mut c = 1.0;
        for i in 1..=m {
            c *= (2 * i - 1) as f64 / (2 * i) as f64;
        }
        return c;
    }
    // ln Γ(m+½) − ln Γ(m+1), asymptotic series (error far below 1e-16 for m ≥ 64).
    let x = m as f64;
    let x2 = x * x;
    let series = -0.5 * x.ln() - 1.0 / (8.0 * x) + 1.0 / (192.0 * x * x2) - 1.0 / (640.0 * x * x2 * x2)
        + 17.0 / (14336.0 * x * x2 * x2 * x2);
    series.exp() / std::f64::consts::PI.sqrt()
}

/// Largest horizon for which a non-binomial law keeps dense marginals.
pub const GENERAL_MARGINAL_LIMIT: usize = 1024;
/// Largest cache horizon accepted for a non-binomial law.
pub const GENERAL_CACHE_LIMIT: usize = 1 << 15;

/// Transition tables of the product walk.
#[derive(Debug, Clone)]
pub struct WalkKernel {
    step: StepLaw1d,
    cache_n: usize,
    binomial: bool,
    /// Dense 1d marginals for non-binomial laws, `marginals[n][k + reach·n]`.
    marginals: Vec<Vec<f64>>,
    q2n0: Vec<f64>,
    r_table: Vec<f64>,
}

impl WalkKernel {
    pub fn new(step: StepLaw1d, cache_n: usize) -> Result<Self> {
        let binomial = step.is_centred_binomial4();
        Self::build(step, cache_n, binomial)
    }

    fn build(step: StepLaw1d, cache_n: usize, binomial: bool) -> Result<Self> {
        step.validate()?;
        if !step.is_symmetric() {
            return Err(Error::InvalidStepLaw("step law must be symmetric".into()));
        }
        let mut marginals = Vec::new();
        let mut q2n0 = vec![0.0; cache_n + 1];
        if binomial {
            for (n, q) in q2n0.iter_mut().enumerate() {
                let c = central_binomial(4 * n as u64);
                *q = c * c;
            }
        } else {
            if cache_n > GENERAL_CACHE_LIMIT {
                return Err(Error::HorizonExceedsCache { n: cache_n, cache: GENERAL_CACHE_LIMIT });
            }
            let stored = cache_n.min(GENERAL_MARGINAL_LIMIT);
            let kernel = step.dense();
            let mut current = vec![1.0];
            for n in 0..=cache_n {
                let s: f64 = {
                    let mut acc = KahanSum::default();
                    for &p in &current {
                        acc.add(p * p);
                    }
                    acc.value()
                };
                q2n0[n] = s * s;
                if n <= stored {
                    marginals.push(current.clone());
                }
                if n < cache_n {
                    current = convolve_kahan(&current, &kernel);
                }
            }
        }
        let mut r_table = vec![0.0; cache_n + 1];
        let mut acc = KahanSum::default();
        for n in 1..=cache_n {
            acc.add(q2n0[n]);
            r_table[n] = acc.value();
        }
        Ok(Self { step, cache_n, binomial, marginals, q2n0, r_table })
    }

    /// Kernel for the default law.
    pub fn standard(cache_n: usize) -> Self {
        Self::new(default_step_law(), cache_n).expect("default law is valid")
    }

    pub fn step(&self) -> &StepLaw1d {
        &self.step
    }

    pub fn cache_n(&self) -> usize {
        self.cache_n
    }

    pub fn reach(&self) -> i64 {
        self.step.reach()
    }

    /// `q_{2n}(0)` for `n = 0..=cache_n`.
    pub fn q2n0_table(&self) -> &[f64] {
        &self.q2n0
    }

    pub fn q2n0(&self, n: usize) -> Result<f64> {
        self.check(n)?;
        Ok(self.q2n0[n])
    }

    fn check(&self, n: usize) -> Result<()> {
        if n > self.cache_n {
            Err(Error::HorizonExceedsCache { n, cache: self.cache_n })
        } else {
            Ok(())
        }
    }

    /// One-coordinate n-step probability `p_n(k)`.
    pub fn p1d(&self, n: usize, k: i64) -> Result<f64> {
        self.check(n)?;
        if self.binomial {
            return Ok(binomial_marginal(n, k));
        }
        let r = self.reach() * n as i64;
        if k.abs() > r {
            return Ok(0.0);
        }
        if n < self.marginals.len() {
            return Ok(self.marginals[n][(k + r) as usize]);
        }
        Err(Error::HorizonExceedsCache { n, cache: self.marginals.len().saturating_sub(1) })
    }

    /// Dense 1d marginal on `-reach·n..=reach·n`.
    pub fn marginal(&self, n: usize) -> Result<Vec<f64>> {
        self.check(n)?;
        if self.binomial {
            return Ok(binomial_row(n));
        }
        if n < self.marginals.len() {
            return Ok(self.marginals[n].clone());
        }
        Err(Error::HorizonExceedsCache { n, cache: self.marginals.len().saturating_sub(1) })
    }

    /// `q_n(x) = p_n(x₁) p_n(x₂)`.
    pub fn q_n(&self, n: usize, x: (i64, i64)) -> Result<f64> {
        Ok(self.p1d(n, x.0)? * self.p1d(n, x.1)?)
    }

    /// `R_N = Σ_{n=1}^N q_{2n}(0)`.
    pub fn replica_overlap(&self, n: usize) -> Result<f64> {
        self.check(n)?;
        Ok(self.r_table[n])
    }

    pub fn r_table(&self) -> &[f64] {
        &self.r_table
    }

    /// `max_x |q_n(x) − g_n(x)| · n²`.
    pub fn local_clt_error(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::OutOfRange("local CLT error needs n >= 1".into()));
        }
        let row = self.marginal(n)?;
        let r = self.reach() * n as i64;
        // Beyond 12 standard deviations both terms are below 1e-30.
        let span = r.min((12.0 * (n as f64).sqrt()).ceil() as i64 + 2);
        let nf = n as f64;
        let h: Vec<f64> = (-span..=span)
            .map(|k| (-(k * k) as f64 / (2.0 * nf)).exp() / (2.0 * std::f64::consts::PI * nf).sqrt())
            .collect();
        let p: Vec<f64> = (-span..=span).map(|k| row[(k + r) as usize]).collect();
        let mut worst = 0.0f64;
        for i in 0..p.len() {
            for j in 0..p.len() {
                worst = worst.max((p[i] * p[j] - h[i] * h[j]).abs());
            }
        }
        Ok(worst * nf * nf)
    }
}

/// Centred Binomial(4n, 1/2) mass at `k`: `C(4n, 2n+k) / 16^n`.
pub fn binomial_marginal(n: usize, k: i64) -> f64 {
    let m = 2 * n as i64;
    let ka = k.abs();
    if ka > m {
        return 0.0;
    }
    let mut p = central_binomial(m as u64);
    for j in 1..=ka {
        p *= (m - j + 1) as f64 / (m + j) as f64;
    }
    p
}

/// Dense centred Binomial(4n, 1/2) row on `-2n..=2n`.
pub fn binomial_row(n: usize) -> Vec<f64> {
    let m = 2 * n as i64;
    let mut row = vec![0.0; (2 * m + 1) as usize];
    let mut p = central_binomial(m as u64);
    row[m as usize] = p;
    for j in 1..=m {
        p *= (m - j + 1) as f64 / (m + j) as f64;
        row[(m + j) as usize] = p;
        row[(m - j) as usize] = p;
    }
    row
}

/// Full linear convolution with compensated sums.
pub fn convolve_kahan(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() + b.len() - 1;
    let mut out = vec![0.0; n];
    for (k, slot) in out.iter_mut().enumerate() {
        let lo = k.saturating_sub(b.len() - 1);
        let hi = k.min(a.len() - 1);
        let mut acc = KahanSum::default();
        for i in lo..=hi {
            acc.add(a[i] * b[k - i]);
        }
        *slot = acc.value();
    }
    out
}

/// Heat kernel `g_t(x) = (2πt)^{-1} exp(−|x|²/2t)` on ℝ².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatKernel {
    pub t: f64,
}

impl HeatKernel {
    pub fn new(t: f64) -> Self {
        assert!(t > 0.0, "heat kernel time must be positive");
        Self { t }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        heat_kernel(self.t, x[0] * x[0] + x[1] * x[1])
    }
}

/// `g_t` as a function of the squared distance.
#[inline]
pub fn heat_kernel(t: f64, r2: f64) -> f64 {
    (-r2 / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_law_moments() {
        let law = default_step_law();
        assert!(law.validate().is_ok());
        assert_eq!(law.variance(), 1.0);
        assert_eq!(law.prob(0) * law.prob(0), 9.0 / 64.0);
    }

    #[test]
    fn rejects_bad_laws() {
        assert!(StepLaw1d::new(vec![-1, 1], vec![0.5, 0.5]).is_err()); // periodic
        assert!(StepLaw1d::new(vec![-1, 0, 1], vec![0.3, 0.4, 0.3]).is_err()); // variance 0.6
        assert!(StepLaw1d::new(vec![0, 1, 2], vec![0.25, 0.5, 0.25]).is_err()); // mean 1
    }

    #[test]
    fn central_binomial_branches_agree() {
        // Product form at m = 64 against the series.
        let mut c = 1.0;
        for i in 1..=64u64 {
            c *= (2 * i - 1) as f64 / (2 * i) as f64;
        }
        assert!((central_binomial(64) / c - 1.0).abs() < 1e-14);
    }

    #[test]
    fn small_horizon_values() {
        let k = WalkKernel::standard(8);
        assert_eq!(k.q_n(0, (0, 0)).unwrap(), 1.0);
        assert_eq!(k.q_n(0, (1, 0)).unwrap(), 0.0);
        assert!((k.q_n(1, (1, 1)).unwrap() - 1.0 / 16.0).abs() < 1e-16);
        let s: f64 = 2.0 / 256.0 + 2.0 / 16.0 + 9.0 / 64.0;
        assert!((k.q_n(2, (0, 0)).unwrap() - s * s).abs() < 1e-15);
        assert!((k.replica_overlap(1).unwrap() - s * s).abs() < 1e-15);
        assert_eq!(k.replica_overlap(0).unwrap(), 0.0);
        assert!(matches!(k.q_n(9, (0, 0)), Err(Error::HorizonExceedsCache { .. })));
    }

    #[test]
    fn generic_convolution_matches_closed_form() {
        let generic = WalkKernel::build(default_step_law(), 40, false).unwrap();
        let closed = WalkKernel::standard(40);
        for n in [0usize, 1, 5, 17, 40] {
            for x in [-3i64, 0, 2, 7] {
                let a = generic.p1d(n, x).unwrap();
                let b = closed.p1d(n, x).unwrap();
                assert!((a - b).abs() < 1e-15, "n={n} x={x}");
            }
            assert!((generic.q2n0(n).unwrap() - closed.q2n0(n).unwrap()).abs() < 1e-15);
        }
        assert!((generic.replica_overlap(40).unwrap() - closed.replica_overlap(40).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn non_binomial_law_is_normalized() {
        let law = StepLaw1d::new(vec![-2, -1, 0, 1, 2], vec![1.0 / 24.0, 1.0 / 3.0, 0.25, 1.0 / 3.0, 1.0 / 24.0]).unwrap();
        let k = WalkKernel::new(law, 64).unwrap();
        for n in [1usize, 10, 64] {
            let s: f64 = k.marginal(n).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_kernel_integrates_to_one() {
        let g = HeatKernel::new(0.7);
        // Radial integral 2π ∫ r g(r) dr.
        let e = crate::quad::integrate(|r| 2.0 * std::f64::consts::PI * r * g.eval([r, 0.0]), 0.0, 30.0, 1e-13, 1e-13, 200);
        assert!((e.value - 1.0).abs() < 1e-8);
    }
}
