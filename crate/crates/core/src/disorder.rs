//! Disorder laws, log-moment generating functions and the rules selecting the
//! inverse temperature from a target chaos variance `σ² = e^{λ(2β)−2λ(β)} − 1`.

use serde::{Deserialize, Serialize};

use crate::rng::{hash_site, mix64, unit_open};
use crate::walk::WalkKernel;
use crate::{Error, Result};

/// Largest |β| accepted by every family.
pub const BETA_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DisorderLaw {
    Gaussian,
    Rademacher,
    /// Finite-support law with mean 0 and variance 1.
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

impl DisorderLaw {
    /// Skewed three-point law on {−1, 1/2, 5/2} with mean 0 and variance 1.
    pub fn skewed_three_point() -> Self {
        DisorderLaw::Discrete { values: vec![-1.0, 0.5, 2.5], probs: vec![3.0 / 7.0, 0.5, 1.0 / 14.0] }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DisorderLaw::Gaussian => "gaussian",
            DisorderLaw::Rademacher => "rademacher",
            DisorderLaw::Discrete { .. } => "discrete",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DisorderLaw::Discrete { values, probs } = self {
            let bad = |m: &str| Err(Error::InvalidConfig(format!("discrete disorder law: {m}")));
            if values.len() != probs.len() || values.len() < 2 {
                return bad("needs at least two atoms with matching probabilities");
            }
            if probs.iter().any(|&p| !(p > 0.0)) || values.iter().any(|v| !v.is_finite()) {
                return bad("probabilities must be positive and values finite");
            }
            let total: f64 = probs.iter().sum();
            let mean: f64 = values.iter().zip(probs).map(|(v, p)| v * p).sum();
            let var: f64 = values.iter().zip(probs).map(|(v, p)| v * v * p).sum::<f64>() - mean * mean;
            if (total - 1.0).abs() > 1e-12 || mean.abs() > 1e-12 || (var - 1.0).abs() > 1e-12 {
                return bad("must have total mass 1, mean 0 and variance 1");
            }
        }
        Ok(())
    }

    fn check_beta(&self, beta: f64) -> Result<()> {
        if !beta.is_finite() || beta.abs() > BETA_MAX {
            return Err(Error::BetaOutOfRange { family: self.name().into(), beta });
        }
        Ok(())
    }

    fn lambda_unchecked(&self, beta: f64) -> f64 {
        match self {
            DisorderLaw::Gaussian => 0.5 * beta * beta,
            DisorderLaw::Rademacher => {
                let a = beta.abs();
                a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
            }
            DisorderLaw::Discrete { values, probs } => {
                let top = values.iter().map(|v| beta * v).fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = values.iter().zip(probs).map(|(v, p)| p * (beta * v - top).exp()).sum();
                top + s.ln()
            }
        }
    }
}

/// `λ(β) = log E[e^{βω}]`.
pub fn lambda(law: &DisorderLaw, beta: f64) -> Result<f64> {
    law.check_beta(beta)?;
    Ok(law.lambda_unchecked(beta))
}

/// `σ²(β) = e^{λ(2β)−2λ(β)} − 1`.
pub fn sigma2_of_beta(law: &DisorderLaw, beta: f64) -> Result<f64> {
    law.check_beta(2.0 * beta)?;
    Ok(match law {
        DisorderLaw::Gaussian => (beta * beta).exp_m1(),
        DisorderLaw::Rademacher => beta.tanh().powi(2),
        DisorderLaw::Discrete { .. } => (law.lambda_unchecked(2.0 * beta) - 2.0 * law.lambda_unchecked(beta)).exp_m1(),
    })
}

/// Smallest β ≥ 0 with `σ²(β) = target`.
pub fn beta_for_sigma2(law: &DisorderLaw, target: f64) -> Result<f64> {
    if !(target >= 0.0) || !target.is_finite() {
        return Err(Error::RootFinding(format!("target variance {target} is not a nonnegative number")));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    match law {
        DisorderLaw::Gaussian => {
            let b = target.ln_1p().sqrt();
            law.check_beta(2.0 * b).map_err(|_| Error::RootFinding(format!("σ² = {target} needs β beyond range")))?;
            Ok(b)
        }
        DisorderLaw::Rademacher => {
            if target >= 1.0 {
                return Err(Error::RootFinding(format!("rademacher σ² = tanh²β < 1, target {target}")));
            }
            Ok(target.sqrt().atanh())
        }
        DisorderLaw::Discrete { .. } => {
            let hi_beta = BETA_MAX / 2.0;
            let f = |b: f64| sigma2_of_beta(law, b).expect("within range") - target;
            if f(hi_beta) < 0.0 {
                return Err(Error::RootFinding(format!("cannot bracket σ² = {target} on [0, {hi_beta}]")));
            }
            let (mut lo, mut hi) = (0.0f64, hi_beta);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if f(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(if f(lo).abs() < f(hi).abs() { lo } else { hi })
        }
    }
}

/// How β was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Window {
    Fixed,
    Subcritical { beta_hat: f64, horizon: usize },
    Critical { theta: f64, horizon: usize },
    QuasiCritical { kappa: f64, theta_n: f64, horizon: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    pub law: DisorderLaw,
    pub beta: f64,
    pub lambda_beta: f64,
    pub sigma2: f64,
    pub window: Window,
}

impl DisorderSpec {
    pub fn fixed(law: DisorderLaw, beta: f64) -> Result<Self> {
        law.validate()?;
        let sigma2 = sigma2_of_beta(&law, beta)?;
        let lambda_beta = lambda(&law, beta)?;
        Ok(Self { law, beta, lambda_beta, sigma2, window: Window::Fixed })
    }

    /// Spec with `σ²(β)` equal to `sigma2`.
    pub fn from_sigma2(law: DisorderLaw, sigma2: f64, window: Window) -> Result<Self> {
        law.validate()?;
        let beta = beta_for_sigma2(&law, sigma2)?;
        let lambda_beta = lambda(&law, beta)?;
        let sigma2 = sigma2_of_beta(&law, beta)?;
        Ok(Self { law, beta, lambda_beta, sigma2, window })
    }

    pub fn is_trivial(&self) -> bool {
        self.beta == 0.0
    }

    /// `ξ = e^{βω − λ(β)} − 1`.
    #[inline]
    pub fn xi(&self, omega: f64) -> f64 {
        (self.beta * omega - self.lambda_beta).exp_m1()
    }

    #[inline]
    pub fn weight(&self, omega: f64) -> f64 {
        (self.beta * omega - self.lambda_beta).exp()
    }
}

fn overlap(kernel: &WalkKernel, n: usize) -> Result<f64> {
    let r = kernel.replica_overlap(n)?;
    if r <= 0.0 {
        return Err(Error::OutOfRange("horizon must be at least 1".into()));
    }
    Ok(r)
}

/// `σ²(β_N) = β̂² / R_N`.
pub fn beta_subcritical(kernel: &WalkKernel, law: DisorderLaw, n: usize, beta_hat: f64) -> Result<DisorderSpec> {
    if !(beta_hat >= 0.0) {
        return Err(Error::OutOfRange(format!("beta_hat = {beta_hat} must be nonnegative")));
    }
    let r = overlap(kernel, n)?;
    DisorderSpec::from_sigma2(law, beta_hat * beta_hat / r, Window::Subcritical { beta_hat, horizon: n })
}

/// Critical-window target `(1/R_N)(1 + θ/log N)`.
pub fn critical_sigma2(kernel: &WalkKernel, n: usize, theta: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::OutOfRange("critical window needs N >= 3".into()));
    }
    let target = (1.0 + theta / (n as f64).ln()) / overlap(kernel, n)?;
    if !(target > 0.0) {
        return Err(Error::WindowCollapse(target));
    }
    Ok(target)
}

/// `σ²(β_N) = (1/R_N)(1 + θ/log N)`.
pub fn beta_critical(kernel: &WalkKernel, law: DisorderLaw, n: usize, theta: f64) -> Result<DisorderSpec> {
    let target = critical_sigma2(kernel, n, theta)?;
    DisorderSpec::from_sigma2(law, target, Window::Critical { theta, horizon: n })
}

/// `σ²(β_N) = (1/R_N)(1 − θ_N/log N)` with `θ_N = (log N)^κ`.
pub fn beta_quasi_critical(kernel: &WalkKernel, law: DisorderLaw, n: usize, kappa: f64) -> Result<DisorderSpec> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::OutOfRange(format!("kappa = {kappa} must lie in (0, 1)")));
    }
    if n < 3 {
        return Err(Error::OutOfRange("quasi-critical window needs N >= 3".into()));
    }
    let log_n = (n as f64).ln();
    let theta_n = log_n.powf(kappa);
    let target = (1.0 - theta_n / log_n) / overlap(kernel, n)?;
    if !(target > 0.0) {
        return Err(Error::WindowCollapse(target));
    }
    DisorderSpec::from_sigma2(law, target, Window::QuasiCritical { kappa, theta_n, horizon: n })
}

/// Counter-based environment: `ω(n, x, y)` is a pure function of the seed and
/// the site.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderField {
    pub seed: u64,
    law: DisorderLaw,
    cumulative: Vec<f64>,
}

impl DisorderField {
    pub fn new(seed: u64, law: DisorderLaw) -> Self {
        let cumulative = match &law {
            DisorderLaw::Discrete { probs, .. } => {
                let mut acc = 0.0;
                probs.iter().map(|p| {
                    acc += p;
                    acc
                }).collect()
            }
            _ => Vec::new(),
        };
        Self { seed, law, cumulative }
    }

    pub fn law(&self) -> &DisorderLaw {
        &self.law
    }

    #[inline]
    pub fn omega(&self, n: u64, x: i64, y: i64) -> f64 {
        let h = hash_site(self.seed, n, x, y);
        match &self.law {
            DisorderLaw::Gaussian => {
                let u1 = unit_open(h);
                let u2 = unit_open(mix64(h ^ 0x5851_f42d_4c95_7f2d));
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            }
            DisorderLaw::Rademacher => {
                if h >> 63 == 0 {
                    -1.0
                } else {
                    1.0
                }
            }
            DisorderLaw::Discrete { values, .. } => {
                let u = unit_open(h);
                let i = self.cumulative.iter().position(|&c| u < c).unwrap_or(values.len() - 1);
                values[i]
            }
        }
    }
}
