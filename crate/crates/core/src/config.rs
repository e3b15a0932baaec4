//! Serializable experiment configurations. Every field has a documented default;
//! pass/fail tolerances live here rather than in the experiment code.

use serde::{Deserialize, Serialize};

use crate::disorder::DisorderLaw;
use crate::polymer::{PolymerOptions, TestFunction};

/// Bump test function `C exp(−1/(1 − |x|²/ρ²))` with unit integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BumpConfig {
    /// Support radius in macroscopic units. Default 1.
    pub rho: f64,
}

impl Default for BumpConfig {
    fn default() -> Self {
        Self { rho: 1.0 }
    }
}

impl BumpConfig {
    pub fn function(&self) -> TestFunction {
        TestFunction::bump(self.rho)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnePointConfig {
    /// Horizon. Default 2^14.
    pub n: usize,
    /// Replicas. Default 4000.
    pub replicas: usize,
    /// Default 0.5.
    pub beta_hat: f64,
    /// Default Gaussian.
    pub law: DisorderLaw,
    /// Extra horizons for the 1/log N extrapolation of the variance. Default [N/16, N/4].
    pub extrapolation_ns: Vec<usize>,
    /// Relative tolerance on the variance of log Z. Default 0.2.
    pub variance_tol: f64,
    /// Relative tolerance on the mean of log Z. Default 0.2.
    pub mean_tol: f64,
    /// Largest accepted KS distance to the limit normal. Default 0.05.
    pub ks_max: f64,
    /// Default: tail-bound window with cap 1e-8.
    pub polymer: PolymerOptions,
}

impl Default for OnePointConfig {
    fn default() -> Self {
        Self {
            n: 1 << 14,
            replicas: 4000,
            beta_hat: 0.5,
            law: DisorderLaw::Gaussian,
            extrapolation_ns: vec![1 << 10, 1 << 12],
            variance_tol: 0.2,
            mean_tol: 0.2,
            ks_max: 0.05,
            polymer: PolymerOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalDecayConfig {
    /// Default 0.
    pub theta: f64,
    /// Default 2^10, 2^11, ..., 2^16.
    pub ns: Vec<usize>,
    /// Replicas per horizon. Default 200.
    pub replicas: usize,
    /// Subcritical control arm. Default 0.5.
    pub control_beta_hat: f64,
    /// Relative tolerance of the control median against e^{−σ̂²/2}. Default 0.2.
    pub control_tol: f64,
    /// Default Gaussian.
    pub law: DisorderLaw,
    pub polymer: PolymerOptions,
}

impl Default for CriticalDecayConfig {
    fn default() -> Self {
        Self {
            theta: 0.0,
            ns: (10..=16).map(|k| 1usize << k).collect(),
            replicas: 200,
            control_beta_hat: 0.5,
            control_tol: 0.2,
            law: DisorderLaw::Gaussian,
            polymer: PolymerOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EwConfig {
    /// Default 2^14.
    pub n: usize,
    /// Default 2000.
    pub replicas: usize,
    /// Default 0.5.
    pub beta_hat: f64,
    pub phi: BumpConfig,
    /// Relative tolerance on the variance. Default 0.25.
    pub tol: f64,
    /// Default Gaussian.
    pub law: DisorderLaw,
    pub polymer: PolymerOptions,
}

impl Default for EwConfig {
    fn default() -> Self {
        Self {
            n: 1 << 14,
            replicas: 2000,
            beta_hat: 0.5,
            phi: BumpConfig::default(),
            tol: 0.25,
            law: DisorderLaw::Gaussian,
            polymer: PolymerOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuasiCriticalConfig {
    /// Default 2^16.
    pub n: usize,
    /// Default 2000.
    pub replicas: usize,
    /// `θ_N = (log N)^κ`. Default 0.5.
    pub kappa: f64,
    pub phi: BumpConfig,
    /// Relative tolerance. Default 0.3.
    pub tol: f64,
    /// Default Gaussian.
    pub law: DisorderLaw,
    pub polymer: PolymerOptions,
}

impl Default for QuasiCriticalConfig {
    fn default() -> Self {
        Self {
            n: 1 << 16,
            replicas: 2000,
            kappa: 0.5,
            phi: BumpConfig::default(),
            tol: 0.3,
            law: DisorderLaw::Gaussian,
            polymer: PolymerOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollisionConfig {
    /// Default 2^16.
    pub n: usize,
    /// Default 10^5.
    pub replicas: usize,
    /// Relative tolerance on the mean of L/R_N. Default 0.1.
    pub mean_tol: f64,
    /// Absolute tolerance on P(L/R_N > 1) against e^{−1}. Default 0.03.
    pub survival_tol: f64,
}

impl Default for CollisionConfig {
    fn default() -> Self {
        Self { n: 1 << 16, replicas: 100_000, mean_tol: 0.1, survival_tol: 0.03 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GalleryConfig {
    /// Default 0.
    pub theta: f64,
    /// Horizon of the first image. Default 2^12.
    pub n: usize,
    /// Second image at `θ − log a`, horizon `a·N`, window scaled by `√a`. Default 4.
    pub a: f64,
    /// Half-width of the first image in sites. Default 64.
    pub half_width: i64,
    /// Clip quantile for the gray scale. Default 0.995.
    pub clip_quantile: f64,
    /// Default Gaussian.
    pub law: DisorderLaw,
    pub polymer: PolymerOptions,
}

impl Default for GalleryConfig {
    fn default() -> Self {
        Self {
            theta: 0.0,
            n: 1 << 12,
            a: 4.0,
            half_width: 64,
            clip_quantile: 0.995,
            law: DisorderLaw::Gaussian,
            polymer: PolymerOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentGrowthConfig {
    /// Default 0.
    pub theta: f64,
    /// Default 2^10.
    pub n: usize,
    /// Default 400.
    pub replicas: usize,
    /// Default [2, 3, 4].
    pub orders: Vec<u32>,
    /// `N' = εN`. Default [1, 1/4, 1/16].
    pub eps: Vec<f64>,
    pub phi: BumpConfig,
    /// Standard errors allowed between the h = 2 estimate and the exact variance. Default 4.
    pub z_tol: f64,
    /// Kurtosis above which an estimate is flagged heavy-tailed. Default 50.
    pub kurtosis_flag: f64,
    /// Default Gaussian.
    pub law: DisorderLaw,
    pub polymer: PolymerOptions,
}

impl Default for MomentGrowthConfig {
    fn default() -> Self {
        Self {
            theta: 0.0,
            n: 1 << 10,
            replicas: 400,
            orders: vec![2, 3, 4],
            eps: vec![1.0, 0.25, 0.0625],
            phi: BumpConfig::default(),
            z_tol: 4.0,
            kurtosis_flag: 50.0,
            law: DisorderLaw::Gaussian,
            polymer: PolymerOptions::default(),
        }
    }
}

/// All experiment configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentsConfig {
    /// Batches for batch-means standard errors. Default 30.
    pub batches: Batches,
    pub one_point_lognormal: OnePointConfig,
    pub critical_one_point_decay: CriticalDecayConfig,
    pub edwards_wilkinson: EwConfig,
    pub quasi_critical_scaling: QuasiCriticalConfig,
    pub collision_exponential: CollisionConfig,
    pub shf_gallery: GalleryConfig,
    pub centred_moment_growth: MomentGrowthConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Batches(pub usize);

impl Default for Batches {
    fn default() -> Self {
        Batches(30)
    }
}
