//! Continuum covariance kernels of the critical 2d stochastic heat flow.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dickman::{green_integral, GreenTable};
use crate::polymer::TestFunction;
use crate::quad::{integrate, integrate_breakpoints, GaussLegendre};
use crate::walk::heat_kernel;
use crate::{Error, Result, EULER_GAMMA};

/// A kernel value, or the tag for a coincident diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelValue {
    Finite(f64),
    Divergent,
}

impl KernelValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            KernelValue::Finite(v) => Some(v),
            KernelValue::Divergent => None,
        }
    }

    pub fn is_divergent(self) -> bool {
        matches!(self, KernelValue::Divergent)
    }
}

/// Quadrature tolerances for the nested integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub max_segments: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { rel_tol: 1e-9, max_segments: 400 }
    }
}

/// `E[SHF_{s,t}(dx, dy)] = g_{t−s}(y − x) dx dy`.
pub fn mean_density(s: f64, t: f64, x: [f64; 2], y: [f64; 2]) -> f64 {
    let d = [y[0] - x[0], y[1] - x[1]];
    heat_kernel(t - s, d[0] * d[0] + d[1] * d[1])
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Covariance kernels for one value of `θ`.
#[derive(Debug, Clone)]
pub struct ShfCovariance {
    pub theta: f64,
    pub quad: QuadratureSpec,
    green: GreenTable,
}

impl ShfCovariance {
    pub fn new(theta: f64) -> Self {
        Self::with_quadrature(theta, QuadratureSpec::default())
    }

    pub fn with_quadrature(theta: f64, quad: QuadratureSpec) -> Self {
        Self { theta, quad, green: GreenTable::new(theta) }
    }

    pub fn green(&self) -> &GreenTable {
        &self.green
    }

    fn check_t(t: f64) -> Result<()> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::OutOfRange(format!("kernel horizon t = {t} outside (0, 1]")));
        }
        Ok(())
    }

    fn integ<F: FnMut(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        integrate(f, a, b, 0.0, self.quad.rel_tol, self.quad.max_segments).value
    }

    /// `K̃_t(r) = 4π ∬_{0<u<v<t} g_{2u}(r) G_θ(v−u) du dv
    ///          = ∫₀^t e^{−r²/4u} H_θ(t−u) du/u`.
    pub fn k_tilde_r(&self, t: f64, r: f64) -> Result<KernelValue> {
        Self::check_t(t)?;
        if r == 0.0 {
            return Ok(KernelValue::Divergent);
        }
        let r2 = r * r;
        let half = 0.5 * t;
        // u = (t/2) e^{−z}: the Gaussian factor dies once r²/4u ≳ 40.
        let z_max = (160.0 * half / r2).ln().max(0.0);
        let left = self.integ(
            |z| {
                let u = half * (-z).exp();
                (-r2 / (4.0 * u)).exp() * self.green.h(t - u)
            },
            0.0,
            z_max,
        );
        // w = t − u = (t/2) e^{−z}.
        let lw0 = (1.0 / half).ln();
        let right = self.integ(
            |z| {
                let w = half * (-z).exp();
                let u = t - w;
                (-r2 / (4.0 * u)).exp() * self.green.h_of_l(lw0 + z) * w / u
            },
            0.0,
            60.0,
        );
        Ok(KernelValue::Finite(left + right))
    }

    pub fn k_tilde(&self, t: f64, x: [f64; 2], xp: [f64; 2]) -> Result<KernelValue> {
        self.k_tilde_r(t, dist2(x, xp).sqrt())
    }

    /// `J(b) = ∫₀^b g_{2a}(r) G_θ(b−a) da`.
    fn inner_j(&self, b: f64, r2: f64) -> f64 {
        let half = 0.5 * b;
        let g2 = |a: f64| (-r2 / (4.0 * a)).exp() / (4.0 * PI * a);
        // a = (b/2) e^{−z}, da = a dz.
        let z_max = (160.0 * half / r2).ln().max(0.0);
        let left = self.integ(
            |z| {
                let a = half * (-z).exp();
                g2(a) * a * self.green.g(b - a)
            },
            0.0,
            z_max,
        );
        // w = b − a = (b/2) exp(−e^y): G(w) w = gt(L_w) with L_w = log(2/b) + e^y,
        // dw = −w e^y dy.
        let l0 = (1.0 / half).ln();
        let right = self.integ(
            |y| {
                let ey = y.exp();
                let w = half * (-ey).exp();
                g2(b - w) * self.green.gt(l0 + ey) * ey
            },
            -40.0,
            5.0,
        );
        left + right
    }

    /// `K_t(x, x'; y, y') = 4π g_{t/2}(ȳ − x̄) ∬_{0<a<b<t} g_{2a}(x'−x) G_θ(b−a) g_{2(t−b)}(y'−y) da db`.
    pub fn k_full(&self, t: f64, x: [f64; 2], xp: [f64; 2], y: [f64; 2], yp: [f64; 2]) -> Result<KernelValue> {
        Self::check_t(t)?;
        let r1 = dist2(x, xp);
        let r2 = dist2(y, yp);
        if r1 == 0.0 || r2 == 0.0 {
            return Ok(KernelValue::Divergent);
        }
        let xbar = [0.5 * (x[0] + xp[0]), 0.5 * (x[1] + xp[1])];
        let ybar = [0.5 * (y[0] + yp[0]), 0.5 * (y[1] + yp[1])];
        let prefactor = 4.0 * PI * heat_kernel(0.5 * t, dist2(xbar, ybar));
        let g2 = |a: f64, d2: f64| (-d2 / (4.0 * a)).exp() / (4.0 * PI * a);
        let half = 0.5 * t;
        // b = (t/2) e^{−z} on the left, t − b = (t/2) e^{−z} on the right.
        let z1 = (160.0 * half / r1).ln().max(0.0);
        let z2 = (160.0 * half / r2).ln().max(0.0);
        let left = self.integ(
            |z| {
                let b = half * (-z).exp();
                self.inner_j(b, r1) * g2(t - b, r2) * b
            },
            0.0,
            z1,
        );
        let right = self.integ(
            |z| {
                let c = half * (-z).exp();
                self.inner_j(t - c, r1) * g2(c, r2) * c
            },
            0.0,
            z2,
        );
        Ok(KernelValue::Finite(prefactor * (left + right)))
    }

    /// `(4π/ε) ∫₀^ε ∫₀^{ε−u} G_θ = (4π/ε) ∫₀^ε H_θ(w) dw`.
    pub fn coarse_grained_variance(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::OutOfRange(format!("ε = {eps} outside (0, 1]")));
        }
        let l0 = -eps.ln();
        // w = ε e^{−z}.
        let v = self.integ(|z| self.green.h_of_l(l0 + z) * (-z).exp(), 0.0, 40.0);
        Ok(4.0 * PI * v)
    }
}

/// `K̃^θ_t(x, x')`, building a fresh table for `θ`.
pub fn k_tilde(theta: f64, t: f64, x: [f64; 2], xp: [f64; 2]) -> Result<KernelValue> {
    ShfCovariance::new(theta).k_tilde(t, x, xp)
}

pub fn k_full(theta: f64, t: f64, x: [f64; 2], xp: [f64; 2], y: [f64; 2], yp: [f64; 2]) -> Result<KernelValue> {
    ShfCovariance::new(theta).k_full(t, x, xp, y, yp)
}

/// `|K̃^θ_{at}(√a·r) − K̃^{θ+log a}_t(r)| / K̃^{θ+log a}_t(r)`.
pub fn scaling_identity_residual(theta: f64, t: f64, a: f64, x: [f64; 2], xp: [f64; 2]) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::OutOfRange(format!("scale a = {a} must be positive")));
    }
    let r = dist2(x, xp).sqrt();
    if a == 1.0 {
        return Ok(0.0);
    }
    let lhs = ShfCovariance::new(theta).k_tilde_r(a * t, a.sqrt() * r)?;
    let rhs = ShfCovariance::new(theta + a.ln()).k_tilde_r(t, r)?;
    match (lhs, rhs) {
        (KernelValue::Finite(l), KernelValue::Finite(r)) => Ok((l - r).abs() / r),
        _ => Err(Error::OutOfRange("coincident points".into())),
    }
}

pub fn coarse_grained_variance(theta: f64, eps: f64) -> Result<f64> {
    ShfCovariance::new(theta).coarse_grained_variance(eps)
}

/// `4π ∫₀^∞ e^{(θ−γ)s} ε^s / Γ(s+2) ds`, the same quantity with the time
/// integrals done first.
pub fn coarse_grained_variance_oracle(theta: f64, eps: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let log_f = |s: f64| (theta - EULER_GAMMA) * s + s * eps.ln() - ln_gamma(s + 2.0);
    let mut upper = 1.0;
    while log_f(upper) > -45.0 || upper < 4.0 {
        upper *= 1.5;
    }
    let pts: Vec<f64> = (0..=16).map(|k| upper * k as f64 / 16.0).collect();
    4.0 * PI * integrate_breakpoints(|s: f64| log_f(s).exp(), &pts, 0.0, 1e-12).value
}

/// `∫₀¹ g_{2u}(r) du = E₁(r²/4)/(4π)`.
pub fn ew_kernel(r: f64) -> f64 {
    if r == 0.0 {
        return f64::INFINITY;
    }
    statrs::function::exponential::integral(r * r / 4.0, 1).unwrap_or(0.0) / (4.0 * PI)
}

/// `∫₀^t g_{2u}(r) du = E₁(r²/4t)/(4π)`.
pub fn ew_kernel_t(t: f64, r: f64) -> f64 {
    if r == 0.0 {
        return f64::INFINITY;
    }
    statrs::function::exponential::integral(r * r / (4.0 * t), 1).unwrap_or(0.0) / (4.0 * PI)
}

/// `σ²_{t,φ} = ∬ φ(x) φ(x') ∫₀^t g_{2u}(x − x') du dx dx'` for `φ` supported in
/// `[−radius, radius]²`, in polar coordinates for the lag.
pub fn ew_form(phi: &TestFunction, t: f64, radius: f64) -> f64 {
    let gl = GaussLegendre::new(16);
    let autocorr = |d: [f64; 2]| {
        let x0 = (-radius).max(-radius - d[0]);
        let x1 = radius.min(radius - d[0]);
        let y0 = (-radius).max(-radius - d[1]);
        let y1 = radius.min(radius - d[1]);
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        gl.composite(|x| gl.composite(|y| phi.eval(x, y) * phi.eval(x + d[0], y + d[1]), y0, y1, 4), x0, x1, 4)
    };
    let lag_max = 2.0 * std::f64::consts::SQRT_2 * radius;
    let angles = GaussLegendre::new(16);
    let radial = |s: f64| {
        let ring = angles.integrate(|a| autocorr([s * a.cos(), s * a.sin()]), 0.0, PI);
        2.0 * ring * s * ew_kernel_t(t, s)
    };
    integrate_breakpoints(radial, &[0.0, 1e-3 * radius, 0.05 * radius, 0.3 * radius, radius, lag_max], 0.0, 1e-7).value
}

/// `(1/(1−β̂²)) σ²_{1,φ}` for a compactly supported `φ`.
pub fn ew_variance_target(phi: &TestFunction, beta_hat: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta_hat) {
        return Err(Error::OutOfRange(format!("beta_hat = {beta_hat} must lie in [0, 1)")));
    }
    let radius = phi
        .radius()
        .ok_or_else(|| Error::OutOfRange("test function must be compactly supported".into()))?;
    Ok(ew_form(phi, 1.0, radius) / (1.0 - beta_hat * beta_hat))
}

/// `H_θ` at `w` without a table.
pub fn green_integral_at(theta: f64, w: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else {
        green_integral(theta, -w.ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coincident_points_diverge() {
        let k = ShfCovariance::new(0.0);
        assert!(k.k_tilde(1.0, [0.3, 0.1], [0.3, 0.1]).unwrap().is_divergent());
        assert!(k.k_full(1.0, [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.1, 0.0]).unwrap().is_divergent());
        assert!(k.k_tilde_r(1.5, 0.1).is_err());
    }

    #[test]
    fn far_points_vanish() {
        let k = ShfCovariance::new(0.0);
        let v = k.k_tilde_r(1.0, 10.0).unwrap().finite().unwrap();
        assert!(v >= 0.0 && v < 1e-8, "{v}");
    }

    #[test]
    fn coarse_grained_matches_oracle() {
        for theta in [-1.0, 0.0, 1.0] {
            for eps in [1.0, 1e-2, 1e-6] {
                let a = coarse_grained_variance(theta, eps).unwrap();
                let b = coarse_grained_variance_oracle(theta, eps);
                assert!((a / b - 1.0).abs() < 1e-7, "θ={theta} ε={eps}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn ew_kernel_by_quadrature() {
        for r in [0.1, 1.0, 3.0] {
            let q = integrate(|u: f64| heat_kernel(2.0 * u, r * r), 0.0, 1.0, 0.0, 1e-12, 400).value;
            assert!((q / ew_kernel(r) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ew_form_gaussian_closed_form() {
        // ∬ g_a g_a g_{2u} = g_{2a+2u}(0), so σ² = log((a+t)/a)/(4π).
        let a = 0.05;
        let phi = TestFunction::new(None, move |x, y| heat_kernel(a, x * x + y * y));
        let v = ew_form(&phi, 1.0, 2.0);
        let expect = ((a + 1.0) / a).ln() / (4.0 * PI);
        assert!((v / expect - 1.0).abs() < 1e-5, "{v} vs {expect}");
    }
}
