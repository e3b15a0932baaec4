//! The Dickman subordinator `Y_s` (Lévy measure `t⁻¹ 1_{(0,1)}(t) dt`): density,
//! mass below one, Laplace transform, a jump sampler, and the weighted
//! Green's function `G_θ(t) = ∫₀^∞ e^{θs} f_s(t) ds`.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::quad::{integrate, integrate_breakpoints, GaussLegendre};
use crate::{Error, Result, EULER_GAMMA};

/// `P(Y_s ≤ 1) = e^{−γs}/Γ(s+1)`.
pub fn mass_below_one(s: f64) -> f64 {
    (-EULER_GAMMA * s - ln_gamma(s + 1.0)).exp()
}

/// Density on `(0, 1]`: `s t^{s−1} e^{−γs}/Γ(s+1)`.
pub fn density_below_one(s: f64, t: f64) -> f64 {
    s * ((s - 1.0) * t.ln() - EULER_GAMMA * s - ln_gamma(s + 1.0)).exp()
}

/// `E[e^{λ Y_s}] = exp(s Σ_{n≥1} λⁿ/(n·n!))`.
pub fn laplace(s: f64, lam: f64) -> f64 {
    let mut sum = 0.0;
    let mut pow_over_fact = 1.0;
    for n in 1..400 {
        pow_over_fact *= lam / n as f64;
        let term = pow_over_fact / n as f64;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) && n as f64 > lam.abs() {
            break;
        }
    }
    (s * sum).exp()
}

/// Density `f_s` tabulated beyond `t = 1` by marching the renewal identity
/// `f_s(t) = s t^{s−1} (C − I(t−1))`, `I(x) = ∫₀^x f_s(a)(1+a)^{−s} da`,
/// `C = e^{−γs}/Γ(s+1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DickmanGrid {
    pub s: f64,
    pub step: f64,
    pub t_max: f64,
    /// `f[i] = f_s(1 + i·step)`.
    pub f: Vec<f64>,
    /// `cum[i] = ∫₁^{1+i·step} f_s(a)(1+a)^{−s} da`.
    cum: Vec<f64>,
    /// `I(1)` from the series.
    i_one: f64,
    c: f64,
}

/// Exact-in-cell integral weights of the cubic through four neighbours.
const W_MID: [f64; 4] = [-1.0 / 24.0, 13.0 / 24.0, 13.0 / 24.0, -1.0 / 24.0];
const W_LEFT: [f64; 4] = [9.0 / 24.0, 19.0 / 24.0, -5.0 / 24.0, 1.0 / 24.0];
const W_RIGHT: [f64; 4] = [1.0 / 24.0, -5.0 / 24.0, 19.0 / 24.0, 9.0 / 24.0];

impl DickmanGrid {
    pub const DEFAULT_STEP: f64 = 1e-3;
    pub const DEFAULT_T_MAX: f64 = 8.0;

    pub fn new(s: f64) -> Result<Self> {
        Self::with_grid(s, Self::DEFAULT_STEP, Self::DEFAULT_T_MAX)
    }

    /// `1/step` must be an integer so unit intervals align with the grid.
    pub fn with_grid(s: f64, step: f64, t_max: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::OutOfRange(format!("s = {s} must be positive")));
        }
        let per_unit = (1.0 / step).round();
        if !(per_unit >= 4.0) || ((1.0 / step) - per_unit).abs() > 1e-9 {
            return Err(Error::OutOfRange("1/step must be an integer >= 4".into()));
        }
        let per_unit = per_unit as usize;
        let h = 1.0 / per_unit as f64;
        let cells = ((t_max.max(1.0) - 1.0) * per_unit as f64 - 1e-9).ceil().max(4.0) as usize;
        let c = mass_below_one(s);
        let i_one = series_prefix(s, c, 1.0);
        let mut f = vec![0.0; cells + 1];
        // g[i] = f(1 + i h) (2 + i h)^{−s}, the integrand of I at a = 1 + i h.
        let mut g = vec![0.0; cells + 1];
        let mut cum = vec![0.0; cells + 1];
        for i in 0..=cells {
            let t = 1.0 + i as f64 * h;
            let prefix = if i <= per_unit {
                series_prefix(s, c, t - 1.0)
            } else {
                let j = i - per_unit;
                // The stencil of cell j−1 ends at most at j+1 < i.
                cum[j] = cum[j - 1] + h * cell_integral(&g, j - 1, per_unit);
                i_one + cum[j]
            };
            f[i] = s * ((s - 1.0) * t.ln()).exp() * (c - prefix);
            g[i] = f[i] * (1.0 + t).powf(-s);
        }
        let start = cells.saturating_sub(per_unit).max(1);
        for j in start..=cells {
            cum[j] = cum[j - 1] + h * cell_integral(&g, j - 1, per_unit);
        }
        Ok(Self { s, step: h, t_max: 1.0 + cells as f64 * h, f, cum, i_one, c })
    }

    fn per_unit(&self) -> usize {
        (1.0 / self.step).round() as usize
    }

    /// `I(x) = ∫₀^x f_s(a)(1+a)^{−s} da`.
    pub fn prefix_integral(&self, x: f64) -> Result<f64> {
        if x <= 1.0 {
            return Ok(series_prefix(self.s, self.c, x.max(0.0)));
        }
        let pos = (x - 1.0) / self.step;
        if pos > (self.cum.len() - 1) as f64 + 1e-9 {
            return Err(Error::OutOfRange(format!("x = {x} beyond tabulated range")));
        }
        Ok(self.i_one + interp_within_unit(&self.cum, pos, self.per_unit()))
    }

    /// `f_s(t)`: closed form on `(0, 1]`, marched beyond.
    pub fn density(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::OutOfRange(format!("t = {t} must be positive")));
        }
        if t <= 1.0 {
            return Ok(density_below_one(self.s, t));
        }
        if t > self.t_max + 1e-12 {
            return Err(Error::OutOfRange(format!("t = {t} beyond tabulated range {}", self.t_max)));
        }
        let prefix = self.prefix_integral(t - 1.0)?;
        Ok(self.s * ((self.s - 1.0) * t.ln()).exp() * (self.c - prefix))
    }

    /// `∫₀^{t_max} f_s`, which should be 1 up to the mass beyond `t_max`.
    pub fn total_mass(&self) -> f64 {
        let per_unit = self.per_unit();
        let beyond: f64 = (0..self.f.len() - 1).map(|j| self.step * cell_integral(&self.f, j, per_unit)).sum();
        self.c + beyond
    }
}

/// `I(x)` for `x ≤ 1`: `C s Σ_k W^{s+k}/(s+k)`, `W = x/(1+x)`.
fn series_prefix(s: f64, c: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let w = x / (1.0 + x);
    let mut pw = w.powf(s);
    let mut sum = 0.0;
    for k in 0..400 {
        let term = pw / (s + k as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
        pw *= w;
    }
    c * s * sum
}

/// `∫` over cell `[j, j+1]` (in units of the step) of the cubic through four
/// nodes of the same unit interval, so no stencil straddles a kink.
fn cell_integral(g: &[f64], j: usize, per_unit: usize) -> f64 {
    let u0 = (j / per_unit) * per_unit;
    let u1 = (u0 + per_unit).min(g.len() - 1);
    let (s0, w) = if j == u0 {
        (j, W_LEFT)
    } else if j + 1 == u1 {
        (j - 2, W_RIGHT)
    } else {
        (j - 1, W_MID)
    };
    if s0 + 3 >= g.len() || u1 - u0 < 3 {
        return 0.5 * (g[j] + g[j + 1]);
    }
    (0..4).map(|k| w[k] * g[s0 + k]).sum()
}

/// Cubic interpolation of a table at fractional index `pos`, with the stencil
/// kept inside the unit interval containing `pos`.
fn interp_within_unit(table: &[f64], pos: f64, per_unit: usize) -> f64 {
    let last = table.len() - 1;
    let pos = pos.clamp(0.0, last as f64);
    let j = (pos.floor() as usize).min(last - 1);
    let u0 = (j / per_unit) * per_unit;
    let u1 = (u0 + per_unit).min(last);
    let start = if u1 - u0 < 3 { j.saturating_sub(1).min(last - 3) } else { j.saturating_sub(1).max(u0).min(u1 - 3) };
    let mut out = 0.0;
    for a in 0..4 {
        let mut l = 1.0;
        for b in 0..4 {
            if a != b {
                l *= (pos - (start + b) as f64) / (a as f64 - b as f64);
            }
        }
        out += l * table[start + a];
    }
    out
}

/// One realization of `(Y_s)_{s ≤ s_max}`: jumps above `delta` plus the drift
/// `delta · s` that compensates the discarded small jumps in mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DickmanPath {
    pub s_max: f64,
    pub delta: f64,
    /// `(arrival time, size, spatial increment)`, sorted by arrival.
    pub jumps: Vec<(f64, f64, [f64; 2])>,
}

impl DickmanPath {
    pub fn value_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.s_max);
        self.delta * s + self.jumps.iter().take_while(|j| j.0 <= s).map(|j| j.1).sum::<f64>()
    }

    /// Spatial component `W_{Y_s}/√2` at `s` (small-jump part omitted, variance O(δ)).
    pub fn position_at(&self, s: f64) -> [f64; 2] {
        let mut p = [0.0, 0.0];
        for j in self.jumps.iter().take_while(|j| j.0 <= s) {
            p[0] += j.2[0];
            p[1] += j.2[1];
        }
        p
    }

    pub fn max_jump(&self) -> f64 {
        self.jumps.iter().map(|j| j.1).fold(0.0, f64::max)
    }
}

pub const DEFAULT_DELTA: f64 = 1e-6;

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as usize
}

/// Samples a path on `[0, s_max]`; jump sizes `δ^{1−U}` arrive at rate `log(1/δ)`.
pub fn sample_path<R: Rng + ?Sized>(s_max: f64, delta: f64, rng: &mut R) -> DickmanPath {
    let rate = (1.0 / delta).ln();
    let k = poisson(s_max * rate, rng);
    let mut jumps: Vec<(f64, f64, [f64; 2])> = (0..k)
        .map(|_| {
            let time = rng.random::<f64>() * s_max;
            let size = delta.powf(1.0 - rng.random::<f64>());
            let sd = (0.5 * size).sqrt();
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            (time, size, [sd * z1, sd * z2])
        })
        .collect();
    jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
    DickmanPath { s_max, delta, jumps }
}

/// `Y_s` alone, with jumps restricted to `(δ, upper)`; `upper = 1` is the
/// unconditioned law, `upper < 1` is the law conditioned on no larger jump.
pub fn sample_value<R: Rng + ?Sized>(s: f64, upper: f64, delta: f64, rng: &mut R) -> f64 {
    let rate = (upper / delta).ln();
    let k = poisson(s * rate, rng);
    let mut y = delta * s;
    for _ in 0..k {
        y += delta * (upper / delta).powf(rng.random::<f64>());
    }
    y
}

// Coefficients of 1/Γ(1+s) = Σ_k A[k] s^k.
const RGAMMA: [f64; 7] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
];

/// `G_θ(t)·t` as a function of `L = log(1/t) ≥ 0`:
/// `∫₀^∞ s e^{(θ−γ−L)s}/Γ(s+1) ds`.
pub fn green_times_t(theta: f64, l: f64) -> f64 {
    let m = l - theta + EULER_GAMMA;
    if m > 60.0 {
        // Termwise Laplace transform of the Taylor series of 1/Γ(1+s).
        let mut out = 0.0;
        let mut fact = 1.0; // (k+1)!
        for (k, a) in RGAMMA.iter().enumerate() {
            fact *= (k + 1) as f64;
            out += a * fact / m.powi(k as i32 + 2);
        }
        return out;
    }
    s_integral(|s| s.ln() + (theta - EULER_GAMMA - l) * s - ln_gamma(s + 1.0), m)
}

/// `H_θ(w) = ∫₀^w G_θ` as a function of `L = log(1/w)`:
/// `∫₀^∞ e^{(θ−γ−L)s}/Γ(s+1) ds`.
pub fn green_integral(theta: f64, l: f64) -> f64 {
    let m = l - theta + EULER_GAMMA;
    if m > 60.0 {
        let mut out = 0.0;
        let mut fact = 1.0; // k!
        for (k, a) in RGAMMA.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            out += a * fact / m.powi(k as i32 + 1);
        }
        return out;
    }
    s_integral(|s| (theta - EULER_GAMMA - l) * s - ln_gamma(s + 1.0), m)
}

/// Integral over `s ∈ (0, ∞)` of `exp(log_f(s))`, truncated where the
/// integrand falls below 1e-16 of its peak. `m` sets the decay scale.
fn s_integral<F: Fn(f64) -> f64>(log_f: F, m: f64) -> f64 {
    let f = |s: f64| if s <= 0.0 { 0.0 } else { log_f(s).exp() };
    let scale = if m > 1.0 { 1.0 / m } else { 1.0 };
    // Locate the peak on a coarse geometric scan, then the cut-off.
    let mut peak = f64::NEG_INFINITY;
    let mut s = scale * 1e-3;
    while s < 1e4 {
        peak = peak.max(log_f(s));
        s *= 1.5;
        if log_f(s) < peak - 40.0 && s > scale {
            break;
        }
    }
    let mut upper = scale;
    while log_f(upper) > peak - 37.0 || upper < scale {
        upper *= 1.25;
    }
    let mut pts = vec![0.0];
    let mut b = scale * 1e-2;
    while b < upper {
        pts.push(b);
        b *= 4.0;
    }
    pts.push(upper);
    integrate_breakpoints(f, &pts, 0.0, 1e-13).value
}

/// `G_θ(t) = ∫₀^∞ e^{(θ−γ)s} s t^{s−1}/Γ(s+1) ds` for `t ∈ (0, 1]`.
pub fn green_theta(theta: f64, t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::OutOfRange(format!("t = {t} outside (0, 1]")));
    }
    let l = -t.ln();
    Ok(green_times_t(theta, l) / t)
}

/// `∫₀^w G_θ(t) dt` for `w ∈ (0, 1]`.
pub fn green_theta_integral(theta: f64, w: f64) -> Result<f64> {
    if !(w > 0.0 && w <= 1.0) {
        return Err(Error::OutOfRange(format!("w = {w} outside (0, 1]")));
    }
    Ok(green_integral(theta, -w.ln()))
}

/// `Ḡ_θ = ∫₀¹ G_θ(t) dt` through `t = exp(−e^y)`, composite Gauss–Legendre
/// over `y ∈ [−37, 37]` with `panels` panels.
pub fn green_bar_with(theta: f64, panels: usize) -> f64 {
    let gl = GaussLegendre::new(8);
    gl.composite(|y: f64| green_times_t(theta, y.exp()) * y.exp(), -37.0, 37.0, panels)
}

pub fn green_bar(theta: f64) -> f64 {
    green_bar_with(theta, 240)
}

/// `∫₀^∞ e^{θs} P(Y_s ≤ 1) ds`, the same constant by Fubini.
pub fn green_bar_alternate(theta: f64) -> f64 {
    s_integral(|s| theta * s + mass_below_one(s).ln(), (EULER_GAMMA - theta).max(0.0))
}

/// `G_θ(t)` for `t > 1` from `∫ e^{θs} f_s(t) ds` with tabulated densities
/// (composite Gauss–Legendre in `s`).
pub fn green_theta_extended(theta: f64, t: f64, s_max: f64, panels: usize) -> Result<f64> {
    if t <= 1.0 {
        return green_theta(theta, t);
    }
    let gl = GaussLegendre::new(8);
    let h = s_max / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let a = p as f64 * h;
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            let s = a + 0.5 * h * (x + 1.0);
            let grid = DickmanGrid::with_grid(s, 1e-3, t + 1e-3)?;
            total += 0.5 * h * w * (theta * s).exp() * grid.density(t)?;
        }
    }
    Ok(total)
}

/// Tabulated `G_θ` and `H_θ = ∫₀ G_θ` on `(0, 1]` for repeated evaluation:
/// `log(G_θ(t)·t)` and `log H_θ(t)` on a uniform grid in `log log(1/t)`,
/// cubic interpolation inside, the asymptotic series beyond.
#[derive(Debug, Clone)]
pub struct GreenTable {
    pub theta: f64,
    lo: f64,
    step: f64,
    log_gt: Vec<f64>,
    log_h: Vec<f64>,
    /// Values at `L = 0` (`t = 1`).
    gt_one: f64,
    h_one: f64,
}

impl GreenTable {
    const LO: f64 = -25.0;
    const STEP: f64 = 0.01;

    pub fn new(theta: f64) -> Self {
        Self::with_step(theta, Self::STEP)
    }

    pub fn with_step(theta: f64, step: f64) -> Self {
        // Upper end where the asymptotic branch is already in force.
        let hi = (62.0 + theta.max(0.0)).ln();
        let n = ((hi - Self::LO) / step).ceil() as usize + 1;
        let mut log_gt = Vec::with_capacity(n);
        let mut log_h = Vec::with_capacity(n);
        for i in 0..n {
            let l = (Self::LO + i as f64 * step).exp();
            log_gt.push(green_times_t(theta, l).ln());
            log_h.push(green_integral(theta, l).ln());
        }
        Self {
            theta,
            lo: Self::LO,
            step,
            log_gt,
            log_h,
            gt_one: green_times_t(theta, 0.0),
            h_one: green_integral(theta, 0.0),
        }
    }

    fn lookup(&self, table: &[f64], l: f64) -> Option<f64> {
        if l <= 0.0 {
            return None;
        }
        let pos = (l.ln() - self.lo) / self.step;
        if pos < 1.0 || pos > (table.len() - 3) as f64 {
            return None;
        }
        let j = pos.floor() as usize;
        let u = pos - j as f64;
        let (a, b, c, d) = (table[j - 1], table[j], table[j + 1], table[j + 2]);
        let v = b + 0.5 * u * (c - a + u * (2.0 * a - 5.0 * b + 4.0 * c - d + u * (3.0 * (b - c) + d - a)));
        Some(v.exp())
    }

    /// `G_θ(t)·t` at `L = log(1/t)`.
    pub fn gt(&self, l: f64) -> f64 {
        if l < (self.lo + self.step).exp() {
            // Smooth in L near 0; the first grid node is ~1e-11 away.
            return if l <= 0.0 { self.gt_one } else { green_times_t(self.theta, l) };
        }
        self.lookup(&self.log_gt, l).unwrap_or_else(|| green_times_t(self.theta, l))
    }

    /// `H_θ(w)` at `L = log(1/w)`.
    pub fn h_of_l(&self, l: f64) -> f64 {
        if l < (self.lo + self.step).exp() {
            return if l <= 0.0 { self.h_one } else { green_integral(self.theta, l) };
        }
        self.lookup(&self.log_h, l).unwrap_or_else(|| green_integral(self.theta, l))
    }

    /// `G_θ(t)` for `t ∈ (0, 1]`.
    pub fn g(&self, t: f64) -> f64 {
        self.gt(-t.ln()) / t
    }

    /// `H_θ(w) = ∫₀^w G_θ` for `w ∈ [0, 1]`.
    pub fn h(&self, w: f64) -> f64 {
        if w <= 0.0 {
            0.0
        } else {
            self.h_of_l(-w.ln())
        }
    }
}

/// Adaptive s-quadrature of `G_θ(t)` directly in `t` (no `L` rewrite); used in
/// tests as an independent route.
pub fn green_theta_direct(theta: f64, t: f64) -> f64 {
    integrate(
        |s: f64| if s <= 0.0 { 0.0 } else { ((theta - EULER_GAMMA) * s + s.ln() + (s - 1.0) * t.ln() - ln_gamma(s + 1.0)).exp() },
        0.0,
        60.0,
        0.0,
        1e-12,
        2000,
    )
    .value
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let e = (-EULER_GAMMA).exp();
        assert!((mass_below_one(1.0) - e).abs() < 1e-15);
        assert!((mass_below_one(2.0) - (-2.0 * EULER_GAMMA).exp() / 2.0).abs() < 1e-15);
        assert!((density_below_one(1.0, 0.3) - e).abs() < 1e-15);
        assert!((laplace(1.0, 1.0) - 1.317_902_151_454_403_8f64.exp()).abs() < 1e-12);
        assert_eq!(laplace(3.0, 0.0), 1.0);
    }

    #[test]
    fn s_equal_one_second_branch() {
        // f₁(t) = e^{−γ}(1 − log t) on (1, 2].
        let g = DickmanGrid::with_grid(1.0, 1e-3, 3.0).unwrap();
        let e = (-EULER_GAMMA).exp();
        for t in [1.1, 1.5, 1.999] {
            assert!((g.density(t).unwrap() - e * (1.0 - f64::ln(t))).abs() < 1e-13, "t={t}");
        }
    }

    #[test]
    fn density_integrates_to_one() {
        for s in [0.5, 1.0, 2.0] {
            let g = DickmanGrid::with_grid(s, 1e-3, 16.0).unwrap();
            assert!((g.total_mass() - 1.0).abs() < 1e-6, "s={s}: {}", g.total_mass());
        }
    }

    #[test]
    fn green_routes_agree() {
        for theta in [-1.0, 0.0, 1.0] {
            for t in [0.9, 0.3, 1e-3] {
                let a = green_theta(theta, t).unwrap();
                let b = green_theta_direct(theta, t);
                assert!((a / b - 1.0).abs() < 1e-9, "θ={theta} t={t}: {a} vs {b}");
            }
            let a = green_bar(theta);
            let b = green_bar_alternate(theta);
            assert!((a / b - 1.0).abs() < 1e-9, "θ={theta}: {a} vs {b}");
        }
    }

    #[test]
    fn table_matches_direct() {
        for theta in [-1.0, 0.5] {
            let table = GreenTable::new(theta);
            for l in [1e-12, 1e-6, 0.037, 0.7, 3.3, 41.0, 400.0] {
                let a = table.gt(l);
                let b = green_times_t(theta, l);
                assert!((a / b - 1.0).abs() < 1e-8, "θ={theta} L={l}: {a} vs {b}");
                let a = table.h_of_l(l);
                let b = green_integral(theta, l);
                assert!((a / b - 1.0).abs() < 1e-8, "θ={theta} L={l}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn asymptotic_branch_is_continuous() {
        for theta in [-1.0, 0.0, 1.0] {
            let l = 60.0 + theta - EULER_GAMMA;
            let a = green_times_t(theta, l - 1e-9);
            let b = green_times_t(theta, l + 1e-9);
            assert!((a / b - 1.0).abs() < 1e-9, "{a} {b}");
            let a = green_integral(theta, l - 1e-9);
            let b = green_integral(theta, l + 1e-9);
            assert!((a / b - 1.0).abs() < 1e-9, "{a} {b}");
        }
    }
}
