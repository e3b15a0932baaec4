//! Transfer-matrix evaluation of partition functions for a fixed environment.
//!
//! The recursion applies the one-step kernel as two 1d passes (rows, then
//! columns) of shifted axpys, multiplies by `e^{βω(n,y) − λ(β)}` on arrival at
//! the disorder-carrying times and tracks a log-scale to avoid overflow. The
//! active rectangle grows by the step reach per step and is clipped to a cap
//! window; the mass that leaves the cap window is accounted for through the
//! exact killed β = 0 recursion, which factorizes over coordinates.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::{DisorderField, DisorderSpec};
use crate::walk::{binomial_row, WalkKernel};
use crate::{Error, Result};

/// Inclusive lattice rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: i64,
    pub x1: i64,
    pub y0: i64,
    pub y1: i64,
}

impl Rect {
    pub fn new(x0: i64, x1: i64, y0: i64, y1: i64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn point(x: i64, y: i64) -> Self {
        Self::new(x, x, y, y)
    }

    /// Square of half-width `r` around `(x, y)`.
    pub fn centred(x: i64, y: i64, r: i64) -> Self {
        Self::new(x - r, x + r, y - r, y + r)
    }

    pub fn rows(&self) -> usize {
        (self.x1 - self.x0 + 1).max(0) as usize
    }

    pub fn cols(&self) -> usize {
        (self.y1 - self.y0 + 1).max(0) as usize
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn expand(&self, r: i64) -> Self {
        Self::new(self.x0 - r, self.x1 + r, self.y0 - r, self.y1 + r)
    }

    pub fn intersect(&self, o: &Rect) -> Self {
        Self::new(self.x0.max(o.x0), self.x1.min(o.x1), self.y0.max(o.y0), self.y1.min(o.y1))
    }
}

/// One time slice `Z_n(·)` on a rectangle. Stored values times `e^{log_scale}`
/// are the partition values.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSlice {
    pub n: u64,
    pub rect: Rect,
    pub values: Vec<f64>,
    pub log_scale: f64,
    /// β = 0 mass lost at the cap window, relative to the initial mass.
    pub truncation_mass: f64,
}

impl PartitionSlice {
    pub fn point(n: u64, x: i64, y: i64) -> Self {
        Self { n, rect: Rect::point(x, y), values: vec![1.0], log_scale: 0.0, truncation_mass: 0.0 }
    }

    /// Stored (unscaled) value; zero outside the rectangle.
    pub fn raw(&self, x: i64, y: i64) -> f64 {
        if !self.rect.contains(x, y) {
            return 0.0;
        }
        self.values[(x - self.rect.x0) as usize * self.rect.cols() + (y - self.rect.y0) as usize]
    }

    pub fn get(&self, x: i64, y: i64) -> f64 {
        self.raw(x, y) * self.log_scale.exp()
    }

    pub fn raw_sum(&self) -> f64 {
        crate::stats::pairwise_sum(&self.values)
    }

    pub fn log_total(&self) -> f64 {
        self.raw_sum().ln() + self.log_scale
    }

    pub fn total(&self) -> f64 {
        self.log_total().exp()
    }
}

/// Cap-window radius selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WindowRule {
    /// Smallest radius whose β = 0 exit probability bound is below the cap.
    TailBound,
    /// `c · √(N log N)`.
    Diffusive { c: f64 },
    Radius { r: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolymerOptions {
    pub rule: WindowRule,
    pub cap: f64,
}

impl Default for PolymerOptions {
    fn default() -> Self {
        Self { rule: WindowRule::TailBound, cap: 1e-8 }
    }
}

impl PolymerOptions {
    /// Cap-window radius for a recursion over `steps` steps.
    pub fn radius(&self, kernel: &WalkKernel, steps: usize) -> i64 {
        let reach = kernel.reach() * steps as i64;
        let r = match self.rule {
            WindowRule::Radius { r } => r,
            WindowRule::Diffusive { c } => {
                let n = steps.max(2) as f64;
                (c * (n * n.ln()).sqrt()).ceil() as i64
            }
            WindowRule::TailBound => tail_radius(kernel, steps, self.cap),
        };
        r.clamp(0, reach)
    }
}

/// Smallest `r` with `8 · P(S_N ≥ r + 1) ≤ cap` for one coordinate, which bounds
/// the two-dimensional exit probability by the reflection inequality.
pub fn tail_radius(kernel: &WalkKernel, steps: usize, cap: f64) -> i64 {
    let reach = kernel.reach() * steps as i64;
    if steps == 0 {
        return 0;
    }
    let row = if kernel.step().is_centred_binomial4() {
        Some(binomial_row(steps))
    } else {
        kernel.marginal(steps).ok()
    };
    match row {
        Some(row) => {
            let mut tail = 0.0;
            // tail = P(S_N ≥ r + 1), accumulated from the top.
            for r in (0..reach).rev() {
                let next = tail + row[(r + 1 + reach) as usize];
                if 8.0 * next > cap {
                    return r + 1;
                }
                tail = next;
            }
            0
        }
        None => {
            // Hoeffding: P(S_N ≥ a) ≤ exp(−a² / (2 N L²)).
            let l = kernel.reach() as f64;
            let a = (2.0 * steps as f64 * l * l * (8.0 / cap).ln()).sqrt();
            (a.ceil() as i64).min(reach)
        }
    }
}

/// Survival probabilities `h(x) = P_x(walk stays in [lo, hi] for n steps)`.
pub fn killed_survival_1d(taps: &[f64], lo: i64, hi: i64, steps: usize) -> Vec<f64> {
    let w = (hi - lo + 1) as usize;
    let reach = (taps.len() / 2) as i64;
    let mut h = vec![1.0; w];
    let mut next = vec![0.0; w];
    for _ in 0..steps {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (ki, &p) in taps.iter().enumerate() {
            let k = ki as i64 - reach;
            // next[i] += p · h[i + k]
            let (dst_lo, dst_hi) = ((-k).max(0), (w as i64 - k).min(w as i64));
            if dst_lo >= dst_hi {
                continue;
            }
            let (a, b) = (dst_lo as usize, dst_hi as usize);
            let src = &h[(a as i64 + k) as usize..(b as i64 + k) as usize];
            for (d, s) in next[a..b].iter_mut().zip(src) {
                *d += p * s;
            }
        }
        std::mem::swap(&mut h, &mut next);
    }
    h
}

/// Relative β = 0 mass lost at `cap` by an initial measure on `init`.
fn truncation_for(taps: &[f64], init: &PartitionSlice, cap: &Rect, steps: usize) -> f64 {
    if steps == 0 {
        return 0.0;
    }
    let reach = (taps.len() / 2) as i64;
    let far = init.rect.expand(reach * steps as i64);
    if cap.x0 <= far.x0 && cap.x1 >= far.x1 && cap.y0 <= far.y0 && cap.y1 >= far.y1 {
        return 0.0;
    }
    let hx = killed_survival_1d(taps, cap.x0, cap.x1, steps);
    let hy = killed_survival_1d(taps, cap.y0, cap.y1, steps);
    let (mut total, mut kept) = (0.0, 0.0);
    let cols = init.rect.cols();
    for (idx, &v) in init.values.iter().enumerate() {
        let x = init.rect.x0 + (idx / cols) as i64;
        let y = init.rect.y0 + (idx % cols) as i64;
        total += v.abs();
        if cap.contains(x, y) {
            kept += v.abs() * hx[(x - cap.x0) as usize] * hy[(y - cap.y0) as usize];
        }
    }
    if total == 0.0 {
        0.0
    } else {
        (1.0 - kept / total).max(0.0)
    }
}

/// One application of the product kernel, clipped to `cap`.
fn apply_kernel(taps: &[f64], src: &PartitionSlice, cap: &Rect) -> (Rect, Vec<f64>) {
    let reach = (taps.len() / 2) as i64;
    let new = src.rect.expand(reach).intersect(cap);
    let (src_cols, new_cols) = (src.rect.cols(), new.cols());
    if new.is_empty() {
        return (new, Vec::new());
    }
    // Pass 1: along x, into rows of `new` with the source column range.
    let mut tmp = vec![0.0; new.rows() * src_cols];
    tmp.par_chunks_mut(src_cols).enumerate().for_each(|(i, row)| {
        let xi = new.x0 + i as i64;
        for (ki, &p) in taps.iter().enumerate() {
            let xs = xi - (ki as i64 - reach);
            if xs < src.rect.x0 || xs > src.rect.x1 {
                continue;
            }
            let off = (xs - src.rect.x0) as usize * src_cols;
            for (d, s) in row.iter_mut().zip(&src.values[off..off + src_cols]) {
                *d += p * s;
            }
        }
    });
    // Pass 2: along y.
    let mut out = vec![0.0; new.len()];
    out.par_chunks_mut(new_cols).zip(tmp.par_chunks(src_cols)).for_each(|(row, t)| {
        for (ki, &p) in taps.iter().enumerate() {
            let k = ki as i64 - reach;
            let lo = new.y0.max(src.rect.y0 + k);
            let hi = new.y1.min(src.rect.y1 + k);
            if lo > hi {
                continue;
            }
            let d0 = (lo - new.y0) as usize;
            let s0 = (lo - k - src.rect.y0) as usize;
            let len = (hi - lo + 1) as usize;
            for (d, s) in row[d0..d0 + len].iter_mut().zip(&t[s0..s0 + len]) {
                *d += p * s;
            }
        }
    });
    (new, out)
}

fn apply_weights(spec: &DisorderSpec, field: &DisorderField, n: u64, rect: &Rect, values: &mut [f64]) {
    let cols = rect.cols();
    values.par_chunks_mut(cols).enumerate().for_each(|(i, row)| {
        let x = rect.x0 + i as i64;
        for (j, v) in row.iter_mut().enumerate() {
            *v *= spec.weight(field.omega(n, x, rect.y0 + j as i64));
        }
    });
}

fn renormalize(slice: &mut PartitionSlice) {
    let max = slice.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if max > 1e300 || (max > 0.0 && max < 1e-300) {
        let inv = 1.0 / max;
        slice.values.iter_mut().for_each(|v| *v *= inv);
        slice.log_scale += max.ln();
    }
}

/// Propagates `init` (a slice at time `init.n`) to time `to`, applying the
/// environment on arrival at times `init.n + 1 ..= to − 1` when
/// `last_weighted` is false, or up to `to` inclusive when it is true.
pub fn propagate(
    kernel: &WalkKernel,
    spec: &DisorderSpec,
    field: &DisorderField,
    init: PartitionSlice,
    to: u64,
    cap: Rect,
    last_weighted: bool,
) -> PartitionSlice {
    let taps = kernel.step().dense();
    let steps = to.saturating_sub(init.n) as usize;
    let truncation_mass = truncation_for(&taps, &init, &cap, steps);
    let mut slice = init;
    slice.truncation_mass = truncation_mass;
    if !cap.contains(slice.rect.x0, slice.rect.y0) || !cap.contains(slice.rect.x1, slice.rect.y1) {
        // Restrict the initial data to the cap window.
        let r = slice.rect.intersect(&cap);
        let values = (r.x0..=r.x1).flat_map(|x| (r.y0..=r.y1).map(move |y| (x, y))).map(|(x, y)| slice.raw(x, y)).collect();
        slice.rect = r;
        slice.values = values;
    }
    for n in slice.n + 1..=to {
        let (rect, mut values) = apply_kernel(&taps, &slice, &cap);
        if !spec.is_trivial() && (n < to || last_weighted) {
            apply_weights(spec, field, n, &rect, &mut values);
        }
        slice.rect = rect;
        slice.values = values;
        slice.n = n;
        renormalize(&mut slice);
    }
    slice
}

fn check_cap(mass: f64, opts: &PolymerOptions) -> Result<()> {
    if mass > opts.cap {
        return Err(Error::TruncationCapExceeded { mass, cap: opts.cap });
    }
    Ok(())
}

/// Point-to-plane result with its log and truncation bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneValue {
    pub value: f64,
    pub log_value: f64,
    pub truncation_mass: f64,
}

/// Terminal slice of the point-to-plane recursion from `z0`.
pub fn point_to_plane_slice(
    kernel: &WalkKernel,
    spec: &DisorderSpec,
    field: &DisorderField,
    n: usize,
    z0: (i64, i64),
    opts: &PolymerOptions,
) -> Result<PartitionSlice> {
    if n > kernel.cache_n() {
        return Err(Error::HorizonExceedsCache { n, cache: kernel.cache_n() });
    }
    let r = opts.radius(kernel, n);
    let cap = Rect::centred(z0.0, z0.1, r);
    let slice = propagate(kernel, spec, field, PartitionSlice::point(0, z0.0, z0.1), n as u64, cap, false);
    check_cap(slice.truncation_mass, opts)?;
    Ok(slice)
}

pub fn point_to_plane_detailed(
    kernel: &WalkKernel,
    spec: &DisorderSpec,
    field: &DisorderField,
    n: usize,
    z0: (i64, i64),
    opts: &PolymerOptions,
) -> Result<PlaneValue> {
    let s = point_to_plane_slice(kernel, spec, field, n, z0, opts)?;
    let log_value = s.log_total();
    Ok(PlaneValue { value: log_value.exp(), log_value, truncation_mass: s.truncation_mass })
}

/// `Z_N^β(z0)` with disorder collected at times `1..N−1`.
pub fn point_to_plane(
    kernel: &WalkKernel,
    spec: &DisorderSpec,
    field: &DisorderField,
    n: usize,
    z0: (i64, i64),
) -> Result<f64> {
    Ok(point_to_plane_detailed(kernel, spec, field, n, z0, &PolymerOptions::default())?.value)
}

/// `Z^β_{M,N}(x, y)` with disorder collected at times `M+1..N−1`.
#[allow(clippy::too_many_arguments)]
pub fn point_to_point(
    kernel: &WalkKernel,
    spec: &DisorderSpec,
    field: &DisorderField,
    m: usize,
    n: usize,
    x: (i64, i64),
    y: (i64, i64),
    opts: &PolymerOptions,
) -> Result<f64> {
    if m > n {
        return Err(Error::OutOfRange(format!("start time {m} after end time {n}")));
    }
    if n - m > kernel.cache_n() {
        return Err(Error::HorizonExceedsCache { n: n - m, cache: kernel.cache_n() });
    }
    let r = opts.radius(kernel, n - m);
    let cap = Rect::centred(x.0, x.1, r);
    let s = propagate(kernel, spec, field, PartitionSlice::point(m as u64, x.0, x.1), n as u64, cap, false);
    check_cap(s.truncation_mass, opts)?;
    Ok(s.get(y.0, y.1))
}

/// Real test function on ℝ² with an optional support radius (sup-norm ball
/// around the origin).
#[derive(Clone)]
pub struct TestFunction {
    f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    radius: Option<f64>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction").field("radius", &self.radius).finish_non_exhaustive()
    }
}

impl TestFunction {
    pub fn new<F: Fn(f64, f64) -> f64 + Send + Sync + 'static>(radius: Option<f64>, f: F) -> Self {
        Self { f: Arc::new(f), radius }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(None, move |_, _| c)
    }

    /// Smooth bump `C exp(−1/(1 − |x|²/ρ²))` with unit integral.
    pub fn bump(rho: f64) -> Self {
        let c = 1.0 / (rho * rho * bump_mass());
        Self::new(Some(rho), move |x, y| {
            let s = (x * x + y * y) / (rho * rho);
            if s < 1.0 {
                c * (-1.0 / (1.0 - s)).exp()
            } else {
                0.0
            }
        })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.f)(x, y)
    }

    pub fn radius(&self) -> Option<f64> {
        self.radius
    }

    pub fn scaled(&self, c: f64) -> Self {
        let f = self.f.clone();
        Self::new(self.radius, move |x, y| c * f(x, y))
    }

    pub fn add(&self, other: &TestFunction) -> Self {
        let (f, g) = (self.f.clone(), other.f.clone());
        let radius = match (self.radius, other.radius) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
        Self::new(radius, move |x, y| f(x, y) + g(x, y))
    }
}

/// `∫_{|x|<1} exp(−1/(1−|x|²)) dx = π ∫₀¹ e^{−1/(1−u)} du`.
pub fn bump_mass() -> f64 {
    let e = crate::quad::integrate(|u: f64| if u < 1.0 { (-1.0 / (1.0 - u)).exp() } else { 0.0 }, 0.0, 1.0, 1e-16, 1e-14, 200);
    std::f64::consts::PI * e.value
}

/// `(1/N) Σ_{x,y} φ(x/√N) Z_{0,N}(x,y) ψ(y/√N)` by one forward pass seeded
/// with the φ-weighted initial mass.
pub fn averaged_field(
    kernel: &WalkKernel,
    spec: &DisorderSpec,
    field: &DisorderField,
    n: usize,
    phi: &TestFunction,
    psi: &TestFunction,
    opts: &PolymerOptions,
) -> Result<f64> {
    Ok(averaged_field_detailed(kernel, spec, field, n, phi, psi, opts)?.0)
}

/// As [`averaged_field`], also returning the truncation mass.
pub fn averaged_field_detailed(
    kernel: &WalkKernel,
    spec: &DisorderSpec,
    field: &DisorderField,
    n: usize,
    phi: &TestFunction,
    psi: &TestFunction,
    opts: &PolymerOptions,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::OutOfRange("averaged field needs N >= 1".into()));
    }
    if n > kernel.cache_n() {
        return Err(Error::HorizonExceedsCache { n, cache: kernel.cache_n() });
    }
    let rho = phi
        .radius()
        .ok_or_else(|| Error::OutOfRange("initial test function must be compactly supported".into()))?;
    let sn = (n as f64).sqrt();
    let half = (rho * sn).floor() as i64;
    let rect = Rect::centred(0, 0, half);
    let values: Vec<f64> = (rect.x0..=rect.x1)
        .flat_map(|x| (rect.y0..=rect.y1).map(move |y| (x, y)))
        .map(|(x, y)| phi.eval(x as f64 / sn, y as f64 / sn))
        .collect();
    let init = PartitionSlice { n: 0, rect, values, log_scale: 0.0, truncation_mass: 0.0 };
    let cap = rect.expand(opts.radius(kernel, n));
    let s = propagate(kernel, spec, field, init, n as u64, cap, false);
    check_cap(s.truncation_mass, opts)?;
    let cols = s.rect.cols();
    let terms: Vec<f64> = s
        .values
        .iter()
        .enumerate()
        .map(|(idx, &v)| {
            let x = s.rect.x0 + (idx / cols) as i64;
            let y = s.rect.y0 + (idx % cols) as i64;
            v * psi.eval(x as f64 / sn, y as f64 / sn)
        })
        .collect();
    let total = crate::stats::pairwise_sum(&terms) * s.log_scale.exp() / n as f64;
    Ok((total, s.truncation_mass))
}

/// Plane-to-point field `Z_{0,N}(𝟙, y)` on a target window.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub n: usize,
    pub rect: Rect,
    /// Values on `rect`, row-major in x; multiply by `e^{log_scale}`.
    pub values: Vec<f64>,
    pub log_scale: f64,
    pub truncation_mass: f64,
}

impl Snapshot {
    pub fn scaled_values(&self) -> Vec<f64> {
        let s = self.log_scale.exp();
        self.values.iter().map(|v| v * s).collect()
    }
}

/// Flat initial condition on `window` expanded by the cap radius; returns the
/// terminal values on `window`.
pub fn field_snapshot(
    kernel: &WalkKernel,
    spec: &DisorderSpec,
    field: &DisorderField,
    n: usize,
    window: Rect,
    opts: &PolymerOptions,
) -> Result<Snapshot> {
    if n > kernel.cache_n() {
        return Err(Error::HorizonExceedsCache { n, cache: kernel.cache_n() });
    }
    let domain = window.expand(opts.radius(kernel, n));
    let init = PartitionSlice { n: 0, rect: domain, values: vec![1.0; domain.len()], log_scale: 0.0, truncation_mass: 0.0 };
    let s = propagate(kernel, spec, field, init, n as u64, domain, false);
    // β = 0 deficit at the worst target site.
    let taps = kernel.step().dense();
    let hx = killed_survival_1d(&taps, domain.x0, domain.x1, n);
    let hy = killed_survival_1d(&taps, domain.y0, domain.y1, n);
    let mut worst: f64 = 0.0;
    for x in window.x0..=window.x1 {
        for y in window.y0..=window.y1 {
            worst = worst.max(1.0 - hx[(x - domain.x0) as usize] * hy[(y - domain.y0) as usize]);
        }
    }
    check_cap(worst, opts)?;
    let values = (window.x0..=window.x1)
        .flat_map(|x| (window.y0..=window.y1).map(move |y| (x, y)))
        .map(|(x, y)| s.raw(x, y))
        .collect();
    Ok(Snapshot { n, rect: window, values, log_scale: s.log_scale, truncation_mass: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::DisorderLaw;

    fn setup(beta: f64) -> (WalkKernel, DisorderSpec, DisorderField) {
        (
            WalkKernel::standard(64),
            DisorderSpec::fixed(DisorderLaw::Gaussian, beta).unwrap(),
            DisorderField::new(5, DisorderLaw::Gaussian),
        )
    }

    #[test]
    fn free_walk_mass_is_conserved() {
        let (k, spec, field) = setup(0.0);
        let v = point_to_plane_detailed(&k, &spec, &field, 40, (3, -2), &PolymerOptions::default()).unwrap();
        assert!((v.value - (1.0 - v.truncation_mass)).abs() < 1e-12);
    }

    #[test]
    fn truncated_free_walk_matches_killed_survival() {
        let (k, spec, field) = setup(0.0);
        let opts = PolymerOptions { rule: WindowRule::Radius { r: 6 }, cap: 1.0 };
        let s = point_to_plane_slice(&k, &spec, &field, 30, (0, 0), &opts).unwrap();
        assert!(s.truncation_mass > 1e-3);
        assert!((s.total() - (1.0 - s.truncation_mass)).abs() < 1e-12);
        let strict = PolymerOptions { rule: WindowRule::Radius { r: 6 }, cap: 1e-8 };
        assert!(matches!(
            point_to_plane_slice(&k, &spec, &field, 30, (0, 0), &strict),
            Err(Error::TruncationCapExceeded { .. })
        ));
    }

    #[test]
    fn two_steps_by_enumeration() {
        let (k, spec, field) = setup(0.6);
        let z = point_to_plane(&k, &spec, &field, 2, (1, 1)).unwrap();
        let mut e = 0.0;
        for dx in -2..=2 {
            for dy in -2..=2 {
                e += k.q_n(1, (dx, dy)).unwrap() * spec.weight(field.omega(1, 1 + dx, 1 + dy));
            }
        }
        assert!((z - e).abs() < 1e-14 * e);
    }

    #[test]
    fn free_point_to_point_is_transition_probability() {
        let (k, spec, field) = setup(0.0);
        let opts = PolymerOptions::default();
        for (m, n, y) in [(3usize, 10usize, (2i64, -1i64)), (0, 7, (0, 0)), (5, 5, (0, 0)), (5, 5, (1, 0))] {
            let v = point_to_point(&k, &spec, &field, m, n, (0, 0), y, &opts).unwrap();
            let q = k.q_n(n - m, y).unwrap();
            assert!((v - q).abs() < 1e-15, "{m} {n} {y:?}");
        }
    }

    #[test]
    fn overflow_guard_tracks_log_scale() {
        let k = WalkKernel::standard(600);
        let spec = DisorderSpec::fixed(DisorderLaw::Gaussian, 3.0).unwrap();
        let field = DisorderField::new(1, DisorderLaw::Gaussian);
        let opts = PolymerOptions { rule: WindowRule::Radius { r: 40 }, cap: 1.0 };
        let v = point_to_plane_detailed(&k, &spec, &field, 600, (0, 0), &opts).unwrap();
        assert!(v.log_value.is_finite());
    }

    #[test]
    fn bump_has_unit_integral() {
        let phi = TestFunction::bump(1.0);
        let h = 0.01;
        let mut s = 0.0;
        for i in -100..=100 {
            for j in -100..=100 {
                s += phi.eval(i as f64 * h, j as f64 * h) * h * h;
            }
        }
        assert!((s - 1.0).abs() < 1e-6);
    }
}
