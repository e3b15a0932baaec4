//! Exact second moments through the renewal recursion
//! `v(0) = 1`, `v(n) = σ² Σ_{m<n} v(m) q_{2(n−m)}(0)`, and small-horizon
//! oracles for it.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::conv::solve_renewal;
use crate::disorder::{critical_sigma2, DisorderField, DisorderSpec};
use crate::polymer::{point_to_plane_detailed, PolymerOptions, TestFunction, WindowRule};
use crate::rng::derive_seed;
use crate::stats::{batch_mean, KahanSum, MeanEstimate};
use crate::walk::WalkKernel;
use crate::{Error, Result};

/// Renewal arrays for horizon `n`: `v[m]` and `u[m] = U_N(m)` for `m < n`.
/// The two coincide (`U_N(0) = 1`); both are kept for readability at call
/// sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalTable {
    pub n: usize,
    pub sigma2: f64,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
}

impl RenewalTable {
    /// `E[Z_m²] = Σ_{j<m} v(j)` for `m = 0..=n`.
    pub fn second_moments(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n + 1);
        let mut acc = KahanSum::default();
        out.push(1.0);
        if self.n >= 1 {
            out.push(1.0);
        }
        for &x in self.v.iter().skip(1) {
            acc.add(x);
            out.push(1.0 + acc.value());
        }
        out
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::OutOfRange(format!("sigma2 = {sigma2} must be finite and nonnegative")));
    }
    Ok(())
}

/// Renewal table for horizon `n` (needs `n − 1 ≤ cache`).
pub fn u_table(kernel: &WalkKernel, sigma2: f64, n: usize) -> Result<RenewalTable> {
    check_sigma2(sigma2)?;
    if n > kernel.cache_n() + 1 {
        return Err(Error::HorizonExceedsCache { n, cache: kernel.cache_n() });
    }
    let v = solve_renewal(kernel.q2n0_table(), sigma2, n);
    Ok(RenewalTable { n, sigma2, u: v.clone(), v })
}

/// `E[(Z_N(0))²] = Σ_{n<N} v(n)`.
pub fn second_moment_p2plane(kernel: &WalkKernel, sigma2: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    let t = u_table(kernel, sigma2, n)?;
    Ok(*t.second_moments().last().expect("non-empty"))
}

/// `E[Z_m²]` for every `m = 0..=n`.
pub fn second_moment_prefix(kernel: &WalkKernel, sigma2: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(vec![1.0]);
    }
    Ok(u_table(kernel, sigma2, n)?.second_moments())
}

/// `E[(Z^{β_N}_{N^α})²]` with `σ² = β̂²/R_N` fixed at horizon `N`.
pub fn second_moment_exponential_scale(kernel: &WalkKernel, beta_hat: f64, n: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::OutOfRange(format!("alpha = {alpha} must lie in (0, 1]")));
    }
    let r = kernel.replica_overlap(n)?;
    let sigma2 = beta_hat * beta_hat / r;
    let horizon = ((n as f64).powf(alpha).round() as usize).clamp(1, n);
    second_moment_p2plane(kernel, sigma2, horizon)
}

/// Ratios `E[Z_N²]/log N` in the critical window for each `N`.
pub fn critical_second_moment_growth(kernel: &WalkKernel, theta: f64, ns: &[usize]) -> Result<Vec<(usize, f64)>> {
    ns.iter()
        .map(|&n| {
            let sigma2 = critical_sigma2(kernel, n, theta)?;
            Ok((n, second_moment_p2plane(kernel, sigma2, n)? / (n as f64).ln()))
        })
        .collect()
}

/// `Cov[Z_N(0), Z_N(dx)] = Σ_{n=1}^{N−1} q_{2n}(dx) σ² E[Z²_{N−n}]`.
pub fn covariance_p2plane(kernel: &WalkKernel, sigma2: f64, n: usize, dx: (i64, i64)) -> Result<f64> {
    if n <= 1 {
        return Ok(0.0);
    }
    if 2 * (n - 1) > kernel.cache_n() {
        return Err(Error::HorizonExceedsCache { n: 2 * (n - 1), cache: kernel.cache_n() });
    }
    let m2 = second_moment_prefix(kernel, sigma2, n)?;
    let mut acc = KahanSum::default();
    for k in 1..n {
        let q = kernel.p1d(2 * k, dx.0)? * kernel.p1d(2 * k, dx.1)?;
        acc.add(q * sigma2 * m2[n - k]);
    }
    Ok(acc.value())
}

/// Sum over all renewal configurations `0 < n₁ < … < n_r < N` of
/// `Π σ² q_{2(n_i − n_{i−1})}(0)`, by explicit enumeration.
pub fn chaos_oracle_second_moment(kernel: &WalkKernel, sigma2: f64, n: usize) -> Result<f64> {
    if n > 16 {
        return Err(Error::OutOfRange("chaos enumeration is limited to N <= 16".into()));
    }
    if n == 0 {
        return Ok(1.0);
    }
    let times = n - 1;
    let mut total = 0.0;
    for mask in 0u32..(1u32 << times) {
        let mut prev = 0usize;
        let mut term = 1.0;
        for t in 1..=times {
            if mask & (1 << (t - 1)) != 0 {
                term *= sigma2 * kernel.q2n0(t - prev)?;
                prev = t;
            }
        }
        total += term;
    }
    Ok(total)
}

/// `Σ_r (σ² R_N)^r P(τ_r < N)` with renewal increments `q_{2n}(0)/R_N` on `1..=N`.
pub fn second_moment_renewal_form(kernel: &WalkKernel, sigma2: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    let r_n = kernel.replica_overlap(n)?;
    let inc: Vec<f64> = (0..n).map(|k| if k == 0 { 0.0 } else { kernel.q2n0_table()[k] / r_n }).collect();
    // dist[k] = P(τ_r = k) for k < N.
    let mut dist = vec![0.0; n];
    dist[0] = 1.0;
    let mut total = 1.0;
    let mut weight = 1.0;
    for _ in 1..n {
        let mut next = vec![0.0; n];
        for (k, slot) in next.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 1..=k {
                s += dist[k - j] * inc[j];
            }
            *slot = s;
        }
        dist = next;
        weight *= sigma2 * r_n;
        let p: f64 = dist.iter().sum();
        if p == 0.0 {
            break;
        }
        total += weight * p;
    }
    Ok(total)
}

/// Monte Carlo estimate of `E[Z_N²]` over environment replicas.
pub fn mc_second_moment_oracle(
    kernel: &WalkKernel,
    spec: &DisorderSpec,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<MeanEstimate> {
    if n > 16 {
        return Err(Error::OutOfRange("Monte Carlo oracle is limited to N <= 16".into()));
    }
    let opts = PolymerOptions { rule: WindowRule::Radius { r: kernel.reach() * n as i64 }, cap: 0.0 };
    let samples: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let field = DisorderField::new(derive_seed(seed, "mc-second-moment", i as u64), spec.law.clone());
            let z = point_to_plane_detailed(kernel, spec, &field, n, (0, 0), &opts).map(|v| v.value)?;
            Ok(z * z)
        })
        .collect::<Result<_>>()?;
    Ok(batch_mean(&samples, 30))
}

/// Space-time table `U_N(n, x)` for `N ≤ 256` at selected times.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialRenewal {
    pub n: usize,
    /// Half-width of the stored square; `x ∈ [−radius, radius]²`.
    pub radius: i64,
    pub times: Vec<usize>,
    /// One row-major grid per requested time.
    pub grids: Vec<Vec<f64>>,
}

impl SpatialRenewal {
    pub fn get(&self, time_index: usize, x: (i64, i64)) -> f64 {
        let w = (2 * self.radius + 1) as usize;
        if x.0.abs() > self.radius || x.1.abs() > self.radius {
            return 0.0;
        }
        self.grids[time_index][(x.0 + self.radius) as usize * w + (x.1 + self.radius) as usize]
    }
}

/// `U_N(n, x) = σ² q_n(x)² + Σ_{0<m<n} Σ_z U_N(m, z) σ² q_{n−m}(x−z)²`, with
/// `U_N(0, x) = 1{x = 0}`, computed per Fourier mode on a periodic box large
/// enough that nothing wraps.
pub fn u_table_2d(kernel: &WalkKernel, sigma2: f64, n: usize, times: &[usize]) -> Result<SpatialRenewal> {
    check_sigma2(sigma2)?;
    if n > 256 {
        return Err(Error::OutOfRange("space-time renewal table is limited to N <= 256".into()));
    }
    if n > kernel.cache_n() {
        return Err(Error::HorizonExceedsCache { n, cache: kernel.cache_n() });
    }
    if let Some(&t) = times.iter().find(|&&t| t > n) {
        return Err(Error::OutOfRange(format!("time {t} beyond horizon {n}")));
    }
    let reach = kernel.reach();
    let radius = reach * n as i64;
    let p = (2 * radius + 1) as usize;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(p);
    // c[j][f] = Σ_a p_j(a)² cos(2π f a / P), real by symmetry.
    let mut c = vec![vec![0.0; p]; n + 1];
    for (j, cj) in c.iter_mut().enumerate() {
        let row = kernel.marginal(j)?;
        let rj = reach * j as i64;
        let mut buf = vec![Complex64::new(0.0, 0.0); p];
        for (i, &pv) in row.iter().enumerate() {
            let a = i as i64 - rj;
            buf[a.rem_euclid(p as i64) as usize].re += pv * pv;
        }
        fwd.process(&mut buf);
        for (dst, z) in cj.iter_mut().zip(&buf) {
            *dst = z.re;
        }
    }
    let half = p / 2;
    // Spectral values for the fundamental quarter f1, f2 ∈ [0, half].
    let quarter: Vec<Vec<Vec<f64>>> = (0..=half)
        .into_par_iter()
        .map(|f1| {
            (0..=half)
                .map(|f2| {
                    let a: Vec<f64> = (0..=n).map(|j| if j == 0 { 0.0 } else { c[j][f1] * c[j][f2] }).collect();
                    let u = crate::conv::solve_direct(&a, sigma2, n + 1);
                    times.iter().map(|&t| u[t]).collect()
                })
                .collect()
        })
        .collect();
    let inv = planner.plan_fft_inverse(p);
    let mut grids = Vec::with_capacity(times.len());
    for ti in 0..times.len() {
        let fold = |f: usize| if f <= half { f } else { p - f };
        let mut spec: Vec<Complex64> = (0..p * p)
            .map(|idx| Complex64::new(quarter[fold(idx / p)][fold(idx % p)][ti], 0.0))
            .collect();
        // 2d inverse transform: rows then columns.
        for row in spec.chunks_mut(p) {
            inv.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); p];
        for j in 0..p {
            for i in 0..p {
                col[i] = spec[i * p + j];
            }
            inv.process(&mut col);
            for i in 0..p {
                spec[i * p + j] = col[i];
            }
        }
        let scale = 1.0 / (p * p) as f64;
        let mut grid = vec![0.0; p * p];
        for x in -radius..=radius {
            for y in -radius..=radius {
                let src = x.rem_euclid(p as i64) as usize * p + y.rem_euclid(p as i64) as usize;
                grid[(x + radius) as usize * p + (y + radius) as usize] = spec[src].re * scale;
            }
        }
        grids.push(grid);
    }
    Ok(SpatialRenewal { n, radius, times: times.to_vec(), grids })
}

/// Lattice samples `φ(x/√N)` on `[−h, h]²`, `h = ⌊ρ√N⌋`, as used by the
/// averaged field.
pub fn lattice_test_values(phi: &TestFunction, n: usize) -> Result<(i64, Vec<f64>)> {
    let rho = phi
        .radius()
        .ok_or_else(|| Error::OutOfRange("test function must be compactly supported".into()))?;
    let sn = (n as f64).sqrt();
    let half = (rho * sn).floor() as i64;
    let values = (-half..=half)
        .flat_map(|x| (-half..=half).map(move |y| (x, y)))
        .map(|(x, y)| phi.eval(x as f64 / sn, y as f64 / sn))
        .collect();
    Ok((half, values))
}

/// `Var[(1/N) Σ_x φ(x/√N) Z_N(x)] = (1/N²) Σ_{n=1}^{N−1} S_n σ² E[Z²_{N−n}]` with
/// `S_n = Σ_{x,x'} φ_x φ_{x'} q_{2n}(x − x')`, evaluated per Fourier mode on a
/// periodic box wide enough that `q_{2N}` does not wrap.
pub fn averaged_field_variance(kernel: &WalkKernel, sigma2: f64, n: usize, phi: &TestFunction) -> Result<f64> {
    check_sigma2(sigma2)?;
    if n == 0 {
        return Err(Error::OutOfRange("averaged field needs N >= 1".into()));
    }
    if n == 1 || sigma2 == 0.0 {
        return Ok(0.0);
    }
    let m2 = second_moment_prefix(kernel, sigma2, n)?;
    let (half, values) = lattice_test_values(phi, n)?;
    let side = (2 * half + 1) as usize;
    let spread = 12.0 * (2.0 * n as f64 * kernel.step().variance()).sqrt();
    let p = side + spread.ceil() as usize + 1;
    let p = p + p % 2;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(p);
    let mut grid = vec![Complex64::new(0.0, 0.0); p * p];
    for (idx, &v) in values.iter().enumerate() {
        grid[(idx / side) * p + idx % side].re = v;
    }
    for row in grid.chunks_mut(p) {
        fwd.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); p];
    for j in 0..p {
        for i in 0..p {
            col[i] = grid[i * p + j];
        }
        fwd.process(&mut col);
        for i in 0..p {
            grid[i * p + j] = col[i];
        }
    }
    // χ(k) = Σ_a p(a) cos(a k) at k = 2π f / P.
    let taps = kernel.step().dense();
    let reach = kernel.reach();
    let chi: Vec<f64> = (0..p)
        .map(|f| {
            let k = 2.0 * std::f64::consts::PI * f as f64 / p as f64;
            taps.iter().enumerate().map(|(i, &pa)| pa * ((i as i64 - reach) as f64 * k).cos()).sum()
        })
        .collect();
    let power: Vec<f64> = grid.iter().map(|z| z.norm_sqr()).collect();
    let peak = power.iter().cloned().fold(0.0, f64::max);
    let weights: Vec<f64> = (1..n).map(|k| sigma2 * m2[n - k]).collect();
    let modes: Vec<usize> = (0..p * p).filter(|&i| power[i] > 1e-20 * peak).collect();
    let terms: Vec<f64> = modes
        .par_iter()
        .map(|&idx| {
            let c2 = (chi[idx / p] * chi[idx % p]).powi(2);
            let mut pw = 1.0;
            let mut acc = 0.0;
            for &w in &weights {
                pw *= c2;
                if pw < 1e-22 {
                    break;
                }
                acc += w * pw;
            }
            power[idx] * acc
        })
        .collect();
    let total = crate::stats::pairwise_sum(&terms) / (p * p) as f64;
    Ok(total / (n * n) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_step_closed_form() {
        let k = WalkKernel::standard(16);
        let s = 0.37;
        let (q2, q4) = (k.q2n0(1).unwrap(), k.q2n0(2).unwrap());
        let expect = 1.0 + s * (q2 + q4) + s * s * q2 * q2;
        let dp = second_moment_p2plane(&k, s, 3).unwrap();
        assert!((dp - expect).abs() < 1e-15);
        assert_eq!(second_moment_p2plane(&k, 0.0, 10).unwrap(), 1.0);
    }

    #[test]
    fn chaos_enumeration_matches_recursion() {
        let k = WalkKernel::standard(16);
        for n in 0..=6 {
            for s in [0.0, 0.3, 2.0] {
                let a = chaos_oracle_second_moment(&k, s, n).unwrap();
                let b = second_moment_p2plane(&k, s, n).unwrap();
                assert!((a - b).abs() <= 1e-14 * a, "n={n} s={s}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn renewal_form_matches_recursion() {
        let k = WalkKernel::standard(64);
        for n in [1usize, 2, 7, 33, 64] {
            let a = second_moment_renewal_form(&k, 0.8, n).unwrap();
            let b = second_moment_p2plane(&k, 0.8, n).unwrap();
            assert!((a - b).abs() < 1e-12 * b, "n={n}");
        }
    }

    #[test]
    fn covariance_at_zero_is_variance() {
        let k = WalkKernel::standard(200);
        let s = 0.9;
        let var = second_moment_p2plane(&k, s, 100).unwrap() - 1.0;
        let cov = covariance_p2plane(&k, s, 100, (0, 0)).unwrap();
        assert!((var - cov).abs() < 1e-13 * var);
    }

    #[test]
    fn spatial_table_brute_force() {
        let k = WalkKernel::standard(8);
        let s = 0.7;
        let n = 5;
        let t = u_table_2d(&k, s, n, &[0, 1, 3, 5]).unwrap();
        // Direct space-time recursion.
        let r = 2 * n as i64;
        let w = (2 * r + 1) as usize;
        let idx = |x: i64, y: i64| (x + r) as usize * w + (y + r) as usize;
        let mut u = vec![vec![0.0; w * w]; n + 1];
        u[0][idx(0, 0)] = 1.0;
        for m in 1..=n {
            for x in -r..=r {
                for y in -r..=r {
                    let mut acc = 0.0;
                    for j in 0..m {
                        for zx in -r..=r {
                            for zy in -r..=r {
                                let prev = u[j][idx(zx, zy)];
                                if prev != 0.0 {
                                    let q = k.q_n(m - j, (x - zx, y - zy)).unwrap();
                                    acc += prev * q * q;
                                }
                            }
                        }
                    }
                    u[m][idx(x, y)] = s * acc;
                }
            }
        }
        for (ti, &time) in [0usize, 1, 3, 5].iter().enumerate() {
            for x in -r..=r {
                for y in -r..=r {
                    let a = t.get(ti, (x, y));
                    let b = u[time][idx(x, y)];
                    assert!((a - b).abs() < 1e-14, "t={time} x=({x},{y}) {a} vs {b}");
                }
            }
        }
        // Marginal consistency with the scalar table.
        let tab = u_table(&k, s, n + 1).unwrap();
        let total: f64 = t.grids[3].iter().sum();
        assert!((total - tab.u[5]).abs() < 1e-13);
    }

    #[test]
    fn averaged_variance_matches_pair_sum() {
        let n = 24;
        let k = WalkKernel::standard(2 * n);
        let phi = TestFunction::bump(0.8);
        let s2 = 0.05;
        let (half, vals) = lattice_test_values(&phi, n).unwrap();
        let side = (2 * half + 1) as usize;
        let mut direct = 0.0;
        for (i, &a) in vals.iter().enumerate() {
            for (j, &b) in vals.iter().enumerate() {
                let dx = (i / side) as i64 - (j / side) as i64;
                let dy = (i % side) as i64 - (j % side) as i64;
                direct += a * b * covariance_p2plane(&k, s2, n, (dx, dy)).unwrap();
            }
        }
        direct /= (n * n) as f64;
        let fourier = averaged_field_variance(&k, s2, n, &phi).unwrap();
        assert!((fourier / direct - 1.0).abs() < 1e-10, "{fourier} vs {direct}");
        assert_eq!(averaged_field_variance(&k, 0.0, n, &phi).unwrap(), 0.0);
    }
}
