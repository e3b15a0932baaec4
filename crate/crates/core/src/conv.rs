//! Solver for the renewal recursion `v(0) = 1`, `v(n) = c · Σ_{m<n} v(m) a(n−m)`.
//!
//! Small horizons use the direct O(n²) sum. Large horizons use an online
//! divide-and-conquer scheme in which the contribution of a finished left
//! block to the right block is one FFT middle product, for O(n log² n) total.

use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Horizons up to this length are solved by the direct sum.
pub const DIRECT_LIMIT: usize = 4096;
const BASE_BLOCK: usize = 64;

/// Solves the recursion for indices `0..len`; `a[0]` is ignored.
pub fn solve_renewal(a: &[f64], c: f64, len: usize) -> Vec<f64> {
    if len <= DIRECT_LIMIT {
        solve_direct(a, c, len)
    } else {
        solve_fft(a, c, len)
    }
}

pub fn solve_direct(a: &[f64], c: f64, len: usize) -> Vec<f64> {
    assert!(a.len() >= len, "kernel shorter than horizon");
    let mut v = vec![0.0; len];
    if len == 0 {
        return v;
    }
    v[0] = 1.0;
    for n in 1..len {
        let mut s = 0.0;
        for m in 0..n {
            s += v[m] * a[n - m];
        }
        v[n] = c * s;
    }
    v
}

pub fn solve_fft(a: &[f64], c: f64, len: usize) -> Vec<f64> {
    assert!(a.len() >= len, "kernel shorter than horizon");
    let size = len.next_power_of_two();
    let mut kernel = vec![0.0; size];
    kernel[..len].copy_from_slice(&a[..len]);
    let mut solver = Relaxed {
        a: kernel,
        c,
        v: vec![0.0; size],
        acc: vec![0.0; size],
        planner: FftPlanner::new(),
        kernel_spectra: HashMap::new(),
    };
    solver.solve(0, size);
    solver.v.truncate(len);
    solver.v
}

struct Relaxed {
    a: Vec<f64>,
    c: f64,
    v: Vec<f64>,
    acc: Vec<f64>,
    planner: FftPlanner<f64>,
    kernel_spectra: HashMap<usize, (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>, Vec<Complex64>)>,
}

impl Relaxed {
    fn solve(&mut self, l: usize, r: usize) {
        if r - l <= BASE_BLOCK {
            for n in l..r {
                if n == 0 {
                    self.v[0] = 1.0;
                    continue;
                }
                let mut s = self.acc[n];
                for m in l..n {
                    s += self.v[m] * self.a[n - m];
                }
                self.v[n] = self.c * s;
            }
            return;
        }
        let mid = (l + r) / 2;
        self.solve(l, mid);
        self.push_contribution(l, mid, r);
        self.solve(mid, r);
    }

    // acc[n] += Σ_{m∈[l,mid)} v[m] a[n−m] for n ∈ [mid, r), via a cyclic
    // convolution of length r−l (wrap-around only touches indices < mid−l).
    fn push_contribution(&mut self, l: usize, mid: usize, r: usize) {
        let size = r - l;
        let (fwd, inv, spectrum) = {
            let planner = &mut self.planner;
            let a = &self.a;
            let entry = self.kernel_spectra.entry(size).or_insert_with(|| {
                let fwd = planner.plan_fft_forward(size);
                let inv = planner.plan_fft_inverse(size);
                let mut buf: Vec<Complex64> = a[..size].iter().map(|&x| Complex64::new(x, 0.0)).collect();
                fwd.process(&mut buf);
                (fwd, inv, buf)
            });
            (entry.0.clone(), entry.1.clone(), entry.2.clone())
        };
        let mut buf = vec![Complex64::new(0.0, 0.0); size];
        for (slot, &x) in buf.iter_mut().zip(&self.v[l..mid]) {
            *slot = Complex64::new(x, 0.0);
        }
        fwd.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&spectrum) {
            *b *= k;
        }
        inv.process(&mut buf);
        let scale = 1.0 / size as f64;
        for n in mid..r {
            self.acc[n] += buf[n - l].re * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(len: usize) -> Vec<f64> {
        (0..len).map(|k| if k == 0 { 0.0 } else { 1.0 / (4.0 * std::f64::consts::PI * k as f64) }).collect()
    }

    #[test]
    fn fft_solver_matches_direct() {
        let len = 5000;
        let a = kernel(len);
        let c = 0.9 / a.iter().sum::<f64>();
        let d = solve_direct(&a, c, len);
        let f = solve_fft(&a, c, len);
        for n in 0..len {
            let rel = (d[n] - f[n]).abs() / d[n].abs().max(1e-300);
            assert!(rel < 1e-10, "n={n}: {} vs {}", d[n], f[n]);
        }
    }

    #[test]
    fn geometric_kernel_has_closed_form() {
        // a(1) = 1 only: v(n) = c^n.
        let mut a = vec![0.0; 300];
        a[1] = 1.0;
        let v = solve_fft(&a, 0.5, 300);
        for (n, x) in v.iter().enumerate().take(60) {
            assert!((x - 0.5f64.powi(n as i32)).abs() < 1e-14);
        }
    }
}
