//! Monte Carlo experiments at desk scale. Each experiment is a pure function of
//! its configuration and master seed; replicas run in parallel with derived
//! seeds and are reduced in index order.

use std::f64::consts::PI;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::*;
use crate::disorder::{beta_critical, beta_quasi_critical, beta_subcritical, DisorderField, DisorderLaw, DisorderSpec};
use crate::kernels::{ew_form, ew_variance_target};
use crate::moments::averaged_field_variance;
use crate::polymer::{
    averaged_field, field_snapshot, point_to_plane_detailed, PolymerOptions, Rect, TestFunction,
};
use crate::rng::{derive_seed, stream, unit_open};
use crate::stats::{batch_mean, batch_variance, extrapolate_inverse_log, ks_distance, mean, median, quantile};
use crate::walk::{StepLaw1d, WalkKernel};
use crate::{Error, Result};

pub const NAMES: [&str; 7] = [
    "one_point_lognormal",
    "critical_one_point_decay",
    "edwards_wilkinson",
    "quasi_critical_scaling",
    "collision_exponential",
    "shf_gallery",
    "centred_moment_growth",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub target: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// `|observed/target − 1| ≤ tol`, or `|observed| ≤ tol` when the target is 0.
    pub fn relative(name: &str, observed: f64, target: f64, tol: f64) -> Self {
        let passed = if target == 0.0 { observed.abs() <= tol } else { (observed / target - 1.0).abs() <= tol };
        Self { name: name.into(), observed, target, tolerance: tol, passed }
    }

    pub fn absolute(name: &str, observed: f64, target: f64, tol: f64) -> Self {
        Self { name: name.into(), observed, target, tolerance: tol, passed: (observed - target).abs() <= tol }
    }

    pub fn at_most(name: &str, observed: f64, max: f64) -> Self {
        Self { name: name.into(), observed, target: 0.0, tolerance: max, passed: observed <= max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub replicas: usize,
    pub estimates: Vec<Estimate>,
    pub statistics: Vec<Statistic>,
    pub checks: Vec<Check>,
    pub flags: Vec<String>,
    pub passed: bool,
    /// Wall-clock seconds; not serialized so reports stay byte-identical.
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl ExperimentReport {
    fn new<C: Serialize>(name: &str, seed: u64, config: &C) -> Self {
        Self {
            name: name.into(),
            seed,
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            replicas: 0,
            estimates: Vec::new(),
            statistics: Vec::new(),
            checks: Vec::new(),
            flags: Vec::new(),
            passed: true,
            runtime_secs: 0.0,
        }
    }

    fn estimate(&mut self, name: &str, e: crate::stats::MeanEstimate) {
        self.estimates.push(Estimate { name: name.into(), value: e.value, stderr: e.stderr });
    }

    fn stat(&mut self, name: &str, value: f64) {
        self.statistics.push(Statistic { name: name.into(), value });
    }

    fn check(&mut self, c: Check) {
        self.passed &= c.passed;
        self.checks.push(c);
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn estimate_named(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }

    pub fn statistic_named(&self, name: &str) -> Option<f64> {
        self.statistics.iter().find(|s| s.name == name).map(|s| s.value)
    }

    fn finish(mut self, t0: Instant) -> Self {
        self.runtime_secs = t0.elapsed().as_secs_f64();
        self
    }
}

/// Per-replica samples or tables for CSV export.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// A rendered field, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub clip_quantile: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub traces: Vec<Trace>,
    pub images: Vec<Image>,
}

impl ExperimentOutput {
    fn report_only(report: ExperimentReport) -> Self {
        Self { report, traces: Vec::new(), images: Vec::new() }
    }
}

fn trace(name: &str, header: &[&str], rows: Vec<Vec<f64>>) -> Trace {
    Trace { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows }
}

fn replicate<F>(m: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(u64) -> Result<f64> + Sync + Send,
{
    (0..m as u64).into_par_iter().map(f).collect()
}

fn field_for(seed: u64, key: &str, i: u64, law: &DisorderLaw) -> DisorderField {
    DisorderField::new(derive_seed(seed, key, i), law.clone())
}

fn normal_cdf(mu: f64, var: f64) -> impl Fn(f64) -> f64 {
    let sd = var.sqrt();
    move |x| 0.5 * statrs::function::erf::erfc(-(x - mu) / (sd * std::f64::consts::SQRT_2))
}

/// Dispatches by experiment name.
pub fn run(name: &str, cfg: &ExperimentsConfig, seed: u64) -> Result<ExperimentOutput> {
    let b = cfg.batches.0;
    match name {
        "one_point_lognormal" => one_point_lognormal(&cfg.one_point_lognormal, b, seed),
        "critical_one_point_decay" => critical_one_point_decay(&cfg.critical_one_point_decay, b, seed),
        "edwards_wilkinson" => edwards_wilkinson(&cfg.edwards_wilkinson, b, seed),
        "quasi_critical_scaling" => quasi_critical_scaling(&cfg.quasi_critical_scaling, b, seed),
        "collision_exponential" => collision_exponential(&cfg.collision_exponential, b, seed),
        "shf_gallery" => shf_gallery(&cfg.shf_gallery, seed),
        "centred_moment_growth" => centred_moment_growth(&cfg.centred_moment_growth, b, seed),
        other => Err(Error::InvalidConfig(format!("unknown experiment '{other}'; expected one of {}", NAMES.join(", ")))),
    }
}

fn log_z_samples(
    kernel: &WalkKernel,
    spec: &DisorderSpec,
    law: &DisorderLaw,
    n: usize,
    m: usize,
    opts: &PolymerOptions,
    seed: u64,
    key: &str,
) -> Result<Vec<f64>> {
    replicate(m, |i| {
        let field = field_for(seed, key, i, law);
        Ok(point_to_plane_detailed(kernel, spec, &field, n, (0, 0), opts)?.log_value)
    })
}

/// `log Z_N(0)` in the subcritical window against the normal law with
/// variance `σ̂² = log(1/(1−β̂²))` and mean `−σ̂²/2`.
pub fn one_point_lognormal(cfg: &OnePointConfig, batches: usize, seed: u64) -> Result<ExperimentOutput> {
    const NAME: &str = "one_point_lognormal";
    let t0 = Instant::now();
    let mut rep = ExperimentReport::new(NAME, seed, cfg);
    rep.replicas = cfg.replicas;
    if !(0.0..1.0).contains(&cfg.beta_hat) {
        return Err(Error::OutOfRange(format!("beta_hat = {} must lie in [0, 1)", cfg.beta_hat)));
    }
    let mut horizons = cfg.extrapolation_ns.clone();
    horizons.retain(|&h| h >= 2 && h < cfg.n);
    horizons.push(cfg.n);
    horizons.sort_unstable();
    horizons.dedup();
    let kernel = WalkKernel::standard(cfg.n);
    let opts = cfg.polymer;

    // β = 0 control: log Z = log(1 − truncation) ≈ 0.
    let zero = DisorderSpec::fixed(cfg.law.clone(), 0.0)?;
    let control = log_z_samples(&kernel, &zero, &cfg.law, cfg.n, 1, &opts, seed, "control")?[0];
    rep.check(Check::absolute("control_log_z", control, 0.0, 2.0 * opts.cap));

    let target = (1.0 / (1.0 - cfg.beta_hat * cfg.beta_hat)).ln();
    let mut variances = Vec::new();
    let mut last = Vec::new();
    for &h in &horizons {
        let spec = beta_subcritical(&kernel, cfg.law.clone(), h, cfg.beta_hat)?;
        let xs = log_z_samples(&kernel, &spec, &cfg.law, h, cfg.replicas, &opts, seed, &format!("{NAME}/{h}"))?;
        let v = batch_variance(&xs, batches);
        rep.estimate(&format!("var_log_z_n{h}"), v);
        variances.push(v.value);
        if h == cfg.n {
            last = xs;
        }
    }
    let mean_log = batch_mean(&last, batches);
    let var_log = batch_variance(&last, batches);
    let z: Vec<f64> = last.iter().map(|x| x.exp()).collect();
    rep.estimate("mean_log_z", mean_log);
    rep.estimate("var_log_z", var_log);
    rep.estimate("mean_z", batch_mean(&z, batches));
    rep.stat("target_variance", target);
    rep.stat("target_mean", -target / 2.0);
    if horizons.len() >= 2 {
        let ns: Vec<f64> = horizons.iter().map(|&h| h as f64).collect();
        rep.stat("var_log_z_extrapolated", extrapolate_inverse_log(&ns, &variances, false));
    }
    rep.check(Check::relative("variance", var_log.value, target, cfg.variance_tol));
    if target > 0.0 {
        rep.check(Check::relative("mean", mean_log.value, -target / 2.0, cfg.mean_tol));
        let ks = ks_distance(&last, normal_cdf(-target / 2.0, target));
        rep.stat("ks_distance", ks);
        rep.check(Check::at_most("ks", ks, cfg.ks_max));
    } else {
        rep.check(Check::absolute("mean", mean_log.value, 0.0, 2.0 * opts.cap));
        rep.flags.push("degenerate: beta_hat = 0".into());
    }
    let rows = last.iter().enumerate().map(|(i, &x)| vec![i as f64, x]).collect();
    Ok(ExperimentOutput { report: rep.finish(t0), traces: vec![trace("log_z", &["replica", "log_z"], rows)], images: vec![] })
}

/// Median of `Z_N(0)` in the critical window over an increasing N-grid.
pub fn critical_one_point_decay(cfg: &CriticalDecayConfig, batches: usize, seed: u64) -> Result<ExperimentOutput> {
    const NAME: &str = "critical_one_point_decay";
    let t0 = Instant::now();
    let mut rep = ExperimentReport::new(NAME, seed, cfg);
    rep.replicas = cfg.replicas;
    let mut ns = cfg.ns.clone();
    ns.sort_unstable();
    ns.dedup();
    if ns.is_empty() || ns[0] < 3 {
        return Err(Error::InvalidConfig("critical_one_point_decay needs horizons >= 3".into()));
    }
    let n_max = *ns.last().expect("non-empty");
    let kernel = WalkKernel::standard(n_max);
    let opts = cfg.polymer;

    let zero = DisorderSpec::fixed(cfg.law.clone(), 0.0)?;
    let z0 = log_z_samples(&kernel, &zero, &cfg.law, ns[0], 1, &opts, seed, "control")?[0].exp();
    rep.check(Check::absolute("control_z", z0, 1.0, 2.0 * opts.cap));

    let control_target = (-0.5 * (1.0 / (1.0 - cfg.control_beta_hat.powi(2))).ln()).exp();
    let mut rows = Vec::new();
    let mut medians = Vec::new();
    let mut control_last = f64::NAN;
    for &n in &ns {
        let spec = beta_critical(&kernel, cfg.law.clone(), n, cfg.theta)?;
        let logs = log_z_samples(&kernel, &spec, &cfg.law, n, cfg.replicas, &opts, seed, &format!("{NAME}/{n}"))?;
        let z: Vec<f64> = logs.iter().map(|x| x.exp()).collect();
        let med = median(&z);
        medians.push(med);
        rep.stat(&format!("median_z_n{n}"), med);
        rep.estimate(&format!("mean_log_z_n{n}"), batch_mean(&logs, batches));
        rep.stat(&format!("half_loglog_n{n}"), -0.5 * (n as f64).ln().ln());
        let cspec = beta_subcritical(&kernel, cfg.law.clone(), n, cfg.control_beta_hat)?;
        let clogs =
            log_z_samples(&kernel, &cspec, &cfg.law, n, cfg.replicas, &opts, seed, &format!("{NAME}/control/{n}"))?;
        let cz: Vec<f64> = clogs.iter().map(|x| x.exp()).collect();
        control_last = median(&cz);
        rep.stat(&format!("control_median_z_n{n}"), control_last);
        rows.push(vec![n as f64, med, control_last]);
    }
    let violations = medians.windows(2).filter(|w| !(w[1] < w[0])).count();
    rep.check(Check::at_most("median_strictly_decreasing", violations as f64, 0.0));
    rep.check(Check::relative("control_median", control_last, control_target, cfg.control_tol));
    Ok(ExperimentOutput {
        report: rep.finish(t0),
        traces: vec![trace("medians", &["n", "median_z", "control_median_z"], rows)],
        images: vec![],
    })
}

fn one() -> TestFunction {
    TestFunction::constant(1.0)
}

/// Centred averaged fields `Z_N(φ, 𝟙) − E` over replicas; `E` is the β = 0 value
/// of the same truncated recursion, which is the exact mean.
fn centred_fields(
    kernel: &WalkKernel,
    spec: &DisorderSpec,
    law: &DisorderLaw,
    n: usize,
    phi: &TestFunction,
    m: usize,
    opts: &PolymerOptions,
    seed: u64,
    key: &str,
) -> Result<(f64, Vec<f64>)> {
    let zero = DisorderSpec::fixed(law.clone(), 0.0)?;
    let base = averaged_field(kernel, &zero, &field_for(seed, key, 0, law), n, phi, &one(), opts)?;
    let xs = replicate(m, |i| {
        let field = field_for(seed, key, i, law);
        Ok(averaged_field(kernel, spec, &field, n, phi, &one(), opts)? - base)
    })?;
    Ok((base, xs))
}

/// Variance of `β_N⁻¹ (Z_N(φ, 𝟙) − E)` against `(1/(1−β̂²)) ∬ φ φ' ∫₀¹ g_{2u}`.
pub fn edwards_wilkinson(cfg: &EwConfig, batches: usize, seed: u64) -> Result<ExperimentOutput> {
    const NAME: &str = "edwards_wilkinson";
    let t0 = Instant::now();
    let mut rep = ExperimentReport::new(NAME, seed, cfg);
    rep.replicas = cfg.replicas;
    let kernel = WalkKernel::standard(cfg.n);
    let phi = cfg.phi.function();
    let opts = cfg.polymer;

    let zero = DisorderSpec::fixed(cfg.law.clone(), 0.0)?;
    let (_, control) = centred_fields(&kernel, &zero, &cfg.law, cfg.n, &phi, 1, &opts, seed, "control")?;
    rep.check(Check::absolute("control_field", control[0], 0.0, 0.0));

    let spec = beta_subcritical(&kernel, cfg.law.clone(), cfg.n, cfg.beta_hat)?;
    let target = ew_variance_target(&phi, cfg.beta_hat)?;
    rep.stat("target_variance", target);
    rep.stat("beta_n", spec.beta);
    if spec.is_trivial() {
        rep.check(Check::absolute("variance", 0.0, 0.0, 0.0));
        rep.flags.push("degenerate: beta_hat = 0".into());
        return Ok(ExperimentOutput::report_only(rep.finish(t0)));
    }
    let (_, xs) = centred_fields(&kernel, &spec, &cfg.law, cfg.n, &phi, cfg.replicas, &opts, seed, NAME)?;
    let scaled: Vec<f64> = xs.iter().map(|x| x / spec.beta).collect();
    let v = batch_variance(&scaled, batches);
    rep.estimate("variance", v);
    rep.estimate("mean", batch_mean(&scaled, batches));
    if cfg.n >= 2 && cfg.n <= kernel.cache_n() + 1 {
        let exact = averaged_field_variance(&kernel, spec.sigma2, cfg.n, &phi)? / (spec.beta * spec.beta);
        rep.stat("exact_discrete_variance", exact);
        if v.stderr > 0.0 {
            rep.stat("z_vs_exact", (v.value - exact) / v.stderr);
        }
    }
    // Linearity in φ, replica 0.
    let c = 2.5;
    let (_, scaled_phi) =
        centred_fields(&kernel, &spec, &cfg.law, cfg.n, &phi.scaled(c), 1, &opts, seed, NAME)?;
    let lin = if xs[0] == 0.0 { 0.0 } else { (scaled_phi[0] / (c * xs[0]) - 1.0).abs() };
    rep.check(Check::at_most("linearity", lin, 1e-10));
    rep.check(Check::relative("variance", v.value, target, cfg.tol));
    let rows = scaled.iter().enumerate().map(|(i, &x)| vec![i as f64, x]).collect();
    Ok(ExperimentOutput { report: rep.finish(t0), traces: vec![trace("field", &["replica", "x"], rows)], images: vec![] })
}

/// Variance of `√θ_N (Z_N(φ, 𝟙) − E)` in the quasi-critical window against
/// `4π ∬ φ φ' ∫₀¹ g_{2u}`.
pub fn quasi_critical_scaling(cfg: &QuasiCriticalConfig, batches: usize, seed: u64) -> Result<ExperimentOutput> {
    const NAME: &str = "quasi_critical_scaling";
    let t0 = Instant::now();
    let mut rep = ExperimentReport::new(NAME, seed, cfg);
    rep.replicas = cfg.replicas;
    let kernel = WalkKernel::standard(cfg.n);
    let phi = cfg.phi.function();
    let opts = cfg.polymer;

    let zero = DisorderSpec::fixed(cfg.law.clone(), 0.0)?;
    let (_, control) = centred_fields(&kernel, &zero, &cfg.law, cfg.n, &phi, 1, &opts, seed, "control")?;
    rep.check(Check::absolute("control_field", control[0], 0.0, 0.0));

    let spec = beta_quasi_critical(&kernel, cfg.law.clone(), cfg.n, cfg.kappa)?;
    let theta_n = (cfg.n as f64).ln().powf(cfg.kappa);
    let target = 4.0 * PI * ew_form(&phi, 1.0, cfg.phi.rho);
    rep.stat("theta_n", theta_n);
    rep.stat("target_variance", target);
    let (_, xs) = centred_fields(&kernel, &spec, &cfg.law, cfg.n, &phi, cfg.replicas, &opts, seed, NAME)?;
    let scaled: Vec<f64> = xs.iter().map(|x| x * theta_n.sqrt()).collect();
    let v = batch_variance(&scaled, batches);
    rep.estimate("variance", v);
    let exact = theta_n * averaged_field_variance(&kernel, spec.sigma2, cfg.n, &phi)?;
    rep.stat("exact_discrete_variance", exact);
    // The same field rescaled by β_N instead of √θ_N.
    let by_beta: Vec<f64> = xs.iter().map(|x| x / spec.beta).collect();
    rep.estimate("variance_beta_scaled", batch_variance(&by_beta, batches));
    rep.check(Check::relative("variance", v.value, target, cfg.tol));
    let rows = scaled.iter().enumerate().map(|(i, &x)| vec![i as f64, x]).collect();
    Ok(ExperimentOutput { report: rep.finish(t0), traces: vec![trace("field", &["replica", "y"], rows)], images: vec![] })
}

/// `L_N = Σ_{n=1}^{N} 1{S_n = S'_n}` for two independent walks from the origin.
pub fn collision_count<R: RngCore>(step: &StepLaw1d, n: usize, rng: &mut R) -> u64 {
    let mut count = 0;
    if step.is_centred_binomial4() {
        // S − S' has i.i.d. centred Binomial(8, 1/2) coordinates: one byte each.
        let (mut dx, mut dy) = (0i64, 0i64);
        let mut left = n;
        while left > 0 {
            let bits = rng.next_u64();
            for j in 0..left.min(4) {
                let w = bits >> (16 * j);
                dx += (w & 0xff).count_ones() as i64 - 4;
                dy += ((w >> 8) & 0xff).count_ones() as i64 - 4;
                if dx == 0 && dy == 0 {
                    count += 1;
                }
            }
            left -= left.min(4);
        }
        return count;
    }
    let mut cdf = Vec::with_capacity(step.probs.len());
    let mut acc = 0.0;
    for p in &step.probs {
        acc += p;
        cdf.push(acc);
    }
    let draw = |rng: &mut R| {
        let u = unit_open(rng.next_u64());
        let i = cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1);
        step.support[i]
    };
    let (mut dx, mut dy) = (0i64, 0i64);
    for _ in 0..n {
        dx += draw(rng) - draw(rng);
        dy += draw(rng) - draw(rng);
        if dx == 0 && dy == 0 {
            count += 1;
        }
    }
    count
}

/// `L_N / R_N` against Exp(1).
pub fn collision_exponential(cfg: &CollisionConfig, batches: usize, seed: u64) -> Result<ExperimentOutput> {
    const NAME: &str = "collision_exponential";
    let t0 = Instant::now();
    let mut rep = ExperimentReport::new(NAME, seed, cfg);
    rep.replicas = cfg.replicas;
    if cfg.n == 0 || cfg.replicas == 0 {
        return Err(Error::InvalidConfig("collision_exponential needs N >= 1 and replicas >= 1".into()));
    }
    let kernel = WalkKernel::standard(cfg.n);
    let step = kernel.step().clone();
    let r_n = kernel.replica_overlap(cfg.n)?;
    rep.stat("r_n", r_n);

    // N = 1 control: L ∈ {0, 1} with mean q_2(0) = R_1.
    let m0 = 20_000usize;
    let l1 = replicate(m0, |i| Ok(collision_count(&step, 1, &mut stream(seed, "control", i)) as f64))?;
    let e1 = batch_mean(&l1, batches);
    let r1 = kernel.replica_overlap(1)?;
    rep.check(Check::absolute("control_n1_mean", e1.value, r1, 4.0 * e1.stderr.max(1e-12)));
    rep.check(Check::at_most("control_n1_support", l1.iter().filter(|&&x| x > 1.0).count() as f64, 0.0));

    let xs = replicate(cfg.replicas, |i| Ok(collision_count(&step, cfg.n, &mut stream(seed, NAME, i)) as f64 / r_n))?;
    let m = batch_mean(&xs, batches);
    rep.estimate("mean_l_over_r", m);
    let survival = xs.iter().filter(|&&x| x > 1.0).count() as f64 / xs.len() as f64;
    rep.estimates.push(Estimate {
        name: "survival_at_1".into(),
        value: survival,
        stderr: (survival * (1.0 - survival) / xs.len() as f64).sqrt(),
    });
    let ks = ks_distance(&xs, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-x).exp() });
    rep.stat("ks_distance_exp1", ks);
    rep.stat("atom_at_zero", xs.iter().filter(|&&x| x == 0.0).count() as f64 / xs.len() as f64);
    rep.check(Check::relative("mean", m.value, 1.0, cfg.mean_tol));
    rep.check(Check::absolute("survival", survival, (-1.0f64).exp(), cfg.survival_tol));
    let rows = xs.iter().enumerate().map(|(i, &x)| vec![i as f64, x]).collect();
    Ok(ExperimentOutput { report: rep.finish(t0), traces: vec![trace("collisions", &["replica", "l_over_r"], rows)], images: vec![] })
}

fn site_stats(rep: &mut ExperimentReport, tag: &str, values: &[f64]) -> f64 {
    let m = mean(values);
    for q in [0.5, 0.9, 0.99] {
        rep.stat(&format!("{tag}_quantile_{q}"), quantile(values, q) / m);
    }
    let frac = values.iter().filter(|&&v| v > 5.0 * m).count() as f64 / values.len() as f64;
    rep.stat(&format!("{tag}_mean"), m);
    rep.stat(&format!("{tag}_frac_above_5x_mean"), frac);
    frac
}

/// Paired snapshots of the plane-to-point field at `(θ, N)` and
/// `(θ − log a, aN)` on windows of matching macroscopic size.
pub fn shf_gallery(cfg: &GalleryConfig, seed: u64) -> Result<ExperimentOutput> {
    const NAME: &str = "shf_gallery";
    let t0 = Instant::now();
    let mut rep = ExperimentReport::new(NAME, seed, cfg);
    rep.replicas = 1;
    if !(cfg.a > 0.0) || cfg.half_width < 0 {
        return Err(Error::InvalidConfig("gallery needs a > 0 and half_width >= 0".into()));
    }
    let n2 = ((cfg.a * cfg.n as f64).round() as usize).max(3);
    let theta2 = cfg.theta - cfg.a.ln();
    let hw2 = (cfg.half_width as f64 * cfg.a.sqrt()).round() as i64;
    let kernel = WalkKernel::standard(cfg.n.max(n2));
    let opts = cfg.polymer;
    let field = field_for(seed, NAME, 0, &cfg.law);
    let mut images = Vec::new();

    let zero = DisorderSpec::fixed(cfg.law.clone(), 0.0)?;
    let w1 = Rect::centred(0, 0, cfg.half_width);
    let flat = field_snapshot(&kernel, &zero, &field, cfg.n, w1, &opts)?;
    let fv = flat.scaled_values();
    let spread = fv.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - fv.iter().cloned().fold(f64::INFINITY, f64::min);
    rep.check(Check::at_most("control_flat", spread, 2.0 * opts.cap));
    images.push(Image { name: "control".into(), rows: w1.rows(), cols: w1.cols(), values: fv, clip_quantile: cfg.clip_quantile });

    let s1 = field_snapshot(&kernel, &beta_critical(&kernel, cfg.law.clone(), cfg.n, cfg.theta)?, &field, cfg.n, w1, &opts)?;
    let v1 = s1.scaled_values();
    let f1 = site_stats(&mut rep, "theta", &v1);
    images.push(Image { name: "theta".into(), rows: w1.rows(), cols: w1.cols(), values: v1, clip_quantile: cfg.clip_quantile });

    let w2 = Rect::centred(0, 0, hw2);
    let s2 = field_snapshot(&kernel, &beta_critical(&kernel, cfg.law.clone(), n2, theta2)?, &field, n2, w2, &opts)?;
    let v2 = s2.scaled_values();
    let f2 = site_stats(&mut rep, "rescaled", &v2);
    images.push(Image { name: "rescaled".into(), rows: w2.rows(), cols: w2.cols(), values: v2, clip_quantile: cfg.clip_quantile });
    rep.stat("theta_rescaled", theta2);
    rep.stat("n_rescaled", n2 as f64);
    rep.check(Check::at_most("frac_above_5x_mean_decreases", (f2 - f1).max(0.0), 0.0));
    Ok(ExperimentOutput { report: rep.finish(t0), traces: vec![], images })
}

fn kurtosis(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    if v == 0.0 {
        return 0.0;
    }
    xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / xs.len() as f64 / (v * v)
}

/// Centred moments `E[(Z_{N'}(φ, 𝟙) − E)^h]` for `N' = εN`, with `φ` on the
/// macroscopic scale of `N` and the disorder strength of the window at `N`.
pub fn centred_moment_growth(cfg: &MomentGrowthConfig, batches: usize, seed: u64) -> Result<ExperimentOutput> {
    const NAME: &str = "centred_moment_growth";
    let t0 = Instant::now();
    let mut rep = ExperimentReport::new(NAME, seed, cfg);
    rep.replicas = cfg.replicas;
    if cfg.eps.is_empty() || cfg.eps.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return Err(Error::InvalidConfig("eps values must lie in (0, 1]".into()));
    }
    let kernel = WalkKernel::standard(cfg.n);
    let spec = beta_critical(&kernel, cfg.law.clone(), cfg.n, cfg.theta)?;
    let zero = DisorderSpec::fixed(cfg.law.clone(), 0.0)?;
    let opts = cfg.polymer;
    let base = cfg.phi.function();
    let mut rows = Vec::new();
    let mut by_order: Vec<Vec<f64>> = vec![Vec::new(); cfg.orders.len()];
    for &eps in &cfg.eps {
        let np = ((eps * cfg.n as f64).round() as usize).max(2);
        let ratio = np as f64 / cfg.n as f64;
        let (b, sr) = (base.clone(), ratio.sqrt());
        let phi = TestFunction::new(Some(cfg.phi.rho / sr), move |x, y| ratio * b.eval(x * sr, y * sr));
        let key = format!("{NAME}/{np}");
        let (_, control) = centred_fields(&kernel, &zero, &cfg.law, np, &phi, 1, &opts, seed, "control")?;
        rep.check(Check::absolute(&format!("control_eps{eps}"), control[0], 0.0, 0.0));
        let (_, xs) = centred_fields(&kernel, &spec, &cfg.law, np, &phi, cfg.replicas, &opts, seed, &key)?;
        let mut row = vec![eps, np as f64];
        for (k, &h) in cfg.orders.iter().enumerate() {
            let ys: Vec<f64> = xs.iter().map(|x| x.powi(h as i32)).collect();
            let e = batch_mean(&ys, batches);
            rep.estimate(&format!("m{h}_eps{eps}"), e);
            let kurt = kurtosis(&ys);
            rep.stat(&format!("kurtosis_m{h}_eps{eps}"), kurt);
            if kurt > cfg.kurtosis_flag {
                rep.flags.push(format!("heavy-tailed estimator: h={h} eps={eps} kurtosis={kurt:.3}"));
            }
            if h == 2 {
                let exact = averaged_field_variance(&kernel, spec.sigma2, np, &phi)?;
                rep.stat(&format!("exact_variance_eps{eps}"), exact);
                rep.check(Check::at_most(
                    &format!("m2_vs_exact_eps{eps}"),
                    (e.value - exact).abs(),
                    cfg.z_tol * e.stderr,
                ));
            }
            by_order[k].push(e.value.abs());
            row.push(e.value);
        }
        rows.push(row);
    }
    if cfg.eps.len() >= 2 {
        let (first, last) = (0, cfg.eps.len() - 1);
        let smaller_is_last = cfg.eps[last] < cfg.eps[first];
        for (k, &h) in cfg.orders.iter().enumerate() {
            let (big, small) = if smaller_is_last { (by_order[k][first], by_order[k][last]) } else { (by_order[k][last], by_order[k][first]) };
            rep.check(Check::at_most(&format!("m{h}_decreases"), (small - big).max(0.0), 0.0));
        }
    }
    let mut header = vec!["eps".to_string(), "n_prime".to_string()];
    header.extend(cfg.orders.iter().map(|h| format!("m{h}")));
    let t = Trace { name: "moments".into(), header, rows };
    Ok(ExperimentOutput { report: rep.finish(t0), traces: vec![t], images: vec![] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collision_count_general_path_agrees_in_mean() {
        let k = WalkKernel::standard(8);
        let law = StepLaw1d::new(k.step().support.clone(), k.step().probs.clone()).unwrap();
        let fast: Vec<f64> = (0..4000).map(|i| collision_count(&law, 8, &mut stream(1, "a", i)) as f64).collect();
        // Same law through the generic sampler: perturb nothing but force the slow path.
        let mut slow = Vec::new();
        for i in 0..4000 {
            let mut rng = stream(1, "b", i);
            let (mut dx, mut dy, mut c) = (0i64, 0i64, 0u64);
            for _ in 0..8 {
                let mut d = || (rng.next_u64() & 0xf).count_ones() as i64 - 2;
                dx += d() - d();
                dy += d() - d();
                c += (dx == 0 && dy == 0) as u64;
            }
            slow.push(c as f64);
        }
        let r = k.replica_overlap(8).unwrap();
        let (a, b) = (batch_mean(&fast, 30), batch_mean(&slow, 30));
        assert!((a.value - r).abs() < 4.0 * a.stderr, "{a:?} vs {r}");
        assert!((b.value - r).abs() < 4.0 * b.stderr, "{b:?} vs {r}");
    }

    #[test]
    fn unknown_experiment_is_rejected() {
        assert!(run("nope", &ExperimentsConfig::default(), 0).is_err());
    }
}
