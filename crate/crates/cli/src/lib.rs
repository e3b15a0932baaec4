//! Command-line driver for the `shflab` library.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use shflab::config::ExperimentsConfig;
use shflab::dickman::DickmanGrid;
use shflab::disorder::critical_sigma2;
use shflab::experiments::{self, ExperimentOutput};
use shflab::export::{csv_string, pgm_bytes};
use shflab::kernels::ShfCovariance;
use shflab::moments::{second_moment_exponential_scale, second_moment_p2plane};
use shflab::walk::WalkKernel;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_TOLERANCE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
    Pgm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Module {
    WalkTables,
    Moments,
    Dickman,
    Kernel,
    Experiment,
    Gallery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkTablesConfig {
    /// Largest n in the table. Default 1024.
    pub n: usize,
}

impl Default for WalkTablesConfig {
    fn default() -> Self {
        Self { n: 1024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsConfig {
    /// Horizon. Default 1024.
    pub n: usize,
    /// Subcritical strength; ignored when `theta` is set. Default 0.5.
    pub beta_hat: f64,
    /// Critical window parameter. Default unset.
    pub theta: Option<f64>,
    /// Exponential time scale `N^α`. Default unset.
    pub alpha: Option<f64>,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self { n: 1024, beta_hat: 0.5, theta: None, alpha: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DickmanConfig {
    /// Default 1.
    pub s: f64,
    /// Default 3.
    pub t_max: f64,
    /// Spacing of the output table. Default 0.01.
    pub step: f64,
}

impl Default for DickmanConfig {
    fn default() -> Self {
        Self { s: 1.0, t_max: 3.0, step: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// Default [−1, 0, 1].
    pub thetas: Vec<f64>,
    /// Default [1].
    pub ts: Vec<f64>,
    /// Default [0.01, 0.03, 0.1, 0.3, 1].
    pub rs: Vec<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { thetas: vec![-1.0, 0.0, 1.0], ts: vec![1.0], rs: vec![0.01, 0.03, 0.1, 0.3, 1.0] }
    }
}

/// Everything a run needs; round-trips through TOML and JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Informational; the subcommand selects what runs. Default unset.
    pub module: Option<Module>,
    /// Master seed. Default 0.
    pub seed: u64,
    /// Output directory; must exist. Default ".".
    pub out_dir: PathBuf,
    /// Table format. Default csv.
    pub format: Format,
    /// Worker threads; unset means SHFLAB_THREADS or all cores.
    pub threads: Option<usize>,
    pub walk_tables: WalkTablesConfig,
    pub moments: MomentsConfig,
    pub dickman: DickmanConfig,
    pub kernel: KernelConfig,
    pub experiments: ExperimentsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            module: None,
            seed: 0,
            out_dir: PathBuf::from("."),
            format: Format::Csv,
            threads: None,
            walk_tables: WalkTablesConfig::default(),
            moments: MomentsConfig::default(),
            dickman: DickmanConfig::default(),
            kernel: KernelConfig::default(),
            experiments: ExperimentsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(s: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn to_json(&self) -> anyhow::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            Self::from_json(&text).with_context(|| format!("parsing JSON config {}", path.display()))
        } else {
            Self::from_toml(&text).with_context(|| format!("parsing TOML config {}", path.display()))
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "shflab", version, about = "Directed polymers and the critical 2d stochastic heat flow")]
pub struct Cli {
    /// TOML or JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// q_{2n}(0) and the replica overlap R_n.
    WalkTables(WalkTablesArgs),
    /// Exact second moment of the point-to-plane partition function.
    Moments(MomentsArgs),
    /// Dickman subordinator density table.
    Dickman(DickmanArgs),
    /// K̃ over (θ, t, r) grids.
    Kernel(KernelArgs),
    /// Runs a named experiment.
    Experiment(ExperimentArgs),
    /// Paired field snapshots as PGM images.
    Gallery,
}

#[derive(Debug, Args)]
pub struct WalkTablesArgs {
    #[arg(long = "N")]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub beta_hat: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DickmanArgs {
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub t: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub r: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// One of the experiment names.
    pub name: String,
}

/// Parses `argv` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INVALID
        }
    }
}

fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(f) = cli.format {
        cfg.format = f;
    }
    if cfg.threads.is_none() {
        if let Ok(v) = std::env::var("SHFLAB_THREADS") {
            cfg.threads = Some(v.trim().parse().map_err(|_| anyhow!("SHFLAB_THREADS = '{v}' is not a thread count"))?);
        }
    }
    match &cli.command {
        Command::WalkTables(a) => {
            cfg.module = Some(Module::WalkTables);
            if let Some(n) = a.n {
                cfg.walk_tables.n = n;
            }
        }
        Command::Moments(a) => {
            cfg.module = Some(Module::Moments);
            if let Some(n) = a.n {
                cfg.moments.n = n;
            }
            if let Some(b) = a.beta_hat {
                cfg.moments.beta_hat = b;
            }
            if a.theta.is_some() {
                cfg.moments.theta = a.theta;
            }
            if a.alpha.is_some() {
                cfg.moments.alpha = a.alpha;
            }
        }
        Command::Dickman(a) => {
            cfg.module = Some(Module::Dickman);
            if let Some(s) = a.s {
                cfg.dickman.s = s;
            }
            if let Some(t) = a.t_max {
                cfg.dickman.t_max = t;
            }
            if let Some(h) = a.step {
                cfg.dickman.step = h;
            }
        }
        Command::Kernel(a) => {
            cfg.module = Some(Module::Kernel);
            if let Some(v) = &a.theta {
                cfg.kernel.thetas = v.clone();
            }
            if let Some(v) = &a.t {
                cfg.kernel.ts = v.clone();
            }
            if let Some(v) = &a.r {
                cfg.kernel.rs = v.clone();
            }
        }
        Command::Experiment(_) => cfg.module = Some(Module::Experiment),
        Command::Gallery => cfg.module = Some(Module::Gallery),
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> anyhow::Result<i32> {
    let cfg = resolve_config(&cli)?;
    if !cfg.out_dir.is_dir() {
        bail!("output directory {} does not exist", cfg.out_dir.display());
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        if t == 0 {
            bail!("thread count must be positive");
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build()?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

fn write_table(cfg: &RunConfig, stem: &str, header: &[&str], rows: &[Vec<f64>]) -> anyhow::Result<PathBuf> {
    let (path, text) = match cfg.format {
        Format::Json => {
            let records: Vec<serde_json::Map<String, serde_json::Value>> = rows
                .iter()
                .map(|r| header.iter().zip(r).map(|(h, v)| (h.to_string(), serde_json::json!(v))).collect())
                .collect();
            (cfg.out_dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&records)? + "\n")
        }
        _ => (cfg.out_dir.join(format!("{stem}.csv")), csv_string(header, rows)),
    };
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> anyhow::Result<i32> {
    match cmd {
        Command::WalkTables(_) => {
            let n = cfg.walk_tables.n;
            if n == 0 {
                bail!("walk-tables needs N >= 1");
            }
            let k = WalkKernel::standard(n);
            let rows: Vec<Vec<f64>> =
                (1..=n).map(|i| Ok(vec![i as f64, k.q2n0(i)?, k.replica_overlap(i)?])).collect::<shflab::Result<_>>()?;
            write_table(cfg, "walk_tables", &["n", "q2n_0", "r_n"], &rows)?;
            Ok(EXIT_OK)
        }
        Command::Moments(_) => {
            let m = &cfg.moments;
            if m.n == 0 {
                bail!("moments needs N >= 1");
            }
            let k = WalkKernel::standard(m.n);
            let row = if let Some(theta) = m.theta {
                let s2 = critical_sigma2(&k, m.n, theta)?;
                vec![m.n as f64, theta, s2, second_moment_p2plane(&k, s2, m.n)?]
            } else {
                if !(m.beta_hat >= 0.0) {
                    bail!("beta_hat must be nonnegative");
                }
                let r = k.replica_overlap(m.n)?;
                let s2 = if r > 0.0 { m.beta_hat * m.beta_hat / r } else { 0.0 };
                let second = match m.alpha {
                    Some(a) => second_moment_exponential_scale(&k, m.beta_hat, m.n, a)?,
                    None => second_moment_p2plane(&k, s2, m.n)?,
                };
                vec![m.n as f64, m.beta_hat, s2, second]
            };
            let label = if m.theta.is_some() { "theta" } else { "beta_hat" };
            write_table(cfg, "moments", &["n", label, "sigma2", "second_moment"], &[row])?;
            Ok(EXIT_OK)
        }
        Command::Dickman(_) => {
            let d = &cfg.dickman;
            if !(d.step > 0.0) || !(d.t_max > 0.0) {
                bail!("dickman needs positive step and t_max");
            }
            let grid = DickmanGrid::with_grid(d.s, DickmanGrid::DEFAULT_STEP, d.t_max.max(1.0) + 0.01)?;
            let count = (d.t_max / d.step + 1e-9).floor() as usize;
            let rows: Vec<Vec<f64>> = (1..=count)
                .map(|i| {
                    let t = i as f64 * d.step;
                    Ok(vec![t, grid.density(t)?])
                })
                .collect::<shflab::Result<_>>()?;
            write_table(cfg, "dickman", &["t", "f"], &rows)?;
            Ok(EXIT_OK)
        }
        Command::Kernel(_) => {
            let kc = &cfg.kernel;
            let mut rows = Vec::new();
            for &theta in &kc.thetas {
                let k = ShfCovariance::new(theta);
                for &t in &kc.ts {
                    for &r in &kc.rs {
                        let v = k.k_tilde_r(t, r)?.finite().unwrap_or(f64::INFINITY);
                        rows.push(vec![theta, t, r, v]);
                    }
                }
            }
            write_table(cfg, "kernel", &["theta", "t", "r", "k_tilde"], &rows)?;
            Ok(EXIT_OK)
        }
        Command::Experiment(a) => {
            let out = experiments::run(&a.name, &cfg.experiments, cfg.seed)?;
            write_experiment(cfg, &out, cfg.format == Format::Pgm)
        }
        Command::Gallery => {
            let out = experiments::run("shf_gallery", &cfg.experiments, cfg.seed)?;
            write_experiment(cfg, &out, true)
        }
    }
}

fn write_experiment(cfg: &RunConfig, out: &ExperimentOutput, images: bool) -> anyhow::Result<i32> {
    let name = &out.report.name;
    let report_path = cfg.out_dir.join(format!("{name}.json"));
    fs::write(&report_path, serde_json::to_string_pretty(&out.report)? + "\n")?;
    println!("wrote {}", report_path.display());
    for t in &out.traces {
        let header: Vec<&str> = t.header.iter().map(String::as_str).collect();
        let path = cfg.out_dir.join(format!("{name}_{}.csv", t.name));
        fs::write(&path, csv_string(&header, &t.rows))?;
        println!("wrote {}", path.display());
    }
    if images {
        for img in &out.images {
            let path = cfg.out_dir.join(format!("{name}_{}.pgm", img.name));
            fs::write(&path, pgm_bytes(&img.values, img.rows, img.cols, img.clip_quantile)?)?;
            println!("wrote {}", path.display());
        }
    }
    for c in &out.report.checks {
        println!("{} {}: observed {:.16e}, target {:.16e}, tolerance {:.16e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.observed, c.target, c.tolerance);
    }
    println!("runtime {:.3} s", out.report.runtime_secs);
    Ok(if out.report.passed { EXIT_OK } else { EXIT_TOLERANCE })
}
