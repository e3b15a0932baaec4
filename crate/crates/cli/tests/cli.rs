use std::fs;
use std::path::Path;

use shflab_cli::{run, Format, RunConfig, EXIT_INVALID, EXIT_OK};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn shflab(dir: &Path, args: &[&str]) -> i32 {
    let mut argv = vec!["shflab".to_string(), "--out-dir".into(), dir.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run(argv)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn dickman_unit_branch_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(shflab(dir.path(), &["dickman", "--s", "1", "--t-max", "1", "--step", "0.05"]), EXIT_OK);
    let (header, rows) = read_csv(&dir.path().join("dickman.csv"));
    assert_eq!(header, ["t", "f"]);
    assert_eq!(rows.len(), 20);
    for r in &rows {
        assert!((r[1] - (-EULER_GAMMA).exp()).abs() < 1e-10, "t = {}: {}", r[0], r[1]);
    }
}

#[test]
fn moments_without_disorder_is_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(shflab(dir.path(), &["moments", "--beta-hat", "0", "--N", "128"]), EXIT_OK);
    let (_, rows) = read_csv(&dir.path().join("moments.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][3], 1.0);
}

#[test]
fn walk_tables_accumulate() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(shflab(dir.path(), &["walk-tables", "--N", "40"]), EXIT_OK);
    let (_, rows) = read_csv(&dir.path().join("walk_tables.csv"));
    assert_eq!(rows.len(), 40);
    let mut acc = 0.0;
    for r in &rows {
        acc += r[1];
        assert!((r[2] - acc).abs() < 1e-12 * acc);
    }
}

#[test]
fn invalid_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(shflab(dir.path(), &["experiment", "no_such_experiment"]), EXIT_INVALID);
    assert_eq!(shflab(dir.path(), &["--bogus-flag", "dickman"]), EXIT_INVALID);
    assert_eq!(shflab(dir.path(), &["dickman", "--step", "-1"]), EXIT_INVALID);
    assert_eq!(shflab(&dir.path().join("missing"), &["dickman"]), EXIT_INVALID);
    assert_eq!(shflab(dir.path(), &["--threads", "0", "dickman"]), EXIT_INVALID);
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = RunConfig::default();
    cfg.experiments.collision_exponential.n = 256;
    cfg.experiments.collision_exponential.replicas = 3000;
    cfg.experiments.shf_gallery.n = 16;
    cfg.experiments.shf_gallery.half_width = 4;
    let path = dir.join("run.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e != "toml"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn experiment_outputs_are_reproducible() {
    let cfg_dir = tempfile::tempdir().unwrap();
    let config = small_config(cfg_dir.path());
    let config = config.to_str().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let dir = tempfile::tempdir().unwrap();
        for cmd in [vec!["experiment", "collision_exponential"], vec!["gallery"]] {
            let mut args = vec!["--config", config, "--seed", "11", "--threads", threads];
            args.extend(cmd);
            let code = shflab(dir.path(), &args);
            assert!(code == 0 || code == 2, "exit {code}");
        }
        outputs.push(snapshot(dir.path()));
    }
    assert!(outputs[0].iter().any(|(n, _)| n.ends_with(".pgm")));
    assert!(outputs[0].iter().any(|(n, _)| n == "collision_exponential.json"));
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn config_round_trips() {
    let mut cfg = RunConfig::default();
    cfg.seed = 99;
    cfg.format = Format::Pgm;
    cfg.threads = Some(2);
    cfg.moments.theta = Some(-0.5);
    cfg.kernel.rs = vec![0.1, 0.2];
    cfg.experiments.edwards_wilkinson.beta_hat = 0.3;
    let toml_text = cfg.to_toml().unwrap();
    assert_eq!(RunConfig::from_toml(&toml_text).unwrap(), cfg);
    let json_text = cfg.to_json().unwrap();
    assert_eq!(RunConfig::from_json(&json_text).unwrap(), cfg);
    assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    assert!(RunConfig::from_toml("unknown_key = 1").is_err());
}

#[test]
fn json_config_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.dickman.t_max = 0.5;
    cfg.dickman.step = 0.1;
    let path = dir.path().join("run.json");
    fs::write(&path, cfg.to_json().unwrap()).unwrap();
    assert_eq!(shflab(dir.path(), &["--config", path.to_str().unwrap(), "dickman"]), EXIT_OK);
    let (_, rows) = read_csv(&dir.path().join("dickman.csv"));
    assert_eq!(rows.len(), 5);
}
