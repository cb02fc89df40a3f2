use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bsi_core::trainer::load_checkpoint;
use tempfile::TempDir;

fn bsi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsi"))
        .args(args)
        .env_remove("BSI_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = bsi(args);
    assert!(
        out.status.success(),
        "bsi {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Rows of a CSV file as (header, records).
fn csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header = lines
        .next()
        .unwrap()
        .split(',')
        .map(str::to_owned)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

const SMALL_TRAIN: [&str; 14] = [
    "--dataset",
    "two-atom",
    "--num-samples",
    "200",
    "--mlp-width",
    "8",
    "--mlp-depth",
    "1",
    "--embed-dim",
    "4",
    "--batch",
    "16",
    "--ema-start",
    "2",
];

fn train_small(out: &Path, steps: &str, extra: &[&str]) {
    let mut args = vec!["train", "--steps", steps, "--out", s(out)];
    args.extend(SMALL_TRAIN);
    args.extend(extra);
    ok(&args);
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    assert_eq!(bsi(&["train", "--steps", "1"]).status.code(), Some(2));
    assert_eq!(bsi(&["eval"]).status.code(), Some(2));
}

#[test]
fn bad_values_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "x.csv");
    assert_eq!(
        bsi(&["data", "--dataset", "nope", "--out", s(&out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        bsi(&["data", "--dim", "0", "--out", s(&out)]).status.code(),
        Some(2)
    );
    let ck = path(&dir, "c.ckpt");
    assert_eq!(
        bsi(&["train", "--batch", "0", "--out", s(&ck)])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn unreadable_checkpoint_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let ck = path(&dir, "junk.ckpt");
    std::fs::write(&ck, b"not a checkpoint").unwrap();
    let out = path(&dir, "s.csv");
    assert_eq!(
        bsi(&["sample", "--ckpt", s(&ck), "--out", s(&out)])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn one_step_training_writes_a_loadable_checkpoint_and_metrics() {
    let dir = TempDir::new().unwrap();
    let ck = path(&dir, "one.ckpt");
    train_small(&ck, "1", &[]);
    let loaded = load_checkpoint(&ck).unwrap();
    assert_eq!(loaded.step, 1);
    assert_eq!(loaded.spec.dim, 1);
    let (_, rows) = csv(&dir.path().join("one.ckpt.metrics.csv"));
    assert_eq!(rows.len(), 1);
}

#[test]
fn identical_flags_give_identical_checkpoints_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let a = path(&dir, "a.ckpt");
    let b = path(&dir, "b.ckpt");
    let c = path(&dir, "c.ckpt");
    train_small(&a, "5", &["--seed", "4"]);
    train_small(&b, "5", &["--seed", "4"]);
    train_small(&c, "5", &["--seed", "4", "--threads", "3"]);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_eq!(bytes, std::fs::read(&c).unwrap());

    let mut evals = Vec::new();
    for threads in ["1", "4"] {
        let out = path(&dir, &format!("eval{threads}.csv"));
        ok(&[
            "--threads",
            threads,
            "eval",
            "--ckpt",
            s(&a),
            "--num-samples",
            "300",
            "--out",
            s(&out),
        ]);
        evals.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(evals[0], evals[1]);
}

#[test]
fn sampling_zero_rows_writes_only_a_header() {
    let dir = TempDir::new().unwrap();
    let ck = path(&dir, "m.ckpt");
    train_small(&ck, "2", &[]);
    let out = path(&dir, "s.csv");
    ok(&[
        "sample",
        "--ckpt",
        s(&ck),
        "--num",
        "0",
        "--k",
        "8",
        "--out",
        s(&out),
    ]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "d0\n");

    let bin = path(&dir, "s.bin");
    ok(&[
        "sample",
        "--ckpt",
        s(&ck),
        "--num",
        "3",
        "--k",
        "8",
        "--format",
        "bin",
        "--out",
        s(&bin),
    ]);
    let bytes = std::fs::read(&bin).unwrap();
    assert_eq!(bytes.len(), 8 + 3 * 8);
    assert_eq!(u64::from_le_bytes(bytes[..8].try_into().unwrap()), 3);
}

#[test]
fn bfn_mode_rejects_other_initial_precisions() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "s.csv");
    let missing = path(&dir, "never-written.ckpt");
    let r = bsi(&[
        "sample",
        "--ckpt",
        s(&missing),
        "--mode",
        "bfn",
        "--lambda0",
        "0.5",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(2));

    // The checkpoint's own lambda0 of 0.01 is rejected too.
    let ck = path(&dir, "m.ckpt");
    train_small(&ck, "1", &[]);
    let r = bsi(&[
        "sample",
        "--ckpt",
        s(&ck),
        "--mode",
        "bfn",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(2));

    let ck1 = path(&dir, "m1.ckpt");
    train_small(&ck1, "1", &["--lambda0", "1"]);
    ok(&[
        "sample",
        "--ckpt",
        s(&ck1),
        "--mode",
        "bfn",
        "--k",
        "8",
        "--num",
        "4",
        "--out",
        s(&out),
    ]);
    assert_eq!(csv(&out).1.len(), 4);
}

#[test]
fn eval_report_is_internally_consistent() {
    let dir = TempDir::new().unwrap();
    let ck = path(&dir, "m.ckpt");
    train_small(&ck, "3", &[]);
    let out = path(&dir, "e.csv");
    ok(&[
        "eval",
        "--ckpt",
        s(&ck),
        "--dim",
        "1",
        "--num-samples",
        "100",
        "--out",
        s(&out),
    ]);
    let (header, rows) = csv(&out);
    assert_eq!(
        header.join(","),
        "bpd,lm_nats,lm_se,lr_nats,lr_se,n,num_samples,mc_measure,mc_recon"
    );
    assert_eq!(rows.len(), 1);
    let get = |name: &str| column(&header, &rows, name)[0];
    let recomputed = (get("lm_nats") + get("lr_nats")) / (std::f64::consts::LN_2 * get("n"));
    assert!((get("bpd") - recomputed).abs() <= 1e-12 * recomputed.abs().max(1.0));
    assert!(get("lm_se") > 0.0);
    assert_eq!(get("num_samples"), 100.0);

    let wrong_dim = bsi(&["eval", "--ckpt", s(&ck), "--dim", "2", "--out", s(&out)]);
    assert_eq!(wrong_dim.status.code(), Some(2));
}

#[test]
fn manifests_describe_existing_artifacts() {
    let dir = TempDir::new().unwrap();
    let ck = path(&dir, "m.ckpt");
    train_small(&ck, "2", &[]);
    let data = path(&dir, "d.csv");
    ok(&[
        "data",
        "--dataset",
        "two-atom",
        "--num-samples",
        "50",
        "--out",
        s(&data),
    ]);
    for primary in [&ck, &data] {
        let mut m = primary.as_os_str().to_owned();
        m.push(".manifest.json");
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(PathBuf::from(m)).unwrap()).unwrap();
        let artifacts = manifest["artifacts"].as_array().unwrap();
        assert!(!artifacts.is_empty());
        for a in artifacts {
            assert!(Path::new(a.as_str().unwrap()).exists(), "{a} missing");
        }
        let digest = manifest["input_sha256"].as_str().unwrap();
        assert_eq!(digest.len(), 64);
        assert!(digest.chars().all(|c| c.is_ascii_hexdigit()));
        assert!(manifest["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    }
    let mut m = data.as_os_str().to_owned();
    m.push(".manifest.json");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(PathBuf::from(m)).unwrap()).unwrap();
    let entropy = manifest["result"]["empirical_entropy_bits_per_dim"]
        .as_f64()
        .unwrap();
    assert!((0.8..=1.0).contains(&entropy), "two-atom entropy {entropy}");
}

#[test]
fn convergence_study_decreases_in_k() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "conv.csv");
    ok(&[
        "study",
        "convergence",
        "--dataset",
        "ones",
        "--dim",
        "4",
        "--num-samples",
        "1",
        "--ks",
        "10,100,1000",
        "--rounds",
        "2000",
        "--mc-inf",
        "200000",
        "--out",
        s(&out),
    ]);
    let (header, rows) = csv(&out);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3][0], "inf");
    let est = column(&header, &rows, "estimate");
    let se = column(&header, &rows, "std_error");
    for i in 0..3 {
        let slack = 3.0 * (se[i].powi(2) + se[i + 1].powi(2)).sqrt();
        assert!(
            est[i + 1] <= est[i] + slack,
            "estimate rose from {} to {}",
            est[i],
            est[i + 1]
        );
    }
    assert!(est[0] > est[2] + 3.0 * (se[0].powi(2) + se[2].powi(2)).sqrt());
}

#[test]
fn variance_study_shows_a_narrower_log_uniform_ratio() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "var.csv");
    ok(&[
        "study",
        "variance",
        "--dataset",
        "ones",
        "--dim",
        "2",
        "--num-samples",
        "1",
        "--out",
        s(&out),
    ]);
    let (header, rows) = csv(&out);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "uniform");
    let range = column(&header, &rows, "range");
    assert!(
        range[1] >= 1.0 && range[1] < 10.0,
        "log-uniform range {}",
        range[1]
    );
    assert!(range[0] > 1e6 * range[1]);
}

#[test]
fn h_curve_matches_the_identity_closed_form() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "h.csv");
    ok(&[
        "study",
        "h-curve",
        "--dataset",
        "standard-normal",
        "--dim",
        "3",
        "--num-samples",
        "50",
        "--points",
        "12",
        "--mc",
        "4000",
        "--out",
        s(&out),
    ]);
    let (header, rows) = csv(&out);
    assert_eq!(rows.len(), 12);
    let h = column(&header, &rows, "h");
    let se = column(&header, &rows, "h_se");
    let closed = column(&header, &rows, "h_identity");
    let worst = h
        .iter()
        .zip(&se)
        .zip(&closed)
        .map(|((h, se), c)| (h - c).abs() / se)
        .fold(0.0, f64::max);
    assert!(worst < 4.0, "worst |z| = {worst}");
}

#[test]
fn lambda0_sweep_reports_every_value() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "sweep.csv");
    ok(&[
        "study",
        "lambda0-sweep",
        "--predictor",
        "bayes",
        "--dataset",
        "two-atom",
        "--num-samples",
        "100",
        "--lambda0s",
        "0.01,1",
        "--k",
        "64",
        "--num-gen",
        "200",
        "--out",
        s(&out),
    ]);
    let (header, rows) = csv(&out);
    assert_eq!(rows.len(), 2);
    for hit in column(&header, &rows, "hit_rate") {
        assert!(hit > 0.95, "hit rate {hit}");
    }
}
