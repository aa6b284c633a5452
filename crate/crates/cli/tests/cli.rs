use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn dpnv(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpnv")).args(args).current_dir(dir).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn simulate(dir: &Path, n: &str, seed: &str, name: &str) -> PathBuf {
    let out = dpnv(&["simulate", "--n", n, "--dist", "normal", "--seed", seed, "--out", name], dir);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir.join(name)
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "400", "1", "a.csv");
    let b = simulate(dir.path(), "400", "1", "b.csv");
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "demand,x1,x2,x3,x4");
    assert_eq!(lines.count(), 400);
    let c = simulate(dir.path(), "400", "2", "c.csv");
    assert_ne!(text, fs::read_to_string(&c).unwrap());
}

#[test]
fn simulate_rejects_unknown_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let out = dpnv(&["simulate", "--n", "10", "--dist", "cauchy", "--out", "x.csv"], dir.path());
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    for valid in ["normal", "t3", "mixture"] {
        assert!(err.contains(valid), "{err}");
    }
}

#[test]
fn fit_private_writes_certificate() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "300", "3", "data.csv");
    let args = [
        "fit",
        "--input",
        "data.csv",
        "--b",
        "50",
        "--h",
        "30",
        "--mu",
        "0.5",
        "--T",
        "10",
        "--B",
        "2",
        "--kernel",
        "gaussian",
        "--bandwidth",
        "auto",
        "--seed",
        "7",
        "--out",
        "fit.json",
    ];
    let out = dpnv(&args, dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let fit: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    assert_eq!(fit["beta"].as_array().unwrap().len(), 5);
    let cert = &fit["certificate"];
    assert_eq!(cert["mu"], 0.5);
    // tau_bar = 50/80; sigma = ceil(2 * 0.625 * 2 * sqrt(10) / 0.5) = 16
    assert_eq!(cert["sigma"], 16.0);
    assert_eq!(cert["T"], 10);
    assert_eq!(fit["diagnostics"]["step_sizes"].as_array().unwrap().len(), 10);

    // same seed, same output
    let again = dpnv(&[&args[..args.len() - 1], &["fit2.json"]].concat(), dir.path());
    assert_eq!(code(&again), 0);
    assert_eq!(
        fs::read_to_string(dir.path().join("fit.json")).unwrap(),
        fs::read_to_string(dir.path().join("fit2.json")).unwrap()
    );
}

#[test]
fn fit_nonprivate_has_no_certificate() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "200", "4", "data.csv");
    let out = dpnv(&["fit", "--input", "data.csv", "--tau", "0.5", "--nonprivate", "--out", "fit.json"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let fit: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    assert!(fit["certificate"].is_null());
    assert_eq!(fit["method"], "smoothed_erm");
}

#[test]
fn fit_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "100", "5", "data.csv");
    let base = ["fit", "--input", "data.csv", "--b", "50", "--h", "30", "--out", "fit.json"];

    let zero_mu = dpnv(&[&base[..], &["--mu", "0"]].concat(), dir.path());
    assert_eq!(code(&zero_mu), 2, "{}", stderr(&zero_mu));

    let weak = dpnv(&[&base[..], &["--mu", "0.5", "--sigma", "3"]].concat(), dir.path());
    assert_eq!(code(&weak), 4, "{}", stderr(&weak));
    assert!(!dir.path().join("fit.json").exists());

    let missing = dpnv(&["fit", "--input", "nope.csv", "--tau", "0.5", "--mu", "1", "--out", "f.json"], dir.path());
    assert_eq!(code(&missing), 3);

    let no_cost = dpnv(&["fit", "--input", "data.csv", "--mu", "1", "--out", "f.json"], dir.path());
    assert_eq!(code(&no_cost), 2);
}

#[test]
fn evaluate_scores_a_fit() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "300", "6", "train.csv");
    simulate(dir.path(), "500", "60", "test.csv");
    let out = dpnv(&["fit", "--input", "train.csv", "--tau", "0.5", "--nonprivate", "--out", "fit.json"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = dpnv(&["evaluate", "--fit", "fit.json", "--input", "test.csv"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["n"], 500);
    let cost = report["oos_cost"].as_f64().unwrap();
    // Median newsvendor with N(0,1) errors: 0.5 E|eps| = 0.399 at the oracle.
    assert!(cost > 0.3 && cost < 0.6, "{cost}");
}

#[test]
fn privacy_reports_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = dpnv(&["privacy", "--mu", "0.5", "--T", "10", "--B", "2", "--tau", "0.5"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["mu", "sigma", "T", "B", "tau_bar", "epsilon", "delta"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["sigma"], 13.0);
    assert_eq!(v["epsilon"], 0.5);

    let weak = dpnv(&["privacy", "--mu", "0.5", "--sigma", "2"], dir.path());
    assert_eq!(code(&weak), 4);
    let bad = dpnv(&["privacy", "--mu", "-1"], dir.path());
    assert_eq!(code(&bad), 2);
}

#[test]
fn bench_smoke_is_fast_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs_dir().join("table2.toml");
    let config = config.to_str().unwrap();
    let run = |rows: &str, jobs: &str| {
        let start = Instant::now();
        let out = dpnv(
            &["bench", config, "--reps", "1", "--n", "100", "--jobs", jobs, "--rows", rows, "--aggregates", "agg.csv"],
            dir.path(),
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(start.elapsed().as_secs_f64() < 10.0, "bench took {:?}", start.elapsed());
        let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
        let resolved = &summary["resolved"][0];
        assert!(resolved["bandwidth"].as_f64().unwrap() > 0.0);
        assert!(resolved["eta0"].as_f64().unwrap() > 0.0);
        fs::read(dir.path().join(rows)).unwrap()
    };
    let a = run("rows_a.csv", "0");
    let b = run("rows_b.csv", "1");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("rep_id,n,mu_label,tau,dist_label,l2_error,sigma_error,regret,oos_cost\n"));
    assert_eq!(text.lines().count(), 1 + 4);
    let agg = fs::read_to_string(dir.path().join("agg.csv")).unwrap();
    assert!(agg.starts_with("dist,n,tau,metric,stat,nonprivate,mu_0.9,mu_0.5,mu_0.3\n"), "{agg}");
}

#[test]
fn bench_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dpnv(&["bench", "absent.toml"], dir.path());
    assert_eq!(code(&missing), 3);

    fs::write(dir.path().join("bad.toml"), "[problem]\ntaus = [0.5]\n[fit]\nlearning_rate = 0.1\n").unwrap();
    let bad = dpnv(&["bench", "bad.toml"], dir.path());
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains("learning_rate"), "{}", stderr(&bad));
}

#[test]
fn bench_split_config_resolves_relative_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs_dir().join("surrogate_splits.toml");
    let out = dpnv(
        &["bench", config.to_str().unwrap(), "--reps", "2", "--rows", "r.csv", "--aggregates", "a.csv"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 4);
}
