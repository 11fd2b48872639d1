use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn carleman(args: &[&str], config: &str, dir: &Path) -> Output {
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_carleman"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn weights_analyze_geometric_exponential() {
    let dir = tempfile::tempdir().unwrap();
    let out = carleman(&["weights", "analyze"], "weights.kappa = 1\nweights.p = 1/2\n", dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["mu_verdict"], "infinite");
    assert_eq!(v["result"]["regularity_branch"], "branch1");
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["config"]["weights.p"], "1/2");
    assert_eq!(v["config"]["weights.kind"], "geometric-exponential");
}

#[test]
fn prop15_sweep_matches_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = carleman(&["tower", "prop15"], "tower.r = 1/4\ntower.n_max = 8\ntower.p = 1/2\n", dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let reports = v["result"]["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 9);
    for r in reports {
        let r = &r["report"];
        assert_eq!(r["sup_match"], true);
        assert_eq!(r["lp_exact_match"], true);
        assert_eq!(r["structural_match"], true);
    }
}

#[test]
fn malformed_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = carleman(&["weights", "analyze"], "weights.kappa = 1\nweights.p = 1.5\n", dir.path());
    assert_eq!(out.status.code(), Some(3));
    let out = carleman(&["weights", "analyze"], "not a config line\n", dir.path());
    assert_eq!(out.status.code(), Some(3));
    let out = carleman(&["approx", "beta"], "weights.kappa = 1\nweights.p = 1/2\napprox.schedule = 1/10, 1/5\n", dir.path());
    assert_eq!(out.status.code(), Some(3));
    let out = carleman(&["tower", "nonsense"], "", dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn reports_are_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "tower.samples = 3\ntower.n_max = 4\ntower.p = 1/2, 1/3\n";
    let a = carleman(&["tower", "prop15", "--seed", "7"], cfg, dir.path());
    let b = carleman(&["tower", "prop15", "--seed", "7"], cfg, dir.path());
    let c = carleman(&["tower", "prop15", "--seed", "8"], cfg, dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(json(&a)["seed"], 7);
}

#[test]
fn out_dir_receives_csv_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("reports");
    let out = carleman(
        &["tower", "sandwich", "--format", "csv", "--out", out_dir.to_str().unwrap()],
        "tower.n_max = 2\n",
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let names: Vec<String> =
        std::fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(names, vec!["tower_sandwich.csv".to_string()]);
    let text = std::fs::read_to_string(out_dir.join("tower_sandwich.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,depth,ratio,lower,upper,delta,verdict"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn short_beta_lift_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "weights.kappa = 1\nweights.p = 1/2\napprox.n_trunc = 3\napprox.schedule = 1/5, 1/10\n";
    let out = carleman(&["approx", "beta", "--format", "csv"], cfg, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn unreachable_mollifier_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "weights.kind = tempered\nweights.kappa = 1\nweights.p = 1/2\nmollifier.depth = 2\n";
    let out = carleman(&["mollifier", "build"], cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
}
