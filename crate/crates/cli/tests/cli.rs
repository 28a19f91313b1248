use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn dlt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlt"))
        .current_dir(dir)
        .env_remove("DLT_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn lattice_info_on_unit_square_level_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "sq.toml", "levels = [2]\n\n[domain]\nkind = \"unit-square\"\n");
    let out = dlt(tmp.path(), &["lattice-info", "--config", &cfg, "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.contains("9 sites, 8 on the graph boundary"), "{stdout}");
    let report = json(&tmp.path().join("o/lattice_info.json"));
    assert_eq!(report["levels"][0]["sites"], 9);
    assert_eq!(report["levels"][0]["boundary_sites"], 8);
    let csv = fs::read_to_string(tmp.path().join("o/lattice_sites_k2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
}

#[test]
fn malformed_config_exits_two_with_line_number() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "levels = [3]\n\n[robin]\ng = \"1 +\"\n");
    let out = dlt(tmp.path(), &["robin-solve", "--config", &cfg, "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("bad.toml:4:"), "{stderr}");

    let cfg = write(tmp.path(), "syntax.toml", "levels = [3]\nhorizon = \n");
    let out = dlt(tmp.path(), &["simulate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("syntax.toml:2:"));
}

#[test]
fn invalid_inputs_exit_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "dim.toml", "[robin]\ng = \"y\"\n");
    let out = dlt(tmp.path(), &["robin-solve", "--config", &cfg, "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = write(tmp.path(), "biased.toml", "[walker]\nkind = \"biased\"\nh = \"x\"\n");
    let out = dlt(tmp.path(), &["llt-check", "--config", &cfg, "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "sim.toml", "levels = [4]\npaths = 300\nseed = 99\n");
    for (dir, threads) in [("a", "1"), ("b", "4")] {
        let out = dlt(tmp.path(), &["simulate", "--config", &cfg, "--out", dir, "--threads", threads]);
        assert!(out.status.success());
    }
    for name in ["simulate.json", "simulate.csv", "path_0.csv", "local_time_0.csv"] {
        let a = fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    let out = dlt(tmp.path(), &["simulate", "--config", &cfg, "--out", "c", "--seed", "100"]);
    assert!(out.status.success());
    assert_ne!(fs::read(tmp.path().join("a/simulate.csv")).unwrap(), fs::read(tmp.path().join("c/simulate.csv")).unwrap());
}

#[test]
fn example54_reports_both_ratios() {
    let tmp = TempDir::new().unwrap();
    let out = dlt(tmp.path(), &["example54", "--out", "o"]);
    assert!(out.status.success());
    let report = json(&tmp.path().join("o/example54.json"));
    let levels = report["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 4);
    let top = levels.last().unwrap();
    assert_eq!(top["level"], 7);
    let expect = dlt_core::example54_ratios(&dlt_core::Domain::<f64>::rotated_square(), 7, 1.0, 2.0).unwrap();
    assert_eq!(top["ratio_naive"].as_f64(), Some(expect.ratio_naive));
    assert_eq!(top["ratio_occupation"].as_f64(), Some(expect.ratio_occupation));
}

#[test]
fn check_subcommands_report_verdicts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "m.toml", "levels = [3]\npaths = 2000\n\n[moments]\norders = [1]\nwindows = [[0.0, 0.5]]\n");
    let out = dlt(tmp.path(), &["moments-check", "--config", &cfg, "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let report = json(&tmp.path().join("o/moments_check.json"));
    assert_eq!(report["passed"], true);
    assert!(report["cases"][0]["continuum"].is_number());

    let cfg = write(tmp.path(), "r.toml", "levels = [4]\npaths = 2000\nhorizon = 0.2\n\n[robin]\ng = \"1\"\n");
    let out = dlt(tmp.path(), &["robin-solve", "--config", &cfg, "--out", "r"]);
    assert!(out.status.success());
    let report = json(&tmp.path().join("r/robin_solve.json"));
    for key in ["k", "x", "estimate", "se", "oracle", "rel_err", "exact_discrete"] {
        assert!(!report[key].is_null(), "{key} missing");
    }
}
