use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn distmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distmc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is one JSON object")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const DUPLICATES: &str = "row,col,value
a,x,1
a,x,2
a,y,3
a,y,4
a,z,5
a,z,6
b,x,2
b,x,1
b,y,4
b,y,3
c,x,10
c,x,11
c,y,30
c,y,31
c,z,50
c,z,51
";

#[test]
fn duplicate_row_supplies_the_missing_entry() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "dup.csv", DUPLICATES);
    for extra in [&["--eta", "0"][..], &[][..]] {
        let mut args = vec!["impute", "-i", p(&input), "--row", "b", "--col", "z"];
        args.extend_from_slice(extra);
        let out = distmc(&args);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let v = json(&out);
        assert_eq!(v["result"]["estimate"]["values"], serde_json::json!([5.0, 6.0]));
        assert_eq!(v["result"]["neighbors"][0]["row"], "a");
        assert_eq!(v["config"]["target"], serde_json::json!(["b", "z"]));
    }
}

#[test]
fn all_missing_on_a_full_panel_is_empty() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "full.csv", "row,col,value\na,x,1\nb,x,2\n");
    let out = distmc(&["impute", "-i", p(&input), "--all-missing", "--eta", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["cells"], serde_json::json!([]));
    assert_eq!(v["config"]["all_missing"], true);
}

#[test]
fn all_missing_imputes_each_gap() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "dup.csv", DUPLICATES);
    let out = distmc(&["impute", "-i", p(&input), "--all-missing", "--eta", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let cells = json(&out)["result"]["cells"].as_array().unwrap().clone();
    assert_eq!(cells.len(), 1);
    assert_eq!(cells[0]["row"], "b");
}

#[test]
fn malformed_rows_exit_one_with_a_line_number() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "bad.csv", "row,col,value\na,x,1\na,x,oops\n");
    let out = distmc(&["impute", "-i", p(&input), "--all-missing"]);
    assert_eq!(out.status.code(), Some(1));
    let e = stderr_json(&out);
    assert_eq!(e["error"], "parse");
    assert_eq!(e["line"], 3);
}

#[test]
fn missing_neighbors_exit_two_unless_falling_back() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "dup.csv", DUPLICATES);
    let out = distmc(&[
        "impute",
        "-i",
        p(&input),
        "--row",
        "b",
        "--col",
        "z",
        "--eta",
        "0",
        "--min-overlap",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_json(&out);
    assert_eq!(
        (e["error"].as_str(), e["row"].as_str(), e["col"].as_str()),
        (Some("no_neighbors"), Some("b"), Some("z"))
    );
    assert!(out.stdout.is_empty());

    let shifted = DUPLICATES.replace("a,x,1\n", "a,x,1.5\n");
    let input = write(&dir, "shifted.csv", &shifted);
    let strict = distmc(&["impute", "-i", p(&input), "--row", "b", "--col", "z", "--eta", "0"]);
    assert_eq!(strict.status.code(), Some(2));
    let out = distmc(&[
        "impute",
        "-i",
        p(&input),
        "--row",
        "b",
        "--col",
        "z",
        "--eta",
        "0",
        "--fallback-nearest",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["fallback_used"], true);
    assert_eq!(v["result"]["neighbors"].as_array().unwrap().len(), 1);
    assert_eq!(v["config"]["policy"]["min_neighbors"], 1);
}

#[test]
fn unknown_target_exits_one() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "dup.csv", DUPLICATES);
    let out = distmc(&["impute", "-i", p(&input), "--row", "nobody", "--col", "z"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "bad_target");
}

#[test]
fn json_panels_are_accepted() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "panel.json",
        r#"{"rows":["a","b"],"cols":["x","y"],"cells":[[[1.0,2.0],[7.0]],[[2.0,1.0],null]]}"#,
    );
    let out = distmc(&["impute", "-i", p(&input), "--row", "b", "--col", "y", "--eta", "0"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["result"]["estimate"]["values"], serde_json::json!([7.0]));
}

fn clustered_panel() -> String {
    let mut text = String::from("row,col,value\n");
    for i in 0..9 {
        for j in 0..4 {
            if (i, j) == (0, 0) {
                continue;
            }
            for k in 0..30 {
                let x = (i % 3) as f64 * 5.0 + j as f64 + (k as f64 * 0.37 + i as f64 * 0.11).sin();
                text.push_str(&format!("r{i},c{j},{x}\n"));
            }
        }
    }
    text
}

#[test]
fn simultaneous_bands_split_alpha() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "panel.csv", &clustered_panel());
    for method in ["kde", "bootstrap"] {
        let out = distmc(&[
            "bands",
            "-i",
            p(&input),
            "--row",
            "r0",
            "--col",
            "c0",
            "--levels",
            "99",
            "--simultaneous",
            "--method",
            method,
            "--budget",
            "10",
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let band = &json(&out)["result"]["band"];
        assert_eq!(band["levels"].as_array().unwrap().len(), 99);
        assert!((band["per_level_alpha"].as_f64().unwrap() - 0.05 / 99.0).abs() < 1e-18);
        let lower = band["lower"].as_array().unwrap();
        let upper = band["upper"].as_array().unwrap();
        assert!(lower.iter().zip(upper).all(|(l, u)| l.as_f64() <= u.as_f64()));
    }
}

#[test]
fn tune_reports_every_candidate() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "panel.csv", &clustered_panel());
    let out = distmc(&[
        "tune",
        "-i",
        p(&input),
        "--row",
        "r0",
        "--col",
        "c0",
        "--budget",
        "7",
        "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["trials"].as_array().unwrap().len(), 7);
    assert_eq!(v["seed"], 3);
    assert_eq!(v["config"]["threshold"]["budget"], 7);
}

#[test]
fn conflicting_flags_are_rejected() {
    let out = distmc(&["impute", "-i", "x.csv", "--eta", "1", "--budget", "3", "--all-missing"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot be used with"));
}

#[test]
fn simulate_embeds_config_and_reproduces_bytes() {
    let dir = TempDir::new().unwrap();
    let config = write(
        &dir,
        "spec.json",
        r#"{
            "dgp": {"kind": {"model": "heteroscedastic"}, "base": {"family": "uniform"},
                    "location_range": [-5.0, 5.0], "scale_range": [1.0, 5.0],
                    "n_per_entry": [20], "seed": 0},
            "n_rows": 12, "n_cols": 4,
            "sweep": {"variable": "n_samples", "values": [10, 40]},
            "trials": 3,
            "eta": {"mode": "fixed", "eta": "inf"},
            "baseline_resamples": 5,
            "seed": 11
        }"#,
    );
    let first = dir.path().join("a.json");
    let csv = dir.path().join("a.csv");
    let out = distmc(&["simulate", "--config", p(&config), "-o", p(&first), "--csv", p(&csv)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&fs::read(&first).unwrap()).unwrap();
    assert_eq!(v["seed"], 11);
    assert_eq!(v["config"]["eta"]["eta"], "inf");
    let table = fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("value,x,method,trials,failed,mean_error,std_error,mean_neighbors\n"));
    assert_eq!(table.lines().count(), 5);

    let echoed = write(&dir, "echo.json", &v["config"].to_string());
    let second = dir.path().join("b.json");
    let out = distmc(&["simulate", "--config", p(&echoed), "-o", p(&second)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
}

#[test]
fn help_exits_zero() {
    let out = distmc(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("impute"));
}

#[test]
fn verify_barycenter_error_small_grid() {
    let out = distmc(&[
        "verify",
        "appendix-d",
        "--m",
        "1,5",
        "--n",
        "5,20",
        "--trials",
        "2000",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["rows"].as_array().unwrap().len(), 4);
    assert!(v["result"]["max_abs_z"].as_f64().unwrap() < 4.0);
}

#[test]
fn verify_brute_force_agrees() {
    let out = distmc(&["verify", "brute-force", "--instances", "500"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["result"]["max_rel_gap_equal_n"].as_f64().unwrap() <= 1e-12);
    assert!(v["result"]["max_rel_gap_general"].as_f64().unwrap() <= 1e-12);
}
