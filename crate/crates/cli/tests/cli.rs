//! End-to-end runs of the `tau-kit` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_tau-kit");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .env_remove("TAUKIT_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_env(dir: &Path, args: &[&str], key: &str, value: &str) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .env(key, value)
        .args(args)
        .output()
        .expect("binary runs")
}

fn error_doc(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().find(|l| l.starts_with("{\"error\"")).expect("error JSON on stderr");
    serde_json::from_str(line).expect("error JSON parses")
}

/// Writes a simulated case file and returns its path.
fn cases(dir: &Path) -> PathBuf {
    let out = run(dir, &["simulate", "--seed", "11", "--population", "2000", "--out", "sim"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("sim/cases.csv")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).expect("file exists")).expect("valid JSON")
}

fn schema_errors(doc: &Value) -> Vec<String> {
    let schema: Value =
        serde_json::from_str(include_str!("../schema/result.schema.json")).expect("schema parses");
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    validator.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path)).collect()
}

const CURVE: [&str; 4] = ["--relate", "5:20", "--bands", "width:500:10"];

#[test]
fn tau_writes_tables_plot_and_plot_data() {
    let tmp = TempDir::new().unwrap();
    let cases = cases(tmp.path());
    let mut args = vec!["tau", "--cases", cases.to_str().unwrap(), "--R", "40", "--seed", "3", "--out", "t"];
    args.extend(CURVE);
    let out = run(tmp.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["curve.csv", "result.json", "curve.svg", "curve_plot.csv"] {
        assert!(tmp.path().join("t").join(f).is_file(), "missing {f}");
    }
    let doc = read_json(&tmp.path().join("t/result.json"));
    assert_eq!(doc["meta"]["seed"], 3);
    assert_eq!(doc["meta"]["R"], 40);
    assert_eq!(doc["bands"].as_array().unwrap().len(), 10);
    assert_eq!(doc["envelope"]["kind"], "bootstrap_percentile");
    let svg = fs::read_to_string(tmp.path().join("t/curve.svg")).unwrap();
    assert!(svg.contains("class=\"reference\""));
    assert!(svg.contains("<metadata>"));
    let csv = fs::read_to_string(tmp.path().join("t/curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert!(csv.starts_with("band_lo,band_hi,x,tau,status,related,n_unrelated"));
}

#[test]
fn every_result_document_matches_the_schema() {
    let tmp = TempDir::new().unwrap();
    let cases = cases(tmp.path());
    let c = cases.to_str().unwrap();
    let runs: [(&str, Vec<&str>); 3] = [
        ("tau", vec!["tau", "--cases", c, "--estimator", "prev", "--convention", "midpoint"]),
        ("range", vec!["range", "--cases", c, "--R", "30"]),
        ("test", vec!["test", "--cases", c, "--R", "19"]),
    ];
    for (name, mut args) in runs {
        args.extend(CURVE);
        args.extend(["--out", name]);
        let out = run(tmp.path(), &args);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let doc = read_json(&tmp.path().join(name).join("result.json"));
        assert_eq!(doc["command"], name);
        let errors = schema_errors(&doc);
        assert!(errors.is_empty(), "{name}: {errors:?}");
    }
}

#[test]
fn schema_rejects_a_malformed_document() {
    let doc = serde_json::json!({ "command": "tau", "estimator": "odds" });
    assert!(!schema_errors(&doc).is_empty());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cases = cases(tmp.path());
    for dir in ["a", "b"] {
        let mut args = vec!["range", "--cases", cases.to_str().unwrap(), "--R", "25", "--seed", "9", "--out", dir];
        args.extend(CURVE);
        assert!(run(tmp.path(), &args).status.success());
    }
    for f in ["curve.csv", "result.json", "curve.svg", "curve_plot.csv"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
}

#[test]
fn seed_falls_back_to_the_environment() {
    let tmp = TempDir::new().unwrap();
    let cases = cases(tmp.path());
    let mut args = vec!["tau", "--cases", cases.to_str().unwrap(), "--R", "5", "--out", "e"];
    args.extend(CURVE);
    assert!(run_env(tmp.path(), &args, "TAUKIT_SEED", "77").status.success());
    assert_eq!(read_json(&tmp.path().join("e/result.json"))["meta"]["seed"], 77);

    let out = run_env(tmp.path(), &args, "TAUKIT_SEED", "seventy");
    assert_eq!(out.status.code(), Some(2));

    args[6] = "z";
    assert!(run(tmp.path(), &args).status.success());
    assert_eq!(read_json(&tmp.path().join("z/result.json"))["meta"]["seed"], 0);
}

#[test]
fn rate_without_episodes_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cases = cases(tmp.path());
    let out = run(tmp.path(), &["tau", "--cases", cases.to_str().unwrap(), "--relate", "5:20", "--estimator", "rate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_doc(&out);
    assert_eq!(err["error"]["kind"], "config");
    assert_eq!(err["error"]["exit_code"], 2);
}

#[test]
fn rate_runs_on_a_panel() {
    let tmp = TempDir::new().unwrap();
    let mut persons = String::from("id,entry,exit,x,y\n");
    let mut episodes = String::from("person_id,onset,recovery\n");
    for p in 0..30 {
        persons.push_str(&format!("p{p},0,100,{},{}\n", (p % 6) * 10, (p / 6) * 10));
        episodes.push_str(&format!("p{p},{},{}\n", 2 + (p * 7) % 60, 5 + (p * 7) % 60));
    }
    fs::write(tmp.path().join("persons.csv"), persons).unwrap();
    fs::write(tmp.path().join("episodes.csv"), episodes).unwrap();
    let out = run(
        tmp.path(),
        &[
            "tau", "--estimator", "rate", "--persons", "persons.csv", "--episodes", "episodes.csv",
            "--relate", "0:10", "--bands", "width:60:3", "--format", "json",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&tmp.path().join("result.json"));
    assert_eq!(doc["meta"]["reference_label"], "pair_time");
    assert!(!tmp.path().join("curve.csv").exists(), "json format writes no table");
    assert!(schema_errors(&doc).is_empty());
}

#[test]
fn malformed_data_exits_with_data_code() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.csv"), "id,x,y,t,status\na,1,2,3,case\nb,oops,2,3,case\n").unwrap();
    let out = run(tmp.path(), &["tau", "--cases", "bad.csv", "--relate", "0:5"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_doc(&out)["error"]["kind"], "data");
}

#[test]
fn all_pairs_related_exits_with_degeneracy_code() {
    let tmp = TempDir::new().unwrap();
    let mut csv = String::from("id,x,y,t,status\n");
    for i in 0..6 {
        csv.push_str(&format!("c{i},{},0,{},case\n", i * 3, i));
    }
    fs::write(tmp.path().join("c.csv"), csv).unwrap();
    let out = run(tmp.path(), &["tau", "--cases", "c.csv", "--relate", "0:100"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_doc(&out)["error"]["kind"], "numeric_degeneracy");
}

#[test]
fn unknown_flag_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(tmp.path(), &["tau", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_doc(&out)["error"]["kind"], "config");
}

#[test]
fn map_writes_table_and_heatmap() {
    let tmp = TempDir::new().unwrap();
    let cases = cases(tmp.path());
    let out = run(
        tmp.path(),
        &["map", "--cases", cases.to_str().unwrap(), "--dbands", "width:500:5", "--tbands", "width:60:4", "--out", "m"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("m/map.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 4);
    let svg = fs::read_to_string(tmp.path().join("m/heatmap.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn simulate_records_seed_and_tree() {
    let tmp = TempDir::new().unwrap();
    cases(tmp.path());
    let info = read_json(&tmp.path().join("sim/simulation.json"));
    assert_eq!(info["seed"], 11);
    assert_eq!(info["model"], "epidemic");
    let tree = read_json(&tmp.path().join("sim/tree.json"));
    assert!(tree.as_array().is_some_and(|t| !t.is_empty()));

    let out = run(tmp.path(), &["simulate", "--model", "null", "--n", "40", "--seed", "1", "--out", "n"]);
    assert!(out.status.success());
    let text = fs::read_to_string(tmp.path().join("n/cases.csv")).unwrap();
    assert_eq!(text.lines().count(), 41);
}

#[test]
fn bands_previews_without_writing() {
    let tmp = TempDir::new().unwrap();
    let out = run(tmp.path(), &["bands", "--bands", "discs:10,20,40", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("lo,hi,pairs"));
    assert_eq!(text.lines().count(), 4);
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);

    let out = run(tmp.path(), &["bands", "--bands", "eqcount:4"]);
    assert_eq!(out.status.code(), Some(2));
}
