use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ergolab"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn rates_calc_reports_quarter() {
    let o = run(&["--config", configs().join("rates-calc.json").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["outputs"]["delta"].as_f64(), Some(0.25));
    assert_eq!(doc["outputs"]["kappaOpt"].as_f64(), Some(0.5));
}

#[test]
fn zero_observable_gives_zero_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "z.json",
        r#"{"experiment":"twisted","system":{"type":"Rotation","params":{"alpha":[0.6180339887498949]}},
            "observable":[],"point":[0.3],"grid":[8,16,32],"params":{"a":[0.1]},"seed":2}"#,
    );
    let o = run(&["--config", cfg.to_str().unwrap(), "--no-timestamp"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&stdout(&o));
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert_eq!(r[6].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn expsum_oracle_within_ten_bounds() {
    let o = run(&["--config", configs().join("expsum-golden.json").to_str().unwrap(), "--no-timestamp"]);
    assert!(o.status.success());
    for r in data_rows(&stdout(&o)) {
        let (measured, bound) = (r[6].parse::<f64>().unwrap(), r[8].parse::<f64>().unwrap());
        assert!(measured <= 10.0 * bound, "{measured} > 10·{bound}");
    }
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = [
        r#"{"experiment":"nonsense"}"#,
        r#"{"experiment":"beta","grid":[4,8]}"#,
        r#"{"experiment":"beta","system":{"type":"Rotation","params":{"alpha":[0.5]}},
            "observable":[{"k":[1],"re":1,"im":0}],"grid":[8,4]}"#,
        r#"{"experiment":"beta","unknown":1}"#,
        "not json",
    ];
    for (i, text) in bad.iter().enumerate() {
        let cfg = write(dir.path(), &format!("b{i}.json"), text);
        let o = run(&["--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "config {i}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn missing_files_exit_4() {
    let o = run(&["--config", "/nonexistent/cfg.json"]);
    assert_eq!(o.status.code(), Some(4));
    let o = run(&["--config", configs().join("rates-calc.json").to_str().unwrap(), "--out", "/nonexistent/dir/out.json"]);
    assert_eq!(o.status.code(), Some(4));
    let o = run(&["report", "/nonexistent/a.csv"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn numeric_failure_keeps_partial_csv() {
    let dir = tempfile::tempdir().unwrap();
    // two pairs cannot pin the β term down at the larger T
    let cfg = write(
        dir.path(),
        "v.json",
        r#"{"experiment":"audit-vprop1","system":{"type":"ToralAutomorphism","params":{"M":[[2,1],[1,1]]}},
            "observable":[{"k":[1,0],"re":1,"im":0},{"k":[-1,0],"re":1,"im":0}],"point":[0.1,0.2],
            "grid":[64,128,256,512],"params":{"pairs":2},"seed":1}"#,
    );
    let out = dir.path().join("v.csv");
    let o = run(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().last().unwrap().starts_with("# PARTIAL"));
    let rows = data_rows(&text);
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[4] == "64"));
    // report accepts partial files and flags them
    let o = run(&["report", out.to_str().unwrap()]);
    assert!(o.status.success());
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["partial"], Value::Bool(true));
}

const BETA: &str = r#"{"experiment":"beta","system":{"type":"Rotation","params":{"alpha":[0.6180339887498949]}},
    "observable":[{"k":[1],"re":1,"im":0}],"point":[0.1],"grid":GRID,"seed":1}"#;

#[test]
fn report_merges_and_fits() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for (i, g) in ["[16,64,256]", "[32,128,512]"].iter().enumerate() {
        let cfg = write(dir.path(), &format!("c{i}.json"), &BETA.replace("GRID", g));
        let out = dir.path().join(format!("c{i}.csv"));
        let o = run(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        csvs.push(out);
    }
    let paths: Vec<&str> = csvs.iter().map(|p| p.to_str().unwrap()).collect();
    // different grids mean different config hashes
    let o = run(&[&["report"], &paths[..]].concat());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&[&["report", "--fit", "--allow-mixed"], &paths[..]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["rows"].as_u64(), Some(6));
    let st = &doc["statistics"][0];
    assert_eq!(st["count"].as_u64(), Some(6));
    assert_eq!(st["tMin"].as_f64(), Some(16.0));
    // bounded-type rotation: the ergodic average of a character decays like 1/T
    let slope = st["slope"].as_f64().unwrap();
    assert!(slope < -0.7, "slope {slope}");

    let pred = dir.path().join("pred.json");
    let o = run(&["--config", configs().join("rates-calc.json").to_str().unwrap(), "--out", pred.to_str().unwrap()]);
    assert!(o.status.success());
    let o = run(&[&["report", "--fit", "--allow-mixed", "--predicted", pred.to_str().unwrap()], &paths[..]].concat());
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let st = &doc["statistics"][0];
    assert_eq!(st["predictedExponent"].as_f64(), Some(0.25));
    assert!((st["ratio"].as_f64().unwrap() + slope / 0.25).abs() < 1e-12);
}

#[test]
fn seed_override_changes_hash_and_seed_column() {
    let cfg = configs().join("twisted-cat.json");
    let a = run(&["--config", cfg.to_str().unwrap(), "--no-timestamp"]);
    let b = run(&["--config", cfg.to_str().unwrap(), "--no-timestamp", "--seed", "99"]);
    let c = run(&["--config", cfg.to_str().unwrap(), "--no-timestamp"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(stdout(&a), stdout(&c));
    let (ra, rb) = (data_rows(&stdout(&a)), data_rows(&stdout(&b)));
    assert_eq!(rb[0][2], "99");
    assert_ne!(ra[0][1], rb[0][1]);
    // the starting point is random, so the values move too
    assert_ne!(ra[0][6], rb[0][6]);
}

#[test]
fn timestamp_line_is_optional() {
    let cfg = configs().join("beta-rotation.json");
    let with = stdout(&run(&["--config", cfg.to_str().unwrap()]));
    let without = stdout(&run(&["--config", cfg.to_str().unwrap(), "--no-timestamp"]));
    assert!(with.starts_with("# generated unix="));
    assert!(without.starts_with("experiment,"));
    assert_eq!(data_rows(&with), data_rows(&without));
}
