use std::fs;
use std::path::PathBuf;

use assert_cmd::Command;
use predicates::prelude::*;
use serde_json::Value;

fn fixture(name: &str) -> String {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    root.join(format!("{name}.json")).to_string_lossy().into_owned()
}

fn scr() -> Command {
    Command::cargo_bin("scr").unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = scr().args(args).assert().success().get_output().stdout.clone();
    String::from_utf8(out).unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    serde_json::from_str(&stdout(&all)).unwrap()
}

fn row<'a>(doc: &'a Value, node: &str) -> &'a Value {
    doc["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["node"] == node)
        .unwrap_or_else(|| panic!("no row for {node}"))
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

fn temp_file(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("scr-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path
}

#[test]
fn aggregate_toy_root_row() {
    let out = stdout(&["aggregate", "--tree", &fixture("toy_3x2")]);
    let root = out.lines().nth(2).unwrap();
    assert!(root.starts_with("bscr"));
    assert!(root.contains("257.05"), "{root}");
}

#[test]
fn aggregate_case_root_row() {
    let out = stdout(&[
        "aggregate",
        "--tree",
        &fixture("nonlife_case"),
        "--precision",
        "0",
    ]);
    let root = out.lines().nth(2).unwrap();
    // the reference BSCR is 29,647,059; the recomputed value is 29,647,058.08
    let shown: f64 = root
        .split_whitespace()
        .nth(3)
        .unwrap()
        .replace(',', "")
        .parse()
        .unwrap();
    assert!((shown - 29_647_059.0).abs() <= 1.0, "{root}");

    let doc = json(&["aggregate", "--tree", &fixture("nonlife_case")]);
    assert!((num(&row(&doc, "bscr")["scr"]) - 29_647_059.0).abs() <= 1.0);
    assert!((num(&row(&doc, "non_life")["scr"]) - 24_188_911.0).abs() <= 1.0);
}

#[test]
fn bundled_fixtures_load_by_name() {
    let out = stdout(&["aggregate", "--tree", "toy_3x2", "--format", "csv"]);
    assert!(out.lines().nth(1).unwrap().starts_with("bscr,BSCR,0,257.05"));
}

#[test]
fn missing_file_exits_3_and_names_the_path() {
    scr()
        .args(["aggregate", "--tree", "/definitely/not/here.json"])
        .assert()
        .code(3)
        .stderr(predicate::str::contains("/definitely/not/here.json"));
}

#[test]
fn invalid_tree_exits_1() {
    let doc = r#"{"root":"r","nodes":[{"id":"r","name":"r","children":["a","b"]},
        {"id":"a","name":"a","scr":1},{"id":"b","name":"b","scr":2}],
        "matrices":{"r":[[1,1.5],[1.5,1]]}}"#;
    let path = temp_file("bad.json", doc);
    scr()
        .args(["aggregate", "--tree", path.to_str().unwrap()])
        .assert()
        .code(1)
        .stderr(predicate::str::contains("correlation out of range"));
}

#[test]
fn indefinite_tree_exits_2() {
    let doc = r#"{"root":"r","nodes":[{"id":"r","name":"r","children":["a","b","c"]},
        {"id":"a","name":"a","scr":1},{"id":"b","name":"b","scr":1},{"id":"c","name":"c","scr":1}],
        "matrices":{"r":[[1,-0.9,-0.9],[-0.9,1,-0.9],[-0.9,-0.9,1]]}}"#;
    let path = temp_file("indefinite.json", doc);
    scr()
        .args(["aggregate", "--tree", path.to_str().unwrap()])
        .assert()
        .code(2)
        .stderr(predicate::str::contains("indefinite aggregation"));
}

#[test]
fn allocate_case_non_life_children() {
    let doc = json(&[
        "allocate",
        "--tree",
        &fixture("nonlife_case"),
        "--principle",
        "sfep",
        "--at",
        "non_life",
    ]);
    for (id, v) in [
        ("prem_res", 17_081_293.0),
        ("lapse", 12_137.0),
        ("cat", 6_158_875.0),
    ] {
        assert!((num(&row(&doc, id)["allocated"]) - v).abs() <= 1.0, "{id}");
    }
    assert!((num(&doc["totals"][0]["allocated"]) - 23_252_305.0).abs() <= 1.0);
}

#[test]
fn allocate_case_lines_of_business() {
    let doc = json(&[
        "allocate",
        "--tree",
        &fixture("nonlife_case"),
        "--principle",
        "sfep",
        "--at",
        "prem_res",
    ]);
    assert!((num(&row(&doc, "lob_9")["allocated"]) - 5_267_930.0).abs() <= 1.0);
    assert!((num(&row(&doc, "lob_9")["allocation_ratio"]) - 0.77).abs() <= 0.005);
}

#[test]
fn allocate_totals_equal_bscr_on_complete_cuts() {
    for at in ["1", "2", "3", "4", "leaves"] {
        let doc = json(&[
            "allocate",
            "--tree",
            &fixture("nonlife_case"),
            "--principle",
            "sfep",
            "--at",
            at,
        ]);
        let total = num(&doc["totals"][0]["allocated"]);
        assert!((total - 29_647_058.08).abs() <= 0.01, "{at}: {total}");
    }
}

#[test]
fn allocate_toy_haircut() {
    let doc = json(&[
        "allocate",
        "--tree",
        &fixture("toy_3x2"),
        "--principle",
        "haircut",
    ]);
    for (id, v) in [("m1", 68.78), ("m2", 127.00), ("m3", 61.26)] {
        assert!((num(&row(&doc, id)["allocated"]) - v).abs() <= 0.01, "{id}");
    }
    assert!(row(&doc, "m1").get("allocation_ratio").is_none());
}

#[test]
fn market_driven_with_driver_file() {
    let drivers = temp_file("drivers.csv", "node_id,driver\nm1,1\nm2,4\nm3,5\n");
    let doc = json(&[
        "allocate",
        "--tree",
        &fixture("toy_3x2"),
        "--principle",
        "market",
        "--drivers",
        drivers.to_str().unwrap(),
    ]);
    let bscr = num(&doc["totals"][0]["allocated"]);
    assert!((num(&row(&doc, "m2")["allocated"]) - 0.4 * bscr).abs() <= 1e-9);
}

#[test]
fn market_driven_without_drivers_is_a_validation_error() {
    scr()
        .args(["allocate", "--tree", &fixture("toy_3x2"), "--principle", "market"])
        .assert()
        .code(1)
        .stderr(predicate::str::contains("m1"));
}

#[test]
fn compare_toy_deviation_columns() {
    let doc = json(&[
        "compare",
        "--tree",
        &fixture("toy_3x2"),
        "--principles",
        "sfep,marginal,haircut",
        "--at",
        "1",
    ]);
    for (id, m, h) in [("m1", -11.27, 39.22), ("m2", 6.16, -24.60), ("m3", -12.27, 56.30)] {
        let r = row(&doc, id);
        assert!((100.0 * num(&r["marginal_vs_sfep"]) - m).abs() <= 0.05, "{id}");
        assert!((100.0 * num(&r["haircut_vs_sfep"]) - h).abs() <= 0.05, "{id}");
    }
    let table = stdout(&[
        "compare",
        "--tree",
        &fixture("toy_3x2"),
        "--principles",
        "sfep,haircut",
    ]);
    assert!(table.contains("39.22%"));
}

#[test]
fn csv_and_json_carry_the_same_numbers() {
    let args = [
        "allocate",
        "--tree",
        &fixture("nonlife_case"),
        "--principle",
        "sfep",
        "--at",
        "leaves",
    ];
    let doc = json(&args);
    let mut csv_args = args.to_vec();
    csv_args.extend(["--format", "csv"]);
    let text = stdout(&csv_args);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let col = reader
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == "allocated")
        .unwrap();
    let rows = doc["rows"].as_array().unwrap();
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    // data rows plus the totals row
    assert_eq!(records.len(), rows.len() + 1);
    for (record, r) in records.iter().zip(rows) {
        let from_csv: f64 = record[col].parse().unwrap();
        assert_eq!(from_csv.to_bits(), num(&r["allocated"]).to_bits(), "{record:?}");
    }
}

#[test]
fn calibrate_rows() {
    let vars = temp_file("vars.csv", "var_x,var_y,var_xy\n3,4,5\n3,4,7\n60,70,112.694\n");
    let out = stdout(&["calibrate", "--vars", vars.to_str().unwrap(), "--format", "csv"]);
    let rho: Vec<&str> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap())
        .collect();
    assert_eq!(rho[0], "0.0");
    assert_eq!(rho[1], "1.0");
    assert!((rho[2].parse::<f64>().unwrap() - 0.5).abs() < 1e-3);

    let plain = temp_file("plain.csv", "3,4,5\n");
    let out = stdout(&["calibrate", "--vars", plain.to_str().unwrap()]);
    assert!(out.lines().nth(2).unwrap().contains("0.0"));
}

#[test]
fn calibrate_zero_marginal_exits_2() {
    let vars = temp_file("zero.csv", "0,4,4\n");
    scr()
        .args(["calibrate", "--vars", vars.to_str().unwrap()])
        .assert()
        .code(2);
}

#[test]
fn check_toy_passes() {
    scr()
        .args([
            "check",
            "--tree",
            &fixture("toy_3x2"),
            "--seed",
            "7",
            "--trials",
            "100",
        ])
        .assert()
        .success()
        .stdout(predicate::str::contains("all properties passed"));
}

#[test]
fn check_reports_validation_findings() {
    let doc = r#"{"root":"r","nodes":[{"id":"r","name":"r","children":["a","b"]},
        {"id":"a","name":"a","scr":1},{"id":"b","name":"b","scr":2}],
        "matrices":{"r":[[1,0.2],[0.3,1]]}}"#;
    let path = temp_file("asym.json", doc);
    scr()
        .args(["check", "--tree", path.to_str().unwrap()])
        .assert()
        .code(1);
}
