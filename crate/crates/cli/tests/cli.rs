use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_superlattice"))
}

fn stack(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../stacks").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// (header, rows) with the two comment lines dropped.
fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn playmodel_figure_three_columns() {
    let text = stdout(&run(&["playmodel", "--figure", "3", "--count", "101"]));
    assert!(text.starts_with("# "));
    assert!(text.lines().nth(1).unwrap().starts_with("# config: {"));
    let (header, rows) = parse_csv(&text);
    assert_eq!(header, ["E_meV", "tau_ph_fs", "env_max_fs", "env_min_fs", "T9"]);
    assert_eq!(rows.len(), 101);
    for r in &rows {
        assert_eq!(r.len(), 5);
        for v in r {
            let x: f64 = v.parse().unwrap();
            assert!(x.is_finite());
            // 17 significant digits in scientific notation
            assert_eq!(v.split('e').next().unwrap().trim_start_matches('-').len(), 18, "{v}");
        }
    }
}

#[test]
fn five_cells_give_four_peaks() {
    let path = stack("rep5.json");
    let text = stdout(&run(&["transmission", "--stack", path.to_str().unwrap(), "--N", "5", "--count", "4001"]));
    let (header, rows) = parse_csv(&text);
    let col = header.iter().position(|h| h == "T_N").unwrap();
    let band = header.iter().position(|h| h == "band").unwrap();
    let t: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap()).collect();
    let peaks = (1..t.len() - 1)
        .filter(|&i| rows[i][band] == "allowed" && t[i] > t[i - 1] && t[i] >= t[i + 1] && t[i] > 0.9)
        .count();
    // first band only: the sweep defaults to 0.5..150 meV, which holds one band
    assert_eq!(peaks, 4, "{peaks} peaks");
}

#[test]
fn missing_stack_is_a_validation_error() {
    let out = run(&["transmission", "--stack", "/nonexistent/nowhere.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/nowhere.json"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["playmodel", "--figure", "7"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn bad_figure_is_rejected() {
    assert_eq!(run(&["reproduce", "--figure", "12"]).status.code(), Some(2));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let path = stack("rep5.json");
    let args = ["resonances", "--stack", path.to_str().unwrap(), "--N", "5", "--count", "301"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn arc_design_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let coated = dir.path().join("coated.json");
    let path = stack("rep5.json");
    let out = run(&["-o", coated.to_str().unwrap(), "arc", "design", "--stack", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&coated).unwrap()).unwrap();
    assert!(!doc["left_arc"].is_null());
    assert!(!doc["right_arc"].is_null());

    let report = dir.path().join("eval.json");
    let out = run(&["-o", report.to_str().unwrap(), "arc", "evaluate", "--stack", coated.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(doc["version"].is_string());
    let with = doc["result"]["average_transmission_with_arc"].as_f64().unwrap();
    let without = doc["result"]["average_transmission_without_arc"].as_f64().unwrap();
    assert!(with > without, "{with} vs {without}");

    // a bare stack has nothing to evaluate
    let out = run(&["arc", "evaluate", "--stack", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn kard_reports_every_energy() {
    let text = stdout(&run(&["kard", "--playmodel", "--e-min", "40", "--e-max", "80", "--count", "41"]));
    let (header, rows) = parse_csv(&text);
    assert_eq!(header[0], "E_meV");
    assert_eq!(rows.len(), 41);
}
