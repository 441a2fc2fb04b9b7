use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eve_core::enumerate::Report;
use eve_core::kind::ComponentKind;

fn samples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/samples")
}

fn eve(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eve"))
        .current_dir(dir)
        .env_remove("EVE_API_KEY")
        .env_remove("EVE_BASE_URL")
        .args(args)
        .output()
        .expect("binary runs")
}

fn replay(args: &[&str]) -> Output {
    let mut all = vec!["--backend", "replay", "--cassette", "cassette.jsonl"];
    all.extend_from_slice(args);
    eve(&samples(), &all)
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn replayed_analysis_matches_the_golden_report() {
    let out = stdout(&replay(&["analyze", "brake_by_wire.txt"]));
    let golden = fs::read_to_string(samples().join("golden/brake_by_wire.report.json")).unwrap();
    assert_eq!(out.replace("\r\n", "\n"), golden.replace("\r\n", "\n"));
}

#[test]
fn out_flag_writes_json_and_markdown() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("reports/brake.json");
    let o = replay(&["--out", target.to_str().unwrap(), "analyze", "brake_by_wire.txt"]);
    assert!(o.status.success());
    let json = fs::read_to_string(&target).unwrap();
    let report: Report = serde_json::from_str(&json).unwrap();
    assert_eq!(report.ucas.len(), 60);
    let md = fs::read_to_string(dir.path().join("reports/brake.md")).unwrap();
    assert!(md.contains("UCAs: 60"));
    assert!(md.contains("| 60 | IT | sensor | wheel speed sensor -> brake control unit -> hydraulic modulator valve |"));
}

#[test]
fn embedded_config_is_the_effective_one() {
    let report: Report = serde_json::from_str(&stdout(&replay(&["--m-v", "0", "analyze", "brake_by_wire.txt"]))).unwrap();
    let cfg = &report.run_metadata.config;
    assert_eq!((cfg.m_e, cfg.m_v), (4, 0));
    assert_eq!(report.run_metadata.stage_label, "q4v0");
    let back: eve_core::config::PipelineConfig = toml::from_str(&cfg.to_toml()).unwrap();
    assert_eq!(&back, cfg);
}

#[test]
fn skipping_validation_reports_raw_candidates() {
    let report: Report = serde_json::from_str(&stdout(&replay(&["--m-v", "0", "analyze", "brake_by_wire.txt"]))).unwrap();
    let sensors: Vec<&str> = report
        .control_structure
        .entities(ComponentKind::Sensor)
        .iter()
        .map(|e| e.canonical_name.as_str())
        .collect();
    // no vote removes the false positive and no merge joins the abbreviation
    assert!(sensors.contains(&"ABS algorithm"));
    assert!(sensors.contains(&"WSS") && sensors.contains(&"wheel speed sensor"));
    for c in &report.run_metadata.counts {
        assert_eq!(c.candidates, c.validated);
    }
    let (s, c, a) = report.control_structure.counts();
    assert_eq!(report.ucas.len() as u64, eve_core::enumerate::count_ucas(s as u64, c as u64, a as u64, 4));
}

#[test]
fn stage_commands_chain_to_the_same_structure() {
    let dir = tempfile::tempdir().unwrap();
    let candidates = dir.path().join("candidates.json");
    let validated = dir.path().join("validated.json");
    assert!(replay(&["--out", candidates.to_str().unwrap(), "extract", "brake_by_wire.txt"]).status.success());
    let sets: serde_json::Value = serde_json::from_str(&fs::read_to_string(&candidates).unwrap()).unwrap();
    assert_eq!(sets.as_array().unwrap().len(), 3);

    let o = replay(&[
        "--out",
        validated.to_str().unwrap(),
        "validate",
        "brake_by_wire.txt",
        "--candidates",
        candidates.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let enumerated: serde_json::Value =
        serde_json::from_str(&stdout(&eve(&samples(), &["enumerate", validated.to_str().unwrap()]))).unwrap();
    assert_eq!(enumerated["uca_count"], 60);

    // enumerate also accepts a full report
    let from_golden: serde_json::Value =
        serde_json::from_str(&stdout(&eve(&samples(), &["enumerate", "golden/brake_by_wire.report.json"]))).unwrap();
    assert_eq!(from_golden["ucas"], enumerated["ucas"]);
}

#[test]
fn eval_replays_the_whole_grid() {
    let csv = stdout(&replay(&["eval", "manifest.json"]));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "stage_label,kind,recall,precision,f1,tp,fp,fn,n_docs");
    assert_eq!(lines.len(), 1 + 4 * 5 * 4);
    assert!(lines.contains(&"q4v4,sensor,1.000000,1.000000,1.000000,7,0,0,3"));
}

#[test]
fn missing_credentials_are_fatal() {
    let o = eve(&samples(), &["--backend", "http", "analyze", "brake_by_wire.txt"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("authentication failed") && err.contains("EVE_API_KEY"), "{err}");
}

#[test]
fn cassette_miss_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let doc = dir.path().join("unrecorded.txt");
    fs::write(&doc, "A pressure switch trips the relay.").unwrap();
    let o = replay(&["extract", doc.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no cassette record"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(eve(&samples(), &["--backend", "carrier-pigeon", "analyze", "x"]).status.code(), Some(2));
    assert_eq!(eve(&samples(), &["record", "analyze", "brake_by_wire.txt"]).status.code(), Some(2));
    assert_eq!(eve(&samples(), &["--backend", "replay", "analyze", "brake_by_wire.txt"]).status.code(), Some(2));
    assert_eq!(eve(&samples(), &["--m-e", "0", "analyze", "brake_by_wire.txt"]).status.code(), Some(2));
    assert_eq!(eve(&samples(), &[]).status.code(), Some(2));
}

#[test]
fn missing_document_is_fatal() {
    assert_eq!(replay(&["analyze", "no_such_file.txt"]).status.code(), Some(1));
}

#[test]
fn recording_then_replaying_reproduces_the_mock_run() {
    let dir = tempfile::tempdir().unwrap();
    let tape = dir.path().join("tape.jsonl");
    let script = samples().join("mock_script.json");
    let mock = |extra: &[&str]| {
        let mut args = vec!["--backend", "mock", "--mock-script", script.to_str().unwrap()];
        args.extend_from_slice(extra);
        eve(&samples(), &args)
    };
    let recorded = stdout(&mock(&["--cassette", tape.to_str().unwrap(), "record", "analyze", "tank_level.txt"]));
    let direct = stdout(&mock(&["analyze", "tank_level.txt"]));
    let replayed = stdout(&eve(
        &samples(),
        &["--backend", "replay", "--cassette", tape.to_str().unwrap(), "analyze", "tank_level.txt"],
    ));
    let parse = |s: &str| serde_json::from_str::<Report>(s).unwrap();
    let (r, d, p) = (parse(&recorded), parse(&direct), parse(&replayed));
    assert_eq!(r.control_structure, d.control_structure);
    assert_eq!(p.control_structure, d.control_structure);
    assert_eq!(p.ucas, d.ucas);
    assert_eq!(p.ucas.len(), 32);
    assert!(p.run_metadata.timestamps.is_none());
    assert!(d.run_metadata.timestamps.is_some());

    // a second recording adds nothing new
    let before = fs::read_to_string(&tape).unwrap();
    stdout(&mock(&["--cassette", tape.to_str().unwrap(), "record", "analyze", "tank_level.txt"]));
    assert_eq!(fs::read_to_string(&tape).unwrap(), before);
}

#[test]
fn simulate_writes_curve_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("curve.csv");
    let o = eve(
        &samples(),
        &["--seed", "3", "--out", csv_path.to_str().unwrap(), "simulate", "--trials", "20000", "--m-max", "4"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "m,closed_form,monte_carlo,stderr");
    assert!(lines[3].starts_with("3,0.9360000000,"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("curve.json")).unwrap()).unwrap();
    assert!((report["combined"].as_f64().unwrap() - 0.8730624).abs() < 1e-12);
    assert_eq!(report["monte_carlo"]["trials"], 20000);

    let json = stdout(&eve(&samples(), &["simulate", "--trials", "1000", "--tie", "accept_tie"]));
    let report: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!((report["vote_accept"].as_f64().unwrap() - 0.9728).abs() < 1e-12);

    assert_eq!(eve(&samples(), &["simulate", "--p-v", "1.5"]).status.code(), Some(2));
    assert_eq!(eve(&samples(), &["simulate", "--p-e", "0.5,0.6"]).status.code(), Some(2));
}
