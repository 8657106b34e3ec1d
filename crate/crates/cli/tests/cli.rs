//! End-to-end tests of the command-line binary: exit codes, output shapes,
//! and determinism, driven over documents generated by the library.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use couplematch::theorems::{
    crowding_market, random_altruistic_market, SplitCoupleFamily, ThreeHospitalFamily,
};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_couplematch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 output")
}

fn write(dir: &Path, name: &str, body: String) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).expect("test files write");
    path
}

fn three_hospital_json() -> String {
    let (f_marg, m_marg) = ThreeHospitalFamily::marginal_combos().remove(0);
    ThreeHospitalFamily::instance(&f_marg, &m_marg, 0)
        .expect("reference completion samples")
        .to_json()
}

#[test]
fn validate_applies_the_requested_mode() {
    let dir = tempfile::tempdir().unwrap();
    let crowding = write(dir.path(), "crowding.json", crowding_market().to_json());
    let path = crowding.to_str().unwrap();

    let strict = run(&["validate", path]);
    assert_eq!(strict.status.code(), Some(1), "{}", stdout(&strict));
    assert!(stdout(&strict).contains("too-few-hospitals"));

    let relaxed = run(&["validate", path, "--mode", "relaxed"]);
    assert_eq!(relaxed.status.code(), Some(0), "{}", stdout(&relaxed));

    let json = run(&["validate", path, "--output", "json"]);
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(parsed["valid"], serde_json::Value::Bool(false));
}

#[test]
fn unreadable_input_exits_two() {
    let missing = run(&["validate", "/definitely/not/here.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("cannot read"));

    let dir = tempfile::tempdir().unwrap();
    let broken = write(dir.path(), "broken.json", "{\"hospitals\": ".to_string());
    let parse = run(&["validate", broken.to_str().unwrap()]);
    assert_eq!(parse.status.code(), Some(2));
    assert!(stderr(&parse).contains("cannot parse"));
}

#[test]
fn dpda_prints_the_crowding_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let crowding = write(dir.path(), "crowding.json", crowding_market().to_json());
    let out = run(&[
        "dpda",
        crowding.to_str().unwrap(),
        "--mode",
        "relaxed",
        "--trace",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("d1 -> h1"), "{text}");
    assert!(text.contains("f -> @"), "{text}");
    assert!(text.contains("round 1"), "trace requested: {text}");

    let json = run(&[
        "dpda",
        crowding.to_str().unwrap(),
        "--mode",
        "relaxed",
        "--output",
        "json",
    ]);
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(parsed["matching"]["d1"], "h1");
    assert_eq!(parsed["matching"]["m"], "@");
    assert!(parsed.get("trace").is_none(), "trace only when asked");
}

#[test]
fn check_stability_splits_the_exit_code_on_blocks() {
    let dir = tempfile::tempdir().unwrap();

    let split = SplitCoupleFamily::instances([false; 4], 100)
        .unwrap()
        .remove(0);
    let split_path = write(dir.path(), "split.json", split.to_json());
    let good = write(
        dir.path(),
        "good.json",
        SplitCoupleFamily::proposed_matching().to_json(),
    );
    let stable = run(&[
        "check-stability",
        split_path.to_str().unwrap(),
        good.to_str().unwrap(),
    ]);
    assert_eq!(stable.status.code(), Some(0), "{}", stderr(&stable));
    assert!(stdout(&stable).contains("stable: no blocks found"));

    let three_path = write(dir.path(), "three.json", three_hospital_json());
    let outcome = write(
        dir.path(),
        "outcome.json",
        ThreeHospitalFamily::expected_matching().to_json(),
    );
    let blocked = run(&[
        "check-stability",
        three_path.to_str().unwrap(),
        outcome.to_str().unwrap(),
        "--output",
        "json",
    ]);
    assert_eq!(blocked.status.code(), Some(1), "{}", stderr(&blocked));
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&blocked)).unwrap();
    assert_eq!(parsed["stable"], serde_json::Value::Bool(false));
    assert_eq!(parsed["blocks"][0]["kind"], "couple-pair");
}

#[test]
fn find_stable_reports_the_empty_set() {
    let dir = tempfile::tempdir().unwrap();
    let three = write(dir.path(), "three.json", three_hospital_json());
    let out = run(&["find-stable", three.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("stable matchings: 0"));
}

#[test]
fn check_conditions_counts_witnesses_and_still_passes() {
    let dir = tempfile::tempdir().unwrap();
    let three = write(dir.path(), "three.json", three_hospital_json());
    let out = run(&["check-conditions", three.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("extreme altruism: 9 violation(s)"), "{text}");
    assert!(
        text.contains("aversion to couple diversity: 1 violation(s)"),
        "{text}"
    );
}

#[test]
fn build_counterexample_emits_a_market_with_no_stable_matching() {
    let dir = tempfile::tempdir().unwrap();
    let three = write(dir.path(), "three.json", three_hospital_json());
    let built = dir.path().join("built.json");
    let out = run(&[
        "build-counterexample",
        "altruism",
        three.to_str().unwrap(),
        "--out",
        built.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stderr(&out).contains("no stable matching exists"));

    let sweep = run(&["find-stable", built.to_str().unwrap()]);
    assert_eq!(sweep.status.code(), Some(0), "{}", stderr(&sweep));
    assert!(stdout(&sweep).contains("stable matchings: 0"));
}

#[test]
fn build_counterexample_refuses_a_satisfying_market() {
    let dir = tempfile::tempdir().unwrap();
    let calm = write(
        dir.path(),
        "calm.json",
        random_altruistic_market(0).to_json(),
    );
    let out = run(&["build-counterexample", "altruism", calm.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("cannot build"));
}

#[test]
fn verify_and_repro_share_verdict_exit_codes() {
    let ok = run(&["verify", "frozen-counts"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("claim frozen-counts: pass"));

    let unknown = run(&["verify", "no-such-claim"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("unknown claim"));

    let repro = run(&["repro", "crowding", "--output", "json"]);
    assert_eq!(repro.status.code(), Some(0), "{}", stderr(&repro));
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&repro)).unwrap();
    assert_eq!(parsed[0]["claim"], "frozen-counts");
    assert_eq!(parsed[0]["outcome"]["kind"], "verified");
}

#[test]
fn json_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let three = write(dir.path(), "three.json", three_hospital_json());
    let args = ["dpda", three.to_str().unwrap(), "--output", "json"];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(stdout(&first), stdout(&second));
    assert!(!stdout(&first).is_empty());
}
