use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn courseops(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_courseops"))
        .args(args)
        .current_dir(dir)
        .env_remove("COURSEOPS_PORT")
        .output()
        .unwrap()
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn demo() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = courseops(dir.path(), &["demo", "--out", "course", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

#[test]
fn plan_as_text_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = courseops(dir.path(), &["plan", "--students", "3200"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("128"), "{text}");

    let out = courseops(dir.path(), &["--json", "plan", "--students", "3200"]);
    assert_eq!(json_of(&out)["ta_count"], 128);
    let out = courseops(dir.path(), &["--json", "plan", "--students", "3200", "--ratio", "20"]);
    assert_eq!(json_of(&out)["ta_count"], 160);

    let out = courseops(dir.path(), &["plan", "--students", "0", "--json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_of(&out)["error"]["kind"], "invalid_input");
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(courseops(dir.path(), &["plan"]).status.code(), Some(2));
    assert_eq!(courseops(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn solve_writes_a_schedule_and_reports_infeasibility() {
    let dir = demo();
    let course = dir.path().join("course");
    let conf = course.join("courseops.conf");
    let conf = conf.to_str().unwrap();
    let out = courseops(dir.path(), &["--config", conf, "solve", "--out", "fresh.csv", "--seed", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("fresh.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 212);

    let out = courseops(dir.path(), &["--config", conf, "--json", "solve"]);
    assert_eq!(json_of(&out)["status"], "feasible");
    assert!(dir.path().join("schedule.csv").exists());

    // one TA cannot staff a shift that needs three
    std::fs::write(
        dir.path().join("tiny_roster.csv"),
        std::fs::read_to_string(course.join("roster.csv")).unwrap().lines().take(2).collect::<Vec<_>>().join("\n") + "\n",
    )
    .unwrap();
    let out = courseops(dir.path(), &["--config", conf, "--json", "solve", "--roster", "tiny_roster.csv"]);
    assert_eq!(out.status.code(), Some(3));
    let err = json_of(&out);
    assert_eq!(err["error"]["kind"], "infeasible");
    assert!(!err["error"]["report"]["uncovered_shift_ids"].as_array().unwrap().is_empty());

    let out = courseops(dir.path(), &["--json", "solve", "--roster", "missing.csv", "--shifts", "missing.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(json_of(&out)["error"]["message"].as_str().unwrap().contains("missing.csv"));
}

#[test]
fn detect_attendance_and_ics() {
    let dir = demo();
    let course = dir.path().join("course");
    let conf = course.join("courseops.conf");
    let conf = conf.to_str().unwrap();
    let config = std::fs::read_to_string(conf).unwrap();
    let term_start = config.lines().find_map(|l| l.strip_prefix("term_start = ")).unwrap().to_string();
    let start: chrono::NaiveDate = term_start.parse().unwrap();
    let proactive = (start + chrono::Duration::weeks(6)).to_string();

    let out = courseops(dir.path(), &["--config", conf, "--json", "detect", "--lms", "lms_export.csv", "--as-of", &proactive, "--out", "cases.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let body = json_of(&out);
    assert_eq!(body["students"], 240);
    let cases = body["cases"].as_array().unwrap();
    assert!(!cases.is_empty());
    assert!(cases.iter().all(|c| c["trigger"]["type"] == "ProactiveRule"));
    let written: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cases.json")).unwrap()).unwrap();
    assert_eq!(&written, &body["cases"]);

    let out = courseops(dir.path(), &["--config", conf, "--json", "detect", "--lms", "lms_export.csv", "--as-of", &proactive, "--phase", "onboarding"]);
    assert_eq!(out.status.code(), Some(1));

    let log = format!("sessions/{term_start}.csv");
    let out = courseops(dir.path(), &["--config", conf, "--json", "attendance", "--log", &log, "--week", &term_start]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!json_of(&out)["flags"].as_array().unwrap().is_empty());
    let written: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("flags.json")).unwrap()).unwrap();
    assert_eq!(written, json_of(&out));

    let out = courseops(dir.path(), &["--config", conf, "ics", "--ta", "r2-m1", "--out", "r2.ics"]);
    assert!(out.status.success());
    let ics = std::fs::read_to_string(dir.path().join("r2.ics")).unwrap();
    assert!(ics.starts_with("BEGIN:VCALENDAR\r\n"));
    let out = courseops(dir.path(), &["--config", conf, "ics", "--ta", "r2-m1"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), ics);
    let out = courseops(dir.path(), &["--config", conf, "--json", "ics", "--ta", "ghost"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json_of(&out)["error"]["kind"], "not_found");
}

#[test]
fn environment_overrides_the_config_file() {
    let dir = demo();
    let conf = dir.path().join("course/courseops.conf");
    let run = |envs: &[(&str, &str)]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_courseops"));
        cmd.args(["--config", conf.to_str().unwrap(), "--json", "ics", "--ta", "r1-m1"]).current_dir(dir.path());
        for (k, v) in envs {
            cmd.env(k, v);
        }
        cmd.output().unwrap()
    };
    let weekly = |out: &Output| json_of(out)["ics"].as_str().unwrap().contains("COUNT=13");
    assert!(weekly(&run(&[])));
    let out = run(&[("COURSEOPS_TERM_WEEKS", "4")]);
    assert!(!weekly(&out) && json_of(&out)["ics"].as_str().unwrap().contains("COUNT=4"));

    let out = run(&[("COURSEOPS_TERM_WEEKS", "many")]);
    assert_eq!(out.status.code(), Some(1));
    let err = json_of(&out);
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("COURSEOPS_TERM_WEEKS"));
    let out = run(&[("COURSEOPS_NO_SUCH_KEY", "1")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn serve_refuses_a_corrupt_log() {
    let dir = demo();
    let course = dir.path().join("course");
    std::fs::write(course.join("events.jsonl"), "{\"seq\":1,\"ts\":\"2026-01-01T00:00:00Z\"}\n").unwrap();
    let out = courseops(dir.path(), &["--config", course.join("courseops.conf").to_str().unwrap(), "--json", "serve", "--port", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let err = json_of(&out);
    assert_eq!(err["error"]["kind"], "startup");
    assert!(err["error"]["message"].as_str().unwrap().contains("seq 1"), "{err}");
}

#[test]
fn demo_refuses_to_overwrite_a_log() {
    let dir = demo();
    let out = courseops(dir.path(), &["--json", "demo", "--out", "course"]);
    assert_eq!(out.status.code(), Some(1));
}
