mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn adaptube(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaptube"))
        .args(args)
        .output()
        .unwrap()
}

fn text(o: &Output) -> (String, String) {
    (
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

/// Writes `paper.json` with textual replacements into `dir`.
fn edited(dir: &Path, name: &str, edits: &[(&str, &str)]) -> PathBuf {
    let mut src = std::fs::read_to_string(common::config_path("paper.json")).unwrap();
    for (from, to) in edits {
        assert!(src.contains(from), "{from}");
        src = src.replace(from, to);
    }
    let p = dir.join(name);
    std::fs::write(&p, src).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn paper_run_writes_three_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = adaptube(&[
        "run",
        "--config",
        s(&common::config_path("paper.json")),
        "--out",
        s(&out),
    ]);
    let (stdout, stderr) = text(&o);
    assert_eq!(o.status.code(), Some(0), "{stdout}{stderr}");
    for mode in ["adaptive", "reach", "robust"] {
        let run = out.join(mode).join("seed_0");
        let lines = std::fs::read_to_string(run.join("trace.jsonl"))
            .unwrap()
            .lines()
            .count();
        assert_eq!(lines, 60, "{mode}");
        assert_eq!(
            std::fs::read_to_string(run.join("metrics.csv"))
                .unwrap()
                .lines()
                .count(),
            61
        );
        assert!(run.join("sets/59.json").exists());
        assert!(
            stdout.contains(&format!("{mode:<8} seed=0    feasible 60/60")),
            "{stdout}"
        );
    }
}

#[test]
fn kappa_out_of_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "k.json", &[("\"kappa\": 0.9", "\"kappa\": 2.5")]);
    let o = adaptube(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    let (_, stderr) = text(&o);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr.contains("kappa out of (0,2)"), "{stderr}");
    assert!(stderr.contains("line 15"), "{stderr}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn initial_state_outside_x_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(
        dir.path(),
        "x.json",
        &[("\"x_0\": [18.0, -18.0]", "\"x_0\": [21.0, 0.0]")],
    );
    let o = adaptube(&["check", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).1.contains("x_0"));
}

#[test]
fn bad_invocations() {
    assert_eq!(
        adaptube(&["run", "--config", "/nonexistent/cfg.json"]).status.code(),
        Some(1)
    );
    assert_eq!(adaptube(&["simulate"]).status.code(), Some(1));
    assert_eq!(adaptube(&["run"]).status.code(), Some(1));
    assert_eq!(adaptube(&["--help"]).status.code(), Some(0));
}

#[test]
fn compare_needs_two_modes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::config_path("paper.json");
    let o = adaptube(&[
        "compare",
        "--config",
        s(&cfg),
        "--mode",
        "adaptive",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).1.contains("at least two modes"));
}

#[test]
fn short_compare_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "c.json", &[("\"T_steps\": 60", "\"T_steps\": 5")]);
    let out = dir.path().join("cmp");
    let o = adaptube(&["compare", "--config", s(&cfg), "--out", s(&out)]);
    let (stdout, stderr) = text(&o);
    assert_eq!(o.status.code(), Some(0), "{stdout}{stderr}");
    assert!(stdout.contains("cost ordering: adaptive"));
    assert!(stdout.contains("t=1 adaptive tube inside robust tube"));
    let mut rdr = csv::Reader::from_path(out.join("comparison.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 15);
    let header = rdr.headers().unwrap().clone();
    let delta = header.iter().position(|h| h == "delta_cumulative_cost").unwrap();
    // the first mode is the reference
    for r in rows.iter().filter(|r| &r[1] == "adaptive") {
        assert_eq!(r[delta].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn seeds_flag_fans_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(dir.path(), "s.json", &[("\"T_steps\": 60", "\"T_steps\": 2")]);
    let out = dir.path().join("o");
    let o = adaptube(&[
        "run",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--mode",
        "robust",
        "--seeds",
        "1,2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("robust/seed_1/trace.jsonl").exists());
    assert!(out.join("robust/seed_2/trace.jsonl").exists());
    assert!(!out.join("adaptive").exists());
}

#[test]
fn falsified_disturbance_bound_fails_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited(
        dir.path(),
        "d.json",
        &[
            (
                "\"D\": {\"inf_ball\": 0.1},",
                "\"D\": {\"inf_ball\": 0.1}, \"D_true\": {\"inf_ball\": 3.0},",
            ),
            ("\"uniform_in_d\"", "\"vertex_cycle\""),
        ],
    );
    let o = adaptube(&["check", "--config", s(&cfg), "--mode", "adaptive"]);
    let (stdout, _) = text(&o);
    assert_ne!(o.status.code(), Some(0));
    assert!(stdout.contains("EmptyResult"), "{stdout}");
    assert!(stdout.contains("FAIL completion"), "{stdout}");
}

#[test]
fn nominal_check_passes() {
    let o = adaptube(&["check", "--config", s(&common::config_path("nominal.json"))]);
    let (stdout, stderr) = text(&o);
    assert_eq!(o.status.code(), Some(0), "{stdout}{stderr}");
    assert!(stdout.contains("PASS nominal_decrease"), "{stdout}");
    assert!(!stdout.contains("FAIL"));
}
