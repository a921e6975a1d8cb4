use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn agefl(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_agefl"));
    cmd.args(args).env_remove("AGEFL_OUT_DIR");
    if let Some(dir) = out_dir {
        cmd.env("AGEFL_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str =
    "rounds = 3\nseeds = [4]\n[dataset.synthetic]\ntrain_per_class = 20\ntest_per_class = 5\n";

#[test]
fn run_writes_identical_metrics_twice() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, SMALL).unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = agefl(&["run", cfg.to_str().unwrap()], Some(dir));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let first = fs::read(a.join("metrics.csv")).unwrap();
    assert_eq!(first, fs::read(b.join("metrics.csv")).unwrap());
    assert_eq!(String::from_utf8(first).unwrap().lines().count(), 4);
    assert!(a.join("summary.csv").exists());
}

#[test]
fn out_flag_beats_environment_and_json_validates() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, SMALL).unwrap();
    let flagged = tmp.path().join("flag");
    let o = agefl(
        &[
            "run",
            cfg.to_str().unwrap(),
            "--format",
            "json",
            "--out",
            flagged.to_str().unwrap(),
        ],
        Some(&tmp.path().join("env")),
    );
    assert!(o.status.success());
    assert!(!tmp.path().join("env").exists());
    let doc: serde_json::Value =
        serde_json::from_slice(&fs::read(flagged.join("metrics.json")).unwrap()).unwrap();
    agefl::sim::validate_json(&doc).unwrap();
}

#[test]
fn invalid_config_exits_nonzero_with_reason() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "devices = 3\nsubchannels = 4\n").unwrap();
    let o = agefl(&["run", cfg.to_str().unwrap()], Some(tmp.path()));
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("subchannels"));

    fs::write(&cfg, "rounds = 1\nrounds_typo = 2\n").unwrap();
    let o = agefl(&["run", cfg.to_str().unwrap()], Some(tmp.path()));
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn solve_reports_cases_and_infeasibility() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("inst.txt");
    fs::write(
        &file,
        "1e9 0.5 1000 2 1e6 1e6 1e-29 1e6 2\n1e9 0.5 1000 2 1e6 1e6 1e-29 1e6 1.5\n",
    )
    .unwrap();
    let o = agefl(&["solve", file.to_str().unwrap(), "--oracle", "1000"], None);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("feasible,case"));
    assert!(lines[1].starts_with("true,1,1,"));
    assert!(lines[2].starts_with("false"));

    fs::write(&file, "1 2 3\n").unwrap();
    assert!(!agefl(&["solve", file.to_str().unwrap()], None).status.success());
}

#[test]
fn match_small_table() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("t.txt");
    fs::write(&file, "1 2\n3 1\n").unwrap();
    let o = agefl(&["match", file.to_str().unwrap(), "--exhaustive"], None);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().all(|l| l.contains("energy 2 ")), "{text}");
    assert!(text.contains("0->0 1->1"));
}

#[test]
fn preset_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let o = agefl(
        &["preset", "convergence", "--seeds", "1", "--rounds", "3"],
        Some(tmp.path()),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(tmp.path().join("convergence.csv")).unwrap();
    assert!(text.starts_with("cycle,matching_selected"));
    assert!(!agefl(&["preset", "sweep"], Some(tmp.path())).status.success());
}

#[test]
fn bundled_example_config_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
    let o = agefl(
        &["run", cfg.to_str().unwrap(), "--seed", "0", "--rounds", "2"],
        Some(tmp.path()),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("mean selected"));
    assert_eq!(
        fs::read_to_string(tmp.path().join("metrics.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
}
