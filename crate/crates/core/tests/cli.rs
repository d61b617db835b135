use std::path::Path;
use std::process::{Command, Output};

use victimloc::report::{read_results_json, CSV_HEADER};

fn victimloc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_victimloc"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = victimloc(
        &[
            "run",
            "--trials",
            "3",
            "--out",
            "o",
            "--technique",
            "toa-coop",
            "--technique",
            "aoa-coop",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("o/results.csv")).unwrap();
    let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], CSV_HEADER);
    assert_eq!(body.len(), 3);
    assert!(body[1].starts_with("toa-coop,none,,"));
    assert!(csv.contains("# config_hash") || csv.contains("config_hash="));
}

#[test]
fn same_seed_same_csv() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = victimloc(
            &["run", "--trials", "4", "--seed", "9", "--out", name],
            dir.path(),
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let read = |n: &str| {
        victimloc::report::strip_timing(
            &std::fs::read_to_string(dir.path().join(n).join("results.csv")).unwrap(),
        )
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn sweep_json_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = victimloc(
        &[
            "sweep",
            "--axis",
            "victims",
            "--trials",
            "2",
            "--format",
            "json",
            "--out",
            "s",
            "--technique",
            "toa-coop",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let json = std::fs::read_to_string(dir.path().join("s/sweep_victims.json")).unwrap();
    assert_eq!(read_results_json(&json).unwrap().len(), 5);
    let svg = std::fs::read_to_string(dir.path().join("s/sweep_victims.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="xtick""#).count(), 5);

    let out = victimloc(
        &["plot", "--input", "s/sweep_victims.json", "--out", "p"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("p/sweep_victims.svg")).unwrap(),
        svg
    );

    let out = victimloc(
        &[
            "plot",
            "--input",
            "s/sweep_victims.json",
            "--axis",
            "rescuers",
            "--out",
            "p",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("[channel]\nplee = 3\n", "channel.plee"),
        ("[run]\ntrials = 0\n", "trials must be ≥ 1"),
        ("[scenario]\nvictims = \"five\"\n", "scenario.victims"),
        ("[run\n", "line 1"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("c{i}.toml"));
        std::fs::write(&path, text).unwrap();
        let out = victimloc(
            &["validate", "--config", path.to_str().unwrap()],
            dir.path(),
        );
        assert_eq!(code(&out), 2, "{text}: {}", stderr(&out));
        assert!(stderr(&out).contains(needle), "{text}: {}", stderr(&out));
    }
    let out = victimloc(&["run", "--technique", "gps"], dir.path());
    assert_eq!(code(&out), 2);
    let out = victimloc(&["validate", "--config", "missing.toml"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn unreachable_victims_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("far.toml");
    std::fs::write(&path, "[scenario]\ncomm_range_m = 1.0\n").unwrap();
    let out = victimloc(
        &["validate", "--config", path.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn unwritable_output_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    let out = victimloc(
        &[
            "run",
            "--trials",
            "1",
            "--technique",
            "toa-coop",
            "--out",
            "blocker",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn validate_succeeds_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = victimloc(&["validate"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("config hash"));
}
