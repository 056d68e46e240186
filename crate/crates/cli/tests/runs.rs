//! Behavior of the `skyfade` binary: outputs, exit codes, determinism, and
//! the compare workflow.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn skyfade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skyfade"))
        .args(args)
        .output()
        .expect("spawn skyfade")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A deliberately small scenario so each invocation stays fast: one anchor,
/// a short lag span, and a handful of scenes.
fn small_scenario(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        r#"
schema = 1
preset = "paper-fig3"
seed = 42

[output]
acf = true
ccf = true
anchor_times = [1.0]
acf_span = 0.02
acf_step = 0.002
ccf_span = 1.0
ccf_step = 0.25
scenes = 4
"#,
    )
    .unwrap();
    path
}

#[test]
fn simulate_writes_curves_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_scenario(dir.path());
    let out_dir = dir.path().join("out");
    let out = skyfade(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    // Posture-on and posture-off variants for both curve kinds.
    for name in [
        "acf_t1.000_posture-on.csv",
        "acf_t1.000_posture-off.csv",
        "ccf_t1.000_posture-on.csv",
        "ccf_t1.000_posture-off.csv",
    ] {
        let path = out_dir.join(name);
        assert!(path.exists(), "missing {name}");
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(
            text.contains("lag,re,im,abs"),
            "{name} missing the documented column header"
        );
    }

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["seed"], 42);
    assert!(summary["config_hash"].as_str().unwrap().len() == 64);
    assert!(summary["coherence"].as_array().unwrap().len() >= 2);
    let files: Vec<&str> = summary["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap())
        .collect();
    assert!(files.contains(&"acf_t1.000_posture-on.csv"));
}

#[test]
fn identical_invocations_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_scenario(dir.path());
    let mut snapshots = Vec::new();
    for label in ["a", "b"] {
        let out_dir = dir.path().join(label);
        let out = skyfade(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort_by(|x, y| x.0.cmp(&y.0));
        snapshots.push(files);
    }
    assert_eq!(snapshots[0].len(), snapshots[1].len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in snapshots[0].iter().zip(&snapshots[1]) {
        assert_eq!(name_a, name_b);
        assert!(bytes_a == bytes_b, "{name_a} differs between identical runs");
    }
}

#[test]
fn unwritable_output_directory_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_scenario(dir.path());
    // A regular file cannot serve as a parent directory.
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "not a directory").unwrap();
    let out_dir = blocker.join("out");
    let out = skyfade(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
}

#[test]
fn anchor_beyond_duration_exits_2() {
    let out = skyfade(&[
        "simulate",
        "paper-fig3",
        "--out-dir",
        tempfile::tempdir().unwrap().path().to_str().unwrap(),
        "--anchor-times",
        "9.5",
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(
        stderr(&out).contains("duration") || stderr(&out).contains("9.5"),
        "stderr should explain the range problem: {}",
        stderr(&out)
    );
}

#[test]
fn config_errors_exit_2() {
    // Neither a preset token nor --config.
    let out = skyfade(&["simulate"]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));

    // Unknown preset token.
    let out = skyfade(&["simulate", "fig9"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("fig3"), "should list known presets");

    // Unknown figure in reproduce.
    let out = skyfade(&["reproduce", "fig9"]);
    assert_eq!(code(&out), 2);

    // Config file with a bad field names the path.
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "schema = 1\nseed = 1\n[carrier]\nf0 = -1\n").unwrap();
    let out = skyfade(&["simulate", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("carrier.f0"), "stderr: {}", stderr(&out));
}

#[test]
fn compare_reports_deviation_between_curve_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_scenario(dir.path());
    let out_dir = dir.path().join("out");
    let out = skyfade(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let on = out_dir.join("acf_t1.000_posture-on.csv");
    let off = out_dir.join("acf_t1.000_posture-off.csv");

    // A curve compared with itself deviates by exactly zero.
    let out = skyfade(&["compare", on.to_str().unwrap(), on.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("max"), "report should state the max deviation: {text}");
    assert!(text.contains("0e0") || text.contains("0.000"), "self-compare: {text}");

    // Different curves produce a nonzero report.
    let out = skyfade(&["compare", on.to_str().unwrap(), off.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    // simulate --compare folds the deviation into the summary.
    let again = dir.path().join("again");
    let out = skyfade(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        again.to_str().unwrap(),
        "--compare",
        on.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(again.join("summary.json")).unwrap())
            .unwrap();
    let comparison = &summary["comparison"];
    assert!(comparison.is_object(), "summary should embed the comparison");
    assert!(comparison["max"].as_f64().unwrap() <= 1e-12, "self-comparison max");
}

#[test]
fn validate_config_prints_resolved_form_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_scenario(dir.path());
    let out = skyfade(&["validate-config", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("schema = 1"));
    assert!(text.contains("[carrier]"));
    assert!(text.contains("# hash: "));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "schema = 1\nseed = 1\nbogus = true\n").unwrap();
    let out = skyfade(&["validate-config", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bogus"), "stderr: {}", stderr(&out));
}

#[test]
fn reproduce_writes_paired_curves_per_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let out = skyfade(&[
        "reproduce",
        "fig3",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    for anchor in ["0.000", "1.000", "2.000"] {
        for mode in ["posture-on", "posture-off"] {
            let name = format!("acf_t{anchor}_{mode}.csv");
            assert!(dir.path().join(&name).exists(), "missing {name}");
        }
    }
    let text = stdout(&out);
    assert!(text.contains("PASS"), "verdict lines expected: {text}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert!(summary["verdicts"].as_array().unwrap().len() >= 3);
    assert_eq!(summary["posture"], "paired");
}

#[test]
fn cir_dump_has_documented_shape() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("cir.toml");
    std::fs::write(
        &config_path,
        r#"
schema = 1
preset = "paper-fig3"
seed = 5

[clusters]
n = 3
m = 2

[output]
acf = false
ccf = false
cir = true
anchor_times = [0.5]
scenes = 1
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = skyfade(&[
        "simulate",
        "--config",
        config_path.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let text = std::fs::read_to_string(out_dir.join("cir.csv")).unwrap();
    let mut lines = text.lines();
    // Provenance header, then one row per (time, tap).
    assert!(lines.next().unwrap().starts_with("# scene: 0"));
    let header = lines
        .find(|l| !l.starts_with('#'))
        .expect("column header line");
    assert!(
        header.starts_with("time,tap,delay"),
        "unexpected columns: {header}"
    );
    // 2x2 arrays: four complex entries per row -> 3 + 8 columns.
    assert_eq!(header.split(',').count(), 11, "header: {header}");
    let first = lines.next().unwrap();
    assert_eq!(first.split(',').count(), 11, "row: {first}");
    // 2.5 s of 1 ms samples, direct path + 3 clusters per sample.
    let rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(rows, 2501 * 4, "row count");
}
