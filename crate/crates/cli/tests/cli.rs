//! End-to-end checks of the `splitq` binary: flag surface, exit codes,
//! output formats, and byte determinism.

use std::path::Path;
use std::process::{Command, Output};

use splitq::io::parse_report_json;

fn splitq(args: &[&str], envs: &[(&str, &str)], dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_splitq"));
    cmd.args(args).current_dir(dir).env_remove("SPLITQ_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_demo_csv(dir: &Path, per_group: usize) -> std::path::PathBuf {
    let path = dir.join("demo.csv");
    let mut text = String::from("group,t1,t2,t3\n");
    // deterministic, irregular values — enough spread for the estimators
    let mut state = 9u64;
    for g in 1..=2 {
        for _ in 0..per_group {
            let mut row = format!("{g}");
            for _ in 0..3 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let value = ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 4.0;
                row.push_str(&format!(",{value}"));
            }
            text.push_str(&row);
            text.push('\n');
        }
    }
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn test_command_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_demo_csv(dir.path(), 8);
    let json = dir.path().join("report.json");
    let out = splitq(
        &[
            "test",
            "--data",
            data.to_str().unwrap(),
            "--hypothesis",
            "interaction",
            "--seed",
            "5",
            "--json",
            json.to_str().unwrap(),
        ],
        &[],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("decisions:"), "{stdout}");

    let doc = parse_report_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc.design.a, 2);
    assert_eq!(doc.design.d, 3);
    assert_eq!(doc.hypothesis, "interaction");
    // the report carries all three decisions whatever they are
    let _ = (doc.decisions.z, doc.decisions.chi1, doc.decisions.kf);
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_demo_csv(dir.path(), 9);
    let mut reports = Vec::new();
    for run in 0..2 {
        let json = dir.path().join(format!("r{run}.json"));
        let out = splitq(
            &[
                "test",
                "--data",
                data.to_str().unwrap(),
                "--hypothesis",
                "time",
                "--seed",
                "11",
                "--json",
                json.to_str().unwrap(),
            ],
            &[],
            dir.path(),
        );
        assert!(out.status.success());
        reports.push(std::fs::read(&json).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn infeasible_design_exits_two_citing_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_demo_csv(dir.path(), 4); // all groups below 6
    let out = splitq(
        &["test", "--data", data.to_str().unwrap(), "--hypothesis", "interaction"],
        &[],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("at least 6 observations"), "{stderr}");
}

#[test]
fn missing_file_and_bad_flags_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = splitq(
        &["test", "--data", "no-such-file.csv", "--hypothesis", "interaction"],
        &[],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    let data = write_demo_csv(dir.path(), 8);
    let out = splitq(
        &["test", "--data", data.to_str().unwrap(), "--hypothesis", "parabolic"],
        &[],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("unknown hypothesis"));

    // unknown flag → clap usage error, also exit 2
    let out = splitq(&["limit", "--bogus"], &[], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("Usage") || stderr.contains("usage"), "{stderr}");

    // malformed CSV cites (row, column)
    std::fs::write(dir.path().join("bad.csv"), "group,t1\n1,\n").unwrap();
    let out = splitq(
        &["test", "--data", "bad.csv", "--hypothesis", "grand-mean"],
        &[],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("row 2") && stderr.contains("column 2"), "{stderr}");
}

#[test]
fn simulate_inline_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("rates.csv");
    let svg_path = dir.path().join("rates.svg");
    let out = splitq(
        &[
            "simulate",
            "--a",
            "2",
            "--d",
            "3",
            "--n",
            "8,8",
            "--cov",
            "ar:0.5",
            "--hypothesis",
            "grand-mean",
            "--alt",
            "shift",
            "--delta-grid",
            "0,1.5,3",
            "--reps",
            "60",
            "--upsilon",
            "0.2",
            "--seed",
            "2",
            "--out",
            csv_path.to_str().unwrap(),
            "--svg",
            svg_path.to_str().unwrap(),
        ],
        &[],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("delta,test,rate,se,reps\n"));
    assert_eq!(csv.lines().count(), 1 + 9, "3 tests x 3 deltas: {csv}");
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
    // timing goes to stderr, never into artifacts
    assert!(String::from_utf8(out.stderr).unwrap().contains('s'));
    assert!(!csv.contains("seconds"));
}

#[test]
fn simulate_from_config_file_matches_inline() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{
        "a": 2, "d": 3, "n": [8, 8], "cov": "ar:0.5",
        "hypothesis": "grand-mean", "alternative": "shift",
        "delta_grid": [0.0, 1.5], "alpha": 0.05,
        "replications": 40, "upsilon": 0.2, "seed": 2
    }"#;
    std::fs::write(dir.path().join("cfg.json"), config).unwrap();
    let from_config = splitq(&["simulate", "--config", "cfg.json"], &[], dir.path());
    assert!(from_config.status.success());
    let inline = splitq(
        &[
            "simulate", "--a", "2", "--d", "3", "--n", "8,8", "--cov", "ar:0.5",
            "--hypothesis", "grand-mean", "--alt", "shift", "--delta-grid", "0,1.5",
            "--reps", "40", "--upsilon", "0.2", "--seed", "2",
        ],
        &[],
        dir.path(),
    );
    assert!(inline.status.success());
    assert_eq!(from_config.stdout, inline.stdout);

    // config and inline flags together are rejected by the parser
    let both = splitq(&["simulate", "--config", "cfg.json", "--a", "2"], &[], dir.path());
    assert_eq!(both.status.code(), Some(2));

    // malformed config exits 2
    std::fs::write(dir.path().join("broken.json"), "{\"a\": }").unwrap();
    let broken = splitq(&["simulate", "--config", "broken.json"], &[], dir.path());
    assert_eq!(broken.status.code(), Some(2));
}

#[test]
fn fp_table_grand_mean_is_all_ones() {
    let dir = tempfile::tempdir().unwrap();
    let out = splitq(
        &["fp-table", "--d", "5,50", "--a", "2..5", "--hypothesis", "grand-mean"],
        &[],
        dir.path(),
    );
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("d,a,tau_p"));
    let mut rows = 0;
    for line in lines {
        assert!(line.ends_with(",1.0000000000"), "{line}");
        rows += 1;
    }
    assert_eq!(rows, 8);
}

#[test]
fn limit_reports_regimes() {
    let dir = tempfile::tempdir().unwrap();
    // grand-mean: rank-one spectrum → chi1 regime, gap ≈ 0
    let out = splitq(
        &[
            "limit", "--a", "2", "--d", "4", "--hypothesis", "grand-mean", "--cov", "ar:0.6",
            "--alpha-grid", "0.05", "--samples", "100000", "--seed", "3",
        ],
        &[],
        dir.path(),
    );
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("regime: chi1"), "{stdout}");
    assert!(stdout.contains("beta1 = 1.000000"), "{stdout}");
    let gap: f64 = stdout
        .lines()
        .last()
        .unwrap()
        .split_whitespace()
        .last()
        .unwrap()
        .parse()
        .unwrap();
    assert!(gap.abs() < 0.05, "chi1 regime should have a near-zero gap, got {gap}");

    // high-dimensional interaction with Σ = I → normal regime
    let out = splitq(
        &[
            "limit", "--a", "4", "--d", "600", "--hypothesis", "interaction", "--cov", "identity",
            "--alpha-grid", "0.05", "--samples", "100000", "--seed", "3",
        ],
        &[],
        dir.path(),
    );
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("regime: normal"), "{stdout}");
}

#[test]
fn env_variable_sets_thread_count_without_changing_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate", "--a", "2", "--d", "3", "--n", "8,8", "--cov", "ar:0.5",
        "--hypothesis", "interaction", "--reps", "50", "--upsilon", "0.2", "--seed", "4",
    ];
    let base = splitq(&args, &[], dir.path());
    assert!(base.status.success());
    let with_env = splitq(&args, &[("SPLITQ_THREADS", "3")], dir.path());
    assert!(with_env.status.success());
    assert_eq!(base.stdout, with_env.stdout);

    let bad_env = splitq(&args, &[("SPLITQ_THREADS", "zero")], dir.path());
    assert_eq!(bad_env.status.code(), Some(2));
}
