//! End-to-end tests of the `uavsim` binary: subcommand flows, exit codes,
//! byte-identical reruns, and atomic output files. Every test invokes the
//! compiled binary through its public interface only.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

const BIN: &str = env!("CARGO_BIN_EXE_uavsim");

fn uavsim(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .expect("binary spawns")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is UTF-8")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is UTF-8")
}

/// Stdout minus the `wrote ... to <path>` echo lines, which legitimately
/// differ when two otherwise identical runs write to different paths.
fn stdout_without_write_echoes(out: &Output) -> String {
    stdout_of(out)
        .lines()
        .filter(|l| !l.starts_with("wrote "))
        .collect::<Vec<_>>()
        .join("\n")
}

fn assert_exit(out: &Output, code: i32, context: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{context}: expected exit {code}, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        stdout_of(out),
        stderr_of(out)
    );
}

// ===== simulate =====

#[test]
fn simulate_default_run_succeeds_quickly() {
    let started = Instant::now();
    let out = uavsim(&["simulate"]);
    let elapsed = started.elapsed();

    assert_exit(&out, 0, "default simulate");
    let text = stdout_of(&out);
    assert!(text.contains("policy=icl"), "default policy is reported: {text}");
    assert!(text.contains("generated="), "ledger line is reported: {text}");
    assert!(
        elapsed.as_secs_f64() < 5.0,
        "default episode must finish in under 5 s, took {elapsed:?}"
    );
}

#[test]
fn simulate_reruns_byte_identically() {
    let dir = tempfile::tempdir().expect("temp dir");
    let csv_a = dir.path().join("a.csv");
    let csv_b = dir.path().join("b.csv");
    let args = |path: &Path| {
        vec![
            "simulate".to_string(),
            "--seed".to_string(),
            "3".to_string(),
            "--policy".to_string(),
            "greedy".to_string(),
            "--out".to_string(),
            path.display().to_string(),
        ]
    };

    let first = Command::new(BIN).args(args(&csv_a)).output().expect("binary spawns");
    let second = Command::new(BIN).args(args(&csv_b)).output().expect("binary spawns");
    assert_exit(&first, 0, "first run");
    assert_exit(&second, 0, "second run");

    assert_eq!(
        stdout_without_write_echoes(&first),
        stdout_without_write_echoes(&second),
        "stdout must not vary between identical runs"
    );
    let bytes_a = fs::read(&csv_a).expect("first CSV written");
    let bytes_b = fs::read(&csv_b).expect("second CSV written");
    assert!(!bytes_a.is_empty(), "CSV has content");
    assert_eq!(bytes_a, bytes_b, "episode CSV must be byte-identical across runs");
}

#[test]
fn simulate_writes_a_step_trace() {
    let dir = tempfile::tempdir().expect("temp dir");
    let trace = dir.path().join("ep.jsonl");
    let out = uavsim(&[
        "simulate",
        "--seed",
        "1",
        "--set",
        "sim.steps=4",
        "--trace",
        trace.to_str().expect("utf-8 path"),
    ]);
    assert_exit(&out, 0, "simulate with trace");

    let text = fs::read_to_string(&trace).expect("trace written");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 4, "one meta line plus one line per step");
    assert!(lines[0].contains("\"version\""), "meta line carries the tool version");
    for line in &lines {
        assert!(line.starts_with('{') && line.ends_with('}'), "JSON object per line: {line}");
    }
}

#[test]
fn config_file_applies_and_overrides_win() {
    let dir = tempfile::tempdir().expect("temp dir");
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "[sim]\nsteps = 5\nseed = 9\n").expect("config written");

    let from_file = uavsim(&["simulate", "--config", cfg.to_str().expect("utf-8 path")]);
    assert_exit(&from_file, 0, "simulate with config file");
    assert!(
        stdout_of(&from_file).contains("steps=5"),
        "file value applies: {}",
        stdout_of(&from_file)
    );

    let overridden = uavsim(&[
        "simulate",
        "--config",
        cfg.to_str().expect("utf-8 path"),
        "--set",
        "sim.steps=7",
    ]);
    assert_exit(&overridden, 0, "simulate with override");
    assert!(
        stdout_of(&overridden).contains("steps=7"),
        "--set overrides the file: {}",
        stdout_of(&overridden)
    );
}

// ===== exit codes =====

#[test]
fn configuration_problems_exit_with_code_two() {
    for (context, args) in [
        ("zero sensors", vec!["simulate", "--set", "sim.sensors=0"]),
        ("unknown key", vec!["simulate", "--set", "sim.does_not_exist=1"]),
        ("malformed override", vec!["simulate", "--set", "no-equals-sign"]),
        ("unknown policy", vec!["simulate", "--policy", "optimal"]),
        ("reversed seed range", vec!["compare", "--seeds", "5..2"]),
        ("empty seed range", vec!["compare", "--seeds", "4..4"]),
        ("duplicate seeds", vec!["compare", "--seeds", "1,1"]),
        ("duplicate policies", vec!["compare", "--policies", "greedy,greedy"]),
        ("unknown sweep axis", vec!["sweep", "--axis", "altitude", "--values", "1,2"]),
        (
            "non-increasing sweep values",
            vec!["sweep", "--axis", "uavs", "--values", "3,3"],
        ),
        ("zero jobs", vec!["compare", "--seeds", "0..2", "--jobs", "0"]),
    ] {
        let out = uavsim(&args);
        assert_exit(&out, 2, context);
        assert!(
            !stderr_of(&out).is_empty(),
            "{context}: a config failure explains itself on stderr"
        );
    }
}

#[test]
fn runtime_failures_exit_with_code_three() {
    // A zero waypoint offset parks a UAV exactly over a sensor, where the
    // loss model has no defined value.
    let out = uavsim(&["simulate", "--set", "world.waypoint_offset_m=0"]);
    assert_exit(&out, 3, "overhead hover");
    assert!(
        stderr_of(&out).contains("runtime"),
        "failure is reported as a runtime error: {}",
        stderr_of(&out)
    );
}

#[test]
fn io_failures_exit_with_code_four_and_leave_nothing_behind() {
    let missing_cfg = uavsim(&["simulate", "--config", "/does/not/exist.cfg"]);
    assert_exit(&missing_cfg, 4, "missing config file");

    let dir = tempfile::tempdir().expect("temp dir");
    let target_dir = dir.path().join("not-created");
    let target = target_dir.join("out.csv");
    let out = uavsim(&[
        "simulate",
        "--set",
        "sim.steps=2",
        "--out",
        target.to_str().expect("utf-8 path"),
    ]);
    assert_exit(&out, 4, "unwritable output path");
    assert!(!target_dir.exists(), "failed write must not create directories");
    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .expect("temp dir listable")
        .map(|e| e.expect("entry").file_name())
        .collect();
    assert!(leftovers.is_empty(), "failed write left files behind: {leftovers:?}");
}

// ===== compare =====

#[test]
fn compare_reports_each_policy_and_writes_csv() {
    let dir = tempfile::tempdir().expect("temp dir");
    let csv = dir.path().join("cmp.csv");
    let out = uavsim(&[
        "compare",
        "--seeds",
        "0..3",
        "--policies",
        "max_gain,greedy",
        "--set",
        "sim.steps=6",
        "--out",
        csv.to_str().expect("utf-8 path"),
    ]);
    assert_exit(&out, 0, "compare");

    let text = stdout_of(&out);
    assert!(text.contains("max_gain") && text.contains("greedy"), "table lists both: {text}");

    let written = fs::read_to_string(&csv).expect("summary written");
    let data_rows = written.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(data_rows, 1 + 2, "header plus one row per policy:\n{written}");
}

#[test]
fn compare_results_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().expect("temp dir");
    let serial_csv = dir.path().join("serial.csv");
    let parallel_csv = dir.path().join("parallel.csv");
    let run = |jobs: &str, path: &Path| {
        uavsim(&[
            "compare",
            "--seeds",
            "0..4",
            "--policies",
            "greedy,random",
            "--jobs",
            jobs,
            "--set",
            "sim.steps=5",
            "--out",
            path.to_str().expect("utf-8 path"),
        ])
    };

    let serial = run("1", &serial_csv);
    let parallel = run("3", &parallel_csv);
    assert_exit(&serial, 0, "serial compare");
    assert_exit(&parallel, 0, "parallel compare");
    assert_eq!(
        stdout_without_write_echoes(&serial),
        stdout_without_write_echoes(&parallel),
        "job count must not change the table"
    );
    assert_eq!(
        fs::read(&serial_csv).expect("serial CSV"),
        fs::read(&parallel_csv).expect("parallel CSV"),
        "job count must not change the CSV bytes"
    );
}

#[test]
fn seed_range_and_seed_list_are_interchangeable() {
    let range = uavsim(&["compare", "--seeds", "0..3", "--policies", "greedy", "--set", "sim.steps=4"]);
    let list = uavsim(&["compare", "--seeds", "0,1,2", "--policies", "greedy", "--set", "sim.steps=4"]);
    assert_exit(&range, 0, "range form");
    assert_exit(&list, 0, "list form");
    assert_eq!(range.stdout, list.stdout, "equivalent seed spellings agree");
}

// ===== sweep =====

#[test]
fn sweep_emits_one_row_per_point_and_policy() {
    let dir = tempfile::tempdir().expect("temp dir");
    let csv = dir.path().join("sweep.csv");
    let out = uavsim(&[
        "sweep",
        "--axis",
        "uavs",
        "--values",
        "1,2",
        "--seeds",
        "0..2",
        "--policies",
        "max_gain,greedy",
        "--set",
        "sim.steps=4",
        "--out",
        csv.to_str().expect("utf-8 path"),
    ]);
    assert_exit(&out, 0, "sweep");

    let text = stdout_of(&out);
    assert!(text.contains("uavs=1") && text.contains("uavs=2"), "points labeled: {text}");

    let written = fs::read_to_string(&csv).expect("sweep written");
    let data_rows = written.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(data_rows, 1 + 2 * 2, "header plus points x policies rows:\n{written}");
}

// ===== train-attention =====

#[test]
fn training_saves_a_reloadable_checkpoint_and_log() {
    let dir = tempfile::tempdir().expect("temp dir");
    let log = dir.path().join("train.csv");
    let ckpt = dir.path().join("params.txt");
    let args = [
        "train-attention",
        "--seed",
        "5",
        "--episodes",
        "2",
        "--set",
        "sim.steps=6",
        "--out",
        log.to_str().expect("utf-8 path"),
        "--params-out",
        ckpt.to_str().expect("utf-8 path"),
    ];

    let first = uavsim(&args);
    assert_exit(&first, 0, "training run");
    assert!(stdout_of(&first).contains("episode 0:"), "per-episode lines: {}", stdout_of(&first));

    let checkpoint = fs::read_to_string(&ckpt).expect("checkpoint written");
    assert!(
        checkpoint.starts_with("uavsim-attention-params v1"),
        "checkpoint header present: {}",
        checkpoint.lines().next().unwrap_or("")
    );

    let log_text = fs::read_to_string(&log).expect("log written");
    let data_rows = log_text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(data_rows, 1 + 2, "header plus one row per episode:\n{log_text}");

    let log_b = dir.path().join("train_b.csv");
    let ckpt_b = dir.path().join("params_b.txt");
    let mut rerun_args: Vec<&str> = args.to_vec();
    rerun_args[8] = log_b.to_str().expect("utf-8 path");
    rerun_args[10] = ckpt_b.to_str().expect("utf-8 path");
    let second = uavsim(&rerun_args);
    assert_exit(&second, 0, "training rerun");
    assert_eq!(
        fs::read(&ckpt).expect("first checkpoint"),
        fs::read(&ckpt_b).expect("second checkpoint"),
        "training is deterministic in the base seed"
    );
}
