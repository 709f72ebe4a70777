//! CLI acceptance: byte-identical reproducibility (criterion 10) and the
//! command surface end to end. Runs the real `dtc` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dtc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dtc"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const BENCH: &str = "\
num_users = 101
user_size = 1
capacity = 1
early_penalty = 1/2
late_penalty = 2
grid_step = 0.01
horizon = 100
dynamics = fixation
seed = 5
initial = special
max_days = 5000
snapshot_days = 1,500,900
";

const SMALL: &str = "\
num_users = 9
user_size = 1
capacity = 1
early_penalty = 1/2
late_penalty = 2
grid_step = 0.1
horizon = 20
dynamics = fixation
seed = 11
initial = uniform
max_days = 30000
stuck_threshold = 1000
";

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().expect("spawn dtc");
    assert!(
        output.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

#[test]
fn criterion_10_trajectory_csv_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "small.conf", SMALL);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        run_ok(dtc()
            .arg("run")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(out));
    }
    let bytes_a = fs::read(out_a.join("trajectory.csv")).unwrap();
    let bytes_b = fs::read(out_b.join("trajectory.csv")).unwrap();
    assert_eq!(bytes_a, bytes_b, "trajectory.csv must replay byte-identically");
    let snap_a = fs::read(out_a.join("snapshot_final.csv")).unwrap();
    let snap_b = fs::read(out_b.join("snapshot_final.csv")).unwrap();
    assert_eq!(snap_a, snap_b);
    println!("[PASS] criterion 10 (CLI half): identical (config, seed) gave byte-identical trajectory.csv");
}

#[test]
fn equilibrium_verify_round_trip_holds_and_epsilon_zero_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bench.conf", BENCH);
    let eq_out = dir.path().join("eq");
    run_ok(dtc()
        .arg("equilibrium")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&eq_out));
    let summary = fs::read_to_string(eq_out.join("summary.csv")).unwrap();
    assert!(summary.contains("rho,40,40.000000"));
    assert!(summary.contains("epsilon,3,3.000000"));
    assert!(summary.contains("t_minus,-80,-80.000000"));

    // The emitted profile verifies at epsilon = 3...
    let verify = dtc()
        .arg("verify")
        .arg("--config")
        .arg(&config)
        .arg("--profile")
        .arg(eq_out.join("equilibrium.csv"))
        .output()
        .unwrap();
    assert!(verify.status.success());
    let stdout = String::from_utf8_lossy(&verify.stdout);
    assert!(stdout.contains("verdict: holds"), "stdout: {stdout}");

    // ... and fails at epsilon = 0 with a printed witness, exit code 2.
    let verify0 = dtc()
        .arg("verify")
        .arg("--config")
        .arg(&config)
        .arg("--profile")
        .arg(eq_out.join("equilibrium.csv"))
        .arg("--epsilon")
        .arg("0")
        .output()
        .unwrap();
    assert_eq!(verify0.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&verify0.stdout);
    assert!(stdout.contains("verdict: violated"), "stdout: {stdout}");
}

#[test]
fn run_final_snapshot_matches_equilibrium_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bench.conf", BENCH);
    let eq_out = dir.path().join("eq");
    let run_out = dir.path().join("run");
    run_ok(dtc()
        .arg("equilibrium")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&eq_out));
    run_ok(dtc()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&run_out));
    // Snapshot rows are rank-ordered; user ids may be permuted, every other
    // column must match the closed form exactly.
    let strip_user = |text: &str| -> Vec<String> {
        text.lines()
            .map(|line| {
                line.split_once(',')
                    .map(|(_, rest)| rest.to_string())
                    .unwrap_or_default()
            })
            .collect()
    };
    let eq_rows = strip_user(&fs::read_to_string(eq_out.join("equilibrium.csv")).unwrap());
    let final_rows = strip_user(&fs::read_to_string(run_out.join("snapshot_final.csv")).unwrap());
    assert_eq!(eq_rows, final_rows, "final snapshot must equal the equilibrium row-for-row");
    // Requested snapshots exist.
    for day in [1, 500, 900] {
        assert!(run_out.join(format!("snapshot_day_{day}.csv")).exists());
    }
    assert!(run_out.join("config.resolved").exists());
}

#[test]
fn sweep_scaling_cells_share_the_equilibrium_cost() {
    let dir = tempfile::tempdir().unwrap();
    // A fast sweep: tiny populations, equilibrium initial profile so each
    // cell converges on day 0.
    let config = write_config(
        dir.path(),
        "scale.conf",
        "\
num_users = 101
user_size = 1
capacity = 1
early_penalty = 1/2
late_penalty = 2
grid_step = 0.01
horizon = 100
dynamics = fixation
initial = equilibrium
max_days = 10
",
    );
    let out = dir.path().join("sweep");
    run_ok(dtc()
        .arg("sweep")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--seeds")
        .arg("1,2")
        .arg("--m-list")
        .arg("1,1/2")
        .arg("--p-list")
        .arg("101,201"));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rho_values: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|line| line.rsplit(',').next().unwrap())
        .collect();
    assert_eq!(rho_values.len(), 4);
    assert!(rho_values.iter().all(|rho| *rho == "40"), "csv: {csv}");
    assert!(csv.contains("converged"));
}

#[test]
fn acyclicity_certifies_the_tiny_instance() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "tiny.conf",
        "\
num_users = 2
user_size = 1
capacity = 1
early_penalty = 1/2
late_penalty = 2
grid_step = 0.1
horizon = 1
",
    );
    let out = dir.path().join("acyclic");
    let output = run_ok(dtc()
        .arg("acyclicity")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--emit-edges"));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("is_weakly_acyclic: true"), "stdout: {stdout}");
    assert!(stdout.contains("sinks: 1"));
    let report = fs::read_to_string(out.join("acyclicity.txt")).unwrap();
    assert!(report.contains("nodes: 210"));
    assert!(out.join("edges.txt").exists());

    // Over-budget refusal names the estimate.
    let refused = dtc()
        .arg("acyclicity")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("refused"))
        .arg("--node-budget")
        .arg("10")
        .output()
        .unwrap();
    assert_eq!(refused.status.code(), Some(1));
}

#[test]
fn non_converged_runs_exit_two_with_outputs_written() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "small.conf", SMALL);
    let out = dir.path().join("short");
    let output = dtc()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--max-days")
        .arg("5")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let trajectory = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(trajectory.lines().count(), 7); // header + days 0..=5
    assert!(out.join("snapshot_final.csv").exists());
    assert!(out.join("config.resolved").exists());
}

#[test]
fn initial_profile_file_seeds_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "two.conf",
        "\
num_users = 2
user_size = 1
capacity = 1
early_penalty = 1/2
late_penalty = 2
grid_step = 0.1
horizon = 10
max_days = 0
",
    );
    let profile = write_config(dir.path(), "start.csv", "user,departure\n1,5\n2,-3.5\n");
    let out = dir.path().join("seeded");
    let output = dtc()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--initial")
        .arg(format!("file:{}", profile.display()))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2)); // zero days: not converged
    let trajectory = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let day0 = trajectory.lines().nth(1).unwrap();
    // The earliest departure in the file is -3.5.
    assert!(day0.contains(",-7/2,-3.500000,"), "day 0 row: {day0}");
}

#[test]
fn parse_errors_name_the_line_and_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bad.conf", "num_users = 101\nwhat is this\n");
    let output = dtc()
        .arg("equilibrium")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");

    // Inadmissible grid step names the violated condition.
    let coarse = write_config(
        dir.path(),
        "coarse.conf",
        "\
num_users = 2
user_size = 1
capacity = 1
early_penalty = 1/2
late_penalty = 2
grid_step = 1
horizon = 10
",
    );
    let output = dtc()
        .arg("equilibrium")
        .arg("--config")
        .arg(&coarse)
        .arg("--out")
        .arg(dir.path().join("out2"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("rho/beta"), "stderr: {stderr}");

    // Malformed profile file: line-numbered error.
    let good = write_config(
        dir.path(),
        "ok.conf",
        "\
num_users = 2
user_size = 1
capacity = 1
early_penalty = 1/2
late_penalty = 2
grid_step = 0.1
horizon = 10
",
    );
    let profile = write_config(dir.path(), "bad_profile.csv", "user,departure\n1,0\n2,oops\n");
    let output = dtc()
        .arg("verify")
        .arg("--config")
        .arg(&good)
        .arg("--profile")
        .arg(&profile)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 3"), "stderr: {stderr}");

    // Empty profile file is a parse error.
    let empty = write_config(dir.path(), "empty.csv", "");
    let output = dtc()
        .arg("verify")
        .arg("--config")
        .arg(&good)
        .arg("--profile")
        .arg(&empty)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn decimal_columns_equal_rounded_exact_columns() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "bench.conf", BENCH);
    let out = dir.path().join("eq");
    run_ok(dtc()
        .arg("equilibrium")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out));
    let text = fs::read_to_string(out.join("equilibrium.csv")).unwrap();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        // (exact, decimal) column pairs start at index 2.
        for pair in fields[2..].chunks(2) {
            let exact = dtc_core::rational::parse_rational(pair[0]).unwrap();
            let rendered = dtc_core::rational::decimal_string(&exact, 6);
            assert_eq!(rendered, pair[1], "line: {line}");
        }
    }
}
