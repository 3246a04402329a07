use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_LOG2D: &str = r#"
experiment = "log2d"
[run]
num_iter = 3
n = 200
n_runs = 2
algorithms = ["RRM", "RGD", "RRGD", "SFPerfGD", "RPPerfGD"]
[log2d]
gamma = [0.5, 1.0]
"#;

fn performa(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_performa"));
    cmd.args(args).env_remove("PERFORMA_DATA_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run_ok(args: &[&str], envs: &[(&str, &str)]) -> String {
    let out = performa(args, envs);
    assert!(out.status.success(), "{:?}: {}", args, String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn outputs_are_byte_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let config = write(tmp.path(), "c.toml", SMALL_LOG2D);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&["log2d", "--config", &config, "--out", a.to_str().unwrap()], &[("RAYON_NUM_THREADS", "1")]);
    run_ok(&["log2d", "--config", &config, "--out", b.to_str().unwrap()], &[("RAYON_NUM_THREADS", "3")]);
    for name in ["log2d.csv", "log2d_rrm.csv", "log2d_trajectory.csv"] {
        let x = fs::read(a.join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name} differs");
    }
}

#[test]
fn seed_override_changes_results() {
    let tmp = TempDir::new().unwrap();
    let config = write(tmp.path(), "c.toml", SMALL_LOG2D);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&["log2d", "--config", &config, "--out", a.to_str().unwrap()], &[]);
    run_ok(&["log2d", "--config", &config, "--out", b.to_str().unwrap(), "--seed", "99"], &[]);
    assert_ne!(fs::read(a.join("log2d.csv")).unwrap(), fs::read(b.join("log2d.csv")).unwrap());
}

#[test]
fn run_csv_schema_and_row_counts() {
    let tmp = TempDir::new().unwrap();
    let config = write(
        tmp.path(),
        "c.toml",
        "[run]\nnum_iter = 1\nn = 100\nn_runs = 1\n[quad7d]\nsigma = [0.5]\n",
    );
    let out = tmp.path().join("o");
    run_ok(&["quad7d", "--config", &config, "--out", out.to_str().unwrap(), "--inline-rrm"], &[]);
    let main = out.join("quad7d.csv");
    assert_eq!(
        header(&main),
        "experiment,algorithm,sweep_key,sweep_value,run,iteration,theta_norm,risk,accuracy,pi_error,diverged"
    );
    let text = fs::read_to_string(&main).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    let algorithms = ["RRM", "RGD", "RRGD", "SFPerfGD", "RPPerfGD", "RPPerfGD_learn"];
    assert_eq!(rows.len(), algorithms.len());
    for alg in algorithms {
        assert_eq!(rows.iter().filter(|r| r.split(',').nth(1) == Some(alg)).count(), 1, "{alg}");
    }
    assert!(!out.join("quad7d_rrm.csv").exists());
    let traj = header(&out.join("quad7d_trajectory.csv"));
    assert!(traj.starts_with("experiment,algorithm,sweep_key,sweep_value,run,iteration,theta_0,"));
    assert!(traj.ends_with("theta_6"));
}

#[test]
fn rrm_rows_go_to_their_own_file_by_default() {
    let tmp = TempDir::new().unwrap();
    let config = write(tmp.path(), "c.toml", SMALL_LOG2D);
    let out = tmp.path().join("o");
    run_ok(&["log2d", "--config", &config, "--out", out.to_str().unwrap()], &[]);
    let main = fs::read_to_string(out.join("log2d.csv")).unwrap();
    let rrm = fs::read_to_string(out.join("log2d_rrm.csv")).unwrap();
    assert!(main.lines().skip(1).all(|l| l.split(',').nth(1) != Some("RRM")));
    assert!(rrm.lines().skip(1).all(|l| l.split(',').nth(1) == Some("RRM")));
    assert!(rrm.lines().count() > 1);
}

#[test]
fn summarize_reads_back_a_run_table() {
    let tmp = TempDir::new().unwrap();
    let config = write(tmp.path(), "c.toml", SMALL_LOG2D);
    let out = tmp.path().join("o");
    run_ok(&["log2d", "--config", &config, "--out", out.to_str().unwrap()], &[]);
    let summary = run_ok(&["summarize", out.join("log2d.csv").to_str().unwrap()], &[]);
    let mut lines = summary.lines();
    assert!(lines.next().unwrap().starts_with("experiment,algorithm,sweep_key,sweep_value,iteration,n_runs,"));
    // 4 algorithms × 2 gammas × 3 iterations, each over 2 runs.
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), 24);
    assert!(body.iter().all(|l| l.split(',').nth(5) == Some("2")));
}

#[test]
fn non_optimisation_experiments_write_their_tables() {
    let tmp = TempDir::new().unwrap();
    let ev = write(
        tmp.path(),
        "ev.toml",
        "[estimator-variance]\ndims = [2]\nreplications = 200\n",
    );
    let out = tmp.path().join("o");
    run_ok(&["estimator-variance", "--config", &ev, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(
        header(&out.join("estimator-variance.csv")),
        "experiment,estimator,dim,sigma,n,replications,baseline,empirical_trace,analytic_trace,relative_frobenius_error"
    );
    run_ok(&["convexity-profile", "--out", out.to_str().unwrap()], &[]);
    let profile = fs::read_to_string(out.join("convexity-profile.csv")).unwrap();
    assert_eq!(profile.lines().next(), Some("lambda,t,risk"));
    assert_eq!(profile.lines().count(), 1 + 5 * 81);
}

#[test]
fn config_errors_exit_with_code_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let cases = [
        "[run]\nbogus = 1\n",
        "[run]\nnum_iter = 0\n",
        "[pricing]\nsigma = 1.0\n",
        "experiment = \"quad7d\"\n",
    ];
    for text in cases {
        let config = write(tmp.path(), "bad.toml", text);
        let res = performa(&["log2d", "--config", &config, "--out", out.to_str().unwrap()], &[]);
        assert_eq!(res.status.code(), Some(2), "{text}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(String::from_utf8_lossy(&res.stderr).contains("line "), "{text}");
    }
    let res = performa(&["log2d", "--out", out.to_str().unwrap(), "--runs", "0"], &[]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn missing_or_malformed_data_exits_with_code_3() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let res = performa(&["housing", "--out", out.to_str().unwrap(), "--data-dir", empty.to_str().unwrap()], &[]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));

    let bad = write(tmp.path(), "bad.csv", "experiment,algorithm\nlog2d,RGD\n");
    assert_eq!(performa(&["summarize", &bad], &[]).status.code(), Some(3));
}

#[test]
fn housing_runs_on_synthetic_data_from_the_env_directory() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    run_ok(
        &["synth-housing", "--out", data.join("houses.csv").to_str().unwrap(), "--rows", "400"],
        &[],
    );
    let config = write(
        tmp.path(),
        "h.toml",
        "[run]\nnum_iter = 2\nn = 300\nn_runs = 1\n[housing]\nshift_lambda = [1.0]\n",
    );
    let out = tmp.path().join("o");
    run_ok(
        &["housing", "--config", &config, "--out", out.to_str().unwrap()],
        &[("PERFORMA_DATA_DIR", data.to_str().unwrap())],
    );
    let text = fs::read_to_string(out.join("housing.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.starts_with("housing,") && l.contains(",shift_lambda,1,")));
    assert_eq!(text.lines().count(), 1 + 4 * 2);
}
