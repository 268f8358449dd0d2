use std::path::Path;
use std::process::{Command, Output};

fn simtop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simtop")).args(args).output().expect("binary runs")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn single_epoch_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = simtop(&["--benchmark", "diffuser", "--grid", "16", "16", "--epochs", "1", "--seed", "3", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["history", "u", "v", "p", "rho", "r1", "r2", "r3", "density_e1"] {
        assert!(dir.path().join(format!("{f}_s3.csv")).exists(), "{f}");
    }
    for f in ["density_s3.pgm", "summary_s3.txt", "theta_s3.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let hist = String::from_utf8(read(dir.path(), "history_s3.csv")).unwrap();
    assert_eq!(hist.lines().count(), 2);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().any(|l| l == "status=ok"));
    assert!(stdout.lines().any(|l| l == "seed=3"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = simtop(&["--benchmark", "pipe-bend", "--grid", "16", "16", "--epochs", "3", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success());
    }
    for f in ["history_s0.csv", "rho_s0.csv", "density_s0.pgm", "theta_s0.txt"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(simtop(&["--benchmark", "rugby", "--grid", "8", "8", "--out", out]).status.code(), Some(2));
    assert_eq!(simtop(&["--benchmark", "rugby", "--epochs", "0", "--out", out]).status.code(), Some(2));
    assert_eq!(simtop(&["--benchmark", "nozzle", "--out", out]).status.code(), Some(2));
    assert_eq!(simtop(&["--out", out]).status.code(), Some(2));
    let cfg = dir.path().join("unbalanced.toml");
    std::fs::write(
        &cfg,
        "name = \"leak\"\nvolume = 0.4\n[[segment]]\nedge = \"left\"\ninterval = [0.25, 0.75]\nu = { kind = \"parabolic\", peak = 1.0 }\nv = { kind = \"zero\" }\n",
    )
    .unwrap();
    let o = simtop(&["--config", cfg.to_str().unwrap(), "--grid", "16", "16", "--epochs", "1", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("flux"));
    let o = simtop(&["--benchmark", "rugby", "--epochs", "5", "--snapshot-epochs", "1,9", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diverging_training_exits_with_one_and_keeps_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("stiff.toml");
    std::fs::write(
        &cfg,
        "name = \"stiff\"\nvolume = 0.5\n[material]\nkmax = 1e300\nkmin = 0.0\nq = 0.1\n[[segment]]\nedge = \"left\"\ninterval = [0.0, 1.0]\nu = { kind = \"uniform\", peak = 1.0 }\nv = { kind = \"zero\" }\n[[segment]]\nedge = \"right\"\ninterval = [0.0, 1.0]\nu = { kind = \"uniform\", peak = 1.0 }\nv = { kind = \"zero\" }\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = simtop(&["--config", cfg.to_str().unwrap(), "--grid", "16", "16", "--epochs", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged"));
    let summary = String::from_utf8(read(&out, "summary_s0.txt")).unwrap();
    assert!(summary.contains("status=aborted"));
    assert!(out.join("history_s0.csv").exists());
}

#[test]
fn sweep_reports_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = simtop(&["--benchmark", "rugby", "--grid", "16", "16", "--epochs", "2", "--sweep", "2", "--seed", "5", "--out", out]);
    assert!(o.status.success());
    assert!(dir.path().join("summary_s5.txt").exists());
    assert!(dir.path().join("summary_s6.txt").exists());
    let text = String::from_utf8(read(dir.path(), "sweep.txt")).unwrap();
    for key in ["J_mean=", "J_median=", "J_std=", "J_min=", "J_max=", "failed=0"] {
        assert!(text.contains(key), "{key} missing in\n{text}");
    }
}

#[test]
fn burgers_demo_runs_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = simtop(&["--benchmark", "burgers-demo", "--grid", "17", "9", "--epochs", "4", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let hist = String::from_utf8(read(dir.path(), "burgers_history_s0.csv")).unwrap();
    assert_eq!(hist.lines().count(), 5);
    assert!(dir.path().join("burgers_u_s0.csv").exists());
}
