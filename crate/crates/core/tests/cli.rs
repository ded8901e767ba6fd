use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const WORKED: &str = "\
[profile]
gamma = const(-1)
alpha = exp_decay(2)
beta = 0
p = 2

[problem]
g0 = 1
horizon = 30

[certificates]
omega = 1
";

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evostab")).args(args).output().unwrap()
}

fn run_in(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn worked_example_checks_out() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "worked.cfg", WORKED);
    let out = tmp.path().join("out");
    let o = run_in("check", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    let c2 = report
        .lines()
        .skip_while(|l| *l != "[global_bound]")
        .find_map(|l| l.strip_prefix("C2 = "))
        .unwrap();
    assert!((c2.parse::<f64>().unwrap() - 5.0).abs() < 1e-6, "C2 = {c2}");
    let csv = fs::read_to_string(out.join("certificates.csv")).unwrap();
    assert!(csv.starts_with("theorem,verdict,margin,constants,caveats\n"));
    assert!(out.join("manifest.txt").exists());
}

#[test]
fn growing_profile_fails_every_certificate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "grow.cfg",
        "[profile]\ngamma = 1\nalpha = 1\nbeta = 0\np = 2\n[problem]\ng0 = 0.5\nhorizon = 10\n",
    );
    let o = run_in("check", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
}

#[test]
fn malformed_config_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.cfg", "[profile]\ngamma = sin +\nalpha = 0\nbeta = 0\np = 2\n");
    let o = run_in("check", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());

    let o = run_in("check", &tmp.path().join("missing.cfg"), &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_flags_are_input_errors() {
    assert_eq!(run(&["check", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_respects_envelopes_unless_corrupted() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "worked.cfg", WORKED);
    let out = tmp.path().join("sim");
    let o = run_in("simulate", &cfg, &out, &["--dim", "3", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    for name in ["trajectory_scalar.csv", "trajectory_vector.csv", "manifest.txt", "report.txt"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let header = fs::read_to_string(out.join("trajectory_vector.csv")).unwrap();
    assert!(header.starts_with("t,u1,u2,u3,norm\n"));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 5"));
    assert!(manifest.contains("profile_hash = "));

    let o = run_in("simulate", &cfg, &tmp.path().join("bad"), &["--corrupt-envelope", "0.5"]);
    assert_eq!(o.status.code(), Some(4), "{}", stdout(&o));
    assert!(stdout(&o).contains("VIOLATED"));
}

#[test]
fn blowup_reports_no_blowup_for_decaying_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "worked.cfg", WORKED);
    let o = run_in("blowup", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("no blow-up"));
}

#[test]
fn blowup_time_for_pure_nonlinearity() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bu.cfg",
        "[profile]\ngamma = 0\nalpha = 1\nbeta = 0\np = 2\n[problem]\ng0 = 0.5\nhorizon = 5\n",
    );
    let o = run_in("blowup", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    let t0: f64 = text.lines().find_map(|l| l.strip_prefix("t0 = ")).unwrap().parse().unwrap();
    assert!((t0 - 2.0).abs() < 1e-6);
    assert!(text.contains("agreement = yes"));
}

#[test]
fn blowup_refuses_forcing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "forced.cfg", &WORKED.replace("beta = 0", "beta = exp_decay(1)"));
    let o = run_in("blowup", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn batch_mode_returns_the_worst_code() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("configs");
    fs::create_dir(&dir).unwrap();
    write_config(&dir, "a.cfg", WORKED);
    write_config(
        &dir,
        "b.cfg",
        "[profile]\ngamma = 1\nalpha = 1\nbeta = 0\np = 2\n[problem]\ng0 = 0.5\nhorizon = 10\n",
    );
    let o = run(&[
        "check",
        "--batch",
        dir.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
}
