use std::path::Path;
use std::process::{Command, Output};

use backflow_cli::archive::Archive;
use backflow_cli::commands::{ExtrapolatePayload, LambdaPayload};

const SMALL: [&str; 6] = ["--n0", "200", "--q0", "10", "--iterations", "100"];

fn backflow(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_backflow")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn small(out: &Path, args: &[&str]) -> Output {
    let all: Vec<&str> = args.iter().chain(SMALL.iter()).copied().collect();
    backflow(out, &all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["lambda", "--n0", "0"][..], &["lambda", "--bogus"], &["frobnicate"], &["evolve", "--t-min", "2", "--t-max", "1"], &["lambda", "--workers", "0"]] {
        let o = backflow(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
    let o = backflow(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn lambda_writes_archive_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = backflow(dir.path(), &["lambda", "--n0", "200", "--q0", "10", "--iterations", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("lambda ="));
    let payload: LambdaPayload = Archive::load(&dir.path().join("lambda.json")).unwrap().payload().unwrap();
    assert_eq!(payload.iterations, 1);
    assert_eq!(payload.vector.k.len(), 200);
    let csv = std::fs::read_to_string(dir.path().join("lambda.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# backflow lambda format_version=1"));
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert_eq!(lines.next(), Some("iteration,estimate,residual"));
    assert_eq!(lines.count(), 1);
}

#[test]
fn single_refinement_reports_missing_fit() {
    let dir = tempfile::tempdir().unwrap();
    let o = small(dir.path(), &["extrapolate", "--h-max", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("no fit"), "{}", stdout(&o));
    let payload: ExtrapolatePayload = Archive::load(&dir.path().join("extrapolate.json")).unwrap().payload().unwrap();
    assert!(payload.fits.is_none() && payload.lambda_inf.is_none());
    assert!(payload.fit_error.is_some());
}

#[test]
fn extrapolation_resumes_from_an_earlier_run() {
    let first = tempfile::tempdir().unwrap();
    let o = small(first.path(), &["extrapolate", "--h-max", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!first.path().join("extrapolate.checkpoint.json").exists());
    let earlier: ExtrapolatePayload = Archive::load(&first.path().join("extrapolate.json")).unwrap().payload().unwrap();

    let second = tempfile::tempdir().unwrap();
    let archive = first.path().join("extrapolate.json");
    let o = small(second.path(), &["extrapolate", "--h-max", "5", "--resume", archive.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("resuming with 3 of 5"));
    let resumed: ExtrapolatePayload = Archive::load(&second.path().join("extrapolate.json")).unwrap().payload().unwrap();
    assert_eq!(resumed.h_values, vec![1, 2, 3, 4, 5]);
    assert_eq!(&resumed.lambda_h[..3], &earlier.lambda_h[..]);

    let fresh = tempfile::tempdir().unwrap();
    let o = small(fresh.path(), &["extrapolate", "--h-max", "5"]);
    let direct: ExtrapolatePayload = Archive::load(&fresh.path().join("extrapolate.json")).unwrap().payload().unwrap();
    assert!(o.status.success());
    assert_eq!(direct, resumed);

    // a different protocol cannot be resumed
    let o = backflow(second.path(), &["extrapolate", "--n0", "300", "--q0", "10", "--iterations", "100", "--h-max", "5", "--resume", archive.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn stored_vectors_feed_the_dynamics_commands() {
    let dir = tempfile::tempdir().unwrap();
    assert!(small(dir.path(), &["lambda"]).status.success());
    let vector = dir.path().join("lambda.json");
    let v = vector.to_str().unwrap();
    for args in [
        &["eigenvector", "--vector", v][..],
        &["evolve", "--vector", v, "--t-step", "0.5", "--x-min", "-3", "--x-max", "3"],
        &["current", "--vector", v, "--t-step", "0.05"],
        &["normconv", "--vector", v],
        &["flowlines", "--vector", v, "--dt", "0.01", "--prob-spacing", "0.1", "--x-min", "-5", "--x-max", "5"],
    ] {
        let o = small(dir.path(), args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        assert!(stdout(&o).contains(&format!("{}.json", args[0])), "{}", stdout(&o));
    }
    let csv = std::fs::read_to_string(dir.path().join("evolve.csv")).unwrap();
    assert_eq!(csv.lines().nth(2), Some("t,x,rho,j"));

    // an archive of the wrong kind is a usage error
    let wrong = dir.path().join("normconv.json");
    let o = small(dir.path(), &["current", "--vector", wrong.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn tampered_archives_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(small(dir.path(), &["lambda"]).status.success());
    let path = dir.path().join("lambda.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let at = text.find("\"lambda\": ").unwrap() + 10;
    let tampered = format!("{}9{}", &text[..at], &text[at + 1..]);
    assert_ne!(tampered, text);
    std::fs::write(&path, tampered).unwrap();
    let o = small(dir.path(), &["current", "--vector", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));

    let o = small(dir.path(), &["current", "--vector", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn identical_configurations_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        assert!(small(dir.path(), &["lambda", "--start", "random", "--seed", "5"]).status.success());
        assert!(small(dir.path(), &["extrapolate", "--h-max", "5"]).status.success());
    }
    for name in ["lambda.json", "lambda.csv", "extrapolate.json", "extrapolate.csv", "extrapolate_fits.csv"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}
