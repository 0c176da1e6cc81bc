mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{read_csv, small_config, write_config};

fn desot(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_desot"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_and_version_succeed() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&desot(&["--help"], dir.path())), 0);
    assert_eq!(code(&desot(&["--version"], dir.path())), 0);
    let help = String::from_utf8(desot(&["eval", "--help"], dir.path()).stdout).unwrap();
    for flag in [
        "--config",
        "--mode",
        "--members",
        "--seeds",
        "--temp-scaled",
        "--out",
    ] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn bad_arguments_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["frobnicate"],
        &["eval", "--temp-scaled", "maybe"],
        &["eval", "--seeds", "1,x"],
        &["eval", "--mode", "bogus"],
        &["train", "--members", "0"],
        &["train", "--seeds", "4,4"],
        &["train", "--config", "missing.json"],
        &["gen-data", "--classes", "0", "--out", "x.dset"],
    ];
    for args in cases {
        assert_eq!(code(&desot(args, dir.path())), 1, "{args:?}");
    }
}

#[test]
fn invalid_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"members": 3, "no_such_key": 1}"#,
    )
    .unwrap();
    let out = desot(&["train", "--config", "c.json"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no_such_key"));
    std::fs::write(dir.path().join("c.json"), "{ not json").unwrap();
    assert_eq!(
        code(&desot(&["train", "--config", "c.json"], dir.path())),
        1
    );
}

#[test]
fn stage_before_training_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = desot(&["eval", "--out", "run"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("desot train"));
}

#[test]
fn corrupt_dataset_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.dset"), b"NOPE\x01\x00\x00\x00").unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"dataset": "bad.dset"}"#).unwrap();
    let out = desot(&["train", "--config", "c.json", "--out", "run"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("bad magic"), "{}", stderr(&out));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("blocker"), b"").unwrap();
    let out = desot(
        &["gen-data", "--classes", "4", "--out", "blocker/data.dset"],
        dir.path(),
    );
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn stages_run_one_by_one_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.dataset = Some("signs.dset".into());
    cfg.generator.seed = 9;
    write_config(dir.path(), &cfg);

    let gen = desot(
        &[
            "gen-data",
            "--config",
            "config.json",
            "--seed",
            "9",
            "--out",
            "signs.dset",
        ],
        dir.path(),
    );
    assert_eq!(code(&gen), 0, "{}", stderr(&gen));
    let common = [
        "--config",
        "config.json",
        "--out",
        "run",
        "--seeds",
        "1,2",
        "--members",
        "3",
    ];
    for stage in ["train", "calibrate"] {
        let out = desot(&[&[stage][..], &common[..]].concat(), dir.path());
        assert_eq!(code(&out), 0, "{stage}: {}", stderr(&out));
    }
    let scaled_desot = [&common[..], &["--mode", "desot", "--temp-scaled", "on"][..]].concat();
    for stage in ["eval", "ood", "sweep"] {
        let out = desot(&[&[stage][..], &scaled_desot[..]].concat(), dir.path());
        assert_eq!(code(&out), 0, "{stage}: {}", stderr(&out));
    }
    let run = dir.path().join("run");
    let metrics = read_csv(&run.join("metrics.csv"));
    assert!(metrics
        .iter()
        .all(|r| r["strategy"] == "desot" && r["temp_scaled"] == "on" && r["members"] == "3"));
    let seeds: Vec<&str> = metrics
        .iter()
        .filter(|r| r["subset"] == "all")
        .map(|r| r["seed"].as_str())
        .collect();
    assert_eq!(seeds, ["1", "2", "mean", "std"]);
    assert_eq!(read_csv(&run.join("ood.csv")).len(), 1);
    assert!(run.join("entropy_hist_desot.csv").is_file());
    assert!(!run.join("entropy_hist_sm.csv").exists());
    let sweep = read_csv(&run.join("sweep.csv"));
    assert_eq!(sweep.len(), 2 * 3);
    assert!(sweep.iter().all(|r| r["seed"] == "1"));
    for f in [
        "train.dset",
        "validation.dset",
        "test.dseq",
        "ood.dseq",
        "splits.json",
    ] {
        assert!(run.join("data").join(f).is_file());
    }
    for m in 0..3 {
        assert!(run.join(format!("models/seed2/member{m}.mlpw")).is_file());
    }
}

#[test]
fn run_command_matches_library_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &small_config());
    let out = desot(
        &["run", "--config", "config.json", "--out", "cli"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let lib = dir.path().join("lib");
    desot::pipeline::run_all(&small_config(), &lib).unwrap();
    for f in ["metrics.csv", "ood.csv", "sweep.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("cli").join(f)).unwrap(),
            std::fs::read(lib.join(f)).unwrap(),
            "{f}"
        );
    }
}
