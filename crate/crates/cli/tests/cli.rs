use std::path::Path;
use std::process::{Command, Output};

fn annoexp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_annoexp"))
        .args(args)
        .env_remove("ANNOEXP_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL: &[&str] = &[
    "--set", "synth.n_train=120",
    "--set", "synth.n_test=40",
    "--set", "synth.dim=6",
    "--set", "seed_epochs=20",
    "--set", "resume_epochs=20",
    "--set", "base_lr=0.01",
    "--set", "seed_fraction=0.05",
];

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().copied().chain(SMALL.iter().copied()).collect()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = annoexp(&["frobnicate"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("frobnicate"));
}

#[test]
fn help_exits_zero() {
    let out = annoexp(&["--help"]);
    assert_eq!(code(&out), 0);
    for sub in ["synth", "train", "eval", "ablate"] {
        assert!(stdout(&out).contains(sub));
    }
}

#[test]
fn config_errors_exit_two_and_name_the_key() {
    let out = annoexp(&["train", "--set", "seed_fraction=1.5"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("seed_fraction"), "{}", stderr(&out));

    let out = annoexp(&["train", "--set", "no_such_key=1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no_such_key"));

    let out = annoexp(&["train", "--set", "seed_fraction"]);
    assert_eq!(code(&out), 2);

    let out = annoexp(&["train", "--config", "/definitely/not/here.cfg"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn config_file_syntax_errors_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# comment\nseed_epochs = 10\nseed_epochs = 20\n").unwrap();
    let out = annoexp(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn runtime_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent");
    let out = annoexp(&["train", "--set", &format!("data_dir={}", missing.display())]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn synth_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let out = annoexp(&with_small(&["synth", "--output-dir", data.to_str().unwrap()]));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["features.csv", "annotations.csv", "split.csv", "schema.txt", "manifest.json"] {
        assert!(data.join(f).is_file(), "{f}");
    }

    let data_key = format!("data_dir={}", data.display());
    let mut args = with_small(&["train", "--output-dir", run.to_str().unwrap(), "--set", &data_key]);
    args.extend(["--set", "request_fraction=0.05"]);
    let out = annoexp(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("mean±std"));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    let final_acc = report["runs"][0]["final_metrics"]["malignancy_accuracy"].as_f64().unwrap();
    let last = report["runs"][0]["per_status"].as_array().unwrap().last().unwrap()["status"].as_u64().unwrap();

    // evaluating the last checkpoint reproduces the reported metrics
    let ckpt = run.join(format!("repeat_0/checkpoints/st{last}"));
    let out = annoexp(&["eval", "--json", "--checkpoint", ckpt.to_str().unwrap(), "--set", &data_key]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let metrics: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(metrics["malignancy_accuracy"].as_f64().unwrap(), final_acc);
    assert_eq!(metrics, report["runs"][0]["final_metrics"]);

    let out = annoexp(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--set", &data_key]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("P(K=k)"));
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let out = annoexp(&with_small(&["train", "--output-dir", first.to_str().unwrap()]));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let echo = first.join("config.txt");
    let again = dir.path().join("again");
    let out = annoexp(&["train", "--config", echo.to_str().unwrap(), "--output-dir", again.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let read = |d: &Path| std::fs::read(d.join("report.json")).unwrap();
    assert_eq!(read(&first), read(&again));
}

#[test]
fn output_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from_env");
    let out = Command::new(env!("CARGO_BIN_EXE_annoexp"))
        .args(with_small(&["train"]))
        .current_dir(dir.path())
        .env("ANNOEXP_OUTPUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(target.join("manifest.json").is_file());
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn ablate_writes_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("ablation");
    let mut args = with_small(&["ablate", "--output-dir", run.to_str().unwrap(), "--budgets", "0.1,0.05"]);
    args.extend(["--set", "n_repeats=2"]);
    let out = annoexp(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(run.join("ablation.txt")).unwrap();
    for row in ["random_baseline", "random_seeding", "entropy_acquisition", "static_pseudo", "full"] {
        assert!(text.contains(row), "{row} missing from\n{text}");
    }
    assert!(run.join("ablation.csv").is_file());
    assert!(run.join("ablation.json").is_file());

    let out = annoexp(&["ablate", "--budgets", "1.5"]);
    assert_eq!(code(&out), 2);
}
