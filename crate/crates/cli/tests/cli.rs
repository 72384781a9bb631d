//! End-to-end tests of the `softfail` binary: the full pipeline at toy
//! scale, artifact determinism, and the exit-code contract.

use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn softfail() -> Command {
    Command::new(env!("CARGO_BIN_EXE_softfail"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn softfail");
    assert!(
        out.status.success(),
        "command failed ({}):\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn file_hash(path: &Path) -> String {
    let bytes = std::fs::read(path).unwrap();
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

const TINY_CONFIG: &str = r#"
seed = 7
output_dir = "unused"

[aging]
initial_gain_db = 21.0
horizon_samples = 30000

[window]
past_len = 8
future_len = 4
stride = 2

[dataset]
target = "log10-ber"

[train]
learning_rate = 1e-3
epochs = 5
hidden_units = 6
dense_units = 5
"#;

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY_CONFIG).unwrap();
    path
}

#[test]
fn pipeline_runs_end_to_end_at_toy_scale() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out = dir.path().join("run");

    run_ok(
        softfail()
            .args(["simulate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out),
    );
    assert!(out.join("trace.csv").is_file());
    assert!(out.join("config_resolved.toml").is_file());

    run_ok(
        softfail()
            .args(["dataset", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .arg("--trace")
            .arg(out.join("trace.csv")),
    );
    assert!(out.join("dataset.txt").is_file());

    run_ok(
        softfail()
            .args(["train", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .arg("--dataset")
            .arg(out.join("dataset.txt")),
    );
    assert!(out.join("model.txt").is_file());
    assert!(out.join("history.csv").is_file());
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_mse,val_mse"));
    assert_eq!(history.lines().count(), 6); // header + 5 epochs

    // re-running training with the same seed overwrites identically
    let first_model = file_hash(&out.join("model.txt"));
    run_ok(
        softfail()
            .args(["train", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .arg("--dataset")
            .arg(out.join("dataset.txt")),
    );
    assert_eq!(first_model, file_hash(&out.join("model.txt")));

    // resuming from the saved checkpoint is reproducible bitwise
    for name in ["resumed_a", "resumed_b"] {
        run_ok(
            softfail()
                .args(["train", "--config"])
                .arg(&config)
                .arg("--out")
                .arg(dir.path().join(name))
                .arg("--dataset")
                .arg(out.join("dataset.txt"))
                .arg("--init-model")
                .arg(out.join("model.txt")),
        );
    }
    assert_eq!(
        file_hash(&dir.path().join("resumed_a").join("model.txt")),
        file_hash(&dir.path().join("resumed_b").join("model.txt"))
    );

    run_ok(
        softfail()
            .args(["evaluate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .arg("--model")
            .arg(out.join("model.txt"))
            .arg("--dataset")
            .arg(out.join("dataset.txt"))
            .arg("--history")
            .arg(out.join("history.csv")),
    );
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.contains("test_mse_normalized"));
    assert!(metrics.contains("test_mse_ber"));
    assert!(out.join("per_pattern_loss.csv").is_file());
    assert!(out.join("training_curve.csv").is_file());

    let compare = run_ok(
        softfail()
            .args(["compare", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .arg("--trace")
            .arg(out.join("trace.csv"))
            .arg("--model")
            .arg(out.join("model.txt"))
            .arg("--dataset")
            .arg(out.join("dataset.txt")),
    );
    let table = String::from_utf8_lossy(&compare.stdout);
    assert!(table.contains("fixed 5 dB"));
    assert!(table.contains("prediction"));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5); // header + 3 fixed + prediction
}

#[test]
fn compare_supports_oracle_and_policy_subsets() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out = dir.path().join("run");
    run_ok(
        softfail()
            .args(["simulate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out),
    );
    run_ok(
        softfail()
            .args(["compare", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .arg("--trace")
            .arg(out.join("trace.csv"))
            .arg("--oracle")
            .args(["--reductions", "5,7"]),
    );
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4); // header + 2 fixed + prediction
}

#[test]
fn same_seed_reproduces_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        run_ok(
            softfail()
                .args(["simulate", "--config"])
                .arg(&config)
                .arg("--out")
                .arg(out)
                .args(["--seed", "99"]),
        );
    }
    assert_eq!(
        file_hash(&a.join("trace.csv")),
        file_hash(&b.join("trace.csv"))
    );

    // a different seed must produce a different trace
    let c = dir.path().join("c");
    run_ok(
        softfail()
            .args(["simulate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&c)
            .args(["--seed", "100"]),
    );
    assert_ne!(
        file_hash(&a.join("trace.csv")),
        file_hash(&c.join("trace.csv"))
    );
}

#[test]
fn samples_flag_overrides_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    // smoke run: 1000-sample trace without calibration targets
    let config_text = TINY_CONFIG.to_string() + "\n[calibration]\nenabled = false\n";
    let config = dir.path().join("smoke.toml");
    std::fs::write(&config, config_text).unwrap();
    run_ok(
        softfail()
            .args(["simulate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--samples", "1000"]),
    );
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let rows = trace.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1001); // column header + 1000 samples
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");

    // unknown config key -> 2
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "definitely_not_a_key = 1\n").unwrap();
    let status = softfail()
        .args(["simulate", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));

    // unreachable calibration target -> 3 (the gain floor sits above the
    // required reduction, so the BER can never cross)
    let uncal = dir.path().join("uncal.toml");
    std::fs::write(
        &uncal,
        "seed = 7\n[aging]\ninitial_gain_db = 5.0\nhorizon_samples = 20000\n",
    )
    .unwrap();
    let status = softfail()
        .args(["simulate", "--config"])
        .arg(&uncal)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(3));

    // divergent training -> 4
    let config = write_tiny_config(dir.path());
    run_ok(
        softfail()
            .args(["simulate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out),
    );
    run_ok(
        softfail()
            .args(["dataset", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .arg("--trace")
            .arg(out.join("trace.csv")),
    );
    let diverge = dir.path().join("diverge.toml");
    std::fs::write(
        &diverge,
        TINY_CONFIG.replace("learning_rate = 1e-3", "learning_rate = 1e200"),
    )
    .unwrap();
    let status = softfail()
        .args(["train", "--config"])
        .arg(&diverge)
        .arg("--out")
        .arg(&out)
        .arg("--dataset")
        .arg(out.join("dataset.txt"))
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(4));

    // missing input file -> 5
    let status = softfail()
        .args(["dataset", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--trace")
        .arg(dir.path().join("no_such_trace.csv"))
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(5));
}
