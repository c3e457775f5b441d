use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const QUICK: &[&str] = &[
    "--set",
    "train.iterations=4",
    "--set",
    "classifier.epochs=2",
    "--set",
    "synth.test_trials=2",
];

fn asgan(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asgan"))
        .args(args)
        .env("ASGAN_RUN_DIR", root)
        .output()
        .expect("binary runs")
}

/// Runs successfully and returns the run directory printed on stdout.
fn run_ok(root: &Path, args: &[&str]) -> PathBuf {
    let out = asgan(root, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

fn quick(cmd: &str, extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = vec![cmd.into()];
    v.extend(QUICK.iter().map(|s| s.to_string()));
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn synth_data_is_byte_identical_per_seed() {
    let root = tempfile::tempdir().unwrap();
    let a = run_ok(root.path(), &["synth-data", "--seed", "7"]);
    let b = run_ok(root.path(), &["synth-data", "--seed", "7"]);
    assert_ne!(a, b, "each run gets its own directory");
    for i in 0..5 {
        let name = format!("trial_{i}.csv");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name}");
    }
    let c = run_ok(root.path(), &["synth-data", "--seed", "8"]);
    assert_ne!(fs::read(a.join("trial_0.csv")).unwrap(), fs::read(c.join("trial_0.csv")).unwrap());
    assert!(a.join("config.txt").exists() && a.join("run.log").exists());
    let name = a.file_name().unwrap().to_str().unwrap();
    assert!(name.starts_with("synth-data-") && name.contains("-s7"), "{name}");
}

#[test]
fn bench_rows_and_determinism() {
    let root = tempfile::tempdir().unwrap();
    let args = quick("bench", &["--seed", "3", "--augmenters", "none,smote,asgan", "--replicates", "2"]);
    let a = run_ok(root.path(), &strs(&args));
    let b = run_ok(root.path(), &strs(&args));
    let text = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(text, fs::read_to_string(b.join("metrics.csv")).unwrap());
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "augmenter,trial,replicate,ratio,tp,fp,tn,fn,precision,recall,f_score,seed");
    // One row per (augmenter, trial, replicate).
    assert_eq!(lines.len() - 1, 3 * 2 * 2);

    // The snapshot alone reproduces the run.
    let snapshot = a.join("config.txt");
    let c = run_ok(root.path(), &["bench", "--config", snapshot.to_str().unwrap()]);
    assert_eq!(text, fs::read_to_string(c.join("metrics.csv")).unwrap());
    assert_eq!(fs::read(&snapshot).unwrap(), fs::read(c.join("config.txt")).unwrap());

    // A single augment-eval cell equals the first bench replicate.
    let d = run_ok(root.path(), &strs(&quick("augment-eval", &["--seed", "3", "--augmenter", "smote"])));
    let cell = fs::read_to_string(d.join("metrics.csv")).unwrap();
    let expected: Vec<&str> = lines[1..].iter().copied().filter(|l| l.starts_with("smote,") && l.split(',').nth(2) == Some("0")).collect();
    assert_eq!(cell.lines().skip(1).collect::<Vec<_>>(), expected);
}

#[test]
fn train_then_generate() {
    let root = tempfile::tempdir().unwrap();
    let t = run_ok(root.path(), &strs(&quick("train", &["--seed", "2", "--he", "2", "--hf", "1"])));
    let ckpt = t.join("model.asg");
    assert!(ckpt.exists());
    let losses = fs::read_to_string(t.join("losses.csv")).unwrap();
    assert_eq!(losses.lines().count(), 1 + 4);
    let g = run_ok(
        root.path(),
        &strs(&quick("generate", &["--seed", "2", "--checkpoint", ckpt.to_str().unwrap(), "--count", "12"])),
    );
    let dist = fs::read_to_string(g.join("distances.csv")).unwrap();
    assert_eq!(dist.lines().next(), Some("d2,d1"));
    assert_eq!(dist.lines().count(), 1 + 12);
    assert!(g.join("generated.csv").exists() && g.join("generated_signal.csv").exists());

    // A checkpoint for another window length is refused as a data error.
    let out = asgan(
        root.path(),
        &strs(&quick(
            "generate",
            &["--checkpoint", ckpt.to_str().unwrap(), "--set", "window.n=20", "--set", "window.overlap=18"],
        )),
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sweeps_write_rows_and_summary() {
    let root = tempfile::tempdir().unwrap();
    let r = run_ok(
        root.path(),
        &strs(&quick("sweep-ratio", &["--ratios", "0.2,0.33", "--augmenter", "replicate", "--replicates", "2"])),
    );
    let summary = fs::read_to_string(r.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some("ratio,mean_f_score,sd,generated,best"));
    assert_eq!(summary.lines().count(), 3);
    assert_eq!(summary.lines().skip(1).filter(|l| l.ends_with(",1")).count(), 1);

    let h = run_ok(root.path(), &strs(&quick("sweep-hp", &["--he", "1,2", "--hf", "1", "--replicates", "1"])));
    let rows = fs::read_to_string(h.join("rows.csv")).unwrap();
    assert!(rows.starts_with("augmenter,h_e,h_f,trial,replicate,"));
    assert_eq!(rows.lines().count(), 1 + 2 * 2);
}

#[test]
fn exit_codes_by_error_class() {
    let root = tempfile::tempdir().unwrap();
    let unknown = asgan(root.path(), &["bench", "--set", "train.heds=3"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("train.heds"));

    let missing = asgan(root.path(), &["augment-eval", "--set", "data.train=/no/such/file.csv", "--set", "data.tests=/no/such/test.csv"]);
    assert_eq!(missing.status.code(), Some(3));

    let bad_cfg = root.path().join("bad.cfg");
    fs::write(&bad_cfg, "seed = 1\nseed = 2\n").unwrap();
    assert_eq!(asgan(root.path(), &["synth-data", "--config", bad_cfg.to_str().unwrap()]).status.code(), Some(2));

    let no_ckpt = asgan(root.path(), &["generate"]);
    assert_eq!(no_ckpt.status.code(), Some(2));

    // A training trial without abnormal windows fails a precondition.
    let one_label = asgan(root.path(), &strs(&quick("augment-eval", &["--set", "synth.layout=0.1:0.9:normal"])));
    assert_eq!(one_label.status.code(), Some(4));
}

#[test]
fn csv_inputs_are_not_modified() {
    let root = tempfile::tempdir().unwrap();
    let data = run_ok(root.path(), &["synth-data", "--seed", "5", "--trials", "1"]);
    let train = data.join("trial_0.csv");
    let test = data.join("trial_1.csv");
    let before = (fs::read(&train).unwrap(), fs::read(&test).unwrap());
    let assign_train = format!("data.train={}", train.display());
    let assign_test = format!("data.tests={}", test.display());
    let out = run_ok(
        root.path(),
        &strs(&quick("augment-eval", &["--augmenter", "none", "--set", &assign_train, "--set", &assign_test])),
    );
    assert_eq!(fs::read_to_string(out.join("metrics.csv")).unwrap().lines().count(), 2);
    assert_eq!(before, (fs::read(&train).unwrap(), fs::read(&test).unwrap()));
}
