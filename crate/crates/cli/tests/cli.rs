use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mifi::data::{keyframe_indices, save_features};
use mifi::numerics::{Rng, Tensor};

fn mifi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mifi"))
        .args(args)
        .output()
        .expect("spawn mifi")
}

fn ok(args: &[&str]) -> String {
    let out = mifi(args);
    assert!(
        out.status.success(),
        "mifi {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small, fast training setup.
fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("cfg.json");
    let text = format!(
        r#"{{
  "epochs": 12,
  "total-epochs": 12,
  "decay-epochs": [6, 9],
  "split": [6, 2, 2],
  "synth": {{ "n-drivers": 10, "dims": [8, 2, 2, 2], "noise-std": 3.0, "clips-per-driver-per-class": 2 }}{extra}
}}"#
    );
    fs::write(&path, text).unwrap();
    path
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, read(&path)));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn synth_default_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let stdout = ok(&["synth", "--out", p(&a), "--seed", "3"]);
    assert!(
        stdout.contains("800 clips (50 drivers x 16 classes)"),
        "{stdout}"
    );
    ok(&["synth", "--out", p(&b), "--seed", "3"]);
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(a.join("manifest.json"))).unwrap();
    assert_eq!(manifest.as_array().unwrap().len(), 800);
    let (sa, sb) = (dir_snapshot(&a), dir_snapshot(&b));
    assert_eq!(sa.len(), 2 + 1600);
    assert!(sa == sb, "same seed produced different directories");
}

#[test]
fn synth_rejects_bad_ambiguity_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"synth": {"view-ambiguity": [[[0, 16]], []]}}"#).unwrap();
    let out = mifi(&[
        "synth",
        "--config",
        p(&cfg),
        "--out",
        p(&tmp.path().join("d")),
    ]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("(0, 16)"), "{err}");
}

#[test]
fn train_writes_reproducible_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["train", "--config", p(&cfg), "--out", p(&a)]);
    ok(&["train", "--config", p(&cfg), "--out", p(&b)]);
    for f in [
        "config.json",
        "head.mifi",
        "head.json",
        "history.csv",
        "metrics.json",
        "confusion.csv",
        "embeddings.csv",
    ] {
        assert!(a.join(f).is_file(), "missing {f}");
        if f != "config.json" {
            assert_eq!(read(a.join(f)), read(b.join(f)), "{f} differs");
        }
    }
    let history = String::from_utf8(read(a.join("history.csv"))).unwrap();
    assert_eq!(history.lines().count(), 13);

    // Re-running from the recorded effective config reproduces the run.
    let c = tmp.path().join("c");
    ok(&[
        "train",
        "--config",
        p(&a.join("config.json")),
        "--out",
        p(&c),
    ]);
    assert_eq!(read(a.join("metrics.json")), read(c.join("metrics.json")));
    assert_eq!(read(a.join("head.mifi")), read(c.join("head.mifi")));

    // Head container: 16 x (D + 1), D = C for temporal concat.
    let head = read(a.join("head.mifi"));
    assert_eq!(&head[..4], b"MIFI");
    assert_eq!(head[5], 2);
    assert_eq!(u32::from_le_bytes(head[8..12].try_into().unwrap()), 16);
    assert_eq!(u32::from_le_bytes(head[12..16].try_into().unwrap()), 9);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), r#", "loss": "fl", "lr": 0.05"#);
    let run = tmp.path().join("r");
    ok(&[
        "train",
        "--config",
        p(&cfg),
        "--loss",
        "asl",
        "--seed",
        "9",
        "--out",
        p(&run),
    ]);
    let effective: serde_json::Value =
        serde_json::from_slice(&read(run.join("config.json"))).unwrap();
    assert_eq!(effective["loss"], "asl");
    assert_eq!(effective["lr"], 0.05);
    assert_eq!(effective["seed"], 9);
}

#[test]
fn ce_and_casl_differ_in_alpha_column() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let (ce, casl) = (tmp.path().join("ce"), tmp.path().join("casl"));
    ok(&[
        "train",
        "--config",
        p(&cfg),
        "--loss",
        "ce",
        "--out",
        p(&ce),
    ]);
    ok(&[
        "train",
        "--config",
        p(&cfg),
        "--loss",
        "casl",
        "--out",
        p(&casl),
    ]);
    let alphas = |dir: &Path| -> Vec<String> {
        String::from_utf8(read(dir.join("history.csv")))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().to_string())
            .collect()
    };
    assert!(alphas(&ce).iter().all(|a| a.is_empty()));
    let cy = alphas(&casl);
    assert_eq!(cy[0], "1");
    assert!(cy.iter().all(|a| !a.is_empty()));
}

#[test]
fn eval_is_stable_and_matches_training_val() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let run = tmp.path().join("run");
    ok(&["train", "--config", p(&cfg), "--out", p(&run)]);

    ok(&["eval", p(&run), "--split", "test"]);
    let first = read(run.join("eval-test/metrics.json"));
    ok(&["eval", p(&run), "--split", "test"]);
    assert_eq!(first, read(run.join("eval-test/metrics.json")));
    assert_eq!(first, read(run.join("metrics.json")));

    ok(&["eval", p(&run), "--split", "val"]);
    let val: serde_json::Value =
        serde_json::from_slice(&read(run.join("eval-val/metrics.json"))).unwrap();
    let side: serde_json::Value = serde_json::from_slice(&read(run.join("head.json"))).unwrap();
    assert_eq!(val["accuracy"], side["best-val-accuracy"]);

    let stdout = ok(&["eval", p(&run), "--view", "1"]);
    assert!(stdout.starts_with("cam1 on test"), "{stdout}");
    assert!(run.join("eval-test-cam1/confusion.csv").is_file());
}

#[test]
fn single_view_training_and_channel_concat_dims() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let (v2, cc) = (tmp.path().join("v2"), tmp.path().join("cc"));
    ok(&["train", "--config", p(&cfg), "--view", "2", "--out", p(&v2)]);
    let side: serde_json::Value = serde_json::from_slice(&read(v2.join("head.json"))).unwrap();
    assert_eq!(side["source"], "cam2");
    ok(&[
        "train",
        "--config",
        p(&cfg),
        "--fusion",
        "concat-c",
        "--out",
        p(&cc),
    ]);
    let side: serde_json::Value = serde_json::from_slice(&read(cc.join("head.json"))).unwrap();
    assert_eq!(side["dim"], 16);
    // A 2C head cannot read a single camera.
    let out = mifi(&["eval", p(&cc), "--view", "1"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn train_from_dataset_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let data = tmp.path().join("data");
    ok(&["synth", "--config", p(&cfg), "--out", p(&data)]);
    let (disk, mem) = (tmp.path().join("disk"), tmp.path().join("mem"));
    ok(&[
        "train",
        "--config",
        p(&cfg),
        "--dataset",
        p(&data),
        "--out",
        p(&disk),
    ]);
    ok(&["train", "--config", p(&cfg), "--out", p(&mem)]);
    assert_eq!(
        read(disk.join("metrics.json")),
        read(mem.join("metrics.json"))
    );
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = tmp.path().join("unknown.json");
    fs::write(&unknown, r#"{"learning-rate": 0.1}"#).unwrap();
    assert_eq!(code(&mifi(&["train", "--config", p(&unknown)])), 2);
    assert_eq!(
        code(&mifi(&[
            "train",
            "--config",
            p(&tmp.path().join("absent.json"))
        ])),
        2
    );
    assert_eq!(
        code(&mifi(&[
            "train",
            "--beta",
            "0",
            "--out",
            p(&tmp.path().join("x"))
        ])),
        2
    );

    let missing = mifi(&[
        "train",
        "--dataset",
        p(&tmp.path().join("nope")),
        "--out",
        p(&tmp.path().join("y")),
    ]);
    assert_eq!(code(&missing), 3);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope"));

    let cfg = small_config(tmp.path(), r#", "lr": 1e300, "loss": "ce""#);
    let blown = mifi(&[
        "train",
        "--config",
        p(&cfg),
        "--out",
        p(&tmp.path().join("z")),
    ]);
    assert_eq!(
        code(&blown),
        4,
        "{}",
        String::from_utf8_lossy(&blown.stderr)
    );
}

#[test]
fn gradcheck_reports_all_kinds() {
    let stdout = ok(&["gradcheck"]);
    for name in ["ce", "fl", "asl", "casl", "head"] {
        assert!(
            stdout
                .lines()
                .any(|l| l.starts_with(name) && l.ends_with("ok")),
            "{name} missing in {stdout}"
        );
    }
    let corrupted = mifi(&["gradcheck", "--cases", "5", "--corrupt-gradient"]);
    assert_ne!(code(&corrupted), 0);
    assert!(String::from_utf8_lossy(&corrupted.stdout).contains("FAIL"));
}

#[test]
fn sweep_alpha_columns() {
    let stdout = ok(&["sweep-alpha", "--betas", "1,4,6", "--total-epochs", "100"]);
    let rows: Vec<Vec<f64>> = stdout
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(stdout.lines().next().unwrap(), "epoch,beta=1,beta=4,beta=6");
    assert_eq!(rows.len(), 101);
    for (e, row) in rows.iter().enumerate() {
        assert_eq!(row[0], e as f64);
        assert_eq!(row[1], 1.0 - e as f64 / 100.0);
        assert_eq!(row[2] == 0.0, e == 25, "beta=4 zero only at 25 (e={e})");
        assert!(row[1..].iter().all(|a| (0.0..=1.0).contains(a)));
    }

    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("alpha.csv");
    ok(&[
        "sweep-alpha",
        "--betas",
        "1,4,6",
        "--total-epochs",
        "100",
        "--out",
        p(&file),
    ]);
    assert_eq!(read(&file), stdout.as_bytes());
    assert_eq!(code(&mifi(&["sweep-alpha", "--betas", "-1"])), 2);
}

#[test]
fn keyframes_on_container() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = Rng::new(4);
    let t = Tensor::from_fn(vec![3, 6, 2, 2], |_| rng.standard_normal() as f32).unwrap();
    let input = tmp.path().join("clip.mifi");
    save_features(&t, &input).unwrap();
    let out = tmp.path().join("keys.mifi");
    let stdout = ok(&["keyframes", p(&input), "-n", "3", "--out", p(&out)]);
    let expected: Vec<String> = keyframe_indices(&t, 1, 3)
        .unwrap()
        .iter()
        .map(|i| i.to_string())
        .collect();
    assert_eq!(stdout.trim(), expected.join(" "));
    let selected = mifi::data::load_features(&out).unwrap();
    assert_eq!(selected.dims(), &[3, 3, 2, 2]);

    assert_eq!(code(&mifi(&["keyframes", p(&input), "-n", "7"])), 3);
    fs::write(tmp.path().join("junk.mifi"), b"JUNK").unwrap();
    assert_eq!(
        code(&mifi(&[
            "keyframes",
            p(&tmp.path().join("junk.mifi")),
            "-n",
            "1"
        ])),
        3
    );
}
