//! Runs the `lwpl` binary end to end on small corpora.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lwpl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lwpl"))
        .current_dir(dir)
        .env("LW_THREADS", "2")
        .args(args)
        .output()
        .expect("spawn lwpl")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Ten separable instances, two features, three classes, with candidate sets.
fn toy_csv(dir: &Path) -> PathBuf {
    let rows = [
        (3.0, 0.1, "0", 0),
        (2.5, -0.2, "0|1", 0),
        (3.2, 0.3, "0|2", 0),
        (2.8, 0.0, "0", 0),
        (-1.5, 2.6, "1", 1),
        (-1.4, 2.4, "1|2", 1),
        (-1.6, 2.9, "0|1", 1),
        (-1.5, -2.6, "2", 2),
        (-1.3, -2.5, "1|2", 2),
        (-1.7, -2.7, "2", 2),
    ];
    let mut text = String::from("f0,f1,candidates,true_label\n");
    for (a, b, c, y) in rows {
        text.push_str(&format!("{a},{b},{c},{y}\n"));
    }
    let path = dir.join("toy.csv");
    fs::write(&path, text).unwrap();
    path
}

fn toy_config(dir: &Path, extra: &str) -> PathBuf {
    toy_csv(dir);
    let cfg = format!(
        "data.source = csv\ndata.path = toy.csv\ndata.val_fraction = 0\ngeneration.kind = none\n\
         trainer.batch_size = 4\ntrainer.learning_rate = 0.1\noutput.dir = out\n{extra}"
    );
    let path = dir.join("toy.cfg");
    fs::write(&path, cfg).unwrap();
    path
}

fn single_subdir(dir: &Path) -> PathBuf {
    let entries: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_dir()).collect();
    assert_eq!(entries.len(), 1, "{entries:?}");
    entries[0].clone()
}

#[test]
fn one_epoch_on_toy_corpus_writes_one_row_and_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    toy_config(tmp.path(), "trainer.epochs = 1\n");
    let out = lwpl(tmp.path(), &["--quiet", "train", "--config", "toy.cfg"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let run = single_subdir(&tmp.path().join("out"));
    let fp = run.file_name().unwrap().to_str().unwrap().to_string();
    let metrics = fs::read_to_string(run.join("seed-0/metrics.csv")).unwrap();
    let rows: Vec<&str> = metrics.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "epoch,lr,mean_risk,train_accuracy,val_accuracy");
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("1,0.1,"));
    assert!(run.join("seed-0/model.bin").is_file());
    for f in ["seed-0/metrics.csv", "seed-0/timing.csv", "seed-0/first_batch.txt", "summary.csv", "config.txt"] {
        let text = fs::read_to_string(run.join(f)).unwrap();
        assert!(text.contains(&fp), "{f} lacks the fingerprint");
    }
}

#[test]
fn repeated_training_gives_identical_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    toy_config(tmp.path(), "trainer.epochs = 5\nseeds = 3,4\n");
    let read_all = |dir: &Path| {
        let run = single_subdir(dir);
        ["seed-3/metrics.csv", "seed-4/metrics.csv", "seed-3/model.bin"].map(|f| fs::read(run.join(f)).unwrap())
    };
    assert!(lwpl(tmp.path(), &["--quiet", "train", "--config", "toy.cfg", "--out", "a"]).status.success());
    assert!(lwpl(tmp.path(), &["--quiet", "train", "--config", "toy.cfg", "--out", "b"]).status.success());
    assert_eq!(read_all(&tmp.path().join("a")), read_all(&tmp.path().join("b")));
}

#[test]
fn seed_flag_overrides_config_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    toy_config(tmp.path(), "trainer.epochs = 1\nseeds = 1,2\n");
    assert!(lwpl(tmp.path(), &["--quiet", "train", "--config", "toy.cfg", "--seed", "9"]).status.success());
    let run = single_subdir(&tmp.path().join("out"));
    assert!(run.join("seed-9").is_dir());
    assert!(!run.join("seed-1").exists());
}

#[test]
fn unknown_key_is_rejected_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    toy_config(tmp.path(), "trainer.epoch = 3\n");
    let out = lwpl(tmp.path(), &["train", "--config", "toy.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("trainer.epoch"), "{}", stderr(&out));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn eval_confusion_rows_sum_to_class_counts() {
    let tmp = tempfile::tempdir().unwrap();
    toy_config(tmp.path(), "trainer.epochs = 60\n");
    assert!(lwpl(tmp.path(), &["--quiet", "train", "--config", "toy.cfg"]).status.success());
    let run = single_subdir(&tmp.path().join("out"));
    let ckpt = run.join("seed-0/model.bin");
    let out = lwpl(tmp.path(), &["eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", "toy.csv", "--out", "ev"]);
    assert!(out.status.success(), "{}", stderr(&out));
    // Separable and memorized: train = test.
    assert!(stdout(&out).contains("accuracy = 1.000000"), "{}", stdout(&out));
    let csv = fs::read_to_string(tmp.path().join("ev/confusion.csv")).unwrap();
    let sums: Vec<usize> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|c| c.parse::<usize>().unwrap()).sum())
        .collect();
    assert_eq!(sums, vec![4, 3, 3]);
}

#[test]
fn eval_rejects_architecture_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    toy_config(tmp.path(), "trainer.epochs = 1\n");
    assert!(lwpl(tmp.path(), &["--quiet", "train", "--config", "toy.cfg"]).status.success());
    let ckpt = single_subdir(&tmp.path().join("out")).join("seed-0/model.bin");
    fs::write(tmp.path().join("wide.csv"), "f0,f1,f2,candidates,true_label\n1,2,3,0,0\n").unwrap();
    let out = lwpl(tmp.path(), &["eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", "wide.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("architecture mismatch"), "{}", stderr(&out));
}

#[test]
fn generate_writes_corpus_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "data.source = gaussian\ndata.k = 10\ndata.d = 9\ndata.n = 4000\ndata.test_n = 50\n\
               generation.kind = uniform\ngeneration.q = 0.1\noutput.dir = out\n";
    fs::write(tmp.path().join("g.cfg"), cfg).unwrap();
    let out = lwpl(tmp.path(), &["generate", "--config", "g.cfg"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let run = single_subdir(&tmp.path().join("out"));
    let manifest = fs::read_to_string(run.join("manifest-seed0.txt")).unwrap();
    let mean: f64 = manifest
        .lines()
        .find_map(|l| l.strip_prefix("mean_set_size = "))
        .unwrap()
        .parse()
        .unwrap();
    // 1 + 9·0.1, with standard deviation sqrt(9·0.09/4000) ≈ 0.0142.
    assert!((mean - 1.9).abs() < 4.0 * 0.0143, "mean set size {mean}");
    assert!(manifest.contains("model_matrix_sha256 = "));
    let corpus = fs::read_to_string(run.join("corpus-seed0.csv")).unwrap();
    assert_eq!(corpus.lines().count(), 4001);
    assert!(run.join("test-seed0.csv").is_file());
}

#[test]
fn sweep_pairs_first_batches_across_betas() {
    let tmp = tempfile::tempdir().unwrap();
    toy_config(tmp.path(), "trainer.epochs = 2\nseeds = 0,1\n");
    let out = lwpl(tmp.path(), &["--quiet", "sweep", "--config", "toy.cfg", "--beta", "0,1,4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let sweep = single_subdir(&tmp.path().join("out"));
    let paired = fs::read_to_string(sweep.join("paired.csv")).unwrap();
    let rows: Vec<Vec<&str>> = paired.lines().skip(2).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for seed in ["0", "1"] {
        let hashes: Vec<&str> = rows.iter().filter(|r| r[0] == seed).map(|r| r[5]).collect();
        assert_eq!(hashes.len(), 3);
        assert!(hashes.iter().all(|h| *h == hashes[0]));
    }
    let summary = fs::read_to_string(sweep.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().nth(1), Some("setting,alpha,beta,seeds,mean_accuracy,std_accuracy"));
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn verify_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["verify", "--k", "2,3,4", "--trials", "50"];
    let exact = lwpl(tmp.path(), &[&args[..], &["--derived", "exact"]].concat());
    assert_eq!(exact.status.code(), Some(0), "{}", stdout(&exact));
    assert!(stdout(&exact).contains("verify status=pass"));

    let mutated = lwpl(tmp.path(), &[&args[..], &["--derived", "exact", "--mutate-beta", "0.1"]].concat());
    assert_eq!(mutated.status.code(), Some(1));

    let vacuous = lwpl(tmp.path(), &["verify", "--trials", "0"]);
    assert_eq!(vacuous.status.code(), Some(0));
    assert!(stderr(&vacuous).contains("warning"));

    let too_many = lwpl(tmp.path(), &["verify", "--k", "17"]);
    assert_eq!(too_many.status.code(), Some(2));
}

#[test]
fn sample_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            lw_cli::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e:#}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
