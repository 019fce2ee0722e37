use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use inflow_core::data::load_dataset;

fn inflow(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_inflow"));
    cmd.args(args).env_remove("INFLOW_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.conf");
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = "\
seed = 5
model.hidden = 8
train.data = gaussian_mixture n=300 centers=0.2,0.3 std=0.02 seed=1
train.epochs = 1
train.steps = 5
train.batch = 32
attention.reference_size = 60
attention.permutations = 20
attention.test_batch = 20
detect.data.held = gaussian_mixture n=40 centers=0.2,0.3 std=0.02 seed=2
detect.data.far = gaussian_mixture n=40 centers=3,3 std=0.02 seed=3
";

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn run_ok(args: &[&str]) -> Output {
    let o = inflow(args, &[]);
    assert_eq!(code(&o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn train_detect_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let eval = format!("{SMALL}eval.in = out/scores_held.csv\neval.test.far = out/scores_far.csv\neval.bins = 10\n");
    let cfg = write_config(dir.path(), &eval);
    let cfg = cfg.to_str().unwrap();
    run_ok(&["train", "--config", cfg]);
    let out = dir.path().join("out");
    for f in ["model.ckpt", "reference.csv", "loss.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert_eq!(load_dataset(&out.join("reference.csv")).unwrap().len(), 60);
    let loss = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 6);

    let o = run_ok(&["detect", "--config", cfg]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("far: p_value=0.000 c=0"), "{stdout}");
    let far = std::fs::read_to_string(out.join("scores_far.csv")).unwrap();
    assert_eq!(far.lines().next(), Some("index,batch,loglik,c,label"));
    assert!(far.lines().skip(1).all(|l| l.ends_with(",0,out")), "{far}");
    let summary = std::fs::read_to_string(out.join("summary_far.txt")).unwrap();
    assert!(summary.contains("c=0\n") && summary.contains("out=40\n"), "{summary}");

    run_ok(&["eval", "--config", cfg]);
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    assert!(metrics.contains("far,1.000000,0.000000,1.000000,40,40"), "{metrics}");
    assert!(out.join("histogram.csv").exists() && out.join("histogram.svg").exists());
}

#[test]
fn gendata_round_trips_and_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gendata.data = noise n=100 shape=3x8x8\ngendata.name = noise\n");
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_ok(&["gendata", "--config", cfg, "--out", a.to_str().unwrap(), "--seed", "3"]);
    run_ok(&["gendata", "--config", cfg, "--out", b.to_str().unwrap(), "--seed", "3"]);
    let bytes = std::fs::read(a.join("noise.idx")).unwrap();
    assert_eq!(bytes, std::fs::read(b.join("noise.idx")).unwrap());
    let batch = load_dataset(&a.join("noise.idx")).unwrap();
    assert_eq!(batch.len(), 100);
    assert_eq!(inflow_core::data::encode_idx(&batch).unwrap(), bytes);
}

#[test]
fn usage_errors_exit_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cases =
        ["train.data = missing/file.idx\n", "bogus.key = 1\n", "train.data = gaussian_mixture n=10 std=0.1\n", ""];
    for body in cases {
        let cfg = write_config(dir.path(), body);
        let o = inflow(&["train", "--config", cfg.to_str().unwrap()], &[]);
        assert_eq!(code(&o), 2, "{body:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{body:?} left output behind");
    }
    let o = inflow(&["train", "--config", dir.path().join("nope.conf").to_str().unwrap()], &[]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&inflow(&["train"], &[])), 2);
    assert_eq!(code(&inflow(&["frobnicate", "--config", "x"], &[])), 2);
}

#[test]
fn single_sample_test_set_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL.replace("detect.data.held = gaussian_mixture n=40", "detect.data.held = gaussian_mixture n=1");
    let cfg = write_config(dir.path(), &body);
    let cfg = cfg.to_str().unwrap();
    run_ok(&["train", "--config", cfg]);
    let o = inflow(&["detect", "--config", cfg], &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 2"));
    // The far set is fine, but nothing is written when any set fails.
    assert!(!dir.path().join("out/scores_far.csv").exists());
}

#[test]
fn detect_without_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = inflow(&["detect", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn empty_score_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("in.csv"), "index,loglik\n0,1.5\n").unwrap();
    std::fs::write(dir.path().join("empty.csv"), "index,loglik\n").unwrap();
    let cfg = write_config(dir.path(), "eval.in = in.csv\neval.test.empty = empty.csv\n");
    assert_eq!(code(&inflow(&["eval", "--config", cfg.to_str().unwrap()], &[])), 2);
}

#[test]
fn divergence_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        write_config(dir.path(), &format!("{SMALL}train.lr = 1e6\n").replace("train.steps = 5", "train.steps = 50"));
    let o = inflow(&["train", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged at step"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn thread_cap_is_validated_and_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&inflow(&["train", "--config", cfg], &[("INFLOW_THREADS", "zero")])), 2);
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    for (d, n) in [(&one, "1"), (&four, "4")] {
        let o = inflow(&["train", "--config", cfg, "--out", d.to_str().unwrap()], &[("INFLOW_THREADS", n)]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(std::fs::read(one.join("model.ckpt")).unwrap(), std::fs::read(four.join("model.ckpt")).unwrap());
}
