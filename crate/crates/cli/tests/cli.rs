use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fauforensics"));
    c.env_remove("FF_WORKERS");
    c
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("spawn")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_ok(o: &Output) {
    assert_eq!(code(o), 0, "stderr: {}", stderr(o));
}

/// Failures are exactly one `error:` line.
fn assert_fails(o: &Output, expected: i32) {
    assert_eq!(code(o), expected, "stderr: {}", stderr(o));
    let err = stderr(o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "), "{err}");
}

fn manifest_value(path: &Path, key: &str) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {}", path.display()))
        .to_string()
}

fn generate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec!["generate", "--out", name];
    args.extend_from_slice(extra);
    assert_ok(&run(&args, dir));
    dir.join(name)
}

#[test]
fn train_without_overrides_uses_default_constants() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path(), "c.ffc", &["--count", "4", "--seed", "1"]);
    let o = run(&["train", "--corpus", "c.ffc", "--out", "run", "--latent", "8"], d.path());
    assert_ok(&o);
    let m = d.path().join("run/run.manifest");
    assert_eq!(manifest_value(&m, "config.train.lr0"), "0.0001");
    assert_eq!(manifest_value(&m, "config.train.batch"), "32");
    assert_eq!(manifest_value(&m, "config.train.epochs"), "50");
    assert_eq!(manifest_value(&m, "config.model.lambda_av"), "0.8");
    assert_eq!(manifest_value(&m, "config.model.lambda_a"), "0.1");
    assert_eq!(manifest_value(&m, "config.model.lambda_v"), "0.1");
    assert_eq!(manifest_value(&m, "config.model.head_mode"), "binary");
    assert!(manifest_value(&m, "note.optimizer").starts_with("adamw"));
    // one step per epoch with 4 clips and batch 32
    assert_eq!(manifest_value(&m, "note.steps"), "50");
    let log = fs::read_to_string(d.path().join("run/loss.tsv")).unwrap();
    assert_eq!(log.lines().count(), 50);
}

#[test]
fn gradcheck_passes_on_fixed_seed() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["gradcheck", "--t", "8", "--l", "16", "--report", "gc.txt"], d.path());
    assert_ok(&o);
    let out = stdout(&o);
    assert!(out.starts_with("gradcheck pass"), "{out}");
    let err: f64 = out
        .split_whitespace()
        .find_map(|w| w.strip_prefix("max_rel_err="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(err < 1e-4);
    assert!(d.path().join("gc.txt.run").exists());
}

#[test]
fn gradcheck_failure_exits_three() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["gradcheck", "--t", "3", "--l", "4", "--tolerance", "1e-15"], d.path());
    assert_fails(&o, 3);
}

#[test]
fn eval_on_empty_corpus_exits_two() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path(), "c.ffc", &["--count", "4"]);
    generate(d.path(), "empty.ffc", &["--count", "0"]);
    assert_ok(&run(
        &["train", "--corpus", "c.ffc", "--out", "run", "--latent", "8", "--epochs", "1"],
        d.path(),
    ));
    let o = run(
        &["eval", "--checkpoint", "run/final.ffm", "--corpus", "empty.ffc", "--report", "r.txt"],
        d.path(),
    );
    assert_fails(&o, 2);
    assert!(!d.path().join("r.txt").exists());
}

#[test]
fn usage_and_data_errors_are_distinguished() {
    let d = tempfile::tempdir().unwrap();
    assert_fails(&run(&["train", "--corpus", "x.ffc"], d.path()), 1);
    assert_fails(&run(&["no-such-command"], d.path()), 1);
    assert_fails(&run(&["generate", "--out", "a.ffc", "--count", "4", "--mode", "pixels"], d.path()), 1);
    assert_fails(&run(&["train", "--corpus", "missing.ffc", "--out", "r"], d.path()), 2);
    fs::write(d.path().join("junk.ffc"), b"not a corpus").unwrap();
    assert_fails(&run(&["analyze-correlation", "--corpus", "junk.ffc", "--report", "r"], d.path()), 2);

    generate(d.path(), "c.ffc", &["--count", "4"]);
    assert_fails(&run(&["train", "--corpus", "c.ffc", "--out", "r", "--lr", "-1"], d.path()), 1);
    let o = bin()
        .args(["analyze-correlation", "--corpus", "c.ffc", "--report", "r"])
        .current_dir(d.path())
        .env("FF_WORKERS", "many")
        .output()
        .unwrap();
    assert_fails(&o, 1);
    assert_eq!(code(&run(&["--help"], d.path())), 0);
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path(), "c.ffc", &["--count", "4"]);
    fs::write(
        d.path().join("t.cfg"),
        "# small run\nepochs = 3\nbatch = 2 # two per step\nlatent=8\nlr0=0.001\n",
    )
    .unwrap();
    assert_ok(&run(
        &["train", "--corpus", "c.ffc", "--out", "run", "--config", "t.cfg", "--epochs", "1"],
        d.path(),
    ));
    let m = d.path().join("run/run.manifest");
    assert_eq!(manifest_value(&m, "config.train.epochs"), "1");
    assert_eq!(manifest_value(&m, "config.train.batch"), "2");
    assert_eq!(manifest_value(&m, "config.train.lr0"), "0.001");
    assert_eq!(manifest_value(&m, "config.train.weight_decay"), "0.0001");

    fs::write(d.path().join("bad.cfg"), "epoch=3\n").unwrap();
    assert_fails(
        &run(&["train", "--corpus", "c.ffc", "--out", "r2", "--config", "bad.cfg"], d.path()),
        1,
    );
    fs::write(d.path().join("g.cfg"), "rho_fake=0.5\nframes=10\n").unwrap();
    generate(d.path(), "g.ffc", &["--count", "4", "--config", "g.cfg", "--frames", "12"]);
    let g = d.path().join("g.ffc.run");
    assert_eq!(manifest_value(&g, "config.gen.rho_fake"), "0.5");
    assert_eq!(manifest_value(&g, "config.gen.frames"), "12");
}

#[test]
fn identical_invocations_give_identical_outputs() {
    let d = tempfile::tempdir().unwrap();
    let a = generate(d.path(), "a.ffc", &["--count", "8", "--seed", "9"]);
    let b = bin()
        .args(["--workers", "1", "generate", "--out", "b.ffc", "--count", "8", "--seed", "9"])
        .current_dir(d.path())
        .output()
        .unwrap();
    assert_ok(&b);
    assert_eq!(fs::read(&a).unwrap(), fs::read(d.path().join("b.ffc")).unwrap());

    for out in ["r1", "r2"] {
        assert_ok(&run(
            &["train", "--corpus", "a.ffc", "--out", out, "--latent", "8", "--epochs", "2", "--batch", "4"],
            d.path(),
        ));
    }
    for f in ["final.ffm", "best.ffm", "initial.ffm", "loss.tsv", "epochs.tsv"] {
        let x = fs::read(d.path().join("r1").join(f)).unwrap();
        let y = fs::read(d.path().join("r2").join(f)).unwrap();
        assert!(x == y, "{f} differs between identical runs");
    }
}

#[test]
fn perturb_eval_infer_and_correlation_reports() {
    let d = tempfile::tempdir().unwrap();
    generate(d.path(), "raw.ffc", &["--count", "8", "--mode", "raw", "--seed", "2"]);
    assert_ok(&run(
        &["train", "--corpus", "raw.ffc", "--out", "run", "--latent", "8", "--epochs", "1"],
        d.path(),
    ));
    let o = run(
        &["perturb-eval", "--checkpoint", "run/final.ffm", "--corpus", "raw.ffc", "--report", "p.txt"],
        d.path(),
    );
    assert_ok(&o);
    let grid = fs::read_to_string(d.path().join("p.txt.grid.tsv")).unwrap();
    let rows: Vec<&str> = grid.lines().collect();
    assert_eq!(rows[0], "kind\tlevel\tauc\taccuracy");
    assert_eq!(rows.len(), 1 + 6 * 5);
    let clean = manifest_value(&d.path().join("p.txt"), "auc");
    for r in rows[1..].iter().filter(|r| r.split('\t').nth(1) == Some("0")) {
        assert_eq!(r.split('\t').nth(2).unwrap(), clean);
    }

    let o = run(&["infer", "--checkpoint", "run/final.ffm", "--clip", "raw.ffc", "--index", "5"], d.path());
    assert_ok(&o);
    let line = stdout(&o);
    assert!(line.starts_with("class=") && line.contains("fake_score="), "{line}");
    assert_fails(
        &run(&["infer", "--checkpoint", "run/final.ffm", "--clip", "raw.ffc", "--index", "8"], d.path()),
        2,
    );

    let o = run(&["analyze-correlation", "--corpus", "raw.ffc", "--report", "corr.txt"], d.path());
    assert_ok(&o);
    let text = fs::read_to_string(d.path().join("corr.txt")).unwrap();
    assert!(text.contains("[consecutive_frame_cosine]") && text.contains("[lag1_channel_pearson]"));
}
