use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use fauforensics::config::{fmt_sig17, KeyValues};
use fauforensics::corpus::{generate_split, ClipLabel, read_corpus, write_corpus, Corpus, GenConfig, VideoMode};
use fauforensics::eval::{analyze_correlation, run_eval, EvalOptions};
use fauforensics::gradcheck::{gradcheck, GradcheckConfig};
use fauforensics::model::{load_checkpoint, ClipInput, HeadMode, Model, ModelConfig};
use fauforensics::audio::LogMel;
use fauforensics::par::derive_seed;
use fauforensics::train::{train_to_dir, TrainConfig, BEST_CKPT, EPOCH_LOG, FINAL_CKPT, INITIAL_CKPT, LOSS_LOG, OPTIMIZER_NOTE};
use fauforensics::{Error, Result};

use crate::manifest::{beside, inside, RunManifest};
use crate::{Command, CorrelationArgs, EvalArgs, Failure, GenerateArgs, GradcheckArgs, InferArgs, TrainArgs};

pub fn run(cmd: Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::Generate(a) => generate(a)?,
        Command::Train(a) => train(a)?,
        Command::Eval(a) => eval(a, false)?,
        Command::PerturbEval(a) => eval(a, true)?,
        Command::Gradcheck(a) => return grad(a),
        Command::AnalyzeCorrelation(a) => correlation(a)?,
        Command::Infer(a) => infer(a)?,
    }
    Ok(())
}

/// Reads a `key=value` file, rejecting keys outside `allowed`.
fn config_file(path: &Path, allowed: &BTreeSet<String>) -> Result<KeyValues> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let kv = KeyValues::parse(&text)?;
    if let Some((k, _)) = kv.iter().find(|(k, _)| !allowed.contains(*k)) {
        return Err(Error::Config(format!("unknown config key {k:?} in {}", path.display())));
    }
    Ok(kv)
}

fn keys(kvs: &[KeyValues]) -> BTreeSet<String> {
    kvs.iter().flat_map(|kv| kv.iter().map(|(k, _)| k.to_string())).collect()
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut cfg = GenConfig::default();
    if let Some(p) = &a.config {
        cfg.apply_kv(&config_file(p, &keys(&[cfg.to_kv()]))?)?;
    }
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if let Some(t) = a.frames {
        cfg.frames = t;
    }
    cfg.validate()?;
    let mut run = RunManifest::start("generate", Some(a.seed));
    run.config("gen", &cfg.to_kv());
    let clips = generate_split(a.seed, a.count, &cfg)?;
    let corpus = Corpus::new(cfg.mode, cfg.frames, clips)?;
    write_corpus(&a.out, &corpus)?;
    run.output("corpus", &a.out);
    run.finish(&beside(&a.out))
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    read_corpus(path).map_err(|e| match e {
        Error::Io(io) => Error::Input(format!("cannot read corpus {}: {io}", path.display())),
        other => other,
    })
}

fn load_model(path: &Path) -> Result<(Model, KeyValues)> {
    let ck = load_checkpoint(path).map_err(|e| match e {
        Error::Io(io) => Error::Input(format!("cannot read checkpoint {}: {io}", path.display())),
        other => other,
    })?;
    Ok((ck.model, ck.notes))
}

/// A checkpoint and a corpus that disagree on layout are a data error.
fn check_compatible(cfg: &ModelConfig, corpus: &Corpus) -> Result<()> {
    if corpus.mode != cfg.video_mode || corpus.frames != cfg.frames {
        return Err(Error::Input(format!(
            "corpus is {}/{} frames, checkpoint expects {}/{}",
            corpus.mode, corpus.frames, cfg.video_mode, cfg.frames
        )));
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let mut mc = ModelConfig {
        frames: corpus.frames,
        video_mode: corpus.mode,
        ..ModelConfig::default()
    };
    if let (VideoMode::Feature, Some(c)) = (corpus.mode, corpus.clips.first()) {
        mc.video_dim = c.video.shape()[1];
        mc.fau_dim = c.fau.shape()[1];
    }
    let mut tc = TrainConfig::default();
    if let Some(p) = &a.config {
        let kv = config_file(p, &keys(&[mc.to_kv(), tc.to_kv()]))?;
        mc.apply_kv(&kv)?;
        tc.apply_kv(&kv)?;
    }
    let set = |slot: &mut f64, v: Option<f64>| v.into_iter().for_each(|v| *slot = v);
    set(&mut tc.lr0, a.lr);
    set(&mut tc.weight_decay, a.weight_decay);
    set(&mut mc.lambda_av, a.lambda_av);
    set(&mut mc.lambda_a, a.lambda_a);
    set(&mut mc.lambda_v, a.lambda_v);
    if let Some(v) = a.epochs {
        tc.epochs = v;
    }
    if let Some(v) = a.batch {
        tc.batch = v;
    }
    if let Some(v) = a.seed {
        tc.seed = v;
    }
    if let Some(v) = a.head_mode {
        mc.head_mode = v;
    }
    if let Some(v) = a.latent {
        mc.latent = v;
    }
    mc.validate()?;
    tc.validate()?;
    check_compatible(&mc, &corpus)?;
    if corpus.clips.is_empty() {
        return Err(Error::Input(format!("training corpus {} is empty", a.corpus.display())));
    }

    let mut run = RunManifest::start("train", Some(tc.seed));
    run.config("model", &mc.to_kv());
    run.config("train", &tc.to_kv());
    run.input("corpus", &a.corpus);
    run.note("optimizer", OPTIMIZER_NOTE);
    let model = Model::new(mc, derive_seed(tc.seed, 1))?;
    let out = train_to_dir(model, &corpus.clips, &tc, &a.out)?;
    for name in [INITIAL_CKPT, FINAL_CKPT, BEST_CKPT, LOSS_LOG, EPOCH_LOG] {
        run.output(name, &a.out.join(name));
    }
    run.note("best_epoch", out.best_epoch);
    run.note("steps", out.steps.len());
    if let Some(last) = out.steps.last() {
        run.note("final_loss", fmt_sig17(last.total));
    }
    run.finish(&inside(&a.out))
}

fn grid_path(report: &Path) -> PathBuf {
    let mut s = report.as_os_str().to_owned();
    s.push(".grid.tsv");
    PathBuf::from(s)
}

fn eval(a: EvalArgs, perturbations: bool) -> Result<()> {
    let (model, notes) = load_model(&a.checkpoint)?;
    let corpus = load_corpus(&a.corpus)?;
    if corpus.clips.is_empty() {
        return Err(Error::Input(format!("evaluation corpus {} is empty", a.corpus.display())));
    }
    check_compatible(&model.config, &corpus)?;
    if perturbations && corpus.mode != VideoMode::Raw {
        return Err(Error::Input("perturb-eval needs a raw-mode corpus".into()));
    }
    let command = if perturbations { "perturb-eval" } else { "eval" };
    let mut run = RunManifest::start(command, None);
    run.config("model", &model.config.to_kv());
    run.config("checkpoint", &notes);
    run.input("checkpoint", &a.checkpoint);
    run.input("corpus", &a.corpus);
    let report = run_eval(&model, &corpus.clips, EvalOptions { perturbations })?;
    fs::write(&a.report, report.to_text())?;
    run.output("report", &a.report);
    if perturbations {
        let grid = grid_path(&a.report);
        fs::write(&grid, report.grid_tsv())?;
        run.output("grid", &grid);
    }
    println!(
        "accuracy={} auc={} n={}",
        fmt_sig17(report.accuracy),
        fmt_sig17(report.auc),
        report.n_samples
    );
    run.finish(&beside(&a.report))
}

fn grad(a: GradcheckArgs) -> std::result::Result<(), Failure> {
    let mut cfg = GradcheckConfig {
        frames: a.frames,
        latent: a.latent,
        batch: a.batch,
        tolerance: a.tolerance,
        ..GradcheckConfig::default()
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let mut run = RunManifest::start("gradcheck", Some(cfg.seed));
    let report = gradcheck(&cfg)?;
    let status = if report.passed() { "pass" } else { "fail" };
    let summary = format!(
        "gradcheck {status}: max_rel_err={} worst={} checked={} tolerance={}",
        fmt_sig17(report.max_rel_err),
        report.worst,
        report.checked,
        report.tolerance
    );
    if let Some(path) = &a.report {
        let mut text = format!("{summary}\n");
        for t in &report.tensors {
            text.push_str(&format!("{}\t{}\t{}\n", t.name, t.len, fmt_sig17(t.max_rel_err)));
        }
        fs::write(path, text).map_err(Error::from)?;
        run.note("max_rel_err", fmt_sig17(report.max_rel_err));
        run.output("report", path);
        run.finish(&beside(path))?;
    }
    if report.passed() {
        println!("{summary}");
        Ok(())
    } else {
        Err(Failure::Check(summary))
    }
}

fn correlation(a: CorrelationArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let mut run = RunManifest::start("analyze-correlation", None);
    run.input("corpus", &a.corpus);
    let report = analyze_correlation(&corpus.clips)?;
    fs::write(&a.report, report.to_text())?;
    run.output("report", &a.report);
    println!(
        "cosine real={} fake={} separation_stderr={}",
        fmt_sig17(report.cosine_real.mean),
        fmt_sig17(report.cosine_fake.mean),
        fmt_sig17(report.cosine_separation())
    );
    run.finish(&beside(&a.report))
}

fn infer(a: InferArgs) -> Result<()> {
    let (model, _) = load_model(&a.checkpoint)?;
    let corpus = load_corpus(&a.clip)?;
    check_compatible(&model.config, &corpus)?;
    let clip = corpus.clips.get(a.index).ok_or_else(|| {
        Error::Input(format!("clip index {} out of range ({} clips)", a.index, corpus.clips.len()))
    })?;
    let input = ClipInput::prepare(clip, &model.config, &LogMel::default())?;
    let p = model.infer(&input)?;
    let probs: Vec<String> = p.probs.iter().map(|v| fmt_sig17(*v)).collect();
    let class = match model.config.head_mode {
        HeadMode::Binary => ["real", "fake"][p.class].to_string(),
        HeadMode::FourClass => ClipLabel::from_index(p.class)?.name().to_string(),
    };
    println!(
        "class={class} fake_score={} probs={}",
        fmt_sig17(p.fake_score),
        probs.join(",")
    );
    Ok(())
}
