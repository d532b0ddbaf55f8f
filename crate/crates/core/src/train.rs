//! Deterministic optimisation: decoupled-weight-decay adaptive moments, poly
//! learning-rate decay, seeded shuffling and checkpointing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{fmt_f64, fmt_sig17, KeyValues};
use crate::corpus::AVClip;
use crate::error::{Error, Result};
use crate::model::{prepare_all, Bound, Checkpoint, ClipInput, Model, Params};
use crate::par::derive_seed;
use crate::tensor::{Graph, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Recorded in every checkpoint header.
pub const OPTIMIZER_NOTE: &str = "adamw: decoupled weight decay adaptive moments, no adamp projection";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub batch: usize,
    pub epochs: usize,
    pub poly_power: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-4,
            batch: 32,
            epochs: 50,
            poly_power: 0.9,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("lr0 must be > 0, got {}", self.lr0)));
        }
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::Config("batch and epochs must be >= 1".into()));
        }
        if !(self.poly_power > 0.0 && self.poly_power.is_finite()) {
            return Err(Error::Config(format!("poly_power must be > 0, got {}", self.poly_power)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("lr0", fmt_f64(self.lr0));
        kv.set("batch", self.batch);
        kv.set("epochs", self.epochs);
        kv.set("poly_power", fmt_f64(self.poly_power));
        kv.set("weight_decay", fmt_f64(self.weight_decay));
        kv.set("seed", self.seed);
        kv
    }

    pub fn apply_kv(&mut self, kv: &KeyValues) -> Result<()> {
        kv.apply("lr0", &mut self.lr0)?;
        kv.apply("batch", &mut self.batch)?;
        kv.apply("epochs", &mut self.epochs)?;
        kv.apply("poly_power", &mut self.poly_power)?;
        kv.apply("weight_decay", &mut self.weight_decay)?;
        kv.apply("seed", &mut self.seed)?;
        self.validate()
    }
}

/// `lr0 · (1 − step/total)^power`.
pub fn poly_lr(step: usize, total_steps: usize, cfg: &TrainConfig) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::Config("poly schedule needs total_steps > 0".into()));
    }
    if step > total_steps {
        return Err(Error::Config(format!("step {step} beyond schedule of {total_steps}")));
    }
    Ok(cfg.lr0 * (1.0 - step as f64 / total_steps as f64).powf(cfg.poly_power))
}

/// First and second moments per tensor, aligned with the tensor list handed
/// to [`OptimState::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl OptimState {
    pub fn for_tensors(tensors: &[&Tensor]) -> Self {
        Self {
            m: tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            step: 0,
        }
    }

    pub fn for_params(p: &Params) -> Self {
        let named = p.named();
        Self::for_tensors(&named.iter().map(|(_, t)| *t).collect::<Vec<_>>())
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update; frozen tensors are skipped and every grad
    /// buffer is cleared afterwards.
    pub fn step(&mut self, tensors: Vec<&mut Tensor>, lr: f64, weight_decay: f64) -> Result<()> {
        if tensors.len() != self.m.len() {
            return Err(Error::Training(format!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                tensors.len()
            )));
        }
        for (i, t) in tensors.iter().enumerate() {
            if t.requires_grad() && t.grad().is_none() {
                return Err(Error::Training(format!("learnable tensor {i} has no gradient")));
            }
            if t.len() != self.m[i].len() {
                return Err(Error::Training(format!("tensor {i} changed size")));
            }
        }
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step as i32);
        let c2 = 1.0 - BETA2.powi(self.step as i32);
        for (i, t) in tensors.into_iter().enumerate() {
            if !t.requires_grad() {
                continue;
            }
            let g = t.grad().expect("checked above").to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((theta, g), m), v) in t.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                let update = (*m / c1) / ((*v / c2).sqrt() + EPS);
                *theta -= lr * (update + weight_decay * *theta);
            }
            t.clear_grad();
        }
        Ok(())
    }
}

/// Applies one update to every model parameter from its accumulated grads.
pub fn optimizer_step(params: &mut Params, state: &mut OptimState, lr: f64, weight_decay: f64) -> Result<()> {
    state.step(params.tensors_mut(), lr, weight_decay)
}

/// One logged optimisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub av: f64,
    pub a: f64,
    pub v: f64,
}

impl StepRecord {
    /// `step lr L_total L_av L_a L_v`, tab-separated, 17 significant digits.
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.step,
            fmt_sig17(self.lr),
            fmt_sig17(self.total),
            fmt_sig17(self.av),
            fmt_sig17(self.a),
            fmt_sig17(self.v)
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        let bad = || Error::Format {
            offset: 0,
            msg: format!("malformed loss record {line:?}"),
        };
        if f.len() != 6 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(Self {
            step: f[0].parse().map_err(|_| bad())?,
            lr: num(f[1])?,
            total: num(f[2])?,
            av: num(f[3])?,
            a: num(f[4])?,
            v: num(f[5])?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `NaN` when there is no validation split.
    pub val_loss: f64,
    pub val_accuracy: f64,
}

impl EpochRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.epoch,
            fmt_sig17(self.train_loss),
            fmt_sig17(self.val_loss),
            fmt_sig17(self.val_accuracy)
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub initial: Model,
    pub last: Model,
    /// Lowest validation loss; equals `last` without a validation split.
    pub best: Model,
    pub best_epoch: usize,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

/// Deterministic train/validation split: a seeded permutation whose first
/// `n/10` entries are held out.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX)));
    let val = idx[..n / 10].to_vec();
    let mut train = idx[n / 10..].to_vec();
    train.sort_unstable();
    (train, val)
}

/// Total optimizer steps: the final partial batch of each epoch is kept.
pub fn total_steps(train_len: usize, cfg: &TrainConfig) -> usize {
    cfg.epochs * train_len.div_ceil(cfg.batch)
}

fn batch_step(model: &mut Model, inputs: &[&ClipInput]) -> Result<(f64, f64, f64, f64)> {
    let mode = model.config.head_mode;
    let targets: Vec<_> = inputs.iter().map(|i| i.targets(mode)).collect();
    let mut g = Graph::new();
    let b = Bound::bind(&mut g, &model.params, true);
    let fwd = model.forward_batch(&mut g, &b, inputs)?;
    let loss = model.loss(&mut g, &fwd, &targets)?;
    let parts = (g.scalar(loss.total), g.scalar(loss.av), g.scalar(loss.a), g.scalar(loss.v));
    if !parts.0.is_finite() {
        return Err(Error::Training("loss became non-finite".into()));
    }
    g.backward(loss.total)?;
    b.accumulate_grads(&g, &mut model.params)?;
    Ok(parts)
}

/// Mean total loss and multimodal-head accuracy over `inputs`.
pub fn evaluate_loss(model: &Model, inputs: &[&ClipInput], chunk: usize) -> Result<(f64, f64)> {
    let mode = model.config.head_mode;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for part in inputs.chunks(chunk.max(1)) {
        let targets: Vec<_> = part.iter().map(|i| i.targets(mode)).collect();
        let mut g = Graph::new();
        let b = Bound::bind(&mut g, &model.params, false);
        let fwd = model.forward_batch(&mut g, &b, part)?;
        let l = model.loss(&mut g, &fwd, &targets)?;
        loss += g.scalar(l.total) * part.len() as f64;
        let logits = g.tensor(fwd.logits_av);
        for (r, t) in targets.iter().enumerate() {
            let row = logits.row(r);
            let arg = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                .unwrap_or(0);
            correct += usize::from(arg == t.av);
        }
    }
    let n = inputs.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains `model` in place on prepared inputs. `on_step` sees every record as
/// it is produced.
pub fn train_prepared(
    model: Model,
    inputs: &[ClipInput],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    let classes = model.config.head_mode.classes();
    let mode = model.config.head_mode;
    if let Some(bad) = inputs.iter().find(|i| i.targets(mode).av >= classes) {
        return Err(Error::Label {
            label: bad.targets(mode).av,
            classes,
        });
    }
    let (mut train_idx, val_idx) = split_indices(inputs.len(), cfg.seed);
    let val: Vec<&ClipInput> = val_idx.iter().map(|&i| &inputs[i]).collect();
    let total = total_steps(train_idx.len(), cfg);

    let initial = model.clone();
    let mut model = model;
    let mut state = OptimState::for_params(&model.params);
    let mut steps = Vec::with_capacity(total);
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_loss = f64::INFINITY;
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64)));
        let mut epoch_loss = 0.0;
        for chunk in train_idx.chunks(cfg.batch) {
            let batch: Vec<&ClipInput> = chunk.iter().map(|&i| &inputs[i]).collect();
            let lr = poly_lr(step, total, cfg)?;
            let (l_total, av, a, v) = batch_step(&mut model, &batch)?;
            optimizer_step(&mut model.params, &mut state, lr, cfg.weight_decay)?;
            let rec = StepRecord {
                step,
                lr,
                total: l_total,
                av,
                a,
                v,
            };
            on_step(&rec)?;
            steps.push(rec);
            epoch_loss += l_total * chunk.len() as f64;
            step += 1;
        }
        let (val_loss, val_accuracy) = if val.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            evaluate_loss(&model, &val, cfg.batch)?
        };
        if !val.is_empty() && val_loss < best_loss {
            best_loss = val_loss;
            best = model.clone();
            best_epoch = epoch;
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train_idx.len() as f64,
            val_loss,
            val_accuracy,
        });
    }
    if val.is_empty() {
        best = model.clone();
        best_epoch = cfg.epochs - 1;
    }
    Ok(TrainOutcome {
        initial,
        last: model,
        best,
        best_epoch,
        steps,
        epochs,
    })
}

pub fn train(model: Model, clips: &[AVClip], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if clips.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    let inputs = prepare_all(clips, &model.config)?;
    train_prepared(model, &inputs, cfg, |_| Ok(()))
}

pub fn checkpoint_notes(cfg: &TrainConfig) -> KeyValues {
    let mut notes = cfg.to_kv();
    notes.set("optimizer", OPTIMIZER_NOTE);
    notes
}

/// File names written by [`train_to_dir`].
pub const LOSS_LOG: &str = "loss.tsv";
pub const EPOCH_LOG: &str = "epochs.tsv";
pub const INITIAL_CKPT: &str = "initial.ffm";
pub const FINAL_CKPT: &str = "final.ffm";
pub const BEST_CKPT: &str = "best.ffm";

/// Trains and writes the loss log (appended per step), epoch summary and the
/// initial, final and best checkpoints into `dir`.
pub fn train_to_dir(model: Model, clips: &[AVClip], cfg: &TrainConfig, dir: &Path) -> Result<TrainOutcome> {
    if clips.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    std::fs::create_dir_all(dir)?;
    let notes = checkpoint_notes(cfg);
    Checkpoint {
        model: model.clone(),
        notes: notes.clone(),
    }
    .save(&dir.join(INITIAL_CKPT))?;
    let inputs = prepare_all(clips, &model.config)?;
    let mut log = BufWriter::new(File::create(dir.join(LOSS_LOG))?);
    let out = train_prepared(model, &inputs, cfg, |r| {
        writeln!(log, "{}", r.to_line())?;
        Ok(())
    })?;
    log.flush()?;
    let mut ep = String::new();
    for e in &out.epochs {
        ep.push_str(&e.to_line());
        ep.push('\n');
    }
    std::fs::write(dir.join(EPOCH_LOG), ep)?;
    let mut best_notes = notes.clone();
    best_notes.set("best_epoch", out.best_epoch);
    Checkpoint {
        model: out.last.clone(),
        notes,
    }
    .save(&dir.join(FINAL_CKPT))?;
    Checkpoint {
        model: out.best.clone(),
        notes: best_notes,
    }
    .save(&dir.join(BEST_CKPT))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_schedule_values() {
        let cfg = TrainConfig::default();
        assert_eq!(poly_lr(0, 100, &cfg).unwrap(), 1e-4);
        assert_eq!(poly_lr(100, 100, &cfg).unwrap(), 0.0);
        let half = poly_lr(50, 100, &cfg).unwrap();
        assert!((half - 1e-4 * 0.5f64.powf(0.9)).abs() < 1e-18);
        assert!((half - 5.359e-5).abs() < 1e-8);
        assert!(matches!(poly_lr(0, 0, &cfg), Err(Error::Config(_))));
        let lrs: Vec<f64> = (0..=37).map(|s| poly_lr(s, 37, &cfg).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut t = Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap().with_grad(true);
        let before = t.clone();
        let mut st = OptimState::for_tensors(&[&t]);
        t.accumulate_grad(&[0.0; 3]).unwrap();
        st.step(vec![&mut t], 1e-2, 0.0).unwrap();
        assert_eq!(t, before);
        assert!(t.grad().is_none());
    }

    #[test]
    fn quadratic_descends_monotonically() {
        let mut t = Tensor::scalar(1.0).with_grad(true);
        let mut st = OptimState::for_tensors(&[&t]);
        let mut last = 1.0;
        for _ in 0..100 {
            let theta = t.data()[0];
            t.accumulate_grad(&[2.0 * theta]).unwrap();
            st.step(vec![&mut t], 1e-2, 0.0).unwrap();
            let f = t.data()[0].powi(2);
            assert!(f < last);
            last = f;
        }
        assert_eq!(st.steps(), 100);
    }

    #[test]
    fn missing_gradient_is_an_error_and_frozen_is_untouched() {
        let mut live = Tensor::scalar(1.0).with_grad(true);
        let mut frozen = Tensor::scalar(3.0);
        let mut st = OptimState::for_tensors(&[&live, &frozen]);
        assert!(matches!(
            st.step(vec![&mut live, &mut frozen], 0.1, 0.0),
            Err(Error::Training(_))
        ));
        live.accumulate_grad(&[1.0]).unwrap();
        st.step(vec![&mut live, &mut frozen], 0.1, 0.1).unwrap();
        assert_eq!(frozen.data()[0].to_bits(), 3.0f64.to_bits());
        assert!(live.data()[0] < 1.0);
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (t, v) = split_indices(95, 4);
        assert_eq!((t.len(), v.len()), (86, 9));
        let mut all: Vec<usize> = t.iter().chain(&v).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..95).collect::<Vec<_>>());
        assert_eq!(split_indices(95, 4), (t, v));
        assert_eq!(split_indices(9, 4).1.len(), 0);
    }

    #[test]
    fn record_line_round_trips() {
        let r = StepRecord {
            step: 3,
            lr: 9.9e-5,
            total: 0.1 + 0.2,
            av: 1.0 / 3.0,
            a: 0.7,
            v: 2.0f64.sqrt(),
        };
        let line = r.to_line();
        assert_eq!(line.split('\t').count(), 6);
        assert_eq!(StepRecord::parse_line(&line).unwrap(), r);
    }
}
