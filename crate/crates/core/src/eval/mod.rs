//! Metrics, the FAU temporal-consistency statistics and the perturbation
//! robustness harness.

mod correlation;
mod metrics;
mod perturb;

pub use correlation::{analyze_correlation, correlation_intensity, lag1_autocorrelation, CorrelationReport, Summary};
pub use metrics::{accuracy, auc, confusion, per_class_recall};
pub use perturb::{gaussian_kernel, perturb, PerturbKind, LEVELS};

use std::fmt::Write as _;

use crate::config::fmt_sig17;
use crate::corpus::{AVClip, ClipLabel};
use crate::error::{Error, Result};
use crate::model::{prepare_all, HeadMode, Model, Prediction};
use crate::par;

/// AUC (and accuracy) of one perturbation setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub kind: PerturbKind,
    pub level: usize,
    pub auc: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_samples: usize,
    pub head_mode: HeadMode,
    /// Multimodal-head accuracy against the head's own label space.
    pub accuracy: f64,
    /// Binary real/fake AUC of the fake score.
    pub auc: f64,
    pub confusion: Vec<Vec<u64>>,
    pub per_class_recall: Vec<f64>,
    pub perturbation_grid: Vec<GridCell>,
}

fn class_names(mode: HeadMode) -> Vec<&'static str> {
    match mode {
        HeadMode::Binary => vec!["real", "fake"],
        HeadMode::FourClass => ClipLabel::ALL.iter().map(|l| l.name()).collect(),
    }
}

fn head_label(label: ClipLabel, mode: HeadMode) -> usize {
    match mode {
        HeadMode::Binary => label.binary(),
        HeadMode::FourClass => label.index(),
    }
}

/// Scores every clip with the multimodal head.
pub fn score_clips(model: &Model, clips: &[AVClip]) -> Result<Vec<Prediction>> {
    let inputs = prepare_all(clips, &model.config)?;
    model.predict_batch(&inputs.iter().collect::<Vec<_>>())
}

fn summarize(preds: &[Prediction], clips: &[AVClip], mode: HeadMode) -> Result<(f64, f64, Vec<Vec<u64>>)> {
    let labels: Vec<usize> = clips.iter().map(|c| head_label(c.label, mode)).collect();
    let classes: Vec<usize> = preds.iter().map(|p| p.class).collect();
    let scores: Vec<f64> = preds.iter().map(|p| p.fake_score).collect();
    let fake: Vec<bool> = clips.iter().map(|c| !c.label.is_real()).collect();
    Ok((
        accuracy(&classes, &labels)?,
        auc(&scores, &fake)?,
        confusion(&classes, &labels, mode.classes())?,
    ))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Also run all perturbation kinds and levels (raw-mode corpora only).
    pub perturbations: bool,
}

pub fn run_eval(model: &Model, clips: &[AVClip], options: EvalOptions) -> Result<EvalReport> {
    if clips.is_empty() {
        return Err(Error::Input("evaluation corpus is empty".into()));
    }
    let mode = model.config.head_mode;
    let preds = score_clips(model, clips)?;
    let (acc, clean_auc, conf) = summarize(&preds, clips, mode)?;
    let mut grid = Vec::new();
    if options.perturbations {
        for kind in PerturbKind::ALL {
            for level in 0..LEVELS {
                let perturbed: Vec<AVClip> = par::map_range(clips.len(), |i| perturb(&clips[i], kind, level))
                    .into_iter()
                    .collect::<Result<_>>()?;
                let p = score_clips(model, &perturbed)?;
                let (a, u, _) = summarize(&p, &perturbed, mode)?;
                grid.push(GridCell {
                    kind,
                    level,
                    auc: u,
                    accuracy: a,
                });
            }
        }
    }
    Ok(EvalReport {
        n_samples: clips.len(),
        head_mode: mode,
        accuracy: acc,
        auc: clean_auc,
        per_class_recall: per_class_recall(&conf),
        confusion: conf,
        perturbation_grid: grid,
    })
}

impl EvalReport {
    /// `key=value` sections plus tab-separated matrices.
    pub fn to_text(&self) -> String {
        let names = class_names(self.head_mode);
        let mut s = String::new();
        let _ = writeln!(s, "[summary]");
        let _ = writeln!(s, "n_samples={}", self.n_samples);
        let _ = writeln!(s, "head_mode={}", self.head_mode);
        let _ = writeln!(s, "accuracy={}", fmt_sig17(self.accuracy));
        let _ = writeln!(s, "auc={}", fmt_sig17(self.auc));
        let _ = writeln!(s, "\n[per_class_recall]");
        for (n, r) in names.iter().zip(&self.per_class_recall) {
            let _ = writeln!(s, "{n}={}", fmt_sig17(*r));
        }
        let _ = writeln!(s, "\n[confusion]");
        let _ = writeln!(s, "true\\pred\t{}", names.join("\t"));
        for (n, row) in names.iter().zip(&self.confusion) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "{n}\t{}", cells.join("\t"));
        }
        if !self.perturbation_grid.is_empty() {
            let _ = writeln!(s, "\n[perturbation]");
            s.push_str(&self.grid_tsv());
        }
        s
    }

    /// Plot-ready grid: `kind level auc accuracy`.
    pub fn grid_tsv(&self) -> String {
        let mut s = String::from("kind\tlevel\tauc\taccuracy\n");
        for c in &self.perturbation_grid {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", c.kind, c.level, fmt_sig17(c.auc), fmt_sig17(c.accuracy));
        }
        s
    }
}

impl CorrelationReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut section = |name: &str, real: &Summary, fake: &Summary, sep: f64| {
            let _ = writeln!(s, "[{name}]");
            for (tag, v) in [("real_video", real), ("fake_video", fake)] {
                let _ = writeln!(s, "{tag}.n={}", v.n);
                let _ = writeln!(s, "{tag}.mean={}", fmt_sig17(v.mean));
                let _ = writeln!(s, "{tag}.std={}", fmt_sig17(v.std));
                let _ = writeln!(s, "{tag}.stderr={}", fmt_sig17(v.stderr));
            }
            let _ = writeln!(s, "separation_stderr={}\n", fmt_sig17(sep));
        };
        section(
            "consecutive_frame_cosine",
            &self.cosine_real,
            &self.cosine_fake,
            self.cosine_separation(),
        );
        section(
            "lag1_channel_pearson",
            &self.lag1_real,
            &self.lag1_fake,
            self.lag1_separation(),
        );
        s
    }
}
