//! End-to-end comparison of analytic gradients against central finite
//! differences for every learnable scalar of a small model.

use crate::corpus::{generate_split, GenConfig};
use crate::error::Result;
use crate::model::{prepare_all, Bound, ClipInput, HeadMode, Model, ModelConfig};
use crate::par::derive_seed;
use crate::tensor::{relative_error, Graph};

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub frames: usize,
    pub latent: usize,
    pub batch: usize,
    pub seed: u64,
    /// Finite-difference step.
    pub step: f64,
    /// Denominator floor of the relative error, so entries whose true
    /// gradient is ~0 are compared in absolute terms.
    pub floor: f64,
    pub tolerance: f64,
    /// Encoder and head hidden widths (kept small so every scalar can be
    /// checked quickly).
    pub hidden: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            frames: 8,
            latent: 16,
            batch: 2,
            seed: 0x6AD_C4EC,
            step: 1e-5,
            floor: 1e-5,
            tolerance: 1e-4,
            hidden: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub len: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_err: f64,
    /// `name[index]` of the worst entry.
    pub worst: String,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

fn total_loss(model: &Model, inputs: &[&ClipInput]) -> Result<f64> {
    let mode = model.config.head_mode;
    let targets: Vec<_> = inputs.iter().map(|i| i.targets(mode)).collect();
    let mut g = Graph::new();
    let b = Bound::bind(&mut g, &model.params, false);
    let fwd = model.forward_batch(&mut g, &b, inputs)?;
    let l = model.loss(&mut g, &fwd, &targets)?;
    Ok(g.scalar(l.total))
}

/// The model and batch used by [`gradcheck`].
pub fn gradcheck_setup(cfg: &GradcheckConfig) -> Result<(Model, Vec<ClipInput>)> {
    let gen = GenConfig {
        frames: cfg.frames,
        ..GenConfig::default()
    };
    let clips = generate_split(cfg.seed, cfg.batch, &gen)?;
    let mc = ModelConfig {
        frames: cfg.frames,
        latent: cfg.latent,
        head_mode: HeadMode::FourClass,
        audio_hidden: cfg.hidden,
        video_hidden: cfg.hidden,
        fau_hidden: cfg.hidden,
        head_hidden: cfg.hidden,
        ..ModelConfig::default()
    };
    let model = Model::new(mc, derive_seed(cfg.seed, 1))?;
    let inputs = prepare_all(&clips, &model.config)?;
    Ok((model, inputs))
}

pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let (mut model, inputs) = gradcheck_setup(cfg)?;
    let refs: Vec<&ClipInput> = inputs.iter().collect();

    let mode = model.config.head_mode;
    let targets: Vec<_> = refs.iter().map(|i| i.targets(mode)).collect();
    let mut g = Graph::new();
    let b = Bound::bind(&mut g, &model.params, true);
    let fwd = model.forward_batch(&mut g, &b, &refs)?;
    let loss = model.loss(&mut g, &fwd, &targets)?;
    g.backward(loss.total)?;
    let analytic: Vec<Option<Vec<f64>>> = b.vars().into_iter().map(|v| g.grad(v).map(<[f64]>::to_vec)).collect();
    drop(g);

    let names: Vec<String> = model.params.named().into_iter().map(|(n, _)| n).collect();
    let mut report = GradcheckReport {
        tensors: Vec::new(),
        max_rel_err: 0.0,
        worst: String::new(),
        checked: 0,
        tolerance: cfg.tolerance,
    };
    for (k, grad) in analytic.iter().enumerate() {
        let Some(grad) = grad else { continue };
        let mut worst = 0.0f64;
        for (e, &analytic_e) in grad.iter().enumerate() {
            let orig = model.params.tensors_mut()[k].data()[e];
            model.params.tensors_mut()[k].data_mut()[e] = orig + cfg.step;
            let up = total_loss(&model, &refs)?;
            model.params.tensors_mut()[k].data_mut()[e] = orig - cfg.step;
            let down = total_loss(&model, &refs)?;
            model.params.tensors_mut()[k].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * cfg.step);
            let err = relative_error(analytic_e, numeric, cfg.floor);
            if err > report.max_rel_err || report.worst.is_empty() {
                report.max_rel_err = err;
                report.worst = format!("{}[{e}]", names[k]);
            }
            worst = worst.max(err);
        }
        report.checked += grad.len();
        report.tensors.push(TensorCheck {
            name: names[k].clone(),
            len: grad.len(),
            max_rel_err: worst,
        });
    }
    Ok(report)
}
