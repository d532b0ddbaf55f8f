use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ModelConfig;
use crate::tensor::Tensor;

/// Fixed seed of the frozen FAU encoder: every model with the same widths
/// carries identical FAU weights, standing in for a pretrained extractor.
pub const FAU_ENCODER_SEED: u64 = 0xFA0_E4C0;
const QUERY_STD: f64 = 0.02;
/// Extra gain on encoder outputs and key/value maps. Unit-gain latents leave
/// attention and pooling logits near zero, where every softmax is flat and
/// learning stalls on a long plateau.
pub const LATENT_GAIN: f64 = 3.0;
/// Key maps get a further gain so that query-key logits are not swamped by
/// the small query initialisation.
pub const KEY_GAIN: f64 = 3.0 * LATENT_GAIN;

fn gaussian(rng: &mut ChaCha8Rng, shape: Vec<usize>, std: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape, data).expect("positive extents")
}

/// Two linear layers with a ReLU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl Mlp {
    fn init(rng: &mut ChaCha8Rng, din: usize, hidden: usize, dout: usize, gain: f64, learnable: bool) -> Self {
        Self {
            w1: gaussian(rng, vec![din, hidden], (2.0 / din as f64).sqrt()).with_grad(learnable),
            b1: Tensor::zeros(vec![hidden]).with_grad(learnable),
            w2: gaussian(rng, vec![hidden, dout], gain / (hidden as f64).sqrt()).with_grad(learnable),
            b2: Tensor::zeros(vec![dout]).with_grad(learnable),
        }
    }

    fn tensors(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub audio_enc: Mlp,
    pub video_enc: Mlp,
    /// Frozen; never receives gradients.
    pub fau_enc: Mlp,
    pub fuse_w: Tensor,
    pub fuse_b: Tensor,
    pub query: Tensor,
    pub key_a_w: Tensor,
    pub key_a_b: Tensor,
    pub val_a_w: Tensor,
    pub val_a_b: Tensor,
    pub key_v_w: Tensor,
    pub key_v_b: Tensor,
    pub val_v_w: Tensor,
    pub val_v_b: Tensor,
    pub sigma_av: Tensor,
    pub sigma_a: Tensor,
    pub sigma_v: Tensor,
    pub head_av: Mlp,
    pub head_a: Mlp,
    pub head_v: Mlp,
}

const MLP_PARTS: [&str; 4] = ["w1", "b1", "w2", "b2"];

fn mlp<'a>(out: &mut Vec<(String, &'a Tensor)>, prefix: &str, m: &'a Mlp) {
    for (part, t) in MLP_PARTS.iter().zip(m.tensors()) {
        out.push((format!("{prefix}.{part}"), t));
    }
}

impl Params {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = cfg.latent;
        let affine = |rng: &mut ChaCha8Rng, gain: f64| {
            (
                gaussian(rng, vec![l, l], gain / (l as f64).sqrt()).with_grad(true),
                Tensor::zeros(vec![l]).with_grad(true),
            )
        };
        let audio_enc = Mlp::init(&mut rng, cfg.audio_in(), cfg.audio_hidden, l, LATENT_GAIN, true);
        let video_enc = Mlp::init(&mut rng, cfg.video_in(), cfg.video_hidden, l, LATENT_GAIN, true);
        let mut fau_rng = ChaCha8Rng::seed_from_u64(FAU_ENCODER_SEED);
        let fau_enc = Mlp::init(&mut fau_rng, cfg.fau_in(), cfg.fau_hidden, l, LATENT_GAIN, false);
        let query = gaussian(&mut rng, vec![cfg.frames, l], QUERY_STD).with_grad(true);
        let (key_a_w, key_a_b) = affine(&mut rng, KEY_GAIN);
        let (val_a_w, val_a_b) = affine(&mut rng, LATENT_GAIN);
        let (key_v_w, key_v_b) = affine(&mut rng, KEY_GAIN);
        let (val_v_w, val_v_b) = affine(&mut rng, LATENT_GAIN);
        let sigma = || Tensor::scalar(1.0 / (l as f64).sqrt()).with_grad(true);
        let t2 = cfg.frames * cfg.frames;
        let c = cfg.head_mode.classes();
        let head_av = Mlp::init(&mut rng, t2, cfg.head_hidden, c, 1.0, true);
        let head_a = Mlp::init(&mut rng, t2, cfg.head_hidden, 2, 1.0, true);
        let head_v = Mlp::init(&mut rng, t2, cfg.head_hidden, 2, 1.0, true);
        Self {
            audio_enc,
            video_enc,
            fau_enc,
            // zero projection: step-0 visual features equal the video branch alone
            fuse_w: Tensor::zeros(vec![l, l]).with_grad(true),
            fuse_b: Tensor::zeros(vec![l]).with_grad(true),
            query,
            key_a_w,
            key_a_b,
            val_a_w,
            val_a_b,
            key_v_w,
            key_v_b,
            val_v_w,
            val_v_b,
            sigma_av: sigma(),
            sigma_a: sigma(),
            sigma_v: sigma(),
            head_av,
            head_a,
            head_v,
        }
    }

    /// All tensors in canonical (checkpoint) order with their names.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        mlp(&mut out, "audio_enc", &self.audio_enc);
        mlp(&mut out, "video_enc", &self.video_enc);
        mlp(&mut out, "fau_enc", &self.fau_enc);
        for (n, t) in [
            ("fuse.w", &self.fuse_w),
            ("fuse.b", &self.fuse_b),
            ("query", &self.query),
            ("key_a.w", &self.key_a_w),
            ("key_a.b", &self.key_a_b),
            ("val_a.w", &self.val_a_w),
            ("val_a.b", &self.val_a_b),
            ("key_v.w", &self.key_v_w),
            ("key_v.b", &self.key_v_b),
            ("val_v.w", &self.val_v_w),
            ("val_v.b", &self.val_v_b),
            ("sigma_av", &self.sigma_av),
            ("sigma_a", &self.sigma_a),
            ("sigma_v", &self.sigma_v),
        ] {
            out.push((n.to_string(), t));
        }
        mlp(&mut out, "head_av", &self.head_av);
        mlp(&mut out, "head_a", &self.head_a);
        mlp(&mut out, "head_v", &self.head_v);
        out
    }

    /// Mutable view in the same order as [`Params::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.extend(self.audio_enc.tensors_mut());
        out.extend(self.video_enc.tensors_mut());
        out.extend(self.fau_enc.tensors_mut());
        out.extend([
            &mut self.fuse_w,
            &mut self.fuse_b,
            &mut self.query,
            &mut self.key_a_w,
            &mut self.key_a_b,
            &mut self.val_a_w,
            &mut self.val_a_b,
            &mut self.key_v_w,
            &mut self.key_v_b,
            &mut self.val_v_w,
            &mut self.val_v_b,
            &mut self.sigma_av,
            &mut self.sigma_a,
            &mut self.sigma_v,
        ]);
        out.extend(self.head_av.tensors_mut());
        out.extend(self.head_a.tensors_mut());
        out.extend(self.head_v.tensors_mut());
        out
    }

    pub fn learnable_count(&self) -> usize {
        self.named()
            .iter()
            .filter(|(_, t)| t.requires_grad())
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn clear_grads(&mut self) {
        self.tensors_mut().into_iter().for_each(Tensor::clear_grad);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_encoder_is_seed_independent() {
        let cfg = ModelConfig {
            latent: 16,
            frames: 8,
            ..ModelConfig::default()
        };
        let a = Params::init(&cfg, 1);
        let b = Params::init(&cfg, 2);
        assert_eq!(a.fau_enc, b.fau_enc);
        assert_ne!(a.audio_enc, b.audio_enc);
        assert!(a.fau_enc.tensors().iter().all(|t| !t.requires_grad()));
        let named = a.named();
        let learnable = named.iter().filter(|(_, t)| t.requires_grad()).count();
        assert_eq!(learnable, named.len() - 4);
        assert_eq!(named.len(), a.clone().tensors_mut().len());
    }

    #[test]
    fn initial_state() {
        let cfg = ModelConfig {
            latent: 16,
            frames: 8,
            ..ModelConfig::default()
        };
        let p = Params::init(&cfg, 3);
        assert!(p.fuse_w.data().iter().all(|&v| v == 0.0));
        assert_eq!(p.sigma_av.data(), &[0.25]);
        assert_eq!(p.query.shape(), &[8, 16]);
        assert_eq!(p.head_av.w1.shape(), &[64, 512]);
    }
}
