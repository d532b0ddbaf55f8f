//! Video-only degradations with five intensity levels; level 0 is the
//! identity. Outputs are not clamped to `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{AVClip, VideoMode, FRAME_SIDE};
use crate::error::{Error, Result};
use crate::par::derive_seed;
use crate::tensor::Tensor;

pub const LEVELS: usize = 5;

const NOISE_STD: [f64; 4] = [0.02, 0.05, 0.1, 0.2];
const BLUR_SIGMA: [f64; 4] = [0.5, 1.0, 1.5, 2.0];
const SCALE: [f64; 4] = [0.85, 0.7, 0.55, 0.4];
const QUANT_STEP: [f64; 4] = [8.0, 16.0, 32.0, 64.0];
const DROP_EVERY: [usize; 4] = [8, 6, 4, 2];
const BLOCK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PerturbKind {
    GaussianNoise,
    GaussianBlur,
    Contrast,
    Saturation,
    /// Stand-in for JPEG.
    BlockQuantization,
    /// Stand-in for video compression.
    TemporalDrop,
}

impl PerturbKind {
    pub const ALL: [PerturbKind; 6] = [
        PerturbKind::GaussianNoise,
        PerturbKind::GaussianBlur,
        PerturbKind::Contrast,
        PerturbKind::Saturation,
        PerturbKind::BlockQuantization,
        PerturbKind::TemporalDrop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbKind::GaussianNoise => "noise",
            PerturbKind::GaussianBlur => "blur",
            PerturbKind::Contrast => "contrast",
            PerturbKind::Saturation => "saturation",
            PerturbKind::BlockQuantization => "blockquant",
            PerturbKind::TemporalDrop => "tempdrop",
        }
    }

    fn index(self) -> u64 {
        Self::ALL.iter().position(|&k| k == self).expect("listed") as u64
    }
}

impl fmt::Display for PerturbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown perturbation {s:?}")))
    }
}

/// Applies `kind` at `level` to the video of a raw-mode clip; audio and FAU
/// activations are untouched. Noise is seeded from `(clip seed, kind, level)`.
pub fn perturb(clip: &AVClip, kind: PerturbKind, level: usize) -> Result<AVClip> {
    if clip.mode() != VideoMode::Raw {
        return Err(Error::Usage("perturbations need a raw-mode clip".into()));
    }
    if level >= LEVELS {
        return Err(Error::Usage(format!("level {level} outside 0..{}", LEVELS - 1)));
    }
    if level == 0 {
        return Ok(clip.clone());
    }
    let k = level - 1;
    let side = FRAME_SIDE;
    let px = side * side;
    let src = clip.video.data();
    let frames = clip.frames();
    let mut out = src.to_vec();
    match kind {
        PerturbKind::GaussianNoise => {
            let seed = derive_seed(derive_seed(clip.seed, kind.index()), level as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            out.iter_mut()
                .for_each(|v| *v += NOISE_STD[k] * rng.sample::<f64, _>(StandardNormal));
        }
        PerturbKind::GaussianBlur => {
            for f in out.chunks_mut(px) {
                blur_frame(f, side, BLUR_SIGMA[k]);
            }
        }
        PerturbKind::Contrast => {
            for f in out.chunks_mut(px) {
                let mean = f.iter().sum::<f64>() / px as f64;
                f.iter_mut().for_each(|v| *v = mean + SCALE[k] * (*v - mean));
            }
        }
        PerturbKind::Saturation => {
            // single-channel frames: pull toward mid-gray
            out.iter_mut().for_each(|v| *v = 0.5 + SCALE[k] * (*v - 0.5));
        }
        PerturbKind::BlockQuantization => {
            let q = QUANT_STEP[k] / 255.0;
            for f in out.chunks_mut(px) {
                quantize_blocks(f, side, q);
            }
        }
        PerturbKind::TemporalDrop => {
            let every = DROP_EVERY[k];
            for t in 1..frames {
                if t % every == every - 1 {
                    out.copy_within((t - 1) * px..t * px, t * px);
                }
            }
        }
    }
    Ok(AVClip {
        video: Tensor::new(clip.video.shape().to_vec(), out)?,
        ..clip.clone()
    })
}

/// Unit-sum Gaussian taps with radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Half-sample symmetric reflection: `-1 → 0`, `n → n-1`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn blur_frame(f: &mut [f64], side: usize, sigma: f64) {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; f.len()];
    for y in 0..side {
        for x in 0..side {
            tmp[y * side + x] = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * f[y * side + reflect(x as isize + j as isize - r, side)])
                .sum();
        }
    }
    for y in 0..side {
        for x in 0..side {
            f[y * side + x] = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * tmp[reflect(y as isize + j as isize - r, side) * side + x])
                .sum();
        }
    }
}

fn quantize(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

/// Block mean quantised with `q`, residual with `2q`.
fn quantize_blocks(f: &mut [f64], side: usize, q: f64) {
    for by in (0..side).step_by(BLOCK) {
        for bx in (0..side).step_by(BLOCK) {
            let idx = |i: usize| (by + i / BLOCK) * side + bx + i % BLOCK;
            let mean = (0..BLOCK * BLOCK).map(|i| f[idx(i)]).sum::<f64>() / (BLOCK * BLOCK) as f64;
            let qm = quantize(mean, q);
            for i in 0..BLOCK * BLOCK {
                f[idx(i)] = qm + quantize(f[idx(i)] - mean, 2.0 * q);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_clip, ClipLabel, GenConfig};

    fn raw_clip() -> AVClip {
        let cfg = GenConfig {
            mode: VideoMode::Raw,
            ..GenConfig::default()
        };
        generate_clip(77, ClipLabel::Rafv, &cfg).unwrap()
    }

    #[test]
    fn level_zero_is_identity_for_every_kind() {
        let c = raw_clip();
        for k in PerturbKind::ALL {
            let p = perturb(&c, k, 0).unwrap();
            assert_eq!(p, c);
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&p.video), bits(&c.video));
        }
    }

    #[test]
    fn feature_clips_and_bad_levels_are_rejected() {
        let f = generate_clip(1, ClipLabel::Rarv, &GenConfig::default()).unwrap();
        assert!(matches!(perturb(&f, PerturbKind::Contrast, 1), Err(Error::Usage(_))));
        assert!(matches!(perturb(&raw_clip(), PerturbKind::Contrast, 5), Err(Error::Usage(_))));
    }

    #[test]
    fn noise_level_two_has_expected_spread() {
        let c = raw_clip();
        let p = perturb(&c, PerturbKind::GaussianNoise, 2).unwrap();
        let d: Vec<f64> = p.video.data().iter().zip(c.video.data()).map(|(a, b)| a - b).collect();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let sd = (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
        assert!((sd - 0.05).abs() < 0.005, "{sd}");
        assert_eq!(perturb(&c, PerturbKind::GaussianNoise, 2).unwrap(), p);
    }

    #[test]
    fn blur_preserves_frame_means() {
        let c = raw_clip();
        for level in 1..LEVELS {
            let p = perturb(&c, PerturbKind::GaussianBlur, level).unwrap();
            for (a, b) in p.video.data().chunks(256).zip(c.video.data().chunks(256)) {
                let (ma, mb) = (a.iter().sum::<f64>() / 256.0, b.iter().sum::<f64>() / 256.0);
                assert!((ma - mb).abs() < 1e-6);
            }
        }
        let k = gaussian_kernel(1.5);
        assert_eq!(k.len(), 11);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn severity_grows_with_level() {
        let c = raw_clip();
        for kind in PerturbKind::ALL {
            let dist = |l: usize| {
                let p = perturb(&c, kind, l).unwrap();
                p.video.max_abs_diff(&c.video)
            };
            let (d1, d4) = (dist(1), dist(4));
            assert!(d4 > 0.0 && d4 >= d1, "{kind}: {d1} {d4}");
        }
    }

    #[test]
    fn temporal_drop_holds_previous_frame() {
        let c = raw_clip();
        let p = perturb(&c, PerturbKind::TemporalDrop, 4).unwrap();
        let frame = |t: &Tensor, i: usize| t.data()[i * 256..(i + 1) * 256].to_vec();
        assert_eq!(frame(&p.video, 1), frame(&c.video, 0));
        assert_eq!(frame(&p.video, 2), frame(&c.video, 2));
        assert_eq!(p.waveform, c.waveform);
        assert_eq!(p.fau, c.fau);
    }
}
