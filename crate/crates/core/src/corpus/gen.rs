use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{AVClip, ClipLabel, VideoMode, FRAME_SIDE};
use crate::audio::{Waveform, HOP, SAMPLE_RATE};
use crate::config::{fmt_f64, KeyValues};
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Tensor;

/// Video frame rate; one frame spans `SAMPLE_RATE / FPS` audio samples.
pub const FPS: usize = 25;
const BASIS_SEED: u64 = 0x5EED_BA5E;
const CARRIER_F0: f64 = 140.0;
const HARMONICS: usize = 6;
const ENV_BASE: f64 = 0.08;
const ENV_GAIN: f64 = 0.6;
const NOISE_FLOOR: f64 = 1e-3;
/// Log-pitch change per unit of driver motion.
const PITCH_GAIN: f64 = 0.15;

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub frames: usize,
    /// AR(1) coefficient of genuine streams.
    pub rho_real: f64,
    /// AR(1) coefficient of forged streams.
    pub rho_fake: f64,
    /// Observation noise added on top of the driver.
    pub coupling_noise: f64,
    pub mode: VideoMode,
    pub video_dim: usize,
    pub fau_dim: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            frames: 25,
            rho_real: 0.95,
            rho_fake: 0.6,
            coupling_noise: 0.05,
            mode: VideoMode::Feature,
            video_dim: 32,
            fau_dim: 12,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.rho_fake && self.rho_fake < self.rho_real && self.rho_real < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < rho_fake < rho_real < 1, got {} and {}",
                self.rho_fake, self.rho_real
            )));
        }
        if self.coupling_noise.is_nan() || self.coupling_noise < 0.0 {
            return Err(Error::Config("coupling_noise must be >= 0".into()));
        }
        if self.frames < 2 || self.video_dim == 0 || self.fau_dim == 0 {
            return Err(Error::Config("frames >= 2 and positive feature widths required".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("frames", self.frames);
        kv.set("rho_real", fmt_f64(self.rho_real));
        kv.set("rho_fake", fmt_f64(self.rho_fake));
        kv.set("coupling_noise", fmt_f64(self.coupling_noise));
        kv.set("mode", self.mode);
        kv.set("video_dim", self.video_dim);
        kv.set("fau_dim", self.fau_dim);
        kv
    }

    pub fn apply_kv(&mut self, kv: &KeyValues) -> Result<()> {
        kv.apply("frames", &mut self.frames)?;
        kv.apply("rho_real", &mut self.rho_real)?;
        kv.apply("rho_fake", &mut self.rho_fake)?;
        kv.apply("coupling_noise", &mut self.coupling_noise)?;
        kv.apply("mode", &mut self.mode)?;
        kv.apply("video_dim", &mut self.video_dim)?;
        kv.apply("fau_dim", &mut self.fau_dim)?;
        self.validate()
    }

    pub fn samples_per_clip(&self) -> usize {
        self.frames * SAMPLE_RATE as usize / FPS
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Stationary unit-variance AR(1) sequence of length `n`.
pub fn ar1(rng: &mut impl Rng, n: usize, rho: f64) -> Vec<f64> {
    let innov = (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(n);
    let mut x = normal(rng);
    out.push(x);
    for _ in 1..n {
        x = rho * x + innov * normal(rng);
        out.push(x);
    }
    out
}

/// Fixed per-channel mixing `(level, motion, offset)` shared by every clip.
/// Channel 0 tracks the driver level alone.
pub fn video_basis(dim: usize) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(BASIS_SEED);
    (0..dim)
        .map(|c| {
            let (a, b, o) = (normal(&mut rng), normal(&mut rng), 0.5 * normal(&mut rng));
            if c == 0 {
                (1.0, 0.0, 0.0)
            } else {
                (a, b, o)
            }
        })
        .collect()
}

fn fau_basis(dim: usize) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(BASIS_SEED ^ 0xFA0);
    (0..dim)
        .map(|_| (normal(&mut rng), normal(&mut rng), 0.3 * normal(&mut rng)))
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn interp(values: &[f64], pos: f64) -> f64 {
    let last = values.len() - 1;
    let p = pos.clamp(0.0, last as f64);
    let i = (p.floor() as usize).min(last);
    let frac = p - i as f64;
    if i == last {
        values[last]
    } else {
        values[i] * (1.0 - frac) + values[i + 1] * frac
    }
}

/// Generates one clip. The same `(seed, label, cfg)` always yields the same
/// bytes. Every clip draws the shared driver and both forgery drivers in a
/// fixed order, so the genuine driver of a seed does not depend on the label.
pub fn generate_clip(seed: u64, label: ClipLabel, cfg: &GenConfig) -> Result<AVClip> {
    cfg.validate()?;
    let t = cfg.frames;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // one extra leading sample so every frame has a predecessor for motion
    let genuine = ar1(&mut rng, t + 1, cfg.rho_real);
    let forged_video = ar1(&mut rng, t + 1, cfg.rho_fake);
    let forged_audio = ar1(&mut rng, t + 1, cfg.rho_fake);
    let vd = if label.fake_video() { &forged_video } else { &genuine };
    let ad = if label.fake_audio() { &forged_audio } else { &genuine };
    let sn = cfg.coupling_noise;

    let fau_b = fau_basis(cfg.fau_dim);
    let mut fau = Vec::with_capacity(t * cfg.fau_dim);
    for f in 0..t {
        let (lvl, motion) = (vd[f + 1], vd[f + 1] - vd[f]);
        for &(g, h, o) in &fau_b {
            fau.push(sigmoid(g * lvl + h * motion + o + sn * normal(&mut rng)));
        }
    }

    let video = match cfg.mode {
        VideoMode::Feature => {
            let basis = video_basis(cfg.video_dim);
            let mut v = Vec::with_capacity(t * cfg.video_dim);
            for f in 0..t {
                let (lvl, motion) = (vd[f + 1], vd[f + 1] - vd[f]);
                for &(a, b, o) in &basis {
                    v.push(a * lvl + b * motion + o + sn * normal(&mut rng));
                }
            }
            Tensor::new(vec![t, cfg.video_dim], v)?
        }
        VideoMode::Raw => {
            let s = FRAME_SIDE;
            let mut v = Vec::with_capacity(t * s * s);
            for f in 0..t {
                let aperture = 1.5 + 0.5 * (1.0 + vd[f + 1].tanh());
                for y in 0..s {
                    for x in 0..s {
                        let dx = (x as f64 - 7.5) / 3.0;
                        let dy = (y as f64 - 9.5) / aperture;
                        let px = (-0.5 * (dx * dx + dy * dy)).exp() + sn * normal(&mut rng);
                        v.push(px.clamp(0.0, 1.0));
                    }
                }
            }
            Tensor::new(vec![t, 1, s, s], v)?
        }
    };

    let waveform = synth_audio(&mut rng, ad, cfg);
    Ok(AVClip {
        label,
        seed,
        video,
        fau: Tensor::new(vec![t, cfg.fau_dim], fau)?,
        waveform,
    })
}

/// Harmonic carrier whose 10 ms amplitude envelope follows the driver level
/// and whose pitch follows the driver motion. `driver` holds one leading
/// sample plus one value per video frame.
fn synth_audio(rng: &mut impl Rng, driver: &[f64], cfg: &GenConfig) -> Waveform {
    let level = &driver[1..];
    let motion: Vec<f64> = driver.windows(2).map(|w| w[1] - w[0]).collect();
    let n = cfg.samples_per_clip();
    let blocks = n / HOP;
    let per_frame = blocks as f64 / level.len() as f64;
    let env: Vec<f64> = (0..blocks)
        .map(|k| {
            let pos = (k as f64 + 0.5) / per_frame - 0.5;
            interp(level, pos) + cfg.coupling_noise * normal(rng)
        })
        .collect();
    let phases: Vec<f64> = (0..HARMONICS)
        .map(|_| rng.random::<f64>() * 2.0 * std::f64::consts::PI)
        .collect();
    let norm: f64 = (1..=HARMONICS).map(|h| 1.0 / h as f64).sum();
    let sr = SAMPLE_RATE as f64;
    let samples_per_frame = n as f64 / level.len() as f64;
    let mut phase = 0.0;
    let samples = (0..n)
        .map(|i| {
            let e = interp(&env, (i as f64 + 0.5) / HOP as f64 - 0.5);
            let amp = ENV_BASE * (ENV_GAIN * e).exp();
            let m = interp(&motion, (i as f64 + 0.5) / samples_per_frame - 0.5);
            // phase integrates the instantaneous fundamental
            phase += 2.0 * std::f64::consts::PI * CARRIER_F0 * (PITCH_GAIN * m).exp() / sr;
            let carrier: f64 = (1..=HARMONICS)
                .map(|h| (h as f64 * phase + phases[h - 1]).sin() / h as f64)
                .sum::<f64>()
                / norm;
            let x = amp * carrier + NOISE_FLOOR * normal(rng);
            x.clamp(-1.0, 1.0) as f32
        })
        .collect();
    Waveform {
        samples,
        sample_rate: SAMPLE_RATE,
    }
}

/// Per-frame log-RMS envelope (mean of the 10 ms block log-RMS values that
/// fall in each frame).
pub fn audio_envelope(w: &Waveform, frames: usize) -> Vec<f64> {
    let blocks: Vec<f64> = w
        .samples
        .chunks(HOP)
        .map(|b| {
            let ms = b.iter().map(|&s| (s as f64).powi(2)).sum::<f64>() / b.len() as f64;
            0.5 * ms.max(1e-20).ln()
        })
        .collect();
    let per = blocks.len() / frames;
    (0..frames)
        .map(|f| blocks[f * per..(f + 1) * per].iter().sum::<f64>() / per as f64)
        .collect()
}

/// Sample Pearson correlation; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Balanced split of `count` clips: sample `i` has label `i mod 4` and seed
/// `derive_seed(root_seed, i)`. Generated in parallel; output order and bytes
/// do not depend on the worker count.
pub fn generate_split(root_seed: u64, count: usize, cfg: &GenConfig) -> Result<Vec<AVClip>> {
    cfg.validate()?;
    par::map_range(count, |i| {
        let label = ClipLabel::ALL[i % 4];
        generate_clip(par::derive_seed(root_seed, i as u64), label, cfg)
    })
    .into_iter()
    .collect()
}
