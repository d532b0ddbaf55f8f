//! The detector: per-frame encoders with a frozen FAU branch fused into the
//! visual stream, query-shared cross attention, temporal attentional pooling
//! into dense `T×T` matrices, and three independent classification heads.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{frozen_bytes, load_checkpoint, read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use forward::{
    prepare_all, BatchForward, Bound, ClipInput, ForwardOut, LossParts, Prediction, QtVars, SampleVars, TapVars, Targets,
};
pub use params::{Mlp, Params};

use std::fmt;
use std::str::FromStr;

use crate::audio::N_MELS;
use crate::config::{fmt_f64, KeyValues};
use crate::corpus::{VideoMode, FRAME_SIDE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMode {
    Binary,
    FourClass,
}

impl HeadMode {
    pub fn classes(self) -> usize {
        match self {
            HeadMode::Binary => 2,
            HeadMode::FourClass => 4,
        }
    }
}

impl fmt::Display for HeadMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadMode::Binary => "binary",
            HeadMode::FourClass => "fourclass",
        })
    }
}

impl FromStr for HeadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(HeadMode::Binary),
            "fourclass" | "four-class" => Ok(HeadMode::FourClass),
            _ => Err(Error::Config(format!("unknown head mode {s:?} (binary|fourclass)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Frames per clip (`T`).
    pub frames: usize,
    /// Latent width (`L`) shared by both modalities and the queries.
    pub latent: usize,
    pub head_mode: HeadMode,
    pub lambda_av: f64,
    pub lambda_a: f64,
    pub lambda_v: f64,
    pub video_mode: VideoMode,
    /// Per-frame video feature width in feature mode.
    pub video_dim: usize,
    /// Per-frame FAU activation width in feature mode.
    pub fau_dim: usize,
    pub audio_hidden: usize,
    pub video_hidden: usize,
    pub fau_hidden: usize,
    pub head_hidden: usize,
    /// Mel frames grouped into one video frame.
    pub audio_pool: usize,
    pub n_mels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frames: 25,
            latent: 512,
            head_mode: HeadMode::Binary,
            lambda_av: 0.8,
            lambda_a: 0.1,
            lambda_v: 0.1,
            video_mode: VideoMode::Feature,
            video_dim: 32,
            fau_dim: 12,
            audio_hidden: 128,
            video_hidden: 64,
            fau_hidden: 64,
            head_hidden: 512,
            audio_pool: 4,
            n_mels: N_MELS,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [self.lambda_av, self.lambda_a, self.lambda_v];
        if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be >= 0, got {lambdas:?}")));
        }
        let widths = [
            self.frames,
            self.latent,
            self.video_dim,
            self.fau_dim,
            self.audio_hidden,
            self.video_hidden,
            self.fau_hidden,
            self.head_hidden,
            self.audio_pool,
            self.n_mels,
        ];
        if widths.contains(&0) {
            return Err(Error::Config("all widths and extents must be positive".into()));
        }
        Ok(())
    }

    /// Width of one per-frame audio input row.
    pub fn audio_in(&self) -> usize {
        self.n_mels * self.audio_pool
    }

    pub fn video_in(&self) -> usize {
        match self.video_mode {
            VideoMode::Raw => FRAME_SIDE * FRAME_SIDE,
            VideoMode::Feature => self.video_dim,
        }
    }

    pub fn fau_in(&self) -> usize {
        match self.video_mode {
            VideoMode::Raw => FRAME_SIDE * FRAME_SIDE,
            VideoMode::Feature => self.fau_dim,
        }
    }

    /// Mel frames expected per clip.
    pub fn mel_frames(&self) -> usize {
        self.frames * self.audio_pool
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("frames", self.frames);
        kv.set("latent", self.latent);
        kv.set("head_mode", self.head_mode);
        kv.set("lambda_av", fmt_f64(self.lambda_av));
        kv.set("lambda_a", fmt_f64(self.lambda_a));
        kv.set("lambda_v", fmt_f64(self.lambda_v));
        kv.set("video_mode", self.video_mode);
        kv.set("video_dim", self.video_dim);
        kv.set("fau_dim", self.fau_dim);
        kv.set("audio_hidden", self.audio_hidden);
        kv.set("video_hidden", self.video_hidden);
        kv.set("fau_hidden", self.fau_hidden);
        kv.set("head_hidden", self.head_hidden);
        kv.set("audio_pool", self.audio_pool);
        kv.set("n_mels", self.n_mels);
        kv
    }

    pub fn apply_kv(&mut self, kv: &KeyValues) -> Result<()> {
        kv.apply("frames", &mut self.frames)?;
        kv.apply("latent", &mut self.latent)?;
        kv.apply("head_mode", &mut self.head_mode)?;
        kv.apply("lambda_av", &mut self.lambda_av)?;
        kv.apply("lambda_a", &mut self.lambda_a)?;
        kv.apply("lambda_v", &mut self.lambda_v)?;
        kv.apply("video_mode", &mut self.video_mode)?;
        kv.apply("video_dim", &mut self.video_dim)?;
        kv.apply("fau_dim", &mut self.fau_dim)?;
        kv.apply("audio_hidden", &mut self.audio_hidden)?;
        kv.apply("video_hidden", &mut self.video_hidden)?;
        kv.apply("fau_hidden", &mut self.fau_hidden)?;
        kv.apply("head_hidden", &mut self.head_hidden)?;
        kv.apply("audio_pool", &mut self.audio_pool)?;
        kv.apply("n_mels", &mut self.n_mels)?;
        self.validate()
    }
}

/// Configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Params,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = Params::init(&config, seed);
        Ok(Self { config, params })
    }
}
