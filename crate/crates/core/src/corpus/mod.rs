//! Seeded synthetic audio-visual clips for the four authenticity classes and
//! the `FFC1` corpus file format.

mod gen;
mod io;

pub use gen::{
    ar1, audio_envelope, generate_clip, generate_split, pearson, video_basis, GenConfig,
};
pub use io::{
    import_features, read_corpus, read_manifest, write_corpus, Corpus, Manifest, CORPUS_MAGIC,
    CORPUS_VERSION,
};

use std::fmt;
use std::str::FromStr;

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Side length of rendered raw-mode frames.
pub const FRAME_SIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClipLabel {
    Rarv = 0,
    Farv = 1,
    Rafv = 2,
    Fafv = 3,
}

impl ClipLabel {
    pub const ALL: [ClipLabel; 4] = [ClipLabel::Rarv, ClipLabel::Farv, ClipLabel::Rafv, ClipLabel::Fafv];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or(Error::Label {
            label: i,
            classes: 4,
        })
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_real(self) -> bool {
        self == ClipLabel::Rarv
    }

    pub fn fake_audio(self) -> bool {
        matches!(self, ClipLabel::Farv | ClipLabel::Fafv)
    }

    pub fn fake_video(self) -> bool {
        matches!(self, ClipLabel::Rafv | ClipLabel::Fafv)
    }

    /// Binary class index: 0 = real, 1 = fake.
    pub fn binary(self) -> usize {
        usize::from(!self.is_real())
    }

    pub fn name(self) -> &'static str {
        match self {
            ClipLabel::Rarv => "RARV",
            ClipLabel::Farv => "FARV",
            ClipLabel::Rafv => "RAFV",
            ClipLabel::Fafv => "FAFV",
        }
    }
}

impl fmt::Display for ClipLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VideoMode {
    Raw,
    Feature,
}

impl VideoMode {
    pub fn tag(self) -> u8 {
        match self {
            VideoMode::Raw => 0,
            VideoMode::Feature => 1,
        }
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(VideoMode::Raw),
            1 => Some(VideoMode::Feature),
            _ => None,
        }
    }
}

impl fmt::Display for VideoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VideoMode::Raw => "raw",
            VideoMode::Feature => "feature",
        })
    }
}

impl FromStr for VideoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(VideoMode::Raw),
            "feature" => Ok(VideoMode::Feature),
            _ => Err(Error::Config(format!("unknown mode {s:?} (raw|feature)"))),
        }
    }
}

/// One sample: video (raw frames `T×1×16×16` or features `T×Dv`), per-frame
/// FAU activations `T×Dau` in `[0, 1]`, and the matching waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct AVClip {
    pub label: ClipLabel,
    pub seed: u64,
    pub video: Tensor,
    pub fau: Tensor,
    pub waveform: Waveform,
}

impl AVClip {
    pub fn mode(&self) -> VideoMode {
        if self.video.shape().len() == 4 {
            VideoMode::Raw
        } else {
            VideoMode::Feature
        }
    }

    pub fn frames(&self) -> usize {
        self.video.shape()[0]
    }

    /// Video flattened to one row per frame.
    pub fn video_rows(&self) -> Tensor {
        let t = self.frames();
        self.video
            .reshape(vec![t, self.video.len() / t])
            .expect("frame-major video")
    }
}
