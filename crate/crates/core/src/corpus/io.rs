use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{AVClip, ClipLabel, VideoMode};
use crate::audio::{Waveform, SAMPLE_RATE};
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::tensor::io::{write_tensor, Cursor, DType};

pub const CORPUS_MAGIC: &[u8; 4] = b"FFC1";
pub const CORPUS_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub mode: VideoMode,
    pub frames: usize,
    pub clips: Vec<AVClip>,
}

impl Corpus {
    pub fn new(mode: VideoMode, frames: usize, clips: Vec<AVClip>) -> Result<Self> {
        for (i, c) in clips.iter().enumerate() {
            if c.mode() != mode || c.frames() != frames || c.fau.shape()[0] != frames {
                return Err(Error::Config(format!(
                    "clip {i} is {}/{} frames, corpus is {mode}/{frames}",
                    c.mode(),
                    c.frames()
                )));
            }
        }
        Ok(Self {
            mode,
            frames,
            clips,
        })
    }

    pub fn histogram(&self) -> [u64; 4] {
        let mut h = [0u64; 4];
        self.clips.iter().for_each(|c| h[c.label.index()] += 1);
        h
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            count: self.clips.len() as u64,
            mode: self.mode,
            frames: self.frames,
            histogram: self.histogram(),
        }
    }
}

/// Sidecar summary written next to every corpus file.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub count: u64,
    pub mode: VideoMode,
    pub frames: usize,
    pub histogram: [u64; 4],
}

impl Manifest {
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("format", "FFC1");
        kv.set("version", CORPUS_VERSION);
        kv.set("count", self.count);
        kv.set("mode", self.mode);
        kv.set("frames", self.frames);
        for l in ClipLabel::ALL {
            kv.set(&format!("label.{}", l.name()), self.histogram[l.index()]);
        }
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let need = |k: &str| {
            kv.get(k)
                .ok_or_else(|| Error::Config(format!("manifest missing {k}")))
        };
        let num = |k: &str| -> Result<u64> {
            need(k)?
                .parse()
                .map_err(|_| Error::Config(format!("manifest field {k} not a number")))
        };
        let mut histogram = [0u64; 4];
        for l in ClipLabel::ALL {
            histogram[l.index()] = num(&format!("label.{}", l.name()))?;
        }
        Ok(Self {
            count: num("count")?,
            mode: need("mode")?.parse()?,
            frames: num("frames")? as usize,
            histogram,
        })
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Writes the corpus and its `.manifest` sidecar.
pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_corpus_to(&mut w, corpus)?;
    w.flush()?;
    std::fs::write(manifest_path(path), corpus.manifest().to_kv().to_text())?;
    Ok(())
}

pub fn write_corpus_to<W: Write>(w: &mut W, corpus: &Corpus) -> Result<()> {
    w.write_all(CORPUS_MAGIC)?;
    w.write_all(&CORPUS_VERSION.to_le_bytes())?;
    w.write_all(&[corpus.mode.tag()])?;
    w.write_all(&(corpus.frames as u32).to_le_bytes())?;
    w.write_all(&(corpus.clips.len() as u64).to_le_bytes())?;
    for c in &corpus.clips {
        w.write_all(&[c.label as u8])?;
        w.write_all(&c.seed.to_le_bytes())?;
        write_tensor(w, &c.video, DType::F64)?;
        write_tensor(w, &c.fau, DType::F64)?;
        write_tensor(w, &c.waveform.to_tensor(), DType::F32)?;
    }
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Corpus> {
    read_corpus_from(BufReader::new(File::open(path)?))
}

pub fn read_corpus_from<R: Read>(r: R) -> Result<Corpus> {
    let mut c = Cursor::new(r);
    c.expect_magic(CORPUS_MAGIC)?;
    let at = c.offset();
    let version = c.u16()?;
    if version != CORPUS_VERSION {
        return Err(Error::format(at, format!("unsupported corpus version {version}")));
    }
    let at = c.offset();
    let mode = VideoMode::from_tag(c.u8()?)
        .ok_or_else(|| Error::format(at, "unknown video mode tag"))?;
    let frames = c.u32()? as usize;
    let count = c.u64()?;
    let mut clips = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        let at = c.offset();
        let label = ClipLabel::from_index(c.u8()? as usize)
            .map_err(|_| Error::format(at, "label out of range"))?;
        let seed = c.u64()?;
        let at = c.offset();
        let (video, _) = c.tensor()?;
        let rank_ok = match mode {
            VideoMode::Raw => video.shape().len() == 4,
            VideoMode::Feature => video.shape().len() == 2,
        };
        if !rank_ok || video.shape()[0] != frames {
            return Err(Error::format(
                at,
                format!("video shape {:?} does not fit {mode} corpus of {frames} frames", video.shape()),
            ));
        }
        let at = c.offset();
        let (fau, _) = c.tensor()?;
        if fau.shape().len() != 2 || fau.shape()[0] != frames {
            return Err(Error::format(at, format!("fau shape {:?}", fau.shape())));
        }
        let (wave, _) = c.tensor()?;
        clips.push(AVClip {
            label,
            seed,
            video,
            fau,
            waveform: Waveform::from_tensor(&wave, SAMPLE_RATE)?,
        });
    }
    if !c.at_end()? {
        return Err(Error::format(c.offset(), "trailing bytes after last record"));
    }
    Ok(Corpus {
        mode,
        frames,
        clips,
    })
}

pub fn read_manifest(corpus_path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(manifest_path(corpus_path))?;
    Manifest::from_kv(&KeyValues::parse(&text)?)
}

/// Loads a feature-mode corpus for a model expecting `frames` frames, e.g.
/// features precomputed by external encoders.
pub fn import_features(path: &Path, frames: usize) -> Result<Vec<AVClip>> {
    let corpus = read_corpus(path)?;
    if corpus.mode != VideoMode::Feature {
        return Err(Error::format(6, "import expects a feature-mode corpus"));
    }
    if corpus.frames != frames {
        return Err(Error::Config(format!(
            "corpus has {} frames per clip, model expects {frames}",
            corpus.frames
        )));
    }
    Ok(corpus.clips)
}
