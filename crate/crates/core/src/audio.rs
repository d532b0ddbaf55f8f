//! Log-mel spectrogram front-end: periodic Hann STFT, HTK mel filterbank,
//! log10 power with a floor.

use std::io::Read;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SAMPLE_RATE: u32 = 16_000;
pub const WINDOW: usize = 400;
pub const HOP: usize = 160;
pub const N_FFT: usize = 512;
pub const N_BINS: usize = N_FFT / 2 + 1;
pub const N_MELS: usize = 80;
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Input("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.samples.len().max(1)],
            if self.samples.is_empty() {
                vec![0.0]
            } else {
                self.samples.iter().map(|&s| s as f64).collect()
            },
        )
        .expect("1-D waveform")
    }

    pub fn from_tensor(t: &Tensor, sample_rate: u32) -> Result<Self> {
        Self::new(t.data().iter().map(|&v| v as f32).collect(), sample_rate)
    }
}

/// Log-mel grid, `n_mels × frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub grid: Tensor,
}

impl MelSpectrogram {
    pub fn n_mels(&self) -> usize {
        self.grid.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.grid.shape()[1]
    }
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Short-time power spectrum, `frames × (N_FFT/2 + 1)`.
///
/// The signal is reflect-padded by half a window on both sides and frame `i`
/// is centred on sample `i·HOP`; the frame count is `len / HOP`, so one second
/// at 16 kHz gives exactly 100 frames.
pub struct Stft {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

impl Default for Stft {
    fn default() -> Self {
        Self::new()
    }
}

impl Stft {
    pub fn new() -> Self {
        let fft = FftPlanner::new().plan_fft_forward(N_FFT);
        Self {
            fft,
            window: hann(WINDOW),
        }
    }

    pub fn power(&self, w: &Waveform) -> Result<Tensor> {
        let x = &w.samples;
        if x.len() < WINDOW {
            return Err(Error::Input(format!(
                "waveform of {} samples is shorter than one {WINDOW}-sample window",
                x.len()
            )));
        }
        let pad = WINDOW / 2;
        let n = x.len();
        let padded: Vec<f64> = (0..n + 2 * pad)
            .map(|j| {
                let i = j as isize - pad as isize;
                let r = if i < 0 {
                    -i
                } else if i as usize >= n {
                    2 * (n as isize - 1) - i
                } else {
                    i
                };
                x[r as usize] as f64
            })
            .collect();
        let frames = n / HOP;
        let mut out = Vec::with_capacity(frames * N_BINS);
        let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
        for f in 0..frames {
            let seg = &padded[f * HOP..f * HOP + WINDOW];
            for (k, b) in buf.iter_mut().enumerate() {
                *b = if k < WINDOW {
                    Complex::new(seg[k] * self.window[k], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process(&mut buf);
            out.extend(buf[..N_BINS].iter().map(|c| c.norm_sqr()));
        }
        Tensor::new(vec![frames, N_BINS], out)
    }
}

pub fn stft(w: &Waveform) -> Result<Tensor> {
    Stft::new().power(w)
}

/// Triangular HTK-mel filters, `n_mels × (nfft/2 + 1)`, each scaled so its
/// largest tap is exactly 1.
pub fn mel_filterbank(nfft: usize, sr: u32, n_mels: usize) -> Result<Tensor> {
    if n_mels == 0 {
        return Err(Error::Config("n_mels must be at least 1".into()));
    }
    let bins = nfft / 2 + 1;
    let nyquist = sr as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz: Vec<f64> = (0..bins).map(|k| k as f64 * sr as f64 / nfft as f64).collect();
    let mut fb = vec![0.0; n_mels * bins];
    for m in 0..n_mels {
        let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut fb[m * bins..(m + 1) * bins];
        for (k, &f) in bin_hz.iter().enumerate() {
            row[k] = if f > lo && f <= c {
                (f - lo) / (c - lo)
            } else if f > c && f < hi {
                (hi - f) / (hi - c)
            } else {
                0.0
            };
        }
        let peak = row.iter().copied().fold(0.0, f64::max);
        if peak > 0.0 {
            row.iter_mut().for_each(|v| *v /= peak);
        }
    }
    Tensor::new(vec![n_mels, bins], fb)
}

/// Band edges `(low, centre, high)` in Hz of mel filter `m`.
pub fn mel_band(sr: u32, n_mels: usize, m: usize) -> (f64, f64, f64) {
    let top = hz_to_mel(sr as f64 / 2.0);
    let e = |i: usize| mel_to_hz(top * i as f64 / (n_mels + 1) as f64);
    (e(m), e(m + 1), e(m + 2))
}

/// Reusable front-end holding the FFT plan and filterbank.
pub struct LogMel {
    stft: Stft,
    filterbank: Tensor,
}

impl Default for LogMel {
    fn default() -> Self {
        Self::new()
    }
}

impl LogMel {
    pub fn new() -> Self {
        Self {
            stft: Stft::new(),
            filterbank: mel_filterbank(N_FFT, SAMPLE_RATE, N_MELS).expect("static config"),
        }
    }

    pub fn filterbank(&self) -> &Tensor {
        &self.filterbank
    }

    pub fn compute(&self, w: &Waveform) -> Result<MelSpectrogram> {
        let power = self.stft.power(w)?;
        let frames = power.rows();
        let fb = self.filterbank.data();
        let p = power.data();
        let mut grid = vec![0.0; N_MELS * frames];
        for m in 0..N_MELS {
            let filt = &fb[m * N_BINS..(m + 1) * N_BINS];
            for f in 0..frames {
                let e = crate::tensor::kernels::dot(filt, &p[f * N_BINS..(f + 1) * N_BINS]);
                grid[m * frames + f] = e.max(LOG_FLOOR).log10();
            }
        }
        Ok(MelSpectrogram {
            grid: Tensor::new(vec![N_MELS, frames], grid)?,
        })
    }
}

pub fn log_mel(w: &Waveform) -> Result<MelSpectrogram> {
    LogMel::new().compute(w)
}

/// Reads a canonical 44-byte-header mono 16-bit PCM WAV file.
pub fn read_wav<R: Read>(mut r: R) -> Result<Waveform> {
    let mut head = [0u8; 44];
    r.read_exact(&mut head)
        .map_err(|_| Error::format(0, "wav header shorter than 44 bytes"))?;
    let u16_at = |o: usize| u16::from_le_bytes([head[o], head[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().unwrap());
    if &head[0..4] != b"RIFF" || &head[8..12] != b"WAVE" {
        return Err(Error::format(0, "not a RIFF/WAVE file"));
    }
    if &head[12..16] != b"fmt " || u16_at(20) != 1 {
        return Err(Error::format(12, "expected PCM fmt chunk"));
    }
    if u16_at(22) != 1 {
        return Err(Error::format(22, "only mono wav is supported"));
    }
    if u16_at(34) != 16 {
        return Err(Error::format(34, "only 16-bit wav is supported"));
    }
    if &head[36..40] != b"data" {
        return Err(Error::format(36, "expected data chunk at byte 36"));
    }
    let sr = u32_at(24);
    let len = u32_at(40) as usize;
    let mut data = vec![0u8; len];
    r.read_exact(&mut data)
        .map_err(|_| Error::format(44, "wav data chunk truncated"))?;
    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
        .collect();
    Waveform::new(samples, sr)
}

pub fn write_wav(w: &Waveform) -> Vec<u8> {
    let n = w.samples.len() as u32 * 2;
    let mut out = Vec::with_capacity(44 + n as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + n).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&n.to_le_bytes());
    for &s in &w.samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}
