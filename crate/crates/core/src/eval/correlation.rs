//! Temporal consistency of FAU streams.

use crate::corpus::{pearson, AVClip};
use crate::error::{Error, Result};
use crate::tensor::kernels::dot;
use crate::tensor::Tensor;

fn check_sequence(fau: &Tensor) -> Result<(usize, usize)> {
    if fau.shape().len() != 2 || fau.rows() < 2 {
        return Err(Error::Metric(format!(
            "need a T×D sequence with T >= 2, got {:?}",
            fau.shape()
        )));
    }
    Ok((fau.rows(), fau.cols()))
}

/// Mean cosine similarity of consecutive frame vectors. Pairs involving a
/// zero frame are skipped.
pub fn correlation_intensity(fau: &Tensor) -> Result<f64> {
    let (t, _) = check_sequence(fau)?;
    let norms: Vec<f64> = (0..t).map(|i| dot(fau.row(i), fau.row(i)).sqrt()).collect();
    let (mut sum, mut pairs) = (0.0, 0usize);
    for i in 0..t - 1 {
        if norms[i] == 0.0 || norms[i + 1] == 0.0 {
            continue;
        }
        let c = dot(fau.row(i), fau.row(i + 1)) / (norms[i] * norms[i + 1]);
        sum += c.clamp(-1.0, 1.0);
        pairs += 1;
    }
    if pairs == 0 {
        return Err(Error::Metric("no consecutive pair of nonzero FAU frames".into()));
    }
    Ok(sum / pairs as f64)
}

/// Mean over channels of the lag-1 Pearson autocorrelation. Constant
/// channels are skipped.
pub fn lag1_autocorrelation(fau: &Tensor) -> Result<f64> {
    let (t, d) = check_sequence(fau)?;
    if t < 3 {
        return Err(Error::Metric("lag-1 autocorrelation needs T >= 3".into()));
    }
    let (mut sum, mut used) = (0.0, 0usize);
    for c in 0..d {
        let x: Vec<f64> = (0..t).map(|i| fau.at(i, c)).collect();
        let (a, b) = (&x[..t - 1], &x[1..]);
        let flat = |s: &[f64]| s.iter().all(|&v| v == s[0]);
        if flat(a) || flat(b) {
            continue;
        }
        sum += pearson(a, b);
        used += 1;
    }
    if used == 0 {
        return Err(Error::Metric("every FAU channel is constant".into()));
    }
    Ok(sum / used as f64)
}

/// Mean, sample standard deviation and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Metric("summary needs at least two values".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(Self {
            n: values.len(),
            mean,
            std: var.sqrt(),
            stderr: (var / n).sqrt(),
        })
    }

    /// Difference of means in units of the combined standard error.
    pub fn separation(&self, other: &Summary) -> f64 {
        (self.mean - other.mean) / (self.stderr.powi(2) + other.stderr.powi(2)).sqrt()
    }
}

/// Real-video versus fake-video population statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub cosine_real: Summary,
    pub cosine_fake: Summary,
    pub lag1_real: Summary,
    pub lag1_fake: Summary,
}

impl CorrelationReport {
    pub fn cosine_separation(&self) -> f64 {
        self.cosine_real.separation(&self.cosine_fake)
    }

    pub fn lag1_separation(&self) -> f64 {
        self.lag1_real.separation(&self.lag1_fake)
    }
}

/// Splits clips by video authenticity and summarises both statistics.
pub fn analyze_correlation(clips: &[AVClip]) -> Result<CorrelationReport> {
    let mut cos = (Vec::new(), Vec::new());
    let mut lag = (Vec::new(), Vec::new());
    for c in clips {
        let (ci, li) = (correlation_intensity(&c.fau)?, lag1_autocorrelation(&c.fau)?);
        if c.label.fake_video() {
            cos.1.push(ci);
            lag.1.push(li);
        } else {
            cos.0.push(ci);
            lag.0.push(li);
        }
    }
    Ok(CorrelationReport {
        cosine_real: Summary::of(&cos.0)?,
        cosine_fake: Summary::of(&cos.1)?,
        lag1_real: Summary::of(&lag.0)?,
        lag1_fake: Summary::of(&lag.1)?,
    })
}
