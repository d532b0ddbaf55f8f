//! Monte-Carlo oracles for the synthetic generator's planted structure.

use fauforensics::corpus::{
    audio_envelope, generate_clip, generate_split, pearson, read_corpus, write_corpus, ClipLabel, Corpus, GenConfig,
    VideoMode,
};
use fauforensics::par::with_workers;

const SEEDS: u64 = 500;

/// Pearson correlation between video channel 0 (the level channel) and the
/// per-frame audio envelope.
fn av_coupling(seed: u64, label: ClipLabel, cfg: &GenConfig) -> f64 {
    let c = generate_clip(seed, label, cfg).unwrap();
    let level: Vec<f64> = (0..c.frames()).map(|f| c.video.at(f, 0)).collect();
    pearson(&level, &audio_envelope(&c.waveform, c.frames()))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn genuine_pairs_are_strongly_coupled() {
    let cfg = GenConfig::default();
    let r: Vec<f64> = (0..SEEDS).map(|s| av_coupling(s, ClipLabel::Rarv, &cfg)).collect();
    assert!(mean(&r) > 0.8, "mean RARV coupling {}", mean(&r));
}

#[test]
fn forged_video_breaks_the_coupling() {
    let cfg = GenConfig::default();
    let r: Vec<f64> = (0..SEEDS).map(|s| av_coupling(s, ClipLabel::Rafv, &cfg)).collect();
    assert!(mean(&r).abs() < 0.2, "mean RAFV coupling {}", mean(&r));
    let f: Vec<f64> = (0..SEEDS).map(|s| av_coupling(s, ClipLabel::Farv, &cfg)).collect();
    assert!(mean(&f).abs() < 0.2, "mean FARV coupling {}", mean(&f));
}

#[test]
fn neighbouring_seeds_are_independent() {
    let cfg = GenConfig::default();
    let level = |s: u64| -> Vec<f64> {
        let c = generate_clip(s, ClipLabel::Rarv, &cfg).unwrap();
        (0..c.frames()).map(|f| c.video.at(f, 0)).collect()
    };
    let r: Vec<f64> = (0..SEEDS).map(|s| pearson(&level(s), &level(s + 1))).collect();
    assert!(mean(&r).abs() < 0.2, "mean neighbour correlation {}", mean(&r));
}

#[test]
fn split_is_balanced_and_worker_independent() {
    let cfg = GenConfig {
        mode: VideoMode::Raw,
        ..GenConfig::default()
    };
    let a = with_workers(1, || generate_split(17, 40, &cfg).unwrap());
    let b = with_workers(3, || generate_split(17, 40, &cfg).unwrap());
    assert_eq!(a, b);
    for l in ClipLabel::ALL {
        assert_eq!(a.iter().filter(|c| c.label == l).count(), 10);
    }
}

#[test]
fn ten_clips_round_trip_through_disk() {
    let clips = generate_split(23, 10, &GenConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ten.ffc");
    let corpus = Corpus::new(VideoMode::Feature, 25, clips).unwrap();
    write_corpus(&p, &corpus).unwrap();
    assert_eq!(read_corpus(&p).unwrap(), corpus);
}
