//! Behavioural contracts of the detector: staged composition, head
//! isolation, query sharing, frozen FAU branch and run determinism.

use fauforensics::corpus::{generate_split, import_features, write_corpus, Corpus, GenConfig, VideoMode};
use fauforensics::model::{frozen_bytes, prepare_all, Bound, ClipInput, HeadMode, Model, ModelConfig};
use fauforensics::par::with_workers;
use fauforensics::train::{train, train_prepared, TrainConfig};
use fauforensics::{Graph, Tensor};

fn small_config(head_mode: HeadMode) -> ModelConfig {
    ModelConfig {
        latent: 16,
        head_mode,
        ..ModelConfig::default()
    }
}

fn inputs(seed: u64, n: usize, cfg: &ModelConfig) -> Vec<ClipInput> {
    let gen = GenConfig {
        mode: cfg.video_mode,
        frames: cfg.frames,
        ..GenConfig::default()
    };
    prepare_all(&generate_split(seed, n, &gen).unwrap(), cfg).unwrap()
}

fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn staged_operations_compose_to_forward() {
    for mode in [VideoMode::Feature, VideoMode::Raw] {
        let cfg = ModelConfig {
            video_mode: mode,
            ..small_config(HeadMode::FourClass)
        };
        let model = Model::new(cfg, 11).unwrap();
        for input in &inputs(3, 4, &model.config) {
            let whole = model.forward(input).unwrap();
            let mut g = Graph::new();
            let b = Bound::bind(&mut g, &model.params, false);
            let (a, v, f) = (g.constant(&input.audio), g.constant(&input.video), g.constant(&input.fau));
            let z_a = b.encode_audio(&mut g, a).unwrap();
            let z_vid = b.encode_video(&mut g, v).unwrap();
            let z_au = b.encode_fau(&mut g, f).unwrap();
            let z_v = b.fuse(&mut g, z_vid, z_au).unwrap();
            let qt = b.query_shared_transform(&mut g, z_a, z_v).unwrap();
            let tap = b.temporal_pool(&mut g, qt.z_aq, qt.z_vq).unwrap();
            let fl = [tap.m_av, tap.m_a, tap.m_v].map(|m| g.flatten(m).unwrap());
            let [s_av, s_a, s_v] = b.predict(&mut g, fl[0], fl[1], fl[2]).unwrap();
            assert_eq!(bits(&g.tensor(z_a)), bits(&whole.z_a));
            assert_eq!(bits(&g.tensor(z_v)), bits(&whole.z_v));
            assert_eq!(bits(&g.tensor(qt.attn_v)), bits(&whole.attn_v));
            assert_eq!(bits(&g.tensor(tap.m_av)), bits(&whole.m_av));
            assert_eq!(bits(&g.tensor(s_av)), bits(&whole.s_av));
            assert_eq!(bits(&g.tensor(s_a)), bits(&whole.s_a));
            assert_eq!(bits(&g.tensor(s_v)), bits(&whole.s_v));
        }
    }
}

#[test]
fn batched_scores_match_single_clip_scores() {
    let model = Model::new(small_config(HeadMode::FourClass), 12).unwrap();
    let xs = inputs(4, 40, &model.config);
    let refs: Vec<&ClipInput> = xs.iter().collect();
    let batch = model.predict_batch(&refs).unwrap();
    for (x, p) in xs.iter().zip(&batch) {
        assert_eq!(&model.infer(x).unwrap(), p);
    }
}

#[test]
fn inference_ignores_unimodal_heads() {
    let model = Model::new(small_config(HeadMode::Binary), 13).unwrap();
    let x = &inputs(5, 4, &model.config)[1];
    let base = model.infer(x).unwrap();

    let mut m = model.clone();
    for t in [&mut m.params.head_a.w1, &mut m.params.head_v.w2, &mut m.params.head_a.b2] {
        t.data_mut().iter_mut().for_each(|v| *v = -3.0 * *v + 1.0);
    }
    assert_eq!(m.infer(x).unwrap(), base);

    let mut m = model.clone();
    m.params.head_av.b2.data_mut()[1] += 1.0;
    assert_ne!(m.infer(x).unwrap(), base);
}

#[test]
fn one_query_matrix_drives_both_modalities() {
    let model = Model::new(small_config(HeadMode::FourClass), 14).unwrap();
    let x = &inputs(6, 4, &model.config)[2];
    let base = model.forward(x).unwrap();
    let mut m = model.clone();
    m.params.query.data_mut()[0] += 0.5;
    let moved = m.forward(x).unwrap();
    // row 0 of both attention maps depends on query row 0
    assert!(moved.attn_a.row(0) != base.attn_a.row(0));
    assert!(moved.attn_v.row(0) != base.attn_v.row(0));
    assert_eq!(moved.attn_a.row(1), base.attn_a.row(1));
}

#[test]
fn fau_branch_stays_frozen_while_the_rest_learns() {
    let model = Model::new(small_config(HeadMode::FourClass), 15).unwrap();
    let xs = inputs(7, 40, &model.config);
    let tc = TrainConfig {
        batch: 4,
        epochs: 12,
        lr0: 1e-3,
        ..TrainConfig::default()
    };
    let out = train_prepared(model, &xs, &tc, |_| Ok(())).unwrap();
    assert!(out.steps.len() >= 100, "{}", out.steps.len());
    assert_eq!(frozen_bytes(&out.initial), frozen_bytes(&out.last));
    let before = out.initial.params.named();
    let after = out.last.params.named();
    for ((name, a), (_, b)) in before.iter().zip(&after) {
        if a.requires_grad() {
            assert!(a.max_abs_diff(b) > 0.0, "{name} did not move");
        }
    }
    assert!(out.last.params.fau_enc.w1.data() == out.initial.params.fau_enc.w1.data());
}

#[test]
fn training_is_independent_of_worker_count() {
    let cfg = small_config(HeadMode::FourClass);
    let xs = inputs(8, 24, &cfg);
    let tc = TrainConfig {
        batch: 8,
        epochs: 2,
        ..TrainConfig::default()
    };
    let run = |w: usize| {
        with_workers(w, || {
            let m = Model::new(cfg.clone(), 16).unwrap();
            train_prepared(m, &xs, &tc, |_| Ok(())).unwrap()
        })
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.steps, b.steps);
    for ((_, x), (_, y)) in a.last.params.named().iter().zip(&b.last.params.named()) {
        assert_eq!(bits(x), bits(y));
    }
}

#[test]
fn imported_features_train_like_in_memory_clips() {
    let gen = GenConfig::default();
    let clips = generate_split(9, 16, &gen).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("feat.ffc");
    write_corpus(&path, &Corpus::new(VideoMode::Feature, 25, clips.clone()).unwrap()).unwrap();
    let imported = import_features(&path, 25).unwrap();
    let tc = TrainConfig {
        batch: 4,
        epochs: 2,
        ..TrainConfig::default()
    };
    let cfg = small_config(HeadMode::Binary);
    let a = train(Model::new(cfg.clone(), 17).unwrap(), &clips, &tc).unwrap();
    let b = train(Model::new(cfg, 17).unwrap(), &imported, &tc).unwrap();
    assert_eq!(a.steps, b.steps);
    assert!(import_features(&path, 12).is_err());
}
