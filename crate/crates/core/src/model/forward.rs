use super::{HeadMode, Mlp, Model, ModelConfig, Params};
use crate::audio::{LogMel, MelSpectrogram};
use crate::corpus::{AVClip, ClipLabel, VideoMode};
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{kernels, Graph, Tensor, Var};

/// Supervision for the three heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Targets {
    /// Multimodal head: binary (0 real / 1 fake) or the four-class label.
    pub av: usize,
    /// 1 when the audio track is forged.
    pub a: usize,
    /// 1 when the video track is forged.
    pub v: usize,
}

impl Targets {
    pub fn from_label(label: ClipLabel, mode: HeadMode) -> Self {
        Self {
            av: match mode {
                HeadMode::Binary => label.binary(),
                HeadMode::FourClass => label.index(),
            },
            a: usize::from(label.fake_audio()),
            v: usize::from(label.fake_video()),
        }
    }
}

/// Model-ready tensors for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipInput {
    /// `T × (audio_pool·n_mels)`: consecutive mel columns grouped per frame.
    pub audio: Tensor,
    /// `T × video_in`.
    pub video: Tensor,
    /// `T × fau_in`: FAU activations (feature mode) or frame pixels (raw mode).
    pub fau: Tensor,
    pub label: ClipLabel,
}

impl ClipInput {
    pub fn prepare(clip: &AVClip, cfg: &ModelConfig, frontend: &LogMel) -> Result<Self> {
        if clip.mode() != cfg.video_mode {
            return Err(Error::Config(format!(
                "clip is {} mode, model expects {}",
                clip.mode(),
                cfg.video_mode
            )));
        }
        if clip.frames() != cfg.frames {
            return Err(Error::Config(format!(
                "clip has {} frames, model expects {}",
                clip.frames(),
                cfg.frames
            )));
        }
        let mel = frontend.compute(&clip.waveform)?;
        let video = clip.video_rows();
        let fau = match cfg.video_mode {
            VideoMode::Raw => video.clone(),
            VideoMode::Feature => clip.fau.clone(),
        };
        Self::from_parts(&mel, video, fau, clip.label, cfg)
    }

    pub fn from_parts(
        mel: &MelSpectrogram,
        video: Tensor,
        fau: Tensor,
        label: ClipLabel,
        cfg: &ModelConfig,
    ) -> Result<Self> {
        Ok(Self {
            audio: group_mel_frames(mel, cfg)?,
            video: check_rows("video", video, cfg.frames, cfg.video_in())?,
            fau: check_rows("fau", fau, cfg.frames, cfg.fau_in())?,
            label,
        })
    }

    pub fn targets(&self, mode: HeadMode) -> Targets {
        Targets::from_label(self.label, mode)
    }
}

fn check_rows(what: &str, t: Tensor, rows: usize, cols: usize) -> Result<Tensor> {
    if t.shape().len() != 2 || t.rows() != rows || t.cols() != cols {
        return Err(Error::Config(format!(
            "{what} input has shape {:?}, expected [{rows}, {cols}]",
            t.shape()
        )));
    }
    Ok(t)
}

/// Fixed affine standardisation of log10 mel energies before the encoder.
pub const MEL_CENTER: f64 = -2.5;
pub const MEL_SCALE: f64 = 1.5;

/// `n_mels × (T·pool)` → `T × (pool·n_mels)`, standardised.
fn group_mel_frames(mel: &MelSpectrogram, cfg: &ModelConfig) -> Result<Tensor> {
    let (m, f) = (mel.n_mels(), mel.frames());
    if m != cfg.n_mels || f != cfg.mel_frames() {
        return Err(Error::Config(format!(
            "spectrogram is {m}×{f}, model expects {}×{} ({} frames × {} mel columns)",
            cfg.n_mels,
            cfg.mel_frames(),
            cfg.frames,
            cfg.audio_pool
        )));
    }
    // columns are time; after transposing each row is one mel frame
    let mut by_time = kernels::transpose(mel.grid.data(), m, f);
    by_time.iter_mut().for_each(|v| *v = (*v - MEL_CENTER) / MEL_SCALE);
    Tensor::new(vec![cfg.frames, cfg.audio_in()], by_time)
}

fn stack(rows: &[&Tensor]) -> Tensor {
    let cols = rows[0].cols();
    let n: usize = rows.iter().map(|t| t.rows()).sum();
    let mut data = Vec::with_capacity(n * cols);
    rows.iter().for_each(|t| data.extend_from_slice(t.data()));
    Tensor::new(vec![n, cols], data).expect("uniform widths")
}

#[derive(Debug, Clone, Copy)]
struct MlpVars {
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
}

impl MlpVars {
    fn bind(g: &mut Graph, m: &Mlp, track: bool) -> Self {
        let mut b = |t: &Tensor| if track { g.leaf(t) } else { g.constant(t) };
        Self {
            w1: b(&m.w1),
            b1: b(&m.b1),
            w2: b(&m.w2),
            b2: b(&m.b2),
        }
    }

    fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = g.linear(x, self.w1, self.b1)?;
        let h = g.relu(h)?;
        g.linear(h, self.w2, self.b2)
    }

    fn vars(&self) -> [Var; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

/// Parameters bound into one graph.
#[derive(Debug, Clone)]
pub struct Bound {
    audio_enc: MlpVars,
    video_enc: MlpVars,
    fau_enc: MlpVars,
    fuse_w: Var,
    fuse_b: Var,
    pub query: Var,
    key_a: (Var, Var),
    val_a: (Var, Var),
    key_v: (Var, Var),
    val_v: (Var, Var),
    pub sigma_av: Var,
    pub sigma_a: Var,
    pub sigma_v: Var,
    head_av: MlpVars,
    head_a: MlpVars,
    head_v: MlpVars,
}

impl Bound {
    /// Binds every parameter. With `track = false` nothing records gradients
    /// (inference).
    pub fn bind(g: &mut Graph, p: &Params, track: bool) -> Self {
        let audio_enc = MlpVars::bind(g, &p.audio_enc, track);
        let video_enc = MlpVars::bind(g, &p.video_enc, track);
        let fau_enc = MlpVars::bind(g, &p.fau_enc, track);
        let mut b = |t: &Tensor| if track { g.leaf(t) } else { g.constant(t) };
        let fuse_w = b(&p.fuse_w);
        let fuse_b = b(&p.fuse_b);
        let query = b(&p.query);
        let key_a = (b(&p.key_a_w), b(&p.key_a_b));
        let val_a = (b(&p.val_a_w), b(&p.val_a_b));
        let key_v = (b(&p.key_v_w), b(&p.key_v_b));
        let val_v = (b(&p.val_v_w), b(&p.val_v_b));
        let sigma_av = b(&p.sigma_av);
        let sigma_a = b(&p.sigma_a);
        let sigma_v = b(&p.sigma_v);
        Self {
            audio_enc,
            video_enc,
            fau_enc,
            fuse_w,
            fuse_b,
            query,
            key_a,
            val_a,
            key_v,
            val_v,
            sigma_av,
            sigma_a,
            sigma_v,
            head_av: MlpVars::bind(g, &p.head_av, track),
            head_a: MlpVars::bind(g, &p.head_a, track),
            head_v: MlpVars::bind(g, &p.head_v, track),
        }
    }

    /// Vars in the order of [`Params::named`].
    pub fn vars(&self) -> Vec<Var> {
        let mut v = Vec::new();
        v.extend(self.audio_enc.vars());
        v.extend(self.video_enc.vars());
        v.extend(self.fau_enc.vars());
        v.extend([
            self.fuse_w,
            self.fuse_b,
            self.query,
            self.key_a.0,
            self.key_a.1,
            self.val_a.0,
            self.val_a.1,
            self.key_v.0,
            self.key_v.1,
            self.val_v.0,
            self.val_v.1,
            self.sigma_av,
            self.sigma_a,
            self.sigma_v,
        ]);
        v.extend(self.head_av.vars());
        v.extend(self.head_a.vars());
        v.extend(self.head_v.vars());
        v
    }

    /// Adds graph gradients into the parameter tensors' grad buffers.
    pub fn accumulate_grads(&self, g: &Graph, p: &mut Params) -> Result<()> {
        for (v, t) in self.vars().into_iter().zip(p.tensors_mut()) {
            g.accumulate_into(v, t)?;
        }
        Ok(())
    }

    /// Per-frame audio encoder on any number of stacked frame rows.
    pub fn encode_audio(&self, g: &mut Graph, x: Var) -> Result<Var> {
        self.audio_enc.apply(g, x)
    }

    pub fn encode_video(&self, g: &mut Graph, x: Var) -> Result<Var> {
        self.video_enc.apply(g, x)
    }

    /// Frozen FAU encoder.
    pub fn encode_fau(&self, g: &mut Graph, x: Var) -> Result<Var> {
        self.fau_enc.apply(g, x)
    }

    /// `Z_v = Z_vid + P(Z_au)` with a learnable per-frame affine `P`.
    pub fn fuse(&self, g: &mut Graph, z_vid: Var, z_au: Var) -> Result<Var> {
        if g.shape(z_vid) != g.shape(z_au) {
            return Err(Error::dim("fuse", g.shape(z_vid), g.shape(z_au)));
        }
        let proj = g.linear(z_au, self.fuse_w, self.fuse_b)?;
        g.add(z_vid, proj)
    }

    /// Per-frame key/value maps for both modalities.
    pub fn keys_values(&self, g: &mut Graph, z_a: Var, z_v: Var) -> Result<[Var; 4]> {
        Ok([
            g.linear(z_a, self.key_a.0, self.key_a.1)?,
            g.linear(z_a, self.val_a.0, self.val_a.1)?,
            g.linear(z_v, self.key_v.0, self.key_v.1)?,
            g.linear(z_v, self.val_v.0, self.val_v.1)?,
        ])
    }

    /// `softmax(Q·Kᵀ/√L)·V` with the shared queries. Returns the aligned
    /// features and the attention matrix.
    pub fn attend(&self, g: &mut Graph, k: Var, v: Var) -> Result<(Var, Var)> {
        let qs = g.shape(self.query).to_vec();
        if g.shape(k) != qs.as_slice() || g.shape(v) != qs.as_slice() {
            return Err(Error::dim("query_shared_transform", &qs, g.shape(k)));
        }
        let kt = g.transpose(k)?;
        let logits = g.matmul(self.query, kt)?;
        let logits = g.mul_const(logits, 1.0 / (qs[1] as f64).sqrt())?;
        let attn = g.softmax_rows(logits)?;
        Ok((g.matmul(attn, v)?, attn))
    }

    /// Query-shared transform of one clip's `T×L` latents.
    pub fn query_shared_transform(&self, g: &mut Graph, z_a: Var, z_v: Var) -> Result<QtVars> {
        let [k_a, v_a, k_v, v_v] = self.keys_values(g, z_a, z_v)?;
        let (z_aq, attn_a) = self.attend(g, k_a, v_a)?;
        let (z_vq, attn_v) = self.attend(g, k_v, v_v)?;
        Ok(QtVars {
            z_aq,
            z_vq,
            attn_a,
            attn_v,
        })
    }

    /// Dense attentional matrices `softmax_rows(σ·X·Yᵀ)` for the
    /// audio-visual, audio and visual pairs.
    pub fn temporal_pool(&self, g: &mut Graph, z_aq: Var, z_vq: Var) -> Result<TapVars> {
        if g.shape(z_aq) != g.shape(z_vq) {
            return Err(Error::dim("temporal_attentional_pool", g.shape(z_aq), g.shape(z_vq)));
        }
        let mut pool = |x: Var, y: Var, sigma: Var| -> Result<(Var, Var)> {
            let yt = g.transpose(y)?;
            let gram = g.matmul(x, yt)?;
            let pre = g.scale(gram, sigma)?;
            Ok((pre, g.softmax_rows(pre)?))
        };
        let (pre_av, m_av) = pool(z_aq, z_vq, self.sigma_av)?;
        let (pre_a, m_a) = pool(z_aq, z_aq, self.sigma_a)?;
        let (pre_v, m_v) = pool(z_vq, z_vq, self.sigma_v)?;
        Ok(TapVars {
            pre_av,
            pre_a,
            pre_v,
            m_av,
            m_a,
            m_v,
        })
    }

    /// Classification heads on row-stacked flattened matrices (`B×T²` each).
    pub fn predict(&self, g: &mut Graph, flat_av: Var, flat_a: Var, flat_v: Var) -> Result<[Var; 3]> {
        Ok([
            self.head_av.apply(g, flat_av)?,
            self.head_a.apply(g, flat_a)?,
            self.head_v.apply(g, flat_v)?,
        ])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QtVars {
    pub z_aq: Var,
    pub z_vq: Var,
    pub attn_a: Var,
    pub attn_v: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct TapVars {
    pub pre_av: Var,
    pub pre_a: Var,
    pub pre_v: Var,
    pub m_av: Var,
    pub m_a: Var,
    pub m_v: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct SampleVars {
    pub z_a: Var,
    pub z_v: Var,
    pub z_au: Var,
    pub qt: QtVars,
    pub tap: TapVars,
}

/// Graph handles produced by a batched forward pass.
#[derive(Debug, Clone)]
pub struct BatchForward {
    pub samples: Vec<SampleVars>,
    pub logits_av: Var,
    pub logits_a: Var,
    pub logits_v: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub av: Var,
    pub a: Var,
    pub v: Var,
}

/// Snapshot of every intermediate of one clip.
#[derive(Debug, Clone)]
pub struct ForwardOut {
    pub z_a: Tensor,
    pub z_v: Tensor,
    pub z_aq: Tensor,
    pub z_vq: Tensor,
    pub attn_a: Tensor,
    pub attn_v: Tensor,
    /// Pre-normalisation matrices `σ·X·Yᵀ`.
    pub pre_av: Tensor,
    pub pre_a: Tensor,
    pub pre_v: Tensor,
    pub m_av: Tensor,
    pub m_a: Tensor,
    pub m_v: Tensor,
    pub s_av: Tensor,
    pub s_a: Tensor,
    pub s_v: Tensor,
}

/// Output of the multimodal head after softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub class: usize,
    /// Probability that the clip is forged: `p[1]` for binary heads,
    /// `1 − p[RARV]` for four-class heads.
    pub fake_score: f64,
}

impl Prediction {
    pub fn from_logits(logits: &[f64], mode: HeadMode) -> Self {
        let probs = kernels::softmax_rows(logits, 1, logits.len());
        let class = (0..probs.len())
            .max_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        let fake_score = match mode {
            HeadMode::Binary => probs[1],
            HeadMode::FourClass => 1.0 - probs[0],
        };
        Self {
            probs,
            class,
            fake_score,
        }
    }
}

/// Clips scored per graph during inference.
const INFER_CHUNK: usize = 32;

impl Model {
    /// Full pipeline for a batch of clips in one graph. Per-frame stages run on
    /// the stacked `B·T` rows; attention and pooling run per clip.
    pub fn forward_batch(&self, g: &mut Graph, b: &Bound, inputs: &[&ClipInput]) -> Result<BatchForward> {
        let cfg = &self.config;
        if inputs.is_empty() {
            return Err(Error::Usage("empty batch".into()));
        }
        let t = cfg.frames;
        let audio = g.constant(&stack(&inputs.iter().map(|i| &i.audio).collect::<Vec<_>>()));
        let video = g.constant(&stack(&inputs.iter().map(|i| &i.video).collect::<Vec<_>>()));
        let fau = g.constant(&stack(&inputs.iter().map(|i| &i.fau).collect::<Vec<_>>()));
        let z_a_all = b.encode_audio(g, audio)?;
        let z_vid_all = b.encode_video(g, video)?;
        let z_au_all = b.encode_fau(g, fau)?;
        let z_v_all = b.fuse(g, z_vid_all, z_au_all)?;
        let [k_a, v_a, k_v, v_v] = b.keys_values(g, z_a_all, z_v_all)?;

        let mut samples = Vec::with_capacity(inputs.len());
        let (mut flat_av, mut flat_a, mut flat_v) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..inputs.len() {
            let rows = |g: &mut Graph, x: Var| g.slice_rows(x, i * t, t);
            let (ka, va, kv, vv) = (rows(g, k_a)?, rows(g, v_a)?, rows(g, k_v)?, rows(g, v_v)?);
            let (z_aq, attn_a) = b.attend(g, ka, va)?;
            let (z_vq, attn_v) = b.attend(g, kv, vv)?;
            let tap = b.temporal_pool(g, z_aq, z_vq)?;
            flat_av.push(g.flatten(tap.m_av)?);
            flat_a.push(g.flatten(tap.m_a)?);
            flat_v.push(g.flatten(tap.m_v)?);
            samples.push(SampleVars {
                z_a: rows(g, z_a_all)?,
                z_v: rows(g, z_v_all)?,
                z_au: rows(g, z_au_all)?,
                qt: QtVars {
                    z_aq,
                    z_vq,
                    attn_a,
                    attn_v,
                },
                tap,
            });
        }
        let fav = g.concat_rows(&flat_av)?;
        let fa = g.concat_rows(&flat_a)?;
        let fv = g.concat_rows(&flat_v)?;
        let [logits_av, logits_a, logits_v] = b.predict(g, fav, fa, fv)?;
        Ok(BatchForward {
            samples,
            logits_av,
            logits_a,
            logits_v,
        })
    }

    /// `λ_av·CE(s_av) + λ_a·CE(s_a) + λ_v·CE(s_v)`, batch-averaged.
    pub fn loss(&self, g: &mut Graph, fwd: &BatchForward, targets: &[Targets]) -> Result<LossParts> {
        let cfg = &self.config;
        let av = g.cross_entropy(fwd.logits_av, &targets.iter().map(|t| t.av).collect::<Vec<_>>())?;
        let a = g.cross_entropy(fwd.logits_a, &targets.iter().map(|t| t.a).collect::<Vec<_>>())?;
        let v = g.cross_entropy(fwd.logits_v, &targets.iter().map(|t| t.v).collect::<Vec<_>>())?;
        let wav = g.mul_const(av, cfg.lambda_av)?;
        let wa = g.mul_const(a, cfg.lambda_a)?;
        let wv = g.mul_const(v, cfg.lambda_v)?;
        let s = g.add(wav, wa)?;
        let total = g.add(s, wv)?;
        Ok(LossParts { total, av, a, v })
    }

    /// Forward pass of one clip with every intermediate captured.
    pub fn forward(&self, input: &ClipInput) -> Result<ForwardOut> {
        let mut g = Graph::new();
        let b = Bound::bind(&mut g, &self.params, false);
        let fwd = self.forward_batch(&mut g, &b, &[input])?;
        let s = fwd.samples[0];
        let snap = |v: Var| g.tensor(v);
        Ok(ForwardOut {
            z_a: snap(s.z_a),
            z_v: snap(s.z_v),
            z_aq: snap(s.qt.z_aq),
            z_vq: snap(s.qt.z_vq),
            attn_a: snap(s.qt.attn_a),
            attn_v: snap(s.qt.attn_v),
            pre_av: snap(s.tap.pre_av),
            pre_a: snap(s.tap.pre_a),
            pre_v: snap(s.tap.pre_v),
            m_av: snap(s.tap.m_av),
            m_a: snap(s.tap.m_a),
            m_v: snap(s.tap.m_v),
            s_av: snap(fwd.logits_av).reshape(vec![self.config.head_mode.classes()])?,
            s_a: snap(fwd.logits_a).reshape(vec![2])?,
            s_v: snap(fwd.logits_v).reshape(vec![2])?,
        })
    }

    /// Multimodal-head logits for a batch (no gradient tracking).
    pub fn logits_av(&self, inputs: &[&ClipInput]) -> Result<Tensor> {
        let mut g = Graph::new();
        let b = Bound::bind(&mut g, &self.params, false);
        let fwd = self.forward_batch(&mut g, &b, inputs)?;
        Ok(g.tensor(fwd.logits_av))
    }

    /// Scores one clip from the multimodal head only.
    pub fn infer(&self, input: &ClipInput) -> Result<Prediction> {
        Ok(self.predict_batch(&[input])?.remove(0))
    }

    /// Scores many clips, in parallel chunks; per-clip results do not depend
    /// on chunking or worker count.
    pub fn predict_batch(&self, inputs: &[&ClipInput]) -> Result<Vec<Prediction>> {
        let chunks: Vec<&[&ClipInput]> = inputs.chunks(INFER_CHUNK).collect();
        let mode = self.config.head_mode;
        let per_chunk = par::map_range(chunks.len(), |c| -> Result<Vec<Prediction>> {
            let logits = self.logits_av(chunks[c])?;
            Ok((0..logits.rows())
                .map(|r| Prediction::from_logits(logits.row(r), mode))
                .collect())
        });
        let mut out = Vec::with_capacity(inputs.len());
        for p in per_chunk {
            out.extend(p?);
        }
        Ok(out)
    }
}

/// Prepares model inputs for many clips in parallel.
pub fn prepare_all(clips: &[AVClip], cfg: &ModelConfig) -> Result<Vec<ClipInput>> {
    let frontend = LogMel::new();
    par::map_range(clips.len(), |i| ClipInput::prepare(&clips[i], cfg, &frontend))
        .into_iter()
        .collect()
}
