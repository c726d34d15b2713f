//! Self-supervised pretraining of both encoders with two objectives: a
//! three-way temporal task on pairs of clips (different video / A earlier /
//! A later) and a two-way choice of which sentence a video interprets.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::detection::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{all_finite, join, r, zeros_like, Adam, Linear, Params, Real};
use crate::preprocess::{pad_or_truncate_text, pad_or_truncate_video, PaddedText, PoseSequence};
use crate::text_encoder::TextEncoder;
use crate::train::{check_loss, LossRecord};
use crate::video::VideoEncoder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemporalLabel {
    DifferentVideo = 0,
    AEarlier = 1,
    ALater = 2,
}

impl TemporalLabel {
    pub const ALL: [TemporalLabel; 3] = [TemporalLabel::DifferentVideo, TemporalLabel::AEarlier, TemporalLabel::ALater];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Where a clip was cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipSource {
    pub video: usize,
    pub start: usize,
}

#[derive(Debug, Clone)]
pub struct TemporalPair {
    pub clip_a: PoseSequence,
    pub clip_b: PoseSequence,
    pub label: TemporalLabel,
    pub source_a: ClipSource,
    pub source_b: ClipSource,
}

/// The three classes are equally likely. Same-video clips come from a video
/// longer than `2 * clip_len` and do not overlap.
pub fn sample_temporal_pair(videos: &[PoseSequence], clip_len: usize, rng: &mut impl Rng) -> Result<TemporalPair> {
    if videos.len() < 2 {
        return Err(Error::Sampling(format!("temporal pairs need at least 2 videos, got {}", videos.len())));
    }
    if clip_len == 0 {
        return Err(Error::Sampling("clip length must be positive".into()));
    }
    let long: Vec<usize> = (0..videos.len()).filter(|&i| videos[i].n_frames() > 2 * clip_len).collect();
    if long.is_empty() {
        return Err(Error::Sampling(format!("no video is longer than {} frames", 2 * clip_len)));
    }
    let label = TemporalLabel::ALL[rng.random_range(0..3)];
    let max_start = |v: usize| videos[v].n_frames().saturating_sub(clip_len);
    let (a, b) = match label {
        TemporalLabel::DifferentVideo => {
            let va = rng.random_range(0..videos.len());
            let mut vb = rng.random_range(0..videos.len() - 1);
            if vb >= va {
                vb += 1;
            }
            (
                ClipSource { video: va, start: rng.random_range(0..=max_start(va)) },
                ClipSource { video: vb, start: rng.random_range(0..=max_start(vb)) },
            )
        }
        _ => {
            let v = long[rng.random_range(0..long.len())];
            let hi = max_start(v);
            let (s1, s2) = loop {
                let x = rng.random_range(0..=hi);
                let y = rng.random_range(0..=hi);
                if x.abs_diff(y) >= clip_len {
                    break (x.min(y), x.max(y));
                }
            };
            let (sa, sb) = if label == TemporalLabel::AEarlier { (s1, s2) } else { (s2, s1) };
            (ClipSource { video: v, start: sa }, ClipSource { video: v, start: sb })
        }
    };
    Ok(TemporalPair {
        clip_a: videos[a.video].clip(a.start, clip_len),
        clip_b: videos[b.video].clip(b.start, clip_len),
        label,
        source_a: a,
        source_b: b,
    })
}

#[derive(Debug, Clone)]
pub struct SententialExample {
    pub video: PoseSequence,
    pub sent_a: PaddedText,
    pub sent_b: PaddedText,
    /// True when `sent_a` is the video's own sentence.
    pub a_is_true: bool,
    pub video_index: usize,
}

/// The distractor is drawn uniformly from the sentences of other videos
/// that differ from the true one; the true sentence lands in slot A half
/// the time.
pub fn sample_sentential_example(
    videos: &[PoseSequence],
    sentences: &[String],
    frames: usize,
    chars: usize,
    rng: &mut impl Rng,
) -> Result<SententialExample> {
    if videos.len() != sentences.len() || videos.len() < 2 {
        return Err(Error::Sampling("sentential examples need at least 2 videos with sentences".into()));
    }
    let i = rng.random_range(0..videos.len());
    let others: Vec<usize> = (0..sentences.len()).filter(|&j| sentences[j] != sentences[i]).collect();
    if others.is_empty() {
        return Err(Error::Sampling("every video has the same sentence".into()));
    }
    let j = others[rng.random_range(0..others.len())];
    let a_is_true = rng.random_bool(0.5);
    let (t, d) = (pad_or_truncate_text(&sentences[i], chars), pad_or_truncate_text(&sentences[j], chars));
    let (sent_a, sent_b) = if a_is_true { (t, d) } else { (d, t) };
    Ok(SententialExample {
        video: pad_or_truncate_video(&videos[i], frames),
        sent_a,
        sent_b,
        a_is_true,
        video_index: i,
    })
}

/// `-ln softmax(logits)[target]`, computed stably, with its gradient.
pub fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    let lse = m + z.ln();
    let grad = logits
        .iter()
        .enumerate()
        .map(|(k, l)| (l - lse).exp() - (k == target) as u8 as f64)
        .collect();
    (lse - logits[target], grad)
}

fn to_f64<R: Real>(xs: impl IntoIterator<Item = R>) -> Vec<f64> {
    xs.into_iter().map(|x| x.to_f64().unwrap()).collect()
}

/// Cross-entropy of the three-way head on concatenated clip vectors.
pub fn temporal_head_loss<R: Real>(head: &Linear<R>, fa: ArrayView1<R>, fb: ArrayView1<R>, label: TemporalLabel) -> f64 {
    let x = ndarray::concatenate![Axis(0), fa, fb].insert_axis(Axis(0));
    cross_entropy(&to_f64(head.forward(x.view()).row(0).iter().copied()), label.index()).0
}

/// Bilinear scores `v^T M s` for two sentences, softmaxed; loss of the
/// true slot.
pub fn sentential_head_loss<R: Real>(m: ArrayView2<R>, v: ArrayView1<R>, sa: ArrayView1<R>, sb: ArrayView1<R>, a_is_true: bool) -> f64 {
    let mv = v.dot(&m);
    let scores = [mv.dot(&sa).to_f64().unwrap(), mv.dot(&sb).to_f64().unwrap()];
    cross_entropy(&scores, if a_is_true { 0 } else { 1 }).0
}

/// Mean over unmasked frames; all-masked input gives zeros.
fn masked_mean<R: Real>(x: &Array2<R>, mask: &[bool]) -> Array1<R> {
    let n = mask.iter().filter(|&&m| m).count();
    let mut out = Array1::zeros(x.ncols());
    for (row, _) in x.rows().into_iter().zip(mask).filter(|(_, &m)| m) {
        out += &row;
    }
    if n > 0 {
        out.mapv_inplace(|v| v / r::<R>(n as f64));
    }
    out
}

fn masked_mean_backward<R: Real>(d: ArrayView1<R>, mask: &[bool]) -> Array2<R> {
    let n = mask.iter().filter(|&&m| m).count().max(1);
    let scaled = d.mapv(|v| v / r::<R>(n as f64));
    let mut out = Array2::zeros((mask.len(), d.len()));
    for (mut row, &m) in out.rows_mut().into_iter().zip(mask) {
        if m {
            row.assign(&scaled);
        }
    }
    out
}

/// Encoders plus the two pretraining heads, which are dropped afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainModel<R> {
    pub video: VideoEncoder<R>,
    pub text: TextEncoder<R>,
    /// `[2 * video width] -> 3`.
    pub temporal_head: Linear<R>,
    /// `[video width, text width]`.
    pub sentential_head: Array2<R>,
}

impl<R: Real> Params<R> for PretrainModel<R> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, R>)) {
        self.video.visit(&join(prefix, "video"), f);
        self.text.visit(&join(prefix, "text"), f);
        self.temporal_head.visit(&join(prefix, "temporal_head"), f);
        f(join(prefix, "sentential_head.weight"), self.sentential_head.view().into_dyn());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, R>)) {
        self.video.visit_mut(&join(prefix, "video"), f);
        self.text.visit_mut(&join(prefix, "text"), f);
        self.temporal_head.visit_mut(&join(prefix, "temporal_head"), f);
        f(join(prefix, "sentential_head.weight"), self.sentential_head.view_mut().into_dyn());
    }
}

impl<R: Real> PretrainModel<R> {
    pub fn new(rng: &mut impl Rng, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let video = VideoEncoder::new(rng, &cfg.video);
        let text = TextEncoder::new(rng, &cfg.text);
        let (c, d) = (video.width(), text.width());
        let temporal_head = Linear::new(rng, 2 * c, 3);
        let sentential_head = Array2::from_shape_vec((c, d), crate::nn::uniform_fan_in(rng, c, c * d)).unwrap();
        Ok(PretrainModel {
            video,
            text,
            temporal_head,
            sentential_head,
        })
    }

    /// Temporal-head logits for one pair.
    pub fn temporal_logits(&self, pair: &TemporalPair) -> Result<Vec<f64>> {
        let fa = masked_mean(&self.video.forward(&pair.clip_a)?, &pair.clip_a.mask);
        let fb = masked_mean(&self.video.forward(&pair.clip_b)?, &pair.clip_b.mask);
        let x = ndarray::concatenate![Axis(0), fa, fb].insert_axis(Axis(0));
        Ok(to_f64(self.temporal_head.forward(x.view()).row(0).iter().copied()))
    }

    /// Mean cross-entropy over a batch of pairs, optionally accumulating
    /// gradients.
    pub fn temporal_loss(&self, pairs: &[TemporalPair], mut grad: Option<&mut Self>) -> Result<f64> {
        let inv = 1.0 / pairs.len().max(1) as f64;
        let c = self.video.width();
        let mut total = 0.0;
        for p in pairs {
            let Some(g) = grad.as_deref_mut() else {
                total += cross_entropy(&self.temporal_logits(p)?, p.label.index()).0;
                continue;
            };
            let (va, ca) = self.video.forward_train(&p.clip_a)?;
            let (vb, cb) = self.video.forward_train(&p.clip_b)?;
            let x = ndarray::concatenate![Axis(0), masked_mean(&va, &p.clip_a.mask), masked_mean(&vb, &p.clip_b.mask)]
                .insert_axis(Axis(0));
            let logits = to_f64(self.temporal_head.forward(x.view()).row(0).iter().copied());
            let (loss, dl) = cross_entropy(&logits, p.label.index());
            total += loss;
            let dl = Array2::from_shape_fn((1, 3), |(_, k)| r::<R>(dl[k] * inv));
            let dx = self.temporal_head.backward(x.view(), dl.view(), &mut g.temporal_head);
            let da = masked_mean_backward(dx.slice(s![0, ..c]), &p.clip_a.mask);
            let db = masked_mean_backward(dx.slice(s![0, c..]), &p.clip_b.mask);
            self.video.backward(&ca, da.view(), &mut g.video);
            self.video.backward(&cb, db.view(), &mut g.video);
        }
        Ok(total * inv)
    }

    pub fn sentential_loss(&self, examples: &[SententialExample], mut grad: Option<&mut Self>) -> Result<f64> {
        let inv = 1.0 / examples.len().max(1) as f64;
        let mut total = 0.0;
        for e in examples {
            let target = if e.a_is_true { 0 } else { 1 };
            let Some(g) = grad.as_deref_mut() else {
                let v = masked_mean(&self.video.forward(&e.video)?, &e.video.mask);
                let sa = self.text.encode(&e.sent_a)?.pooled;
                let sb = self.text.encode(&e.sent_b)?.pooled;
                total += sentential_head_loss(self.sentential_head.view(), v.view(), sa.view(), sb.view(), e.a_is_true);
                continue;
            };
            let (vf, vc) = self.video.forward_train(&e.video)?;
            let v = masked_mean(&vf, &e.video.mask);
            let (sa, ta) = self.text.pooled_train(&e.sent_a)?;
            let (sb, tb) = self.text.pooled_train(&e.sent_b)?;
            let mv = v.dot(&self.sentential_head);
            let scores = [mv.dot(&sa).to_f64().unwrap(), mv.dot(&sb).to_f64().unwrap()];
            let (loss, ds) = cross_entropy(&scores, target);
            total += loss;
            let mut dv = Array1::<R>::zeros(v.len());
            for (k, (s, cache)) in [(&sa, &ta), (&sb, &tb)].into_iter().enumerate() {
                let dk = r::<R>(ds[k] * inv);
                // d(v^T M s) = M s dv + v s^T dM + M^T v ds
                dv.scaled_add(dk, &self.sentential_head.dot(s));
                let outer = v.view().insert_axis(Axis(1)).dot(&s.view().insert_axis(Axis(0)));
                g.sentential_head.scaled_add(dk, &outer);
                if let Some(cache) = cache {
                    let dsent = mv.mapv(|x| x * dk);
                    self.text.backward(cache, dsent.view(), &mut g.text);
                }
            }
            let dframes = masked_mean_backward(dv.view(), &e.video.mask);
            self.video.backward(&vc, dframes.view(), &mut g.video);
        }
        Ok(total * inv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub clip_len: usize,
    pub sentence_chars: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 50,
            batch: 32,
            lr: 0.001,
            seed: 0,
            clip_len: 200,
            sentence_chars: 300,
        }
    }
}

impl PretrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "pretrain.epochs",
        "pretrain.batch",
        "pretrain.lr",
        "pretrain.clip_len",
        "pretrain.sentence_chars",
    ];

    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.set_usize("pretrain.epochs", &mut self.epochs)?;
        kv.set_usize("pretrain.batch", &mut self.batch)?;
        kv.set_f64("pretrain.lr", &mut self.lr)?;
        kv.set_usize("pretrain.clip_len", &mut self.clip_len)?;
        kv.set_usize("pretrain.sentence_chars", &mut self.sentence_chars)
    }
}

/// Unlabeled pretraining corpus: videos at their native length plus their
/// sentences.
#[derive(Debug, Clone)]
pub struct PretrainData {
    pub videos: Vec<PoseSequence>,
    pub sentences: Vec<String>,
}

/// Adam over alternating temporal and sentential batches; one epoch is
/// `ceil(n_videos / batch)` steps in total.
pub fn pretrain(
    init: PretrainModel<f32>,
    data: &PretrainData,
    frames: usize,
    cfg: &PretrainConfig,
) -> Result<(PretrainModel<f32>, Vec<LossRecord>)> {
    if data.videos.is_empty() {
        return Err(Error::Validation("no videos to pretrain on".into()));
    }
    if cfg.batch == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config("batch and lr must be positive".into()));
    }
    if cfg.sentence_chars > init.text.max_len() {
        return Err(Error::Config(format!(
            "pretrain.sentence_chars {} exceeds text.max_len {}",
            cfg.sentence_chars,
            init.text.max_len()
        )));
    }
    let mut model = init;
    let mut opt = Adam::new(cfg.lr as f32);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let steps_per_epoch = data.videos.len().div_ceil(cfg.batch);
    let mut log = Vec::new();
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        for _ in 0..steps_per_epoch {
            let mut grad = zeros_like(&model);
            let temporal = step % 2 == 0;
            let loss = if temporal {
                let pairs = (0..cfg.batch)
                    .map(|_| sample_temporal_pair(&data.videos, cfg.clip_len, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                model.temporal_loss(&pairs, Some(&mut grad))?
            } else {
                let examples = (0..cfg.batch)
                    .map(|_| sample_sentential_example(&data.videos, &data.sentences, frames, cfg.sentence_chars, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                model.sentential_loss(&examples, Some(&mut grad))?
            };
            step += 1;
            check_loss(loss, epoch, step)?;
            opt.step(&mut model, &grad);
            if !all_finite(&model) {
                return Err(Error::Diverged { epoch, step, loss: f64::NAN });
            }
            log.push(LossRecord {
                epoch,
                step,
                objective: if temporal { "temporal" } else { "sentential" }.into(),
                loss,
            });
        }
    }
    Ok((model, log))
}

/// Fraction of pairs whose arg-max temporal logit is the label.
pub fn temporal_accuracy<R: Real>(model: &PretrainModel<R>, pairs: &[TemporalPair]) -> Result<f64> {
    let mut correct = 0;
    for p in pairs {
        let logits = model.temporal_logits(p)?;
        let best = (0..3).max_by(|&a, &b| logits[a].total_cmp(&logits[b])).unwrap();
        correct += (best == p.label.index()) as usize;
    }
    Ok(correct as f64 / pairs.len().max(1) as f64)
}
