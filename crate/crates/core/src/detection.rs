//! Frame-level fingerspelling detection: the fused video/text model, the
//! class-balanced loss, supervised training and span decoding.

use ndarray::{concatenate, s, Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::data::{runs, FrameSpan, LabelSequence};
use crate::error::{Error, Result};
use crate::nn::{all_finite, join, r, zeros_like, Adam, Linear, Params, Real};
use crate::preprocess::{pad_or_truncate_text, pad_or_truncate_video, PaddedText, PoseSequence};
use crate::text_encoder::{TextEncoder, TextEncoderConfig};
use crate::train::{check_loss, shuffled_batches, LossRecord};
use crate::video::{TemporalMixing, VideoEncoder, VideoEncoderConfig};

pub const PRETRAINED_EPOCHS: usize = 20;
pub const SCRATCH_EPOCHS: usize = 40;

/// Fixed input lengths: videos are padded or truncated to `frames`,
/// sentences to `chars` code points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub frames: usize,
    pub chars: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub video: VideoEncoderConfig,
    pub text: TextEncoderConfig,
    pub input: InputShape,
}

impl ModelConfig {
    /// Full-size architecture: 6 blocks of width 64, a 12-layer text
    /// encoder, 2000 frames and 600 characters.
    pub fn reference() -> Self {
        ModelConfig {
            video: VideoEncoderConfig::default(),
            text: TextEncoderConfig::default(),
            input: InputShape { frames: 2000, chars: 600 },
        }
    }

    /// Sized for single-core training on the synthetic 300-frame videos.
    pub fn desk() -> Self {
        ModelConfig {
            video: VideoEncoderConfig {
                blocks: 3,
                width: 16,
                kernel: 9,
                mixing: TemporalMixing::Depthwise,
            },
            text: TextEncoderConfig {
                layers: 1,
                heads: 2,
                width: 16,
                ffn_width: 32,
                max_len: 128,
                buckets: 16384,
            },
            input: InputShape { frames: 300, chars: 128 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.video.validate()?;
        self.text.validate()?;
        if self.input.frames == 0 || self.input.chars == 0 {
            return Err(Error::Config("input frames and chars must be positive".into()));
        }
        if self.input.chars > self.text.max_len {
            return Err(Error::Config(format!(
                "input.chars {} exceeds text.max_len {}",
                self.input.chars, self.text.max_len
            )));
        }
        Ok(())
    }

    pub const KEYS: &'static [&'static str] = &[
        "video.blocks",
        "video.width",
        "video.kernel",
        "video.mixing",
        "text.layers",
        "text.heads",
        "text.width",
        "text.ffn_width",
        "text.max_len",
        "text.buckets",
        "input.frames",
        "input.chars",
    ];

    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.set_usize("video.blocks", &mut self.video.blocks)?;
        kv.set_usize("video.width", &mut self.video.width)?;
        kv.set_usize("video.kernel", &mut self.video.kernel)?;
        if let Some(m) = kv.get("video.mixing") {
            self.video.mixing = match m {
                "full" => TemporalMixing::Full,
                "depthwise" => TemporalMixing::Depthwise,
                other => return Err(Error::Config(format!("video.mixing must be full or depthwise, got `{other}`"))),
            };
        }
        kv.set_usize("text.layers", &mut self.text.layers)?;
        kv.set_usize("text.heads", &mut self.text.heads)?;
        kv.set_usize("text.width", &mut self.text.width)?;
        kv.set_usize("text.ffn_width", &mut self.text.ffn_width)?;
        kv.set_usize("text.max_len", &mut self.text.max_len)?;
        kv.set_usize("text.buckets", &mut self.text.buckets)?;
        kv.set_usize("input.frames", &mut self.input.frames)?;
        kv.set_usize("input.chars", &mut self.input.chars)?;
        Ok(())
    }
}

/// Video encoder, text encoder and the per-frame linear head over
/// `[video_t ; pooled_text]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionModel<R> {
    pub video: VideoEncoder<R>,
    pub text: TextEncoder<R>,
    pub fusion: Linear<R>,
    pub input: InputShape,
}

impl<R: Real> Params<R> for DetectionModel<R> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'_, R>)) {
        self.video.visit(&join(prefix, "video"), f);
        self.text.visit(&join(prefix, "text"), f);
        self.fusion.visit(&join(prefix, "fusion"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'_, R>)) {
        self.video.visit_mut(&join(prefix, "video"), f);
        self.text.visit_mut(&join(prefix, "text"), f);
        self.fusion.visit_mut(&join(prefix, "fusion"), f);
    }
}

/// A training example already padded to the model's input shape.
#[derive(Debug, Clone)]
pub struct DetectionSample {
    pub pose: PoseSequence,
    pub text: PaddedText,
    /// Per-frame labels at the padded length; pad frames carry 0 and are
    /// excluded through `pose.mask`.
    pub labels: Vec<u8>,
}

impl DetectionSample {
    pub fn new(pose: &PoseSequence, sentence: &str, labels: &LabelSequence, input: InputShape) -> Result<Self> {
        if labels.len() != pose.n_frames() {
            return Err(Error::Validation(format!(
                "{} labels for a {}-frame video",
                labels.len(),
                pose.n_frames()
            )));
        }
        let mut padded = vec![0u8; input.frames];
        let keep = labels.len().min(input.frames);
        padded[..keep].copy_from_slice(&labels.labels[..keep]);
        Ok(DetectionSample {
            pose: pad_or_truncate_video(pose, input.frames),
            text: pad_or_truncate_text(sentence, input.chars),
            labels: padded,
        })
    }
}

pub struct SampleCache<R> {
    fused: Array2<R>,
    video: crate::video::VideoCache<R>,
    text: Option<crate::text_encoder::TextCache<R>>,
}

impl<R: Real> DetectionModel<R> {
    pub fn new(rng: &mut impl Rng, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let video = VideoEncoder::new(rng, &cfg.video);
        let text = TextEncoder::new(rng, &cfg.text);
        Ok(Self::from_encoders(rng, video, text, cfg.input))
    }

    /// Fresh fusion head on top of existing encoders.
    pub fn from_encoders(rng: &mut impl Rng, video: VideoEncoder<R>, text: TextEncoder<R>, input: InputShape) -> Self {
        let fusion = Linear::new(rng, video.width() + text.width(), 1);
        DetectionModel { video, text, fusion, input }
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            video: self.video.config(),
            text: self.text.config(),
            input: self.input,
        }
    }

    fn fuse(video: &Array2<R>, pooled: &Array1<R>) -> Array2<R> {
        let text = pooled.broadcast((video.nrows(), pooled.len())).unwrap();
        concatenate![Axis(1), video.view(), text]
    }

    /// Per-frame logits for an already padded input.
    pub fn logits(&self, pose: &PoseSequence, text: &PaddedText) -> Result<Array1<R>> {
        let v = self.video.forward(pose)?;
        let t = self.text.encode(text)?.pooled;
        Ok(self.fusion.forward(Self::fuse(&v, &t).view()).column(0).to_owned())
    }

    pub fn forward_train(&self, pose: &PoseSequence, text: &PaddedText) -> Result<(Array1<R>, SampleCache<R>)> {
        let (v, vcache) = self.video.forward_train(pose)?;
        let (t, tcache) = self.text.pooled_train(text)?;
        let fused = Self::fuse(&v, &t);
        let logits = self.fusion.forward(fused.view()).column(0).to_owned();
        Ok((
            logits,
            SampleCache {
                fused,
                video: vcache,
                text: tcache,
            },
        ))
    }

    /// Accumulates `dL/dparams` given `dL/dlogits`.
    pub fn backward(&self, cache: &SampleCache<R>, dlogits: &Array1<R>, grad: &mut Self) {
        let dy = dlogits.view().insert_axis(Axis(1));
        let dx = self.fusion.backward(cache.fused.view(), dy, &mut grad.fusion);
        let c = self.video.width();
        self.video.backward(&cache.video, dx.slice(s![.., ..c]), &mut grad.video);
        if let Some(tc) = &cache.text {
            let dpooled = dx.slice(s![.., c..]).sum_axis(Axis(0));
            self.text.backward(tc, dpooled.view(), &mut grad.text);
        }
    }

    /// Class-balanced loss of a batch, optionally accumulating its gradient.
    pub fn batch_loss(&self, batch: &[&DetectionSample], mut grad: Option<&mut Self>) -> Result<R> {
        let w = ClassWeights::from_labels(
            batch
                .iter()
                .flat_map(|s| s.labels.iter().zip(&s.pose.mask).map(|(&y, &m)| (y, m))),
        )?;
        let norm = 1.0 / w.n_unmasked as f64;
        let mut total = 0.0;
        for s in batch {
            let labels_mask = s.labels.iter().zip(&s.pose.mask);
            match grad.as_deref_mut() {
                Some(g) => {
                    let (logits, cache) = self.forward_train(&s.pose, &s.text)?;
                    let mut dlogits = Array1::<R>::zeros(logits.len());
                    for (i, ((&y, &m), &z)) in labels_mask.zip(&logits).enumerate() {
                        if m {
                            let z = z.to_f64().unwrap();
                            let wi = w.weight(y);
                            total += wi * bce_logit(z, y);
                            dlogits[i] = r(wi * norm * (sigmoid(z) - y as f64));
                        }
                    }
                    self.backward(&cache, &dlogits, g);
                }
                None => {
                    let logits = self.logits(&s.pose, &s.text)?;
                    for ((&y, &m), &z) in labels_mask.zip(&logits) {
                        if m {
                            total += w.weight(y) * bce_logit(z.to_f64().unwrap(), y);
                        }
                    }
                }
            }
        }
        Ok(r(total * norm))
    }
}

/// Per-frame probabilities at the model's padded length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameProbabilities {
    pub probs: Vec<f64>,
    pub mask: Vec<bool>,
}

impl FrameProbabilities {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// All frames valid.
    pub fn unmasked(probs: Vec<f64>) -> Self {
        let mask = vec![true; probs.len()];
        FrameProbabilities { probs, mask }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-y ln s(z) - (1 - y) ln(1 - s(z))` without forming `s(z)`.
fn bce_logit(z: f64, y: u8) -> f64 {
    z.max(0.0) - z * y as f64 + (-z.abs()).exp().ln_1p()
}

pub fn detect_probs<R: Real>(video: &PoseSequence, sentence: &str, model: &DetectionModel<R>) -> Result<FrameProbabilities> {
    let pose = pad_or_truncate_video(video, model.input.frames);
    let text = pad_or_truncate_text(sentence, model.input.chars);
    let logits = model.logits(&pose, &text)?;
    let probs: Vec<f64> = logits.iter().map(|z| sigmoid(z.to_f64().unwrap())).collect();
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numerical("detection head produced non-finite logits".into()));
    }
    Ok(FrameProbabilities { probs, mask: pose.mask })
}

/// Class weights over the unmasked frames of a batch: each class gets
/// `N_u / (2 N_c)`. When one class is absent both weights are 1, so the
/// loss reduces to plain cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    pub pos: f64,
    pub neg: f64,
    pub n_unmasked: usize,
}

impl ClassWeights {
    pub fn from_labels(frames: impl IntoIterator<Item = (u8, bool)>) -> Result<Self> {
        let (mut n0, mut n1) = (0usize, 0usize);
        for (y, m) in frames {
            if m {
                if y != 0 {
                    n1 += 1;
                } else {
                    n0 += 1;
                }
            }
        }
        let nu = n0 + n1;
        if nu == 0 {
            return Err(Error::Validation("no unmasked frames to score".into()));
        }
        let (pos, neg) = if n0 == 0 || n1 == 0 {
            (1.0, 1.0)
        } else {
            (nu as f64 / (2.0 * n1 as f64), nu as f64 / (2.0 * n0 as f64))
        };
        Ok(ClassWeights { pos, neg, n_unmasked: nu })
    }

    pub fn weight(&self, y: u8) -> f64 {
        if y != 0 {
            self.pos
        } else {
            self.neg
        }
    }
}

pub fn weighted_bce(probs: &FrameProbabilities, labels: &LabelSequence) -> Result<f64> {
    if probs.len() != labels.len() || probs.mask.len() != probs.len() {
        return Err(Error::Validation(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let w = ClassWeights::from_labels(labels.labels.iter().copied().zip(probs.mask.iter().copied()))?;
    let mut total = 0.0;
    for ((&p, &y), &m) in probs.probs.iter().zip(&labels.labels).zip(&probs.mask) {
        if m {
            let nll = if y != 0 { -p.ln() } else { -(1.0 - p).ln() };
            total += w.weight(y) * nll;
        }
    }
    Ok(total / w.n_unmasked as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            epochs: SCRATCH_EPOCHS,
            batch: 32,
            lr: 0.001,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub const KEYS: &'static [&'static str] = &["finetune.epochs", "finetune.batch", "finetune.lr"];

    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.set_usize("finetune.epochs", &mut self.epochs)?;
        kv.set_usize("finetune.batch", &mut self.batch)?;
        kv.set_f64("finetune.lr", &mut self.lr)
    }
}

/// Adam on the class-balanced loss. Returns the trained model and one
/// log record per step.
pub fn finetune(
    init: DetectionModel<f32>,
    samples: &[DetectionSample],
    cfg: &FinetuneConfig,
) -> Result<(DetectionModel<f32>, Vec<LossRecord>)> {
    if samples.is_empty() {
        return Err(Error::Validation("no annotated samples to train on".into()));
    }
    if cfg.batch == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config("batch and lr must be positive".into()));
    }
    let mut model = init;
    let mut opt = Adam::new(cfg.lr as f32);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::new();
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        for idx in shuffled_batches(&mut rng, samples.len(), cfg.batch) {
            let batch: Vec<&DetectionSample> = idx.iter().map(|&i| &samples[i]).collect();
            let mut grad = zeros_like(&model);
            let loss = model.batch_loss(&batch, Some(&mut grad))? as f64;
            step += 1;
            check_loss(loss, epoch, step)?;
            opt.step(&mut model, &grad);
            if !all_finite(&model) {
                return Err(Error::Diverged { epoch, step, loss: f64::NAN });
            }
            log.push(LossRecord {
                epoch,
                step,
                objective: "detection".into(),
                loss,
            });
        }
    }
    Ok((model, log))
}

/// Loss of `model` over `samples` in fixed batches, without training.
pub fn evaluate_loss(model: &DetectionModel<f32>, samples: &[DetectionSample], batch: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0;
    for chunk in samples.chunks(batch.max(1)) {
        let refs: Vec<&DetectionSample> = chunk.iter().collect();
        total += model.batch_loss(&refs, None)? as f64;
        n += 1;
    }
    Ok(total / n.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub threshold: f64,
    pub merge_gap: usize,
    pub min_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            threshold: 0.5,
            merge_gap: 2,
            min_len: 3,
        }
    }
}

impl DecodeConfig {
    pub const KEYS: &'static [&'static str] = &["decode.threshold", "decode.merge_gap", "decode.min_len"];

    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.set_f64("decode.threshold", &mut self.threshold)?;
        kv.set_usize("decode.merge_gap", &mut self.merge_gap)?;
        kv.set_usize("decode.min_len", &mut self.min_len)
    }
}

/// Runs of unmasked frames at or above the threshold, with runs separated
/// by at most `merge_gap` frames joined and joined runs shorter than
/// `min_len` dropped.
pub fn extract_spans(probs: &FrameProbabilities, cfg: &DecodeConfig) -> Vec<FrameSpan> {
    let hot = probs
        .probs
        .iter()
        .zip(&probs.mask)
        .map(|(&p, &m)| m && p >= cfg.threshold);
    let mut merged: Vec<FrameSpan> = Vec::new();
    for run in runs(hot) {
        match merged.last_mut() {
            Some(last) if run.start - last.end - 1 <= cfg.merge_gap => last.end = run.end,
            _ => merged.push(run),
        }
    }
    merged.retain(|s| s.len() >= cfg.min_len);
    merged
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSpan {
    pub start: usize,
    pub end: usize,
    /// Mean probability over the span.
    pub score: f64,
}

pub fn score_spans(probs: &FrameProbabilities, spans: &[FrameSpan]) -> Vec<ScoredSpan> {
    spans
        .iter()
        .map(|s| ScoredSpan {
            start: s.start,
            end: s.end,
            score: probs.probs[s.start..=s.end].iter().sum::<f64>() / s.len() as f64,
        })
        .collect()
}
