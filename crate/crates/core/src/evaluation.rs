//! IOU metrics, random baselines, leave-one-article-out evaluation,
//! annotator agreement and dataset statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    annotation_to_span, merge_spans, normalize_token, runs, tokenize, AlignedSpan, FingerspellingAnnotation, Fold,
    FoldPlan, FrameSpan, VideoRecord,
};
use crate::data::{load_manifest, pose_file::load_pose, resolve_pose_path};
use crate::error::{Error, Result};
use crate::preprocess::PoseSequence;

/// Frames covered by both and by either of two span sets.
fn overlap_counts(a: &[FrameSpan], b: &[FrameSpan]) -> (usize, usize) {
    let a = merge_spans(a);
    let b = merge_spans(b);
    let mut inter = 0;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].start.max(b[j].start);
        let hi = a[i].end.min(b[j].end);
        if lo <= hi {
            inter += hi - lo + 1;
        }
        if a[i].end < b[j].end {
            i += 1;
        } else {
            j += 1;
        }
    }
    let size = |s: &[FrameSpan]| s.iter().map(FrameSpan::len).sum::<usize>();
    (inter, size(&a) + size(&b) - inter)
}

fn ratio(inter: usize, union: usize) -> f64 {
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// `|F ∩ F'| / |F ∪ F'|` over covered frames; two empty sets score 1.
pub fn iou_detection(pred: &[FrameSpan], gold: &[FrameSpan]) -> f64 {
    let (i, u) = overlap_counts(pred, gold);
    ratio(i, u)
}

/// IOU over `(frame, word_index)` pairs.
pub fn iou_alignment(pred: &[AlignedSpan], gold: &[AlignedSpan]) -> f64 {
    let group = |xs: &[AlignedSpan]| {
        let mut m: BTreeMap<usize, Vec<FrameSpan>> = BTreeMap::new();
        for a in xs {
            m.entry(a.word_index).or_default().push(a.span);
        }
        m
    };
    let (p, g) = (group(pred), group(gold));
    let words: BTreeSet<usize> = p.keys().chain(g.keys()).copied().collect();
    let (mut inter, mut union) = (0, 0);
    for w in words {
        let (i, u) = overlap_counts(p.get(&w).map_or(&[][..], Vec::as_slice), g.get(&w).map_or(&[][..], Vec::as_slice));
        inter += i;
        union += u;
    }
    ratio(inter, union)
}

/// Each frame independently fingerspelled with probability `p`.
pub fn random_detection_baseline(p: f64, n_frames: usize, rng: &mut impl Rng) -> Vec<FrameSpan> {
    let p = p.clamp(0.0, 1.0);
    runs((0..n_frames).map(|_| rng.random_bool(p)))
}

/// Each token independently marked with probability `p`; marked tokens are
/// paired with `spans` in order and the longer list is truncated.
pub fn random_alignment_baseline(p: f64, sentence: &str, spans: &[FrameSpan], rng: &mut impl Rng) -> Vec<AlignedSpan> {
    let p = p.clamp(0.0, 1.0);
    let marked: Vec<usize> = (0..tokenize(sentence).len()).filter(|_| rng.random_bool(p)).collect();
    let mut ordered = spans.to_vec();
    ordered.sort();
    ordered
        .into_iter()
        .zip(marked)
        .map(|(span, word_index)| AlignedSpan { span, word_index })
        .collect()
}

/// Fraction of unmasked frames covered by `spans`, pooled over videos.
pub fn frame_rate(videos: &[(Vec<FrameSpan>, usize)]) -> f64 {
    let covered: usize = videos.iter().map(|(s, _)| merge_spans(s).iter().map(FrameSpan::len).sum::<usize>()).sum();
    let total: usize = videos.iter().map(|(_, n)| n).sum();
    if total == 0 {
        0.0
    } else {
        covered as f64 / total as f64
    }
}

/// A video with its gold alignment, ready for evaluation.
#[derive(Debug, Clone)]
pub struct LabeledVideo {
    pub record: VideoRecord,
    pub pose: PoseSequence,
    pub gold: Vec<AlignedSpan>,
}

impl LabeledVideo {
    pub fn gold_spans(&self) -> Vec<FrameSpan> {
        self.gold.iter().map(|a| a.span).collect()
    }
}

/// Gold aligned spans of one video. Annotations are taken in temporal
/// order and the k-th annotation of a word is paired with the k-th
/// occurrence of that word in the sentence.
pub fn gold_alignment(record: &VideoRecord, annotations: &[FingerspellingAnnotation]) -> Result<Vec<AlignedSpan>> {
    let tokens = record.tokens();
    let mut anns: Vec<&FingerspellingAnnotation> =
        annotations.iter().filter(|a| a.video_id == record.video_id).collect();
    anns.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    let mut used: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(anns.len());
    for a in anns {
        let span = annotation_to_span(a, record.fps, record.n_frames)?;
        let word = normalize_token(&a.word);
        let seen = used.entry(word.clone()).or_insert(0);
        let word_index = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == word)
            .map(|(i, _)| i)
            .nth(*seen)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "video {}: annotated word `{}` does not occur in its sentence",
                    record.video_id, a.word
                ))
            })?;
        *seen += 1;
        out.push(AlignedSpan { span, word_index });
    }
    Ok(out)
}

/// Annotations of a single annotator: `annotator` when given, otherwise
/// the only one present.
pub fn select_annotator(
    annotations: Vec<FingerspellingAnnotation>,
    annotator: Option<&str>,
) -> Result<Vec<FingerspellingAnnotation>> {
    let ids: BTreeSet<&str> = annotations.iter().map(|a| a.annotator_id.as_str()).collect();
    let chosen = match annotator {
        Some(a) if ids.contains(a) => a.to_string(),
        Some(a) => return Err(Error::Validation(format!("no annotations by annotator `{a}`"))),
        None if ids.len() <= 1 => return Ok(annotations),
        None => {
            return Err(Error::Validation(format!(
                "annotations come from {} annotators; pick one with --annotator",
                ids.len()
            )))
        }
    };
    Ok(annotations.into_iter().filter(|a| a.annotator_id == chosen).collect())
}

/// Manifest videos with poses loaded and gold alignments from
/// single-annotator `annotations`.
pub fn load_labeled_videos(
    manifest_path: impl AsRef<Path>,
    annotations: &[FingerspellingAnnotation],
) -> Result<Vec<LabeledVideo>> {
    let manifest_path = manifest_path.as_ref();
    let records = load_manifest(manifest_path)?;
    let ids: BTreeSet<&str> = records.iter().map(|r| r.video_id.as_str()).collect();
    if let Some(a) = annotations.iter().find(|a| !ids.contains(a.video_id.as_str())) {
        return Err(Error::Validation(format!("annotation for unknown video {}", a.video_id)));
    }
    records
        .into_iter()
        .map(|record| {
            let pose = load_pose(resolve_pose_path(manifest_path, &record))?;
            if pose.n_frames() != record.n_frames {
                return Err(Error::Validation(format!(
                    "video {}: manifest says {} frames, pose file has {}",
                    record.video_id,
                    record.n_frames,
                    pose.n_frames()
                )));
            }
            let gold = gold_alignment(&record, annotations)?;
            Ok(LabeledVideo { record, pose, gold })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub video_id: String,
    pub article_id: String,
    pub detection_iou: f64,
    pub alignment_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub eval_article: String,
    pub train_articles: Vec<String>,
    pub n_samples: usize,
    pub mean_detection_iou: f64,
    pub mean_alignment_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: Vec<SampleResult>,
    pub folds: Vec<FoldReport>,
    pub mean_detection_iou: f64,
    pub mean_alignment_iou: f64,
}

impl EvalReport {
    /// Micro-averaged report over scored samples.
    pub fn from_samples(samples: Vec<SampleResult>, folds: Vec<FoldReport>) -> Self {
        let n = samples.len().max(1) as f64;
        EvalReport {
            mean_detection_iou: samples.iter().map(|s| s.detection_iou).sum::<f64>() / n,
            mean_alignment_iou: samples.iter().map(|s| s.alignment_iou).sum::<f64>() / n,
            samples,
            folds,
        }
    }
}

/// Scores predictions against gold, one entry per video.
pub fn score(videos: &[&LabeledVideo], predictions: &[Vec<AlignedSpan>]) -> Result<Vec<SampleResult>> {
    if videos.len() != predictions.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} videos",
            predictions.len(),
            videos.len()
        )));
    }
    Ok(videos
        .iter()
        .zip(predictions)
        .map(|(v, p)| {
            let pred_spans: Vec<FrameSpan> = p.iter().map(|a| a.span).collect();
            SampleResult {
                video_id: v.record.video_id.clone(),
                article_id: v.record.article_id.clone(),
                detection_iou: iou_detection(&pred_spans, &v.gold_spans()),
                alignment_iou: iou_alignment(p, &v.gold),
            }
        })
        .collect())
}

/// Runs `train_and_predict(fold, train, eval)` for every fold and
/// micro-averages IOU over all evaluated samples. The callback returns one
/// prediction per eval video, in order.
pub fn cross_validate<F>(videos: &[LabeledVideo], folds: &FoldPlan, mut train_and_predict: F) -> Result<EvalReport>
where
    F: FnMut(&Fold, &[&LabeledVideo], &[&LabeledVideo]) -> Result<Vec<Vec<AlignedSpan>>>,
{
    let mut samples = Vec::new();
    let mut reports = Vec::new();
    for fold in &folds.folds {
        let eval: Vec<&LabeledVideo> = videos.iter().filter(|v| v.record.article_id == fold.eval_article).collect();
        if eval.is_empty() {
            return Err(Error::Validation(format!("fold for article {} has no eval samples", fold.eval_article)));
        }
        let train: Vec<&LabeledVideo> = videos
            .iter()
            .filter(|v| fold.train_articles.contains(&v.record.article_id))
            .collect();
        let preds = train_and_predict(fold, &train, &eval)?;
        let scored = score(&eval, &preds)?;
        let part = EvalReport::from_samples(scored.clone(), Vec::new());
        reports.push(FoldReport {
            eval_article: fold.eval_article.clone(),
            train_articles: fold.train_articles.clone(),
            n_samples: scored.len(),
            mean_detection_iou: part.mean_detection_iou,
            mean_alignment_iou: part.mean_alignment_iou,
        });
        samples.extend(scored);
    }
    Ok(EvalReport::from_samples(samples, reports))
}

/// Annotator -> video -> spans, for the videos of a manifest.
pub type AnnotatorSpans = BTreeMap<String, BTreeMap<String, Vec<FrameSpan>>>;

pub fn group_by_annotator(annotations: &[FingerspellingAnnotation], videos: &[VideoRecord]) -> Result<AnnotatorSpans> {
    let by_id: BTreeMap<&str, &VideoRecord> = videos.iter().map(|v| (v.video_id.as_str(), v)).collect();
    let mut out = AnnotatorSpans::new();
    for a in annotations {
        let v = by_id
            .get(a.video_id.as_str())
            .ok_or_else(|| Error::Validation(format!("annotation for unknown video {}", a.video_id)))?;
        let span = annotation_to_span(a, v.fps, v.n_frames)?;
        out.entry(a.annotator_id.clone())
            .or_default()
            .entry(a.video_id.clone())
            .or_default()
            .push(span);
    }
    Ok(out)
}

/// Mean of [`iou_detection`] over every annotator pair and every video in
/// `videos`. A video neither annotator marked scores 1.
pub fn pairwise_agreement(spans: &AnnotatorSpans, videos: &[VideoRecord]) -> Result<f64> {
    let annotators: Vec<&BTreeMap<String, Vec<FrameSpan>>> = spans.values().collect();
    if annotators.len() < 2 {
        return Err(Error::Validation(format!(
            "agreement needs at least 2 annotators, got {}",
            annotators.len()
        )));
    }
    if videos.is_empty() {
        return Err(Error::Validation("agreement needs at least one video".into()));
    }
    let empty = Vec::new();
    let (mut total, mut n) = (0.0, 0usize);
    for i in 0..annotators.len() {
        for j in i + 1..annotators.len() {
            for v in videos {
                let a = annotators[i].get(&v.video_id).unwrap_or(&empty);
                let b = annotators[j].get(&v.video_id).unwrap_or(&empty);
                total += iou_detection(a, b);
                n += 1;
            }
        }
    }
    Ok(total / n as f64)
}

/// Places spans of the given lengths uniformly at random without overlap
/// in `n_frames` frames.
pub fn shuffle_spans(lengths: &[usize], n_frames: usize, rng: &mut impl Rng) -> Result<Vec<FrameSpan>> {
    let total: usize = lengths.iter().sum();
    if total > n_frames {
        return Err(Error::Validation(format!(
            "{total} annotated frames cannot be re-placed in a {n_frames}-frame video"
        )));
    }
    let k = lengths.len();
    let mut order = lengths.to_vec();
    order.shuffle(rng);
    // stars and bars: gap sizes are the distances between k sorted bars
    // drawn from free + k slots
    let free = n_frames - total;
    let mut bars: Vec<usize> = rand::seq::index::sample(rng, free + k, k).into_vec();
    bars.sort_unstable();
    let mut out = Vec::with_capacity(k);
    let mut cursor = 0;
    let mut prev: Option<usize> = None;
    for (len, bar) in order.into_iter().zip(bars) {
        let gap = match prev {
            None => bar,
            Some(p) => bar - p - 1,
        };
        prev = Some(bar);
        cursor += gap;
        if len > 0 {
            out.push(FrameSpan::new(cursor, cursor + len - 1));
        }
        cursor += len;
    }
    Ok(out)
}

/// [`pairwise_agreement`] after re-placing every annotator's spans at
/// random (lengths and count preserved), averaged over `trials`.
pub fn shuffled_agreement_baseline(
    spans: &AnnotatorSpans,
    videos: &[VideoRecord],
    trials: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Validation("at least one shuffle trial is required".into()));
    }
    let mut total = 0.0;
    for _ in 0..trials {
        let mut shuffled = AnnotatorSpans::new();
        for (annotator, per_video) in spans {
            let entry = shuffled.entry(annotator.clone()).or_default();
            for v in videos {
                if let Some(s) = per_video.get(&v.video_id) {
                    let lengths: Vec<usize> = merge_spans(s).iter().map(FrameSpan::len).collect();
                    entry.insert(v.video_id.clone(), shuffle_spans(&lengths, v.n_frames, rng)?);
                }
            }
        }
        total += pairwise_agreement(&shuffled, videos)?;
    }
    Ok(total / trials as f64)
}

/// The built-in English stop list, 179 words.
pub fn default_stopwords() -> BTreeSet<String> {
    include_str!("stopwords.txt").lines().map(str::to_string).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WordMode {
    AllWords,
    NonStopWords,
}

/// `100 * fingerspelled words / words`. In non-stop mode stop words are
/// removed from both counts.
pub fn fingerspelling_percent(
    annotations: &[FingerspellingAnnotation],
    sentences: &BTreeMap<String, String>,
    mode: WordMode,
    stopwords: &BTreeSet<String>,
) -> Result<f64> {
    let keep = |w: &str| mode == WordMode::AllWords || !stopwords.contains(w);
    let mut numerator = 0usize;
    for a in annotations {
        if !sentences.contains_key(&a.video_id) {
            return Err(Error::Validation(format!("no sentence for annotated video {}", a.video_id)));
        }
        if keep(&normalize_token(&a.word)) {
            numerator += 1;
        }
    }
    let denominator: usize = sentences
        .values()
        .map(|s| tokenize(s).iter().filter(|t| keep(t)).count())
        .sum();
    if denominator == 0 {
        return Err(Error::Validation("no words to count".into()));
    }
    Ok(100.0 * numerator as f64 / denominator as f64)
}

pub const CATEGORIES: [&str; 4] = ["STEM", "proper_noun", "loan_word", "other"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub category: String,
    pub count: usize,
    pub percent: f64,
}

pub fn category_tally<S: AsRef<str>>(labeled: &[(S, S)]) -> Result<Vec<CategoryCount>> {
    if labeled.is_empty() {
        return Err(Error::Validation("no labeled words to tally".into()));
    }
    let mut counts = [0usize; CATEGORIES.len()];
    for (word, cat) in labeled {
        let i = CATEGORIES.iter().position(|c| *c == cat.as_ref()).ok_or_else(|| {
            Error::Validation(format!("word `{}` has unknown category `{}`", word.as_ref(), cat.as_ref()))
        })?;
        counts[i] += 1;
    }
    Ok(CATEGORIES
        .iter()
        .zip(counts)
        .map(|(c, n)| CategoryCount {
            category: c.to_string(),
            count: n,
            percent: 100.0 * n as f64 / labeled.len() as f64,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sp(a: usize, b: usize) -> FrameSpan {
        FrameSpan::new(a, b)
    }

    fn al(a: usize, b: usize, w: usize) -> AlignedSpan {
        AlignedSpan { span: sp(a, b), word_index: w }
    }

    #[test]
    fn detection_examples() {
        assert!((iou_detection(&[sp(5, 14)], &[sp(0, 9)]) - 5.0 / 15.0).abs() < 1e-15);
        assert_eq!(iou_detection(&[sp(0, 9)], &[sp(0, 9)]), 1.0);
        assert_eq!(iou_detection(&[sp(0, 4)], &[sp(5, 9)]), 0.0);
        assert_eq!(iou_detection(&[], &[]), 1.0);
        assert_eq!(iou_detection(&[], &[sp(1, 2)]), 0.0);
    }

    #[test]
    fn alignment_examples() {
        assert_eq!(iou_alignment(&[al(0, 9, 3)], &[al(0, 9, 3)]), 1.0);
        assert_eq!(iou_alignment(&[al(0, 9, 4)], &[al(0, 9, 3)]), 0.0);
        assert!((iou_alignment(&[al(5, 14, 3)], &[al(0, 9, 3)]) - 5.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn baselines() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(random_detection_baseline(0.0, 50, &mut rng).is_empty());
        assert_eq!(random_detection_baseline(1.0, 50, &mut rng), vec![sp(0, 49)]);
        let spans = random_detection_baseline(0.2, 10_000, &mut rng);
        let rate = spans.iter().map(FrameSpan::len).sum::<usize>() as f64 / 10_000.0;
        assert!((0.18..=0.22).contains(&rate), "{rate}");

        let s = "the acid catalysis works";
        let spans = [sp(10, 12), sp(0, 3)];
        assert!(random_alignment_baseline(0.0, s, &spans, &mut rng).is_empty());
        assert_eq!(random_alignment_baseline(1.0, s, &spans, &mut rng), vec![al(0, 3, 0), al(10, 12, 1)]);
        let a = random_alignment_baseline(0.5, s, &spans, &mut ChaCha8Rng::seed_from_u64(5));
        let b = random_alignment_baseline(0.5, s, &spans, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    fn rec(id: &str, article: &str, sentence: &str, n: usize) -> VideoRecord {
        VideoRecord {
            video_id: id.into(),
            article_id: article.into(),
            interpreter_id: "i".into(),
            sentence: sentence.into(),
            fps: 10.0,
            n_frames: n,
            pose_path: format!("{id}.fspz"),
        }
    }

    fn ann(video: &str, who: &str, s: f64, e: f64, word: &str) -> FingerspellingAnnotation {
        FingerspellingAnnotation {
            video_id: video.into(),
            annotator_id: who.into(),
            start_s: s,
            end_s: e,
            word: word.into(),
        }
    }

    #[test]
    fn gold_alignment_pairs_repeated_words_in_order() {
        let r = rec("v", "a", "Acid and acid", 100);
        let anns = [ann("v", "x", 5.0, 6.0, "acid"), ann("v", "x", 1.0, 2.0, "Acid")];
        let g = gold_alignment(&r, &anns).unwrap();
        assert_eq!(g, vec![al(10, 19, 0), al(50, 59, 2)]);
        assert!(gold_alignment(&r, &[ann("v", "x", 1.0, 2.0, "base")]).is_err());
    }

    #[test]
    fn cross_validation_structure() {
        let videos: Vec<LabeledVideo> = (0..10)
            .map(|i| LabeledVideo {
                record: rec(&format!("v{i}"), &format!("art{}", i % 5), "the acid", 20),
                pose: PoseSequence::new(ndarray::Array3::zeros((20, 75, 2))),
                gold: vec![al(2, 6, 1)],
            })
            .collect();
        let articles: Vec<&str> = videos.iter().map(|v| v.record.article_id.as_str()).collect();
        let plan = crate::data::make_folds(&articles).unwrap();
        let oracle = cross_validate(&videos, &plan, |fold, train, eval| {
            assert!(train.iter().all(|v| v.record.article_id != fold.eval_article));
            Ok(eval.iter().map(|v| v.gold.clone()).collect())
        })
        .unwrap();
        assert_eq!(oracle.folds.len(), 5);
        assert_eq!(oracle.samples.len(), 10);
        assert_eq!(oracle.mean_detection_iou, 1.0);
        assert_eq!(oracle.mean_alignment_iou, 1.0);
        let empty = cross_validate(&videos, &plan, |_, _, eval| Ok(vec![Vec::new(); eval.len()])).unwrap();
        assert_eq!(empty.mean_detection_iou, 0.0);
    }

    #[test]
    fn agreement() {
        let videos = vec![rec("v1", "a", "x", 100), rec("v2", "a", "y", 100)];
        let same: Vec<FingerspellingAnnotation> = ["p", "q", "r"]
            .iter()
            .flat_map(|w| [ann("v1", w, 1.0, 2.0, "x"), ann("v2", w, 3.0, 4.5, "y")])
            .collect();
        let g = group_by_annotator(&same, &videos).unwrap();
        assert_eq!(pairwise_agreement(&g, &videos).unwrap(), 1.0);

        let disjoint = [ann("v1", "p", 0.0, 1.0, "x"), ann("v1", "q", 5.0, 6.0, "x")];
        let g = group_by_annotator(&disjoint, &videos[..1]).unwrap();
        assert_eq!(pairwise_agreement(&g, &videos[..1]).unwrap(), 0.0);

        // three annotators: pairs (p,q)=1, (p,r)=0.5, (q,r)=0.5
        let three = [
            ann("v1", "p", 0.0, 1.0, "x"),
            ann("v1", "q", 0.0, 1.0, "x"),
            ann("v1", "r", 0.0, 0.5, "x"),
        ];
        let g = group_by_annotator(&three, &videos[..1]).unwrap();
        assert!((pairwise_agreement(&g, &videos[..1]).unwrap() - 2.0 / 3.0).abs() < 1e-12);

        let one = group_by_annotator(&disjoint[..1], &videos).unwrap();
        assert!(pairwise_agreement(&one, &videos).is_err());
    }

    #[test]
    fn full_cover_shuffle_is_fixed() {
        let videos = vec![rec("v", "a", "x", 50)];
        let anns = [ann("v", "p", 0.0, 5.0, "x"), ann("v", "q", 0.0, 5.0, "x")];
        let g = group_by_annotator(&anns, &videos).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(shuffled_agreement_baseline(&g, &videos, 20, &mut rng).unwrap(), 1.0);
        let a = shuffled_agreement_baseline(&g, &videos, 5, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let b = shuffled_agreement_baseline(&g, &videos, 5, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stats_examples() {
        let stop = default_stopwords();
        assert_eq!(stop.len(), 179);
        let sentences: BTreeMap<String, String> = [
            ("v1".to_string(), "the acid and the base of water".to_string()),
            ("v2".to_string(), "a nasa probe on catalysis".to_string()),
        ]
        .into();
        let anns = [
            ann("v1", "x", 0.0, 1.0, "acid"),
            ann("v2", "x", 0.0, 1.0, "nasa"),
            ann("v2", "x", 1.0, 2.0, "catalysis"),
        ];
        assert_eq!(fingerspelling_percent(&anns, &sentences, WordMode::AllWords, &stop).unwrap(), 25.0);
        assert_eq!(fingerspelling_percent(&anns, &sentences, WordMode::NonStopWords, &stop).unwrap(), 50.0);
        let empty = BTreeMap::new();
        assert!(fingerspelling_percent(&[], &empty, WordMode::AllWords, &stop).is_err());
    }

    #[test]
    fn tally() {
        let t = category_tally(&[("a", "STEM"), ("b", "STEM"), ("c", "other")]).unwrap();
        assert_eq!(t[0].count, 2);
        assert!((t[0].percent - 66.666_666).abs() < 1e-3);
        assert!((t.iter().map(|c| c.percent).sum::<f64>() - 100.0).abs() < 0.1);
        assert!(category_tally::<&str>(&[]).is_err());
        assert!(category_tally(&[("a", "chemistry")]).is_err());
    }

    fn brute(a: &[FrameSpan], b: &[FrameSpan]) -> f64 {
        let set = |s: &[FrameSpan]| s.iter().flat_map(|x| x.start..=x.end).collect::<BTreeSet<_>>();
        let (x, y) = (set(a), set(b));
        let u = x.union(&y).count();
        if u == 0 { 1.0 } else { x.intersection(&y).count() as f64 / u as f64 }
    }

    proptest! {
        #[test]
        fn detection_iou_matches_frame_sets(
            a in proptest::collection::vec((0usize..60, 0usize..8), 0..5),
            b in proptest::collection::vec((0usize..60, 0usize..8), 0..5),
        ) {
            let a: Vec<FrameSpan> = a.into_iter().map(|(s, l)| sp(s, s + l)).collect();
            let b: Vec<FrameSpan> = b.into_iter().map(|(s, l)| sp(s, s + l)).collect();
            let v = iou_detection(&a, &b);
            prop_assert_eq!(v, brute(&a, &b));
            prop_assert_eq!(v, iou_detection(&b, &a));
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn word_mismatch_only_lowers_iou(
            a in proptest::collection::vec((0usize..60, 0usize..8, 0usize..3), 1..5),
            shift in 0usize..3,
        ) {
            let pred: Vec<AlignedSpan> = a.iter().map(|&(s, l, w)| al(s, s + l, (w + shift) % 3)).collect();
            let gold: Vec<AlignedSpan> = a.iter().map(|&(s, l, w)| al(s, s + l, w)).collect();
            let spans: Vec<FrameSpan> = a.iter().map(|&(s, l, _)| sp(s, s + l)).collect();
            prop_assert!(iou_alignment(&pred, &gold) <= iou_detection(&spans, &spans));
        }

        #[test]
        fn shuffled_spans_fit_and_keep_lengths(
            lengths in proptest::collection::vec(1usize..20, 0..6),
            extra in 0usize..50,
            seed in 0u64..1000,
        ) {
            let n = lengths.iter().sum::<usize>() + extra;
            prop_assume!(n > 0);
            let out = shuffle_spans(&lengths, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let mut got: Vec<usize> = out.iter().map(FrameSpan::len).collect();
            let mut want = lengths.clone();
            got.sort_unstable();
            want.sort_unstable();
            prop_assert_eq!(got, want);
            for w in out.windows(2) {
                prop_assert!(w[0].end < w[1].start);
            }
            prop_assert!(out.last().map_or(true, |s| s.end < n));
        }
    }
}
