//! Dataset records, annotations, frame spans and cross-validation folds,
//! together with the on-disk formats they are read from.

mod annotations;
mod manifest;
pub mod pose_file;
mod tokens;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use annotations::{load_annotations, parse_annotations, save_annotations};
pub use manifest::{load_manifest, parse_manifest, resolve_pose_path, save_manifest};
pub use tokens::{normalize_token, tokenize};

/// One interpreted sentence: a pose-keypoint video and its English source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub article_id: String,
    pub interpreter_id: String,
    pub sentence: String,
    pub fps: f64,
    pub n_frames: usize,
    pub pose_path: String,
}

impl VideoRecord {
    pub fn validate(&self) -> Result<()> {
        if self.video_id.is_empty() {
            return Err(Error::Validation("empty video_id".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Validation(format!(
                "video {}: fps must be positive, got {}",
                self.video_id, self.fps
            )));
        }
        if self.n_frames == 0 {
            return Err(Error::Validation(format!(
                "video {}: n_frames must be at least 1",
                self.video_id
            )));
        }
        if self.sentence.trim().is_empty() {
            return Err(Error::Validation(format!(
                "video {}: empty sentence",
                self.video_id
            )));
        }
        Ok(())
    }

    pub fn tokens(&self) -> Vec<String> {
        tokenize(&self.sentence)
    }
}

/// Inclusive interval of frame indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameSpan {
    pub start: usize,
    pub end: usize,
}

impl FrameSpan {
    /// Panics if `start > end`.
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start <= end, "inverted frame span [{start}, {end}]");
        FrameSpan { start, end }
    }

    pub fn try_new(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(Error::Validation(format!(
                "inverted frame span [{start}, {end}]"
            )));
        }
        Ok(FrameSpan { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.start <= frame && frame <= self.end
    }

    pub fn check_range(&self, n_frames: usize) -> Result<()> {
        if self.end >= n_frames {
            return Err(Error::OutOfRange(format!(
                "[{}, {}] in a video of {} frames",
                self.start, self.end, n_frames
            )));
        }
        Ok(())
    }
}

/// A frame span paired with the 0-based index of the English token it spells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlignedSpan {
    pub span: FrameSpan,
    pub word_index: usize,
}

/// Gold fingerspelling occurrence, in seconds, as marked by one annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerspellingAnnotation {
    pub video_id: String,
    pub annotator_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub word: String,
}

impl FingerspellingAnnotation {
    pub fn validate(&self) -> Result<()> {
        if !(self.start_s.is_finite() && self.end_s.is_finite()) {
            return Err(Error::Validation("non-finite annotation time".into()));
        }
        if self.start_s < 0.0 {
            return Err(Error::Validation(format!(
                "annotation start {} is negative",
                self.start_s
            )));
        }
        if self.end_s <= self.start_s {
            return Err(Error::Validation(format!(
                "annotation end {} is not after start {}",
                self.end_s, self.start_s
            )));
        }
        let word = self.word.trim();
        if word.is_empty() {
            return Err(Error::Validation("empty annotation word".into()));
        }
        if word.split_whitespace().count() != 1 {
            return Err(Error::Validation(format!(
                "annotation word `{}` must be a single token",
                self.word
            )));
        }
        Ok(())
    }
}

/// Per-frame binary fingerspelling labels for one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSequence {
    pub labels: Vec<u8>,
}

impl LabelSequence {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Maximal runs of positive frames, sorted.
    pub fn to_spans(&self) -> Vec<FrameSpan> {
        runs(self.labels.iter().map(|&l| l != 0))
    }
}

/// Maximal runs of `true`, as sorted disjoint spans.
pub fn runs(flags: impl IntoIterator<Item = bool>) -> Vec<FrameSpan> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    let mut n = 0;
    for (i, f) in flags.into_iter().enumerate() {
        match (f, open) {
            (true, None) => open = Some(i),
            (false, Some(s)) => {
                out.push(FrameSpan::new(s, i - 1));
                open = None;
            }
            _ => {}
        }
        n = i + 1;
    }
    if let Some(s) = open {
        out.push(FrameSpan::new(s, n - 1));
    }
    out
}

// Times that are an exact frame boundary must not drift across it through
// floating-point error in `t * fps`.
const FRAME_EPS: f64 = 1e-6;

/// Converts an annotation in seconds to an inclusive frame span: the start
/// frame is floored, the end is the last frame that begins before `end_s`,
/// clamped into the video and to be no earlier than the start.
pub fn annotation_to_span(
    ann: &FingerspellingAnnotation,
    fps: f64,
    n_frames: usize,
) -> Result<FrameSpan> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::Validation(format!("fps must be positive, got {fps}")));
    }
    if n_frames == 0 {
        return Err(Error::OutOfRange("video has no frames".into()));
    }
    let start = (ann.start_s * fps + FRAME_EPS).floor().max(0.0);
    if start >= n_frames as f64 {
        return Err(Error::OutOfRange(format!(
            "annotation {}..{}s starts at frame {} but video {} has {} frames",
            ann.start_s, ann.end_s, start, ann.video_id, n_frames
        )));
    }
    let start = start as usize;
    let end = (ann.end_s * fps - FRAME_EPS).ceil() - 1.0;
    let end = if end < start as f64 {
        start
    } else {
        (end as usize).min(n_frames - 1)
    };
    Ok(FrameSpan::new(start, end.max(start)))
}

pub fn spans_to_labels(spans: &[FrameSpan], n_frames: usize) -> Result<LabelSequence> {
    let mut labels = vec![0u8; n_frames];
    for span in spans {
        span.check_range(n_frames)?;
        labels[span.start..=span.end].fill(1);
    }
    Ok(LabelSequence { labels })
}

/// Sorted, disjoint union of possibly overlapping or touching spans.
pub fn merge_spans(spans: &[FrameSpan]) -> Vec<FrameSpan> {
    let mut sorted = spans.to_vec();
    sorted.sort();
    let mut out: Vec<FrameSpan> = Vec::with_capacity(sorted.len());
    for s in sorted {
        match out.last_mut() {
            Some(last) if s.start <= last.end + 1 => last.end = last.end.max(s.end),
            _ => out.push(s),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_articles: Vec<String>,
    pub eval_article: String,
}

/// Leave-one-article-out cross-validation plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// One fold per distinct article, evaluated in first-appearance order.
pub fn make_folds<S: AsRef<str>>(article_ids: &[S]) -> Result<FoldPlan> {
    let mut distinct: Vec<String> = Vec::new();
    for a in article_ids {
        let a = a.as_ref();
        if !distinct.iter().any(|d| d == a) {
            distinct.push(a.to_string());
        }
    }
    if distinct.len() < 2 {
        return Err(Error::Validation(format!(
            "cross-validation needs at least 2 distinct articles, got {}",
            distinct.len()
        )));
    }
    let folds = distinct
        .iter()
        .map(|eval| Fold {
            train_articles: distinct.iter().filter(|a| *a != eval).cloned().collect(),
            eval_article: eval.clone(),
        })
        .collect();
    Ok(FoldPlan { folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ann(start_s: f64, end_s: f64) -> FingerspellingAnnotation {
        FingerspellingAnnotation {
            video_id: "v".into(),
            annotator_id: "a".into(),
            start_s,
            end_s,
            word: "acid".into(),
        }
    }

    #[test]
    fn time_to_frame_rule() {
        assert_eq!(annotation_to_span(&ann(1.0, 2.5), 10.0, 100).unwrap(), FrameSpan::new(10, 24));
        assert_eq!(annotation_to_span(&ann(0.0, 0.1), 10.0, 100).unwrap(), FrameSpan::new(0, 0));
        assert_eq!(annotation_to_span(&ann(9.9, 12.0), 10.0, 100).unwrap(), FrameSpan::new(99, 99));
    }

    #[test]
    fn annotation_past_the_end_is_rejected() {
        let err = annotation_to_span(&ann(10.5, 11.0), 10.0, 100).unwrap_err();
        assert!(matches!(err, Error::OutOfRange(_)));
    }

    #[test]
    fn frame_boundaries_survive_float_rounding() {
        // 29/30 * 30 is not exactly 29 in binary floating point.
        let a = ann(29.0 / 30.0, 41.0 / 30.0);
        assert_eq!(annotation_to_span(&a, 30.0, 300).unwrap(), FrameSpan::new(29, 40));
    }

    #[test]
    fn labels_from_spans() {
        assert_eq!(
            spans_to_labels(&[FrameSpan::new(2, 4)], 6).unwrap().labels,
            vec![0, 0, 1, 1, 1, 0]
        );
        assert_eq!(spans_to_labels(&[], 3).unwrap().labels, vec![0, 0, 0]);
        assert_eq!(
            spans_to_labels(&[FrameSpan::new(0, 1), FrameSpan::new(1, 2)], 4)
                .unwrap()
                .labels,
            vec![1, 1, 1, 0]
        );
        assert!(spans_to_labels(&[FrameSpan::new(2, 6)], 6).is_err());
    }

    #[test]
    fn folds_leave_one_article_out() {
        let plan = make_folds(&["A", "B", "C", "D", "E"]).unwrap();
        assert_eq!(plan.folds.len(), 5);
        assert_eq!(plan.folds[0].eval_article, "A");
        assert_eq!(plan.folds[0].train_articles, vec!["B", "C", "D", "E"]);
        assert_eq!(make_folds(&["A", "B"]).unwrap().folds.len(), 2);
        assert!(make_folds(&["A"]).is_err());
        assert!(make_folds(&["A", "A"]).is_err());
    }

    proptest! {
        #[test]
        fn labels_round_trip_to_merged_spans(
            n in 1usize..=100,
            raw in proptest::collection::vec((0usize..100, 0usize..20), 0..8),
        ) {
            let spans: Vec<FrameSpan> = raw
                .into_iter()
                .filter(|&(s, _)| s < n)
                .map(|(s, l)| FrameSpan::new(s, (s + l).min(n - 1)))
                .collect();
            let labels = spans_to_labels(&spans, n).unwrap();
            prop_assert_eq!(labels.to_spans(), merge_spans(&spans));
        }

        #[test]
        fn end_frame_is_monotone_in_end_time(
            start in 0.0f64..5.0,
            d1 in 0.001f64..5.0,
            extra in 0.0f64..5.0,
            fps in 1.0f64..60.0,
        ) {
            let a = annotation_to_span(&ann(start, start + d1), fps, 1000).unwrap();
            let b = annotation_to_span(&ann(start, start + d1 + extra), fps, 1000).unwrap();
            prop_assert!(b.end >= a.end);
        }
    }
}
