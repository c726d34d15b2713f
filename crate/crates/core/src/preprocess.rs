//! Landmark selection and fixed-length padding for video and text inputs.
//!
//! Keypoint layout of every [`PoseSequence`]: body landmarks 0..33, left
//! hand 33..54, right hand 54..75, each with (x, y) in extractor image
//! coordinates.

use ndarray::{s, Array3};

use crate::error::{Error, Result};

pub const N_BODY: usize = 33;
pub const N_HAND: usize = 21;
pub const N_KEYPOINTS: usize = N_BODY + 2 * N_HAND;
pub const LEFT_HAND_OFFSET: usize = N_BODY;
pub const RIGHT_HAND_OFFSET: usize = N_BODY + N_HAND;

pub const DEFAULT_VIDEO_FRAMES: usize = 2000;
pub const DEFAULT_TEXT_CHARS: usize = 600;
pub const PAD_CHAR: u32 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    /// `[n_frames, 75, 2]`
    pub frames: Array3<f32>,
    /// `false` marks padding frames.
    pub mask: Vec<bool>,
}

impl PoseSequence {
    /// All frames valid.
    pub fn new(frames: Array3<f32>) -> Self {
        assert_eq!(frames.shape()[1], N_KEYPOINTS);
        assert_eq!(frames.shape()[2], 2);
        let mask = vec![true; frames.shape()[0]];
        PoseSequence { frames, mask }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn n_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("pose sequence has non-finite coordinates".into()));
        }
        Ok(())
    }

    /// Frames `start..start + len`, zero-padded (mask off) past the end.
    pub fn clip(&self, start: usize, len: usize) -> PoseSequence {
        let n = self.n_frames();
        let mut frames = Array3::zeros((len, N_KEYPOINTS, 2));
        let mut mask = vec![false; len];
        let stop = (start + len).min(n);
        if start < stop {
            frames
                .slice_mut(s![..stop - start, .., ..])
                .assign(&self.frames.slice(s![start..stop, .., ..]));
            mask[..stop - start].copy_from_slice(&self.mask[start..stop]);
        }
        PoseSequence { frames, mask }
    }
}

/// One frame of extractor output. Missing groups are `None`; face and z are
/// accepted and discarded.
#[derive(Debug, Clone, Default)]
pub struct RawFrame {
    pub body: Option<Vec<[f32; 3]>>,
    pub left_hand: Option<Vec<[f32; 3]>>,
    pub right_hand: Option<Vec<[f32; 3]>>,
    pub face: Option<Vec<[f32; 3]>>,
}

/// Keeps body and both hands in fixed order and drops z and the face mesh.
/// Undetected groups are zero-filled; the frame stays valid.
pub fn select_keypoints(raw: &[RawFrame]) -> Result<PoseSequence> {
    if raw.is_empty() {
        return Err(Error::Validation("no frames".into()));
    }
    if raw.iter().all(|f| f.body.is_none()) {
        return Err(Error::Validation("body landmarks missing on every frame".into()));
    }
    let mut frames = Array3::zeros((raw.len(), N_KEYPOINTS, 2));
    for (t, f) in raw.iter().enumerate() {
        let groups = [
            (&f.body, 0, N_BODY, "body"),
            (&f.left_hand, LEFT_HAND_OFFSET, N_HAND, "left hand"),
            (&f.right_hand, RIGHT_HAND_OFFSET, N_HAND, "right hand"),
        ];
        for (group, offset, count, name) in groups {
            let Some(points) = group else { continue };
            if points.len() != count {
                return Err(Error::Validation(format!(
                    "frame {t}: {name} has {} landmarks, expected {count}",
                    points.len()
                )));
            }
            for (k, p) in points.iter().enumerate() {
                if !(p[0].is_finite() && p[1].is_finite()) {
                    return Err(Error::Validation(format!("frame {t}: non-finite {name} landmark")));
                }
                frames[[t, offset + k, 0]] = p[0];
                frames[[t, offset + k, 1]] = p[1];
            }
        }
    }
    Ok(PoseSequence::new(frames))
}

/// Exactly `target` frames: keeps the prefix, pads with zero frames whose
/// mask is off.
pub fn pad_or_truncate_video(seq: &PoseSequence, target: usize) -> PoseSequence {
    assert!(target >= 1);
    seq.clip(0, target)
}

/// Code points padded with [`PAD_CHAR`] (or truncated) to a fixed length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedText {
    pub chars: Vec<u32>,
    /// Number of leading non-pad positions.
    pub len: usize,
}

impl PaddedText {
    pub fn target(&self) -> usize {
        self.chars.len()
    }

    pub fn content(&self) -> &[u32] {
        &self.chars[..self.len]
    }

    pub fn is_pad(&self, i: usize) -> bool {
        i >= self.len
    }
}

pub fn pad_or_truncate_text(s: &str, target: usize) -> PaddedText {
    assert!(target >= 1);
    let mut chars: Vec<u32> = s.chars().take(target).map(|c| c as u32).collect();
    let len = chars.len();
    chars.resize(target, PAD_CHAR);
    PaddedText { chars, len }
}
