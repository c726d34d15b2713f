//! Synthetic pose datasets with planted fingerspelling segments.
//!
//! Background signing is slow two-hand sinusoidal motion. A fingerspelling
//! segment freezes both hands in place and adds fast, small articulation to
//! the 21 dominant (right) hand keypoints, on top of a handshape for each
//! letter of the spelled word, held in turn. Every keypoint also carries a
//! monotone drift `drift_amplitude * t / (n - 1)` on both axes, so the
//! temporal order of two clips from one video is recoverable, plus Gaussian
//! noise. Sentences put one rare word per planted segment, in order, among
//! frequent filler words, so the least-frequent-word heuristic is exact
//! under [`fixture_frequency_table`].

use std::f64::consts::TAU;
use std::path::Path;

use ndarray::Array3;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::align::FrequencyTable;
use crate::config::KeyValues;
use crate::data::{
    pose_file, save_annotations, save_manifest, spans_to_labels, tokenize, FingerspellingAnnotation, FrameSpan,
    LabelSequence, VideoRecord,
};
use crate::error::{Error, Result};
use crate::preprocess::{PoseSequence, N_BODY, N_HAND, N_KEYPOINTS, RIGHT_HAND_OFFSET, LEFT_HAND_OFFSET};

pub const MIN_SEGMENT: usize = 5;
pub const MAX_SEGMENT: usize = 60;
/// Smallest background gap between two planted segments.
pub const MIN_GAP: usize = 5;

pub const FREQUENT_WORDS: &[&str] = &[
    "the", "of", "and", "to", "in", "is", "that", "for", "it", "as", "with", "was", "on", "be", "by",
    "this", "are", "from", "at", "or", "an", "which", "have", "not", "one", "but", "all", "were", "can",
    "more", "has", "their", "also", "other", "its", "into", "when", "some", "time", "these", "used",
    "first", "two", "may", "such", "many", "then", "them", "only", "new", "most", "would", "made",
    "like", "over", "water", "form", "called", "each", "part", "large", "light", "small", "cells",
    "energy", "change", "example", "number", "system", "make",
];

pub const RARE_WORDS: &[&str] = &[
    "catalysis", "electromagnetism", "isotope", "mitochondria", "eigenvalue", "fourier", "nasa",
    "photosynthesis", "ribosome", "enzyme", "quasar", "neutrino", "polymer", "allele", "genome",
    "plasma", "entropy", "oxidation", "tectonics", "algorithm", "integral", "vector", "quantum",
    "molecule", "cytoplasm", "osmosis", "hydrogen", "helium", "nucleotide", "chlorophyll",
    "covalent", "isomer", "kinetic", "lipid", "meiosis", "mitosis", "nebula", "orbital", "photon",
    "proton", "titration", "valence", "vaccine", "xylem", "zygote", "acid", "baryon", "calculus",
];

/// Frequencies used by every synthetic dataset: filler words are common,
/// planted words are all strictly rarer than any filler word.
pub fn fixture_frequency_table() -> FrequencyTable {
    let frequent = FREQUENT_WORDS
        .iter()
        .enumerate()
        .map(|(i, w)| (w.to_string(), 1000 + 37 * i as u64));
    let rare = RARE_WORDS
        .iter()
        .enumerate()
        .map(|(i, w)| (w.to_string(), 1 + (i as u64 * 7) % 40));
    FrequencyTable::from_counts(frequent.chain(rare))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_videos: usize,
    pub frames_per_video: usize,
    pub fps: f64,
    pub fingerspell_rate: f64,
    pub drift_amplitude: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub n_articles: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_videos: 200,
            frames_per_video: 300,
            fps: 30.0,
            fingerspell_rate: 0.3,
            drift_amplitude: 0.2,
            noise_sigma: 0.002,
            seed: 7,
            n_articles: 5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_videos == 0 {
            return bad("n_videos must be positive".into());
        }
        if self.frames_per_video < 50 {
            return bad(format!("frames_per_video must be at least 50, got {}", self.frames_per_video));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if !(self.fingerspell_rate > 0.0 && self.fingerspell_rate < 1.0) {
            return bad(format!("fingerspell_rate must lie in (0, 1), got {}", self.fingerspell_rate));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        if !self.drift_amplitude.is_finite() {
            return bad("drift_amplitude must be finite".into());
        }
        if self.n_articles == 0 {
            return bad("n_articles must be positive".into());
        }
        if self.planted_frames() < MIN_SEGMENT {
            return bad(format!(
                "fingerspell_rate {} plants {} frames per video, below the minimum segment of {MIN_SEGMENT}",
                self.fingerspell_rate,
                self.planted_frames()
            ));
        }
        if self.frames_per_video - self.planted_frames() < MIN_GAP {
            return bad(format!(
                "fingerspell_rate {} leaves fewer than {MIN_GAP} background frames",
                self.fingerspell_rate
            ));
        }
        Ok(())
    }

    pub fn planted_frames(&self) -> usize {
        (self.fingerspell_rate * self.frames_per_video as f64).round() as usize
    }

    pub const KEYS: &'static [&'static str] = &[
        "synth.n_videos",
        "synth.frames_per_video",
        "synth.fps",
        "synth.fingerspell_rate",
        "synth.drift_amplitude",
        "synth.noise_sigma",
        "synth.seed",
        "synth.n_articles",
    ];

    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.set_usize("synth.n_videos", &mut self.n_videos)?;
        kv.set_usize("synth.frames_per_video", &mut self.frames_per_video)?;
        kv.set_f64("synth.fps", &mut self.fps)?;
        kv.set_f64("synth.fingerspell_rate", &mut self.fingerspell_rate)?;
        kv.set_f64("synth.drift_amplitude", &mut self.drift_amplitude)?;
        kv.set_f64("synth.noise_sigma", &mut self.noise_sigma)?;
        kv.set_u64("synth.seed", &mut self.seed)?;
        kv.set_usize("synth.n_articles", &mut self.n_articles)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthVideo {
    pub record: VideoRecord,
    pub pose: PoseSequence,
    pub annotations: Vec<FingerspellingAnnotation>,
    /// Planted segments in temporal order, one per rare word.
    pub spans: Vec<FrameSpan>,
    pub words: Vec<String>,
    /// Generator's own per-frame fingerspelling mask.
    pub mask: LabelSequence,
    /// Per-frame drift offset added to every coordinate.
    pub drift: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub videos: Vec<SynthVideo>,
    pub table: FrequencyTable,
}

impl SynthDataset {
    pub fn records(&self) -> Vec<VideoRecord> {
        self.videos.iter().map(|v| v.record.clone()).collect()
    }

    pub fn annotations(&self) -> Vec<FingerspellingAnnotation> {
        self.videos.iter().flat_map(|v| v.annotations.iter().cloned()).collect()
    }

    pub fn sentences(&self) -> Vec<String> {
        self.videos.iter().map(|v| v.record.sentence.clone()).collect()
    }

    /// Writes `manifest.tsv`, `annotations.csv`, `freq.tsv`, `lexicon.csv`
    /// and `poses/<video_id>.fspz` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let poses = dir.join("poses");
        std::fs::create_dir_all(&poses).map_err(|e| Error::io(&poses, e))?;
        for v in &self.videos {
            pose_file::save_pose(dir.join(&v.record.pose_path), &v.pose)?;
        }
        save_manifest(dir.join("manifest.tsv"), &self.records())?;
        save_annotations(dir.join("annotations.csv"), &self.annotations())?;
        self.table.save(dir.join("freq.tsv"))?;
        write_fixture_lexicon(dir.join("lexicon.csv"))
    }
}

/// Lexicon rows for every fourth-excluded rare word; the excluded ones
/// exercise the "no known sign" path.
pub fn fixture_lexicon_rows() -> Vec<[String; 4]> {
    RARE_WORDS
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 4 != 3)
        .flat_map(|(i, w)| {
            let n = 1 + i % 2;
            (0..n).map(move |k| {
                [
                    w.to_string(),
                    format!("{}-{}", w.to_uppercase(), k + 1),
                    format!("https://lexicon.example/{w}/{}", k + 1),
                    "STEM".to_string(),
                ]
            })
        })
        .collect()
}

fn write_fixture_lexicon(path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(["word", "gloss", "uri", "domain"]).map_err(io)?;
    for row in fixture_lexicon_rows() {
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Segment lengths summing to `total`, each within `[MIN_SEGMENT, MAX_SEGMENT]`.
fn segment_lengths(rng: &mut impl Rng, total: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut remaining = total;
    while remaining > 0 {
        let mut len = rng.random_range(MIN_SEGMENT..=MAX_SEGMENT);
        if len >= remaining || remaining < 2 * MIN_SEGMENT {
            len = remaining;
        } else if remaining - len < MIN_SEGMENT {
            len = remaining - MIN_SEGMENT;
        }
        // a final remainder above MAX_SEGMENT is split again on the next pass
        if len > MAX_SEGMENT {
            len = MAX_SEGMENT.min(remaining - MIN_SEGMENT);
        }
        out.push(len);
        remaining -= len;
    }
    out
}

/// Start frames for segments of the given lengths with uniform random
/// background gaps (interior gaps at least [`MIN_GAP`]).
fn place_segments(rng: &mut impl Rng, lengths: &[usize], n_frames: usize) -> Option<Vec<FrameSpan>> {
    let k = lengths.len();
    let planted: usize = lengths.iter().sum();
    let background = n_frames.checked_sub(planted)?;
    let slack = background.checked_sub(MIN_GAP * k.saturating_sub(1))?;
    // stars and bars: k bars among slack + k slots
    let mut bars: Vec<usize> = rand::seq::index::sample(rng, slack + k, k).into_vec();
    bars.sort_unstable();
    let mut gaps = Vec::with_capacity(k + 1);
    let mut prev = 0;
    for (i, &b) in bars.iter().enumerate() {
        gaps.push(b - prev - if i == 0 { 0 } else { 1 });
        prev = b;
    }
    let mut spans = Vec::with_capacity(k);
    let mut cursor = 0;
    for (i, &len) in lengths.iter().enumerate() {
        cursor += gaps[i] + if i > 0 { MIN_GAP } else { 0 };
        spans.push(FrameSpan::new(cursor, cursor + len - 1));
        cursor += len;
    }
    debug_assert!(cursor <= n_frames);
    Some(spans)
}

struct Skeleton {
    rest: Vec<[f64; 2]>,
    /// Per-letter handshape: a fixed offset for each dominant-hand joint.
    letters: Vec<Vec<[f64; 2]>>,
}

impl Skeleton {
    fn new() -> Self {
        let mut rest = vec![[0.0; 2]; N_KEYPOINTS];
        // face
        let face = [
            (0.50, 0.22), (0.48, 0.20), (0.47, 0.20), (0.46, 0.20), (0.52, 0.20), (0.53, 0.20),
            (0.54, 0.20), (0.44, 0.21), (0.56, 0.21), (0.49, 0.25), (0.51, 0.25),
        ];
        for (i, &(x, y)) in face.iter().enumerate() {
            rest[i] = [x, y];
        }
        let body = [
            (11, 0.40, 0.38), (12, 0.60, 0.38), (13, 0.36, 0.52), (14, 0.64, 0.52), (15, 0.40, 0.62),
            (16, 0.60, 0.62), (17, 0.41, 0.66), (18, 0.59, 0.66), (19, 0.42, 0.65), (20, 0.58, 0.65),
            (21, 0.41, 0.63), (22, 0.59, 0.63), (23, 0.44, 0.78), (24, 0.56, 0.78), (25, 0.44, 0.92),
            (26, 0.56, 0.92), (27, 0.44, 1.05), (28, 0.56, 1.05), (29, 0.43, 1.08), (30, 0.57, 1.08),
            (31, 0.45, 1.10), (32, 0.55, 1.10),
        ];
        for &(i, x, y) in &body {
            rest[i] = [x, y];
        }
        for (offset, wrist, side) in [(LEFT_HAND_OFFSET, 15, -1.0), (RIGHT_HAND_OFFSET, 16, 1.0)] {
            let w = rest[wrist];
            rest[offset] = w;
            for j in 1..N_HAND {
                let finger = (j - 1) / 4;
                let joint = ((j - 1) % 4 + 1) as f64;
                let angle = -1.2 + 0.45 * finger as f64;
                rest[offset + j] = [
                    w[0] + side * 0.012 * joint * angle.sin().abs().max(0.3) * (1.0 + 0.1 * finger as f64),
                    w[1] + 0.012 * joint * angle.cos(),
                ];
            }
        }
        let letters = (0..26u64)
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(0x6c65_7474_6572 ^ c);
                (0..N_HAND)
                    .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                    .collect()
            })
            .collect();
        Skeleton { rest, letters }
    }

    fn handshape(&self, c: char) -> Option<&[[f64; 2]]> {
        let c = c.to_ascii_lowercase();
        c.is_ascii_lowercase()
            .then(|| self.letters[(c as u8 - b'a') as usize].as_slice())
    }
}

/// Keypoints moved by a hand: the hand itself plus the body wrist and
/// finger landmarks on that side.
fn hand_members(left: bool) -> Vec<usize> {
    let (offset, body) = if left {
        (LEFT_HAND_OFFSET, [15, 17, 19, 21])
    } else {
        (RIGHT_HAND_OFFSET, [16, 18, 20, 22])
    };
    body.into_iter().chain(offset..offset + N_HAND).collect()
}

struct WordPlan {
    sentence: String,
    words: Vec<String>,
}

fn plan_sentence(rng: &mut impl Rng, k: usize) -> WordPlan {
    let words: Vec<String> = rand::seq::index::sample(rng, RARE_WORDS.len(), k)
        .into_iter()
        .map(|i| RARE_WORDS[i].to_string())
        .collect();
    let n_filler = rng.random_range(4..=12);
    let mut tokens: Vec<String> = (0..n_filler)
        .map(|_| FREQUENT_WORDS.choose(rng).unwrap().to_string())
        .collect();
    let mut slots: Vec<usize> = (0..k).map(|_| rng.random_range(0..=n_filler)).collect();
    slots.sort_unstable();
    for (i, (slot, w)) in slots.iter().zip(&words).enumerate() {
        tokens.insert(slot + i, w.clone());
    }
    let mut sentence = tokens.join(" ");
    if let Some(first) = sentence.get(0..1) {
        sentence.replace_range(0..1, &first.to_uppercase());
    }
    sentence.push('.');
    WordPlan { sentence, words }
}

fn generate_video(cfg: &SynthConfig, index: usize, skeleton: &Skeleton, table: &FrequencyTable) -> Result<SynthVideo> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(index as u64));
    let n = cfg.frames_per_video;
    let mut spans = None;
    for _ in 0..64 {
        let lengths = segment_lengths(&mut rng, cfg.planted_frames());
        if let Some(s) = place_segments(&mut rng, &lengths, n) {
            spans = Some(s);
            break;
        }
    }
    let spans = spans.ok_or_else(|| {
        Error::Config(format!(
            "cannot fit fingerspelling at rate {} into {} frames with gaps of {MIN_GAP}",
            cfg.fingerspell_rate, n
        ))
    })?;
    let mask = spans_to_labels(&spans, n)?;
    let plan = plan_sentence(&mut rng, spans.len());

    let tokens = tokenize(&plan.sentence);
    let max_planted = plan.words.iter().map(|w| table.count(w)).max().unwrap_or(0);
    let min_filler = tokens
        .iter()
        .filter(|t| !plan.words.contains(t))
        .map(|t| table.count(t))
        .min()
        .unwrap_or(u64::MAX);
    assert!(max_planted < min_filler, "planted words must be strictly rarer than filler");

    // slow background motion per hand, driven by a clock that pauses during
    // fingerspelling so hand positions stay continuous across boundaries
    let bg: Vec<[f64; 4]> = (0..2)
        .map(|_| {
            [
                rng.random_range(40.0..90.0),
                rng.random_range(40.0..90.0),
                rng.random_range(0.0..TAU),
                rng.random_range(0.0..TAU),
            ]
        })
        .collect();
    let bg_amp = 0.05;
    let fs_amp = 0.012;
    let shape_amp = 1.5;
    let seg_periods: Vec<f64> = spans.iter().map(|_| rng.random_range(2.5..4.0)).collect();
    let phases: Vec<[f64; 2]> = (0..N_HAND)
        .map(|_| [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)])
        .collect();
    let members = [hand_members(true), hand_members(false)];
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;

    let drift: Vec<f64> = (0..n)
        .map(|t| cfg.drift_amplitude * t as f64 / (n - 1) as f64)
        .collect();
    let mut frames = Array3::<f32>::zeros((n, N_KEYPOINTS, 2));
    let mut clock = 0.0;
    let mut seg = 0;
    for t in 0..n {
        while seg < spans.len() && spans[seg].end < t {
            seg += 1;
        }
        let spelling = seg < spans.len() && spans[seg].contains(t);
        let mut pos = skeleton.rest.clone();
        for (h, idx) in members.iter().enumerate() {
            let [p1, p2, f1, f2] = bg[h];
            let dx = bg_amp * (TAU * clock / p1 + f1).sin();
            let dy = 0.6 * bg_amp * (TAU * clock / p2 + f2).sin();
            for &k in idx {
                pos[k][0] += dx;
                pos[k][1] += dy;
            }
            // elbow follows at half amplitude
            let elbow = if h == 0 { 13 } else { 14 };
            pos[elbow][0] += 0.5 * dx;
            pos[elbow][1] += 0.5 * dy;
        }
        if spelling {
            let period = seg_periods[seg];
            // the word's letters are held in turn across the segment
            let letters: Vec<char> = plan.words[seg].chars().collect();
            let span = spans[seg];
            let li = (t - span.start) * letters.len() / span.len();
            let shape = skeleton.handshape(letters[li]);
            for j in 1..N_HAND {
                let reach = 0.4 + 0.6 * (((j - 1) % 4) as f64 + 1.0) / 4.0;
                let [a, b] = phases[j];
                let [sx, sy] = shape.map_or([0.0; 2], |s| s[j]);
                pos[RIGHT_HAND_OFFSET + j][0] +=
                    fs_amp * reach * ((TAU * t as f64 / period + a).sin() + shape_amp * sx);
                pos[RIGHT_HAND_OFFSET + j][1] +=
                    fs_amp * reach * ((TAU * t as f64 / period + b).cos() + shape_amp * sy);
            }
        } else {
            clock += 1.0;
        }
        for (k, p) in pos.iter().enumerate() {
            for c in 0..2 {
                let jitter = if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                frames[[t, k, c]] = (p[c] + drift[t] + jitter) as f32;
            }
        }
    }
    debug_assert!(N_BODY + 2 * N_HAND == N_KEYPOINTS);

    let video_id = format!("vid{index:04}");
    let annotations = spans
        .iter()
        .zip(&plan.words)
        .map(|(s, w)| FingerspellingAnnotation {
            video_id: video_id.clone(),
            annotator_id: "gold".into(),
            start_s: s.start as f64 / cfg.fps,
            end_s: (s.end + 1) as f64 / cfg.fps,
            word: w.clone(),
        })
        .collect();
    let record = VideoRecord {
        pose_path: format!("poses/{video_id}.fspz"),
        video_id,
        article_id: format!("article{}", index % cfg.n_articles),
        interpreter_id: format!("interp{}", index % 3),
        sentence: plan.sentence,
        fps: cfg.fps,
        n_frames: n,
    };
    Ok(SynthVideo {
        record,
        pose: PoseSequence::new(frames),
        annotations,
        spans,
        words: plan.words,
        mask,
        drift,
    })
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let skeleton = Skeleton::new();
    let table = fixture_frequency_table();
    let videos = (0..cfg.n_videos)
        .map(|i| generate_video(cfg, i, &skeleton, &table))
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthDataset {
        config: *cfg,
        videos,
        table,
    })
}
