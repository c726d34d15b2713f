//! Detect, align and look up candidate signs for each fingerspelled word.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::align::{align, FrequencyTable};
use crate::data::{normalize_token, tokenize, AlignedSpan, FrameSpan};
use crate::detection::{detect_probs, extract_spans, score_spans, DecodeConfig, DetectionModel, ScoredSpan};
use crate::error::{Error, Result};
use crate::nn::Real;
use crate::preprocess::PoseSequence;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LexiconEntry {
    pub gloss: String,
    pub uri: String,
    pub domain: Option<String>,
}

/// Normalized English word to candidate signs, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<LexiconEntry>>,
}

impl Lexicon {
    pub fn lookup(&self, word: &str) -> &[LexiconEntry] {
        self.entries.get(&normalize_token(word)).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

const LEXICON_HEADER: [&str; 4] = ["word", "gloss", "uri", "domain"];

pub fn parse_lexicon(reader: impl std::io::Read, source: &str) -> Result<Lexicon> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut lexicon = Lexicon::default();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(i as u64 + 1, |p| p.line());
        if i == 0 {
            let header: Vec<&str> = row.iter().map(str::trim).collect();
            if header != LEXICON_HEADER {
                return Err(parse_err(line, format!("expected header `{}`", LEXICON_HEADER.join(","))));
            }
            continue;
        }
        if row.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", row.len())));
        }
        let word = normalize_token(row[0].trim());
        if word.is_empty() {
            return Err(parse_err(line, "empty word".into()));
        }
        let gloss = row[1].trim();
        if gloss.is_empty() {
            return Err(parse_err(line, format!("empty gloss for `{word}`")));
        }
        let domain = Some(row[3].trim()).filter(|d| !d.is_empty()).map(str::to_string);
        lexicon.entries.entry(word).or_default().push(LexiconEntry {
            gloss: gloss.to_string(),
            uri: row[2].trim().to_string(),
            domain,
        });
    }
    Ok(lexicon)
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(f, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestion {
    pub span: FrameSpan,
    pub word: String,
    pub candidates: Vec<LexiconEntry>,
}

/// Detected spans with their scores, in frame order.
pub fn detect_spans<R: Real>(
    video: &PoseSequence,
    sentence: &str,
    model: &DetectionModel<R>,
    decode: &DecodeConfig,
) -> Result<Vec<ScoredSpan>> {
    let probs = detect_probs(video, sentence, model)?;
    let spans = extract_spans(&probs, decode);
    Ok(score_spans(&probs, &spans))
}

/// The `m` highest scoring spans, back in frame order. Used when a detector
/// finds more spans than the sentence has tokens.
pub fn keep_top(spans: &[ScoredSpan], m: usize) -> Vec<FrameSpan> {
    let mut ranked: Vec<&ScoredSpan> = spans.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.start.cmp(&b.start)));
    let mut out: Vec<FrameSpan> = ranked.into_iter().take(m).map(|s| FrameSpan::new(s.start, s.end)).collect();
    out.sort();
    out
}

/// Detection followed by alignment, trimming surplus spans to the token
/// count instead of failing.
pub fn detect_and_align<R: Real>(
    video: &PoseSequence,
    sentence: &str,
    model: &DetectionModel<R>,
    table: &FrequencyTable,
    decode: &DecodeConfig,
) -> Result<Vec<AlignedSpan>> {
    let scored = detect_spans(video, sentence, model, decode)?;
    let spans = keep_top(&scored, tokenize(sentence).len());
    align(&spans, sentence, table)
}

pub fn suggest<R: Real>(
    video: &PoseSequence,
    sentence: &str,
    model: &DetectionModel<R>,
    table: &FrequencyTable,
    lexicon: &Lexicon,
    decode: &DecodeConfig,
) -> Result<Vec<Suggestion>> {
    let spans: Vec<FrameSpan> = detect_spans(video, sentence, model, decode)?
        .iter()
        .map(|s| FrameSpan::new(s.start, s.end))
        .collect();
    suggest_for_spans(&spans, sentence, table, lexicon)
}

/// Alignment and lookup for already detected spans.
pub fn suggest_for_spans(
    spans: &[FrameSpan],
    sentence: &str,
    table: &FrequencyTable,
    lexicon: &Lexicon,
) -> Result<Vec<Suggestion>> {
    let tokens = tokenize(sentence);
    Ok(align(spans, sentence, table)?
        .into_iter()
        .map(|a| {
            let word = tokens[a.word_index].clone();
            Suggestion {
                span: a.span,
                candidates: lexicon.lookup(&word).to_vec(),
                word,
            }
        })
        .collect())
}
