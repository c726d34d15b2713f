//! Frequency-heuristic alignment of detected spans to English words: the
//! `n` least frequent tokens of the sentence are taken as the spelled words
//! and paired with the spans in temporal order.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::data::{normalize_token, tokenize, AlignedSpan, FrameSpan};
use crate::error::{Error, Result};

/// Corpus counts of normalized words.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn from_counts<I, S>(counts: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: AsRef<str>,
    {
        let mut t = FrequencyTable::default();
        for (w, c) in counts {
            let w = normalize_token(w.as_ref());
            if w.is_empty() {
                continue;
            }
            *t.counts.entry(w).or_insert(0) += c;
            t.total += c;
        }
        t
    }

    /// Unknown words count as 0.
    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn total_tokens(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, &c)| (w.as_str(), c))
    }

    pub fn add_text(&mut self, text: &str) {
        for tok in tokenize(text) {
            *self.counts.entry(tok).or_insert(0) += 1;
            self.total += 1;
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for (w, c) in &self.counts {
            writeln!(f, "{w}\t{c}").map_err(|e| Error::io(path, e))?;
        }
        f.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |m: &str| Error::Parse {
                path: path.display().to_string(),
                line: i as u64 + 1,
                message: m.to_string(),
            };
            let (w, c) = line.split_once('\t').ok_or_else(|| parse_err("expected `word<TAB>count`"))?;
            let c: u64 = c.trim().parse().map_err(|_| parse_err("bad count"))?;
            pairs.push((w.to_string(), c));
        }
        Ok(FrequencyTable::from_counts(pairs))
    }
}

/// Counts normalized whitespace tokens of a plaintext stream.
pub fn build_frequency_table(corpus: impl BufRead) -> Result<FrequencyTable> {
    let mut table = FrequencyTable::default();
    for line in corpus.lines() {
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        table.add_text(&line);
    }
    Ok(table)
}

/// Indices of the `n` least frequent tokens, in sentence order. Ties go to
/// the leftmost occurrence.
pub fn least_frequent_tokens(tokens: &[String], n: usize, table: &FrequencyTable) -> Vec<usize> {
    let mut ranked: Vec<(u64, usize, &str)> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (table.count(t), i, t.as_str()))
        .collect();
    ranked.sort();
    let mut picked: Vec<usize> = ranked.into_iter().take(n).map(|(_, i, _)| i).collect();
    picked.sort_unstable();
    picked
}

pub fn align(spans: &[FrameSpan], sentence: &str, table: &FrequencyTable) -> Result<Vec<AlignedSpan>> {
    let tokens = tokenize(sentence);
    if spans.len() > tokens.len() {
        return Err(Error::TooManySpans {
            spans: spans.len(),
            tokens: tokens.len(),
        });
    }
    let mut ordered = spans.to_vec();
    ordered.sort();
    let words = least_frequent_tokens(&tokens, ordered.len(), table);
    Ok(ordered
        .into_iter()
        .zip(words)
        .map(|(span, word_index)| AlignedSpan { span, word_index })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture() -> FrequencyTable {
        FrequencyTable::from_counts([("the", 1000), ("works", 50), ("acid", 5), ("catalysis", 1)])
    }

    #[test]
    fn counts_corpus() {
        let t = build_frequency_table("a a b".as_bytes()).unwrap();
        assert_eq!(t.count("a"), 2);
        assert_eq!(t.count("b"), 1);
        assert_eq!(t.total_tokens(), 3);
        let t = build_frequency_table("Acid, acid!".as_bytes()).unwrap();
        assert_eq!(t.iter().collect::<Vec<_>>(), vec![("acid", 2)]);
        let t = build_frequency_table("".as_bytes()).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.total_tokens(), 0);
    }

    #[test]
    fn picks_least_frequent() {
        let s = FrameSpan::new(3, 9);
        let out = align(&[s], "the acid catalysis works", &fixture()).unwrap();
        assert_eq!(out, vec![AlignedSpan { span: s, word_index: 2 }]);
    }

    #[test]
    fn two_spans_in_sentence_order() {
        let (a, b) = (FrameSpan::new(0, 4), FrameSpan::new(10, 14));
        let out = align(&[a, b], "the acid catalysis works", &fixture()).unwrap();
        assert_eq!(out[0], AlignedSpan { span: a, word_index: 1 });
        assert_eq!(out[1], AlignedSpan { span: b, word_index: 2 });
    }

    #[test]
    fn unknown_word_wins() {
        let out = align(&[FrameSpan::new(0, 1)], "the acid zymurgy works", &fixture()).unwrap();
        assert_eq!(out[0].word_index, 2);
    }

    #[test]
    fn ties_break_leftmost() {
        let out = align(&[FrameSpan::new(0, 1)], "foo bar", &fixture()).unwrap();
        assert_eq!(out[0].word_index, 0);
        // duplicate tokens are separate candidates
        let out = align(&[FrameSpan::new(0, 1), FrameSpan::new(5, 6)], "acid the acid", &fixture()).unwrap();
        assert_eq!(out.iter().map(|a| a.word_index).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn too_many_spans() {
        let spans = vec![FrameSpan::new(0, 1); 3];
        match align(&spans, "two words", &fixture()) {
            Err(Error::TooManySpans { spans: 3, tokens: 2 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn save_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("freq.tsv");
        fixture().save(&p).unwrap();
        assert_eq!(FrequencyTable::load(&p).unwrap(), fixture());
    }

    proptest! {
        #[test]
        fn output_shape_and_order(
            words in proptest::collection::vec("[a-e]{1,2}", 1..12),
            counts in proptest::collection::vec(0u64..20, 25),
            n_spans in 0usize..12,
        ) {
            let n = n_spans.min(words.len());
            let vocab: Vec<String> = ["a","b","c","d","e"].iter().flat_map(|x| ["", "a","b","c","d","e"].iter().map(move |y| format!("{x}{y}"))).collect();
            let table = FrequencyTable::from_counts(vocab.iter().zip(counts.iter().cycle()).map(|(w, &c)| (w.clone(), c)));
            let spans: Vec<FrameSpan> = (0..n).map(|i| FrameSpan::new(10 * i, 10 * i + 5)).collect();
            let out = align(&spans, &words.join(" "), &table).unwrap();
            prop_assert_eq!(out.len(), n);
            for w in out.windows(2) {
                prop_assert!(w[0].word_index < w[1].word_index);
            }
        }
    }
}
