fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{00AB}' | '\u{00BB}'
                | '\u{2013}' | '\u{2014}' | '\u{2026}' | '\u{00BF}' | '\u{00A1}'
        )
}

/// Lowercases and strips leading/trailing punctuation.
pub fn normalize_token(raw: &str) -> String {
    raw.trim_matches(is_punct).to_lowercase()
}

/// Whitespace tokens of a sentence, normalized, with empty tokens dropped.
/// Word indices throughout the crate refer to positions in this list.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(normalize_token)
        .filter(|t| !t.is_empty())
        .collect()
}
