//! Tokenization and transcript markers shared by the corpus and measurement layers.
//!
//! Tokens come from a Unicode-whitespace split. Each token loses leading and
//! trailing punctuation and is lowercased, except tokens made only of dashes,
//! which are kept verbatim so the transcript's "- -" convention survives.

/// Double-dash spellings accepted at the end of an interrupted utterance.
pub const STRICT_DASH: &str = "- -";
pub const COMPACT_DASH: &str = "--";

fn normalize_quotes(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            '\u{2018}' | '\u{2019}' | '\u{02BC}' => '\'',
            '\u{201C}' | '\u{201D}' => '"',
            '\u{2013}' | '\u{2014}' => '-',
            other => other,
        })
        .collect()
}

fn is_dash_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c == '-')
}

pub fn tokenize(text: &str) -> Vec<String> {
    let normalized = normalize_quotes(text);
    normalized
        .split_whitespace()
        .filter_map(|raw| {
            if is_dash_token(raw) {
                return Some(raw.to_string());
            }
            let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() {
                None
            } else {
                Some(trimmed.to_lowercase())
            }
        })
        .collect()
}

/// True iff `needle` occurs as a contiguous run inside `haystack`.
pub fn contains_sequence(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// True iff `text`, after trimming trailing whitespace, ends with the
/// interruption marker. `strict` restricts the marker to the "- -" spelling.
pub fn ends_with_interruption_marker(text: &str, strict: bool) -> bool {
    let normalized = normalize_quotes(text);
    let trimmed = normalized.trim_end();
    if trimmed.ends_with(STRICT_DASH) {
        return true;
    }
    !strict && trimmed.ends_with(COMPACT_DASH)
}

/// True iff the tokens contain `w, marker..., w` for a word `w`.
pub fn has_repeat_around(tokens: &[String], marker: &[String]) -> bool {
    if marker.is_empty() {
        return false;
    }
    let span = marker.len() + 2;
    if tokens.len() < span {
        return false;
    }
    tokens.windows(span).any(|w| {
        let first = &w[0];
        let last = &w[span - 1];
        !is_dash_token(first) && first == last && &w[1..span - 1] == marker
    })
}
