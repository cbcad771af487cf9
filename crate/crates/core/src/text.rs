//! Engine-wide tokenization and text normalization.
//!
//! Tokens are lowercased runs of alphanumeric characters. An apostrophe
//! between two letters stays inside the token, so contractions such as
//! `you're` or `won't` are single tokens. Typographic apostrophes are folded
//! to `'` first.

use std::collections::HashSet;
use std::ops::Range;
use std::sync::OnceLock;

/// A token with the byte range it occupies in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub span: Range<usize>,
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '\u{2018}')
}

/// Tokenizes `text`, keeping byte offsets into the original string.
pub fn tokenize_spans(text: &str) -> Vec<Token> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if !c.is_alphanumeric() {
            i += 1;
            continue;
        }
        let mut buf = String::new();
        let mut end = start;
        while i < chars.len() {
            let (pos, ch) = chars[i];
            if ch.is_alphanumeric() {
                buf.extend(ch.to_lowercase());
                end = pos + ch.len_utf8();
                i += 1;
            } else if is_apostrophe(ch)
                && i + 1 < chars.len()
                && chars[i + 1].1.is_alphabetic()
                && buf.chars().last().is_some_and(|p| p.is_alphabetic())
            {
                buf.push('\'');
                end = pos + ch.len_utf8();
                i += 1;
            } else {
                break;
            }
        }
        tokens.push(Token { text: buf, span: start..end });
    }
    tokens
}

/// Tokenizes `text` into lowercased tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_spans(text).into_iter().map(|t| t.text).collect()
}

/// Collapses runs of whitespace to single spaces and trims.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Canonical form used when comparing follow-up questions: case-folded,
/// whitespace collapsed, trailing `?` and spaces stripped.
pub fn normalize_question(text: &str) -> String {
    let folded = collapse_whitespace(&text.replace(['\u{2019}', '\u{2018}'], "'")).to_lowercase();
    folded.trim_end_matches(|c: char| c == '?' || c.is_whitespace()).to_string()
}

/// Whether two follow-up questions are the same question.
pub fn same_question(a: &str, b: &str) -> bool {
    normalize_question(a) == normalize_question(b)
}

fn stopword_set() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        include_str!("../data/stopwords.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// Whether `token` (already lowercased) is in the built-in stopword list.
pub fn is_stopword(token: &str) -> bool {
    stopword_set().contains(token)
}

/// Light suffix stripping so that `qualifies`/`qualify` and
/// `working`/`work` compare equal in overlap measures.
pub fn stem(token: &str) -> String {
    let t = token.strip_suffix("'s").unwrap_or(token);
    let n = t.chars().count();
    if n > 5 {
        for suffix in ["ing", "ied", "ies", "ed"] {
            if let Some(base) = t.strip_suffix(suffix) {
                return match suffix {
                    "ied" | "ies" => format!("{base}y"),
                    _ => base.to_string(),
                };
            }
        }
    }
    if n > 3 && t.ends_with('s') && !t.ends_with("ss") {
        return t[..t.len() - 1].to_string();
    }
    t.to_string()
}

/// Stemmed content words (stopwords and bare punctuation removed).
pub fn content_words(text: &str) -> HashSet<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .map(|t| stem(&t))
        .collect()
}

/// Jaccard similarity of two sets; 0 when both are empty.
pub fn jaccard<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Splits text into sentences. Line breaks end a sentence, as do `.`, `!`
/// and `?` followed by whitespace. Returned ranges exclude surrounding
/// whitespace and are never empty.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    let push = |s: usize, e: usize, spans: &mut Vec<Range<usize>>| {
        let piece = &text[s..e];
        let lead = piece.len() - piece.trim_start().len();
        let trimmed = piece.trim();
        if !trimmed.is_empty() && trimmed.chars().any(|c| c.is_alphanumeric()) {
            spans.push(s + lead..s + lead + trimmed.len());
        }
    };
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'\n' {
            push(start, i, &mut spans);
            start = i + 1;
        } else if matches!(b, b'.' | b'!' | b'?')
            && (i + 1 == bytes.len() || bytes[i + 1].is_ascii_whitespace())
        {
            push(start, i + 1, &mut spans);
            start = i + 1;
        }
        i += 1;
    }
    push(start, text.len(), &mut spans);
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contractions_stay_whole() {
        assert_eq!(
            tokenize("You're an employee, not a \u{2018}worker\u{2019}."),
            vec!["you're", "an", "employee", "not", "a", "worker"]
        );
        assert_eq!(tokenize("You won\u{2019}t get it"), vec!["you", "won't", "get", "it"]);
    }

    #[test]
    fn spans_index_back_into_source() {
        let text = "Héllo, wörld 52 weeks";
        for tok in tokenize_spans(text) {
            assert_eq!(text[tok.span.clone()].to_lowercase(), tok.text);
        }
    }

    #[test]
    fn question_normalization() {
        assert!(same_question("Are you  working?", "are you working"));
        assert!(!same_question("Are you working?", "Are you not working?"));
    }

    #[test]
    fn stems() {
        assert_eq!(stem("working"), "work");
        assert_eq!(stem("qualifies"), "qualify");
        assert_eq!(stem("credits"), "credit");
        assert_eq!(stem("less"), "less");
    }

    #[test]
    fn sentences_split_on_terminators_and_lines() {
        let text = "First one. Second one?\n* bullet item\nlast";
        let got: Vec<&str> = sentence_spans(text).into_iter().map(|r| &text[r]).collect();
        assert_eq!(got, vec!["First one.", "Second one?", "* bullet item", "last"]);
    }
}
