//! Condition segmentation: bullets and inline `if`/`when`/`unless`/`who`
//! clauses, split further on coordination.

use serde::{Deserialize, Serialize};

use super::lexicon::{find_phrase, Lexicon};
use super::snippet::{RuleSnippet, Span};
use crate::text::{sentence_spans, tokenize_spans, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Bullet,
    Inline,
}

/// One condition of a rule, located in the rule text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub text: String,
    pub span: Span,
    pub origin: Origin,
    /// Conditions cut from the same bullet or clause share a group.
    pub group: usize,
    /// Cue that introduced an inline clause (`if`, `unless`, ...); empty for
    /// bullets.
    #[serde(default)]
    pub cue: String,
}

/// Inline cues, matched on tokens. Multi-token cues first.
const INLINE_CUES: &[&[&str]] = &[
    &["as", "long", "as"],
    &["provided", "that"],
    &["providing", "that"],
    &["if"],
    &["unless"],
    &["when"],
    &["who"],
];

/// Tokens that may open a coordinated clause without a preceding comma.
const CLAUSE_STARTERS: &[&str] = &[
    "you", "you're", "you've", "you'll", "you'd", "your", "they", "they're", "their", "he", "she", "it", "it's",
    "we", "i", "i'm", "are", "is", "am", "have", "has", "had", "be", "been", "can", "cannot", "will", "would",
    "do", "does", "did", "were", "was", "must", "need", "should", "could", "may", "not",
];

/// Subject pronouns that, followed by a modal, start the main clause after a
/// sentence-initial condition.
const SUBJECTS: &[&str] = &["you", "they", "we", "he", "she", "it", "i", "your", "their", "the"];
const MODALS: &[&str] = &[
    "may", "can", "can't", "cannot", "will", "won't", "must", "should", "could", "might", "need", "are", "is",
    "qualify", "get", "have", "don't", "do", "does",
];
const MAIN_AFTER_COMMA: &[&str] = &[
    "you", "you'll", "you're", "you've", "your", "we", "they", "it", "he", "she", "this", "these", "there", "then",
    "the", "i",
];

fn strip_edges(text: &str, span: Span) -> Option<Span> {
    let piece = &text[span.range()];
    let is_edge = |c: char| c.is_whitespace() || matches!(c, ',' | ';' | ':' | '.' | '!' | '(' | ')');
    let trimmed_start = piece.trim_start_matches(is_edge);
    let start = span.start + (piece.len() - trimmed_start.len());
    let trimmed = trimmed_start.trim_end_matches(is_edge);
    let end = start + trimmed.len();
    (end > start && trimmed.chars().any(char::is_alphanumeric)).then(|| Span::new(start, end))
}

/// Drops leading cue words and trailing connectives (`..., and`) from a span.
fn strip_connectives(text: &str, span: Span) -> Option<Span> {
    let mut span = strip_edges(text, span)?;
    loop {
        let toks = tokenize_spans(&text[span.range()]);
        let first = toks.first()?;
        let last = toks.last()?;
        if toks.len() > 1 && matches!(last.text.as_str(), "and" | "or") {
            span = strip_edges(text, Span::new(span.start, span.start + last.span.start))?;
        } else if toks.len() > 1 && matches!(first.text.as_str(), "if" | "when" | "unless" | "that" | "and" | "or") {
            span = strip_edges(text, Span::new(span.start + first.span.end, span.end))?;
        } else {
            return Some(span);
        }
    }
}

fn lower(toks: &[Token]) -> Vec<String> {
    toks.iter().map(|t| t.text.clone()).collect()
}

/// Splits a clause at coordination boundaries. Returns spans in `text`
/// coordinates; the caller supplies `span` as the clause location.
pub(crate) fn split_coordination(text: &str, span: Span) -> Vec<Span> {
    let clause = &text[span.range()];
    let toks = tokenize_spans(clause);
    let has = |w: &str| toks.iter().any(|t| t.text == w);
    let conj = if has("and") {
        "and"
    } else if has("or") {
        "or"
    } else {
        return strip_connectives(text, span).into_iter().collect();
    };
    let preceded_by_comma = |t: &Token| clause[..t.span.start].trim_end().ends_with([',', ';']);
    let conj_toks: Vec<&Token> = toks.iter().filter(|t| t.text == conj).collect();
    let oxford = conj_toks.last().is_some_and(|t| preceded_by_comma(t));
    let comma_list = oxford && clause[..conj_toks.last().unwrap().span.start].matches([',', ';']).count() >= 2;

    // Cut points as byte ranges (within the clause) to remove.
    let mut cuts: Vec<(usize, usize)> = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        if t.text != conj {
            continue;
        }
        let next = toks.get(i + 1);
        let allowed = preceded_by_comma(t)
            || next.is_some_and(|n| CLAUSE_STARTERS.contains(&n.text.as_str()))
            || next.zip(toks.first()).is_some_and(|(n, f)| n.text == f.text);
        if allowed {
            cuts.push((t.span.start, t.span.end));
        }
    }
    if comma_list {
        let limit = conj_toks.last().unwrap().span.start;
        for (pos, c) in clause[..limit].char_indices() {
            if c == ',' || c == ';' {
                cuts.push((pos, pos + 1));
            }
        }
    }
    cuts.sort();
    let mut pieces: Vec<Span> = Vec::new();
    let mut cursor = 0;
    for (a, b) in cuts.iter().copied().chain(std::iter::once((clause.len(), clause.len()))) {
        if a < cursor {
            continue;
        }
        if let Some(s) = strip_connectives(text, Span::new(span.start + cursor, span.start + a)) {
            pieces.push(s);
        }
        cursor = b;
    }
    // Fragments shorter than two tokens rejoin their left neighbour.
    let mut merged: Vec<Span> = Vec::new();
    for p in pieces {
        let short = tokenize_spans(&text[p.range()]).len() < 2;
        match merged.last_mut() {
            Some(prev) if short => prev.end = p.end,
            _ => merged.push(p),
        }
    }
    if merged.len() > 1 && tokenize_spans(&text[merged[0].range()]).len() < 2 {
        let first = merged.remove(0);
        merged[0].start = first.start;
    }
    merged
}

/// Cuts a clause before an embedded list cue such as "and one of the
/// following applies".
fn cut_list_cue(clause: &str, lex: &Lexicon) -> usize {
    let toks = tokenize_spans(clause);
    let words = lower(&toks);
    let cue_at = lex
        .and
        .iter()
        .chain(lex.or.iter())
        .filter_map(|p| find_phrase(&words, p))
        .chain(words.iter().position(|w| w == "following"))
        .min();
    let Some(cue_at) = cue_at else { return clause.len() };
    // Back up to the connective or comma that introduces the cue.
    let mut cut = toks[cue_at].span.start;
    for t in toks[..cue_at].iter().rev() {
        if matches!(t.text.as_str(), "and" | "or") {
            cut = t.span.start;
            break;
        }
        if t.span.end <= cut && cue_at - toks.iter().position(|x| x == t).unwrap_or(0) > 4 {
            break;
        }
    }
    cut
}

/// Finds inline condition clauses in one sentence.
fn inline_clauses(text: &str, sentence: Span, lex: &Lexicon) -> Vec<(Span, String)> {
    let s = &text[sentence.range()];
    let toks = tokenize_spans(s);
    let words = lower(&toks);
    let mut cue_hits: Vec<(usize, usize, String)> = Vec::new(); // token idx, cue len, cue
    let mut i = 0;
    while i < words.len() {
        let hit = INLINE_CUES.iter().find(|cue| words[i..].starts_with(&cue.iter().map(|c| c.to_string()).collect::<Vec<_>>()));
        match hit {
            Some(cue) => {
                cue_hits.push((i, cue.len(), cue.join(" ")));
                i += cue.len();
            }
            None => i += 1,
        }
    }
    let mut out = Vec::new();
    for (n, (idx, len, cue)) in cue_hits.iter().enumerate() {
        let body_tok = idx + len;
        if body_tok >= toks.len() {
            continue;
        }
        let start = toks[body_tok].span.start;
        let mut end = cue_hits.get(n + 1).map_or(s.len(), |(j, _, _)| toks[*j].span.start);
        if *idx == 0 {
            // "If X, you can ..." / "If X you may ..."
            for (k, t) in toks.iter().enumerate().skip(body_tok) {
                if t.span.start >= end {
                    break;
                }
                let after_comma = s[..t.span.start].trim_end().ends_with(',');
                if after_comma && MAIN_AFTER_COMMA.contains(&t.text.as_str()) {
                    end = s[..t.span.start].trim_end().len() - 1;
                    break;
                }
                if k > body_tok
                    && SUBJECTS.contains(&t.text.as_str())
                    && toks.get(k + 1).is_some_and(|m| MODALS.contains(&m.text.as_str()))
                    && !matches!(toks[k - 1].text.as_str(), "and" | "or")
                {
                    end = t.span.start;
                    break;
                }
            }
        }
        let clause = &s[start..end];
        let end = start + cut_list_cue(clause, lex);
        if let Some(span) = strip_edges(text, Span::new(sentence.start + start, sentence.start + end)) {
            out.push((span, cue.clone()));
        }
    }
    out
}

/// Extracts conditions in rule-text order. Each bullet yields its own group;
/// inline clauses are split on coordination (`and`, `or`, `, and`, `, or`).
pub fn segment_conditions(snippet: &RuleSnippet) -> Vec<Condition> {
    segment_conditions_with(snippet, Lexicon::builtin())
}

pub fn segment_conditions_with(snippet: &RuleSnippet, lex: &Lexicon) -> Vec<Condition> {
    let text = &snippet.text;
    let mut found: Vec<(Span, Origin, String, Vec<Span>)> = Vec::new();
    for &b in &snippet.bullets {
        if let Some(body) = strip_connectives(text, b) {
            found.push((b, Origin::Bullet, String::new(), split_coordination(text, body)));
        }
    }
    for &p in &snippet.paragraphs {
        let para = &text[p.range()];
        for s in sentence_spans(para) {
            let sentence = Span::new(p.start + s.start, p.start + s.end);
            for (clause, cue) in inline_clauses(text, sentence, lex) {
                found.push((clause, Origin::Inline, cue, split_coordination(text, clause)));
            }
        }
    }
    found.sort_by_key(|(span, ..)| span.start);
    let mut out = Vec::new();
    let mut group = 0;
    for (_, origin, cue, parts) in found {
        if parts.is_empty() {
            continue;
        }
        for part in parts {
            out.push(Condition { text: text[part.range()].to_string(), span: part, origin, group, cue: cue.clone() });
        }
        group += 1;
    }
    out
}
