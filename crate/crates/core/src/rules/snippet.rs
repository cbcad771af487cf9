//! Splitting documents into rule-text snippets.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::text::{sentence_spans, tokenize};

/// Default snippet length cap, in tokens.
pub const DEFAULT_MAX_LEN: usize = 120;
/// Default cap on bullets per snippet.
pub const DEFAULT_MAX_BULLETS: usize = 6;

/// Byte range `[start, end)` into a text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn range(self) -> Range<usize> {
        self.start..self.end
    }

    pub fn len(self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(self) -> bool {
        self.start == self.end
    }

    pub fn contains(self, other: Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl From<Range<usize>> for Span {
    fn from(r: Range<usize>) -> Self {
        Span::new(r.start, r.end)
    }
}

/// A rule text with its bulleted items and paragraphs located.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSnippet {
    pub text: String,
    /// Bullet contents, marker excluded.
    pub bullets: Vec<Span>,
    pub paragraphs: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Line {
    Blank,
    Bullet { content: Span, raw: Span },
    Text(Span),
}

/// Length of a bullet marker at the start of `s` (including trailing
/// whitespace), if any.
fn bullet_marker(s: &str) -> Option<usize> {
    let mut chars = s.char_indices();
    let (_, first) = chars.next()?;
    if matches!(first, '*' | '-' | '\u{2022}' | '\u{2013}' | '\u{00b7}' | '+') {
        let rest = &s[first.len_utf8()..];
        if rest.starts_with(char::is_whitespace) {
            return Some(s.len() - rest.trim_start().len());
        }
        return None;
    }
    // "1.", "1)", "a)", "(a)", "(iv)"
    let body = s.strip_prefix('(').unwrap_or(s);
    let label_len = body.find(['.', ')']).filter(|&n| (1..=4).contains(&n))?;
    let label = &body[..label_len];
    let numeric = label.chars().all(|c| c.is_ascii_digit());
    let roman_or_letter = label.chars().all(|c| c.is_ascii_lowercase()) && (label.len() == 1 || label.chars().all(|c| "ivx".contains(c)));
    if !(numeric || roman_or_letter) {
        return None;
    }
    let after = (s.len() - body.len()) + label_len + 1;
    let rest = &s[after..];
    if !rest.starts_with(char::is_whitespace) || rest.trim().is_empty() {
        return None;
    }
    Some(s.len() - rest.trim_start().len())
}

fn classify_lines(text: &str) -> Vec<Line> {
    let mut out = Vec::new();
    let mut offset = 0;
    for raw in text.split('\n') {
        let line_start = offset;
        offset += raw.len() + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            out.push(Line::Blank);
            continue;
        }
        let lead = raw.len() - raw.trim_start().len();
        let start = line_start + lead;
        let end = start + trimmed.len();
        match bullet_marker(trimmed) {
            Some(m) => out.push(Line::Bullet { content: Span::new(start + m, end), raw: Span::new(start, end) }),
            None => out.push(Line::Text(Span::new(start, end))),
        }
    }
    out
}

impl RuleSnippet {
    /// Locates bullets and paragraphs inside an existing rule text.
    pub fn from_text(text: impl Into<String>) -> Self {
        let text = text.into();
        let mut bullets = Vec::new();
        let mut paragraphs = Vec::new();
        let mut current: Option<Span> = None;
        for line in classify_lines(&text) {
            match line {
                Line::Text(s) => {
                    current = Some(match current {
                        Some(p) => Span::new(p.start, s.end),
                        None => s,
                    })
                }
                other => {
                    if let Some(p) = current.take() {
                        paragraphs.push(p);
                    }
                    if let Line::Bullet { content, .. } = other {
                        bullets.push(content);
                    }
                }
            }
        }
        if let Some(p) = current {
            paragraphs.push(p);
        }
        Self { text, bullets, paragraphs }
    }

    pub fn bullet_text(&self, i: usize) -> &str {
        &self.text[self.bullets[i].range()]
    }
}

/// A paragraph (if any) and the bulleted list it introduces (possibly empty).
#[derive(Debug)]
struct Group<'a> {
    intro: Option<&'a str>,
    bullets: Vec<&'a str>,
}

fn groups(document: &str) -> Vec<Group<'_>> {
    let mut out: Vec<Group<'_>> = Vec::new();
    let mut para: Option<Span> = None;
    // Whether the last pushed group is still receiving bullets.
    let mut open_list = false;
    for line in classify_lines(document) {
        match line {
            Line::Text(s) => {
                open_list = false;
                para = Some(match para {
                    Some(p) => Span::new(p.start, s.end),
                    None => s,
                });
            }
            Line::Blank => {
                if let Some(p) = para.take() {
                    out.push(Group { intro: Some(&document[p.range()]), bullets: Vec::new() });
                    open_list = true;
                }
            }
            Line::Bullet { raw, .. } => {
                if let Some(p) = para.take() {
                    out.push(Group { intro: Some(&document[p.range()]), bullets: Vec::new() });
                    open_list = true;
                }
                let bullet = &document[raw.range()];
                match out.last_mut() {
                    Some(g) if open_list => g.bullets.push(bullet),
                    _ => {
                        out.push(Group { intro: None, bullets: vec![bullet] });
                        open_list = true;
                    }
                }
            }
        }
    }
    if let Some(p) = para {
        out.push(Group { intro: Some(&document[p.range()]), bullets: Vec::new() });
    }
    out
}

fn token_len(s: &str) -> usize {
    tokenize(s).len()
}

/// Splits a paragraph at sentence boundaries into pieces of at most
/// `max_len` tokens. A single over-long sentence becomes its own piece.
fn split_paragraph(p: &str, max_len: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Option<(usize, usize, usize)> = None; // start, end, tokens
    for s in sentence_spans(p) {
        let n = token_len(&p[s.clone()]);
        cur = match cur {
            Some((a, _, t)) if t + n <= max_len => Some((a, s.end, t + n)),
            Some((a, b, _)) => {
                out.push(p[a..b].to_string());
                Some((s.start, s.end, n))
            }
            None => Some((s.start, s.end, n)),
        };
    }
    if let Some((a, b, _)) = cur {
        out.push(p[a..b].to_string());
    }
    out
}

/// Converts a document into rule-text snippets. Each bulleted list is kept
/// with its introducing paragraph; groups longer than `max_len` tokens or with
/// more than `max_bullets` bullets are split, repeating the introduction in
/// every piece. Document order is preserved.
pub fn extract_rule_texts(document: &str, max_len: usize, max_bullets: usize) -> Vec<RuleSnippet> {
    let max_len = max_len.max(1);
    let max_bullets = max_bullets.max(1);
    let mut out = Vec::new();
    for g in groups(document) {
        if g.bullets.is_empty() {
            if let Some(intro) = g.intro {
                let pieces = if token_len(intro) > max_len { split_paragraph(intro, max_len) } else { vec![intro.to_string()] };
                out.extend(pieces.into_iter().map(RuleSnippet::from_text));
            }
            continue;
        }
        let intro_len = g.intro.map_or(0, token_len);
        let mut chunk: Vec<&str> = Vec::new();
        let mut chunk_len = intro_len;
        let mut emit = |chunk: &mut Vec<&str>| {
            if chunk.is_empty() {
                return;
            }
            let mut text = String::new();
            if let Some(intro) = g.intro {
                text.push_str(intro);
                text.push('\n');
            }
            text.push_str(&chunk.join("\n"));
            out.push(RuleSnippet::from_text(text));
            chunk.clear();
        };
        for b in &g.bullets {
            let n = token_len(b);
            if !chunk.is_empty() && (chunk.len() >= max_bullets || chunk_len + n > max_len) {
                emit(&mut chunk);
                chunk_len = intro_len;
            }
            chunk.push(b);
            chunk_len += n;
        }
        emit(&mut chunk);
    }
    out
}
