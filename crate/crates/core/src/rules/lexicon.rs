use std::path::Path;
use std::sync::OnceLock;

use thiserror::Error;

use crate::text::tokenize;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("reading lexicon: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: cue outside of a section")]
    NoSection { line: usize },
    #[error("line {line}: unknown section {name:?}")]
    UnknownSection { line: usize, name: String },
}

/// Cue phrases for conjunction, disjunction and outcome negation.
///
/// File format: plain text, one cue per line, grouped under `[AND]`, `[OR]`
/// and `[NEG]` headers. `#` starts a comment line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub and: Vec<Vec<String>>,
    pub or: Vec<Vec<String>>,
    pub neg: Vec<Vec<String>>,
}

impl Lexicon {
    pub fn parse(source: &str) -> Result<Self, LexiconError> {
        let mut lex = Lexicon { and: Vec::new(), or: Vec::new(), neg: Vec::new() };
        let mut section: Option<usize> = None;
        for (i, raw) in source.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(match name.trim().to_ascii_uppercase().as_str() {
                    "AND" => 0,
                    "OR" => 1,
                    "NEG" => 2,
                    _ => return Err(LexiconError::UnknownSection { line: i + 1, name: name.to_string() }),
                });
                continue;
            }
            let toks = tokenize(line);
            if toks.is_empty() {
                continue;
            }
            match section {
                Some(0) => lex.and.push(toks),
                Some(1) => lex.or.push(toks),
                Some(2) => lex.neg.push(toks),
                _ => return Err(LexiconError::NoSection { line: i + 1 }),
            }
        }
        Ok(lex)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The lexicon shipped in `data/cues.txt`.
    pub fn builtin() -> &'static Lexicon {
        static LEX: OnceLock<Lexicon> = OnceLock::new();
        LEX.get_or_init(|| Lexicon::parse(include_str!("../../data/cues.txt")).expect("bundled lexicon parses"))
    }

    /// True iff an outcome-level negation cue occurs in `text`.
    pub fn detect_negation(&self, text: &str) -> bool {
        let toks = tokenize(text);
        self.neg.iter().any(|cue| find_phrase(&toks, cue).is_some())
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::builtin().clone()
    }
}

/// First index at which `phrase` occurs in `tokens`.
pub fn find_phrase(tokens: &[String], phrase: &[String]) -> Option<usize> {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return None;
    }
    tokens.windows(phrase.len()).position(|w| w == phrase)
}

/// Outcome-level negation check with the built-in lexicon.
pub fn detect_negation(sentence: &str) -> bool {
    Lexicon::builtin().detect_negation(sentence)
}
