//! Rule-text processing: snippet extraction, condition segmentation and
//! logical form detection.

pub mod lexicon;
pub mod logic;
pub mod segment;
pub mod snippet;

pub use lexicon::{detect_negation, Lexicon, LexiconError};
pub use logic::{detect_logic, detect_logic_with, LogicNode, RuleError, RuleLogic};
pub use segment::{segment_conditions, segment_conditions_with, Condition, Origin};
pub use snippet::{extract_rule_texts, RuleSnippet, Span, DEFAULT_MAX_BULLETS, DEFAULT_MAX_LEN};

/// Segmentation and logic detection with a configurable lexicon.
#[derive(Debug, Clone, Default)]
pub struct RuleParser {
    pub lexicon: Lexicon,
}

impl RuleParser {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }

    pub fn parse(&self, rule_text: &str) -> Result<RuleLogic, RuleError> {
        let snippet = RuleSnippet::from_text(rule_text);
        let conditions = segment_conditions_with(&snippet, &self.lexicon);
        detect_logic_with(&snippet, &conditions, &self.lexicon)
    }
}

/// Parses a rule text with the built-in lexicon.
pub fn parse_rule(rule_text: &str) -> Result<RuleLogic, RuleError> {
    let snippet = RuleSnippet::from_text(rule_text);
    detect_logic(&snippet, &segment_conditions(&snippet))
}
