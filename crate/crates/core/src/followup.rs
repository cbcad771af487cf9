//! Follow-up question generation, sentence baselines and LCS span mapping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::align_history;
use crate::dialog::{HistoryTurn, Utterance};
use crate::rules::{Condition, RuleLogic, Span};
use crate::text::{collapse_whitespace, sentence_spans, tokenize, tokenize_spans};

/// Default LCS threshold for [`map_question_to_span`], in tokens.
pub const DEFAULT_LCS_THRESHOLD: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FollowupError {
    #[error("nothing to ask: the rule outcome is already determined")]
    NothingToAsk,
    #[error("rule text has no sentences")]
    EmptyRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedQuestion {
    pub text: String,
    pub source_condition: Option<usize>,
    pub source_span: Option<Span>,
}

/// First condition in rule-text order that is not answered by the history
/// and can still change the outcome. `None` once the outcome is determined.
pub fn next_unresolved_condition(logic: &RuleLogic, history: &[HistoryTurn]) -> Option<usize> {
    let assignment = align_history(logic, history);
    if logic.evaluate(&assignment).is_some() {
        return None;
    }
    let unassigned = || (0..logic.conditions.len()).filter(|&i| assignment[i].is_none());
    unassigned().find(|&i| logic.is_relevant(i, &assignment)).or_else(|| unassigned().next())
}

fn fold_apostrophes(s: &str) -> String {
    s.replace(['\u{2019}', '\u{2018}'], "'").to_lowercase()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn is_participle(w: &str) -> bool {
    w == "been" || w == "got" || w == "had" || (w.len() > 3 && (w.ends_with("ed") || w.ends_with("en")))
}

const AUX_AFTER_YOU: &[&str] =
    &["are", "were", "can", "will", "could", "should", "must", "would", "may", "might", "had", "did", "was"];
const DETERMINERS: &[&str] =
    &["the", "a", "an", "this", "that", "these", "those", "they", "he", "she", "it", "there", "their", "his", "her", "my", "any", "all", "each"];
const COPULAS: &[&str] = &["is", "are", "was", "were", "has", "have"];

/// Rewrites a second-person declarative condition as a polar question.
///
/// "you're X" becomes "Are you X?", "you <verb> X" becomes "Do you <verb> X?",
/// "you have X" becomes "Do you have X?" ("Have you X?" before a participle),
/// "your X is Y" becomes "Is your X Y?". Bare verb phrases get "Do you";
/// other text is wrapped as "Is the following true: ...?". Text that already
/// ends in a question mark is returned as is.
pub fn condition_to_question(text: &str) -> String {
    let t = collapse_whitespace(text);
    if t.ends_with('?') {
        return t;
    }
    let t = t.trim_end_matches(['.', ';', ',', ':', '!']).to_string();
    let words: Vec<&str> = t.split(' ').collect();
    let lw: Vec<String> = words.iter().map(|w| fold_apostrophes(w)).collect();
    let rest = |n: usize| words.get(n..).map(|w| w.join(" ")).unwrap_or_default();
    let w1 = lw.get(1).map(String::as_str).unwrap_or("");
    let w2 = lw.get(2).map(String::as_str).unwrap_or("");
    let q = match lw[0].as_str() {
        "you're" => format!("Are you {}", rest(1)),
        "you've" => format!("Have you {}", rest(1)),
        "you'll" => format!("Will you {}", rest(1)),
        "you'd" => format!("Would you {}", rest(1)),
        "you" if words.len() > 1 => match w1 {
            "have" if is_participle(w2) => format!("Have you {}", rest(2)),
            "have" => format!("Do you have {}", rest(2)),
            "has" => format!("Do you have {}", rest(2)),
            "don't" | "do" if w2 == "not" || w1 == "don't" => {
                format!("Do you not {}", rest(if w1 == "do" { 3 } else { 2 }))
            }
            "do" => format!("Do you {}", rest(2)),
            aux if AUX_AFTER_YOU.contains(&aux) => format!("{} you {}", capitalize(aux), rest(2)),
            _ => format!("Do you {}", rest(1)),
        },
        "are" | "be" | "aged" | "over" | "under" => {
            let start = if lw[0] == "are" || lw[0] == "be" { 1 } else { 0 };
            format!("Are you {}", rest(start))
        }
        "have" if is_participle(w1) => format!("Have you {}", rest(1)),
        "have" => format!("Do you have {}", rest(1)),
        "your" | "the" | "their" | "his" | "her" | "my" => {
            match lw.iter().take(7).position(|w| COPULAS.contains(&w.as_str())).filter(|&k| k > 0) {
                Some(k) => {
                    let mut cop = lw[k].clone();
                    if (cop == "has" || cop == "have") && !lw.get(k + 1).is_some_and(|w| is_participle(w)) {
                        cop = if cop == "has" { "does".into() } else { "do".into() };
                        let mut body: Vec<&str> = words[..k].to_vec();
                        body.push("have");
                        body.extend(&words[k + 1..]);
                        let subject = body.join(" ");
                        format!("{} {}", capitalize(&cop), lower_first(&subject))
                    } else {
                        let subject = words[..k].join(" ");
                        format!("{} {} {}", capitalize(&cop), lower_first(&subject), rest(k + 1))
                    }
                }
                None => format!("Is the following true: {t}"),
            }
        }
        w if DETERMINERS.contains(&w) => format!("Is the following true: {t}"),
        w if w.chars().next().is_some_and(|c| c.is_ascii_digit()) => format!("Is the following true: {t}"),
        _ => format!("Do you {}", lower_first(&t)),
    };
    let q = capitalize(q.trim_end());
    format!("{q}?")
}

fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) if !s.split(' ').next().is_some_and(|w| w.chars().skip(1).any(char::is_uppercase)) => {
            f.to_lowercase().chain(c).collect()
        }
        Some(f) => std::iter::once(f).chain(c).collect(),
        None => String::new(),
    }
}

fn question_for(c: &Condition, index: usize) -> GeneratedQuestion {
    GeneratedQuestion { text: condition_to_question(&c.text), source_condition: Some(index), source_span: Some(c.span) }
}

/// Question over the next unresolved condition.
pub fn generate_followup(u: &Utterance, logic: &RuleLogic) -> Result<GeneratedQuestion, FollowupError> {
    let i = next_unresolved_condition(logic, &u.history).ok_or(FollowupError::NothingToAsk)?;
    Ok(question_for(&logic.conditions[i], i))
}

/// Sentence selection for the sentence-return baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SentenceChoice {
    First,
    Last,
    Random(u64),
}

/// Returns one sentence of the rule text verbatim.
pub fn baseline_sentence(rule_text: &str, choice: SentenceChoice) -> Result<String, FollowupError> {
    let spans = sentence_spans(rule_text);
    let pick = match choice {
        SentenceChoice::First => spans.first(),
        SentenceChoice::Last => spans.last(),
        SentenceChoice::Random(seed) if !spans.is_empty() => {
            spans.get(ChaCha8Rng::seed_from_u64(seed).gen_range(0..spans.len()))
        }
        SentenceChoice::Random(_) => None,
    };
    pick.map(|r| rule_text[r.clone()].to_string()).ok_or(FollowupError::EmptyRule)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanMapping {
    pub span: Span,
    pub lcs_length: usize,
    pub threshold: usize,
}

/// Token-level longest common subsequence length.
pub fn lcs_length(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Maps a follow-up question onto the rule text.
///
/// The LCS of tokens is computed; when it is longer than `threshold`, the
/// narrowest window of rule tokens that still contains a full-length common
/// subsequence (leftmost on ties) is widened on both sides until it has as
/// many tokens as the follow-up. Extra tokens go left when the need is odd;
/// growth blocked by the text boundary moves to the other side.
pub fn map_question_to_span(rule_text: &str, followup: &str, threshold: usize) -> Option<SpanMapping> {
    let rule = tokenize_spans(rule_text);
    let words: Vec<String> = rule.iter().map(|t| t.text.clone()).collect();
    let f = tokenize(followup);
    let best = lcs_length(&words, &f);
    if best == 0 || best <= threshold {
        return None;
    }
    // Narrowest window [a, b] with LCS(window, f) == best.
    let mut window: Option<(usize, usize)> = None;
    for a in 0..words.len() {
        if words.len() - a < best {
            break;
        }
        let mut row = vec![0usize; f.len() + 1];
        for (b, word) in words.iter().enumerate().skip(a) {
            let mut diag = 0;
            for (j, y) in f.iter().enumerate() {
                let up = row[j + 1];
                row[j + 1] = if word == y { diag + 1 } else { up.max(row[j]) };
                diag = up;
            }
            if row[f.len()] == best {
                if window.is_none_or(|(wa, wb)| b - a < wb - wa) {
                    window = Some((a, b));
                }
                break;
            }
        }
    }
    let (mut a, mut b) = window?;
    let target = f.len().min(words.len());
    let len = b - a + 1;
    if len < target {
        let need = target - len;
        let mut left = need.div_ceil(2);
        let mut right = need / 2;
        if left > a {
            right += left - a;
            left = a;
        }
        let room_right = words.len() - 1 - b;
        if right > room_right {
            left = (left + right - room_right).min(a);
            right = room_right;
        }
        a -= left;
        b += right;
    }
    Some(SpanMapping {
        span: Span::new(rule[a].span.start, rule[b].span.end),
        lcs_length: best,
        threshold,
    })
}
