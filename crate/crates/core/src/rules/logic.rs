use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lexicon::{find_phrase, Lexicon};
use super::segment::{Condition, Origin};
use super::snippet::{RuleSnippet, Span};
use crate::text::tokenize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("condition {index}: {reason}")]
    InconsistentConditions { index: usize, reason: String },
}

/// Boolean structure over condition indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogicNode {
    Cond(usize),
    Not(Box<LogicNode>),
    And(Vec<LogicNode>),
    Or(Vec<LogicNode>),
}

fn and3(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Some(false),
        (Some(true), Some(true)) => Some(true),
        _ => None,
    }
}

fn or3(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(true), _) | (_, Some(true)) => Some(true),
        (Some(false), Some(false)) => Some(false),
        _ => None,
    }
}

impl LogicNode {
    fn and(mut kids: Vec<LogicNode>) -> LogicNode {
        if kids.len() == 1 {
            kids.pop().unwrap()
        } else {
            LogicNode::And(kids)
        }
    }

    fn or(mut kids: Vec<LogicNode>) -> LogicNode {
        if kids.len() == 1 {
            kids.pop().unwrap()
        } else {
            LogicNode::Or(kids)
        }
    }

    /// Three-valued (Kleene) evaluation; `None` is unknown.
    // Not try_fold: an unknown child must not short-circuit, a later false
    // (or true) still decides.
    #[allow(clippy::manual_try_fold)]
    pub fn evaluate(&self, values: &[Option<bool>]) -> Option<bool> {
        match self {
            LogicNode::Cond(i) => values.get(*i).copied().flatten(),
            LogicNode::Not(n) => n.evaluate(values).map(|v| !v),
            LogicNode::And(kids) => kids.iter().fold(Some(true), |acc, k| and3(acc, k.evaluate(values))),
            LogicNode::Or(kids) => kids.iter().fold(Some(false), |acc, k| or3(acc, k.evaluate(values))),
        }
    }

    /// Depth counting only And/Or levels; a bare condition has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            LogicNode::Cond(_) => 0,
            LogicNode::Not(n) => n.depth(),
            LogicNode::And(k) | LogicNode::Or(k) => 1 + k.iter().map(LogicNode::depth).max().unwrap_or(0),
        }
    }

    pub fn leaf_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<usize>) {
        match self {
            LogicNode::Cond(i) => out.push(*i),
            LogicNode::Not(n) => n.collect(out),
            LogicNode::And(k) | LogicNode::Or(k) => k.iter().for_each(|n| n.collect(out)),
        }
    }
}

/// Parsed logical form of one rule text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleLogic {
    pub conditions: Vec<Condition>,
    pub structure: LogicNode,
    /// The rule states when the outcome does *not* hold.
    pub outcome_negated: bool,
    /// No explicit cue fixed the list connective; AND was assumed.
    pub ambiguous: bool,
}

/// Above this many unknowns relevance is not enumerated and every unknown
/// condition is treated as relevant.
const RELEVANCE_ENUM_LIMIT: usize = 16;

impl RuleLogic {
    /// A rule without conditions; its outcome always holds.
    pub fn empty() -> Self {
        Self { conditions: Vec::new(), structure: LogicNode::And(Vec::new()), outcome_negated: false, ambiguous: false }
    }

    /// Whether the conditions are satisfied under a partial assignment.
    pub fn evaluate(&self, assignment: &[Option<bool>]) -> Option<bool> {
        self.structure.evaluate(assignment)
    }

    /// Truth of the rule's outcome, with `outcome_negated` applied.
    pub fn outcome(&self, assignment: &[Option<bool>]) -> Option<bool> {
        self.evaluate(assignment).map(|v| v != self.outcome_negated)
    }

    /// Whether fixing condition `i` can still change the result, for some
    /// completion of the other unknown conditions.
    pub fn is_relevant(&self, i: usize, assignment: &[Option<bool>]) -> bool {
        let n = self.conditions.len();
        if i >= n {
            return false;
        }
        let mut values: Vec<Option<bool>> = (0..n).map(|k| assignment.get(k).copied().flatten()).collect();
        if values[i].is_some() {
            return false;
        }
        let unknown: Vec<usize> = (0..n).filter(|&k| k != i && values[k].is_none()).collect();
        if unknown.len() > RELEVANCE_ENUM_LIMIT {
            return true;
        }
        for mask in 0u32..(1u32 << unknown.len()) {
            for (bit, &k) in unknown.iter().enumerate() {
                values[k] = Some(mask >> bit & 1 == 1);
            }
            values[i] = Some(true);
            let t = self.structure.evaluate(&values);
            values[i] = Some(false);
            if self.structure.evaluate(&values) != t {
                return true;
            }
        }
        false
    }

    pub fn depth(&self) -> usize {
        self.structure.depth()
    }
}

fn check_conditions(snippet: &RuleSnippet, conditions: &[Condition]) -> Result<(), RuleError> {
    let bad = |index: usize, reason: &str| Err(RuleError::InconsistentConditions { index, reason: reason.to_string() });
    for (i, c) in conditions.iter().enumerate() {
        if c.span.end > snippet.text.len() || c.span.start >= c.span.end {
            return bad(i, "span outside rule text");
        }
        if snippet.text.get(c.span.range()) != Some(c.text.as_str()) {
            return bad(i, "text does not match span");
        }
        if i > 0 && conditions[i - 1].span.end > c.span.start {
            return bad(i, "overlaps previous condition");
        }
        if i > 0 && conditions[i - 1].group > c.group {
            return bad(i, "groups out of order");
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Conn {
    And,
    Or,
}

/// Connective within one group: the conjunction nearest the last member.
fn group_connective(text: &str, members: &[&Condition]) -> Conn {
    if members.len() < 2 {
        return Conn::And;
    }
    let last = members[members.len() - 1];
    let prev = members[members.len() - 2];
    let gap = tokenize(&text[prev.span.end..last.span.start]);
    if gap.iter().any(|t| t == "or") && !gap.iter().any(|t| t == "and") {
        Conn::Or
    } else {
        Conn::And
    }
}

/// Connective of a bullet list: a trailing `and`/`or` on a non-final
/// bullet wins, then a list cue in the introduction.
fn list_connective(snippet: &RuleSnippet, lex: &Lexicon) -> Option<Conn> {
    let n = snippet.bullets.len();
    for b in snippet.bullets.iter().take(n.saturating_sub(1)) {
        match tokenize(&snippet.text[b.range()]).last().map(String::as_str) {
            Some("or") => return Some(Conn::Or),
            Some("and") => return Some(Conn::And),
            _ => {}
        }
    }
    let first_bullet = snippet.bullets.first().map_or(snippet.text.len(), |b| b.start);
    let intro = tokenize(&snippet.text[..first_bullet]);
    let last_hit = |cues: &[Vec<String>]| {
        cues.iter()
            .filter_map(|c| (0..intro.len()).rev().find(|&k| intro[k..].starts_with(c)))
            .max()
    };
    match (last_hit(&lex.and), last_hit(&lex.or)) {
        (Some(a), Some(o)) => Some(if o > a { Conn::Or } else { Conn::And }),
        (Some(_), None) => Some(Conn::And),
        (None, Some(_)) => Some(Conn::Or),
        (None, None) => None,
    }
}

/// Negation cues in the text outside every condition span.
fn outcome_negation(snippet: &RuleSnippet, conditions: &[Condition], lex: &Lexicon) -> bool {
    let mut cursor = 0;
    let mut pieces = Vec::new();
    for c in conditions {
        pieces.push(Span::new(cursor, c.span.start.max(cursor)));
        cursor = cursor.max(c.span.end);
    }
    pieces.push(Span::new(cursor, snippet.text.len()));
    pieces.iter().any(|p| {
        let toks = tokenize(&snippet.text[p.range()]);
        lex.neg.iter().any(|cue| find_phrase(&toks, cue).is_some())
    })
}

/// Builds the logical form of a rule from its conditions.
///
/// Members of one bullet or clause combine by the conjunction between them.
/// Bullets combine by the list connective; a list without any cue defaults to
/// AND and is flagged `ambiguous`. Inline clauses and the list are ANDed.
/// `unless` clauses are negated, or flip the outcome when every condition is
/// an `unless` clause.
pub fn detect_logic_with(snippet: &RuleSnippet, conditions: &[Condition], lex: &Lexicon) -> Result<RuleLogic, RuleError> {
    check_conditions(snippet, conditions)?;
    let text = &snippet.text;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, c) in conditions.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if conditions[g[0]].group == c.group => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    let all_unless = !conditions.is_empty() && conditions.iter().all(|c| c.cue == "unless");
    let group_node = |g: &Vec<usize>| {
        let members: Vec<&Condition> = g.iter().map(|&i| &conditions[i]).collect();
        let kids: Vec<LogicNode> = g.iter().map(|&i| LogicNode::Cond(i)).collect();
        let node = match group_connective(text, &members) {
            Conn::And => LogicNode::and(kids),
            Conn::Or => LogicNode::or(kids),
        };
        if members[0].cue == "unless" && !all_unless {
            LogicNode::Not(Box::new(node))
        } else {
            node
        }
    };

    let mut top = Vec::new();
    let mut bullets = Vec::new();
    for g in &groups {
        match conditions[g[0]].origin {
            Origin::Inline => top.push(group_node(g)),
            Origin::Bullet => bullets.push(group_node(g)),
        }
    }
    let mut ambiguous = false;
    if !bullets.is_empty() {
        let conn = if bullets.len() < 2 {
            Conn::And
        } else {
            list_connective(snippet, lex).unwrap_or_else(|| {
                ambiguous = true;
                Conn::And
            })
        };
        let list = match conn {
            Conn::And => LogicNode::and(bullets),
            Conn::Or => LogicNode::or(bullets),
        };
        // An AND list merges into the top-level conjunction.
        match list {
            LogicNode::And(kids) if !top.is_empty() => top.extend(kids),
            other => top.push(other),
        }
    }
    let structure = match top.len() {
        0 => LogicNode::And(Vec::new()),
        _ => {
            let mut flat = Vec::new();
            for n in top {
                match n {
                    LogicNode::And(k) => flat.extend(k),
                    other => flat.push(other),
                }
            }
            LogicNode::and(flat)
        }
    };
    let outcome_negated = outcome_negation(snippet, conditions, lex) != all_unless;
    Ok(RuleLogic { conditions: conditions.to_vec(), structure, outcome_negated, ambiguous })
}

pub fn detect_logic(snippet: &RuleSnippet, conditions: &[Condition]) -> Result<RuleLogic, RuleError> {
    detect_logic_with(snippet, conditions, Lexicon::builtin())
}
