//! Utterances, answers and dialog trees.
//!
//! An utterance is one prediction problem: a question, a rule text, the
//! follow-up history so far and an optional scenario. A dialog tree is the
//! binary Yes/No decision tree that all utterances for one question and rule
//! text are cut from.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::text::{collapse_whitespace, same_question};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValidationError {
    #[error("field `{0}` must not be empty")]
    EmptyField(&'static str),
    #[error("follow-up question must not be empty")]
    EmptyFollowUp,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("path exhausted: {consumed} replies reach a leaf, {given} were given")]
    PathExhausted { consumed: usize, given: usize },
    #[error("follow-up {question:?} repeats on the path {path}")]
    RepeatedFollowUp { question: String, path: NodePath },
    #[error("empty follow-up text at {0}")]
    EmptyFollowUp(NodePath),
}

/// A follow-up answer given by the user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Reply {
    Yes,
    No,
}

impl Reply {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Reply::Yes
        } else {
            Reply::No
        }
    }

    pub fn as_bool(self) -> bool {
        self == Reply::Yes
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "y" => Some(Reply::Yes),
            "no" | "n" => Some(Reply::No),
            _ => None,
        }
    }
}

impl fmt::Display for Reply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reply::Yes => "Yes",
            Reply::No => "No",
        })
    }
}

/// Turn-level decision. `More` means a follow-up question is needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Decision {
    Yes,
    No,
    Irrelevant,
    More,
}

impl Decision {
    pub const ALL: [Decision; 4] = [Decision::Yes, Decision::No, Decision::Irrelevant, Decision::More];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Decision::Yes => "Yes",
            Decision::No => "No",
            Decision::Irrelevant => "Irrelevant",
            Decision::More => "More",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Answer to an utterance: a terminal label or another follow-up question.
///
/// Serialized as a bare string: `"Yes"`, `"No"`, `"Irrelevant"`, or the
/// follow-up text itself.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Answer {
    Yes,
    No,
    Irrelevant,
    FollowUp(String),
}

impl Answer {
    /// Builds a follow-up answer. Whitespace is collapsed and a trailing `?`
    /// is added when missing.
    pub fn follow_up(text: &str) -> Result<Self, ValidationError> {
        let mut t = collapse_whitespace(text);
        if t.trim_end_matches('?').trim().is_empty() {
            return Err(ValidationError::EmptyFollowUp);
        }
        if !t.ends_with('?') {
            t.push('?');
        }
        Ok(Answer::FollowUp(t))
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, Answer::FollowUp(_))
    }

    pub fn decision(&self) -> Decision {
        match self {
            Answer::Yes => Decision::Yes,
            Answer::No => Decision::No,
            Answer::Irrelevant => Decision::Irrelevant,
            Answer::FollowUp(_) => Decision::More,
        }
    }

    pub fn followup_text(&self) -> Option<&str> {
        match self {
            Answer::FollowUp(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Answer::Yes => "Yes",
            Answer::No => "No",
            Answer::Irrelevant => "Irrelevant",
            Answer::FollowUp(t) => t,
        }
    }

    pub fn parse(s: &str) -> Result<Self, ValidationError> {
        match s.trim() {
            "Yes" | "yes" => Ok(Answer::Yes),
            "No" | "no" => Ok(Answer::No),
            "Irrelevant" | "irrelevant" => Ok(Answer::Irrelevant),
            other => Answer::follow_up(other),
        }
    }
}

impl From<Reply> for Answer {
    fn from(r: Reply) -> Self {
        match r {
            Reply::Yes => Answer::Yes,
            Reply::No => Answer::No,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Answer {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Answer {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Answer::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// One (follow-up question, answer) pair of a dialog history.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HistoryTurn {
    pub follow_up_question: String,
    pub follow_up_answer: Reply,
}

impl HistoryTurn {
    pub fn new(question: impl Into<String>, answer: Reply) -> Self {
        Self { follow_up_question: question.into(), follow_up_answer: answer }
    }
}

/// One prediction problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    #[serde(default)]
    pub utterance_id: String,
    #[serde(default)]
    pub tree_id: String,
    #[serde(default)]
    pub source_url: String,
    #[serde(rename = "snippet")]
    pub rule_text: String,
    pub question: String,
    #[serde(default)]
    pub scenario: String,
    #[serde(default)]
    pub history: Vec<HistoryTurn>,
    /// Follow-up pairs the scenario was written from, when the corpus
    /// records them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Vec<HistoryTurn>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<Answer>,
}

/// Builds a validated utterance with empty identifiers and no gold answer.
pub fn make_utterance(
    question: &str,
    rule_text: &str,
    history: Vec<HistoryTurn>,
    scenario: &str,
) -> Result<Utterance, ValidationError> {
    let u = Utterance {
        utterance_id: String::new(),
        tree_id: String::new(),
        source_url: String::new(),
        rule_text: rule_text.to_string(),
        question: question.to_string(),
        scenario: scenario.to_string(),
        history,
        evidence: None,
        answer: None,
    };
    u.validate()?;
    Ok(u)
}

impl Utterance {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.question.trim().is_empty() {
            return Err(ValidationError::EmptyField("question"));
        }
        if self.rule_text.trim().is_empty() {
            return Err(ValidationError::EmptyField("snippet"));
        }
        if self.history.iter().any(|t| t.follow_up_question.trim().is_empty()) {
            return Err(ValidationError::EmptyField("follow_up_question"));
        }
        Ok(())
    }

    pub fn with_answer(mut self, answer: Answer) -> Self {
        self.answer = Some(answer);
        self
    }

    pub fn has_scenario(&self) -> bool {
        !self.scenario.trim().is_empty()
    }

    /// Whether `question` was already asked in the history.
    pub fn asked(&self, question: &str) -> bool {
        self.history.iter().any(|t| same_question(&t.follow_up_question, question))
    }
}

/// Location of a node: the replies that lead to it from the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct NodePath(pub Vec<Reply>);

impl NodePath {
    pub fn root() -> Self {
        NodePath(Vec::new())
    }

    pub fn child(&self, r: Reply) -> Self {
        let mut v = self.0.clone();
        v.push(r);
        NodePath(v)
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("root");
        }
        for r in &self.0 {
            f.write_str(match r {
                Reply::Yes => "Y",
                Reply::No => "N",
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Leaf { answer: Reply },
    Internal { followup: String, yes: Box<Node>, no: Box<Node> },
}

impl Node {
    pub fn leaf(answer: Reply) -> Self {
        Node::Leaf { answer }
    }

    pub fn internal(followup: impl Into<String>, yes: Node, no: Node) -> Self {
        Node::Internal { followup: followup.into(), yes: Box::new(yes), no: Box::new(no) }
    }

    pub fn child(&self, r: Reply) -> Option<&Node> {
        match self {
            Node::Leaf { .. } => None,
            Node::Internal { yes, no, .. } => Some(match r {
                Reply::Yes => yes,
                Reply::No => no,
            }),
        }
    }

    pub fn followup(&self) -> Option<&str> {
        match self {
            Node::Internal { followup, .. } => Some(followup),
            Node::Leaf { .. } => None,
        }
    }

    fn count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Internal { yes, no, .. } => 1 + yes.count() + no.count(),
        }
    }

    fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Internal { yes, no, .. } => 1 + yes.depth().max(no.depth()),
        }
    }
}

#[derive(Deserialize)]
struct RawTree {
    #[serde(default)]
    tree_id: String,
    #[serde(default)]
    source_url: String,
    question: String,
    rule_text: String,
    root: Node,
}

impl TryFrom<RawTree> for DialogTree {
    type Error = TreeError;

    fn try_from(raw: RawTree) -> Result<Self, TreeError> {
        let mut tree = DialogTree::new(raw.question, raw.rule_text, raw.root)?;
        tree.tree_id = raw.tree_id;
        tree.source_url = raw.source_url;
        Ok(tree)
    }
}

/// Binary decision tree over follow-up questions with Yes/No leaves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTree")]
pub struct DialogTree {
    pub tree_id: String,
    pub source_url: String,
    pub question: String,
    pub rule_text: String,
    pub root: Node,
}

/// Outcome of walking a tree with a reply sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Traversal<'a> {
    Answer(Reply),
    Pending(&'a str),
}

impl DialogTree {
    /// Validates that no follow-up repeats along any root-to-leaf path.
    pub fn new(question: impl Into<String>, rule_text: impl Into<String>, root: Node) -> Result<Self, TreeError> {
        fn check<'a>(node: &'a Node, path: &NodePath, seen: &mut Vec<&'a str>) -> Result<(), TreeError> {
            if let Node::Internal { followup, yes, no } = node {
                if followup.trim().is_empty() {
                    return Err(TreeError::EmptyFollowUp(path.clone()));
                }
                if seen.iter().any(|s| same_question(s, followup)) {
                    return Err(TreeError::RepeatedFollowUp { question: followup.clone(), path: path.clone() });
                }
                seen.push(followup);
                check(yes, &path.child(Reply::Yes), seen)?;
                check(no, &path.child(Reply::No), seen)?;
                seen.pop();
            }
            Ok(())
        }
        check(&root, &NodePath::root(), &mut Vec::new())?;
        Ok(Self {
            tree_id: String::new(),
            source_url: String::new(),
            question: question.into(),
            rule_text: rule_text.into(),
            root,
        })
    }

    pub fn with_ids(mut self, tree_id: impl Into<String>, source_url: impl Into<String>) -> Self {
        self.tree_id = tree_id.into();
        self.source_url = source_url.into();
        self
    }

    pub fn node_count(&self) -> usize {
        self.root.count()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn node_at(&self, path: &NodePath) -> Option<&Node> {
        path.0.iter().try_fold(&self.root, |n, r| n.child(*r))
    }

    /// Every root-to-leaf reply sequence with its leaf answer, Yes branches
    /// first.
    pub fn leaf_paths(&self) -> Vec<(NodePath, Reply)> {
        fn walk(n: &Node, path: NodePath, out: &mut Vec<(NodePath, Reply)>) {
            match n {
                Node::Leaf { answer } => out.push((path, *answer)),
                Node::Internal { yes, no, .. } => {
                    walk(yes, path.child(Reply::Yes), out);
                    walk(no, path.child(Reply::No), out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, NodePath::root(), &mut out);
        out
    }

    /// Every follow-up question in the subtree at `node`.
    pub fn subtree_questions(node: &Node) -> Vec<&str> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            if let Node::Internal { followup, yes, no } = n {
                out.push(followup.as_str());
                stack.push(no);
                stack.push(yes);
            }
        }
        out
    }
}

/// Consumes `replies` from the root. Returns the leaf answer when a leaf is
/// reached, otherwise the follow-up of the next internal node.
pub fn tree_traverse<'a>(tree: &'a DialogTree, replies: &[Reply]) -> Result<Traversal<'a>, TreeError> {
    let mut node = &tree.root;
    for (i, r) in replies.iter().enumerate() {
        match node.child(*r) {
            Some(next) => node = next,
            None => return Err(TreeError::PathExhausted { consumed: i, given: replies.len() }),
        }
    }
    Ok(match node {
        Node::Leaf { answer } => Traversal::Answer(*answer),
        Node::Internal { followup, .. } => Traversal::Pending(followup),
    })
}

/// Internal nodes whose two children are leaves with the same answer.
pub fn tree_irregularities(tree: &DialogTree) -> Vec<NodePath> {
    fn walk(n: &Node, path: NodePath, out: &mut Vec<NodePath>) {
        if let Node::Internal { yes, no, .. } = n {
            if let (Node::Leaf { answer: a }, Node::Leaf { answer: b }) = (yes.as_ref(), no.as_ref()) {
                if a == b {
                    out.push(path.clone());
                }
            }
            walk(yes, path.child(Reply::Yes), out);
            walk(no, path.child(Reply::No), out);
        }
    }
    let mut out = Vec::new();
    walk(&tree.root, NodePath::root(), &mut out);
    out
}

/// One utterance per node, in pre-order with Yes branches first. Internal
/// nodes yield their follow-up as gold, leaves their answer.
pub fn enumerate_utterances(tree: &DialogTree) -> Vec<Utterance> {
    fn walk(tree: &DialogTree, n: &Node, path: NodePath, history: &mut Vec<HistoryTurn>, out: &mut Vec<Utterance>) {
        let answer = match n {
            Node::Leaf { answer } => Answer::from(*answer),
            Node::Internal { followup, .. } => {
                Answer::follow_up(followup).unwrap_or_else(|_| Answer::FollowUp(followup.clone()))
            }
        };
        out.push(Utterance {
            utterance_id: format!("{}:{}", tree.tree_id, path),
            tree_id: tree.tree_id.clone(),
            source_url: tree.source_url.clone(),
            rule_text: tree.rule_text.clone(),
            question: tree.question.clone(),
            scenario: String::new(),
            history: history.clone(),
            evidence: None,
            answer: Some(answer),
        });
        if let Node::Internal { followup, yes, no } = n {
            for (r, child) in [(Reply::Yes, yes), (Reply::No, no)] {
                history.push(HistoryTurn::new(followup.clone(), r));
                walk(tree, child, path.child(r), history, out);
                history.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(tree, &tree.root, NodePath::root(), &mut Vec::new(), &mut out);
    out
}

/// One agent turn of a dialog and the user's reply to it, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub agent: Answer,
    pub user_reply: Option<Reply>,
    pub elapsed_ms: f64,
}

/// A completed dialog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub turns: Vec<Turn>,
    #[serde(rename = "final")]
    pub final_answer: Answer,
}

impl Transcript {
    /// Returns `None` unless `final_answer` is terminal.
    pub fn finish(turns: Vec<Turn>, final_answer: Answer) -> Option<Self> {
        final_answer.is_terminal().then_some(Self { turns, final_answer })
    }

    pub fn user_replies(&self) -> impl Iterator<Item = Reply> + '_ {
        self.turns.iter().filter_map(|t| t.user_reply)
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn make_utterance_validates() {
        let u = make_utterance(NI_QUESTION, NI_RULE, vec![], "").unwrap();
        assert_eq!(u.scenario, "");
        assert_eq!(make_utterance("", "x", vec![], ""), Err(ValidationError::EmptyField("question")));
        assert_eq!(make_utterance("q", " ", vec![], ""), Err(ValidationError::EmptyField("snippet")));
    }

    #[test]
    fn utterance_json_round_trip() {
        let u = make_utterance(NI_QUESTION, NI_RULE, vec![HistoryTurn::new(NI_EEA, Reply::Yes)], "")
            .unwrap()
            .with_answer(Answer::follow_up(NI_WEEKS).unwrap());
        let line = serde_json::to_string(&u).unwrap();
        assert!(line.contains("\"snippet\""));
        assert!(line.contains("\"follow_up_answer\":\"Yes\""));
        let back: Utterance = serde_json::from_str(&line).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn follow_up_answers_end_with_question_mark() {
        assert_eq!(Answer::follow_up("Are you  over 18").unwrap(), Answer::FollowUp("Are you over 18?".into()));
        assert!(Answer::follow_up(" ? ").is_err());
        assert_eq!(Answer::parse("Irrelevant").unwrap(), Answer::Irrelevant);
    }

    #[test]
    fn traverse_fixture() {
        let t = ni_tree();
        assert_eq!(tree_traverse(&t, &[Reply::Yes, Reply::Yes]).unwrap(), Traversal::Answer(Reply::Yes));
        assert_eq!(tree_traverse(&t, &[]).unwrap(), Traversal::Pending(NI_EEA));
        assert_eq!(tree_traverse(&t, &[Reply::Yes]).unwrap(), Traversal::Pending(NI_WEEKS));
        assert_eq!(
            tree_traverse(&t, &[Reply::No, Reply::Yes]),
            Err(TreeError::PathExhausted { consumed: 1, given: 2 })
        );
        assert!(tree_traverse(&t, &[Reply::Yes, Reply::Yes, Reply::No]).is_err());
    }

    #[test]
    fn irregularities() {
        let flagged = DialogTree::new(
            "q",
            "r",
            Node::internal("a?", Node::internal("b?", Node::leaf(Reply::Yes), Node::leaf(Reply::Yes)), Node::leaf(Reply::No)),
        )
        .unwrap();
        assert_eq!(tree_irregularities(&flagged), vec![NodePath(vec![Reply::Yes])]);
        assert!(tree_irregularities(&ni_tree()).is_empty());
        let single = DialogTree::new("q", "r", Node::leaf(Reply::No)).unwrap();
        assert!(tree_irregularities(&single).is_empty());
    }

    #[test]
    fn enumerate_counts_and_contents() {
        let full = DialogTree::new(
            "q",
            "r",
            Node::internal(
                "a?",
                Node::internal("b?", Node::leaf(Reply::Yes), Node::leaf(Reply::No)),
                Node::internal("c?", Node::leaf(Reply::No), Node::leaf(Reply::Yes)),
            ),
        )
        .unwrap();
        assert_eq!(enumerate_utterances(&full).len(), 7);

        let single = DialogTree::new("q", "r", Node::leaf(Reply::No)).unwrap();
        let us = enumerate_utterances(&single);
        assert_eq!(us.len(), 1);
        assert!(us[0].history.is_empty());
        assert_eq!(us[0].answer, Some(Answer::No));

        let ni = enumerate_utterances(&ni_tree());
        assert!(ni.iter().any(|u| u.history == vec![HistoryTurn::new(NI_EEA, Reply::Yes)]
            && u.answer == Some(Answer::FollowUp(NI_WEEKS.into()))));
    }

    #[test]
    fn repeated_follow_up_rejected_at_load() {
        let json = r#"{"question":"q","rule_text":"r","root":{"kind":"internal","followup":"A?",
            "yes":{"kind":"internal","followup":"a","yes":{"kind":"leaf","answer":"Yes"},"no":{"kind":"leaf","answer":"No"}},
            "no":{"kind":"leaf","answer":"No"}}}"#;
        assert!(serde_json::from_str::<DialogTree>(json).is_err());
        let bad_kind = r#"{"question":"q","rule_text":"r","root":{"kind":"internal","followup":"A?","yes":{"kind":"leaf","answer":"Yes"}}}"#;
        assert!(serde_json::from_str::<DialogTree>(bad_kind).is_err());
    }

    fn arb_tree(depth: u32) -> impl Strategy<Value = Node> {
        let leaf = any::<bool>().prop_map(|b| Node::leaf(Reply::from_bool(b)));
        leaf.prop_recursive(depth, 32, 2, |inner| {
            (inner.clone(), inner).prop_map(|(y, n)| Node::internal("placeholder", y, n))
        })
    }

    /// Gives each internal node a distinct follow-up text.
    fn label(node: Node, counter: &mut usize) -> Node {
        match node {
            Node::Leaf { .. } => node,
            Node::Internal { yes, no, .. } => {
                *counter += 1;
                let name = format!("Is condition {} met?", counter);
                let y = label(*yes, counter);
                let n = label(*no, counter);
                Node::internal(name, y, n)
            }
        }
    }

    proptest! {
        #[test]
        fn enumerate_matches_node_count_and_histories_are_prefix_closed(root in arb_tree(4)) {
            let tree = DialogTree::new("q", "r", label(root, &mut 0)).unwrap();
            let us = enumerate_utterances(&tree);
            prop_assert_eq!(us.len(), tree.node_count());
            for u in &us {
                if let Some((_, prefix)) = u.history.split_last() {
                    prop_assert!(us.iter().any(|v| v.history == prefix));
                }
            }
        }

        #[test]
        fn traverse_reaches_every_leaf(root in arb_tree(4)) {
            let tree = DialogTree::new("q", "r", label(root, &mut 0)).unwrap();
            for (path, leaf) in tree.leaf_paths() {
                prop_assert_eq!(tree_traverse(&tree, &path.0).unwrap(), Traversal::Answer(leaf));
            }
        }

        #[test]
        fn tree_round_trips(root in arb_tree(4)) {
            let tree = DialogTree::new("q", "r", label(root, &mut 0)).unwrap().with_ids("t", "u");
            let back: DialogTree = serde_json::from_str(&serde_json::to_string(&tree).unwrap()).unwrap();
            prop_assert_eq!(back, tree);
        }
    }
}
