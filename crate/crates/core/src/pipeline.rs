//! The combined model: classify, generate a follow-up, try to answer it from
//! the scenario, repeat.

use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::TurnClassifier;
use crate::dialog::{Answer, Decision, DialogTree, HistoryTurn, Node, Reply, Transcript, Turn, Utterance};
use crate::entail::{Entailer, EntailmentLabel};
use crate::followup::{generate_followup, FollowupError, GeneratedQuestion};
use crate::metrics::{MetricError, MetricReport};
use crate::par::{self, Strategy};
use crate::rules::{parse_rule, RuleLogic};
use crate::text::same_question;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error("non-terminating pipeline: {max_steps} steps used without a final answer or question")]
    NonTerminating { max_steps: usize },
    #[error("generator repeated the already asked question {0:?}")]
    RepeatedQuestion(String),
    #[error("classifier asked for more but the generator has {0}")]
    Generation(#[from] FollowupError),
    #[error("oracle cannot answer {0:?}")]
    OracleCannotAnswer(String),
    #[error("oracle has no replies left")]
    OracleExhausted,
    #[error("no follow-up question is pending")]
    NothingPending,
    #[error("generated an empty follow-up question")]
    EmptyQuestion,
}

/// Produces the next follow-up question text.
pub trait QuestionGenerator: Send + Sync {
    fn generate(&self, u: &Utterance, logic: &RuleLogic) -> Result<GeneratedQuestion, FollowupError>;
}

/// Template generator over the next unresolved condition.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedGenerator;

impl QuestionGenerator for RuleBasedGenerator {
    fn generate(&self, u: &Utterance, logic: &RuleLogic) -> Result<GeneratedQuestion, FollowupError> {
        generate_followup(u, logic)
    }
}

/// The three stages of the combined model.
#[derive(Clone, Copy)]
pub struct Components<'a> {
    pub classifier: &'a dyn TurnClassifier,
    pub generator: &'a dyn QuestionGenerator,
    pub entailer: &'a dyn Entailer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Classify,
    Generate,
    Entail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: Stage,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub answer: Answer,
    pub trace: Vec<TraceEntry>,
}

/// One dialog in progress. The history only grows.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub utterance: Utterance,
    pub logic: RuleLogic,
    /// Classifier invocations so far, over the whole session.
    pub step_count: usize,
    pub max_steps: usize,
    /// Follow-up shown to the user and not yet answered.
    pub pending: Option<String>,
    /// Follow-ups answered from the scenario, with the inferred reply.
    pub inferred: Vec<HistoryTurn>,
}

impl SessionState {
    /// `max_steps` defaults to twice the condition count plus two.
    pub fn new(utterance: Utterance, logic: RuleLogic) -> Self {
        let max_steps = 2 * logic.conditions.len() + 2;
        Self { utterance, logic, step_count: 0, max_steps, pending: None, inferred: Vec::new() }
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    /// Records the user's reply to the pending follow-up.
    pub fn record_reply(&mut self, reply: Reply) -> Result<(), PipelineError> {
        let q = self.pending.take().ok_or(PipelineError::NothingPending)?;
        self.utterance.history.push(HistoryTurn::new(q, reply));
        Ok(())
    }
}

/// Advances the session to its next agent output.
///
/// The classifier decides; on More a follow-up is generated and put to the
/// entailer with the scenario. An Entailment or Contradiction becomes a Yes
/// or No history entry and the loop repeats; Neutral, or an empty scenario,
/// returns the follow-up to the user.
pub fn step(state: &mut SessionState, c: Components<'_>) -> Result<AgentResponse, PipelineError> {
    if state.pending.is_some() {
        return Err(PipelineError::NothingPending);
    }
    let mut trace = Vec::new();
    loop {
        if state.step_count >= state.max_steps {
            return Err(PipelineError::NonTerminating { max_steps: state.max_steps });
        }
        state.step_count += 1;
        let d = c.classifier.classify(&state.utterance, &state.logic);
        trace.push(TraceEntry { stage: Stage::Classify, output: d.name().to_string() });
        let answer = match d {
            Decision::Yes => Answer::Yes,
            Decision::No => Answer::No,
            Decision::Irrelevant => Answer::Irrelevant,
            Decision::More => {
                let g = c.generator.generate(&state.utterance, &state.logic)?;
                let question = Answer::follow_up(&g.text).map_err(|_| PipelineError::EmptyQuestion)?;
                let text = question.followup_text().unwrap_or_default().to_string();
                trace.push(TraceEntry { stage: Stage::Generate, output: text.clone() });
                if state.utterance.asked(&text) {
                    return Err(PipelineError::RepeatedQuestion(text));
                }
                if state.utterance.has_scenario() {
                    let label = c.entailer.entail(&state.utterance.scenario, &text);
                    trace.push(TraceEntry { stage: Stage::Entail, output: label.name().to_string() });
                    if let Some(r) = label.reply() {
                        let turn = HistoryTurn::new(text, r);
                        state.inferred.push(turn.clone());
                        state.utterance.history.push(turn);
                        continue;
                    }
                }
                state.pending = Some(text);
                question
            }
        };
        return Ok(AgentResponse { answer, trace });
    }
}

/// Uniform random Yes/No replies from a seeded ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct VirtualUser {
    rng: ChaCha8Rng,
}

impl VirtualUser {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Iterator for VirtualUser {
    type Item = Reply;

    fn next(&mut self) -> Option<Reply> {
        Some(Reply::from_bool(self.rng.gen_bool(0.5)))
    }
}

/// Answers follow-up questions during [`run_dialog`].
#[derive(Debug, Clone)]
pub enum UserOracle {
    Random(Box<VirtualUser>),
    /// Answers along one root-to-leaf path of a tree; questions off that
    /// path are an error.
    Scripted { answers: Vec<HistoryTurn> },
    Fixed { replies: Vec<Reply>, next: usize },
}

impl UserOracle {
    pub fn random(seed: u64) -> Self {
        UserOracle::Random(Box::new(VirtualUser::new(seed)))
    }

    pub fn scripted(tree: &DialogTree, path: &[Reply]) -> Self {
        let mut answers = Vec::new();
        let mut node = &tree.root;
        for r in path {
            let Node::Internal { followup, .. } = node else { break };
            answers.push(HistoryTurn::new(followup.clone(), *r));
            node = node.child(*r).expect("internal node has both children");
        }
        UserOracle::Scripted { answers }
    }

    pub fn fixed(replies: Vec<Reply>) -> Self {
        UserOracle::Fixed { replies, next: 0 }
    }

    pub fn reply(&mut self, question: &str) -> Result<Reply, PipelineError> {
        match self {
            UserOracle::Random(u) => Ok(u.next().expect("infinite stream")),
            UserOracle::Scripted { answers } => answers
                .iter()
                .find(|t| same_question(&t.follow_up_question, question))
                .map(|t| t.follow_up_answer)
                .ok_or_else(|| PipelineError::OracleCannotAnswer(question.to_string())),
            UserOracle::Fixed { replies, next } => {
                let r = replies.get(*next).copied().ok_or(PipelineError::OracleExhausted)?;
                *next += 1;
                Ok(r)
            }
        }
    }
}

/// Alternates [`step`] and oracle replies until a terminal answer. Each agent
/// output is one turn, timed in milliseconds.
pub fn run_dialog(mut state: SessionState, oracle: &mut UserOracle, c: Components<'_>) -> Result<Transcript, PipelineError> {
    let mut turns = Vec::new();
    loop {
        let start = Instant::now();
        let resp = step(&mut state, c)?;
        let elapsed_ms = start.elapsed().as_secs_f64() * 1000.0;
        if resp.answer.is_terminal() {
            turns.push(Turn { agent: resp.answer.clone(), user_reply: None, elapsed_ms });
            return Ok(Transcript::finish(turns, resp.answer).expect("terminal answer"));
        }
        let q = resp.answer.followup_text().unwrap_or_default().to_string();
        let reply = oracle.reply(&q)?;
        turns.push(Turn { agent: resp.answer, user_reply: Some(reply), elapsed_ms });
        state.record_reply(reply)?;
    }
}

/// Gold classifier and generator read off dialog trees: the tree is walked
/// using history answers; an unanswered node yields More and its question.
/// A question other than the tree's own is Irrelevant.
#[derive(Debug, Clone, Default)]
pub struct GoldTrees {
    pub trees: HashMap<String, DialogTree>,
}

impl GoldTrees {
    pub fn new(trees: impl IntoIterator<Item = DialogTree>) -> Self {
        Self { trees: trees.into_iter().map(|t| (t.tree_id.clone(), t)).collect() }
    }

    fn tree_for(&self, u: &Utterance) -> Option<&DialogTree> {
        self.trees
            .get(&u.tree_id)
            .or_else(|| self.trees.values().find(|t| t.rule_text == u.rule_text && same_question(&t.question, &u.question)))
    }

    /// Tree answer or pending question for `u`; `None` when irrelevant.
    pub fn walk<'a>(&'a self, u: &Utterance) -> Option<Result<Reply, &'a str>> {
        let tree = self.tree_for(u)?;
        if !same_question(&tree.question, &u.question) {
            return None;
        }
        let mut node = &tree.root;
        loop {
            match node {
                Node::Leaf { answer } => return Some(Ok(*answer)),
                Node::Internal { followup, yes, no } => {
                    match u.history.iter().find(|t| same_question(&t.follow_up_question, followup)) {
                        Some(t) => node = if t.follow_up_answer.as_bool() { yes } else { no },
                        None => return Some(Err(followup)),
                    }
                }
            }
        }
    }
}

impl TurnClassifier for GoldTrees {
    fn classify(&self, u: &Utterance, _logic: &RuleLogic) -> Decision {
        match self.walk(u) {
            None => Decision::Irrelevant,
            Some(Ok(r)) => Answer::from(r).decision(),
            Some(Err(_)) => Decision::More,
        }
    }
}

impl QuestionGenerator for GoldTrees {
    fn generate(&self, u: &Utterance, _logic: &RuleLogic) -> Result<GeneratedQuestion, FollowupError> {
        match self.walk(u) {
            Some(Err(q)) => Ok(GeneratedQuestion { text: q.to_string(), source_condition: None, source_span: None }),
            _ => Err(FollowupError::NothingToAsk),
        }
    }
}

/// Gold entailer: answers a follow-up from the recorded facts of the scenario
/// it is asked about, Neutral otherwise.
#[derive(Debug, Clone, Default)]
pub struct EvidenceEntailer {
    pub by_scenario: HashMap<String, Vec<HistoryTurn>>,
}

impl EvidenceEntailer {
    pub fn new(scenario: &str, facts: Vec<HistoryTurn>) -> Self {
        let mut by_scenario = HashMap::new();
        by_scenario.insert(scenario.trim().to_string(), facts);
        Self { by_scenario }
    }

    /// Collects `evidence` from scenario utterances.
    pub fn from_utterances(utterances: &[Utterance]) -> Self {
        let mut by_scenario: HashMap<String, Vec<HistoryTurn>> = HashMap::new();
        for u in utterances.iter().filter(|u| u.has_scenario()) {
            let facts = by_scenario.entry(u.scenario.trim().to_string()).or_default();
            for t in u.evidence.iter().flatten() {
                if !facts.iter().any(|f| same_question(&f.follow_up_question, &t.follow_up_question)) {
                    facts.push(t.clone());
                }
            }
        }
        Self { by_scenario }
    }
}

impl Entailer for EvidenceEntailer {
    fn entail(&self, premise: &str, hypothesis: &str) -> EntailmentLabel {
        self.by_scenario
            .get(premise.trim())
            .and_then(|facts| facts.iter().find(|t| same_question(&t.follow_up_question, hypothesis)))
            .map_or(EntailmentLabel::Neutral, |t| EntailmentLabel::from_reply(t.follow_up_answer))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no utterances with gold answers")]
    Empty,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineEvaluation {
    pub report: MetricReport,
    /// One prediction per scored utterance; `None` when the pipeline failed.
    pub predictions: Vec<Option<Answer>>,
}

/// Runs one pipeline turn on every utterance with a gold answer and scores
/// it. Follow-ups count as More for accuracy; BLEU compares predicted and
/// gold follow-up texts where the gold is a follow-up and the prediction is
/// More (a failed step scores as an empty question). Failed steps are More.
pub fn evaluate_pipeline(dataset: &[Utterance], c: Components<'_>, strategy: Strategy) -> Result<PipelineEvaluation, EvalError> {
    let scored: Vec<&Utterance> = dataset.iter().filter(|u| u.answer.is_some()).collect();
    if scored.is_empty() {
        return Err(EvalError::Empty);
    }
    let predictions: Vec<Option<Answer>> = par::map(strategy, &scored, |u| {
        let mut input = (*u).clone();
        input.answer = None;
        let logic = parse_rule(&input.rule_text).unwrap_or_else(|_| RuleLogic::empty());
        let mut state = SessionState::new(input, logic);
        step(&mut state, c).ok().map(|r| r.answer)
    });
    let golds: Vec<Decision> = scored.iter().map(|u| u.answer.as_ref().expect("filtered").decision()).collect();
    let preds: Vec<Decision> = predictions.iter().map(|p| p.as_ref().map_or(Decision::More, Answer::decision)).collect();
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (u, p) in scored.iter().zip(&predictions) {
        if let Some(gold) = u.answer.as_ref().and_then(Answer::followup_text) {
            match p {
                Some(Answer::FollowUp(text)) => pairs.push((text.clone(), gold.to_string())),
                None => pairs.push((String::new(), gold.to_string())),
                Some(_) => {}
            }
        }
    }
    let report = MetricReport::new("e2e", scored.len()).with_classes(&preds, &golds)?.with_bleu(&pairs)?;
    Ok(PipelineEvaluation { report, predictions })
}
