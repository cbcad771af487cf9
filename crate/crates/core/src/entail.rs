//! Scenario interpretation as three-way entailment between a scenario and a
//! follow-up question.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dialog::{Answer, DialogTree, HistoryTurn, Node, Reply, Utterance};
use crate::linear::{Example, LinearClassifier, ModelError, TrainConfig};
use crate::rules::detect_negation;
use crate::rules::lexicon::find_phrase;
use crate::text::{content_words, jaccard, same_question, tokenize};
use crate::tfidf::{concat_blocks, l2_normalize, SparseVec, TfidfModel};

/// Default content-word Jaccard floor below which a pair is Neutral.
pub const DEFAULT_OVERLAP_FLOOR: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntailmentLabel {
    Entailment,
    Contradiction,
    Neutral,
}

impl EntailmentLabel {
    pub const ALL: [EntailmentLabel; 3] =
        [EntailmentLabel::Entailment, EntailmentLabel::Contradiction, EntailmentLabel::Neutral];

    pub fn name(self) -> &'static str {
        match self {
            EntailmentLabel::Entailment => "Entailment",
            EntailmentLabel::Contradiction => "Contradiction",
            EntailmentLabel::Neutral => "Neutral",
        }
    }

    /// Entailment answers the follow-up Yes, Contradiction No.
    pub fn reply(self) -> Option<Reply> {
        match self {
            EntailmentLabel::Entailment => Some(Reply::Yes),
            EntailmentLabel::Contradiction => Some(Reply::No),
            EntailmentLabel::Neutral => None,
        }
    }

    pub fn from_reply(r: Reply) -> Self {
        match r {
            Reply::Yes => EntailmentLabel::Entailment,
            Reply::No => EntailmentLabel::Contradiction,
        }
    }
}

impl fmt::Display for EntailmentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntailmentInstance {
    pub premise: String,
    pub hypothesis: String,
    pub label: EntailmentLabel,
}

/// Decides whether a scenario answers a follow-up question.
pub trait Entailer: Send + Sync {
    fn entail(&self, premise: &str, hypothesis: &str) -> EntailmentLabel;
}

/// Phrase pairs that contradict each other across premise and hypothesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Antonyms {
    pub pairs: Vec<(Vec<String>, Vec<String>)>,
}

impl Antonyms {
    /// One `left | right` pair per line; `#` comments.
    pub fn parse(source: &str) -> Self {
        let pairs = source
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .filter_map(|l| l.split_once('|'))
            .map(|(a, b)| (tokenize(a), tokenize(b)))
            .filter(|(a, b)| !a.is_empty() && !b.is_empty())
            .collect();
        Self { pairs }
    }

    pub fn builtin() -> &'static Antonyms {
        static A: OnceLock<Antonyms> = OnceLock::new();
        A.get_or_init(|| Antonyms::parse(include_str!("../data/antonyms.txt")))
    }

    /// Whether one side of a pair occurs in the premise and the other in the
    /// hypothesis, with the hypothesis not also containing the premise side.
    pub fn fires(&self, premise: &str, hypothesis: &str) -> bool {
        let p = tokenize(premise);
        let h = tokenize(hypothesis);
        let has = |toks: &[String], phrase: &[String]| find_phrase(toks, phrase).is_some();
        self.pairs.iter().any(|(a, b)| {
            (has(&p, a) && has(&h, b) && !has(&h, a)) || (has(&p, b) && has(&h, a) && !has(&h, b))
        })
    }
}

/// Lexical entailment. Pairs with content-word Jaccard below `floor` and no
/// antonym cue are Neutral. Otherwise a polarity difference (exactly one side
/// negated) or an antonym cue gives Contradiction, anything else Entailment.
pub fn entail_heuristic_with(premise: &str, hypothesis: &str, floor: f64, antonyms: &Antonyms) -> EntailmentLabel {
    let overlap = jaccard(&content_words(premise), &content_words(hypothesis));
    let antonym = antonyms.fires(premise, hypothesis);
    if overlap < floor && !antonym {
        return EntailmentLabel::Neutral;
    }
    if antonym || detect_negation(premise) != detect_negation(hypothesis) {
        EntailmentLabel::Contradiction
    } else {
        EntailmentLabel::Entailment
    }
}

pub fn entail_heuristic(premise: &str, hypothesis: &str) -> EntailmentLabel {
    entail_heuristic_with(premise, hypothesis, DEFAULT_OVERLAP_FLOOR, Antonyms::builtin())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicEntailer {
    pub floor: f64,
}

impl Default for HeuristicEntailer {
    fn default() -> Self {
        Self { floor: DEFAULT_OVERLAP_FLOOR }
    }
}

impl Entailer for HeuristicEntailer {
    fn entail(&self, premise: &str, hypothesis: &str) -> EntailmentLabel {
        if premise.trim().is_empty() {
            return EntailmentLabel::Neutral;
        }
        entail_heuristic_with(premise, hypothesis, self.floor, Antonyms::builtin())
    }
}

const ENTAIL_FORMAT: &str = "rulechat-entailment-lr/1";
const LEXICAL_FEATURES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailmentModel {
    pub format: String,
    pub tfidf: TfidfModel,
    pub linear: LinearClassifier,
}

fn entail_features(tfidf: &TfidfModel, premise: &str, hypothesis: &str) -> SparseVec {
    let p = tfidf.vectorize(premise);
    let h = tfidf.vectorize(hypothesis);
    let shared: SparseVec = p
        .iter()
        .filter_map(|&(i, a)| h.iter().find(|(j, _)| *j == i).map(|&(_, b)| (i, a.min(b))))
        .collect();
    let v = tfidf.dim();
    let mut x = concat_blocks(&[p, h, shared], v);
    l2_normalize(&mut x);
    let neg_p = detect_negation(premise);
    let neg_h = detect_negation(hypothesis);
    let lexical = [
        jaccard(&content_words(premise), &content_words(hypothesis)),
        f64::from(u8::from(Antonyms::builtin().fires(premise, hypothesis))),
        f64::from(u8::from(neg_p)),
        f64::from(u8::from(neg_h)),
        f64::from(u8::from(neg_p != neg_h)),
    ];
    x.extend(lexical.iter().enumerate().filter(|(_, f)| **f != 0.0).map(|(k, f)| (3 * v + k, *f)));
    x
}

fn label_classes() -> Vec<String> {
    EntailmentLabel::ALL.iter().map(|l| l.name().to_string()).collect()
}

/// Trains the three-way model on premise, hypothesis and shared-token tf-idf
/// blocks plus lexical overlap, antonym and negation features.
pub fn train_entailment(instances: &[EntailmentInstance], cfg: &TrainConfig) -> Result<EntailmentModel, ModelError> {
    let docs: Vec<&str> = instances.iter().flat_map(|i| [i.premise.as_str(), i.hypothesis.as_str()]).collect();
    let tfidf = TfidfModel::fit(&docs);
    let data: Vec<Example> = crate::par::map(cfg.strategy, instances, |i| Example {
        features: entail_features(&tfidf, &i.premise, &i.hypothesis),
        label: i.label as usize,
    });
    let linear = LinearClassifier::train(label_classes(), tfidf.dim() * 3 + LEXICAL_FEATURES, &data, cfg)?;
    Ok(EntailmentModel { format: ENTAIL_FORMAT.into(), tfidf, linear })
}

/// Predicted label and probabilities in [`EntailmentLabel::ALL`] order.
pub fn entail(model: &EntailmentModel, premise: &str, hypothesis: &str) -> (EntailmentLabel, Vec<f64>) {
    let (i, p) = model
        .linear
        .predict(&entail_features(&model.tfidf, premise, hypothesis))
        .expect("features are built from the model's own vocabulary");
    (EntailmentLabel::ALL[i], p)
}

impl EntailmentModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let m: EntailmentModel = serde_json::from_slice(&std::fs::read(path)?)?;
        if m.format != ENTAIL_FORMAT {
            return Err(ModelError::Format { found: m.format, expected: ENTAIL_FORMAT.into() });
        }
        let dim = m.tfidf.dim() * 3 + LEXICAL_FEATURES;
        if m.linear.dim != dim || m.linear.classes != label_classes() {
            return Err(ModelError::DimensionMismatch { index: m.linear.dim, dim });
        }
        Ok(m)
    }
}

impl Entailer for EntailmentModel {
    fn entail(&self, premise: &str, hypothesis: &str) -> EntailmentLabel {
        if premise.trim().is_empty() {
            return EntailmentLabel::Neutral;
        }
        entail(self, premise, hypothesis).0
    }
}

/// Follow-ups a scenario answered, recovered from the dialog tree.
///
/// Each utterance with this scenario is walked from the root: questions found
/// in its history follow the recorded answer; a question missing from the
/// history (and not the utterance's own gold follow-up) was skipped because
/// the scenario answered it, and the branch is the one whose subtree still
/// leads to the gold answer and the remaining history. Walks stop where the
/// branch is ambiguous.
pub fn infer_provenance<'a>(tree: &DialogTree, utterances: impl IntoIterator<Item = &'a Utterance>) -> Vec<HistoryTurn> {
    fn reaches(node: &Node, gold: &Answer, pending: &[&str]) -> bool {
        let qs = DialogTree::subtree_questions(node);
        let has_q = |q: &str| qs.iter().any(|s| same_question(s, q));
        let gold_ok = match gold {
            Answer::FollowUp(f) => has_q(f),
            Answer::Yes | Answer::No => leaf_with(node, gold),
            Answer::Irrelevant => false,
        };
        gold_ok && pending.iter().all(|q| has_q(q))
    }
    fn leaf_with(node: &Node, gold: &Answer) -> bool {
        match node {
            Node::Leaf { answer } => Answer::from(*answer) == *gold,
            Node::Internal { yes, no, .. } => leaf_with(yes, gold) || leaf_with(no, gold),
        }
    }
    let mut out: Vec<HistoryTurn> = Vec::new();
    for u in utterances {
        let Some(gold) = &u.answer else { continue };
        let mut node = &tree.root;
        let mut used = vec![false; u.history.len()];
        while let Node::Internal { followup, yes, no } = node {
            if let Some(k) = u.history.iter().position(|t| same_question(&t.follow_up_question, followup)) {
                used[k] = true;
                node = if u.history[k].follow_up_answer.as_bool() { yes } else { no };
                continue;
            }
            if gold.followup_text().is_some_and(|f| same_question(f, followup)) {
                break;
            }
            let pending: Vec<&str> = u
                .history
                .iter()
                .zip(&used)
                .filter(|(_, u)| !**u)
                .map(|(t, _)| t.follow_up_question.as_str())
                .collect();
            let branch = match (reaches(yes, gold, &pending), reaches(no, gold, &pending)) {
                (true, false) => Reply::Yes,
                (false, true) => Reply::No,
                _ => break,
            };
            if !out.iter().any(|t| same_question(&t.follow_up_question, followup)) {
                out.push(HistoryTurn::new(followup.clone(), branch));
            }
            node = if branch.as_bool() { yes } else { no };
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DerivedEntailment {
    pub instances: Vec<EntailmentInstance>,
    /// Scenario utterances without a gold answer.
    pub skipped_without_gold: usize,
}

/// One instance per scenario utterance whose gold answer is a follow-up:
/// Entailment or Contradiction when the scenario's provenance answers that
/// follow-up Yes or No, Neutral when it does not. Provenance comes from the
/// utterance's `evidence`, else from [`infer_provenance`] over its tree.
pub fn derive_entailment_corpus(utterances: &[Utterance], trees: &HashMap<String, DialogTree>) -> DerivedEntailment {
    let mut groups: HashMap<(&str, &str), Vec<&Utterance>> = HashMap::new();
    for u in utterances.iter().filter(|u| u.has_scenario() && u.evidence.is_none()) {
        groups.entry((u.tree_id.as_str(), u.scenario.as_str())).or_default().push(u);
    }
    let inferred: HashMap<(&str, &str), Vec<HistoryTurn>> = groups
        .into_iter()
        .filter_map(|(key, us)| trees.get(key.0).map(|t| (key, infer_provenance(t, us))))
        .collect();
    let mut out = DerivedEntailment::default();
    for u in utterances.iter().filter(|u| u.has_scenario()) {
        let Some(gold) = &u.answer else {
            out.skipped_without_gold += 1;
            continue;
        };
        let Some(f) = gold.followup_text() else { continue };
        let provenance = u.evidence.as_deref().or_else(|| inferred.get(&(u.tree_id.as_str(), u.scenario.as_str())).map(Vec::as_slice));
        let label = provenance
            .and_then(|p| p.iter().find(|t| same_question(&t.follow_up_question, f)))
            .map_or(EntailmentLabel::Neutral, |t| EntailmentLabel::from_reply(t.follow_up_answer));
        out.instances.push(EntailmentInstance { premise: u.scenario.clone(), hypothesis: f.to_string(), label });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::fixtures::*;
    use crate::dialog::enumerate_utterances;

    #[test]
    fn heuristic_examples() {
        assert_eq!(
            entail_heuristic("My wife just recently reached the age for state pension", "Has your wife reached state pension age?"),
            EntailmentLabel::Entailment
        );
        assert_eq!(
            entail_heuristic(
                "I am currently out of work and looking for a job",
                "Are you working or preparing for work?"
            ),
            EntailmentLabel::Contradiction
        );
        assert_eq!(entail_heuristic("I like green apples", "Are you over 60?"), EntailmentLabel::Neutral);
        assert_eq!(
            entail_heuristic("I don't have a chargeable gain on the sale", "Do you have a chargeable gain?"),
            EntailmentLabel::Contradiction
        );
    }

    fn inst(p: &str, h: &str, l: EntailmentLabel) -> EntailmentInstance {
        EntailmentInstance { premise: p.into(), hypothesis: h.into(), label: l }
    }

    fn toy() -> Vec<EntailmentInstance> {
        vec![
            inst("I live in Wales with my husband", "Do you live in Wales?", EntailmentLabel::Entailment),
            inst("I am 64 and retired", "Are you retired?", EntailmentLabel::Entailment),
            inst("I have never been married", "Are you married?", EntailmentLabel::Contradiction),
            inst("I do not own a car", "Do you own a car?", EntailmentLabel::Contradiction),
            inst("My dog is called Rex", "Do you pay council tax?", EntailmentLabel::Neutral),
            inst("The weather is nice today", "Is your income over 100000?", EntailmentLabel::Neutral),
        ]
    }

    #[test]
    fn lr_trains_and_round_trips() {
        let data = toy();
        let m = train_entailment(&data, &TrainConfig::default()).unwrap();
        for i in &data {
            let (l, p) = entail(&m, &i.premise, &i.hypothesis);
            assert_eq!(l, i.label, "{i:?}");
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(train_entailment(&data, &TrainConfig::default()).unwrap(), m);
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path().join("e.json")).unwrap();
        assert_eq!(EntailmentModel::load(dir.path().join("e.json")).unwrap(), m);
        let one: Vec<_> = data.into_iter().filter(|i| i.label == EntailmentLabel::Neutral).collect();
        assert!(matches!(train_entailment(&one, &TrainConfig::default()), Err(ModelError::MissingClasses(_))));
    }

    fn scen(gold: &str, evidence: &[(&str, Reply)]) -> Utterance {
        let mut u = enumerate_utterances(&ni_tree()).remove(0);
        u.scenario = "I work for a company in Canada.".into();
        u.answer = Some(Answer::parse(gold).unwrap());
        u.evidence = Some(evidence.iter().map(|(q, a)| HistoryTurn::new(*q, *a)).collect());
        u
    }

    #[test]
    fn derive_from_evidence() {
        let ds = vec![
            scen(NI_EEA, &[(NI_EEA, Reply::Yes)]),
            scen(NI_WEEKS, &[(NI_WEEKS, Reply::Yes), (NI_EEA, Reply::No)]),
            scen(NI_EEA, &[(NI_EEA, Reply::No)]),
            scen(NI_WEEKS, &[(NI_WEEKS, Reply::No)]),
            scen(NI_EEA, &[(NI_WEEKS, Reply::No)]),
            scen(NI_WEEKS, &[]),
            scen("Yes", &[(NI_EEA, Reply::Yes)]),
        ];
        let got = derive_entailment_corpus(&ds, &HashMap::new());
        let labels: Vec<EntailmentLabel> = got.instances.iter().map(|i| i.label).collect();
        use EntailmentLabel::*;
        assert_eq!(labels, vec![Entailment, Entailment, Contradiction, Contradiction, Neutral, Neutral]);
        let mut no_gold = scen(NI_EEA, &[]);
        no_gold.answer = None;
        let got = derive_entailment_corpus(&[no_gold], &HashMap::new());
        assert_eq!(got.skipped_without_gold, 1);
        assert!(derive_entailment_corpus(&enumerate_utterances(&ni_tree()), &HashMap::new()).instances.is_empty());
    }

    #[test]
    fn provenance_inferred_from_skipped_questions() {
        let tree = ni_tree();
        // Scenario answered the EEA question Yes: the utterance starts at the
        // weeks question with empty history.
        let mut u = enumerate_utterances(&tree).remove(0);
        u.scenario = "I work for a Canadian firm.".into();
        u.answer = Some(Answer::follow_up(NI_WEEKS).unwrap());
        let mut other = u.clone();
        other.answer = Some(Answer::follow_up(NI_EEA).unwrap());
        let prov = infer_provenance(&tree, [&u]);
        assert_eq!(prov, vec![HistoryTurn::new(NI_EEA, Reply::Yes)]);
        let mut trees = HashMap::new();
        trees.insert("ni".to_string(), tree);
        let mut ds = vec![u.clone()];
        // A second utterance of the same scenario asks about EEA itself.
        other.scenario = u.scenario.clone();
        ds.push(other);
        let got = derive_entailment_corpus(&ds, &trees);
        assert_eq!(got.instances[0].label, EntailmentLabel::Neutral);
        assert_eq!(got.instances[1].label, EntailmentLabel::Entailment);
    }
}
