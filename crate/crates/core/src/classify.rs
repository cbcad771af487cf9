//! Turn-level decision: Yes / No / Irrelevant / More.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dialog::{Decision, HistoryTurn, Utterance};
use crate::linear::{Example, LinearClassifier, ModelError, TrainConfig};
use crate::rules::{detect_negation, RuleLogic};
use crate::text::{is_stopword, jaccard, stem, tokenize};
use crate::tfidf::{concat_blocks, l2_normalize, SparseVec, TfidfModel};

/// Minimum Jaccard overlap for a history follow-up to count as asking about a
/// condition.
pub const ALIGN_MIN_JACCARD: f64 = 0.3;

/// Reserved token separating history turns in the LR text rendering.
pub const HISTORY_DELIMITER: &str = "histsep";

/// Anything that decides a turn.
pub trait TurnClassifier: Send + Sync {
    fn classify(&self, u: &Utterance, logic: &RuleLogic) -> Decision;
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicConfig {
    /// Fraction of question content words that must occur in the rule text.
    pub relevance_threshold: f64,
    pub stopwords: HashSet<String>,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self { relevance_threshold: 0.1, stopwords: HashSet::new() }
    }
}

impl HeuristicConfig {
    /// Stemmed words that are neither built-in nor configured stopwords.
    pub fn content_words(&self, text: &str) -> HashSet<String> {
        tokenize(text)
            .into_iter()
            .filter(|t| !is_stopword(t) && !self.stopwords.contains(t))
            .map(|t| stem(&t))
            .collect()
    }

    /// Share of the question's content words found in the rule text.
    pub fn relevance(&self, question: &str, rule_text: &str) -> f64 {
        let q = self.content_words(question);
        if q.is_empty() {
            return 0.0;
        }
        let r = self.content_words(rule_text);
        q.intersection(&r).count() as f64 / q.len() as f64
    }
}

/// Maps history answers onto conditions. Pairs are taken greedily by
/// descending Jaccard overlap (at least [`ALIGN_MIN_JACCARD`]); ties go to the
/// earlier condition, then the earlier history turn. Returns one entry per
/// condition.
pub fn align_history(logic: &RuleLogic, history: &[HistoryTurn]) -> Vec<Option<bool>> {
    let cfg = HeuristicConfig::default();
    let conds: Vec<HashSet<String>> = logic.conditions.iter().map(|c| cfg.content_words(&c.text)).collect();
    let hist: Vec<HashSet<String>> = history.iter().map(|h| cfg.content_words(&h.follow_up_question)).collect();
    let mut pairs = Vec::new();
    for (ci, c) in conds.iter().enumerate() {
        for (hi, h) in hist.iter().enumerate() {
            let s = jaccard(c, h);
            if s >= ALIGN_MIN_JACCARD {
                pairs.push((s, ci, hi));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; conds.len()];
    let mut used = vec![false; hist.len()];
    for (_, ci, hi) in pairs {
        if out[ci].is_none() && !used[hi] {
            out[ci] = Some(history[hi].follow_up_answer.as_bool());
            used[hi] = true;
        }
    }
    out
}

/// Rule-based decision. Low question/rule overlap gives Irrelevant; otherwise
/// the rule is evaluated three-valued over the aligned history. A determined
/// value is flipped by the rule's own negation and again when the question is
/// negated; an undetermined one gives More.
pub fn heuristic_classify(u: &Utterance, logic: &RuleLogic, cfg: &HeuristicConfig) -> Decision {
    if cfg.relevance(&u.question, &u.rule_text) < cfg.relevance_threshold {
        return Decision::Irrelevant;
    }
    let assignment = align_history(logic, &u.history);
    match logic.outcome(&assignment) {
        None => Decision::More,
        Some(v) => {
            if v != detect_negation(&u.question) {
                Decision::Yes
            } else {
                Decision::No
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Heuristic {
    pub config: HeuristicConfig,
}

impl TurnClassifier for Heuristic {
    fn classify(&self, u: &Utterance, logic: &RuleLogic) -> Decision {
        heuristic_classify(u, logic, &self.config)
    }
}

/// History as text: `f ? answer` turns joined by [`HISTORY_DELIMITER`].
pub fn render_history(history: &[HistoryTurn]) -> String {
    history
        .iter()
        .map(|t| format!("{} ? {}", t.follow_up_question, t.follow_up_answer))
        .collect::<Vec<_>>()
        .join(&format!(" {HISTORY_DELIMITER} "))
}

const SURFACE_FORMAT: &str = "rulechat-surface-lr/1";

/// Tf-idf features of rule text, question and history (three blocks over one
/// vocabulary, L2-normalized as a whole) fed to a linear classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceLr {
    pub format: String,
    pub tfidf: TfidfModel,
    pub linear: LinearClassifier,
}

pub fn decision_classes() -> Vec<String> {
    Decision::ALL.iter().map(|d| d.name().to_string()).collect()
}

fn surface_features(tfidf: &TfidfModel, u: &Utterance) -> SparseVec {
    let blocks =
        [tfidf.vectorize(&u.rule_text), tfidf.vectorize(&u.question), tfidf.vectorize(&render_history(&u.history))];
    let mut x = concat_blocks(&blocks, tfidf.dim());
    l2_normalize(&mut x);
    x
}

/// Fits tf-idf on the training texts and trains the four-way classifier.
pub fn train_surface_lr(examples: &[(Utterance, Decision)], cfg: &TrainConfig) -> Result<SurfaceLr, ModelError> {
    let mut docs = Vec::with_capacity(examples.len() * 3);
    for (u, _) in examples {
        docs.push(u.rule_text.clone());
        docs.push(u.question.clone());
        docs.push(render_history(&u.history));
    }
    let tfidf = TfidfModel::fit(&docs);
    let data: Vec<Example> = crate::par::map(cfg.strategy, examples, |(u, d)| Example {
        features: surface_features(&tfidf, u),
        label: d.index(),
    });
    let linear = LinearClassifier::train(decision_classes(), tfidf.dim() * 3, &data, cfg)?;
    Ok(SurfaceLr { format: SURFACE_FORMAT.to_string(), tfidf, linear })
}

/// Predicted decision and per-class probabilities in [`Decision::ALL`] order.
pub fn lr_classify(model: &SurfaceLr, u: &Utterance) -> Result<(Decision, Vec<f64>), ModelError> {
    let (i, p) = model.linear.predict(&surface_features(&model.tfidf, u))?;
    Ok((Decision::ALL[i], p))
}

impl SurfaceLr {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let m: SurfaceLr = serde_json::from_slice(&std::fs::read(path)?)?;
        if m.format != SURFACE_FORMAT {
            return Err(ModelError::Format { found: m.format, expected: SURFACE_FORMAT.into() });
        }
        if m.linear.dim != m.tfidf.dim() * 3 || m.linear.classes != decision_classes() {
            return Err(ModelError::DimensionMismatch { index: m.linear.dim, dim: m.tfidf.dim() * 3 });
        }
        Ok(m)
    }
}

impl TurnClassifier for SurfaceLr {
    fn classify(&self, u: &Utterance, _logic: &RuleLogic) -> Decision {
        // Features come from this model's own vocabulary, so indices are in range.
        lr_classify(self, u).map(|(d, _)| d).unwrap_or(Decision::More)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::fixtures::*;
    use crate::dialog::{make_utterance, Reply};
    use crate::rules::parse_rule;

    fn utt(q: &str, r: &str, h: &[(&str, Reply)]) -> Utterance {
        let history = h.iter().map(|(f, a)| HistoryTurn::new(*f, *a)).collect();
        make_utterance(q, r, history, "").unwrap()
    }

    #[test]
    fn fig1_cases() {
        let logic = parse_rule(NI_RULE).unwrap();
        assert_eq!(logic.conditions.len(), 2);
        let cfg = HeuristicConfig::default();
        let empty = utt(NI_QUESTION, NI_RULE, &[]);
        assert_eq!(heuristic_classify(&empty, &logic, &cfg), Decision::More);
        let both = utt(NI_QUESTION, NI_RULE, &[(NI_WEEKS, Reply::Yes), (NI_EEA, Reply::Yes)]);
        assert_eq!(heuristic_classify(&both, &logic, &cfg), Decision::Yes);
        let no = utt(NI_QUESTION, NI_RULE, &[(NI_EEA, Reply::No)]);
        assert_eq!(heuristic_classify(&no, &logic, &cfg), Decision::No);
    }

    #[test]
    fn negative_question_is_irrelevant() {
        let rule = "You must also wear protective headgear if you are using a learner's permit or are within 1 year of obtaining a motorcycle license.";
        let u = utt("Can I get Working Tax Credit?", rule, &[]);
        let logic = parse_rule(rule).unwrap();
        assert_eq!(heuristic_classify(&u, &logic, &HeuristicConfig::default()), Decision::Irrelevant);
        // Irrelevance ignores history.
        let u = utt("Can I get Working Tax Credit?", rule, &[("Are you using a learner's permit?", Reply::Yes)]);
        assert_eq!(heuristic_classify(&u, &logic, &HeuristicConfig::default()), Decision::Irrelevant);
    }

    #[test]
    fn question_negation_flips() {
        let logic = parse_rule(NI_RULE).unwrap();
        let q = "Will I no longer need to pay National Insurance?";
        assert!(detect_negation(q));
        let u = utt(q, NI_RULE, &[(NI_WEEKS, Reply::Yes), (NI_EEA, Reply::Yes)]);
        assert_eq!(heuristic_classify(&u, &logic, &HeuristicConfig::default()), Decision::No);
    }

    #[test]
    fn never_more_when_fully_aligned() {
        let rule = "You qualify if one of the following applies:\n* you're over 60\n* you're disabled\n* you care for a child";
        let logic = parse_rule(rule).unwrap();
        let qs = ["Are you over 60?", "Are you disabled?", "Do you care for a child?"];
        for mask in 0..8u32 {
            let h: Vec<(&str, Reply)> = qs.iter().enumerate().map(|(i, q)| (*q, Reply::from_bool(mask >> i & 1 == 1))).collect();
            let u = utt("Do I qualify?", rule, &h);
            let d = heuristic_classify(&u, &logic, &HeuristicConfig::default());
            assert_ne!(d, Decision::More, "mask {mask}");
            assert_eq!(d == Decision::Yes, mask != 0);
        }
    }

    #[test]
    fn surface_lr_round_trip() {
        let mut ex = Vec::new();
        let words = ["alpha", "bravo", "charlie", "delta"];
        for (k, d) in Decision::ALL.iter().enumerate() {
            for j in 0..3 {
                let u = utt(&format!("{} question {j}", words[k]), &format!("{} rule", words[k]), &[]);
                ex.push((u, *d));
            }
        }
        let m = train_surface_lr(&ex, &TrainConfig::default()).unwrap();
        for (u, d) in &ex {
            let (pred, p) = lr_classify(&m, u).unwrap();
            assert_eq!(pred, *d);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        assert_eq!(SurfaceLr::load(&path).unwrap(), m);
    }
}
