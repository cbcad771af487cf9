#![allow(dead_code)]

use std::path::PathBuf;

use rulechat_core::dialog::{Answer, DialogTree, Utterance};
use rulechat_core::followup::{baseline_sentence, generate_followup, SentenceChoice};
use rulechat_core::classify::{heuristic_classify, HeuristicConfig};
use rulechat_core::metrics::corpus_bleu;
use rulechat_core::rules::parse_rule;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub struct SuiteItem {
    pub utterance: Utterance,
    pub categories: Vec<String>,
}

pub fn load_suite() -> Vec<SuiteItem> {
    let raw = std::fs::read_to_string(fixture("heuristic_suite.jsonl")).unwrap();
    raw.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            let categories = v["categories"].as_array().unwrap().iter().map(|c| c.as_str().unwrap().to_string()).collect();
            SuiteItem { utterance: serde_json::from_value(v).unwrap(), categories }
        })
        .collect()
}

pub fn load_trees(name: &str) -> Vec<DialogTree> {
    serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

pub struct SuiteScores {
    pub micro: f64,
    pub generator_bleu1: f64,
    pub first_bleu1: f64,
    pub last_bleu1: f64,
    pub misses: Vec<String>,
}

/// Classifier accuracy over the suite and BLEU-1 of each generator against
/// the gold follow-ups.
pub fn score_suite(items: &[SuiteItem]) -> SuiteScores {
    let cfg = HeuristicConfig::default();
    let mut correct = 0;
    let mut misses = Vec::new();
    let (mut gen, mut first, mut last) = (Vec::new(), Vec::new(), Vec::new());
    for it in items {
        let u = &it.utterance;
        let gold = u.answer.clone().unwrap();
        let logic = parse_rule(&u.rule_text).unwrap();
        let mut input = u.clone();
        input.answer = None;
        let d = heuristic_classify(&input, &logic, &cfg);
        if d == gold.decision() {
            correct += 1;
        } else {
            misses.push(format!("{}: predicted {} gold {}", u.utterance_id, d.name(), gold.decision().name()));
        }
        if let Answer::FollowUp(g) = &gold {
            let text = generate_followup(&input, &logic).map(|q| q.text).unwrap_or_default();
            gen.push((text, g.clone()));
            first.push((baseline_sentence(&u.rule_text, SentenceChoice::First).unwrap(), g.clone()));
            last.push((baseline_sentence(&u.rule_text, SentenceChoice::Last).unwrap(), g.clone()));
        }
    }
    SuiteScores {
        micro: correct as f64 / items.len() as f64,
        generator_bleu1: corpus_bleu(&gen, 1).unwrap(),
        first_bleu1: corpus_bleu(&first, 1).unwrap(),
        last_bleu1: corpus_bleu(&last, 1).unwrap(),
        misses,
    }
}

/// Every node of every fixture tree as an utterance, plus scenario variants:
/// each utterance below a Yes to the root question is repeated with that
/// answer moved from the history into a scenario.
pub fn scenario_utterances(trees: &[DialogTree]) -> Vec<Utterance> {
    let mut out = Vec::new();
    for t in trees {
        for u in rulechat_core::dialog::enumerate_utterances(t) {
            let moved = u.history.first().filter(|h| h.follow_up_answer == rulechat_core::dialog::Reply::Yes).cloned();
            if let Some(first) = moved {
                let mut s = u.clone();
                s.utterance_id = format!("{}:s", u.utterance_id);
                s.history.remove(0);
                s.scenario = format!("The answer to \"{}\" is yes for me.", first.follow_up_question);
                s.evidence = Some(vec![first]);
                out.push(s);
            }
            out.push(u);
        }
    }
    out
}
