mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rulechat_core::corpus::*;
use rulechat_core::dialog::{enumerate_utterances, make_utterance, Answer, DialogTree, HistoryTurn, Node, Reply, Utterance};
use rulechat_core::entail::derive_entailment_corpus;

#[test]
fn load_reports_malformed_line() {
    let (ds, report) = load_dataset(common::fixture("corpus_small.jsonl"), &KeyMap::default()).unwrap();
    assert_eq!(ds.utterances.len(), 6);
    assert_eq!(report.errors.len(), 1);
    assert_eq!(report.errors[0].line, 4);
    assert_eq!(ds.trees.len(), 1);
    assert_eq!(ds.trees["ni"].depth(), 2);
}

#[test]
fn load_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "\n").unwrap();
    assert!(matches!(load_dataset(&empty, &KeyMap::default()), Err(CorpusError::Empty(_))));
    assert!(matches!(load_dataset(dir.path().join("missing.jsonl"), &KeyMap::default()), Err(CorpusError::Io { .. })));
    let bad = dir.path().join("bad.jsonl");
    let good = std::fs::read_to_string(common::fixture("corpus_small.jsonl")).unwrap();
    std::fs::write(&bad, format!("{good}not json\n")).unwrap();
    // 2 bad of 8 is above a tenth.
    assert!(matches!(load_dataset(&bad, &KeyMap::default()), Err(CorpusError::Rejected { invalid: 2, total: 8 })));
}

#[test]
fn load_json_array_with_evidence() {
    let trees = common::load_trees("trees.json");
    let us = common::scenario_utterances(&trees[..3]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ds.json");
    std::fs::write(&path, serde_json::to_string(&us).unwrap()).unwrap();
    let (ds, report) = load_dataset(&path, &KeyMap::default()).unwrap();
    assert!(report.errors.is_empty() && report.tree_errors.is_empty());
    assert_eq!(report.dropped_unreachable, 0);
    assert_eq!(ds.utterances.len(), us.len());
    assert!(ds.scenarios.iter().all(|s| !s.inferred && s.provenance.len() == 1));
}

#[test]
fn provenance_inferred_when_missing() {
    let trees = common::load_trees("trees.json");
    let mut us = common::scenario_utterances(&trees);
    for u in &mut us {
        u.evidence = None;
    }
    let (ds, errors, _) = Dataset::from_utterances(us.clone());
    assert!(errors.is_empty());
    let with = common::scenario_utterances(&trees);
    let (gold, _, _) = Dataset::from_utterances(with);
    let mut recovered = 0;
    for s in &ds.scenarios {
        assert!(s.inferred);
        let truth = gold.provenance(&s.tree_id, &s.scenario).unwrap();
        // Inference never invents an answer; it may stop where the tree is ambiguous.
        assert!(s.provenance.iter().all(|t| truth.contains(t)), "{}", s.tree_id);
        recovered += usize::from(s.provenance == truth);
    }
    assert!(recovered * 2 > ds.scenarios.len(), "{recovered} of {}", ds.scenarios.len());
    let derived = derive_entailment_corpus(&ds.utterances, &ds.trees_map());
    assert_eq!(derived.instances.len(), ds.utterances.iter().filter(|u| u.has_scenario() && u.answer.as_ref().is_some_and(|a| a.followup_text().is_some())).count());
}

#[test]
fn unreachable_scenarios_dropped() {
    let trees = common::load_trees("trees.json");
    let t = trees.iter().find(|t| t.tree_id == "wtc").unwrap();
    let mut us = enumerate_utterances(t);
    // The 16 hour question sits below "aged 25 to 59: No"; this history took the Yes branch.
    let mut odd = us.iter().find(|u| u.history.len() == 2 && u.history.iter().all(|h| h.follow_up_answer == Reply::Yes)).unwrap().clone();
    odd.utterance_id = "odd".into();
    odd.scenario = "I work 20 hours a week.".into();
    odd.evidence = Some(vec![HistoryTurn::new("Do you work at least 16 hours a week?", Reply::Yes)]);
    us.push(odd);
    let (ds, _, _) = Dataset::from_utterances(us);
    let (ds, dropped) = drop_unreachable(ds);
    assert_eq!(dropped, 1);
    assert!(ds.utterances.iter().all(|u| u.utterance_id != "odd"));
}

fn two_source_dataset() -> Dataset {
    let mk = |id: &str, url: &str, q: &str, r: &str| {
        let tree = DialogTree::new(q, r, Node::internal("Are you over 18?", Node::leaf(Reply::Yes), Node::leaf(Reply::No)))
            .unwrap()
            .with_ids(id, url);
        enumerate_utterances(&tree)
    };
    let mut us = mk("a", "https://www.gov.uk/a", "Can I get A?", "You can get A if you're over 18.");
    us.extend(mk("b", "https://www.ssa.gov/b", "Can I get B?", "You can get B if you're over 18."));
    Dataset::from_utterances(us).0
}

#[test]
fn negative_questions_two_sources() {
    let ds = two_source_dataset();
    let negs = sample_negative_questions(&ds, 1).unwrap();
    assert_eq!(negs.len(), 2);
    for n in &negs {
        assert_eq!(n.answer, Some(Answer::Irrelevant));
        assert!(n.history.is_empty());
        let expected = if n.tree_id == "a" { "Can I get B?" } else { "Can I get A?" };
        assert_eq!(n.question, expected);
    }
    let mut single = ds.clone();
    single.utterances.retain(|u| u.tree_id == "a");
    assert!(matches!(sample_negative_questions(&single, 1), Err(CorpusError::NoNegativeCandidates)));
}

#[test]
fn negative_questions_leave_positives() {
    let ds = Dataset::from_utterances(common::scenario_utterances(&common::load_trees("trees.json"))).0;
    let before = ds.clone();
    let negs = sample_negative_questions(&ds, 3).unwrap();
    assert_eq!(ds, before);
    let mut all = ds.utterances.clone();
    all.extend(negs.iter().cloned());
    let (grown, errors, _) = Dataset::from_utterances(all);
    assert!(errors.is_empty());
    assert_eq!(grown.utterances.len(), ds.utterances.len() + negs.len());
    assert_eq!(grown.trees, ds.trees);
}

fn disjoint_scenario_dataset() -> Dataset {
    let specs = [
        ("x", "https://a.gov/x", "Pilot licence held?", "I fly planes."),
        ("y", "https://b.gov/y", "Horses owned?", "My stable is full."),
        ("z", "https://c.gov/z", "Thatched roof?", "Straw covers my cottage."),
    ];
    let mut us = Vec::new();
    for (id, url, q, scenario) in specs {
        let tree = DialogTree::new(format!("Can I claim {id}?"), format!("Rule {id}."), Node::internal(q, Node::leaf(Reply::Yes), Node::leaf(Reply::No)))
            .unwrap()
            .with_ids(id, url);
        let mut base = enumerate_utterances(&tree);
        let mut s = make_utterance(&tree.question, &tree.rule_text, vec![], scenario).unwrap().with_answer(Answer::Yes);
        s.utterance_id = format!("{id}:s");
        s.tree_id = id.into();
        s.source_url = url.into();
        s.evidence = Some(vec![HistoryTurn::new(q, Reply::Yes)]);
        base.push(s);
        us.extend(base);
    }
    Dataset::from_utterances(us).0
}

#[test]
fn negative_scenarios_disjoint_all_accepted() {
    let ds = disjoint_scenario_dataset();
    let sim = ScenarioSimilarity::new(&ds);
    for id in ["x", "y", "z"] {
        for (k, s) in ds.scenarios.iter().enumerate() {
            let c = sim.max_cosine(id, k);
            if s.tree_id == id {
                assert!((c - 1.0).abs() < 1e-12, "own follow-up must have cosine 1");
            } else {
                assert_eq!(c, 0.0);
            }
        }
    }
    let negs = sample_negative_scenarios(&ds, 4, 0.5).unwrap();
    assert_eq!(negs.accepted.len(), 3);
    assert!(negs.skipped.is_empty());
    for u in &negs.utterances {
        assert_ne!(ds.scenarios.iter().find(|s| s.scenario == u.scenario).unwrap().tree_id, u.tree_id);
        assert_eq!(u.evidence, Some(vec![]));
    }
    // Copies keep the label of the scenario-free original.
    let originals: Vec<&Utterance> = ds.utterances.iter().filter(|u| !u.has_scenario()).collect();
    assert_eq!(negs.utterances.len(), originals.len());
    for (c, o) in negs.utterances.iter().zip(&originals) {
        assert_eq!(c.answer, o.answer);
    }
    // Threshold 0 rejects everything.
    let none = sample_negative_scenarios(&ds, 4, 0.0).unwrap();
    assert!(none.accepted.is_empty() && none.skipped.len() == 3);
    let mut one = ds.clone();
    one.scenarios.truncate(1);
    assert!(matches!(sample_negative_scenarios(&one, 4, 0.5), Err(CorpusError::TooFewScenarioPairs(1))));
}

fn n_source_dataset(n: usize) -> Dataset {
    let mut us = Vec::new();
    for i in 0..n {
        let tree = DialogTree::new(format!("Can I get benefit {i}?"), format!("Rule {i}."), Node::internal("Are you over 18?", Node::leaf(Reply::Yes), Node::leaf(Reply::No)))
            .unwrap()
            .with_ids(format!("t{i}"), format!("https://www.gov.uk/b{i}"));
        us.extend(enumerate_utterances(&tree));
    }
    Dataset::from_utterances(us).0
}

#[test]
fn split_ten_sources() {
    let ds = n_source_dataset(10);
    let s = split_dataset(&ds, &SplitSpec::default(), 8).unwrap();
    let sources = |v: &[Utterance]| v.iter().map(|u| u.source_url.clone()).collect::<HashSet<_>>().len();
    assert_eq!((sources(&s.train), sources(&s.dev), sources(&s.test)), (7, 1, 2));
    assert!(matches!(split_dataset(&n_source_dataset(2), &SplitSpec::default(), 8), Err(CorpusError::TooFewUnits { units: 2 })));
    let bad = SplitSpec { ratios: (0.5, 0.5, 0.5), ..SplitSpec::default() };
    assert!(matches!(split_dataset(&ds, &bad, 8), Err(CorpusError::BadRatios(_))));
}

#[test]
fn stats_counts() {
    let (ds, _) = load_dataset(common::fixture("corpus_small.jsonl"), &KeyMap::default()).unwrap();
    let s = stats(&ds);
    assert_eq!(s.utterances, 6);
    assert_eq!(s.answers["More"], 2);
    assert_eq!(s.answers["No"], 2);
    assert_eq!(s.answers["Irrelevant"], 1);
    assert_eq!(s.domains["gov.uk"], 6);
}

fn arb_node(depth: u32) -> impl Strategy<Value = Node> {
    let leaf = any::<bool>().prop_map(|b| Node::leaf(Reply::from_bool(b)));
    leaf.prop_recursive(depth, 31, 2, |inner| {
        (inner.clone(), inner).prop_map(|(y, n)| Node::internal("placeholder", y, n))
    })
}

/// Gives every internal node a question unique to its path.
fn relabel(node: Node, path: &str) -> Node {
    match node {
        Node::Leaf { .. } => node,
        Node::Internal { yes, no, .. } => Node::internal(
            format!("Does rule {path} apply?"),
            relabel(*yes, &format!("{path}y")),
            relabel(*no, &format!("{path}n")),
        ),
    }
}

proptest! {
    #[test]
    fn build_tree_inverts_enumerate(root in arb_node(4)) {
        let tree = DialogTree::new("Can I?", "Rule.", relabel(root, "r")).unwrap().with_ids("t", "https://x.gov/t");
        prop_assert_eq!(build_tree(&enumerate_utterances(&tree)).unwrap(), tree);
    }

    #[test]
    fn splits_keep_units_whole(n in 3usize..30, seed in any::<u64>(), by_tree in any::<bool>()) {
        let ds = n_source_dataset(n);
        let spec = SplitSpec { unit: if by_tree { SplitUnit::Tree } else { SplitUnit::Source }, ..SplitSpec::default() };
        let s = split_dataset(&ds, &spec, seed).unwrap();
        prop_assert_eq!(s.train.len() + s.dev.len() + s.test.len(), ds.utterances.len());
        let trees = |v: &[Utterance]| v.iter().map(|u| u.tree_id.clone()).collect::<HashSet<_>>();
        let (a, b, c) = (trees(&s.train), trees(&s.dev), trees(&s.test));
        prop_assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        // Totals land within one unit of each target.
        for (part, r) in [(&a, 0.7), (&b, 0.1), (&c, 0.2)] {
            prop_assert!((part.len() as f64 - r * n as f64).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn negative_samplers_pure(seed in any::<u64>()) {
        let ds = disjoint_scenario_dataset();
        prop_assert_eq!(sample_negative_questions(&ds, seed).unwrap(), sample_negative_questions(&ds, seed).unwrap());
        prop_assert_eq!(sample_negative_scenarios(&ds, seed, 0.5).unwrap(), sample_negative_scenarios(&ds, seed, 0.5).unwrap());
    }
}
