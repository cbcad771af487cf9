mod common;

use rulechat_core::classify::{lr_classify, train_surface_lr, Heuristic, SurfaceLr};
use rulechat_core::dialog::{enumerate_utterances, Answer, Decision, Reply, Utterance};
use rulechat_core::entail::{entail, train_entailment, EntailmentInstance, EntailmentLabel, EntailmentModel, HeuristicEntailer};
use rulechat_core::linear::TrainConfig;
use rulechat_core::par::Strategy;
use rulechat_core::pipeline::{evaluate_pipeline, run_dialog, Components, EvidenceEntailer, GoldTrees, RuleBasedGenerator, SessionState, UserOracle};
use rulechat_core::rules::parse_rule;

fn labeled() -> Vec<(Utterance, Decision)> {
    let mut out = Vec::new();
    for t in common::load_trees("trees.json") {
        for u in enumerate_utterances(&t) {
            let d = u.answer.as_ref().unwrap().decision();
            out.push((u, d));
        }
    }
    for it in common::load_suite() {
        let d = it.utterance.answer.as_ref().unwrap().decision();
        out.push((it.utterance, d));
    }
    out
}

#[test]
fn surface_lr_same_weights_sequential_and_parallel() {
    let data = labeled();
    let cfg = |strategy| TrainConfig { epochs: 40, strategy, ..TrainConfig::default() };
    let seq = train_surface_lr(&data, &cfg(Strategy::Sequential)).unwrap();
    let par = train_surface_lr(&data, &cfg(Strategy::Parallel)).unwrap();
    assert_eq!(seq, par);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lr.json");
    seq.save(&path).unwrap();
    let back = SurfaceLr::load(&path).unwrap();
    assert_eq!(back, seq);
}

#[test]
fn surface_lr_fits_training_data() {
    let data = labeled();
    let model = train_surface_lr(&data, &TrainConfig::default()).unwrap();
    let correct = data.iter().filter(|(u, d)| lr_classify(&model, u).unwrap().0 == *d).count();
    assert!(correct as f64 / data.len() as f64 > 0.6, "{correct}/{}", data.len());
    for (u, _) in data.iter().take(10) {
        let (_, p) = lr_classify(&model, u).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

fn entailment_data() -> Vec<EntailmentInstance> {
    let rows = [
        ("I am 70 years old and retired.", "Are you over 65?", EntailmentLabel::Entailment),
        ("I am 30 years old.", "Are you over 65?", EntailmentLabel::Contradiction),
        ("I live in a flat in Leeds.", "Are you over 65?", EntailmentLabel::Neutral),
        ("I rent my home from a landlord.", "Do you rent your home?", EntailmentLabel::Entailment),
        ("I own my home outright.", "Do you rent your home?", EntailmentLabel::Contradiction),
        ("I have two cats.", "Do you rent your home?", EntailmentLabel::Neutral),
        ("My husband and I married in 2010.", "Are you married?", EntailmentLabel::Entailment),
        ("I have never been married.", "Are you married?", EntailmentLabel::Contradiction),
        ("I work in a bakery.", "Are you married?", EntailmentLabel::Neutral),
    ];
    rows.iter().map(|(p, h, l)| EntailmentInstance { premise: p.to_string(), hypothesis: h.to_string(), label: *l }).collect()
}

#[test]
fn entailment_model_round_trip_and_fit() {
    let data = entailment_data();
    let seq = train_entailment(&data, &TrainConfig { strategy: Strategy::Sequential, ..TrainConfig::default() }).unwrap();
    let par = train_entailment(&data, &TrainConfig { strategy: Strategy::Parallel, ..TrainConfig::default() }).unwrap();
    assert_eq!(seq, par);
    for i in &data {
        assert_eq!(entail(&seq, &i.premise, &i.hypothesis).0, i.label, "{}", i.premise);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ent.json");
    seq.save(&path).unwrap();
    assert_eq!(EntailmentModel::load(&path).unwrap(), seq);
}

#[test]
fn evaluation_same_under_both_strategies() {
    let items: Vec<Utterance> = common::load_suite().into_iter().map(|i| i.utterance).collect();
    let h = Heuristic::default();
    let e = HeuristicEntailer::default();
    let c = Components { classifier: &h, generator: &RuleBasedGenerator, entailer: &e };
    let a = evaluate_pipeline(&items, c, Strategy::Sequential).unwrap();
    let b = evaluate_pipeline(&items, c, Strategy::Parallel).unwrap();
    assert_eq!(a, b);
    assert!(a.report.micro_acc.unwrap() >= 0.85);
}

#[test]
fn gold_pipeline_scores_perfectly_on_trees() {
    let trees = common::load_trees("trees.json");
    let ds: Vec<Utterance> = trees.iter().flat_map(enumerate_utterances).collect();
    let gold = GoldTrees::new(trees);
    let e = EvidenceEntailer::default();
    let c = Components { classifier: &gold, generator: &gold, entailer: &e };
    let ev = evaluate_pipeline(&ds, c, Strategy::Parallel).unwrap();
    assert_eq!(ev.report.micro_acc, Some(1.0));
    assert_eq!(ev.report.bleu[&4], 1.0);
}

#[test]
fn scenario_shortens_the_dialog() {
    // The scenario settles the first question, so only the second is asked.
    let trees = common::load_trees("trees.json");
    let t = trees.iter().find(|t| t.tree_id == "ni").unwrap();
    let scenario = "I work for a Canadian company in Toronto.";
    let first = "Are you working for an employer outside the EEA?";
    let e = EvidenceEntailer::new(scenario, vec![rulechat_core::dialog::HistoryTurn::new(first, Reply::Yes)]);
    let h = Heuristic::default();
    let c = Components { classifier: &h, generator: &RuleBasedGenerator, entailer: &e };
    let mut u = rulechat_core::dialog::make_utterance(&t.question, &t.rule_text, vec![], scenario).unwrap();
    u.tree_id = t.tree_id.clone();
    let state = SessionState::new(u, parse_rule(&t.rule_text).unwrap());
    let tr = run_dialog(state, &mut UserOracle::fixed(vec![Reply::Yes]), c).unwrap();
    assert_eq!(tr.turns.len(), 2);
    assert_eq!(tr.final_answer, Answer::Yes);
}
