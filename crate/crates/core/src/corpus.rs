//! Dataset loading, tree assembly, negative sampling and splits.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dialog::{tree_irregularities, Answer, DialogTree, HistoryTurn, Node, Reply, Utterance};
use crate::entail::infer_provenance;
use crate::pipeline::VirtualUser;
use crate::tfidf::{cosine, SparseVec, TfidfModel};
use crate::text::same_question;

/// Share of invalid records tolerated, rounded up to whole records.
pub const MAX_INVALID_SHARE: f64 = 0.10;
pub const DEFAULT_NEG_SCENARIO_THRESHOLD: f64 = 0.5;
pub const NEG_SCENARIO_DRAWS: usize = 1000;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}: no records")]
    Empty(PathBuf),
    #[error("{0}: not a JSON array: {1}")]
    BadArray(PathBuf, serde_json::Error),
    #[error("corpus rejected: {invalid} of {total} records invalid")]
    Rejected { invalid: usize, total: usize },
    #[error("tree {tree_id}: conflicting gold answers at {path}")]
    Conflict { tree_id: String, path: String },
    #[error("tree {tree_id}: incomplete tree, nothing known at {path}")]
    IncompleteTree { tree_id: String, path: String },
    #[error("tree {tree_id}: {reason}")]
    BadTree { tree_id: String, reason: String },
    #[error("no negative candidates: every question shares a source with some rule text")]
    NoNegativeCandidates,
    #[error("need scenarios from at least 2 trees, found {0}")]
    TooFewScenarioPairs(usize),
    #[error("fewer units ({units}) than splits (3)")]
    TooFewUnits { units: usize },
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
}

/// External record keys for each canonical field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeyMap {
    pub utterance_id: String,
    pub tree_id: String,
    pub source_url: String,
    pub rule_text: String,
    pub question: String,
    pub scenario: String,
    pub history: String,
    pub evidence: String,
    pub follow_up_question: String,
    pub follow_up_answer: String,
    pub answer: String,
}

impl Default for KeyMap {
    fn default() -> Self {
        Self {
            utterance_id: "utterance_id".into(),
            tree_id: "tree_id".into(),
            source_url: "source_url".into(),
            rule_text: "snippet".into(),
            question: "question".into(),
            scenario: "scenario".into(),
            history: "history".into(),
            evidence: "evidence".into(),
            follow_up_question: "follow_up_question".into(),
            follow_up_answer: "follow_up_answer".into(),
            answer: "answer".into(),
        }
    }
}

impl KeyMap {
    /// Rewrites one external record into the canonical schema.
    pub fn canonicalize(&self, record: &Value) -> Result<Utterance, String> {
        let obj = record.as_object().ok_or("record is not an object")?;
        let turns = |key: &str| -> Result<Option<Value>, String> {
            match obj.get(key) {
                None | Some(Value::Null) => Ok(None),
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|t| {
                        let t = t.as_object().ok_or(format!("{key} entry is not an object"))?;
                        let mut m = Map::new();
                        m.insert("follow_up_question".into(), t.get(&self.follow_up_question).cloned().unwrap_or(Value::Null));
                        m.insert("follow_up_answer".into(), t.get(&self.follow_up_answer).cloned().unwrap_or(Value::Null));
                        Ok(Value::Object(m))
                    })
                    .collect::<Result<Vec<_>, String>>()
                    .map(|v| Some(Value::Array(v))),
                Some(_) => Err(format!("{key} is not a list")),
            }
        };
        let mut m = Map::new();
        for (canon, key) in [
            ("utterance_id", &self.utterance_id),
            ("tree_id", &self.tree_id),
            ("source_url", &self.source_url),
            ("snippet", &self.rule_text),
            ("question", &self.question),
            ("scenario", &self.scenario),
            ("answer", &self.answer),
        ] {
            if let Some(v) = obj.get(key.as_str()).filter(|v| !v.is_null()) {
                m.insert(canon.into(), v.clone());
            }
        }
        if let Some(h) = turns(&self.history)? {
            m.insert("history".into(), h);
        }
        if let Some(e) = turns(&self.evidence)? {
            m.insert("evidence".into(), e);
        }
        let u: Utterance = serde_json::from_value(Value::Object(m)).map_err(|e| e.to_string())?;
        u.validate().map_err(|e| e.to_string())?;
        Ok(u)
    }
}

/// One follow-up answer set a scenario was written from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub tree_id: String,
    pub scenario: String,
    pub provenance: Vec<HistoryTurn>,
    /// Provenance recovered from the tree rather than read from the file.
    pub inferred: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    /// 1-based line (JSONL) or array position (JSON array).
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub records: usize,
    pub errors: Vec<RecordError>,
    /// Trees that failed to assemble; their utterances are dropped.
    pub tree_errors: Vec<CorpusError>,
    pub dropped_tree_utterances: usize,
    pub dropped_unreachable: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub utterances: Vec<Utterance>,
    pub trees: BTreeMap<String, DialogTree>,
    pub scenarios: Vec<ScenarioRecord>,
    pub sources: Vec<String>,
}

fn hex_prefix(bytes: &[u8], n: usize) -> String {
    bytes.iter().take(n).map(|b| format!("{b:02x}")).collect()
}

fn is_positive(u: &Utterance) -> bool {
    u.answer.as_ref().is_some_and(|a| *a != Answer::Irrelevant)
}

impl Dataset {
    /// Assembles trees and scenario provenance. Utterances of trees that fail
    /// to assemble are dropped and the errors returned. Irrelevant-gold
    /// utterances need not belong to a tree.
    pub fn from_utterances(mut utterances: Vec<Utterance>) -> (Self, Vec<CorpusError>, usize) {
        for u in &mut utterances {
            if u.tree_id.is_empty() {
                let h = Sha256::new().chain_update(&u.rule_text).chain_update([0]).chain_update(&u.question).finalize();
                u.tree_id = hex_prefix(&h, 6);
            }
        }
        let mut groups: BTreeMap<String, Vec<&Utterance>> = BTreeMap::new();
        for u in utterances.iter().filter(|u| is_positive(u)) {
            groups.entry(u.tree_id.clone()).or_default().push(u);
        }
        let mut trees = BTreeMap::new();
        let mut errors = Vec::new();
        for (id, us) in groups {
            match build_tree(us.into_iter().cloned().collect::<Vec<_>>().as_slice()) {
                Ok(t) => {
                    trees.insert(id, t);
                }
                Err(e) => errors.push(e),
            }
        }
        let before = utterances.len();
        utterances.retain(|u| trees.contains_key(&u.tree_id) || u.answer == Some(Answer::Irrelevant));
        let dropped = before - utterances.len();
        let scenarios = collect_scenarios(&utterances, &trees);
        let sources: BTreeSet<String> = utterances.iter().map(|u| u.source_url.clone()).collect();
        (Self { utterances, trees, scenarios, sources: sources.into_iter().collect() }, errors, dropped)
    }

    pub fn tree_of(&self, u: &Utterance) -> Option<&DialogTree> {
        self.trees.get(&u.tree_id)
    }

    pub fn provenance(&self, tree_id: &str, scenario: &str) -> Option<&[HistoryTurn]> {
        self.scenarios.iter().find(|s| s.tree_id == tree_id && s.scenario == scenario).map(|s| s.provenance.as_slice())
    }

    /// `sha256:` digest of the canonical JSON of every utterance.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for u in &self.utterances {
            h.update(serde_json::to_vec(u).expect("utterances serialize"));
            h.update(b"\n");
        }
        format!("sha256:{:x}", h.finalize())
    }

    pub fn trees_map(&self) -> HashMap<String, DialogTree> {
        self.trees.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}

fn collect_scenarios(utterances: &[Utterance], trees: &BTreeMap<String, DialogTree>) -> Vec<ScenarioRecord> {
    let mut order: Vec<(&str, &str)> = Vec::new();
    let mut groups: HashMap<(&str, &str), Vec<&Utterance>> = HashMap::new();
    for u in utterances.iter().filter(|u| u.has_scenario() && is_positive(u)) {
        let key = (u.tree_id.as_str(), u.scenario.as_str());
        groups.entry(key).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        groups.get_mut(&key).expect("inserted").push(u);
    }
    order
        .into_iter()
        .map(|key| {
            let us = &groups[&key];
            let given: Option<Vec<HistoryTurn>> = us.iter().find_map(|u| u.evidence.clone());
            let (provenance, inferred) = match given {
                Some(p) => (p, false),
                None => (trees.get(key.0).map(|t| infer_provenance(t, us.iter().copied())).unwrap_or_default(), true),
            };
            ScenarioRecord { tree_id: key.0.into(), scenario: key.1.into(), provenance, inferred }
        })
        .collect()
}

/// Reads JSONL (or a single JSON array) through `keys`. Bad records are
/// reported, not fatal, unless more than a tenth of them (rounded up) are bad.
/// Missing utterance ids are filled in as `u{index}`.
pub fn read_utterances(path: impl AsRef<Path>, keys: &KeyMap) -> Result<(Vec<Utterance>, LoadReport), CorpusError> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.into(), source })?;
    let records: Vec<(usize, Result<Value, String>)> = if raw.trim_start().starts_with('[') {
        let items: Vec<Value> = serde_json::from_str(&raw).map_err(|e| CorpusError::BadArray(path.into(), e))?;
        items.into_iter().enumerate().map(|(i, v)| (i + 1, Ok(v))).collect()
    } else {
        raw.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, serde_json::from_str(l).map_err(|e| e.to_string())))
            .collect()
    };
    if records.is_empty() {
        return Err(CorpusError::Empty(path.into()));
    }
    let mut report = LoadReport { records: records.len(), ..Default::default() };
    let mut seen = HashSet::new();
    let mut utterances = Vec::new();
    for (line, rec) in records {
        match rec.and_then(|v| keys.canonicalize(&v)) {
            Ok(u) if !u.utterance_id.is_empty() && !seen.insert(u.utterance_id.clone()) => {
                report.errors.push(RecordError { line, message: format!("duplicate utterance id {:?}", u.utterance_id) })
            }
            Ok(u) => utterances.push(u),
            Err(message) => report.errors.push(RecordError { line, message }),
        }
    }
    if report.errors.len() > (MAX_INVALID_SHARE * report.records as f64).ceil() as usize {
        return Err(CorpusError::Rejected { invalid: report.errors.len(), total: report.records });
    }
    for (i, u) in utterances.iter_mut().enumerate() {
        if u.utterance_id.is_empty() {
            u.utterance_id = format!("u{i}");
        }
    }
    Ok((utterances, report))
}

/// [`read_utterances`], then tree assembly and removal of scenario
/// utterances the tree cannot reach.
pub fn load_dataset(path: impl AsRef<Path>, keys: &KeyMap) -> Result<(Dataset, LoadReport), CorpusError> {
    let (utterances, mut report) = read_utterances(path, keys)?;
    let (ds, tree_errors, dropped) = Dataset::from_utterances(utterances);
    report.tree_errors = tree_errors;
    report.dropped_tree_utterances = dropped;
    let (ds, unreachable) = drop_unreachable(ds);
    report.dropped_unreachable = unreachable;
    Ok((ds, report))
}

/// Writes canonical JSONL.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> std::io::Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn path_name(path: &[Reply]) -> String {
    if path.is_empty() {
        "root".into()
    } else {
        path.iter().map(|r| if r.as_bool() { 'Y' } else { 'N' }).collect()
    }
}

#[derive(Clone, PartialEq)]
enum Known {
    Ask(String),
    Leaf(Reply),
}

/// Reassembles the tree from utterances with full histories (those without a
/// scenario; all of them when every one has a scenario). Each history is a
/// path from the root; each gold answer is the node at the end of it.
pub fn build_tree(utterances: &[Utterance]) -> Result<DialogTree, CorpusError> {
    let first = utterances.first().ok_or_else(|| CorpusError::BadTree { tree_id: String::new(), reason: "no utterances".into() })?;
    let tree_id = first.tree_id.clone();
    let plain: Vec<&Utterance> = utterances.iter().filter(|u| !u.has_scenario()).collect();
    let used: Vec<&Utterance> = if plain.is_empty() { utterances.iter().collect() } else { plain };
    let mut known: HashMap<Vec<Reply>, Known> = HashMap::new();
    let mut put = |path: Vec<Reply>, k: Known| -> Result<(), CorpusError> {
        match known.get(&path) {
            Some(old) if *old != k => {
                let same_q = matches!((old, &k), (Known::Ask(a), Known::Ask(b)) if same_question(a, b));
                if same_q {
                    return Ok(());
                }
                Err(CorpusError::Conflict { tree_id: tree_id.clone(), path: path_name(&path) })
            }
            _ => {
                known.insert(path, k);
                Ok(())
            }
        }
    };
    for u in &used {
        if u.rule_text != first.rule_text || !same_question(&u.question, &first.question) {
            return Err(CorpusError::BadTree { tree_id: tree_id.clone(), reason: "utterances disagree on question or rule text".into() });
        }
        let mut path = Vec::new();
        for t in &u.history {
            put(path.clone(), Known::Ask(t.follow_up_question.clone()))?;
            path.push(t.follow_up_answer);
        }
        let k = match u.answer.as_ref() {
            Some(Answer::Yes) => Known::Leaf(Reply::Yes),
            Some(Answer::No) => Known::Leaf(Reply::No),
            Some(Answer::FollowUp(q)) => Known::Ask(q.clone()),
            _ => continue,
        };
        put(path, k)?;
    }
    fn assemble(path: &mut Vec<Reply>, known: &HashMap<Vec<Reply>, Known>, tree_id: &str) -> Result<Node, CorpusError> {
        match known.get(path.as_slice()) {
            None => Err(CorpusError::IncompleteTree { tree_id: tree_id.into(), path: path_name(path) }),
            Some(Known::Leaf(r)) => Ok(Node::leaf(*r)),
            Some(Known::Ask(q)) => {
                path.push(Reply::Yes);
                let yes = assemble(path, known, tree_id);
                path.pop();
                path.push(Reply::No);
                let no = assemble(path, known, tree_id);
                path.pop();
                Ok(Node::internal(q.clone(), yes?, no?))
            }
        }
    }
    let root = assemble(&mut Vec::new(), &known, &tree_id)?;
    DialogTree::new(first.question.clone(), first.rule_text.clone(), root)
        .map(|t| t.with_ids(tree_id.clone(), first.source_url.clone()))
        .map_err(|e| CorpusError::BadTree { tree_id, reason: e.to_string() })
}

/// Whether every provenance question of `u`'s scenario lies on its path or
/// below its node. The walk follows history answers, then provenance answers.
pub fn scenario_reachable(tree: &DialogTree, u: &Utterance, provenance: &[HistoryTurn]) -> bool {
    let mut on_path: Vec<&str> = Vec::new();
    let mut node = &tree.root;
    while let Node::Internal { followup, yes, no } = node {
        let r = u
            .history
            .iter()
            .chain(provenance)
            .find(|t| same_question(&t.follow_up_question, followup))
            .map(|t| t.follow_up_answer);
        match r {
            Some(r) => {
                on_path.push(followup);
                node = if r.as_bool() { yes } else { no };
            }
            None => break,
        }
    }
    let below = DialogTree::subtree_questions(node);
    provenance
        .iter()
        .all(|p| on_path.iter().chain(&below).any(|q| same_question(q, &p.follow_up_question)))
}

/// Drops scenario utterances whose provenance points outside the part of
/// the tree they can still reach.
pub fn drop_unreachable(mut ds: Dataset) -> (Dataset, usize) {
    let before = ds.utterances.len();
    let keep: Vec<bool> = ds
        .utterances
        .iter()
        .map(|u| {
            if !u.has_scenario() || !is_positive(u) {
                return true;
            }
            match (ds.tree_of(u), ds.provenance(&u.tree_id, &u.scenario)) {
                (Some(t), Some(p)) => scenario_reachable(t, u, p),
                _ => true,
            }
        })
        .collect();
    let mut k = keep.iter();
    ds.utterances.retain(|_| *k.next().expect("same length"));
    let dropped = before - ds.utterances.len();
    (ds, dropped)
}

/// Seeded uniform Yes/No stream.
pub fn virtual_user(seed: u64) -> VirtualUser {
    VirtualUser::new(seed)
}

/// Distinct (question, rule text) pairs with a relevant gold, in dataset order.
fn question_rule_pairs(ds: &Dataset) -> Vec<&Utterance> {
    let mut seen = HashSet::new();
    ds.utterances.iter().filter(|u| is_positive(u) && seen.insert((u.question.as_str(), u.rule_text.as_str()))).collect()
}

/// For every (question, rule text) pair, one question drawn uniformly from
/// those never asked about the rule's source document, labeled Irrelevant
/// with an empty history.
pub fn sample_negative_questions(ds: &Dataset, seed: u64) -> Result<Vec<Utterance>, CorpusError> {
    let mut sources_of: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for u in &ds.utterances {
        sources_of.entry(u.question.as_str()).or_default().insert(u.source_url.as_str());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (i, p) in question_rule_pairs(ds).into_iter().enumerate() {
        let candidates: Vec<&str> = sources_of.iter().filter(|(_, s)| !s.contains(p.source_url.as_str())).map(|(q, _)| *q).collect();
        let q = candidates.choose(&mut rng).ok_or(CorpusError::NoNegativeCandidates)?;
        out.push(Utterance {
            utterance_id: format!("neg-q:{i}"),
            tree_id: p.tree_id.clone(),
            source_url: p.source_url.clone(),
            rule_text: p.rule_text.clone(),
            question: q.to_string(),
            scenario: String::new(),
            history: Vec::new(),
            evidence: None,
            answer: Some(Answer::Irrelevant),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NegativeScenarios {
    pub utterances: Vec<Utterance>,
    /// (tree id, index into `Dataset::scenarios`) of each accepted draw.
    pub accepted: Vec<(String, usize)>,
    /// Trees for which no candidate passed within the draw budget.
    pub skipped: Vec<String>,
}

/// Largest tf-idf cosine over all question pairs of `a` and `b`; 0 when
/// either side is empty.
pub fn max_pair_cosine(a: &[SparseVec], b: &[SparseVec]) -> f64 {
    a.iter().flat_map(|x| b.iter().map(move |y| cosine(x, y))).fold(0.0, f64::max)
}

/// Tf-idf vectors of every tree's follow-ups and every scenario's provenance
/// questions. Idf is fitted on all of those questions together, one document
/// per question occurrence.
#[derive(Debug, Clone)]
pub struct ScenarioSimilarity {
    tree_vecs: BTreeMap<String, Vec<SparseVec>>,
    scenario_vecs: Vec<Vec<SparseVec>>,
}

impl ScenarioSimilarity {
    pub fn new(ds: &Dataset) -> Self {
        let tree_questions: BTreeMap<&str, Vec<&str>> =
            ds.trees.iter().map(|(id, t)| (id.as_str(), DialogTree::subtree_questions(&t.root))).collect();
        let mut docs: Vec<&str> = tree_questions.values().flatten().copied().collect();
        docs.extend(ds.scenarios.iter().flat_map(|s| s.provenance.iter().map(|p| p.follow_up_question.as_str())));
        let model = TfidfModel::fit(&docs);
        let tree_vecs = tree_questions
            .into_iter()
            .map(|(id, qs)| (id.to_string(), qs.into_iter().map(|q| model.vectorize(q)).collect()))
            .collect();
        let scenario_vecs = ds
            .scenarios
            .iter()
            .map(|s| s.provenance.iter().map(|p| model.vectorize(&p.follow_up_question)).collect())
            .collect();
        Self { tree_vecs, scenario_vecs }
    }

    /// Max cosine between tree `tree_id`'s follow-ups and the provenance of
    /// scenario `k`.
    pub fn max_cosine(&self, tree_id: &str, k: usize) -> f64 {
        match self.tree_vecs.get(tree_id) {
            Some(t) => max_pair_cosine(t, &self.scenario_vecs[k]),
            None => 0.0,
        }
    }
}

/// For every tree with scenario-free utterances, rejection-samples another
/// tree's scenario whose provenance questions all stay below `threshold`
/// cosine to this tree's follow-ups, and attaches it to copies of those
/// utterances with empty evidence. Each tree draws from its own ChaCha8
/// stream so results do not depend on iteration order.
pub fn sample_negative_scenarios(ds: &Dataset, seed: u64, threshold: f64) -> Result<NegativeScenarios, CorpusError> {
    let scenario_trees: BTreeSet<&str> = ds.scenarios.iter().map(|s| s.tree_id.as_str()).collect();
    if scenario_trees.len() < 2 {
        return Err(CorpusError::TooFewScenarioPairs(scenario_trees.len()));
    }
    let sim = ScenarioSimilarity::new(ds);
    let mut out = NegativeScenarios::default();
    for (i, id) in ds.trees.keys().enumerate() {
        let targets: Vec<&Utterance> = ds.utterances.iter().filter(|u| u.tree_id == *id && !u.has_scenario() && is_positive(u)).collect();
        let candidates: Vec<usize> = (0..ds.scenarios.len()).filter(|&k| ds.scenarios[k].tree_id != *id).collect();
        if targets.is_empty() || candidates.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let pick = (0..NEG_SCENARIO_DRAWS).find_map(|_| {
            let k = candidates[rng.gen_range(0..candidates.len())];
            (sim.max_cosine(id, k) < threshold).then_some(k)
        });
        let Some(k) = pick else {
            out.skipped.push(id.clone());
            continue;
        };
        out.accepted.push((id.clone(), k));
        for u in targets {
            let mut c = u.clone();
            c.utterance_id = format!("{}:neg-s", u.utterance_id);
            c.scenario = ds.scenarios[k].scenario.clone();
            c.evidence = Some(Vec::new());
            out.utterances.push(c);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitUnit {
    #[default]
    Source,
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: (f64, f64, f64),
    pub unit: SplitUnit,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { ratios: (0.7, 0.1, 0.2), unit: SplitUnit::Source }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

/// Host of a source URL without a leading `www.`; the URL itself when it
/// does not parse.
pub fn domain_of(source_url: &str) -> String {
    url::Url::parse(source_url)
        .ok()
        .and_then(|u| u.host_str().map(|h| h.trim_start_matches("www.").to_string()))
        .unwrap_or_else(|| source_url.to_string())
}

/// Splits by unit (source document or tree), stratified by domain. Units are
/// shuffled within their domain, domains are laid out largest first, and
/// each unit in turn goes to the split furthest below its target share, so
/// totals land within one unit of the ratios and each domain is spread
/// roughly proportionally.
pub fn split_dataset(ds: &Dataset, spec: &SplitSpec, seed: u64) -> Result<Split, CorpusError> {
    let (a, b, c) = spec.ratios;
    if !(a > 0.0 && b > 0.0 && c > 0.0 && ((a + b + c) - 1.0).abs() < 1e-9) {
        return Err(CorpusError::BadRatios(spec.ratios));
    }
    let unit_of = |u: &Utterance| match spec.unit {
        SplitUnit::Source => u.source_url.clone(),
        SplitUnit::Tree => u.tree_id.clone(),
    };
    let mut by_domain: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for u in &ds.utterances {
        by_domain.entry(domain_of(&u.source_url)).or_default().insert(unit_of(u));
    }
    // A tree-level unit lives in exactly one domain; a source's domain is its host.
    let units: usize = by_domain.values().map(BTreeSet::len).sum();
    if units < 3 {
        return Err(CorpusError::TooFewUnits { units });
    }
    let mut domains: Vec<(String, Vec<String>)> = by_domain.into_iter().map(|(d, s)| (d, s.into_iter().collect())).collect();
    domains.sort_by(|x, y| y.1.len().cmp(&x.1.len()).then_with(|| x.0.cmp(&y.0)));
    let ratios = [a, b, c];
    let mut counts = [0usize; 3];
    let mut assignment: HashMap<String, usize> = HashMap::new();
    let mut placed = 0usize;
    for (k, (_, mut us)) in domains.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        us.shuffle(&mut rng);
        for unit in us {
            placed += 1;
            let target = |j: usize| ratios[j] * placed as f64 - counts[j] as f64;
            let j = (0..3).fold(0, |best, j| if target(j) > target(best) + 1e-12 { j } else { best });
            counts[j] += 1;
            assignment.insert(unit, j);
        }
    }
    let mut split = Split::default();
    for u in &ds.utterances {
        let part = match assignment[&unit_of(u)] {
            0 => &mut split.train,
            1 => &mut split.dev,
            _ => &mut split.test,
        };
        part.push(u.clone());
    }
    Ok(split)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub utterances: usize,
    pub trees: usize,
    pub sources: usize,
    pub scenarios: usize,
    pub with_scenario: usize,
    pub answers: BTreeMap<String, usize>,
    pub domains: BTreeMap<String, usize>,
    pub max_tree_depth: usize,
    pub irregular_trees: usize,
}

pub fn stats(ds: &Dataset) -> DatasetStats {
    let mut s = DatasetStats {
        utterances: ds.utterances.len(),
        trees: ds.trees.len(),
        sources: ds.sources.len(),
        scenarios: ds.scenarios.len(),
        with_scenario: ds.utterances.iter().filter(|u| u.has_scenario()).count(),
        max_tree_depth: ds.trees.values().map(DialogTree::depth).max().unwrap_or(0),
        irregular_trees: ds.trees.values().filter(|t| !tree_irregularities(t).is_empty()).count(),
        ..Default::default()
    };
    for u in &ds.utterances {
        let name = u.answer.as_ref().map_or("unlabeled", |a| a.decision().name());
        *s.answers.entry(name.to_string()).or_default() += 1;
        *s.domains.entry(domain_of(&u.source_url)).or_default() += 1;
    }
    s
}
