//! `rulechat` subcommands. Everything reads and writes JSON or JSONL.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rulechat_core::classify::{train_surface_lr, Heuristic, SurfaceLr, TurnClassifier};
use rulechat_core::corpus::{
    load_dataset, read_utterances, sample_negative_questions, sample_negative_scenarios, split_dataset, stats,
    write_jsonl, Dataset, KeyMap, LoadReport, SplitSpec, SplitUnit, DEFAULT_NEG_SCENARIO_THRESHOLD,
};
use rulechat_core::dialog::{make_utterance, Answer, Decision, Reply, Utterance};
use rulechat_core::entail::{derive_entailment_corpus, train_entailment, EntailmentInstance, EntailmentLabel, EntailmentModel, Entailer, HeuristicEntailer};
use rulechat_core::followup::{baseline_sentence, generate_followup, SentenceChoice};
use rulechat_core::linear::TrainConfig;
use rulechat_core::metrics::MetricReport;
use rulechat_core::par::Strategy;
use rulechat_core::pipeline::{evaluate_pipeline, run_dialog, step, Components, RuleBasedGenerator, SessionState, UserOracle};
use rulechat_core::rules::lexicon::Lexicon;
use rulechat_core::rules::snippet::Span;
use rulechat_core::rules::{parse_rule, RuleParser};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "rulechat", version, about = "Conversational machine reading over rule texts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the parsed logical form of rule texts.
    Parse(ParseArgs),
    /// Predict a decision (Yes, No, Irrelevant, More) per utterance.
    Classify(ClassifyArgs),
    /// Generate the next follow-up question per utterance.
    Followup(FollowupArgs),
    /// Label premise/hypothesis pairs.
    Entail(EntailArgs),
    /// Run one dialog, answering follow-ups from stdin or an oracle.
    Dialog(DialogArgs),
    /// Score prediction files against gold data.
    Eval(EvalArgs),
    /// Run the full pipeline over a dataset and score it.
    EvalE2e(EvalE2eArgs),
    /// Train a linear model.
    #[command(subcommand)]
    Train(TrainCommand),
    /// Corpus loading, splitting and negative sampling.
    #[command(subcommand)]
    Data(DataCommand),
}

#[derive(Args, Debug, Clone)]
pub struct Input {
    /// JSONL (or a JSON array) of utterances.
    #[arg(long, visible_alias = "data")]
    pub input: PathBuf,
    /// JSON object mapping canonical field names to the file's own keys.
    #[arg(long)]
    pub keys: Option<PathBuf>,
}

impl Input {
    fn keymap(&self) -> Result<KeyMap> {
        match &self.keys {
            Some(p) => Ok(serde_json::from_slice(&std::fs::read(p).with_context(|| p.display().to_string())?)?),
            None => Ok(KeyMap::default()),
        }
    }

    fn utterances(&self) -> Result<Vec<Utterance>> {
        let (us, report) = read_utterances(&self.input, &self.keymap()?)?;
        warn_records(&report);
        Ok(us)
    }

    fn dataset(&self) -> Result<(Dataset, LoadReport)> {
        let (ds, report) = load_dataset(&self.input, &self.keymap()?)?;
        warn_records(&report);
        for e in &report.tree_errors {
            eprintln!("warning: {e}");
        }
        Ok((ds, report))
    }
}

fn warn_records(report: &LoadReport) {
    for e in &report.errors {
        eprintln!("warning: record {}: {}", e.line, e.message);
    }
}

#[derive(Args, Debug)]
pub struct ParseArgs {
    /// File holding one rule text.
    #[arg(conflicts_with_all = ["text", "input"])]
    pub file: Option<PathBuf>,
    /// A rule text given inline.
    #[arg(long, conflicts_with = "input")]
    pub text: Option<String>,
    /// Utterance file; one output line per utterance.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Cue lexicon with [AND], [OR] and [NEG] sections; built-in when absent.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub data: Input,
    /// `heuristic` or a saved surface classifier.
    #[arg(long, default_value = "heuristic")]
    pub model: String,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Generator {
    Rules,
    Sentence(SentenceChoice),
}

fn parse_generator(s: &str) -> Result<Generator, String> {
    match s {
        "rules" => Ok(Generator::Rules),
        "first" => Ok(Generator::Sentence(SentenceChoice::First)),
        "last" => Ok(Generator::Sentence(SentenceChoice::Last)),
        _ => match s.strip_prefix("random:").map(str::parse) {
            Some(Ok(seed)) => Ok(Generator::Sentence(SentenceChoice::Random(seed))),
            _ => Err(format!("expected rules, first, last or random:<seed>, got {s:?}")),
        },
    }
}

#[derive(Args, Debug)]
pub struct FollowupArgs {
    #[command(flatten)]
    pub data: Input,
    /// `rules` or a sentence baseline: `first`, `last`, `random:<seed>`.
    #[arg(long, default_value = "rules", value_parser = parse_generator)]
    pub generator: Generator,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EntailArgs {
    /// `heuristic` or a saved entailment model.
    #[arg(long, default_value = "heuristic")]
    pub model: String,
    #[arg(long, requires = "hypothesis", conflicts_with = "input")]
    pub premise: Option<String>,
    #[arg(long)]
    pub hypothesis: Option<String>,
    /// JSONL of `{premise, hypothesis}`; standard input when neither this
    /// nor a pair is given.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OracleSpec {
    Random(u64),
    Fixed(Vec<Reply>),
}

fn parse_oracle(s: &str) -> Result<OracleSpec, String> {
    if let Some(seed) = s.strip_prefix("random:") {
        return seed.parse().map(OracleSpec::Random).map_err(|e| format!("bad seed: {e}"));
    }
    if let Some(list) = s.strip_prefix("fixed:") {
        return list
            .split(',')
            .map(|r| Reply::parse(r).ok_or_else(|| format!("bad reply {r:?}")))
            .collect::<Result<_, _>>()
            .map(OracleSpec::Fixed);
    }
    Err(format!("expected random:<seed> or fixed:Yes,No,..., got {s:?}"))
}

#[derive(Args, Debug)]
pub struct DialogArgs {
    /// File holding the rule text.
    #[arg(long, required_unless_present = "rule_text", conflicts_with = "rule_text")]
    pub rule: Option<PathBuf>,
    #[arg(long)]
    pub rule_text: Option<String>,
    #[arg(long)]
    pub question: String,
    #[arg(long, default_value = "")]
    pub scenario: String,
    /// Answers follow-ups instead of stdin.
    #[arg(long, value_parser = parse_oracle)]
    pub oracle: Option<OracleSpec>,
    #[command(flatten)]
    pub models: Models,
}

#[derive(Args, Debug, Clone)]
pub struct Models {
    /// Saved surface classifier; heuristic when absent.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    /// Saved entailment model; heuristic when absent.
    #[arg(long)]
    pub entailer: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Classification,
    Followup,
    Entailment,
    E2e,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    /// Predictions as JSONL.
    #[arg(long)]
    pub pred: PathBuf,
    /// Gold utterances, or entailment instances for `--task entailment`.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalE2eArgs {
    #[command(flatten)]
    pub data: Input,
    #[command(flatten)]
    pub models: Models,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-utterance predictions as JSONL.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Args, Debug, Clone)]
pub struct TrainOpts {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainOpts {
    fn config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            l2: self.l2.unwrap_or(d.l2),
            seed: self.seed,
            strategy: d.strategy,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum TrainCommand {
    /// Surface classifier from utterances with gold answers.
    Classifier {
        #[command(flatten)]
        data: Input,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Entailment model from instances (see `data derive-entailment`).
    Entailment {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        opts: TrainOpts,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum UnitArg {
    Source,
    Tree,
}

#[derive(Subcommand, Debug)]
pub enum DataCommand {
    /// Canonicalize a corpus and assemble its trees; prints a load report.
    Load {
        #[command(flatten)]
        data: Input,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write train/dev/test JSONL files.
    Split {
        #[command(flatten)]
        data: Input,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = UnitArg::Source)]
        unit: UnitArg,
        /// Train, dev and test shares.
        #[arg(long, num_args = 3, value_delimiter = ',', default_values_t = [0.7, 0.1, 0.2])]
        ratios: Vec<f64>,
    },
    /// Irrelevant utterances pairing each question with an unrelated rule.
    NegQ {
        #[command(flatten)]
        data: Input,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Copies of utterances with an unrelated scenario.
    NegS {
        #[command(flatten)]
        data: Input,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_NEG_SCENARIO_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Entailment instances from scenario utterances and their trees.
    DeriveEntailment {
        #[command(flatten)]
        data: Input,
        #[arg(long)]
        output: PathBuf,
    },
    Stats {
        #[command(flatten)]
        data: Input,
    },
}

fn emit<T: Serialize>(out: &mut dyn Write, path: Option<&Path>, items: &[T]) -> Result<()> {
    match path {
        Some(p) => write_jsonl(p, items).with_context(|| p.display().to_string()),
        None => {
            for it in items {
                serde_json::to_writer(&mut *out, it)?;
                writeln!(out)?;
            }
            Ok(())
        }
    }
}

fn emit_report(out: &mut dyn Write, path: Option<&Path>, report: &MetricReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    if let Some(p) = path {
        std::fs::write(p, &text).with_context(|| p.display().to_string())?;
    }
    writeln!(out, "{text}")?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let raw = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn classifier(path: Option<&Path>) -> Result<Box<dyn TurnClassifier>> {
    Ok(match path {
        Some(p) => Box::new(SurfaceLr::load(p).with_context(|| p.display().to_string())?),
        None => Box::new(Heuristic::default()),
    })
}

fn entailer(path: Option<&Path>) -> Result<Box<dyn Entailer>> {
    Ok(match path {
        Some(p) => Box::new(EntailmentModel::load(p).with_context(|| p.display().to_string())?),
        None => Box::new(HeuristicEntailer::default()),
    })
}

fn model_path(spec: &str) -> Option<&Path> {
    (spec != "heuristic").then_some(Path::new(spec))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationPrediction {
    pub utterance_id: String,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowupPrediction {
    pub utterance_id: String,
    /// `None` when nothing could be generated; scored as an empty question.
    pub question: Option<String>,
    /// Condition and rule-text span the question was made from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_condition: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_span: Option<Span>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailmentPrediction {
    pub premise: String,
    pub hypothesis: String,
    pub label: EntailmentLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerPrediction {
    pub utterance_id: String,
    /// `None` when the pipeline failed on this utterance.
    pub answer: Option<Answer>,
}

#[derive(Debug, Deserialize)]
struct Pair {
    premise: String,
    hypothesis: String,
}

pub fn run(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Parse(a) => cmd_parse(a, out),
        Command::Classify(a) => {
            let us = a.data.utterances()?;
            let clf = classifier(model_path(&a.model))?;
            let mut preds = Vec::with_capacity(us.len());
            for u in &us {
                let logic = parse_rule(&u.rule_text).with_context(|| format!("utterance {}", u.utterance_id))?;
                preds.push(ClassificationPrediction { utterance_id: u.utterance_id.clone(), decision: clf.classify(u, &logic) });
            }
            emit(out, a.output.as_deref(), &preds)
        }
        Command::Followup(a) => {
            let us = a.data.utterances()?;
            let mut preds = Vec::with_capacity(us.len());
            let mut failed = 0;
            for u in &us {
                let mut p = FollowupPrediction { utterance_id: u.utterance_id.clone(), question: None, source_condition: None, source_span: None };
                match a.generator {
                    Generator::Rules => {
                        let logic = parse_rule(&u.rule_text).with_context(|| format!("utterance {}", u.utterance_id))?;
                        if let Ok(g) = generate_followup(u, &logic) {
                            p.question = Some(g.text);
                            p.source_condition = g.source_condition;
                            p.source_span = g.source_span;
                        }
                    }
                    Generator::Sentence(choice) => p.question = baseline_sentence(&u.rule_text, choice).ok(),
                }
                failed += usize::from(p.question.is_none());
                preds.push(p);
            }
            if failed > 0 {
                eprintln!("warning: no question generated for {failed} of {} utterances", us.len());
            }
            emit(out, a.output.as_deref(), &preds)
        }
        Command::Entail(a) => {
            let ent = entailer(model_path(&a.model))?;
            let pairs: Vec<Pair> = match (&a.input, a.premise, a.hypothesis) {
                (Some(p), _, _) => read_jsonl(p)?,
                (None, Some(premise), Some(hypothesis)) => vec![Pair { premise, hypothesis }],
                (None, None, _) => {
                    let mut pairs = Vec::new();
                    for (i, line) in input.lines().enumerate() {
                        let line = line?;
                        if !line.trim().is_empty() {
                            pairs.push(serde_json::from_str(&line).with_context(|| format!("stdin:{}", i + 1))?);
                        }
                    }
                    pairs
                }
                _ => bail!("give --premise and --hypothesis, or --input"),
            };
            let preds: Vec<EntailmentPrediction> = pairs
                .into_iter()
                .map(|p| EntailmentPrediction { label: ent.entail(&p.premise, &p.hypothesis), premise: p.premise, hypothesis: p.hypothesis })
                .collect();
            emit(out, a.output.as_deref(), &preds)
        }
        Command::Dialog(a) => cmd_dialog(a, input, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::EvalE2e(a) => {
            let us = a.data.utterances()?;
            let clf = classifier(a.models.classifier.as_deref())?;
            let ent = entailer(a.models.entailer.as_deref())?;
            let c = Components { classifier: clf.as_ref(), generator: &RuleBasedGenerator, entailer: ent.as_ref() };
            let strategy = if a.sequential { Strategy::Sequential } else { Strategy::default() };
            let ev = evaluate_pipeline(&us, c, strategy)?;
            if let Some(p) = &a.predictions {
                let preds: Vec<AnswerPrediction> = us
                    .iter()
                    .zip(ev.predictions)
                    .map(|(u, answer)| AnswerPrediction { utterance_id: u.utterance_id.clone(), answer })
                    .collect();
                write_jsonl(p, &preds)?;
            }
            emit_report(out, a.report.as_deref(), &ev.report)
        }
        Command::Train(t) => cmd_train(t, out),
        Command::Data(d) => cmd_data(d, out),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| path.display().to_string())
}

fn cmd_parse(a: ParseArgs, out: &mut dyn Write) -> Result<()> {
    let parser = match &a.lexicon {
        Some(p) => RuleParser::new(Lexicon::from_path(p).with_context(|| p.display().to_string())?),
        None => RuleParser::new(Lexicon::builtin().clone()),
    };
    let text = match (&a.file, a.text) {
        (Some(f), _) => Some(read_text(f)?),
        (None, t) => t,
    };
    match (text, a.input) {
        (Some(text), _) => {
            serde_json::to_writer_pretty(&mut *out, &parser.parse(&text)?)?;
            writeln!(out)?;
        }
        (None, Some(path)) => {
            let (us, report) = read_utterances(&path, &KeyMap::default())?;
            warn_records(&report);
            for u in us {
                let logic = parser.parse(&u.rule_text).with_context(|| format!("utterance {}", u.utterance_id))?;
                serde_json::to_writer(&mut *out, &serde_json::json!({"utterance_id": u.utterance_id, "logic": logic}))?;
                writeln!(out)?;
            }
        }
        (None, None) => bail!("give a rule file, --text or --input"),
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct DialogTurn<'a> {
    agent: &'a Answer,
    #[serde(skip_serializing_if = "Option::is_none")]
    user_reply: Option<Reply>,
}

fn cmd_dialog(a: DialogArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let rule = match (&a.rule, a.rule_text) {
        (Some(f), _) => read_text(f)?.trim().to_string(),
        (None, Some(t)) => t,
        (None, None) => bail!("give --rule or --rule-text"),
    };
    let logic = parse_rule(&rule)?;
    let u = make_utterance(&a.question, &rule, vec![], &a.scenario)?;
    let clf = classifier(a.models.classifier.as_deref())?;
    let ent = entailer(a.models.entailer.as_deref())?;
    let c = Components { classifier: clf.as_ref(), generator: &RuleBasedGenerator, entailer: ent.as_ref() };
    let state = SessionState::new(u, logic);
    if let Some(spec) = a.oracle {
        let mut oracle = match spec {
            OracleSpec::Random(seed) => UserOracle::random(seed),
            OracleSpec::Fixed(rs) => UserOracle::fixed(rs),
        };
        let t = run_dialog(state, &mut oracle, c)?;
        let turns: Vec<DialogTurn> = t.turns.iter().map(|x| DialogTurn { agent: &x.agent, user_reply: x.user_reply }).collect();
        serde_json::to_writer_pretty(&mut *out, &serde_json::json!({"turns": turns, "final": t.final_answer}))?;
        writeln!(out)?;
        return Ok(());
    }
    let mut state = state;
    loop {
        let r = step(&mut state, c)?;
        if r.answer.is_terminal() {
            writeln!(out, "Answer: {}", r.answer)?;
            return Ok(());
        }
        writeln!(out, "{} [yes/no]", r.answer)?;
        out.flush()?;
        let reply = loop {
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                bail!("input ended before the dialog finished");
            }
            match Reply::parse(&line) {
                Some(r) => break r,
                None => {
                    writeln!(out, "Please answer yes or no.")?;
                    out.flush()?;
                }
            }
        };
        state.record_reply(reply)?;
    }
}

fn by_id<T>(items: Vec<T>, id: impl Fn(&T) -> &str) -> Result<HashMap<String, T>> {
    let mut m = HashMap::with_capacity(items.len());
    for it in items {
        let k = id(&it).to_string();
        if m.insert(k.clone(), it).is_some() {
            bail!("duplicate prediction for {k}");
        }
    }
    Ok(m)
}

fn lookup<'a, T>(preds: &'a HashMap<String, T>, u: &Utterance) -> Result<&'a T> {
    preds.get(&u.utterance_id).ok_or_else(|| anyhow!("no prediction for utterance {}", u.utterance_id))
}

fn gold_answer(u: &Utterance) -> Result<&Answer> {
    u.answer.as_ref().ok_or_else(|| anyhow!("utterance {} has no gold answer", u.utterance_id))
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let report = match a.task {
        Task::Entailment => {
            let gold: Vec<EntailmentInstance> = read_jsonl(&a.gold)?;
            let pred: Vec<EntailmentPrediction> = read_jsonl(&a.pred)?;
            if gold.len() != pred.len() {
                bail!("{} predictions for {} gold instances", pred.len(), gold.len());
            }
            let (p, g): (Vec<_>, Vec<_>) = pred.iter().zip(&gold).map(|(p, g)| (p.label, g.label)).unzip();
            MetricReport::new("entailment", gold.len()).with_classes(&p, &g)?
        }
        task => {
            let (gold, report) = read_utterances(&a.gold, &KeyMap::default())?;
            warn_records(&report);
            match task {
                Task::Classification => {
                    let preds = by_id(read_jsonl::<ClassificationPrediction>(&a.pred)?, |p| &p.utterance_id)?;
                    let mut p = Vec::new();
                    let mut g = Vec::new();
                    for u in &gold {
                        g.push(gold_answer(u)?.decision());
                        p.push(lookup(&preds, u)?.decision);
                    }
                    MetricReport::new("classification", gold.len()).with_classes(&p, &g)?
                }
                Task::Followup => {
                    let preds = by_id(read_jsonl::<FollowupPrediction>(&a.pred)?, |p| &p.utterance_id)?;
                    let mut pairs = Vec::new();
                    for u in &gold {
                        if let Some(reference) = gold_answer(u)?.followup_text() {
                            pairs.push((lookup(&preds, u)?.question.clone().unwrap_or_default(), reference.to_string()));
                        }
                    }
                    if pairs.is_empty() {
                        bail!("no gold follow-up questions in {}", a.gold.display());
                    }
                    MetricReport::new("followup", pairs.len()).with_bleu(&pairs)?
                }
                _ => {
                    let preds = by_id(read_jsonl::<AnswerPrediction>(&a.pred)?, |p| &p.utterance_id)?;
                    let mut p = Vec::new();
                    let mut g = Vec::new();
                    let mut pairs = Vec::new();
                    for u in &gold {
                        let ga = gold_answer(u)?;
                        let pa = lookup(&preds, u)?.answer.as_ref();
                        g.push(ga.decision());
                        p.push(pa.map_or(Decision::More, Answer::decision));
                        if let Some(reference) = ga.followup_text() {
                            match pa {
                                Some(Answer::FollowUp(text)) => pairs.push((text.clone(), reference.to_string())),
                                None => pairs.push((String::new(), reference.to_string())),
                                Some(_) => {}
                            }
                        }
                    }
                    MetricReport::new("e2e", gold.len()).with_classes(&p, &g)?.with_bleu(&pairs)?
                }
            }
        }
    };
    emit_report(out, a.report.as_deref(), &report)
}

fn cmd_train(t: TrainCommand, out: &mut dyn Write) -> Result<()> {
    match t {
        TrainCommand::Classifier { data, opts } => {
            let us = data.utterances()?;
            let examples: Vec<(Utterance, Decision)> =
                us.into_iter().filter_map(|u| u.answer.as_ref().map(Answer::decision).map(|d| (u, d))).collect();
            if examples.is_empty() {
                bail!("no utterances with gold answers");
            }
            let model = train_surface_lr(&examples, &opts.config())?;
            model.save(&opts.out)?;
            writeln!(out, "trained classifier on {} utterances -> {}", examples.len(), opts.out.display())?;
        }
        TrainCommand::Entailment { input, opts } => {
            let instances: Vec<EntailmentInstance> = read_jsonl(&input)?;
            if instances.is_empty() {
                bail!("no entailment instances");
            }
            let model = train_entailment(&instances, &opts.config())?;
            model.save(&opts.out)?;
            writeln!(out, "trained entailment model on {} instances -> {}", instances.len(), opts.out.display())?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct LoadSummary {
    records: usize,
    invalid_records: usize,
    tree_errors: Vec<String>,
    dropped_tree_utterances: usize,
    dropped_unreachable: usize,
    utterances: usize,
    trees: usize,
    fingerprint: String,
}

fn cmd_data(d: DataCommand, out: &mut dyn Write) -> Result<()> {
    match d {
        DataCommand::Load { data, output } => {
            let (ds, report) = data.dataset()?;
            if let Some(p) = output {
                write_jsonl(&p, &ds.utterances)?;
            }
            let summary = LoadSummary {
                records: report.records,
                invalid_records: report.errors.len(),
                tree_errors: report.tree_errors.iter().map(ToString::to_string).collect(),
                dropped_tree_utterances: report.dropped_tree_utterances,
                dropped_unreachable: report.dropped_unreachable,
                utterances: ds.utterances.len(),
                trees: ds.trees.len(),
                fingerprint: ds.fingerprint(),
            };
            serde_json::to_writer_pretty(&mut *out, &summary)?;
            writeln!(out)?;
        }
        DataCommand::Split { data, out_dir, seed, unit, ratios } => {
            let (ds, _) = data.dataset()?;
            let spec = SplitSpec {
                ratios: (ratios[0], ratios[1], ratios[2]),
                unit: match unit {
                    UnitArg::Source => SplitUnit::Source,
                    UnitArg::Tree => SplitUnit::Tree,
                },
            };
            let split = split_dataset(&ds, &spec, seed)?;
            std::fs::create_dir_all(&out_dir)?;
            for (name, part) in [("train", &split.train), ("dev", &split.dev), ("test", &split.test)] {
                write_jsonl(out_dir.join(format!("{name}.jsonl")), part)?;
                writeln!(out, "{name}: {} utterances", part.len())?;
            }
        }
        DataCommand::NegQ { data, seed, output } => {
            let (ds, _) = data.dataset()?;
            let negs = sample_negative_questions(&ds, seed)?;
            write_jsonl(&output, &negs)?;
            writeln!(out, "{} negative questions", negs.len())?;
        }
        DataCommand::NegS { data, seed, threshold, output } => {
            let (ds, _) = data.dataset()?;
            let negs = sample_negative_scenarios(&ds, seed, threshold)?;
            write_jsonl(&output, &negs.utterances)?;
            writeln!(out, "{} negative scenario utterances, {} trees skipped", negs.utterances.len(), negs.skipped.len())?;
        }
        DataCommand::DeriveEntailment { data, output } => {
            let (ds, _) = data.dataset()?;
            let derived = derive_entailment_corpus(&ds.utterances, &ds.trees_map());
            write_jsonl(&output, &derived.instances)?;
            writeln!(out, "{} instances, {} scenario utterances without gold", derived.instances.len(), derived.skipped_without_gold)?;
        }
        DataCommand::Stats { data } => {
            let (ds, _) = data.dataset()?;
            serde_json::to_writer_pretty(&mut *out, &stats(&ds))?;
            writeln!(out)?;
        }
    }
    Ok(())
}
