//! Accuracy, BLEU and agreement statistics.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Strategy};
use crate::text::tokenize;

/// Substituted for zero n-gram precisions.
pub const BLEU_EPSILON: f64 = 1e-9;

/// Version of the [`MetricReport`] JSON layout.
pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} predictions vs {1} references")]
    LengthMismatch(usize, usize),
    #[error("no items to score")]
    Empty,
    #[error("BLEU order must be in 1..=4, got {0}")]
    BadOrder(usize),
    #[error("item {item}: expected {expected} annotations, found {found}")]
    Arity { item: usize, expected: usize, found: usize },
    #[error("item {item}: {found} ratings, expected {expected}")]
    Ragged { item: usize, expected: usize, found: usize },
    #[error("at least two raters per item are required")]
    TooFewRaters,
}

/// Micro accuracy (fraction correct) and macro accuracy (mean recall over
/// the classes present in `golds`).
pub fn micro_macro_accuracy<T: Eq + Hash>(preds: &[T], golds: &[T]) -> Result<(f64, f64), MetricError> {
    if preds.len() != golds.len() {
        return Err(MetricError::LengthMismatch(preds.len(), golds.len()));
    }
    if golds.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut per_class: HashMap<&T, (usize, usize)> = HashMap::new();
    let mut correct = 0;
    for (p, g) in preds.iter().zip(golds) {
        let e = per_class.entry(g).or_default();
        e.1 += 1;
        if p == g {
            e.0 += 1;
            correct += 1;
        }
    }
    let micro = correct as f64 / golds.len() as f64;
    let macro_ = per_class.values().map(|(c, n)| *c as f64 / *n as f64).sum::<f64>() / per_class.len() as f64;
    Ok((micro, macro_))
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_default() += 1;
        }
    }
    m
}

/// Sentence BLEU on engine tokens: geometric mean of clipped n-gram
/// precisions for orders `1..=max_order`, times the brevity penalty.
///
/// A zero precision, or an order where the candidate is too short to have
/// n-grams, counts as [`BLEU_EPSILON`]. Orders where neither side has any
/// n-grams are left out of the mean. An empty candidate scores 0.
pub fn bleu(candidate: &str, reference: &str, max_order: usize) -> Result<f64, MetricError> {
    if !(1..=4).contains(&max_order) {
        return Err(MetricError::BadOrder(max_order));
    }
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 1..=max_order {
        let cand = ngram_counts(&c, n);
        let refc = ngram_counts(&r, n);
        if cand.is_empty() && refc.is_empty() {
            continue;
        }
        let total: usize = cand.values().sum();
        let matched: usize = cand.iter().map(|(g, k)| (*k).min(refc.get(g).copied().unwrap_or(0))).sum();
        let p = if total == 0 || matched == 0 { BLEU_EPSILON } else { matched as f64 / total as f64 };
        log_sum += p.ln();
        orders += 1;
    }
    let bp = if c.len() >= r.len() { 1.0 } else { (1.0 - r.len() as f64 / c.len() as f64).exp() };
    Ok((bp * (log_sum / orders as f64).exp()).clamp(0.0, 1.0))
}

/// Mean of sentence-level [`bleu`] over candidate/reference pairs.
pub fn corpus_bleu<S: AsRef<str> + Sync>(pairs: &[(S, S)], max_order: usize) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut sum = 0.0;
    for (c, r) in pairs {
        sum += bleu(c.as_ref(), r.as_ref(), max_order)?;
    }
    Ok(sum / pairs.len() as f64)
}

/// Unweighted Cohen's kappa. When chance agreement is 1 (both raters use one
/// identical label throughout) the result is 1.0.
pub fn cohens_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    let n = a.len() as f64;
    let mut ma: HashMap<&T, f64> = HashMap::new();
    let mut mb: HashMap<&T, f64> = HashMap::new();
    let mut agree = 0.0;
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1.0;
        *mb.entry(y).or_default() += 1.0;
        if x == y {
            agree += 1.0;
        }
    }
    let po = agree / n;
    let pe: f64 = ma.iter().map(|(k, ca)| ca * mb.get(k).copied().unwrap_or(0.0)).sum::<f64>() / (n * n);
    if (1.0 - pe).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((po - pe) / (1.0 - pe))
}

/// How annotator pairs are drawn in [`sampled_pairwise_kappa`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PairSampling {
    /// One pair of annotation columns per repeat.
    #[default]
    PerRepeat,
    /// An independent pair for every item in every repeat.
    PerItem,
}

const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Mean Cohen's kappa over `repeats` random choices of two of the three
/// annotations per item. Repeat `r` draws from a ChaCha8 stream keyed by
/// `(seed, r)`, so the result does not depend on scheduling.
pub fn sampled_pairwise_kappa<T: Eq + Hash + Clone + Send + Sync>(
    annotations: &[Vec<T>],
    repeats: usize,
    seed: u64,
    sampling: PairSampling,
    strategy: Strategy,
) -> Result<f64, MetricError> {
    if annotations.is_empty() || repeats == 0 {
        return Err(MetricError::Empty);
    }
    if let Some((item, a)) = annotations.iter().enumerate().find(|(_, a)| a.len() != 3) {
        return Err(MetricError::Arity { item, expected: 3, found: a.len() });
    }
    let kappas = par::map_range(strategy, repeats, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let fixed = PAIRS[rng.gen_range(0..3)];
        let mut a = Vec::with_capacity(annotations.len());
        let mut b = Vec::with_capacity(annotations.len());
        for item in annotations {
            let (i, j) = match sampling {
                PairSampling::PerRepeat => fixed,
                PairSampling::PerItem => PAIRS[rng.gen_range(0..3)],
            };
            a.push(item[i].clone());
            b.push(item[j].clone());
        }
        cohens_kappa(&a, &b)
    });
    let mut sum = 0.0;
    for k in kappas {
        sum += k?;
    }
    Ok(sum / repeats as f64)
}

/// Fleiss' kappa over an item x category table of rating counts. Every item
/// must have the same number of raters, at least two.
pub fn fleiss_kappa(table: &[Vec<usize>]) -> Result<f64, MetricError> {
    let first = table.first().ok_or(MetricError::Empty)?;
    let k = first.len();
    let raters: usize = first.iter().sum();
    for (item, row) in table.iter().enumerate() {
        if row.len() != k {
            return Err(MetricError::Ragged { item, expected: k, found: row.len() });
        }
        let s: usize = row.iter().sum();
        if s != raters {
            return Err(MetricError::Ragged { item, expected: raters, found: s });
        }
    }
    if raters < 2 {
        return Err(MetricError::TooFewRaters);
    }
    let n = raters as f64;
    let items = table.len() as f64;
    let p_bar = table
        .iter()
        .map(|row| (row.iter().map(|&c| (c * c) as f64).sum::<f64>() - n) / (n * (n - 1.0)))
        .sum::<f64>()
        / items;
    let pe: f64 = (0..k)
        .map(|j| {
            let pj = table.iter().map(|row| row[j] as f64).sum::<f64>() / (items * n);
            pj * pj
        })
        .sum();
    if (1.0 - pe).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((p_bar - pe) / (1.0 - pe))
}

/// `gold -> predicted -> count`.
pub type Confusion = BTreeMap<String, BTreeMap<String, usize>>;

pub fn confusion<T: ToString>(preds: &[T], golds: &[T]) -> Confusion {
    let mut m = Confusion::new();
    for (p, g) in preds.iter().zip(golds) {
        *m.entry(g.to_string()).or_default().entry(p.to_string()).or_default() += 1;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub fingerprint: String,
    pub seed: Option<u64>,
    pub items: usize,
    pub bleu_variant: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub task: String,
    pub micro_acc: Option<f64>,
    pub macro_acc: Option<f64>,
    /// BLEU by order; empty when no follow-up pairs were scored.
    pub bleu: BTreeMap<usize, f64>,
    pub counts: Confusion,
    pub meta: ReportMeta,
}

impl MetricReport {
    pub fn new(task: &str, items: usize) -> Self {
        Self {
            schema_version: REPORT_SCHEMA,
            task: task.to_string(),
            micro_acc: None,
            macro_acc: None,
            bleu: BTreeMap::new(),
            counts: Confusion::new(),
            meta: ReportMeta {
                fingerprint: String::new(),
                seed: None,
                items,
                bleu_variant: format!("sentence-level, epsilon {BLEU_EPSILON:e} on zero precisions, mean over pairs"),
            },
        }
    }

    /// Fills accuracies and the confusion table.
    pub fn with_classes<T: Eq + Hash + ToString>(mut self, preds: &[T], golds: &[T]) -> Result<Self, MetricError> {
        let (micro, macro_) = micro_macro_accuracy(preds, golds)?;
        self.micro_acc = Some(micro);
        self.macro_acc = Some(macro_);
        self.counts = confusion(preds, golds);
        Ok(self)
    }

    /// Fills BLEU-1..4 over (candidate, reference) pairs; no-op when empty.
    pub fn with_bleu<S: AsRef<str> + Sync>(mut self, pairs: &[(S, S)]) -> Result<Self, MetricError> {
        if !pairs.is_empty() {
            for n in 1..=4 {
                self.bleu.insert(n, corpus_bleu(pairs, n)?);
            }
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        let g = ["A", "A", "A", "B"];
        assert_eq!(micro_macro_accuracy(&g, &g).unwrap(), (1.0, 1.0));
        assert_eq!(micro_macro_accuracy(&["A"; 4], &g).unwrap(), (0.75, 0.5));
        assert_eq!(micro_macro_accuracy(&["A"], &g), Err(MetricError::LengthMismatch(1, 4)));
    }

    #[test]
    fn bleu_examples() {
        let r = "have you been working abroad 52 weeks or less";
        assert_eq!(bleu(r, r, 4).unwrap(), 1.0);
        assert_eq!(bleu("yes", "yes", 4).unwrap(), 1.0);
        let want = (-0.8f64).exp();
        for n in 1..=4 {
            assert!((bleu("have you been working abroad", r, n).unwrap() - want).abs() < 1e-12);
        }
        assert!(bleu("xyz", r, 1).unwrap() < 1e-8);
        assert_eq!(bleu("", r, 1).unwrap(), 0.0);
        assert_eq!(bleu("a", "a", 5), Err(MetricError::BadOrder(5)));
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(cohens_kappa(&["Y", "Y", "N", "N"], &["Y", "N", "Y", "N"]).unwrap(), 0.0);
        assert_eq!(cohens_kappa(&["Y", "N", "N"], &["Y", "N", "N"]).unwrap(), 1.0);
        assert_eq!(cohens_kappa(&["Y", "Y"], &["Y", "Y"]).unwrap(), 1.0);
        assert_eq!(fleiss_kappa(&[vec![3, 0], vec![0, 3]]).unwrap(), 1.0);
        assert!(matches!(fleiss_kappa(&[vec![2, 0], vec![1, 0]]), Err(MetricError::Ragged { item: 1, .. })));
    }

    #[test]
    fn sampled_kappa() {
        let unanimous: Vec<Vec<&str>> = (0..10).map(|i| vec![if i % 2 == 0 { "Y" } else { "N" }; 3]).collect();
        assert_eq!(sampled_pairwise_kappa(&unanimous, 100, 1, PairSampling::PerRepeat, Strategy::Parallel).unwrap(), 1.0);
        assert!(matches!(
            sampled_pairwise_kappa(&[vec!["Y", "N"]], 10, 1, PairSampling::PerRepeat, Strategy::Sequential),
            Err(MetricError::Arity { item: 0, expected: 3, found: 2 })
        ));
        let seq = sampled_pairwise_kappa(&unanimous, 50, 9, PairSampling::PerItem, Strategy::Sequential).unwrap();
        let par = sampled_pairwise_kappa(&unanimous, 50, 9, PairSampling::PerItem, Strategy::Parallel).unwrap();
        assert_eq!(seq.to_bits(), par.to_bits());
    }

    #[test]
    fn report_serializes() {
        let r = MetricReport::new("classification", 2)
            .with_classes(&["Yes", "No"], &["Yes", "Yes"])
            .unwrap()
            .with_bleu(&[("a b", "a b")])
            .unwrap();
        assert_eq!(r.counts["Yes"]["No"], 1);
        let back: MetricReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
