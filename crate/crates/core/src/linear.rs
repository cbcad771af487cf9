//! Multinomial logistic regression over sparse features, trained by
//! full-batch gradient descent.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::par::{self, Strategy};
use crate::tfidf::SparseVec;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training data lacks classes: {}", .0.join(", "))]
    MissingClasses(Vec<String>),
    #[error("feature index {index} out of range for dimension {dim}")]
    DimensionMismatch { index: usize, dim: usize },
    #[error("label {0} out of range")]
    BadLabel(usize),
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format {found:?} (expected {expected:?})")]
    Format { found: String, expected: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// Recorded in the fingerprint. Training is full-batch from zero weights,
    /// so the result does not otherwise depend on it.
    pub seed: u64,
    pub strategy: Strategy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 300, learning_rate: 2.0, l2: 1e-4, seed: 0, strategy: Strategy::default() }
    }
}

/// A labelled sparse example; `label` indexes the classifier's classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: SparseVec,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub classes: Vec<String>,
    pub dim: usize,
    /// One row per class: `dim` feature weights followed by the bias.
    pub weights: Vec<Vec<f64>>,
    pub trained_on: String,
}

fn softmax(mut logits: Vec<f64>) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    logits.iter_mut().for_each(|z| *z /= sum);
    logits
}

fn fingerprint(classes: &[String], dim: usize, data: &[Example], cfg: &TrainConfig) -> String {
    let mut h = Sha256::new();
    for c in classes {
        h.update(c.as_bytes());
        h.update([0]);
    }
    h.update((dim as u64).to_le_bytes());
    for ex in data {
        h.update((ex.label as u64).to_le_bytes());
        for (i, v) in &ex.features {
            h.update((*i as u64).to_le_bytes());
            h.update(v.to_bits().to_le_bytes());
        }
        h.update([0xff]);
    }
    h.update((cfg.epochs as u64).to_le_bytes());
    h.update(cfg.learning_rate.to_bits().to_le_bytes());
    h.update(cfg.l2.to_bits().to_le_bytes());
    h.update(cfg.seed.to_le_bytes());
    format!("sha256:{:x}", h.finalize())
}

impl LinearClassifier {
    /// All-zero weights: uniform probabilities for every input.
    pub fn zeros(classes: Vec<String>, dim: usize) -> Self {
        let weights = vec![vec![0.0; dim + 1]; classes.len()];
        Self { classes, dim, weights, trained_on: String::new() }
    }

    fn check(&self, x: &[(usize, f64)]) -> Result<(), ModelError> {
        match x.iter().find(|(i, _)| *i >= self.dim) {
            Some(&(index, _)) => Err(ModelError::DimensionMismatch { index, dim: self.dim }),
            None => Ok(()),
        }
    }

    fn logits(&self, x: &[(usize, f64)]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| row[self.dim] + x.iter().map(|&(i, v)| row[i] * v).sum::<f64>())
            .collect()
    }

    pub fn predict_proba(&self, x: &[(usize, f64)]) -> Result<Vec<f64>, ModelError> {
        self.check(x)?;
        Ok(softmax(self.logits(x)))
    }

    /// Index of the most probable class (first on ties) and all
    /// probabilities.
    pub fn predict(&self, x: &[(usize, f64)]) -> Result<(usize, Vec<f64>), ModelError> {
        let p = self.predict_proba(x)?;
        let best = p.iter().enumerate().fold(0, |b, (i, v)| if *v > p[b] { i } else { b });
        Ok((best, p))
    }

    /// Mean cross-entropy plus `l2 / 2 * |W|^2` (biases excluded), and its
    /// gradient with the same layout as `weights`.
    pub fn loss_and_gradient(&self, data: &[Example], l2: f64, strategy: Strategy) -> (f64, Vec<Vec<f64>>) {
        let k = self.classes.len();
        let width = self.dim + 1;
        // Slot k * width holds the summed loss.
        let total = par::chunked_sum(strategy, data, k * width + 1, |ex, acc| {
            let p = softmax(self.logits(&ex.features));
            acc[k * width] -= p[ex.label].max(f64::MIN_POSITIVE).ln();
            for (c, pc) in p.iter().enumerate() {
                let g = pc - if c == ex.label { 1.0 } else { 0.0 };
                let row = &mut acc[c * width..(c + 1) * width];
                for &(i, v) in &ex.features {
                    row[i] += g * v;
                }
                row[self.dim] += g;
            }
        });
        let n = data.len().max(1) as f64;
        let mut loss = total[k * width] / n;
        let mut grad = Vec::with_capacity(k);
        for c in 0..k {
            let mut row: Vec<f64> = total[c * width..(c + 1) * width].iter().map(|g| g / n).collect();
            for (r, &w) in row.iter_mut().zip(&self.weights[c][..self.dim]) {
                *r += l2 * w;
                loss += 0.5 * l2 * w * w;
            }
            grad.push(row);
        }
        (loss, grad)
    }

    /// Trains from zero weights. Every class must occur in `data`.
    pub fn train(classes: Vec<String>, dim: usize, data: &[Example], cfg: &TrainConfig) -> Result<Self, ModelError> {
        if let Some(ex) = data.iter().find(|e| e.label >= classes.len()) {
            return Err(ModelError::BadLabel(ex.label));
        }
        let mut present = vec![false; classes.len()];
        data.iter().for_each(|e| present[e.label] = true);
        let missing: Vec<String> =
            classes.iter().zip(&present).filter(|(_, p)| !**p).map(|(c, _)| c.clone()).collect();
        if !missing.is_empty() {
            return Err(ModelError::MissingClasses(missing));
        }
        let mut model = Self::zeros(classes, dim);
        for ex in data {
            model.check(&ex.features)?;
        }
        for _ in 0..cfg.epochs {
            let (_, grad) = model.loss_and_gradient(data, cfg.l2, cfg.strategy);
            for (row, g) in model.weights.iter_mut().zip(grad) {
                for (w, d) in row.iter_mut().zip(g) {
                    *w -= cfg.learning_rate * d;
                }
            }
        }
        model.trained_on = fingerprint(&model.classes, dim, data, cfg);
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<String>, Vec<Example>) {
        let classes: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let mut data = Vec::new();
        for label in 0..4 {
            for j in 0..3 {
                data.push(Example { features: vec![(label * 2, 1.0), (label * 2 + 1, 0.5 + j as f64 * 0.1)], label });
            }
        }
        (classes, data)
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let (classes, data) = toy();
        let m = LinearClassifier::train(classes, 8, &data, &TrainConfig::default()).unwrap();
        for ex in &data {
            let (pred, p) = m.predict(&ex.features).unwrap();
            assert_eq!(pred, ex.label);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_epochs_is_uniform() {
        let (classes, data) = toy();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let m = LinearClassifier::train(classes, 8, &data, &cfg).unwrap();
        assert_eq!(m.predict_proba(&[(0, 3.0)]).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn deterministic_across_strategies() {
        let (classes, data) = toy();
        let seq = TrainConfig { strategy: Strategy::Sequential, epochs: 20, ..TrainConfig::default() };
        let par = TrainConfig { strategy: Strategy::Parallel, ..seq };
        let a = LinearClassifier::train(classes.clone(), 8, &data, &seq).unwrap();
        let b = LinearClassifier::train(classes, 8, &data, &par).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        let (classes, data) = toy();
        let only_a: Vec<Example> = data.iter().filter(|e| e.label == 0).cloned().collect();
        match LinearClassifier::train(classes.clone(), 8, &only_a, &TrainConfig::default()) {
            Err(ModelError::MissingClasses(m)) => assert_eq!(m, vec!["b", "c", "d"]),
            other => panic!("{other:?}"),
        }
        let m = LinearClassifier::zeros(classes, 8);
        assert!(matches!(m.predict(&[(8, 1.0)]), Err(ModelError::DimensionMismatch { index: 8, dim: 8 })));
    }
}
