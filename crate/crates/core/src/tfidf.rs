//! Bag-of-words tf-idf over the engine tokenizer.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::text::tokenize;

/// Sparse vector: `(index, value)` pairs sorted by index, no duplicates.
pub type SparseVec = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub document_count: usize,
}

impl TfidfModel {
    /// Fits vocabulary and smoothed idf, `ln((1 + N) / (1 + df)) + 1`.
    /// Indices are assigned in lexicographic token order.
    pub fn fit<S: AsRef<str>>(documents: &[S]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in documents {
            let uniq: BTreeSet<String> = tokenize(doc.as_ref()).into_iter().collect();
            for t in uniq {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = documents.len() as f64;
        let mut vocabulary = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (i, (tok, count)) in df.into_iter().enumerate() {
            idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
            vocabulary.insert(tok, i);
        }
        Self { vocabulary, idf, document_count: documents.len() }
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    /// Raw term count times idf for every in-vocabulary token.
    pub fn vectorize(&self, text: &str) -> SparseVec {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokenize(text) {
            if let Some(&i) = self.vocabulary.get(&t) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        counts.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect()
    }
}

pub fn dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

pub fn norm(a: &[(usize, f64)]) -> f64 {
    a.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Scales `v` to unit length in place (no-op on the zero vector).
pub fn l2_normalize(v: &mut [(usize, f64)]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|(_, x)| *x /= n);
    }
}

/// Concatenates sparse blocks, shifting block `k` by `k * width`.
pub fn concat_blocks(blocks: &[SparseVec], width: usize) -> SparseVec {
    blocks
        .iter()
        .enumerate()
        .flat_map(|(k, b)| b.iter().map(move |&(i, v)| (k * width + i, v)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOCS: [&str; 3] = ["the cat sat", "the dog sat down", "a cat and a dog"];

    #[test]
    fn idf_matches_hand_computation() {
        let m = TfidfModel::fit(&DOCS);
        let idf = |t: &str| m.idf[m.vocabulary[t]];
        // N = 3; df(the)=2, df(cat)=2, df(down)=1, df(a)=1
        assert!((idf("the") - ((4.0f64 / 3.0).ln() + 1.0)).abs() < 1e-12);
        assert!((idf("down") - (2.0f64.ln() + 1.0)).abs() < 1e-12);
        let v = m.vectorize("a cat a");
        let a = m.vocabulary["a"];
        let w = v.iter().find(|(i, _)| *i == a).unwrap().1;
        assert!((w - 2.0 * (2.0f64.ln() + 1.0)).abs() < 1e-12);
        let dense: Vec<usize> = m.vocabulary.values().copied().collect();
        assert_eq!(dense, (0..m.dim()).collect::<Vec<_>>());
    }

    #[test]
    fn cosine_identity_and_disjoint() {
        let m = TfidfModel::fit(&DOCS);
        let v = m.vectorize("the cat sat");
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&m.vectorize("cat"), &m.vectorize("dog down")), 0.0);
        assert!(m.vectorize("unseen words only").is_empty());
    }
}
