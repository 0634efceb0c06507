use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::tsv::{RawDomain, RawExample};

/// Feature string to dense index, most frequent first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    features: Vec<String>,
    frequency: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Keeps the `n` features with the largest summed counts; ties go to the
    /// lexicographically smaller name.
    pub fn from_counts(counts: HashMap<String, f64>, n: usize) -> Self {
        let mut all: Vec<(String, f64)> = counts.into_iter().collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if all.len() < n {
            log::warn!("only {} distinct features; vocabulary is smaller than {n}", all.len());
        }
        all.truncate(n);
        let (features, frequency) = all.into_iter().unzip();
        Self::from_parts(features, frequency)
    }

    pub fn from_parts(features: Vec<String>, frequency: Vec<f64>) -> Self {
        let index = features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i as u32))
            .collect();
        Self {
            features,
            frequency,
            index,
        }
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(self) -> Self {
        Self::from_parts(self.features, self.frequency)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, feature: &str) -> Option<u32> {
        self.index.get(feature).copied()
    }

    pub fn feature(&self, i: u32) -> Option<&str> {
        self.features.get(i as usize).map(String::as_str)
    }

    pub fn frequency(&self, i: u32) -> Option<f64> {
        self.frequency.get(i as usize).copied()
    }

    /// Sparse `(index, count)` pairs sorted by index; unknown features are dropped.
    pub fn vectorize(&self, ex: &RawExample) -> Vec<(u32, f64)> {
        let mut out: Vec<(u32, f64)> = ex
            .features
            .iter()
            .filter_map(|(f, c)| self.get(f).map(|i| (i, *c)))
            .collect();
        out.sort_by_key(|p| p.0);
        out
    }

    /// Inverse of [`vectorize`](Self::vectorize) for in-vocabulary features.
    pub fn devectorize(&self, sparse: &[(u32, f64)]) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = sparse
            .iter()
            .filter_map(|&(i, c)| self.feature(i).map(|f| (f.to_string(), c)))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

/// Counts over labeled and unlabeled examples of every domain.
pub fn build_vocab(domains: &[RawDomain], n: usize) -> Vocabulary {
    let mut counts: HashMap<String, f64> = HashMap::new();
    for d in domains {
        for ex in d.labeled.iter().chain(&d.unlabeled) {
            for (f, c) in &ex.features {
                *counts.entry(f.clone()).or_insert(0.0) += c;
            }
        }
    }
    Vocabulary::from_counts(counts, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tsv::parse_line;

    fn domain(lines: &[&str]) -> RawDomain {
        RawDomain {
            name: "d".into(),
            labeled: lines.iter().map(|l| parse_line(l).unwrap().0).collect(),
            unlabeled: vec![],
            dev: None,
            test: None,
        }
    }

    #[test]
    fn keeps_everything_when_n_is_large() {
        let v = build_vocab(&[domain(&["0\ta:1 b:1", "1\tc:2"])], 100);
        assert_eq!(v.len(), 3);
        assert_eq!(v.feature(0), Some("c"));
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = build_vocab(&[domain(&["0\tzeta:2 beta:2 alpha:1 gamma:2"])], 2);
        assert_eq!((v.feature(0), v.feature(1)), (Some("beta"), Some("gamma")));
    }

    #[test]
    fn vectorize_keeps_raw_counts_and_drops_unknown() {
        let v = build_vocab(&[domain(&["0\ta:3 b:1"])], 10);
        let (ex, _) = parse_line("1\ta:7 b:2 oov:5").unwrap();
        let s = v.vectorize(&ex);
        assert_eq!(s, vec![(0, 7.0), (1, 2.0)]);
        assert_eq!(v.devectorize(&s), vec![("a".into(), 7.0), ("b".into(), 2.0)]);
        let (none, _) = parse_line("1\tunknown:1").unwrap();
        assert!(v.vectorize(&none).is_empty());
    }
}
