//! Multi-domain bag-of-features corpora: TSV ingestion, vocabulary,
//! vectorization and a synthetic generator with known ground truth.

pub mod synth;
pub mod tsv;
mod vocab;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

pub use synth::{mixture_distances, synth_generate, MixtureDraw, SynthLayout, SynthSpec};
pub use tsv::{load_corpus, write_corpus, RawDomain, RawExample};
pub use vocab::{build_vocab, Vocabulary};

/// A vectorized example. `id` is its position within its split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: usize,
    /// `(index, count)` sorted by index.
    pub features: Vec<(u32, f64)>,
    pub label: Option<usize>,
}

/// Ground-truth labels of unlabeled examples. They can only be used to score
/// predictions; there is no accessor that returns them.
///
/// ```compile_fail
/// fn peek(d: &san::data::DomainDataset) -> Vec<Option<usize>> {
///     d.hidden().gold.clone()
/// }
/// ```
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HiddenLabels {
    gold: Vec<Option<usize>>,
}

impl HiddenLabels {
    pub fn new(gold: Vec<Option<usize>>) -> Self {
        Self { gold }
    }

    /// Number of unlabeled examples with a known label.
    pub fn known(&self) -> usize {
        self.gold.iter().filter(|g| g.is_some()).count()
    }

    /// Fraction of `(id, label)` predictions that match, over ids with a known
    /// label. `None` when no prediction can be scored.
    pub fn accuracy_of(&self, predictions: impl IntoIterator<Item = (usize, usize)>) -> Option<f64> {
        let (hit, n) = self.score(predictions);
        (n > 0).then(|| hit as f64 / n as f64)
    }

    /// `(correct, scored)` counts over ids with a known label.
    pub fn score(&self, predictions: impl IntoIterator<Item = (usize, usize)>) -> (usize, usize) {
        let (mut hit, mut n) = (0usize, 0usize);
        for (id, y) in predictions {
            if let Some(Some(g)) = self.gold.get(id) {
                n += 1;
                hit += usize::from(*g == y);
            }
        }
        (hit, n)
    }
}

#[derive(Clone, Debug)]
pub struct DomainDataset {
    pub name: String,
    pub labeled: Vec<Example>,
    pub unlabeled: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    hidden: HiddenLabels,
}

impl DomainDataset {
    pub fn new(
        name: impl Into<String>,
        labeled: Vec<Example>,
        unlabeled: Vec<Example>,
        dev: Vec<Example>,
        test: Vec<Example>,
        hidden: HiddenLabels,
    ) -> Self {
        Self {
            name: name.into(),
            labeled,
            unlabeled,
            dev,
            test,
            hidden,
        }
    }

    pub fn hidden(&self) -> &HiddenLabels {
        &self.hidden
    }
}

/// Vectorized domains sharing one input space.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub domains: Vec<DomainDataset>,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Present when the corpus came from text features.
    pub vocabulary: Option<Vocabulary>,
}

impl Corpus {
    /// Vectorizes raw domains. `num_classes` defaults to one past the largest label.
    pub fn from_raw(raw: &[RawDomain], vocab: Vocabulary, num_classes: Option<usize>) -> Result<Self> {
        let max_label = raw
            .iter()
            .flat_map(|d| {
                d.labeled
                    .iter()
                    .chain(d.dev.iter().flatten())
                    .chain(d.test.iter().flatten())
                    .filter_map(|e| e.label)
                    .chain(d.unlabeled.iter().filter_map(|e| e.gold))
            })
            .max();
        let k = match (num_classes, max_label) {
            (Some(k), Some(m)) if m >= k => {
                return Err(Error::Data(format!("label {m} out of range for {k} classes")))
            }
            (Some(k), _) => k,
            (None, Some(m)) => (m + 1).max(2),
            (None, None) => 2,
        };
        let vec_split = |exs: &[RawExample]| -> Vec<Example> {
            exs.iter()
                .enumerate()
                .map(|(id, e)| Example {
                    id,
                    features: vocab.vectorize(e),
                    label: e.label,
                })
                .collect()
        };
        let domains = raw
            .iter()
            .map(|d| {
                DomainDataset::new(
                    d.name.clone(),
                    vec_split(&d.labeled),
                    vec_split(&d.unlabeled),
                    d.dev.as_deref().map(vec_split).unwrap_or_default(),
                    d.test.as_deref().map(vec_split).unwrap_or_default(),
                    HiddenLabels::new(d.unlabeled.iter().map(|e| e.gold).collect()),
                )
            })
            .collect();
        Ok(Self {
            domains,
            input_dim: vocab.len(),
            num_classes: k,
            vocabulary: Some(vocab),
        })
    }

    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn domain_names(&self) -> Vec<String> {
        self.domains.iter().map(|d| d.name.clone()).collect()
    }

    pub fn domain_index(&self, name_or_id: &str) -> Result<usize> {
        if let Some(i) = self.domains.iter().position(|d| d.name == name_or_id) {
            return Ok(i);
        }
        match name_or_id.parse::<usize>() {
            Ok(i) if i < self.domains.len() => Ok(i),
            _ => Err(Error::Config(format!(
                "unknown domain {name_or_id:?}; known: {}",
                self.domain_names().join(", ")
            ))),
        }
    }

    /// Raw form with feature names `f<index>` (or vocabulary names), for export.
    pub fn to_raw(&self) -> Vec<RawDomain> {
        let name = |i: u32| -> String {
            self.vocabulary
                .as_ref()
                .and_then(|v| v.feature(i).map(str::to_string))
                .unwrap_or_else(|| format!("f{i:04}"))
        };
        let raw_split = |exs: &[Example], gold: Option<&HiddenLabels>| -> Vec<RawExample> {
            exs.iter()
                .map(|e| {
                    let mut features: Vec<(String, f64)> = e
                        .features
                        .iter()
                        .filter(|(_, c)| *c != 0.0)
                        .map(|&(i, c)| (name(i), c))
                        .collect();
                    features.sort_by(|a, b| a.0.cmp(&b.0));
                    RawExample {
                        label: e.label,
                        features,
                        gold: gold.and_then(|h| h.gold.get(e.id).copied().flatten()),
                    }
                })
                .collect()
        };
        self.domains
            .iter()
            .map(|d| RawDomain {
                name: d.name.clone(),
                labeled: raw_split(&d.labeled, None),
                unlabeled: raw_split(&d.unlabeled, Some(&d.hidden)),
                dev: (!d.dev.is_empty()).then(|| raw_split(&d.dev, None)),
                test: (!d.test.is_empty()).then(|| raw_split(&d.test, None)),
            })
            .collect()
    }
}

/// Dense rows of raw counts.
pub fn densify<'a>(examples: impl IntoIterator<Item = &'a Example>, dim: usize) -> Matrix {
    let mut data = Vec::new();
    let mut rows = 0;
    for e in examples {
        let start = data.len();
        data.resize(start + dim, 0.0);
        for &(i, c) in &e.features {
            if (i as usize) < dim {
                data[start + i as usize] = c;
            }
        }
        rows += 1;
    }
    Matrix::from_vec(rows, dim, data).expect("row-major buffer matches shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tsv::parse_line;

    #[test]
    fn hidden_labels_only_score() {
        let h = HiddenLabels::new(vec![Some(1), None, Some(0)]);
        assert_eq!(h.known(), 2);
        assert_eq!(h.accuracy_of([(0, 1), (1, 0), (2, 1)]), Some(0.5));
        assert_eq!(h.accuracy_of([(1, 0)]), None);
    }

    #[test]
    fn corpus_from_raw_infers_classes_and_keeps_gold_hidden() {
        let lab: Vec<RawExample> = ["0\ta:1", "2\tb:1"].iter().map(|l| parse_line(l).unwrap().0).collect();
        let unl = vec![RawExample {
            label: None,
            features: vec![("a".into(), 1.0)],
            gold: Some(1),
        }];
        let raw = vec![RawDomain {
            name: "x".into(),
            labeled: lab,
            unlabeled: unl,
            dev: None,
            test: None,
        }];
        let v = build_vocab(&raw, 10);
        let c = Corpus::from_raw(&raw, v, None).unwrap();
        assert_eq!(c.num_classes, 3);
        assert_eq!(c.domains[0].unlabeled[0].label, None);
        assert_eq!(c.domains[0].hidden().accuracy_of([(0, 1)]), Some(1.0));
        assert_eq!(c.to_raw(), raw);
    }

    #[test]
    fn densify_places_counts() {
        let e = Example {
            id: 0,
            features: vec![(1, 2.0), (3, 1.0)],
            label: None,
        };
        let m = densify([&e, &e], 4);
        assert_eq!(m.row(1), &[0.0, 2.0, 0.0, 1.0]);
        assert_eq!(densify(std::iter::empty(), 4).shape(), (0, 4));
    }
}
