use serde::{Deserialize, Serialize};

use crate::data::{densify, Corpus, Example};
use crate::error::{Error, Result};
use crate::model::{Features, SanModel};
use crate::nn::{Matrix, Rng};

/// Rows per forward pass during evaluation.
pub const EVAL_CHUNK: usize = 256;

/// What happens to the domain-specific half of the feature at test time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// Specific features replaced by zeros.
    Zero,
    /// Specific features taken from a random example of another domain.
    Shuffle,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::None, Ablation::Zero, Ablation::Shuffle];
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Ablation::None),
            "zero" => Ok(Ablation::Zero),
            "shuffle" => Ok(Ablation::Shuffle),
            other => Err(Error::Config(format!(
                "unknown ablation {other:?} (expected none, zero or shuffle)"
            ))),
        }
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Ablation::None => "none",
            Ablation::Zero => "zero",
            Ablation::Shuffle => "shuffle",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Dev,
    Test,
}

impl Split {
    fn of<'a>(&self, corpus: &'a Corpus, domain: usize) -> &'a [Example] {
        let d = &corpus.domains[domain];
        match self {
            Split::Dev => &d.dev,
            Split::Test => &d.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainAccuracy {
    pub domain: String,
    pub n: usize,
    pub accuracy: f64,
}

/// Accuracy per evaluated domain. Domains with an empty split are left out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub ablation: Ablation,
    pub per_domain: Vec<DomainAccuracy>,
    /// Unweighted mean over `per_domain`; `None` when nothing was evaluated.
    pub average: Option<f64>,
}

impl EvalReport {
    pub fn accuracy(&self, domain: &str) -> Option<f64> {
        self.per_domain
            .iter()
            .find(|d| d.domain == domain)
            .map(|d| d.accuracy)
    }
}

fn split_features(model: &SanModel, corpus: &Corpus, split: Split, domain: usize) -> Result<(Features, Vec<usize>)> {
    let exs = split.of(corpus, domain);
    let mut shared = Vec::new();
    let mut specific = Vec::new();
    let mut labels = Vec::with_capacity(exs.len());
    for part in exs.chunks(EVAL_CHUNK) {
        let x = densify(part, corpus.input_dim);
        let f = model.features(&x, &vec![domain; part.len()])?;
        shared.push(f.shared);
        specific.push(f.specific);
        for e in part {
            labels.push(
                e.label
                    .ok_or_else(|| Error::Data(format!("unlabeled example {} in an evaluation split", e.id)))?,
            );
        }
    }
    let arch = model.architecture();
    let shared = Matrix::stack(&shared.iter().collect::<Vec<_>>(), arch.shared_dim)?;
    let specific = Matrix::stack(&specific.iter().collect::<Vec<_>>(), arch.specific_dim)?;
    let concat = shared.hcat(&specific)?;
    Ok((
        Features {
            shared,
            specific,
            concat,
        },
        labels,
    ))
}

fn accuracy(model: &SanModel, concat: &Matrix, labels: &[usize]) -> Result<f64> {
    let mut hit = 0usize;
    for start in (0..labels.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(labels.len());
        let rows: Vec<usize> = (start..end).collect();
        let lp = model.classify(&concat.select_rows(&rows))?;
        hit += rows
            .iter()
            .enumerate()
            .filter(|&(r, &i)| lp.argmax_row(r) == labels[i])
            .count();
    }
    Ok(hit as f64 / labels.len() as f64)
}

/// Mean-mode accuracy per domain on `split`. `seed` fixes the draws of the
/// shuffle ablation.
pub fn evaluate(model: &SanModel, corpus: &Corpus, split: Split, ablation: Ablation, seed: u64) -> Result<EvalReport> {
    let m = corpus.num_domains();
    if ablation == Ablation::Shuffle && m < 2 {
        return Err(Error::Config("shuffle ablation needs at least two domains".into()));
    }
    let arch = model.architecture();
    if arch.input_dim != corpus.input_dim || arch.num_domains != m || arch.num_classes < corpus.num_classes {
        return Err(Error::Config(format!(
            "model expects {} inputs, {} domains and {} classes; data has {}, {} and {}",
            arch.input_dim, arch.num_domains, arch.num_classes, corpus.input_dim, m, corpus.num_classes
        )));
    }
    let feats = (0..m)
        .map(|i| split_features(model, corpus, split, i))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = Rng::new(seed).derive("eval/shuffle");
    let mut per_domain = Vec::new();
    for (i, (f, labels)) in feats.iter().enumerate() {
        if labels.is_empty() {
            continue;
        }
        let concat = match ablation {
            Ablation::None => f.concat.clone(),
            Ablation::Zero => f.shared.hcat(&Matrix::zeros(labels.len(), arch.specific_dim))?,
            Ablation::Shuffle => {
                let donors: Vec<usize> = (0..m).filter(|&j| j != i && !feats[j].1.is_empty()).collect();
                if donors.is_empty() {
                    return Err(Error::Config(format!(
                        "shuffle ablation: no other domain has {split:?} examples"
                    )));
                }
                let mut spec = Matrix::zeros(labels.len(), arch.specific_dim);
                for r in 0..labels.len() {
                    let j = donors[rng.below(donors.len())];
                    let s = rng.below(feats[j].1.len());
                    spec.row_mut(r).copy_from_slice(feats[j].0.specific.row(s));
                }
                f.shared.hcat(&spec)?
            }
        };
        per_domain.push(DomainAccuracy {
            domain: corpus.domains[i].name.clone(),
            n: labels.len(),
            accuracy: accuracy(model, &concat, labels)?,
        });
    }
    let average = (!per_domain.is_empty())
        .then(|| per_domain.iter().map(|d| d.accuracy).sum::<f64>() / per_domain.len() as f64);
    Ok(EvalReport {
        split,
        ablation,
        per_domain,
        average,
    })
}
