use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SanModel;
use crate::nn::Matrix;
use crate::rplr::mixture::{posterior_beta, weight, MixtureParams};
use crate::rplr::sphere::{cosine_distance, normalize_to_sphere, CenterAccumulator, SphericalCenters};

/// Pseudo-label of one unlabeled example and its reliability.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PseudoLabelRecord {
    pub domain: usize,
    pub id: usize,
    pub pseudo_label: usize,
    /// Cosine distance to the center of `pseudo_label`; `None` when the feature
    /// vector or the center could not be normalized.
    pub distance: Option<f64>,
    /// Posterior probability that `pseudo_label` is correct.
    pub beta: f64,
    pub weight: f64,
}

/// Rows of one domain's data, dense.
pub struct Chunk {
    pub domain: usize,
    pub ids: Vec<usize>,
    pub x: Matrix,
    /// Present for labeled data only.
    pub labels: Option<Vec<usize>>,
}

/// Class centers on the sphere from labeled data, with features taken in mean mode.
pub fn centers_from_labeled(
    model: &SanModel,
    chunks: impl IntoIterator<Item = Result<Chunk>>,
    radius: f64,
) -> Result<SphericalCenters> {
    let arch = model.architecture();
    let mut acc = CenterAccumulator::new(arch.num_classes, arch.concat_dim(), radius);
    let mut skipped = 0usize;
    for chunk in chunks {
        let chunk = chunk?;
        let labels = chunk
            .labels
            .as_ref()
            .ok_or_else(|| Error::Data("center chunk without labels".into()))?;
        let f = model.features(&chunk.x, &vec![chunk.domain; chunk.x.rows()])?;
        for (r, &y) in labels.iter().enumerate() {
            match normalize_to_sphere(f.concat.row(r), radius, "labeled feature") {
                Ok(p) => acc.add(&p, y)?,
                Err(Error::Normalization { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} labeled examples have all-zero features and were left out of the class centers");
    }
    acc.finish()
}

/// Argmax pseudo-labels (ties to the lowest class) and their distances to the
/// matching class center. β and w are left at zero.
pub fn generate_pseudo_labels(
    model: &SanModel,
    centers: &SphericalCenters,
    chunks: impl IntoIterator<Item = Result<Chunk>>,
) -> Result<Vec<PseudoLabelRecord>> {
    let mut out = Vec::new();
    let mut unmeasured = 0usize;
    for chunk in chunks {
        let chunk = chunk?;
        if chunk.ids.len() != chunk.x.rows() {
            return Err(Error::shape("pseudo-label chunk", chunk.x.rows(), chunk.ids.len()));
        }
        let f = model.features(&chunk.x, &vec![chunk.domain; chunk.x.rows()])?;
        let lp = model.classify(&f.concat)?;
        for (r, &id) in chunk.ids.iter().enumerate() {
            let y = lp.argmax_row(r);
            let distance = match centers.center(y) {
                Some(c) => match cosine_distance(f.concat.row(r), c) {
                    Ok(d) => Some(d),
                    Err(Error::Normalization { .. }) => None,
                    Err(e) => return Err(e),
                },
                None => None,
            };
            if distance.is_none() {
                unmeasured += 1;
            }
            out.push(PseudoLabelRecord {
                domain: chunk.domain,
                id,
                pseudo_label: y,
                distance,
                beta: 0.0,
                weight: 0.0,
            });
        }
    }
    if unmeasured > 0 {
        log::warn!("{unmeasured} unlabeled examples have no measurable distance and get weight 0");
    }
    Ok(out)
}

/// Fills β and w from the fitted mixture.
pub fn assign_weights(records: &mut [PseudoLabelRecord], phi: &MixtureParams) {
    for r in records {
        let (beta, w) = match (r.distance, phi.get(r.pseudo_label)) {
            (Some(d), Some(m)) => {
                let b = posterior_beta(d, m);
                (b, weight(b))
            }
            _ => (0.0, 0.0),
        };
        r.beta = beta;
        r.weight = w;
    }
}

/// Records indexed by `(domain, id)`.
#[derive(Clone, Debug, Default)]
pub struct PseudoLabelTable {
    records: Vec<PseudoLabelRecord>,
    index: HashMap<(usize, usize), usize>,
}

impl PseudoLabelTable {
    pub fn new(records: Vec<PseudoLabelRecord>) -> Self {
        let index = records
            .iter()
            .enumerate()
            .map(|(i, r)| ((r.domain, r.id), i))
            .collect();
        Self { records, index }
    }

    pub fn get(&self, domain: usize, id: usize) -> Option<&PseudoLabelRecord> {
        self.index.get(&(domain, id)).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[PseudoLabelRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn n_valid(&self) -> usize {
        self.records.iter().filter(|r| r.weight > 0.0).count()
    }

    /// CSV with header `id,domain,pseudo_label,distance,beta,weight`.
    pub fn to_csv(&self, domain_names: &[String]) -> String {
        let mut s = String::from("id,domain,pseudo_label,distance,beta,weight\n");
        for r in &self.records {
            let name = domain_names
                .get(r.domain)
                .cloned()
                .unwrap_or_else(|| r.domain.to_string());
            let d = r.distance.map(|d| d.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{},{}", r.id, name, r.pseudo_label, d, r.beta, r.weight);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rplr::mixture::ClassMixture;

    fn rec(d: Option<f64>, y: usize) -> PseudoLabelRecord {
        PseudoLabelRecord {
            domain: 0,
            id: 0,
            pseudo_label: y,
            distance: d,
            beta: 0.0,
            weight: 0.0,
        }
    }

    #[test]
    fn weights_follow_posterior() {
        let phi = MixtureParams {
            classes: vec![ClassMixture { pi: 0.7, sigma: 0.01, delta: 1.0 }],
        };
        let mut rs = vec![rec(Some(0.0), 0), rec(Some(0.9), 0), rec(None, 0)];
        assign_weights(&mut rs, &phi);
        assert!(rs[0].beta > 0.9 && rs[0].weight == rs[0].beta);
        assert!(rs[1].beta < 0.5 && rs[1].weight == 0.0);
        assert_eq!((rs[2].beta, rs[2].weight), (0.0, 0.0));
    }

    #[test]
    fn table_lookup_and_csv() {
        let mut a = rec(Some(0.25), 1);
        a.id = 7;
        a.domain = 1;
        a.beta = 0.8;
        a.weight = 0.8;
        let t = PseudoLabelTable::new(vec![a.clone(), rec(None, 0)]);
        assert_eq!(t.get(1, 7), Some(&a));
        assert!(t.get(0, 7).is_none());
        assert_eq!(t.n_valid(), 1);
        let csv = t.to_csv(&["books".into(), "dvd".into()]);
        assert_eq!(csv.lines().nth(1).unwrap(), "7,dvd,1,0.25,0.8,0.8");
        assert_eq!(csv.lines().nth(2).unwrap(), "0,books,0,,0,0");
    }
}
