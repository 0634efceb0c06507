use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Norms below this are treated as zero.
pub const NORM_FLOOR: f64 = 1e-12;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Projects `f` onto the sphere of radius `r`: `r·f/‖f‖`.
pub fn normalize_to_sphere(f: &[f64], r: f64, what: &str) -> Result<Vec<f64>> {
    let n = norm(f);
    if n <= NORM_FLOOR {
        return Err(Error::Normalization {
            what: what.to_string(),
            norm: n,
            floor: NORM_FLOOR,
        });
    }
    Ok(f.iter().map(|x| r * x / n).collect())
}

/// Cosine distance `1 − f·c/(‖f‖‖c‖)`, in `[0, 2]`.
pub fn cosine_distance(f: &[f64], c: &[f64]) -> Result<f64> {
    let (nf, nc) = (norm(f), norm(c));
    for (n, what) in [(nf, "feature vector"), (nc, "class center")] {
        if n <= NORM_FLOOR {
            return Err(Error::Normalization {
                what: what.into(),
                norm: n,
                floor: NORM_FLOOR,
            });
        }
    }
    let dot: f64 = f.iter().zip(c).map(|(a, b)| a * b).sum();
    Ok((1.0 - dot / (nf * nc)).clamp(0.0, 2.0))
}

/// Per-class centers on the sphere of radius `radius`.
#[derive(Clone, Debug, Serialize)]
pub struct SphericalCenters {
    pub radius: f64,
    /// `None` marks a class with no members.
    pub centers: Vec<Option<Vec<f64>>>,
    pub counts: Vec<usize>,
}

impl SphericalCenters {
    pub fn center(&self, k: usize) -> Option<&[f64]> {
        self.centers.get(k)?.as_deref()
    }
}

/// Running per-class sums so centers can be built from streamed chunks.
#[derive(Clone, Debug)]
pub struct CenterAccumulator {
    radius: f64,
    sums: Vec<Vec<f64>>,
    counts: Vec<usize>,
}

impl CenterAccumulator {
    pub fn new(num_classes: usize, dim: usize, radius: f64) -> Self {
        Self {
            radius,
            sums: vec![vec![0.0; dim]; num_classes],
            counts: vec![0; num_classes],
        }
    }

    /// Adds one point that already lies on the sphere.
    pub fn add(&mut self, point: &[f64], label: usize) -> Result<()> {
        let k = self.sums.len();
        let sum = self
            .sums
            .get_mut(label)
            .ok_or_else(|| Error::Data(format!("label {label} out of range for {k} classes")))?;
        if point.len() != sum.len() {
            return Err(Error::shape("class center input", sum.len(), point.len()));
        }
        for (s, p) in sum.iter_mut().zip(point) {
            *s += p;
        }
        self.counts[label] += 1;
        Ok(())
    }

    /// The Lagrange-multiplier solution `C = r·Σf'/‖Σf'‖`.
    pub fn finish(self) -> Result<SphericalCenters> {
        let mut centers = Vec::with_capacity(self.sums.len());
        for (k, (sum, &n)) in self.sums.iter().zip(&self.counts).enumerate() {
            if n == 0 {
                centers.push(None);
                continue;
            }
            let s = norm(sum);
            if s < NORM_FLOOR {
                return Err(Error::DegenerateCenter { class: k, norm: s });
            }
            centers.push(Some(sum.iter().map(|v| self.radius * v / s).collect()));
        }
        Ok(SphericalCenters {
            radius: self.radius,
            centers,
            counts: self.counts,
        })
    }
}

/// Centers of `features` (rows already on the sphere) grouped by `labels`.
pub fn class_centers(
    features: &Matrix,
    labels: &[usize],
    num_classes: usize,
    radius: f64,
) -> Result<SphericalCenters> {
    if labels.len() != features.rows() {
        return Err(Error::shape("class_centers labels", features.rows(), labels.len()));
    }
    let mut acc = CenterAccumulator::new(num_classes, features.cols(), radius);
    for (r, &y) in labels.iter().enumerate() {
        acc.add(features.row(r), y)?;
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Rng;
    use proptest::prelude::*;

    #[test]
    fn normalize_three_four() {
        let v = normalize_to_sphere(&[3.0, 4.0], 1.0, "x").unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalize_zero_vector_errors() {
        let e = normalize_to_sphere(&[0.0, 0.0], 1.0, "example 17").unwrap_err();
        assert!(e.to_string().contains("example 17"));
    }

    #[test]
    fn single_member_center_is_member() {
        let f = Matrix::from_rows(&[[0.6, 0.8]]);
        let c = class_centers(&f, &[0], 2, 1.0).unwrap();
        assert_eq!(c.center(0).unwrap(), &[0.6, 0.8]);
        assert!(c.center(1).is_none());
        assert_eq!(c.counts, vec![1, 0]);
    }

    #[test]
    fn orthogonal_pair_center() {
        let f = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        let c = class_centers(&f, &[0, 0], 1, 1.0).unwrap();
        let h = 1.0 / 2f64.sqrt();
        let got = c.center(0).unwrap();
        assert!((got[0] - h).abs() < 1e-15 && (got[1] - h).abs() < 1e-15);
    }

    #[test]
    fn antipodal_class_is_degenerate() {
        let f = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]);
        assert!(matches!(
            class_centers(&f, &[0, 0], 1, 1.0),
            Err(Error::DegenerateCenter { class: 0, .. })
        ));
    }

    #[test]
    fn distance_landmarks() {
        let c = [0.0, 2.0, 0.0];
        assert!(cosine_distance(&c, &c).unwrap().abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 0.0, 0.0], &c).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_distance(&[0.0, -5.0, 0.0], &c).unwrap() - 2.0).abs() < 1e-15);
        assert!(cosine_distance(&[0.0; 3], &c).is_err());
    }

    #[test]
    fn center_norm_equals_radius() {
        let mut rng = Rng::new(3);
        for r in [0.5, 1.0, 7.0] {
            let rows: Vec<Vec<f64>> = (0..20)
                .map(|_| {
                    let v: Vec<f64> = (0..5).map(|_| rng.normal() + 1.0).collect();
                    normalize_to_sphere(&v, r, "v").unwrap()
                })
                .collect();
            let labels: Vec<usize> = (0..20).map(|i| i % 3).collect();
            let c = class_centers(&Matrix::from_rows(&rows), &labels, 3, r).unwrap();
            for k in 0..3 {
                assert!((norm(c.center(k).unwrap()) - r).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn renormalizing_is_a_fixed_point(v in prop::collection::vec(-100.0f64..100.0, 2..8), r in 0.1f64..10.0) {
            prop_assume!(norm(&v) > 1e-3);
            let a = normalize_to_sphere(&v, r, "v").unwrap();
            let b = normalize_to_sphere(&a, r, "v").unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12 * r.max(1.0));
            }
            prop_assert!((norm(&a) - r).abs() < 1e-12 * r.max(1.0));
        }

        #[test]
        fn distance_is_radius_invariant(
            v in prop::collection::vec(-10.0f64..10.0, 3),
            c in prop::collection::vec(-10.0f64..10.0, 3),
            r in 0.1f64..10.0,
        ) {
            prop_assume!(norm(&v) > 1e-3 && norm(&c) > 1e-3);
            let d1 = cosine_distance(&v, &c).unwrap();
            let vs = normalize_to_sphere(&v, r, "v").unwrap();
            let cs = normalize_to_sphere(&c, r, "c").unwrap();
            let d2 = cosine_distance(&vs, &cs).unwrap();
            prop_assert!((d1 - d2).abs() < 1e-12);
            prop_assert!((0.0..=2.0).contains(&d1));
        }

        #[test]
        fn centers_invariant_to_positive_rescaling(
            pts in prop::collection::vec(prop::collection::vec(0.01f64..5.0, 4), 1..12),
            scale in 0.01f64..100.0,
        ) {
            let build = |s: f64| {
                let rows: Vec<Vec<f64>> = pts
                    .iter()
                    .map(|p| {
                        let scaled: Vec<f64> = p.iter().map(|v| v * s).collect();
                        normalize_to_sphere(&scaled, 1.0, "p").unwrap()
                    })
                    .collect();
                class_centers(&Matrix::from_rows(&rows), &vec![0; rows.len()], 1, 1.0).unwrap()
            };
            let a = build(1.0);
            let b = build(scale);
            for (x, y) in a.center(0).unwrap().iter().zip(b.center(0).unwrap()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
