use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Rng;
use crate::rplr::mixture::{mirrored_beta, mirrored_log_density, ClassMixture, MixtureFloors, MixtureParams};

/// How the uniform half-width is re-estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmMode {
    /// Outlier moments weighted by `(1−β)/(1−π)` and normalized by `Σβ`.
    #[default]
    Paper,
    /// Outlier moments weighted by `1−β` and normalized by `Σ(1−β)`. The new
    /// δ is accepted only if it does not lower the observed log-likelihood.
    Moment,
}

impl std::str::FromStr for EmMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(EmMode::Paper),
            "moment" => Ok(EmMode::Moment),
            other => Err(Error::Config(format!(
                "unknown EM mode {other:?} (expected paper or moment)"
            ))),
        }
    }
}

impl std::fmt::Display for EmMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EmMode::Paper => "paper",
            EmMode::Moment => "moment",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub mode: EmMode,
    /// Classes with fewer samples keep the prior.
    pub min_samples: usize,
    pub floors: MixtureFloors,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 20,
            tol: 1e-5,
            mode: EmMode::Paper,
            min_samples: 10,
            floors: MixtureFloors::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassFit {
    pub params: ClassMixture,
    pub samples: usize,
    /// False when the class had too few samples and kept the prior.
    pub fitted: bool,
    pub iterations: usize,
    pub max_delta: f64,
    /// Observed-data log-likelihood of the mirrored sample at the initial
    /// parameters and after each iteration.
    pub log_likelihood: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EmFit {
    pub mode: EmMode,
    pub classes: Vec<ClassFit>,
}

impl EmFit {
    pub fn params(&self) -> MixtureParams {
        MixtureParams {
            classes: self.classes.iter().map(|c| c.params).collect(),
        }
    }

    pub fn iterations(&self) -> usize {
        self.classes.iter().map(|c| c.iterations).max().unwrap_or(0)
    }

    pub fn max_delta(&self) -> f64 {
        self.classes
            .iter()
            .filter(|c| c.fitted)
            .map(|c| c.max_delta)
            .fold(0.0, f64::max)
    }
}

/// Fits one mixture per class to `distances` grouped by `labels`.
///
/// Each distance is mirrored once with an independent fair sign before the
/// iterations start.
pub fn em_fit(
    distances: &[f64],
    labels: &[usize],
    num_classes: usize,
    cfg: &EmConfig,
    rng: &mut Rng,
) -> Result<EmFit> {
    if distances.len() != labels.len() {
        return Err(Error::shape("em_fit", distances.len(), labels.len()));
    }
    if let Some((i, d)) = distances.iter().enumerate().find(|(_, d)| !(**d >= 0.0)) {
        return Err(Error::Data(format!("distance {d} at row {i} is negative or NaN")));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::Data(format!(
            "class {bad} out of range for {num_classes} classes"
        )));
    }

    let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); num_classes];
    for (&d, &y) in distances.iter().zip(labels) {
        let signed = if rng.bernoulli(0.5) { -d } else { d };
        per_class[y].push(signed);
    }

    if num_classes > 1 {
        let populated = per_class.iter().filter(|v| !v.is_empty()).count();
        if populated == 1 {
            log::warn!("all distances belong to one class; other classes keep the prior");
        }
    }

    let classes = per_class
        .iter()
        .enumerate()
        .map(|(k, sample)| {
            if sample.len() < cfg.min_samples.max(1) {
                if !sample.is_empty() {
                    log::warn!(
                        "class {k}: {} samples below minimum {}; keeping prior",
                        sample.len(),
                        cfg.min_samples
                    );
                }
                return ClassFit {
                    params: ClassMixture::PRIOR,
                    samples: sample.len(),
                    fitted: false,
                    iterations: 0,
                    max_delta: 0.0,
                    log_likelihood: Vec::new(),
                };
            }
            fit_class(sample, cfg)
        })
        .collect();
    Ok(EmFit {
        mode: cfg.mode,
        classes,
    })
}

fn log_likelihood(sample: &[f64], m: &ClassMixture) -> f64 {
    sample.iter().map(|&d| mirrored_log_density(d, m)).sum()
}

/// EM on one class's mirrored distances.
pub fn fit_class(sample: &[f64], cfg: &EmConfig) -> ClassFit {
    let n = sample.len() as f64;
    let mean_sq = sample.iter().map(|d| d * d).sum::<f64>() / n;
    let max_abs = sample.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    let mut m = ClassMixture {
        pi: 0.5,
        sigma: mean_sq,
        delta: max_abs,
    }
    .clamped(&cfg.floors);

    let mut ll = vec![log_likelihood(sample, &m)];
    let mut beta = vec![0.0; sample.len()];
    let mut iterations = 0;
    let mut max_delta = f64::INFINITY;

    while iterations < cfg.max_iters {
        for (b, &d) in beta.iter_mut().zip(sample) {
            *b = mirrored_beta(d, &m);
        }
        let sum_b: f64 = beta.iter().sum();
        let sum_nb = n - sum_b;
        let pi = sum_b / n;
        let sigma = if sum_b > 0.0 {
            beta.iter().zip(sample).map(|(b, d)| b * d * d).sum::<f64>() / sum_b
        } else {
            m.sigma
        };

        let (q1, q2) = match cfg.mode {
            EmMode::Paper => {
                // Normalizer Σβ, weights (1−β)/(1−π) with the freshly updated π.
                let one_minus_pi = (1.0 - pi).max(cfg.floors.pi_min);
                let norm = sum_b.max(f64::MIN_POSITIVE);
                let (mut s1, mut s2) = (0.0, 0.0);
                for (b, d) in beta.iter().zip(sample) {
                    let w = (1.0 - b) / one_minus_pi;
                    s1 += w * d;
                    s2 += w * d * d;
                }
                (s1 / norm, s2 / norm)
            }
            EmMode::Moment => {
                if sum_nb > 0.0 {
                    let (mut s1, mut s2) = (0.0, 0.0);
                    for (b, d) in beta.iter().zip(sample) {
                        s1 += (1.0 - b) * d;
                        s2 += (1.0 - b) * d * d;
                    }
                    (s1 / sum_nb, s2 / sum_nb)
                } else {
                    (0.0, m.delta * m.delta / 3.0)
                }
            }
        };
        let delta = (3.0 * (q2 - q1 * q1).max(1e-8)).sqrt();

        let mut next = ClassMixture { pi, sigma, delta }.clamped(&cfg.floors);
        let mut next_ll = log_likelihood(sample, &next);
        if cfg.mode == EmMode::Moment {
            // the moment update of δ is not a likelihood step; keep the old δ when it loses
            let held = ClassMixture { delta: m.delta, ..next };
            let held_ll = log_likelihood(sample, &held);
            if held_ll > next_ll {
                next = held;
                next_ll = held_ll;
            }
        }
        max_delta = (next.pi - m.pi)
            .abs()
            .max((next.sigma - m.sigma).abs())
            .max((next.delta - m.delta).abs());
        m = next;
        iterations += 1;
        ll.push(next_ll);
        if max_delta < cfg.tol {
            break;
        }
    }

    ClassFit {
        params: m,
        samples: sample.len(),
        fitted: true,
        iterations,
        max_delta,
        log_likelihood: ll,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moment() -> EmConfig {
        EmConfig {
            mode: EmMode::Moment,
            ..Default::default()
        }
    }

    #[test]
    fn pure_uniform_recovers_half_width() {
        let mut rng = Rng::new(21);
        let d0 = 0.8;
        let d: Vec<f64> = (0..10_000).map(|_| rng.uniform() * d0).collect();
        let fit = em_fit(&d, &vec![0; d.len()], 1, &moment(), &mut Rng::new(1)).unwrap();
        let p = fit.classes[0].params;
        assert!((p.delta - d0).abs() / d0 < 0.05, "{p:?}");
    }

    #[test]
    fn pure_gaussian_pushes_pi_up_and_recovers_variance() {
        let mut rng = Rng::new(22);
        let s0: f64 = 0.05;
        let d: Vec<f64> = (0..10_000).map(|_| (rng.normal() * s0.sqrt()).abs()).collect();
        let cfg = EmConfig {
            max_iters: 1000,
            ..moment()
        };
        let fit = em_fit(&d, &vec![0; d.len()], 1, &cfg, &mut Rng::new(2)).unwrap();
        let p = fit.classes[0].params;
        assert!(p.pi > 0.9, "{p:?}");
        assert!((p.sigma - s0).abs() / s0 < 0.05, "{p:?}");
    }

    #[test]
    fn moment_mode_log_likelihood_never_drops() {
        let mut rng = Rng::new(4);
        let d: Vec<f64> = (0..5000)
            .map(|_| if rng.uniform() < 0.6 { (rng.normal() * 0.2).abs() } else { rng.uniform() * 1.5 })
            .collect();
        let fit = em_fit(&d, &vec![0; d.len()], 1, &moment(), &mut Rng::new(5)).unwrap();
        for w in fit.classes[0].log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "{w:?}");
        }
    }

    #[test]
    fn negative_distance_rejected() {
        let e = em_fit(&[0.1, -0.2], &[0, 0], 1, &EmConfig::default(), &mut Rng::new(0)).unwrap_err();
        assert!(e.to_string().contains("row 1"));
    }

    #[test]
    fn small_classes_keep_prior() {
        let d = vec![0.1; 15];
        let mut y = vec![0; 15];
        y[0] = 1;
        let fit = em_fit(&d, &y, 3, &EmConfig::default(), &mut Rng::new(0)).unwrap();
        assert!(fit.classes[0].fitted);
        assert!(!fit.classes[1].fitted);
        assert_eq!(fit.classes[2].params, ClassMixture::PRIOR);
    }

    #[test]
    fn same_mirror_seed_is_bit_identical() {
        let mut rng = Rng::new(3);
        let d: Vec<f64> = (0..500).map(|_| rng.uniform()).collect();
        let y: Vec<usize> = (0..500).map(|i| i % 2).collect();
        let a = em_fit(&d, &y, 2, &EmConfig::default(), &mut Rng::new(9)).unwrap();
        let b = em_fit(&d, &y, 2, &EmConfig::default(), &mut Rng::new(9)).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn paper_mode_stays_finite_on_degenerate_input() {
        let d = vec![0.0; 50];
        let fit = em_fit(&d, &vec![0; 50], 1, &EmConfig::default(), &mut Rng::new(0)).unwrap();
        let p = fit.classes[0].params;
        assert!(p.pi.is_finite() && p.sigma > 0.0 && p.delta > 0.0);
    }
}
