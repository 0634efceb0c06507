//! Synthetic multi-domain corpora with known generating structure.
//!
//! The input space is cut into equal-width blocks:
//!
//! * a shared class block with one sub-block per class, lit by the class in
//!   every domain;
//! * one class block per domain, lit by the class inside its own domain and
//!   by a uniformly random sub-block elsewhere;
//! * one nuisance block per domain, lit by every example of that domain;
//! * leftover dimensions carrying noise only.
//!
//! Counts are `max(0, round(mean + noise·z))` with `z` standard normal.

use serde::{Deserialize, Serialize};

use crate::data::{Corpus, DomainDataset, Example, HiddenLabels};
use crate::error::{Error, Result};
use crate::nn::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_domains: usize,
    pub num_classes: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub dev: usize,
    pub test: usize,
    pub dim: usize,
    pub shared_strength: f64,
    pub specific_strength: f64,
    pub nuisance_strength: f64,
    pub noise: f64,
    /// Domain whose nuisance block gets `shift_strength` extra mean count.
    pub shift_domain: Option<usize>,
    pub shift_strength: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::preset("separable").expect("built-in preset")
    }
}

pub const PRESETS: &[&str] = &["separable", "msuda", "tiny"];

impl SynthSpec {
    pub fn preset(name: &str) -> Result<Self> {
        let separable = SynthSpec {
            num_domains: 3,
            num_classes: 2,
            labeled: 500,
            unlabeled: 1000,
            dev: 0,
            test: 400,
            dim: 200,
            shared_strength: 0.35,
            specific_strength: 0.85,
            nuisance_strength: 1.0,
            noise: 1.0,
            shift_domain: None,
            shift_strength: 0.0,
            seed: 0,
        };
        match name {
            "separable" => Ok(separable),
            "msuda" => Ok(SynthSpec {
                num_domains: 4,
                shared_strength: 0.5,
                specific_strength: 0.3,
                shift_domain: Some(3),
                shift_strength: 2.0,
                ..separable
            }),
            "tiny" => Ok(SynthSpec {
                labeled: 60,
                unlabeled: 120,
                test: 60,
                dim: 40,
                ..separable
            }),
            other => Err(Error::Config(format!(
                "unknown synthetic preset {other:?}; known: {}",
                PRESETS.join(", ")
            ))),
        }
    }

    /// Parses `preset=name,key=value,...`; keys override the preset, which
    /// defaults to `separable`.
    pub fn parse(s: &str) -> Result<Self> {
        let pairs: Vec<(&str, &str)> = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.split_once('=')
                    .map(|(k, v)| (k.trim(), v.trim()))
                    .ok_or_else(|| Error::Config(format!("synthetic spec entry {p:?} is not key=value")))
            })
            .collect::<Result<_>>()?;
        let preset = pairs
            .iter()
            .find(|(k, _)| *k == "preset")
            .map_or("separable", |(_, v)| v);
        let mut spec = Self::preset(preset)?;
        for (k, v) in pairs {
            spec.set(k, v)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("synthetic spec {key}={v:?} is not a valid number")))
        }
        match key {
            "preset" => {}
            "num_domains" | "domains" => self.num_domains = num(key, v)?,
            "num_classes" | "classes" => self.num_classes = num(key, v)?,
            "labeled" => self.labeled = num(key, v)?,
            "unlabeled" => self.unlabeled = num(key, v)?,
            "dev" => self.dev = num(key, v)?,
            "test" => self.test = num(key, v)?,
            "dim" => self.dim = num(key, v)?,
            "shared_strength" => self.shared_strength = num(key, v)?,
            "specific_strength" => self.specific_strength = num(key, v)?,
            "nuisance_strength" => self.nuisance_strength = num(key, v)?,
            "noise" => self.noise = num(key, v)?,
            "shift_domain" => {
                self.shift_domain = match v {
                    "" | "none" => None,
                    _ => Some(num(key, v)?),
                }
            }
            "shift_strength" => self.shift_strength = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            other => return Err(Error::Config(format!("unknown synthetic spec key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_domains < 1 || self.num_classes < 2 {
            return Err(Error::Config("synthetic data needs >= 1 domain and >= 2 classes".into()));
        }
        let need = self.num_classes * (self.num_domains + 1) + self.num_domains;
        if self.dim < need {
            return Err(Error::Config(format!(
                "dim {} too small for {} domains and {} classes (need >= {need})",
                self.dim, self.num_domains, self.num_classes
            )));
        }
        for (name, v) in [
            ("shared_strength", self.shared_strength),
            ("specific_strength", self.specific_strength),
            ("nuisance_strength", self.nuisance_strength),
            ("noise", self.noise),
            ("shift_strength", self.shift_strength),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if let Some(d) = self.shift_domain {
            if d >= self.num_domains {
                return Err(Error::Config(format!("shift_domain {d} out of range")));
            }
        }
        Ok(())
    }

    /// The canonical `key=value,...` form accepted by [`parse`](Self::parse).
    pub fn to_spec_string(&self) -> String {
        let shift = self.shift_domain.map_or("none".to_string(), |d| d.to_string());
        format!(
            "num_domains={},num_classes={},labeled={},unlabeled={},dev={},test={},dim={},\
             shared_strength={},specific_strength={},nuisance_strength={},noise={},\
             shift_domain={},shift_strength={},seed={}",
            self.num_domains,
            self.num_classes,
            self.labeled,
            self.unlabeled,
            self.dev,
            self.test,
            self.dim,
            self.shared_strength,
            self.specific_strength,
            self.nuisance_strength,
            self.noise,
            shift,
            self.shift_strength,
            self.seed
        )
    }

    pub fn layout(&self) -> SynthLayout {
        let (m, k) = (self.num_domains, self.num_classes);
        let width = self.dim / (k * (m + 1) + m);
        let shared = 0;
        let specific: Vec<usize> = (0..m).map(|i| (k + i * k) * width).collect();
        let nuisance: Vec<usize> = (0..m).map(|i| (k * (m + 1) + i) * width).collect();
        SynthLayout {
            width,
            num_classes: k,
            shared,
            specific,
            nuisance,
        }
    }
}

/// Block positions of a [`SynthSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct SynthLayout {
    pub width: usize,
    pub num_classes: usize,
    pub shared: usize,
    pub specific: Vec<usize>,
    pub nuisance: Vec<usize>,
}

impl SynthLayout {
    pub fn shared_sub(&self, class: usize) -> std::ops::Range<usize> {
        let s = self.shared + class * self.width;
        s..s + self.width
    }

    pub fn specific_sub(&self, domain: usize, class: usize) -> std::ops::Range<usize> {
        let s = self.specific[domain] + class * self.width;
        s..s + self.width
    }

    pub fn nuisance_block(&self, domain: usize) -> std::ops::Range<usize> {
        let s = self.nuisance[domain];
        s..s + self.width
    }
}

fn means(spec: &SynthSpec, layout: &SynthLayout, domain: usize, class: usize, rng: &mut Rng) -> Vec<f64> {
    let mut mu = vec![0.0; spec.dim];
    for j in layout.shared_sub(class) {
        mu[j] += spec.shared_strength;
    }
    for other in 0..spec.num_domains {
        let c = if other == domain {
            class
        } else {
            rng.below(spec.num_classes)
        };
        for j in layout.specific_sub(other, c) {
            mu[j] += spec.specific_strength;
        }
    }
    let shift = if spec.shift_domain == Some(domain) {
        spec.shift_strength
    } else {
        0.0
    };
    for j in layout.nuisance_block(domain) {
        mu[j] += spec.nuisance_strength + shift;
    }
    mu
}

fn sample_split(
    spec: &SynthSpec,
    layout: &SynthLayout,
    domain: usize,
    n: usize,
    rng: &mut Rng,
) -> (Vec<Example>, Vec<usize>) {
    let mut out = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for id in 0..n {
        let y = rng.below(spec.num_classes);
        let mu = means(spec, layout, domain, y, rng);
        let features = mu
            .iter()
            .enumerate()
            .filter_map(|(j, &m)| {
                let c = (m + spec.noise * rng.normal()).round().max(0.0);
                (c > 0.0).then_some((j as u32, c))
            })
            .collect();
        out.push(Example {
            id,
            features,
            label: Some(y),
        });
        labels.push(y);
    }
    (out, labels)
}

/// Bit-reproducible for a fixed spec.
pub fn synth_generate(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let layout = spec.layout();
    let root = Rng::new(spec.seed);
    let domains = (0..spec.num_domains)
        .map(|i| {
            let split = |name: &str, n: usize| {
                let mut rng = root.derive(&format!("synth/domain{i}/{name}"));
                sample_split(spec, &layout, i, n, &mut rng)
            };
            let (labeled, _) = split("labeled", spec.labeled);
            let (mut unlabeled, gold) = split("unlabeled", spec.unlabeled);
            for e in &mut unlabeled {
                e.label = None;
            }
            let (dev, _) = split("dev", spec.dev);
            let (test, _) = split("test", spec.test);
            DomainDataset::new(
                format!("domain{i}"),
                labeled,
                unlabeled,
                dev,
                test,
                HiddenLabels::new(gold.into_iter().map(Some).collect()),
            )
        })
        .collect();
    Ok(Corpus {
        domains,
        input_dim: spec.dim,
        num_classes: spec.num_classes,
        vocabulary: None,
    })
}

/// Nearest-mean decision using the true generating directions of `domain`.
pub fn oracle_predict(spec: &SynthSpec, layout: &SynthLayout, domain: usize, x: &[f64]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..spec.num_classes {
        let s: f64 = spec.shared_strength * layout.shared_sub(k).map(|j| x[j]).sum::<f64>()
            + spec.specific_strength * layout.specific_sub(domain, k).map(|j| x[j]).sum::<f64>();
        if s > best.1 {
            best = (k, s);
        }
    }
    best.0
}

/// Oracle accuracy on every domain's test split.
pub fn oracle_accuracy(spec: &SynthSpec, corpus: &Corpus) -> f64 {
    let layout = spec.layout();
    let (mut hit, mut n) = (0usize, 0usize);
    for (i, d) in corpus.domains.iter().enumerate() {
        for e in &d.test {
            let x = crate::data::densify([e], spec.dim);
            hit += usize::from(Some(oracle_predict(spec, &layout, i, x.row(0))) == e.label);
            n += 1;
        }
    }
    hit as f64 / n.max(1) as f64
}

/// One draw of the inlier/outlier distance model: `|N(0, sd²)|` with
/// probability `pi`, otherwise `U(0, delta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureDraw {
    pub distance: f64,
    pub inlier: bool,
}

pub fn mixture_distances(pi: f64, sd: f64, delta: f64, n: usize, rng: &mut Rng) -> Vec<MixtureDraw> {
    (0..n)
        .map(|_| {
            let inlier = rng.bernoulli(pi);
            let distance = if inlier {
                (sd * rng.normal()).abs()
            } else {
                delta * rng.uniform()
            };
            MixtureDraw { distance, inlier }
        })
        .collect()
}
