use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelKind;
use crate::objectives::{DomainTarget, ObjectiveWeights};
use crate::rplr::{EmConfig, EmMode};
use crate::trainer::eval::Ablation;

/// Every training hyperparameter. Keys of [`TrainConfig::KEYS`] can be set
/// from strings with [`TrainConfig::set`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub lambda_rplr: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub shared_dim: usize,
    pub specific_dim: usize,
    pub hidden: Vec<usize>,
    pub n_critic: usize,
    pub init_epochs: usize,
    pub main_epochs: usize,
    /// Main-phase epochs between two φ estimations.
    pub phi_every: usize,
    /// Smoothed domain targets; one-hot when false.
    pub dls: bool,
    pub em_mode: EmMode,
    pub em_iters: usize,
    pub em_tol: f64,
    pub em_min_samples: usize,
    pub sphere_radius: f64,
    pub seed: u64,
    pub mode: ModelKind,
    pub msuda_target: Option<String>,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            gamma: 0.9,
            lambda_rplr: 1.0,
            lr: 1e-4,
            batch_size: 8,
            dropout: 0.4,
            shared_dim: 128,
            specific_dim: 64,
            hidden: vec![1000, 500],
            n_critic: 5,
            init_epochs: 5,
            main_epochs: 20,
            phi_every: 1,
            dls: true,
            em_mode: EmMode::Paper,
            em_iters: 20,
            em_tol: 1e-5,
            em_min_samples: 10,
            sphere_radius: 1.0,
            seed: 0,
            mode: ModelKind::San,
            msuda_target: None,
            ablation: Ablation::None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl TrainConfig {
    /// `(key, help)` for every settable key, in display order.
    pub const KEYS: &'static [(&'static str, &'static str)] = &[
        ("lambda", "weight of the adversarial domain term"),
        ("gamma", "true-domain mass of the smoothed domain target, in (0,1)"),
        ("lambda_rplr", "weight of the pseudo-label term"),
        ("lr", "Adam learning rate"),
        ("batch_size", "rows per domain per batch"),
        ("dropout", "dropout rate"),
        ("shared_dim", "width of the shared feature"),
        ("specific_dim", "width of the domain-specific feature"),
        ("hidden", "comma-separated hidden widths of both extractors"),
        ("n_critic", "discriminator steps per main step"),
        ("init_epochs", "epochs of the initialization phase"),
        ("main_epochs", "epochs with the pseudo-label term"),
        ("phi_every", "main-phase epochs between mixture re-estimations"),
        ("dls", "smoothed domain targets (false: one-hot)"),
        ("em_mode", "mixture update rule: paper or moment"),
        ("em_iters", "maximum EM iterations"),
        ("em_tol", "EM stopping threshold on the largest parameter change"),
        ("em_min_samples", "classes with fewer pseudo-labels keep the prior"),
        ("sphere_radius", "radius of the sphere holding class centers"),
        ("seed", "master seed"),
        ("mode", "san or shared_private"),
        ("msuda_target", "domain trained without labels (name or index; none to disable)"),
        ("ablation", "evaluation ablation: none, zero or shuffle"),
    ];

    /// Sets one key from its text form. Dashes in `key` count as underscores.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let key = key.replace('-', "_");
        let k = key.as_str();
        match k {
            "lambda" => self.lambda = parse(k, v)?,
            "gamma" => self.gamma = parse(k, v)?,
            "lambda_rplr" => self.lambda_rplr = parse(k, v)?,
            "lr" => self.lr = parse(k, v)?,
            "batch_size" => self.batch_size = parse(k, v)?,
            "dropout" => self.dropout = parse(k, v)?,
            "shared_dim" => self.shared_dim = parse(k, v)?,
            "specific_dim" => self.specific_dim = parse(k, v)?,
            "hidden" => {
                self.hidden = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(k, s))
                    .collect::<Result<_>>()?
            }
            "n_critic" => self.n_critic = parse(k, v)?,
            "init_epochs" => self.init_epochs = parse(k, v)?,
            "main_epochs" => self.main_epochs = parse(k, v)?,
            "phi_every" => self.phi_every = parse(k, v)?,
            "dls" => self.dls = parse_bool(k, v)?,
            "em_mode" => self.em_mode = v.trim().parse()?,
            "em_iters" => self.em_iters = parse(k, v)?,
            "em_tol" => self.em_tol = parse(k, v)?,
            "em_min_samples" => self.em_min_samples = parse(k, v)?,
            "sphere_radius" => self.sphere_radius = parse(k, v)?,
            "seed" => self.seed = parse(k, v)?,
            "mode" => self.mode = v.trim().parse()?,
            "msuda_target" => {
                self.msuda_target = match v.trim() {
                    "" | "none" => None,
                    t => Some(t.to_string()),
                }
            }
            "ablation" => self.ablation = v.trim().parse()?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Text form of one key, as accepted by [`set`](Self::set).
    pub fn get(&self, key: &str) -> Option<String> {
        let s = match key.replace('-', "_").as_str() {
            "lambda" => self.lambda.to_string(),
            "gamma" => self.gamma.to_string(),
            "lambda_rplr" => self.lambda_rplr.to_string(),
            "lr" => self.lr.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "dropout" => self.dropout.to_string(),
            "shared_dim" => self.shared_dim.to_string(),
            "specific_dim" => self.specific_dim.to_string(),
            "hidden" => self
                .hidden
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "n_critic" => self.n_critic.to_string(),
            "init_epochs" => self.init_epochs.to_string(),
            "main_epochs" => self.main_epochs.to_string(),
            "phi_every" => self.phi_every.to_string(),
            "dls" => self.dls.to_string(),
            "em_mode" => self.em_mode.to_string(),
            "em_iters" => self.em_iters.to_string(),
            "em_tol" => self.em_tol.to_string(),
            "em_min_samples" => self.em_min_samples.to_string(),
            "sphere_radius" => self.sphere_radius.to_string(),
            "seed" => self.seed.to_string(),
            "mode" => self.mode.to_string(),
            "msuda_target" => self.msuda_target.clone().unwrap_or_else(|| "none".into()),
            "ablation" => self.ablation.to_string(),
            _ => return None,
        };
        Some(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        self.weights().validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.phi_every == 0 {
            return Err(Error::Config("phi_every must be at least 1".into()));
        }
        if !(self.sphere_radius > 0.0 && self.sphere_radius.is_finite()) {
            return Err(Error::Config("sphere_radius must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0,1), got {}", self.dropout)));
        }
        Ok(())
    }

    pub fn weights(&self) -> ObjectiveWeights {
        ObjectiveWeights {
            lambda: self.lambda,
            lambda_rplr: self.lambda_rplr,
            target: if self.dls {
                DomainTarget::Smoothed { gamma: self.gamma }
            } else {
                DomainTarget::OneHot
            },
        }
    }

    pub fn em_config(&self) -> EmConfig {
        EmConfig {
            max_iters: self.em_iters,
            tol: self.em_tol,
            mode: self.em_mode,
            min_samples: self.em_min_samples,
            ..EmConfig::default()
        }
    }
}
