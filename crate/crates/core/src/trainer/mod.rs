//! Alternating adversarial training.
//!
//! An initialization phase trains `F_s`, `F_d`, `C` on the labeled data while
//! `D` and `F_s` play the domain game. Each main epoch then re-estimates the
//! pseudo-label mixture with the networks frozen and trains on the full
//! objective, pseudo-labeled rows included.

mod config;
mod eval;
mod metrics;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::{densify, Corpus, Example};
use crate::error::{Error, Result};
use crate::model::checkpoint::Checkpoint;
use crate::model::{Architecture, ForwardMode, ModelKind, SanModel};
use crate::nn::{AdamConfig, AdamState, Params, Rng};
use crate::objectives::{
    combined_objective, DomainBatch, LabeledBatch, LossBreakdown, MainBatch, ObjectiveWeights, PseudoBatch, Role,
};
use crate::rplr::{
    assign_weights, centers_from_labeled, em_fit, generate_pseudo_labels, Chunk, ClassMixture, EmFit, MixtureParams,
    PseudoLabelTable,
};

pub use config::TrainConfig;
pub use eval::{evaluate, Ablation, DomainAccuracy, EvalReport, Split, EVAL_CHUNK};
pub use metrics::{EpochLosses, EpochMetrics, Phase, PhaseTiming, PseudoStats, RuntimeReport};

/// Endless reshuffled pass over `0..n`.
#[derive(Clone, Debug)]
struct Cycle {
    order: Vec<usize>,
    pos: usize,
    rng: Rng,
}

impl Cycle {
    fn new(n: usize, mut rng: Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        Self { order, pos: 0, rng }
    }

    /// Up to `k` distinct positions; empty for an empty pool.
    fn next(&mut self, k: usize) -> Vec<usize> {
        let k = k.min(self.order.len());
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.rng.shuffle(&mut self.order);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Per-domain view of the training data after the MS-UDA target lost its labels.
#[derive(Clone, Debug)]
struct DomainPools {
    labeled: Cycle,
    /// Positions below `adv_labeled` index labeled examples, the rest unlabeled ones.
    adversarial: Cycle,
    adv_labeled: usize,
    pseudo: Cycle,
}

/// Everything training mutates.
pub struct TrainState {
    pub config: TrainConfig,
    pub model: SanModel,
    pub adam_main: AdamState,
    pub adam_disc: AdamState,
    /// Epochs completed.
    pub epoch: usize,
    /// φ estimations completed.
    pub round: usize,
    pub phi: MixtureParams,
    pub records: PseudoLabelTable,
    pub em: Option<EmFit>,
    pub timing: PhaseTiming,
    target: Option<usize>,
    target_name: Option<String>,
    root: Rng,
    noise: Rng,
    pools: Vec<DomainPools>,
}

impl TrainState {
    pub fn new(config: &TrainConfig, corpus: &Corpus) -> Result<Self> {
        config.validate()?;
        let m = corpus.num_domains();
        if m == 0 {
            return Err(Error::Data("corpus has no domains".into()));
        }
        if m < 2 && config.lambda > 0.0 {
            return Err(Error::Config("the adversarial term needs at least two domains; set lambda=0".into()));
        }
        if m < 2 && config.ablation == Ablation::Shuffle {
            return Err(Error::Config("shuffle ablation needs at least two domains".into()));
        }
        let target = config
            .msuda_target
            .as_deref()
            .map(|t| corpus.domain_index(t))
            .transpose()?;
        if let Some(t) = target {
            let d = &corpus.domains[t];
            if !d.labeled.is_empty() {
                log::warn!(
                    "target domain {} has {} labeled examples; they are ignored",
                    d.name,
                    d.labeled.len()
                );
            }
        }
        let root = Rng::new(config.seed);
        let arch = Architecture {
            kind: config.mode,
            input_dim: corpus.input_dim,
            hidden: config.hidden.clone(),
            shared_dim: config.shared_dim,
            specific_dim: config.specific_dim,
            num_classes: corpus.num_classes,
            num_domains: m,
            dropout: config.dropout,
        };
        let model = SanModel::new(arch, &mut root.derive("model/init"))?;
        let pools: Vec<DomainPools> = corpus
            .domains
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let n_lab = if Some(i) == target { 0 } else { d.labeled.len() };
                DomainPools {
                    labeled: Cycle::new(n_lab, root.derive(&format!("batch/labeled/{i}"))),
                    adversarial: Cycle::new(
                        n_lab + d.unlabeled.len(),
                        root.derive(&format!("batch/adversarial/{i}")),
                    ),
                    adv_labeled: n_lab,
                    pseudo: Cycle::new(d.unlabeled.len(), root.derive(&format!("batch/pseudo/{i}"))),
                }
            })
            .collect();
        if pools.iter().all(|p| p.labeled.order.is_empty()) {
            return Err(Error::Data("no labeled training data in any domain".into()));
        }
        Ok(Self {
            config: config.clone(),
            model,
            adam_main: AdamState::new(AdamConfig::default()),
            adam_disc: AdamState::new(AdamConfig::default()),
            epoch: 0,
            round: 0,
            phi: MixtureParams::prior(corpus.num_classes),
            records: PseudoLabelTable::default(),
            em: None,
            timing: PhaseTiming::default(),
            target,
            target_name: target.map(|t| corpus.domains[t].name.clone()),
            noise: root.derive("train/noise"),
            root,
            pools,
        })
    }

    /// Index of the MS-UDA target domain, if any.
    pub fn target(&self) -> Option<usize> {
        self.target
    }

    /// Main steps per epoch: enough for the largest labeled set to be seen once.
    pub fn iterations_per_epoch(&self) -> usize {
        let n = self.pools.iter().map(|p| p.labeled.order.len()).max().unwrap_or(0);
        n.div_ceil(self.config.batch_size)
    }

    fn uses_discriminator(&self) -> bool {
        self.model.architecture().num_domains >= 2
    }

    fn weights(&self) -> ObjectiveWeights {
        self.config.weights()
    }

    fn adversarial_batches(&mut self, corpus: &Corpus) -> Vec<DomainBatch> {
        let bs = self.config.batch_size;
        let dim = corpus.input_dim;
        self.pools
            .iter_mut()
            .zip(&corpus.domains)
            .enumerate()
            .filter_map(|(i, (p, d))| {
                let pos = p.adversarial.next(bs);
                if pos.is_empty() {
                    return None;
                }
                let rows: Vec<&Example> = pos
                    .iter()
                    .map(|&j| {
                        if j < p.adv_labeled {
                            &d.labeled[j]
                        } else {
                            &d.unlabeled[j - p.adv_labeled]
                        }
                    })
                    .collect();
                Some(DomainBatch {
                    domain: i,
                    x: densify(rows, dim),
                })
            })
            .collect()
    }

    fn labeled_batches(&mut self, corpus: &Corpus) -> Vec<LabeledBatch> {
        let bs = self.config.batch_size;
        let dim = corpus.input_dim;
        self.pools
            .iter_mut()
            .zip(&corpus.domains)
            .enumerate()
            .filter_map(|(i, (p, d))| {
                let pos = p.labeled.next(bs);
                if pos.is_empty() {
                    return None;
                }
                let rows: Vec<&Example> = pos.iter().map(|&j| &d.labeled[j]).collect();
                let labels = rows.iter().map(|e| e.label.expect("labeled split")).collect();
                Some(LabeledBatch {
                    domain: i,
                    x: densify(rows, dim),
                    labels,
                })
            })
            .collect()
    }

    fn pseudo_batches(&mut self, corpus: &Corpus) -> Result<Vec<PseudoBatch>> {
        let bs = self.config.batch_size;
        let dim = corpus.input_dim;
        let mut out = Vec::new();
        for (i, (p, d)) in self.pools.iter_mut().zip(&corpus.domains).enumerate() {
            let pos = p.pseudo.next(bs);
            if pos.is_empty() {
                continue;
            }
            let rows: Vec<&Example> = pos.iter().map(|&j| &d.unlabeled[j]).collect();
            let ids: Vec<usize> = rows.iter().map(|e| e.id).collect();
            let x = densify(rows, dim);
            out.push(PseudoBatch::from_table(&self.records, i, &ids, &x)?);
        }
        Ok(out)
    }

    /// One discriminator ascent step on fresh labeled∪unlabeled batches.
    /// Returns the batch value of `J_D^els`.
    pub fn critic_step(&mut self, corpus: &Corpus) -> Result<f64> {
        let adversarial = self.adversarial_batches(corpus);
        let batch = MainBatch {
            adversarial,
            ..Default::default()
        };
        let w = self.weights();
        let lb = combined_objective(&mut self.model, &batch, &w, Role::Discriminator, &mut self.noise, ForwardMode::TRAIN)?;
        self.adam_disc.step(&mut self.model.discriminator_params(), self.config.lr)?;
        Ok(lb.j_d_els.unwrap_or(0.0))
    }

    /// One step of `F_s`, `F_d`, `C` on the combined objective. The
    /// pseudo-label term is included when `rplr` is set and records exist.
    pub fn main_step(&mut self, corpus: &Corpus, rplr: bool) -> Result<LossBreakdown> {
        let labeled = self.labeled_batches(corpus);
        let adversarial = if self.config.lambda > 0.0 && self.uses_discriminator() {
            self.adversarial_batches(corpus)
        } else {
            Vec::new()
        };
        let pseudo = if rplr && self.config.lambda_rplr > 0.0 && !self.records.is_empty() {
            self.pseudo_batches(corpus)?
        } else {
            Vec::new()
        };
        let batch = MainBatch {
            labeled,
            pseudo,
            adversarial,
        };
        let w = self.weights();
        let lb = combined_objective(&mut self.model, &batch, &w, Role::Main, &mut self.noise, ForwardMode::TRAIN)?;
        self.adam_main.step(&mut self.model.main_params(), self.config.lr)?;
        self.model.discriminator_params().zero_grad();
        self.model.clamp_log_var();
        Ok(lb)
    }

    /// Only the discriminator steps of one epoch; the other networks are untouched.
    /// Returns the mean `J_D^els` over the steps.
    pub fn critic_epoch(&mut self, corpus: &Corpus) -> Result<f64> {
        let steps = self.iterations_per_epoch() * self.config.n_critic;
        let mut sum = 0.0;
        for _ in 0..steps {
            sum += self.critic_step(corpus)?;
        }
        Ok(if steps > 0 { sum / steps as f64 } else { 0.0 })
    }

    fn run_epoch(&mut self, corpus: &Corpus, rplr: bool) -> Result<EpochLosses> {
        let mut losses = EpochLosses::default();
        let (mut critic_sum, mut critic_n) = (0.0, 0usize);
        let critic = self.uses_discriminator();
        for _ in 0..self.iterations_per_epoch() {
            if critic {
                for _ in 0..self.config.n_critic {
                    critic_sum += self.critic_step(corpus)?;
                    critic_n += 1;
                }
            }
            let lb = self.main_step(corpus, rplr)?;
            losses.add(&lb);
        }
        losses.finish();
        if critic_n > 0 {
            losses.critic_j_d_els = Some(critic_sum / critic_n as f64);
        }
        Ok(losses)
    }

    /// One initialization epoch: labeled classification plus the domain game,
    /// no pseudo-label term.
    pub fn init_phase_epoch(&mut self, corpus: &Corpus) -> Result<EpochLosses> {
        let t = Instant::now();
        let l = self.run_epoch(corpus, false)?;
        self.timing.init.push(t.elapsed().as_secs_f64());
        self.epoch += 1;
        Ok(l)
    }

    /// Runs every initialization epoch.
    pub fn init_phase(&mut self, corpus: &Corpus) -> Result<Vec<EpochLosses>> {
        (0..self.config.init_epochs)
            .map(|_| self.init_phase_epoch(corpus))
            .collect()
    }

    /// One main epoch on the full objective with the stored pseudo-labels.
    pub fn optimize_step(&mut self, corpus: &Corpus) -> Result<EpochLosses> {
        let t = Instant::now();
        let l = self.run_epoch(corpus, true)?;
        self.timing.main.push(t.elapsed().as_secs_f64());
        self.epoch += 1;
        Ok(l)
    }

    fn chunks<'a>(
        &'a self,
        corpus: &'a Corpus,
        labeled: bool,
    ) -> impl Iterator<Item = Result<Chunk>> + 'a {
        let dim = corpus.input_dim;
        corpus
            .domains
            .iter()
            .enumerate()
            .filter(move |(i, _)| !(labeled && Some(*i) == self.target))
            .flat_map(move |(i, d)| {
                let exs: &[Example] = if labeled { &d.labeled } else { &d.unlabeled };
                exs.chunks(EVAL_CHUNK).map(move |part| {
                    Ok(Chunk {
                        domain: i,
                        ids: part.iter().map(|e| e.id).collect(),
                        x: densify(part, dim),
                        labels: labeled.then(|| part.iter().map(|e| e.label.expect("labeled split")).collect()),
                    })
                })
            })
    }

    /// Re-estimates φ and the pseudo-label records with every network frozen.
    pub fn estimate_phi_step(&mut self, corpus: &Corpus) -> Result<()> {
        let t = Instant::now();
        self.round += 1;
        let k = self.model.architecture().num_classes;
        let n_unlabeled: usize = corpus.domains.iter().map(|d| d.unlabeled.len()).sum();
        if n_unlabeled == 0 {
            self.records = PseudoLabelTable::default();
            self.phi = MixtureParams::prior(k);
            self.em = None;
            self.timing.phi.push(t.elapsed().as_secs_f64());
            return Ok(());
        }
        let centers = centers_from_labeled(&self.model, self.chunks(corpus, true), self.config.sphere_radius)?;
        let mut records = generate_pseudo_labels(&self.model, &centers, self.chunks(corpus, false))?;
        let (distances, labels): (Vec<f64>, Vec<usize>) = records
            .iter()
            .filter_map(|r| r.distance.map(|d| (d, r.pseudo_label)))
            .unzip();
        let mut rng = self.root.derive(&format!("em/round{}", self.round));
        let fit = em_fit(&distances, &labels, k, &self.config.em_config(), &mut rng)?;
        let mut phi = fit.params();
        for (c, m) in phi.classes.iter_mut().enumerate() {
            if !usable_fit(m) {
                let prev = self.phi.get(c).copied().unwrap_or(ClassMixture::PRIOR);
                log::warn!(
                    "mixture fit for class {c} is unusable (pi {:.3}, sd {:.4}, delta {:.4}); keeping the previous parameters",
                    m.pi,
                    m.std_dev(),
                    m.delta
                );
                *m = prev;
            }
        }
        assign_weights(&mut records, &phi);
        self.records = PseudoLabelTable::new(records);
        self.phi = phi;
        self.em = Some(fit);
        self.timing.phi.push(t.elapsed().as_secs_f64());
        Ok(())
    }

    /// Pseudo-label counts and, where hidden labels exist, their accuracy.
    pub fn pseudo_stats(&self, corpus: &Corpus) -> PseudoStats {
        let mut s = PseudoStats {
            n: self.records.len(),
            n_valid: self.records.n_valid(),
            ..Default::default()
        };
        let (mut hit, mut n, mut vhit, mut vn) = (0, 0, 0, 0);
        for (i, d) in corpus.domains.iter().enumerate() {
            let of_domain = || self.records.records().iter().filter(move |r| r.domain == i);
            let (h, c) = d.hidden().score(of_domain().map(|r| (r.id, r.pseudo_label)));
            hit += h;
            n += c;
            let (h, c) = d
                .hidden()
                .score(of_domain().filter(|r| r.weight > 0.0).map(|r| (r.id, r.pseudo_label)));
            vhit += h;
            vn += c;
        }
        s.accuracy = (n > 0).then(|| hit as f64 / n as f64);
        s.valid_accuracy = (vn > 0).then(|| vhit as f64 / vn as f64);
        s
    }

    /// Dev average used for model selection. The MS-UDA target is left out.
    fn selection_score(&self, dev: &EvalReport) -> Option<f64> {
        let rows: Vec<f64> = dev
            .per_domain
            .iter()
            .filter(|d| Some(d.domain.as_str()) != self.target_name())
            .map(|d| d.accuracy)
            .collect();
        (!rows.is_empty()).then(|| rows.iter().sum::<f64>() / rows.len() as f64)
    }

    fn target_name(&self) -> Option<&str> {
        self.target_name.as_deref()
    }
}

/// A fit is usable when it is finite and the inlier Gaussian is narrower than
/// the outlier uniform; otherwise the two components have swapped roles.
fn usable_fit(m: &ClassMixture) -> bool {
    m.pi.is_finite() && m.sigma.is_finite() && m.delta.is_finite() && m.std_dev() < m.delta
}

/// Where a training run writes its artifacts.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    /// Extra fields for the metrics header, e.g. the data source.
    pub header: serde_json::Value,
    pub vocabulary: Option<crate::data::Vocabulary>,
}

impl RunOutput {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            header: serde_json::Value::Null,
            vocabulary: None,
        }
    }
}

struct Writers {
    dir: PathBuf,
    metrics: fs::File,
    timing: fs::File,
}

impl Writers {
    fn open(out: &RunOutput, config: &TrainConfig, corpus: &Corpus) -> Result<Self> {
        fs::create_dir_all(&out.dir).map_err(|e| Error::io(&out.dir, e))?;
        let create = |name: &str| {
            let p = out.dir.join(name);
            fs::File::create(&p).map_err(|e| Error::io(&p, e))
        };
        let mut w = Self {
            dir: out.dir.clone(),
            metrics: create("metrics.jsonl")?,
            timing: create("timing.jsonl")?,
        };
        let header = serde_json::json!({
            "header": {
                "config": config,
                "run": out.header,
                "domains": corpus.domain_names(),
                "input_dim": corpus.input_dim,
                "num_classes": corpus.num_classes,
            }
        });
        w.line(true, &header)?;
        Ok(w)
    }

    fn line(&mut self, metrics: bool, v: &impl serde::Serialize) -> Result<()> {
        let (f, name) = if metrics {
            (&mut self.metrics, "metrics.jsonl")
        } else {
            (&mut self.timing, "timing.jsonl")
        };
        let mut s = serde_json::to_string(v)?;
        s.push('\n');
        f.write_all(s.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| Error::io(self.dir.join(name), e))
    }
}

/// Result of [`train`].
pub struct TrainOutcome {
    pub state: TrainState,
    pub metrics: Vec<EpochMetrics>,
    /// Selected model: best dev average if dev data exist, else the last one.
    pub model: SanModel,
    pub selected_epoch: usize,
    /// Test evaluation of the selected model under the configured ablation.
    pub test: EvalReport,
}

fn acc_map(r: &EvalReport) -> BTreeMap<String, f64> {
    r.per_domain.iter().map(|d| (d.domain.clone(), d.accuracy)).collect()
}

fn save_checkpoint(model: &mut SanModel, config: &TrainConfig, corpus: &Corpus, out: &RunOutput) -> Result<()> {
    let mut ck = Checkpoint::capture(model, serde_json::to_value(config)?, corpus.domain_names());
    ck.vocabulary = out.vocabulary.clone();
    ck.save(&out.dir.join("checkpoint.json"))
}

/// Initialization phase, then main epochs alternating φ estimation and
/// optimization. Evaluates after every epoch.
pub fn train(config: &TrainConfig, corpus: &Corpus, out: Option<&RunOutput>) -> Result<TrainOutcome> {
    let mut state = TrainState::new(config, corpus)?;
    let mut writers = out.map(|o| Writers::open(o, config, corpus)).transpose()?;
    let mut metrics = Vec::new();
    let mut best: Option<(f64, usize, SanModel)> = None;
    let total = config.init_epochs + config.main_epochs;
    for e in 0..total {
        let phase = if e < config.init_epochs { Phase::Init } else { Phase::Main };
        let mut phi_seconds = None;
        let losses = match phase {
            Phase::Init => state.init_phase_epoch(corpus)?,
            Phase::Main => {
                if (e - config.init_epochs) % config.phi_every == 0 {
                    let t = Instant::now();
                    state.estimate_phi_step(corpus)?;
                    phi_seconds = Some(t.elapsed().as_secs_f64());
                    if let Some(o) = out {
                        let p = o.dir.join("pseudo_labels.csv");
                        fs::write(&p, state.records.to_csv(&corpus.domain_names())).map_err(|err| Error::io(&p, err))?;
                    }
                }
                state.optimize_step(corpus)?
            }
        };
        let train_seconds = match phase {
            Phase::Init => *state.timing.init.last().expect("timed epoch"),
            Phase::Main => *state.timing.main.last().expect("timed epoch"),
        };
        let t = Instant::now();
        let test = evaluate(&state.model, corpus, Split::Test, config.ablation, config.seed)?;
        let dev = evaluate(&state.model, corpus, Split::Dev, Ablation::None, config.seed)?;
        let pseudo = state.pseudo_stats(corpus);
        let eval_seconds = t.elapsed().as_secs_f64();
        let m = EpochMetrics {
            epoch: e + 1,
            phase,
            per_domain_acc: acc_map(&test),
            avg_acc: test.average,
            dev_per_domain_acc: dev.average.map(|_| acc_map(&dev)),
            dev_avg_acc: dev.average,
            target_acc: state.target_name().and_then(|t| test.accuracy(t)),
            losses,
            n_pseudo: pseudo.n,
            n_valid_pseudo: pseudo.n_valid,
            pseudo_acc: pseudo.accuracy,
            valid_pseudo_acc: pseudo.valid_accuracy,
        };
        log::info!("{}", m.summary());
        let improved = match (state.selection_score(&dev), &best) {
            (Some(s), Some((b, _, _))) => s > *b,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if improved {
            let s = state.selection_score(&dev).expect("scored");
            best = Some((s, e + 1, state.model.clone()));
        }
        if let (Some(w), Some(o)) = (writers.as_mut(), out) {
            w.line(true, &m)?;
            w.line(
                false,
                &serde_json::json!({
                    "epoch": e + 1,
                    "phase": phase,
                    "epoch_seconds": train_seconds,
                    "phi_seconds": phi_seconds,
                    "eval_seconds": eval_seconds,
                }),
            )?;
            if improved || best.is_none() {
                let mut snapshot = state.model.clone();
                save_checkpoint(&mut snapshot, config, corpus, o)?;
            }
        }
        metrics.push(m);
    }
    let (model, selected_epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (state.model.clone(), state.epoch),
    };
    let test = evaluate(&model, corpus, Split::Test, config.ablation, config.seed)?;
    Ok(TrainOutcome {
        state,
        metrics,
        model,
        selected_epoch,
        test,
    })
}

/// Target-domain result of a multi-source adaptation run.
#[derive(Clone, Debug)]
pub struct MsudaReport {
    pub target: String,
    pub target_accuracy: f64,
    pub test: EvalReport,
}

/// Trains with the configured target's labels withheld and reports its test accuracy.
pub fn msuda_run(config: &TrainConfig, corpus: &Corpus, out: Option<&RunOutput>) -> Result<MsudaReport> {
    let name = config
        .msuda_target
        .as_deref()
        .ok_or_else(|| Error::Config("msuda_target is not set".into()))?;
    let t = corpus.domain_index(name)?;
    let target = corpus.domains[t].name.clone();
    if corpus.domains[t].test.is_empty() {
        return Err(Error::Data(format!("target domain {target} has no test data")));
    }
    let mut cfg = config.clone();
    cfg.msuda_target = Some(target.clone());
    let outcome = train(&cfg, corpus, out)?;
    let target_accuracy = outcome
        .test
        .accuracy(&target)
        .ok_or_else(|| Error::State("target was not evaluated".into()))?;
    Ok(MsudaReport {
        target,
        target_accuracy,
        test: outcome.test,
    })
}

/// Mean initialization-epoch time of both model kinds on the same data, with
/// epochs of the two kinds interleaved.
pub fn measure_runtime(config: &TrainConfig, corpus: &Corpus, epochs: usize) -> Result<RuntimeReport> {
    let mut san = TrainState::new(
        &TrainConfig {
            mode: ModelKind::San,
            ..config.clone()
        },
        corpus,
    )?;
    let mut sp = TrainState::new(
        &TrainConfig {
            mode: ModelKind::SharedPrivate,
            ..config.clone()
        },
        corpus,
    )?;
    for _ in 0..epochs {
        san.init_phase_epoch(corpus)?;
        sp.init_phase_epoch(corpus)?;
    }
    Ok(runtime_report(&san, &sp))
}

/// Mean training time per epoch of a SAN run and a shared-private run.
pub fn runtime_report(san: &TrainState, shared_private: &TrainState) -> RuntimeReport {
    RuntimeReport::new(san.timing.mean_epoch(), shared_private.timing.mean_epoch())
}

/// Loads `checkpoint.json` from a run directory.
pub fn load_model(path: &Path) -> Result<(SanModel, Checkpoint)> {
    let ck = Checkpoint::load(path)?;
    Ok((ck.restore()?, ck))
}
