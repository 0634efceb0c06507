//! Loss terms: multi-domain classification, the label-smoothed discriminator
//! objective, the weighted pseudo-label loss, and their combination.
//!
//! Reduction is a mean within each domain's batch and a sum across domains.
//! Every model-level function runs forward and backward and leaves the
//! gradients of the returned value accumulated in the parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ForwardMode, SanModel};
use crate::nn::{LossGrad, Matrix, Rng};
use crate::rplr::PseudoLabelTable;

/// Target distribution the discriminator is trained towards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainTarget {
    /// `γ` on the true domain, `(1−γ)/(M−1)` elsewhere.
    Smoothed { gamma: f64 },
    OneHot,
}

impl DomainTarget {
    /// `(on, off)` weights for `m` domains.
    fn weights(&self, m: usize) -> Result<(f64, f64)> {
        if m < 2 {
            return Err(Error::Config(format!(
                "domain discrimination needs at least 2 domains, got {m}"
            )));
        }
        match *self {
            DomainTarget::Smoothed { gamma } => {
                if !(gamma > 0.0 && gamma < 1.0) {
                    return Err(Error::Config(format!("gamma must lie in (0, 1), got {gamma}")));
                }
                Ok((gamma, (1.0 - gamma) / (m - 1) as f64))
            }
            DomainTarget::OneHot => Ok((1.0, 0.0)),
        }
    }

    pub fn row(&self, m: usize, true_domain: usize) -> Result<Vec<f64>> {
        let (on, off) = self.weights(m)?;
        if true_domain >= m {
            return Err(Error::Data(format!(
                "domain {true_domain} out of range for {m} domains"
            )));
        }
        let mut t = vec![off; m];
        t[true_domain] = on;
        Ok(t)
    }
}

pub fn smoothed_domain_target(m: usize, true_domain: usize, gamma: f64) -> Result<Vec<f64>> {
    DomainTarget::Smoothed { gamma }.row(m, true_domain)
}

fn check_normalized(log_probs: &Matrix) -> Result<()> {
    for r in 0..log_probs.rows() {
        let row = log_probs.row(r);
        let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = hi + row.iter().map(|v| (v - hi).exp()).sum::<f64>().ln();
        if !(lse.abs() <= 1e-6) {
            return Err(Error::Numeric {
                context: "domain objective".into(),
                detail: format!("row {r} log-probabilities sum to exp({lse}), not 1"),
            });
        }
    }
    Ok(())
}

/// Per-row `γ·logD_i + off·Σ_{j≠i} logD_j` and the gradient of
/// `Σ_r weight_r · value_r` w.r.t. the log-probabilities.
fn dls_rows(
    log_probs: &Matrix,
    domains: &[usize],
    target: &DomainTarget,
    weights: &[f64],
) -> Result<(Vec<f64>, Matrix)> {
    let m = log_probs.cols();
    if domains.len() != log_probs.rows() || weights.len() != log_probs.rows() {
        return Err(Error::shape("dls objective", log_probs.rows(), domains.len()));
    }
    let (on, off) = target.weights(m)?;
    let mut grad = Matrix::zeros(log_probs.rows(), m);
    let mut values = Vec::with_capacity(domains.len());
    for (r, (&i, &w)) in domains.iter().zip(weights).enumerate() {
        if i >= m {
            return Err(Error::Data(format!("domain {i} out of range for {m} domains (row {r})")));
        }
        let row = log_probs.row(r);
        let rest: f64 = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).sum();
        values.push(on * row[i] + off * rest);
        let g = grad.row_mut(r);
        for (j, gj) in g.iter_mut().enumerate() {
            *gj = w * if j == i { on } else { off };
        }
    }
    Ok((values, grad))
}

/// Batch mean of the smoothed domain log-likelihood, the quantity `D` ascends.
pub fn dls_objective(log_probs: &Matrix, domains: &[usize], target: &DomainTarget) -> Result<LossGrad> {
    check_normalized(log_probs)?;
    let n = log_probs.rows();
    let w = if n == 0 { 0.0 } else { 1.0 / n as f64 };
    let (values, grad) = dls_rows(log_probs, domains, target, &vec![w; n])?;
    Ok(LossGrad {
        value: values.iter().sum::<f64>() * w,
        grad,
    })
}

/// The same quantity written as `−H(t, D)`, the negated cross-entropy between
/// the target distribution and `D`.
pub fn dls_cross_entropy(log_probs: &Matrix, domains: &[usize], target: &DomainTarget) -> Result<f64> {
    check_normalized(log_probs)?;
    let m = log_probs.cols();
    let n = log_probs.rows();
    if n == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (r, &i) in domains.iter().enumerate() {
        let t = target.row(m, i)?;
        let ce: f64 = -t.iter().zip(log_probs.row(r)).map(|(a, b)| a * b).sum::<f64>();
        total -= ce;
    }
    Ok(total / n as f64)
}

/// Labeled rows of one domain.
#[derive(Clone, Debug)]
pub struct LabeledBatch {
    pub domain: usize,
    pub x: Matrix,
    pub labels: Vec<usize>,
}

/// Pseudo-labeled rows of one domain with their weights.
#[derive(Clone, Debug)]
pub struct PseudoBatch {
    pub domain: usize,
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
}

impl PseudoBatch {
    /// Looks up `(ŷ, w)` for every id and keeps the rows with `w > 0`.
    pub fn from_table(table: &PseudoLabelTable, domain: usize, ids: &[usize], x: &Matrix) -> Result<Self> {
        if ids.len() != x.rows() {
            return Err(Error::shape("pseudo batch ids", x.rows(), ids.len()));
        }
        let mut keep = Vec::new();
        let mut labels = Vec::new();
        let mut weights = Vec::new();
        for (r, &id) in ids.iter().enumerate() {
            let rec = table.get(domain, id).ok_or_else(|| {
                Error::Data(format!("no pseudo-label record for example {id} of domain {domain}"))
            })?;
            if rec.weight > 0.0 {
                keep.push(r);
                labels.push(rec.pseudo_label);
                weights.push(rec.weight);
            }
        }
        Ok(Self {
            domain,
            x: x.select_rows(&keep),
            labels,
            weights,
        })
    }
}

/// Rows fed to the discriminator.
#[derive(Clone, Debug)]
pub struct DomainBatch {
    pub domain: usize,
    pub x: Matrix,
}

/// Everything one optimization step consumes.
#[derive(Clone, Debug, Default)]
pub struct MainBatch {
    pub labeled: Vec<LabeledBatch>,
    pub pseudo: Vec<PseudoBatch>,
    pub adversarial: Vec<DomainBatch>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub lambda: f64,
    pub lambda_rplr: f64,
    pub target: DomainTarget,
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.lambda_rplr >= 0.0 && self.lambda_rplr.is_finite()) {
            return Err(Error::Config(format!(
                "lambda_rplr must be >= 0, got {}",
                self.lambda_rplr
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Ascend `J_D^els` w.r.t. `D` only.
    Discriminator,
    /// Descend `J_C + λ·J_D^els + λ_rplr·J_C^rplr` w.r.t. `F_s`, `F_d`, `C`.
    Main,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainTerms {
    pub domain: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_d_els: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_rplr: Option<f64>,
}

/// Values of one objective evaluation. For the main role
/// `combined = j_c + λ·j_d_els + λ_rplr·j_rplr`; for the discriminator role
/// `combined = −j_d_els`. Absent terms were not computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub role: Role,
    pub j_c: f64,
    pub j_d_els: Option<f64>,
    pub j_rplr: Option<f64>,
    pub combined: f64,
    pub per_domain: Vec<DomainTerms>,
}

impl LossBreakdown {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

fn rows_range(m: &Matrix, start: usize, end: usize) -> Matrix {
    m.select_rows(&(start..end).collect::<Vec<_>>())
}

fn add_term(slot: &mut Option<f64>, v: f64) {
    *slot = Some(slot.unwrap_or(0.0) + v);
}

fn sum_terms(per: &[DomainTerms], f: impl Fn(&DomainTerms) -> Option<f64>) -> f64 {
    per.iter().filter_map(f).sum()
}

/// Evaluates one role's objective and accumulates its gradients.
///
/// The main role also leaves `λ·∂J_D^els/∂θ_D` in the discriminator's
/// gradients; callers that only step the main parameters should zero them.
pub fn combined_objective(
    model: &mut SanModel,
    batch: &MainBatch,
    weights: &ObjectiveWeights,
    role: Role,
    rng: &mut Rng,
    mode: ForwardMode,
) -> Result<LossBreakdown> {
    weights.validate()?;
    match role {
        Role::Discriminator => discriminator_objective(model, &batch.adversarial, &weights.target, rng, mode),
        Role::Main => main_objective(model, batch, weights, rng, mode),
    }
}

struct AdvRows {
    x: Matrix,
    domains: Vec<usize>,
    weights: Vec<f64>,
}

fn adversarial_rows(batches: &[DomainBatch], input_dim: usize) -> AdvRows {
    let mut parts = Vec::new();
    let mut domains = Vec::new();
    let mut weights = Vec::new();
    for b in batches {
        let n = b.x.rows();
        if n == 0 {
            continue;
        }
        parts.push(&b.x);
        domains.extend(std::iter::repeat_n(b.domain, n));
        weights.extend(std::iter::repeat_n(1.0 / n as f64, n));
    }
    let x = Matrix::stack(&parts, input_dim).unwrap_or_else(|_| Matrix::zeros(0, input_dim));
    AdvRows { x, domains, weights }
}

fn check_widths<'a>(xs: impl Iterator<Item = &'a Matrix>, input_dim: usize) -> Result<()> {
    for x in xs {
        if x.rows() > 0 && x.cols() != input_dim {
            return Err(Error::shape(
                "batch input",
                format!("{input_dim} features"),
                format!("{} features", x.cols()),
            ));
        }
    }
    Ok(())
}

fn discriminator_objective(
    model: &mut SanModel,
    batches: &[DomainBatch],
    target: &DomainTarget,
    rng: &mut Rng,
    mode: ForwardMode,
) -> Result<LossBreakdown> {
    let arch = model.architecture().clone();
    check_widths(batches.iter().map(|b| &b.x), arch.input_dim)?;
    target.weights(arch.num_domains)?;
    let adv = adversarial_rows(batches, arch.input_dim);
    let mut per: Vec<DomainTerms> = (0..arch.num_domains)
        .map(|domain| DomainTerms { domain, ..Default::default() })
        .collect();
    if adv.x.rows() > 0 {
        let shared = model.shared_forward(&adv.x, rng, mode)?;
        let ld = model.discriminate_forward(&shared, rng, mode)?;
        let (values, mut grad) = dls_rows(&ld, &adv.domains, target, &adv.weights)?;
        for ((&d, &w), v) in adv.domains.iter().zip(&adv.weights).zip(&values) {
            add_term(&mut per[d].j_d_els, w * v);
        }
        grad.scale(-1.0);
        model.discriminate_backward(&grad)?;
    }
    let j_d = sum_terms(&per, |t| t.j_d_els);
    Ok(LossBreakdown {
        role: Role::Discriminator,
        j_c: 0.0,
        j_d_els: Some(j_d),
        j_rplr: None,
        combined: -j_d,
        per_domain: per,
    })
}

fn main_objective(
    model: &mut SanModel,
    batch: &MainBatch,
    weights: &ObjectiveWeights,
    rng: &mut Rng,
    mode: ForwardMode,
) -> Result<LossBreakdown> {
    let arch = model.architecture().clone();
    let (input_dim, sd) = (arch.input_dim, arch.shared_dim);
    check_widths(
        batch
            .labeled
            .iter()
            .map(|b| &b.x)
            .chain(batch.pseudo.iter().map(|b| &b.x))
            .chain(batch.adversarial.iter().map(|b| &b.x)),
        input_dim,
    )?;
    let use_adv = weights.lambda > 0.0;
    let use_rplr = weights.lambda_rplr > 0.0;
    if use_adv {
        weights.target.weights(arch.num_domains)?;
    }

    // Classification rows: labeled first, then weighted pseudo-labeled.
    let mut cls_parts: Vec<Matrix> = Vec::new();
    let mut doms = Vec::new();
    let mut targets = Vec::new();
    let mut value_w = Vec::new();
    let mut grad_w = Vec::new();
    let mut is_pseudo = Vec::new();
    for b in &batch.labeled {
        let n = b.x.rows();
        if b.labels.len() != n {
            return Err(Error::shape("labeled batch labels", n, b.labels.len()));
        }
        if n == 0 {
            log::warn!("empty labeled batch for domain {}; skipped", b.domain);
            continue;
        }
        cls_parts.push(b.x.clone());
        doms.extend(std::iter::repeat_n(b.domain, n));
        targets.extend_from_slice(&b.labels);
        value_w.extend(std::iter::repeat_n(1.0 / n as f64, n));
        grad_w.extend(std::iter::repeat_n(1.0 / n as f64, n));
        is_pseudo.extend(std::iter::repeat_n(false, n));
    }
    if use_rplr {
        for b in &batch.pseudo {
            if b.labels.len() != b.x.rows() || b.weights.len() != b.x.rows() {
                return Err(Error::shape("pseudo batch", b.x.rows(), b.labels.len()));
            }
            let keep: Vec<usize> = (0..b.x.rows()).filter(|&r| b.weights[r] > 0.0).collect();
            let p = keep.len();
            if p == 0 {
                continue;
            }
            cls_parts.push(b.x.select_rows(&keep));
            for &r in &keep {
                doms.push(b.domain);
                targets.push(b.labels[r]);
                value_w.push(b.weights[r] / p as f64);
                grad_w.push(weights.lambda_rplr * b.weights[r] / p as f64);
                is_pseudo.push(true);
            }
        }
    }
    let cls_refs: Vec<&Matrix> = cls_parts.iter().collect();
    let x_cls = Matrix::stack(&cls_refs, input_dim)?;
    let n_cls = x_cls.rows();

    let adv = if use_adv {
        adversarial_rows(&batch.adversarial, input_dim)
    } else {
        AdvRows {
            x: Matrix::zeros(0, input_dim),
            domains: Vec::new(),
            weights: Vec::new(),
        }
    };

    let mut per: Vec<DomainTerms> = (0..arch.num_domains)
        .map(|domain| DomainTerms { domain, ..Default::default() })
        .collect();

    let x_all = Matrix::stack(&[&x_cls, &adv.x], input_dim)?;
    if x_all.rows() > 0 {
        let shared = model.shared_forward(&x_all, rng, mode)?;
        let mut g_shared_cls = Matrix::zeros(0, sd);
        if n_cls > 0 {
            let shared_cls = rows_range(&shared, 0, n_cls);
            let specific = model.specific_forward(&x_cls, &doms, rng, mode)?;
            let concat = shared_cls.hcat(&specific)?;
            let lp = model.classify_forward(&concat, rng, mode)?;
            let k = lp.cols();
            let mut g = Matrix::zeros(n_cls, k);
            for r in 0..n_cls {
                let t = targets[r];
                if t >= k {
                    return Err(Error::Data(format!("label {t} out of range for {k} classes")));
                }
                let nll = -lp.get(r, t);
                let slot = if is_pseudo[r] {
                    &mut per[doms[r]].j_rplr
                } else {
                    &mut per[doms[r]].j_c
                };
                add_term(slot, value_w[r] * nll);
                g.set(r, t, -grad_w[r]);
            }
            let g_concat = model.classify_backward(&g)?;
            let (gs, gd) = g_concat.split_cols(sd);
            model.specific_backward(&gd)?;
            g_shared_cls = gs;
        }
        let mut g_shared_adv = Matrix::zeros(0, sd);
        if adv.x.rows() > 0 {
            let shared_adv = rows_range(&shared, n_cls, x_all.rows());
            let ld = model.discriminate_forward(&shared_adv, rng, mode)?;
            let (values, mut grad) = dls_rows(&ld, &adv.domains, &weights.target, &adv.weights)?;
            for ((&d, &w), v) in adv.domains.iter().zip(&adv.weights).zip(&values) {
                add_term(&mut per[d].j_d_els, w * v);
            }
            grad.scale(weights.lambda);
            g_shared_adv = model.discriminate_backward(&grad)?;
        }
        let g_shared = Matrix::stack(&[&g_shared_cls, &g_shared_adv], sd)?;
        model.shared_backward(&g_shared)?;
    }

    let j_c = sum_terms(&per, |t| t.j_c);
    let j_d = use_adv.then(|| sum_terms(&per, |t| t.j_d_els));
    let j_rplr = use_rplr.then(|| sum_terms(&per, |t| t.j_rplr));
    let combined =
        j_c + weights.lambda * j_d.unwrap_or(0.0) + weights.lambda_rplr * j_rplr.unwrap_or(0.0);
    Ok(LossBreakdown {
        role: Role::Main,
        j_c,
        j_d_els: j_d,
        j_rplr,
        combined,
        per_domain: per,
    })
}

/// `J_C`: summed per-domain mean NLL on labeled batches.
pub fn classification_loss(
    model: &mut SanModel,
    batches: &[LabeledBatch],
    rng: &mut Rng,
    mode: ForwardMode,
) -> Result<f64> {
    let batch = MainBatch {
        labeled: batches.to_vec(),
        ..Default::default()
    };
    let w = ObjectiveWeights {
        lambda: 0.0,
        lambda_rplr: 0.0,
        target: DomainTarget::OneHot,
    };
    Ok(main_objective(model, &batch, &w, rng, mode)?.j_c)
}

/// `J_C^rplr`: weighted NLL against pseudo-labels, averaged over the rows with
/// `w > 0` of each domain's batch and summed across domains.
pub fn rplr_loss(model: &mut SanModel, batches: &[PseudoBatch], rng: &mut Rng, mode: ForwardMode) -> Result<f64> {
    let batch = MainBatch {
        pseudo: batches.to_vec(),
        ..Default::default()
    };
    let w = ObjectiveWeights {
        lambda: 0.0,
        lambda_rplr: 1.0,
        target: DomainTarget::OneHot,
    };
    Ok(main_objective(model, &batch, &w, rng, mode)?.j_rplr.unwrap_or(0.0))
}
