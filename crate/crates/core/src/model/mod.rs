//! The network components: shared extractor `F_s`, the single stochastic
//! domain-specific extractor `F_d`, classifier `C` and domain discriminator
//! `D`, plus a shared-private baseline with one deterministic extractor per
//! domain.

pub mod checkpoint;
mod mlp;
mod stochastic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Dropout, LogSoftmax, Matrix, ParamTensor, Params, Relu, Rng};

pub use mlp::Mlp;
pub use stochastic::{with_log_var_sign_flip, SampleMode, StochasticLinear, LOG_VAR_FLOOR, LOG_VAR_INIT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    San,
    SharedPrivate,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "san" => Ok(ModelKind::San),
            "shared_private" | "shared-private" => Ok(ModelKind::SharedPrivate),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected san or shared_private)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::San => "san",
            ModelKind::SharedPrivate => "shared_private",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ModelKind,
    pub input_dim: usize,
    /// Hidden widths shared by `F_s` and `F_d`.
    pub hidden: Vec<usize>,
    pub shared_dim: usize,
    pub specific_dim: usize,
    pub num_classes: usize,
    pub num_domains: usize,
    pub dropout: f64,
}

/// Exact parameter counts per component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ParamCounts {
    pub shared: usize,
    /// All domain-specific parameters (μ and log-variance for SAN, all M extractors for shared-private).
    pub specific: usize,
    /// One domain-specific extractor.
    pub specific_single: usize,
    pub classifier: usize,
    pub discriminator: usize,
    pub total: usize,
}

fn dense(i: usize, o: usize) -> usize {
    i * o + o
}

fn chain(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| dense(w[0], w[1])).sum()
}

impl Architecture {
    pub fn concat_dim(&self) -> usize {
        self.shared_dim + self.specific_dim
    }

    pub fn validate(&self) -> Result<()> {
        let zero = [
            ("input_dim", self.input_dim),
            ("shared_dim", self.shared_dim),
            ("specific_dim", self.specific_dim),
        ];
        for (name, v) in zero {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.num_domains < 1 {
            return Err(Error::Config("need at least one domain".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    fn trunk_sizes(&self, out: usize) -> Vec<usize> {
        let mut s = vec![self.input_dim];
        s.extend(&self.hidden);
        s.push(out);
        s
    }

    /// Counts derived from layer arithmetic alone; nothing is allocated.
    pub fn param_counts(&self) -> ParamCounts {
        let shared = chain(&self.trunk_sizes(self.shared_dim));
        let trunk = self.trunk_sizes(self.specific_dim);
        let (specific, specific_single) = match self.kind {
            ModelKind::San => {
                let prefix = chain(&trunk[..trunk.len() - 1]);
                let last = dense(trunk[trunk.len() - 2], self.specific_dim);
                let n = prefix + 2 * last;
                (n, n)
            }
            ModelKind::SharedPrivate => {
                let one = chain(&trunk);
                (one * self.num_domains, one)
            }
        };
        let c = self.concat_dim();
        let classifier = dense(c, c) + dense(c, self.num_classes);
        let discriminator = dense(self.shared_dim, self.shared_dim)
            + dense(self.shared_dim, self.num_domains);
        ParamCounts {
            shared,
            specific,
            specific_single,
            classifier,
            discriminator,
            total: shared + specific + classifier + discriminator,
        }
    }
}

/// How a forward pass treats dropout and the stochastic layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForwardMode {
    pub train: bool,
    pub sample: SampleMode,
}

impl ForwardMode {
    pub const TRAIN: ForwardMode = ForwardMode {
        train: true,
        sample: SampleMode::Sample,
    };
    pub const EVAL: ForwardMode = ForwardMode {
        train: false,
        sample: SampleMode::Mean,
    };
}

/// `F_d` for SAN: deterministic prefix followed by exactly one stochastic layer.
#[derive(Clone, Debug)]
pub struct StochasticExtractor {
    pub prefix: Mlp,
    dropout: Dropout,
    pub layer: StochasticLinear,
    relu: Relu,
}

impl StochasticExtractor {
    fn forward(&mut self, x: &Matrix, rng: &mut Rng, mode: ForwardMode) -> Result<Matrix> {
        let h = self.prefix.forward(x, rng, mode.train)?;
        let h = self.dropout.forward(&h, rng, mode.train);
        let h = self.layer.forward(&h, rng, mode.sample)?;
        Ok(self.relu.forward(&h))
    }

    fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let h = self.prefix.apply(x)?;
        Ok(crate::nn::layers::relu(&self.layer.apply_mean(&h)?))
    }

    fn backward(&mut self, g: &Matrix) -> Result<()> {
        let g = self.relu.backward(g)?;
        let prefix_is_identity = self.prefix.is_identity();
        let g = self.layer.backward(&g)?;
        if prefix_is_identity {
            return Ok(());
        }
        let g = self.dropout.backward(&g)?;
        self.prefix.backward(&g, false)?;
        Ok(())
    }

    fn visit(&mut self, f: &mut dyn FnMut(ParamTensor<'_>)) {
        self.prefix.visit("fd", f);
        self.layer.visit("fd.stoch", f);
    }

    fn set_frozen(&mut self, frozen: bool) {
        self.prefix.set_frozen(frozen);
        self.dropout.set_frozen(frozen);
        self.layer.set_frozen(frozen);
    }
}

#[derive(Clone, Debug)]
pub enum SpecificExtractor {
    Stochastic(StochasticExtractor),
    /// One deterministic extractor per domain; row groups cached for backward.
    Private {
        extractors: Vec<Mlp>,
        groups: Vec<Vec<usize>>,
    },
}

/// Output of [`SanModel::forward_features`].
#[derive(Clone, Debug)]
pub struct Features {
    pub shared: Matrix,
    pub specific: Matrix,
    pub concat: Matrix,
}

#[derive(Clone, Debug)]
pub struct SanModel {
    arch: Architecture,
    pub shared: Mlp,
    pub specific: SpecificExtractor,
    pub classifier: Mlp,
    pub discriminator: Mlp,
    classifier_out: LogSoftmax,
    discriminator_out: LogSoftmax,
}

impl SanModel {
    pub fn new(arch: Architecture, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let p = arch.dropout;
        let shared = Mlp::new(&arch.trunk_sizes(arch.shared_dim), p, true, rng)?;
        let trunk = arch.trunk_sizes(arch.specific_dim);
        let specific = match arch.kind {
            ModelKind::San => {
                let prefix = Mlp::new(&trunk[..trunk.len() - 1], p, true, rng)?;
                let layer =
                    StochasticLinear::new(trunk[trunk.len() - 2], arch.specific_dim, rng);
                SpecificExtractor::Stochastic(StochasticExtractor {
                    prefix,
                    dropout: Dropout::new(p)?,
                    layer,
                    relu: Relu::default(),
                })
            }
            ModelKind::SharedPrivate => SpecificExtractor::Private {
                extractors: (0..arch.num_domains)
                    .map(|_| Mlp::new(&trunk, p, true, rng))
                    .collect::<Result<_>>()?,
                groups: Vec::new(),
            },
        };
        let c = arch.concat_dim();
        let classifier = Mlp::new(&[c, c, arch.num_classes], p, false, rng)?;
        let s = arch.shared_dim;
        let discriminator = Mlp::new(&[s, s, arch.num_domains], p, false, rng)?;
        Ok(Self {
            arch,
            shared,
            specific,
            classifier,
            discriminator,
            classifier_out: LogSoftmax::default(),
            discriminator_out: LogSoftmax::default(),
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn kind(&self) -> ModelKind {
        self.arch.kind
    }

    pub fn stochastic_layer(&self) -> Option<&StochasticLinear> {
        match &self.specific {
            SpecificExtractor::Stochastic(s) => Some(&s.layer),
            SpecificExtractor::Private { .. } => None,
        }
    }

    pub fn stochastic_layer_mut(&mut self) -> Option<&mut StochasticLinear> {
        match &mut self.specific {
            SpecificExtractor::Stochastic(s) => Some(&mut s.layer),
            SpecificExtractor::Private { .. } => None,
        }
    }

    /// Freezes dropout masks and stochastic noise so repeated forwards are identical.
    pub fn set_frozen(&mut self, frozen: bool) {
        self.shared.set_frozen(frozen);
        match &mut self.specific {
            SpecificExtractor::Stochastic(s) => s.set_frozen(frozen),
            SpecificExtractor::Private { extractors, .. } => {
                extractors.iter_mut().for_each(|e| e.set_frozen(frozen))
            }
        }
        self.classifier.set_frozen(frozen);
        self.discriminator.set_frozen(frozen);
    }

    fn check_input(&self, x: &Matrix, domains: Option<&[usize]>) -> Result<()> {
        if x.cols() != self.arch.input_dim {
            return Err(Error::shape(
                "model input",
                format!("{} features", self.arch.input_dim),
                format!("{} features", x.cols()),
            ));
        }
        if let Some(d) = domains {
            if d.len() != x.rows() {
                return Err(Error::shape("domain ids", x.rows(), d.len()));
            }
            if let Some(&bad) = d.iter().find(|&&d| d >= self.arch.num_domains) {
                return Err(Error::Data(format!(
                    "domain id {bad} out of range for {} domains",
                    self.arch.num_domains
                )));
            }
        }
        Ok(())
    }

    pub fn shared_forward(&mut self, x: &Matrix, rng: &mut Rng, mode: ForwardMode) -> Result<Matrix> {
        self.check_input(x, None)?;
        self.shared.forward(x, rng, mode.train)
    }

    pub fn shared_backward(&mut self, grad: &Matrix) -> Result<()> {
        self.shared.backward(grad, false).map(|_| ())
    }

    pub fn specific_forward(
        &mut self,
        x: &Matrix,
        domains: &[usize],
        rng: &mut Rng,
        mode: ForwardMode,
    ) -> Result<Matrix> {
        self.check_input(x, Some(domains))?;
        let dim = self.arch.specific_dim;
        match &mut self.specific {
            SpecificExtractor::Stochastic(s) => s.forward(x, rng, mode),
            SpecificExtractor::Private { extractors, groups } => {
                *groups = group_rows(domains, extractors.len());
                let mut out = Matrix::zeros(x.rows(), dim);
                for (ext, rows) in extractors.iter_mut().zip(groups.iter()) {
                    if rows.is_empty() {
                        continue;
                    }
                    let y = ext.forward(&x.select_rows(rows), rng, mode.train)?;
                    for (k, &r) in rows.iter().enumerate() {
                        out.row_mut(r).copy_from_slice(y.row(k));
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn specific_backward(&mut self, grad: &Matrix) -> Result<()> {
        match &mut self.specific {
            SpecificExtractor::Stochastic(s) => s.backward(grad),
            SpecificExtractor::Private { extractors, groups } => {
                for (ext, rows) in extractors.iter_mut().zip(groups.iter()) {
                    if rows.is_empty() {
                        continue;
                    }
                    ext.backward(&grad.select_rows(rows), false)?;
                }
                Ok(())
            }
        }
    }

    pub fn forward_features(
        &mut self,
        x: &Matrix,
        domains: &[usize],
        rng: &mut Rng,
        mode: ForwardMode,
    ) -> Result<Features> {
        let shared = self.shared_forward(x, rng, mode)?;
        let specific = self.specific_forward(x, domains, rng, mode)?;
        let concat = shared.hcat(&specific)?;
        Ok(Features {
            shared,
            specific,
            concat,
        })
    }

    /// Log-probabilities over classes.
    pub fn classify_forward(&mut self, concat: &Matrix, rng: &mut Rng, mode: ForwardMode) -> Result<Matrix> {
        let z = self.classifier.forward(concat, rng, mode.train)?;
        Ok(self.classifier_out.forward(&z))
    }

    /// Returns the gradient w.r.t. the concatenated features.
    pub fn classify_backward(&mut self, grad_log_probs: &Matrix) -> Result<Matrix> {
        let g = self.classifier_out.backward(grad_log_probs)?;
        Ok(self.classifier.backward(&g, true)?.expect("input gradient requested"))
    }

    /// Log-probabilities over domains, from shared features only.
    pub fn discriminate_forward(&mut self, shared: &Matrix, rng: &mut Rng, mode: ForwardMode) -> Result<Matrix> {
        let z = self.discriminator.forward(shared, rng, mode.train)?;
        Ok(self.discriminator_out.forward(&z))
    }

    /// Returns the gradient w.r.t. the shared features.
    pub fn discriminate_backward(&mut self, grad_log_probs: &Matrix) -> Result<Matrix> {
        let g = self.discriminator_out.backward(grad_log_probs)?;
        Ok(self
            .discriminator
            .backward(&g, true)?
            .expect("input gradient requested"))
    }

    /// Mean-mode, dropout-free features without touching any cache.
    pub fn features(&self, x: &Matrix, domains: &[usize]) -> Result<Features> {
        self.check_input(x, Some(domains))?;
        let shared = self.shared.apply(x)?;
        let specific = match &self.specific {
            SpecificExtractor::Stochastic(s) => s.apply(x)?,
            SpecificExtractor::Private { extractors, .. } => {
                let groups = group_rows(domains, extractors.len());
                let mut out = Matrix::zeros(x.rows(), self.arch.specific_dim);
                for (ext, rows) in extractors.iter().zip(&groups) {
                    if rows.is_empty() {
                        continue;
                    }
                    let y = ext.apply(&x.select_rows(rows))?;
                    for (k, &r) in rows.iter().enumerate() {
                        out.row_mut(r).copy_from_slice(y.row(k));
                    }
                }
                out
            }
        };
        let concat = shared.hcat(&specific)?;
        Ok(Features {
            shared,
            specific,
            concat,
        })
    }

    pub fn classify(&self, concat: &Matrix) -> Result<Matrix> {
        if concat.cols() != self.arch.concat_dim() {
            return Err(Error::shape(
                "classifier input",
                self.arch.concat_dim(),
                concat.cols(),
            ));
        }
        Ok(crate::nn::layers::log_softmax(&self.classifier.apply(concat)?))
    }

    pub fn discriminate(&self, shared: &Matrix) -> Result<Matrix> {
        Ok(crate::nn::layers::log_softmax(&self.discriminator.apply(shared)?))
    }

    /// Class predictions in mean mode, ties to the lowest index.
    pub fn predict(&self, x: &Matrix, domains: &[usize]) -> Result<Vec<usize>> {
        let f = self.features(x, domains)?;
        let lp = self.classify(&f.concat)?;
        Ok((0..lp.rows()).map(|r| lp.argmax_row(r)).collect())
    }

    /// Keeps log-variances above their floor; call after each optimizer step.
    pub fn clamp_log_var(&mut self) {
        if let Some(l) = self.stochastic_layer_mut() {
            l.clamp_log_var();
        }
    }

    pub fn param_counts(&self) -> ParamCounts {
        let shared = self.shared.param_count();
        let (specific, specific_single) = match &self.specific {
            SpecificExtractor::Stochastic(s) => {
                let n = s.prefix.param_count() + 2 * (s.layer.mu_w.len() + s.layer.mu_b.len());
                (n, n)
            }
            SpecificExtractor::Private { extractors, .. } => {
                let one = extractors.first().map_or(0, Mlp::param_count);
                (extractors.iter().map(Mlp::param_count).sum(), one)
            }
        };
        let classifier = self.classifier.param_count();
        let discriminator = self.discriminator.param_count();
        ParamCounts {
            shared,
            specific,
            specific_single,
            classifier,
            discriminator,
            total: shared + specific + classifier + discriminator,
        }
    }

    fn visit_main(&mut self, f: &mut dyn FnMut(ParamTensor<'_>)) {
        self.shared.visit("fs", f);
        match &mut self.specific {
            SpecificExtractor::Stochastic(s) => s.visit(f),
            SpecificExtractor::Private { extractors, .. } => {
                for (i, e) in extractors.iter_mut().enumerate() {
                    e.visit(&format!("fd{i}"), f);
                }
            }
        }
        self.classifier.visit("c", f);
    }

    /// Parameters of `F_s`, `F_d` and `C`.
    pub fn main_params(&mut self) -> MainParams<'_> {
        MainParams(self)
    }

    /// Parameters of `D`.
    pub fn discriminator_params(&mut self) -> DiscriminatorParams<'_> {
        DiscriminatorParams(self)
    }
}

impl Params for SanModel {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamTensor<'_>)) {
        self.visit_main(f);
        self.discriminator.visit("d", f);
    }
}

pub struct MainParams<'a>(&'a mut SanModel);

impl MainParams<'_> {
    pub fn model(&mut self) -> &mut SanModel {
        self.0
    }
}

impl Params for MainParams<'_> {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamTensor<'_>)) {
        self.0.visit_main(f);
    }
}

pub struct DiscriminatorParams<'a>(&'a mut SanModel);

impl DiscriminatorParams<'_> {
    pub fn model(&mut self) -> &mut SanModel {
        self.0
    }
}

impl Params for DiscriminatorParams<'_> {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamTensor<'_>)) {
        self.0.discriminator.visit("d", f);
    }
}

fn group_rows(domains: &[usize], m: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); m];
    for (r, &d) in domains.iter().enumerate() {
        groups[d].push(r);
    }
    groups
}
