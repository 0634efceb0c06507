use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{glorot_uniform, Matrix, ParamTensor, Params, Rng};

/// Lower clamp for log-variances.
pub const LOG_VAR_FLOOR: f64 = -20.0;
/// Initial log-variance for every weight and bias.
pub const LOG_VAR_INIT: f64 = -4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// `W = μ + σ⊙ε`, ε drawn fresh.
    Sample,
    /// `W = μ`, ε = 0.
    Mean,
}

/// Dense layer whose weights and bias are drawn from a diagonal Gaussian
/// `N(μ, diag(exp(log_var)))` with the reparameterization `μ + σ⊙ε`.
#[derive(Clone, Debug)]
pub struct StochasticLinear {
    pub mu_w: Matrix,
    pub mu_b: Vec<f64>,
    pub log_var_w: Matrix,
    pub log_var_b: Vec<f64>,
    pub grad_mu_w: Matrix,
    pub grad_mu_b: Vec<f64>,
    pub grad_log_var_w: Matrix,
    pub grad_log_var_b: Vec<f64>,
    eps_w: Option<Matrix>,
    eps_b: Option<Vec<f64>>,
    eff_w: Option<Matrix>,
    input: Option<Matrix>,
    frozen: bool,
}

thread_local! {
    static FLIP_LOG_VAR_GRAD: std::cell::Cell<bool> = const { std::cell::Cell::new(false) };
}

/// Runs `f` with the sign of every log-variance gradient flipped on this
/// thread. A deliberate bug for mutation-testing the gradient checks.
#[doc(hidden)]
pub fn with_log_var_sign_flip<T>(f: impl FnOnce() -> T) -> T {
    struct Reset(bool);
    impl Drop for Reset {
        fn drop(&mut self) {
            FLIP_LOG_VAR_GRAD.with(|c| c.set(self.0));
        }
    }
    let _reset = Reset(FLIP_LOG_VAR_GRAD.with(|c| c.replace(true)));
    f()
}

#[inline]
fn sigma(log_var: f64) -> f64 {
    (0.5 * log_var.max(LOG_VAR_FLOOR)).exp()
}

impl StochasticLinear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        Self::from_parts(
            glorot_uniform(out_dim, in_dim, rng),
            vec![0.0; out_dim],
            Matrix::filled(out_dim, in_dim, LOG_VAR_INIT),
            vec![LOG_VAR_INIT; out_dim],
        )
    }

    pub fn from_parts(mu_w: Matrix, mu_b: Vec<f64>, log_var_w: Matrix, log_var_b: Vec<f64>) -> Self {
        assert_eq!(mu_w.shape(), log_var_w.shape());
        assert_eq!(mu_b.len(), mu_w.rows());
        assert_eq!(log_var_b.len(), mu_b.len());
        let (o, i) = mu_w.shape();
        Self {
            grad_mu_w: Matrix::zeros(o, i),
            grad_mu_b: vec![0.0; o],
            grad_log_var_w: Matrix::zeros(o, i),
            grad_log_var_b: vec![0.0; o],
            mu_w,
            mu_b,
            log_var_w,
            log_var_b,
            eps_w: None,
            eps_b: None,
            eff_w: None,
            input: None,
            frozen: false,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.mu_w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.mu_w.rows()
    }

    /// Keep the cached ε across forwards (gradient checking).
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    /// Sets ε explicitly; used by tests and gradient checks.
    pub fn set_noise(&mut self, eps_w: Matrix, eps_b: Vec<f64>) -> Result<()> {
        if eps_w.shape() != self.mu_w.shape() || eps_b.len() != self.mu_b.len() {
            return Err(Error::shape(
                "StochasticLinear::set_noise",
                format!("{:?}", self.mu_w.shape()),
                format!("{:?}", eps_w.shape()),
            ));
        }
        self.eps_w = Some(eps_w);
        self.eps_b = Some(eps_b);
        Ok(())
    }

    pub fn noise(&self) -> Option<(&Matrix, &[f64])> {
        Some((self.eps_w.as_ref()?, self.eps_b.as_deref()?))
    }

    /// Draws ε (or zero in mean mode), caches it and returns the effective weights.
    pub fn sample_weights(&mut self, rng: &mut Rng, mode: SampleMode) -> (Matrix, Vec<f64>) {
        let keep = self.frozen && self.eps_w.is_some();
        if !keep {
            let (o, i) = self.mu_w.shape();
            match mode {
                SampleMode::Mean => {
                    self.eps_w = Some(Matrix::zeros(o, i));
                    self.eps_b = Some(vec![0.0; o]);
                }
                SampleMode::Sample => {
                    let mut e = Matrix::zeros(o, i);
                    e.as_mut_slice().iter_mut().for_each(|v| *v = rng.normal());
                    self.eps_w = Some(e);
                    self.eps_b = Some((0..o).map(|_| rng.normal()).collect());
                }
            }
        }
        if mode == SampleMode::Mean && !keep {
            return (self.mu_w.clone(), self.mu_b.clone());
        }
        let eps_w = self.eps_w.as_ref().expect("noise set above");
        let eps_b = self.eps_b.as_ref().expect("noise set above");
        let mut w = self.mu_w.clone();
        for ((wv, &lv), &e) in w
            .as_mut_slice()
            .iter_mut()
            .zip(self.log_var_w.as_slice())
            .zip(eps_w.as_slice())
        {
            *wv += sigma(lv) * e;
        }
        let b = self
            .mu_b
            .iter()
            .zip(&self.log_var_b)
            .zip(eps_b)
            .map(|((&m, &lv), &e)| m + sigma(lv) * e)
            .collect();
        (w, b)
    }

    pub fn forward(&mut self, x: &Matrix, rng: &mut Rng, mode: SampleMode) -> Result<Matrix> {
        let (w, b) = self.sample_weights(rng, mode);
        let y = x.affine(&w, &b)?;
        self.eff_w = Some(w);
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Inference with `W = μ`, no caching.
    pub fn apply_mean(&self, x: &Matrix) -> Result<Matrix> {
        x.affine(&self.mu_w, &self.mu_b)
    }

    /// ∂L/∂μ is the ordinary weight gradient; ∂L/∂log_var = ∂L/∂W ⊙ ε ⊙ σ/2.
    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let (x, w) = match (&self.input, &self.eff_w) {
            (Some(x), Some(w)) => (x, w),
            _ => {
                return Err(Error::State(
                    "StochasticLinear::backward called before forward".into(),
                ))
            }
        };
        if grad_out.rows() != x.rows() || grad_out.cols() != self.out_dim() {
            return Err(Error::shape(
                "StochasticLinear::backward",
                format!("{}x{}", x.rows(), self.out_dim()),
                format!("{}x{}", grad_out.rows(), grad_out.cols()),
            ));
        }
        let eps_w = self.eps_w.as_ref().expect("cached with input");
        let eps_b = self.eps_b.as_ref().expect("cached with input");

        let mut gw = Matrix::zeros(self.out_dim(), self.in_dim());
        grad_out.accumulate_t_matmul(x, &mut gw)?;
        let gb = grad_out.column_sums();
        let sign = if FLIP_LOG_VAR_GRAD.with(|c| c.get()) { -0.5 } else { 0.5 };

        for (j, &g) in gw.as_slice().iter().enumerate() {
            self.grad_mu_w.as_mut_slice()[j] += g;
            let lv = self.log_var_w.as_slice()[j];
            if lv > LOG_VAR_FLOOR {
                self.grad_log_var_w.as_mut_slice()[j] += g * eps_w.as_slice()[j] * sign * sigma(lv);
            }
        }
        for (j, &g) in gb.iter().enumerate() {
            self.grad_mu_b[j] += g;
            let lv = self.log_var_b[j];
            if lv > LOG_VAR_FLOOR {
                self.grad_log_var_b[j] += g * eps_b[j] * sign * sigma(lv);
            }
        }
        grad_out.matmul(w)
    }

    /// Projects log-variances back above the floor after an optimizer step.
    pub fn clamp_log_var(&mut self) {
        for v in self.log_var_w.as_mut_slice() {
            *v = v.max(LOG_VAR_FLOOR);
        }
        for v in &mut self.log_var_b {
            *v = v.max(LOG_VAR_FLOOR);
        }
    }

    /// Flattened `exp(log_var)` for weights then biases.
    pub fn variances(&self) -> Vec<f64> {
        self.log_var_w
            .as_slice()
            .iter()
            .chain(&self.log_var_b)
            .map(|&lv| lv.max(LOG_VAR_FLOOR).exp())
            .collect()
    }

    pub(crate) fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(ParamTensor<'_>)) {
        let shape = self.mu_w.shape();
        let n = self.mu_b.len();
        f(ParamTensor {
            name: format!("{prefix}.mu"),
            shape,
            value: self.mu_w.as_mut_slice(),
            grad: self.grad_mu_w.as_mut_slice(),
        });
        f(ParamTensor {
            name: format!("{prefix}.mu_b"),
            shape: (n, 1),
            value: &mut self.mu_b,
            grad: &mut self.grad_mu_b,
        });
        f(ParamTensor {
            name: format!("{prefix}.logvar"),
            shape,
            value: self.log_var_w.as_mut_slice(),
            grad: self.grad_log_var_w.as_mut_slice(),
        });
        f(ParamTensor {
            name: format!("{prefix}.logvar_b"),
            shape: (n, 1),
            value: &mut self.log_var_b,
            grad: &mut self.grad_log_var_b,
        });
    }
}

impl Params for StochasticLinear {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamTensor<'_>)) {
        self.visit("stoch", f);
    }
}
