use crate::error::{Error, Result};
use crate::nn::{Matrix, Rng};

/// One named parameter tensor handed out by [`Params::visit_params`].
pub struct ParamTensor<'a> {
    pub name: String,
    pub shape: (usize, usize),
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
}

/// Anything holding trainable tensors. Visit order must be stable, the
/// optimizer keys its moment buffers on it.
pub trait Params {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamTensor<'_>));

    fn zero_grad(&mut self) {
        self.visit_params(&mut |t| t.grad.iter_mut().for_each(|g| *g = 0.0));
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |t| n += t.value.len());
        n
    }
}

/// Symmetric fan-based uniform init in ±sqrt(6/(in+out)).
pub fn glorot_uniform(out_dim: usize, in_dim: usize, rng: &mut Rng) -> Matrix {
    let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
    let data = (0..out_dim * in_dim)
        .map(|_| rng.uniform_in(-bound, bound))
        .collect();
    Matrix::from_vec(out_dim, in_dim, data).expect("sized above")
}

/// Dense layer `y = x·Wᵀ + b` with `W` stored out×in.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub grad_weight: Matrix,
    pub grad_bias: Vec<f64>,
    input: Option<Matrix>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        Self::from_parts(glorot_uniform(out_dim, in_dim, rng), vec![0.0; out_dim])
    }

    pub fn from_parts(weight: Matrix, bias: Vec<f64>) -> Self {
        assert_eq!(weight.rows(), bias.len());
        Self {
            grad_weight: Matrix::zeros(weight.rows(), weight.cols()),
            grad_bias: vec![0.0; bias.len()],
            weight,
            bias,
            input: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let y = x.affine(&self.weight, &self.bias)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Forward without caching, for inference.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        x.affine(&self.weight, &self.bias)
    }

    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        self.backward_inner(grad_out, true)
            .map(|g| g.expect("input gradient requested"))
    }

    /// Accumulates parameter gradients without forming the input gradient.
    /// Used on first layers, whose input is data.
    pub fn backward_params_only(&mut self, grad_out: &Matrix) -> Result<()> {
        self.backward_inner(grad_out, false).map(|_| ())
    }

    fn backward_inner(&mut self, grad_out: &Matrix, input_grad: bool) -> Result<Option<Matrix>> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::State("Linear::backward called before forward".into()))?;
        if grad_out.rows() != x.rows() || grad_out.cols() != self.out_dim() {
            return Err(Error::shape(
                "Linear::backward",
                format!("{}x{}", x.rows(), self.out_dim()),
                format!("{}x{}", grad_out.rows(), grad_out.cols()),
            ));
        }
        grad_out.accumulate_t_matmul(x, &mut self.grad_weight)?;
        for (gb, s) in self.grad_bias.iter_mut().zip(grad_out.column_sums()) {
            *gb += s;
        }
        if input_grad {
            grad_out.matmul(&self.weight).map(Some)
        } else {
            Ok(None)
        }
    }

    pub(crate) fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(ParamTensor<'_>)) {
        let shape = self.weight.shape();
        f(ParamTensor {
            name: format!("{prefix}.w"),
            shape,
            value: self.weight.as_mut_slice(),
            grad: self.grad_weight.as_mut_slice(),
        });
        let n = self.bias.len();
        f(ParamTensor {
            name: format!("{prefix}.b"),
            shape: (n, 1),
            value: &mut self.bias,
            grad: &mut self.grad_bias,
        });
    }
}

impl Params for Linear {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamTensor<'_>)) {
        self.visit("linear", f);
    }
}

#[derive(Clone, Debug, Default)]
pub struct Relu {
    input: Option<Matrix>,
}

impl Relu {
    pub fn forward(&mut self, x: &Matrix) -> Matrix {
        self.input = Some(x.clone());
        relu(x)
    }

    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::State("Relu::backward called before forward".into()))?;
        if x.shape() != grad_out.shape() {
            return Err(Error::shape(
                "Relu::backward",
                format!("{:?}", x.shape()),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let mut g = grad_out.clone();
        for (gv, &xv) in g.as_mut_slice().iter_mut().zip(x.as_slice()) {
            if xv <= 0.0 {
                *gv = 0.0;
            }
        }
        Ok(g)
    }
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

/// Inverted dropout: kept units are scaled by `1/(1-rate)` so evaluation is the identity.
#[derive(Clone, Debug)]
pub struct Dropout {
    rate: f64,
    mask: Option<Matrix>,
    frozen: bool,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(Self {
            rate,
            mask: None,
            frozen: false,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Reuse the current mask on subsequent forwards (gradient checking).
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn forward(&mut self, x: &Matrix, rng: &mut Rng, train: bool) -> Matrix {
        if !train || self.rate == 0.0 {
            self.mask = None;
            return x.clone();
        }
        let reuse = self.frozen
            && self
                .mask
                .as_ref()
                .is_some_and(|m| m.shape() == x.shape());
        if !reuse {
            let keep = 1.0 - self.rate;
            let scale = 1.0 / keep;
            let mut m = Matrix::zeros(x.rows(), x.cols());
            for v in m.as_mut_slice() {
                *v = if rng.uniform() < keep { scale } else { 0.0 };
            }
            self.mask = Some(m);
        }
        let m = self.mask.as_ref().expect("mask set above");
        let mut y = x.clone();
        for (yv, mv) in y.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *yv *= mv;
        }
        y
    }

    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let Some(m) = &self.mask else {
            return Ok(grad_out.clone());
        };
        if m.shape() != grad_out.shape() {
            return Err(Error::shape(
                "Dropout::backward",
                format!("{:?}", m.shape()),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let mut g = grad_out.clone();
        for (gv, mv) in g.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *gv *= mv;
        }
        Ok(g)
    }
}

/// Row-wise, max-shifted log-softmax.
#[derive(Clone, Debug, Default)]
pub struct LogSoftmax {
    output: Option<Matrix>,
}

impl LogSoftmax {
    pub fn forward(&mut self, x: &Matrix) -> Matrix {
        let y = log_softmax(x);
        self.output = Some(y.clone());
        y
    }

    /// `g_in = g - softmax · rowsum(g)`.
    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let y = self
            .output
            .as_ref()
            .ok_or_else(|| Error::State("LogSoftmax::backward called before forward".into()))?;
        if y.shape() != grad_out.shape() {
            return Err(Error::shape(
                "LogSoftmax::backward",
                format!("{:?}", y.shape()),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let mut g = grad_out.clone();
        for i in 0..g.rows() {
            let s: f64 = grad_out.row(i).iter().sum();
            let yr = y.row(i);
            for (gv, &lp) in g.row_mut(i).iter_mut().zip(yr) {
                *gv -= lp.exp() * s;
            }
        }
        Ok(g)
    }
}

pub fn log_softmax(x: &Matrix) -> Matrix {
    let mut y = x.clone();
    for i in 0..y.rows() {
        let r = y.row_mut(i);
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + r.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        r.iter_mut().for_each(|v| *v -= lse);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_identity() {
        let mut l = Linear::from_parts(Matrix::identity(2), vec![0.0, 0.0]);
        let y = l.forward(&Matrix::row_vector(&[1.0, 2.0])).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn linear_forward_matches_loop_recomputation() {
        let mut rng = Rng::new(42);
        let mut l = Linear::new(7, 5, &mut rng);
        l.bias.iter_mut().for_each(|b| *b = rng.normal());
        let x = Matrix::from_vec(3, 7, (0..21).map(|_| rng.normal()).collect()).unwrap();
        let y = l.forward(&x).unwrap();
        for i in 0..3 {
            for o in 0..5 {
                let mut acc = l.bias[o];
                for k in 0..7 {
                    acc += l.weight.get(o, k) * x.get(i, k);
                }
                assert!((y.get(i, o) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_backward_scalar_chain_rule() {
        let mut l = Linear::from_parts(Matrix::row_vector(&[3.0]), vec![0.5]);
        l.forward(&Matrix::row_vector(&[2.0])).unwrap();
        let gin = l.backward(&Matrix::row_vector(&[4.0])).unwrap();
        assert_eq!(l.grad_weight.as_slice(), &[8.0]);
        assert_eq!(l.grad_bias, vec![4.0]);
        assert_eq!(gin.as_slice(), &[12.0]);
    }

    #[test]
    fn linear_backward_zero_grad_out() {
        let mut rng = Rng::new(1);
        let mut l = Linear::new(3, 2, &mut rng);
        l.forward(&Matrix::filled(2, 3, 1.0)).unwrap();
        let gin = l.backward(&Matrix::zeros(2, 2)).unwrap();
        assert!(gin.as_slice().iter().all(|&v| v == 0.0));
        assert!(l.grad_weight.as_slice().iter().all(|&v| v == 0.0));
        assert!(l.grad_bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut rng = Rng::new(1);
        let mut l = Linear::new(3, 2, &mut rng);
        assert!(matches!(
            l.backward(&Matrix::zeros(1, 2)),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn relu_clamps_negatives() {
        let mut r = Relu::default();
        let y = r.forward(&Matrix::row_vector(&[-1.0, 0.0, 2.0]));
        assert_eq!(y.as_slice(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn dropout_rate_validation() {
        assert!(Dropout::new(1.0).is_err());
        assert!(Dropout::new(-0.1).is_err());
        assert!(Dropout::new(0.4).is_ok());
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let mut d = Dropout::new(0.0).unwrap();
        let mut rng = Rng::new(3);
        let x = Matrix::row_vector(&[1.0, -2.0, 3.5]);
        assert_eq!(d.forward(&x, &mut rng, true), x);
        assert_eq!(d.forward(&x, &mut rng, false), x);
    }

    #[test]
    fn dropout_eval_is_bit_exact_identity() {
        let mut d = Dropout::new(0.4).unwrap();
        let mut rng = Rng::new(3);
        let x = Matrix::row_vector(&[0.1, -2.0, 3.5e-7]);
        let y = d.forward(&x, &mut rng, false);
        for (a, b) in x.as_slice().iter().zip(y.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn dropout_train_mode_preserves_expectation() {
        let mut d = Dropout::new(0.4).unwrap();
        let mut rng = Rng::new(11);
        let n = 100_000;
        let x = Matrix::filled(1, n, 2.0);
        let y = d.forward(&x, &mut rng, true);
        let mean = y.as_slice().iter().sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() / 2.0 < 0.01, "mean {mean}");
    }

    #[test]
    fn log_softmax_symmetric_pair() {
        let y = log_softmax(&Matrix::row_vector(&[0.0, 0.0]));
        let ln2 = 2f64.ln();
        assert!((y.get(0, 0) + ln2).abs() < 1e-15);
        assert!((y.get(0, 1) + ln2).abs() < 1e-15);
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let mut rng = Rng::new(5);
        let x = Matrix::from_vec(20, 6, (0..120).map(|_| 30.0 * rng.normal()).collect()).unwrap();
        let y = log_softmax(&x);
        for i in 0..20 {
            let s: f64 = y.row(i).iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
