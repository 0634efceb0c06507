use serde::Serialize;

use crate::error::Result;
use crate::nn::{Params, Rng};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub h: f64,
    pub tol: f64,
    /// Coordinates checked per tensor; `None` checks all of them.
    pub max_per_tensor: Option<usize>,
    /// Denominator floor for the relative error.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            max_per_tensor: Some(24),
            abs_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    /// Coordinates whose one-sided differences disagree, i.e. a ReLU kink lies within `h`.
    pub kinks: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }

    pub fn kinks(&self) -> usize {
        self.tensors.iter().map(|t| t.kinks).sum()
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err < tol && self.kinks() * 20 <= self.checked().max(1)
    }
}

/// Compares the analytic gradient left in `model` by `loss` against central
/// differences. `loss` must run forward and backward and be deterministic
/// (freeze dropout masks and stochastic-layer noise first).
pub fn grad_check<M: Params + ?Sized>(
    model: &mut M,
    loss: &mut dyn FnMut(&mut M) -> Result<f64>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    model.zero_grad();
    let base = loss(model)?;
    let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
    model.visit_params(&mut |t| analytic.push((t.name.clone(), t.grad.to_vec())));
    model.zero_grad();

    let mut rng = Rng::new(opts.seed);
    let mut report = GradCheckReport::default();
    for (ti, (name, grads)) in analytic.iter().enumerate() {
        let mut coords: Vec<usize> = (0..grads.len()).collect();
        if let Some(max) = opts.max_per_tensor {
            if coords.len() > max {
                rng.shuffle(&mut coords);
                coords.truncate(max);
                coords.sort_unstable();
            }
        }
        let mut check = TensorCheck {
            name: name.clone(),
            checked: 0,
            kinks: 0,
            max_rel_err: 0.0,
            worst_index: 0,
        };
        for &ci in &coords {
            let orig = nudge(model, ti, ci, None);
            nudge(model, ti, ci, Some(orig + opts.h));
            let up = loss(model)?;
            nudge(model, ti, ci, Some(orig - opts.h));
            let down = loss(model)?;
            nudge(model, ti, ci, Some(orig));
            model.zero_grad();

            let numeric = (up - down) / (2.0 * opts.h);
            let a = grads[ci];
            let denom = a.abs().max(numeric.abs()).max(opts.abs_floor);
            let rel = (a - numeric).abs() / denom;
            check.checked += 1;
            if rel >= opts.tol {
                let fwd = (up - base) / opts.h;
                let bwd = (base - down) / opts.h;
                if (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()).max(1e-4) {
                    check.kinks += 1;
                    continue;
                }
            }
            if rel > check.max_rel_err {
                check.max_rel_err = rel;
                check.worst_index = ci;
            }
        }
        report.max_rel_err = report.max_rel_err.max(check.max_rel_err);
        report.tensors.push(check);
    }
    Ok(report)
}

/// Reads coordinate `ci` of tensor `ti`, optionally overwriting it.
fn nudge<M: Params + ?Sized>(model: &mut M, ti: usize, ci: usize, set: Option<f64>) -> f64 {
    let mut idx = 0;
    let mut old = 0.0;
    model.visit_params(&mut |t| {
        if idx == ti {
            old = t.value[ci];
            if let Some(v) = set {
                t.value[ci] = v;
            }
        }
        idx += 1;
    });
    old
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{layers::log_softmax, nll_loss, Linear, LogSoftmax, Matrix, ParamTensor, Relu};

    struct Empty;
    impl Params for Empty {
        fn visit_params(&mut self, _f: &mut dyn FnMut(ParamTensor<'_>)) {}
    }

    #[test]
    fn zero_parameter_model_gives_empty_report() {
        let r = grad_check(&mut Empty, &mut |_| Ok(1.0), &GradCheckOptions::default()).unwrap();
        assert!(r.is_empty());
        assert_eq!(r.max_rel_err, 0.0);
    }

    struct Stack {
        l1: Linear,
        relu: Relu,
        l2: Linear,
        ls: LogSoftmax,
    }

    impl Params for Stack {
        fn visit_params(&mut self, f: &mut dyn FnMut(ParamTensor<'_>)) {
            self.l1.visit("l1", f);
            self.l2.visit("l2", f);
        }
    }

    #[test]
    fn linear_relu_nll_stack_passes() {
        let mut rng = Rng::new(7);
        let mut m = Stack {
            l1: Linear::new(6, 8, &mut rng),
            relu: Relu::default(),
            l2: Linear::new(8, 3, &mut rng),
            ls: LogSoftmax::default(),
        };
        let x = Matrix::from_vec(5, 6, (0..30).map(|_| rng.normal()).collect()).unwrap();
        let y = [0, 1, 2, 1, 0];
        let report = grad_check(
            &mut m,
            &mut |m: &mut Stack| {
                let h = m.l1.forward(&x)?;
                let h = m.relu.forward(&h);
                let z = m.l2.forward(&h)?;
                let lp = m.ls.forward(&z);
                let l = nll_loss(&lp, &y)?;
                let g = m.ls.backward(&l.grad)?;
                let g = m.l2.backward(&g)?;
                let g = m.relu.backward(&g)?;
                m.l1.backward(&g)?;
                Ok(l.value)
            },
            &GradCheckOptions {
                max_per_tensor: None,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.passed(1e-4), "{report:?}");
        assert_eq!(report.checked(), 6 * 8 + 8 + 8 * 3 + 3);
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut rng = Rng::new(2);
        let mut l = Linear::new(3, 2, &mut rng);
        let x = Matrix::from_vec(2, 3, (0..6).map(|_| rng.normal()).collect()).unwrap();
        let report = grad_check(
            &mut l,
            &mut |l: &mut Linear| {
                let z = l.forward(&x)?;
                let lp = log_softmax(&z);
                let loss = nll_loss(&lp, &[0, 1])?;
                let mut ls = LogSoftmax::default();
                ls.forward(&z);
                let g = ls.backward(&loss.grad)?;
                // deliberately flipped sign
                let mut g = g;
                g.scale(-1.0);
                l.backward(&g)?;
                Ok(loss.value)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(!report.passed(1e-4));
    }
}
