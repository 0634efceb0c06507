use crate::error::{Error, Result};
use crate::nn::Params;

#[derive(Clone, Debug)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment buffers for one parameter group, keyed by visit order.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    /// Bias-corrected Adam update; gradients are zeroed afterwards.
    pub fn step(&mut self, params: &mut dyn Params, lr: f64) -> Result<()> {
        // Validate before touching anything so a bad step leaves parameters intact.
        let mut bad: Option<String> = None;
        params.visit_params(&mut |t| {
            if bad.is_none() && t.grad.iter().any(|g| !g.is_finite()) {
                bad = Some(t.name.clone());
            }
        });
        if let Some(name) = bad {
            return Err(Error::Numeric {
                context: "adam".into(),
                detail: format!("non-finite gradient in tensor {name}"),
            });
        }

        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let mut idx = 0;
        let (first, second) = (&mut self.first, &mut self.second);
        let mut shape_err = None;
        params.visit_params(&mut |t| {
            if first.len() <= idx {
                first.push(vec![0.0; t.value.len()]);
                second.push(vec![0.0; t.value.len()]);
            }
            let (m, v) = (&mut first[idx], &mut second[idx]);
            if m.len() != t.value.len() {
                shape_err = Some(t.name.clone());
                idx += 1;
                return;
            }
            for j in 0..t.value.len() {
                let g = t.grad[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                t.value[j] -= lr * mhat / (vhat.sqrt() + eps);
                t.grad[j] = 0.0;
            }
            idx += 1;
        });
        match shape_err {
            Some(name) => Err(Error::shape("adam", "stable parameter layout", name)),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamTensor;

    struct Scalar {
        w: [f64; 1],
        g: [f64; 1],
    }

    impl Params for Scalar {
        fn visit_params(&mut self, f: &mut dyn FnMut(ParamTensor<'_>)) {
            f(ParamTensor {
                name: "w".into(),
                shape: (1, 1),
                value: &mut self.w,
                grad: &mut self.g,
            });
        }
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = Scalar { w: [1.25], g: [0.0] };
        let mut adam = AdamState::default();
        for _ in 0..10 {
            adam.step(&mut p, 0.1).unwrap();
        }
        assert_eq!(p.w[0], 1.25);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Scalar { w: [0.0], g: [3.0] };
        let mut adam = AdamState::default();
        adam.step(&mut p, 1e-3).unwrap();
        assert!((p.w[0] + 1e-3).abs() < 1e-9);
        assert_eq!(p.g[0], 0.0);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut p = Scalar { w: [0.0], g: [0.0] };
        let mut adam = AdamState::default();
        for _ in 0..2000 {
            p.g[0] = 2.0 * (p.w[0] - 3.0);
            adam.step(&mut p, 1e-2).unwrap();
        }
        assert!((p.w[0] - 3.0).abs() < 1e-2, "w = {}", p.w[0]);
    }

    #[test]
    fn nan_gradient_names_tensor() {
        let mut p = Scalar {
            w: [0.0],
            g: [f64::NAN],
        };
        let err = AdamState::default().step(&mut p, 1e-3).unwrap_err();
        assert!(err.to_string().contains("tensor w"));
        assert_eq!(p.w[0], 0.0);
    }

    #[test]
    fn second_moments_non_negative() {
        let mut p = Scalar { w: [0.0], g: [0.0] };
        let mut adam = AdamState::default();
        for i in 0..20 {
            p.g[0] = if i % 2 == 0 { -1.5 } else { 0.5 };
            adam.step(&mut p, 1e-2).unwrap();
        }
        assert!(adam.second_moments()[0][0] >= 0.0);
        assert_eq!(adam.step, 20);
    }
}
