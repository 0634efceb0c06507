use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Scalar loss value together with its gradient w.r.t. the log-probabilities.
#[derive(Clone, Debug)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Matrix,
}

/// Mean negative log-likelihood over the batch.
pub fn nll_loss(log_probs: &Matrix, targets: &[usize]) -> Result<LossGrad> {
    let n = log_probs.rows();
    let w = if n == 0 { 0.0 } else { 1.0 / n as f64 };
    weighted_nll(log_probs, targets, &vec![w; n])
}

/// `Σ_r weight_r · (−log_probs[r, target_r])`.
pub fn weighted_nll(log_probs: &Matrix, targets: &[usize], weights: &[f64]) -> Result<LossGrad> {
    if targets.len() != log_probs.rows() || weights.len() != log_probs.rows() {
        return Err(Error::shape(
            "weighted_nll",
            log_probs.rows(),
            format!("{} targets / {} weights", targets.len(), weights.len()),
        ));
    }
    let k = log_probs.cols();
    let mut grad = Matrix::zeros(log_probs.rows(), k);
    let mut value = 0.0;
    for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
        if t >= k {
            return Err(Error::Data(format!(
                "target {t} out of range for {k} classes (row {r})"
            )));
        }
        if w == 0.0 {
            continue;
        }
        value -= w * log_probs.get(r, t);
        grad.set(r, t, -w);
    }
    Ok(LossGrad { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::log_softmax;
    use crate::nn::Rng;

    #[test]
    fn confident_correct_is_zero() {
        let lp = Matrix::row_vector(&[0.0, -1e6]);
        let l = nll_loss(&lp, &[0]).unwrap();
        assert_eq!(l.value, 0.0);
    }

    #[test]
    fn uniform_is_ln_k() {
        let k = 5;
        let lp = Matrix::filled(3, k, -(k as f64).ln());
        let l = nll_loss(&lp, &[0, 2, 4]).unwrap();
        assert!((l.value - (k as f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_target() {
        let lp = Matrix::filled(1, 2, -2f64.ln());
        assert!(matches!(nll_loss(&lp, &[2]), Err(Error::Data(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(9);
        let logits = Matrix::from_vec(4, 3, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let lp = log_softmax(&logits);
        let targets = [0, 2, 1, 1];
        let g = nll_loss(&lp, &targets).unwrap().grad;
        let h = 1e-5;
        for idx in 0..12 {
            let mut p = lp.clone();
            p.as_mut_slice()[idx] += h;
            let up = nll_loss(&p, &targets).unwrap().value;
            p.as_mut_slice()[idx] -= 2.0 * h;
            let dn = nll_loss(&p, &targets).unwrap().value;
            let num = (up - dn) / (2.0 * h);
            let ana = g.as_slice()[idx];
            assert!((num - ana).abs() <= 1e-4 * num.abs().max(ana.abs()).max(1e-8));
        }
    }
}
