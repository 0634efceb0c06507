//! Gaussian-uniform mixture over pseudo-label distances.
//!
//! Inlier distances follow a half-Gaussian at zero with variance `sigma`,
//! outliers a uniform on `[0, delta]`. On the mirrored (signed) sample the
//! same model is a full Gaussian against a uniform on `[-delta, delta]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureFloors {
    pub pi_min: f64,
    pub sigma_min: f64,
    pub delta_min: f64,
}

impl Default for MixtureFloors {
    fn default() -> Self {
        Self {
            pi_min: 0.01,
            sigma_min: 1e-6,
            delta_min: 1e-4,
        }
    }
}

/// Mixture parameters for one class. `sigma` is a variance, not a standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMixture {
    pub pi: f64,
    pub sigma: f64,
    pub delta: f64,
}

impl ClassMixture {
    /// Used for classes too small to fit.
    pub const PRIOR: ClassMixture = ClassMixture {
        pi: 0.5,
        sigma: 0.1,
        delta: 2.0,
    };

    pub fn clamped(self, floors: &MixtureFloors) -> Self {
        Self {
            pi: self.pi.clamp(floors.pi_min, 1.0 - floors.pi_min),
            sigma: self.sigma.max(floors.sigma_min),
            delta: self.delta.max(floors.delta_min),
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.sigma.sqrt()
    }
}

/// φ: one mixture per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub classes: Vec<ClassMixture>,
}

impl MixtureParams {
    pub fn prior(num_classes: usize) -> Self {
        Self {
            classes: vec![ClassMixture::PRIOR; num_classes],
        }
    }

    pub fn get(&self, k: usize) -> Option<&ClassMixture> {
        self.classes.get(k)
    }
}

/// Full Gaussian density `N(x | 0, sigma)` with `sigma` the variance.
pub fn gaussian_density(x: f64, sigma: f64) -> f64 {
    (-(x * x) / (2.0 * sigma)).exp() / (2.0 * PI * sigma).sqrt()
}

/// `N⁺(d | 0, sigma)`: twice the Gaussian on `d ≥ 0`, zero below.
pub fn half_gaussian_density(d: f64, sigma: f64) -> f64 {
    if d < 0.0 {
        0.0
    } else {
        2.0 * gaussian_density(d, sigma)
    }
}

fn ln_half_gaussian(d: f64, sigma: f64) -> f64 {
    2f64.ln() - 0.5 * (2.0 * PI * sigma).ln() - d * d / (2.0 * sigma)
}

/// Density of `U(0, delta)`.
pub fn uniform_density(d: f64, delta: f64) -> f64 {
    if (0.0..=delta).contains(&d) {
        1.0 / delta
    } else {
        0.0
    }
}

/// `(p(d), π·N⁺(d|0,σ))` for one class.
pub fn mixture_density(d: f64, m: &ClassMixture) -> (f64, f64) {
    let inlier = m.pi * half_gaussian_density(d, m.sigma);
    (inlier + (1.0 - m.pi) * uniform_density(d, m.delta), inlier)
}

/// Posterior probability that a pseudo-label at distance `d` is correct.
/// Outside the uniform support the answer is 1; inside, the ratio is formed
/// in log space so a vanishing Gaussian tail cannot produce 0/0.
pub fn posterior_beta(d: f64, m: &ClassMixture) -> f64 {
    if d > m.delta {
        return 1.0;
    }
    let ln_in = m.pi.ln() + ln_half_gaussian(d.max(0.0), m.sigma);
    let ln_out = (1.0 - m.pi).ln() - m.delta.ln();
    (1.0 / (1.0 + (ln_out - ln_in).exp())).clamp(0.0, 1.0)
}

/// E-step responsibility on the mirrored sample: full Gaussian against `U(−δ, δ)`.
pub fn mirrored_beta(d_signed: f64, m: &ClassMixture) -> f64 {
    if d_signed.abs() > m.delta {
        return 1.0;
    }
    let g = m.pi * gaussian_density(d_signed, m.sigma);
    let u = (1.0 - m.pi) / (2.0 * m.delta);
    (g / (g + u)).clamp(0.0, 1.0)
}

/// Log density of the mirrored mixture at a signed distance.
pub fn mirrored_log_density(d_signed: f64, m: &ClassMixture) -> f64 {
    let ln_g = m.pi.ln() - 0.5 * (2.0 * PI * m.sigma).ln() - d_signed * d_signed / (2.0 * m.sigma);
    if d_signed.abs() > m.delta {
        return ln_g;
    }
    let ln_u = (1.0 - m.pi).ln() - (2.0 * m.delta).ln();
    let hi = ln_g.max(ln_u);
    hi + ((ln_g - hi).exp() + (ln_u - hi).exp()).ln()
}

/// Sample weight: `β` when strictly above one half, otherwise zero.
pub fn weight(beta: f64) -> f64 {
    if beta > 0.5 {
        beta
    } else {
        0.0
    }
}
