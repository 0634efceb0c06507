//! Built-in verification: finite-difference gradient checks of every layer and
//! objective, EM parameter recovery, and the spherical-center closed form
//! against brute-force minimization.

use std::time::Instant;

use serde::Serialize;

use crate::data::mixture_distances;
use crate::error::Result;
use crate::model::{Architecture, ModelKind, SampleMode, SanModel, StochasticLinear};
use crate::nn::{
    grad_check, nll_loss, weighted_nll, Dropout, GradCheckOptions, GradCheckReport, Linear, LogSoftmax, Matrix,
    ParamTensor, Params, Relu, Rng,
};
use crate::objectives::{
    combined_objective, DomainBatch, DomainTarget, LabeledBatch, MainBatch, ObjectiveWeights, PseudoBatch, Role,
};
use crate::rplr::{class_centers, cosine_distance, em_fit, posterior_beta, EmConfig, EmMode};

/// Relative error bound of the gradient checks.
pub const GRAD_TOL: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Check {
    fn timed(name: &str, t: Instant, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
            seconds: t.elapsed().as_secs_f64(),
        }
    }
}

/// Tab-separated `check, result, seconds, detail` rows.
pub fn table(checks: &[Check]) -> String {
    let mut s = String::from("check\tresult\tseconds\tdetail\n");
    for c in checks {
        let r = if c.passed { "pass" } else { "FAIL" };
        s.push_str(&format!("{}\t{r}\t{:.2}\t{}\n", c.name, c.seconds, c.detail));
    }
    s
}

#[derive(Default)]
struct Tally {
    worst: f64,
    checked: usize,
    kinks: usize,
    failed_seeds: Vec<u64>,
}

impl Tally {
    fn add(&mut self, seed: u64, r: &GradCheckReport) {
        self.worst = self.worst.max(r.max_rel_err);
        self.checked += r.checked();
        self.kinks += r.kinks();
        if r.is_empty() || !r.passed(GRAD_TOL) {
            self.failed_seeds.push(seed);
        }
    }

    fn finish(self, name: &str, t: Instant) -> Check {
        let mut detail = format!(
            "max rel err {:.2e} over {} coordinates ({} kinks)",
            self.worst, self.checked, self.kinks
        );
        if !self.failed_seeds.is_empty() {
            detail.push_str(&format!("; failing seeds {:?}", self.failed_seeds));
        }
        Check::timed(name, t, self.failed_seeds.is_empty(), detail)
    }
}

fn rand_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| scale * rng.normal()).collect())
        .expect("sized above")
}

/// Linear → ReLU → dropout → Linear → log-softmax, trained on (weighted) NLL.
struct Stack {
    l1: Linear,
    relu: Relu,
    drop: Dropout,
    l2: Linear,
    ls: LogSoftmax,
}

impl Params for Stack {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamTensor<'_>)) {
        self.l1.visit_params(f);
        self.l2.visit_params(f);
    }
}

fn layer_stack_check(seed: u64, weighted: bool) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed).derive("selfcheck/layers");
    let mut m = Stack {
        l1: Linear::from_parts(rand_matrix(&mut rng, 7, 5, 0.6), (0..7).map(|_| 0.1 + 0.2 * rng.uniform()).collect()),
        relu: Relu::default(),
        drop: Dropout::new(0.3)?,
        l2: Linear::new(7, 3, &mut rng),
        ls: LogSoftmax::default(),
    };
    m.drop.set_frozen(true);
    let x = rand_matrix(&mut rng, 6, 5, 1.0);
    let y: Vec<usize> = (0..6).map(|_| rng.below(3)).collect();
    let w: Vec<f64> = (0..6).map(|_| rng.uniform()).collect();
    let mut mask_rng = rng.derive("mask");
    let mut loss = |m: &mut Stack| -> Result<f64> {
        let h = m.l1.forward(&x)?;
        let h = m.relu.forward(&h);
        let h = m.drop.forward(&h, &mut mask_rng, true);
        let z = m.l2.forward(&h)?;
        let lp = m.ls.forward(&z);
        let l = if weighted { weighted_nll(&lp, &y, &w)? } else { nll_loss(&lp, &y)? };
        let g = m.ls.backward(&l.grad)?;
        let g = m.l2.backward(&g)?;
        let g = m.drop.backward(&g)?;
        let g = m.relu.backward(&g)?;
        m.l1.backward(&g)?;
        Ok(l.value)
    };
    loss(&mut m)?;
    m.zero_grad();
    grad_check(
        &mut m,
        &mut loss,
        &GradCheckOptions {
            max_per_tensor: None,
            seed,
            ..Default::default()
        },
    )
}

fn stochastic_check(seed: u64) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed).derive("selfcheck/stochastic");
    let (i, o) = (5, 4);
    let lv_w = Matrix::from_vec(o, i, (0..o * i).map(|_| rng.uniform_in(-4.0, -0.5)).collect())?;
    let lv_b = (0..o).map(|_| rng.uniform_in(-4.0, -0.5)).collect();
    let mut layer = StochasticLinear::from_parts(
        rand_matrix(&mut rng, o, i, 0.5),
        (0..o).map(|_| 0.1 * rng.normal()).collect(),
        lv_w,
        lv_b,
    );
    layer.set_noise(rand_matrix(&mut rng, o, i, 1.0), (0..o).map(|_| rng.normal()).collect())?;
    layer.set_frozen(true);
    let x = rand_matrix(&mut rng, 6, i, 1.0);
    let y: Vec<usize> = (0..6).map(|_| rng.below(o)).collect();
    let mut unused = Rng::new(0);
    let mut ls = LogSoftmax::default();
    let mut loss = |l: &mut StochasticLinear| -> Result<f64> {
        let z = l.forward(&x, &mut unused, SampleMode::Sample)?;
        let lp = ls.forward(&z);
        let nll = nll_loss(&lp, &y)?;
        l.backward(&ls.backward(&nll.grad)?)?;
        Ok(nll.value)
    };
    grad_check(
        &mut layer,
        &mut loss,
        &GradCheckOptions {
            max_per_tensor: None,
            seed,
            ..Default::default()
        },
    )
}

fn small_arch(kind: ModelKind) -> Architecture {
    Architecture {
        kind,
        input_dim: 6,
        hidden: vec![5],
        shared_dim: 4,
        specific_dim: 3,
        num_classes: 2,
        num_domains: 3,
        dropout: 0.3,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Term {
    Classification,
    /// `J_D^els` through the main role, reaching `F_s` and `D`.
    DomainMain,
    /// `J_D^els` ascended by the discriminator.
    DomainCritic,
    Pseudo,
    Combined,
}

fn objective_batch(rng: &mut Rng, term: Term, m: usize) -> MainBatch {
    let x = |rng: &mut Rng, n: usize| {
        Matrix::from_vec(n, 6, (0..n * 6).map(|_| 2.0 * rng.uniform()).collect()).expect("sized")
    };
    let mut b = MainBatch::default();
    for d in 0..m {
        if matches!(term, Term::Classification | Term::Combined) {
            b.labeled.push(LabeledBatch {
                domain: d,
                x: x(rng, 3),
                labels: (0..3).map(|_| rng.below(2)).collect(),
            });
        }
        if matches!(term, Term::Pseudo | Term::Combined) {
            b.pseudo.push(PseudoBatch {
                domain: d,
                x: x(rng, 4),
                labels: (0..4).map(|_| rng.below(2)).collect(),
                weights: vec![0.9, 0.0, 0.6, 1.0],
            });
        }
        if matches!(term, Term::DomainMain | Term::DomainCritic | Term::Combined) {
            b.adversarial.push(DomainBatch { domain: d, x: x(rng, 3) });
        }
    }
    b
}

fn objective_check(kind: ModelKind, term: Term, seed: u64) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed).derive("selfcheck/objectives");
    let mut model = SanModel::new(small_arch(kind), &mut rng)?;
    // zero biases put dead units exactly on a ReLU kink
    model.visit_params(&mut |t| {
        if t.name.ends_with(".b") || t.name.ends_with("mu_b") {
            t.value.iter_mut().for_each(|v| *v = 0.05 + 0.1 * rng.uniform());
        }
    });
    let batch = objective_batch(&mut rng, term, 3);
    let (lambda, lambda_rplr) = match term {
        Term::Classification => (0.0, 0.0),
        Term::DomainMain | Term::DomainCritic => (1.0, 0.0),
        Term::Pseudo => (0.0, 1.0),
        Term::Combined => (0.5, 0.8),
    };
    let w = ObjectiveWeights {
        lambda,
        lambda_rplr,
        target: DomainTarget::Smoothed { gamma: 0.9 },
    };
    let role = if term == Term::DomainCritic { Role::Discriminator } else { Role::Main };
    model.set_frozen(true);
    let frng = rng.derive("frozen");
    combined_objective(&mut model, &batch, &w, role, &mut frng.clone(), crate::model::ForwardMode::TRAIN)?;
    model.zero_grad();
    let opts = GradCheckOptions { seed, ..Default::default() };
    let mode = crate::model::ForwardMode::TRAIN;
    match role {
        Role::Main => grad_check(
            &mut model,
            &mut |m: &mut SanModel| Ok(combined_objective(m, &batch, &w, role, &mut frng.clone(), mode)?.combined),
            &opts,
        ),
        Role::Discriminator => {
            let mut d = model.discriminator_params();
            grad_check(
                &mut d,
                &mut |p: &mut crate::model::DiscriminatorParams<'_>| {
                    Ok(combined_objective(p.model(), &batch, &w, role, &mut frng.clone(), mode)?.combined)
                },
                &opts,
            )
        }
    }
}

/// Every layer, the stochastic layer and each objective term, over `seeds`
/// seeds. Objective checks cover both model kinds.
pub fn gradient_checks(seeds: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (name, weighted) in [("grad/layers nll", false), ("grad/layers weighted nll", true)] {
        let t = Instant::now();
        let mut tally = Tally::default();
        for s in 0..seeds {
            tally.add(s, &layer_stack_check(s, weighted)?);
        }
        out.push(tally.finish(name, t));
    }
    let t = Instant::now();
    let mut tally = Tally::default();
    for s in 0..seeds {
        tally.add(s, &stochastic_check(s)?);
    }
    out.push(tally.finish("grad/stochastic layer", t));
    for (name, term) in [
        ("grad/J_C", Term::Classification),
        ("grad/J_D main", Term::DomainMain),
        ("grad/J_D critic", Term::DomainCritic),
        ("grad/J_rplr", Term::Pseudo),
        ("grad/combined", Term::Combined),
    ] {
        let t = Instant::now();
        let mut tally = Tally::default();
        for s in 0..seeds {
            for kind in [ModelKind::San, ModelKind::SharedPrivate] {
                tally.add(s, &objective_check(kind, term, s)?);
            }
        }
        out.push(tally.finish(name, t));
    }
    Ok(out)
}

/// Moment-mode EM on `N` draws of the (π=0.7, sd=0.1, δ=1) mixture per seed.
#[derive(Clone, Debug, Serialize)]
pub struct EmRecovery {
    pub pi: f64,
    pub sd: f64,
    pub delta: f64,
    /// Largest relative error of the seed-averaged estimates.
    pub max_rel_err: f64,
    /// Largest per-iteration drop of the observed log-likelihood.
    pub max_ll_drop: f64,
    /// Paper mode on the same data: inlier-versus-outlier AUC of β, seed mean.
    pub paper_auc: f64,
    pub paper_finite: bool,
}

pub const EM_TRUE: (f64, f64, f64) = (0.7, 0.1, 1.0);

/// Area under the ROC curve of `score` separating positives from negatives.
pub fn auc(scored: &[(f64, bool)]) -> f64 {
    let mut v = scored.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    // average ranks over ties
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1].0 == v[i].0 {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += r * v[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }
    let pos = v.iter().filter(|p| p.1).count() as f64;
    let neg = v.len() as f64 - pos;
    (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg)
}

pub fn em_recovery(seeds: u64, n: usize, max_iters: usize) -> Result<EmRecovery> {
    let (pi0, sd0, delta0) = EM_TRUE;
    let (mut pi, mut sd, mut delta, mut drop, mut auc_sum) = (0.0, 0.0, 0.0, 0.0f64, 0.0);
    let mut finite = true;
    for s in 0..seeds {
        let mut rng = Rng::new(s).derive("selfcheck/em");
        let draws = mixture_distances(pi0, sd0, delta0, n, &mut rng);
        let d: Vec<f64> = draws.iter().map(|m| m.distance).collect();
        let labels = vec![0; n];
        let cfg = EmConfig {
            mode: EmMode::Moment,
            max_iters,
            ..Default::default()
        };
        let fit = em_fit(&d, &labels, 1, &cfg, &mut rng.derive("mirror"))?;
        let c = &fit.classes[0];
        pi += c.params.pi / seeds as f64;
        sd += c.params.std_dev() / seeds as f64;
        delta += c.params.delta / seeds as f64;
        for w in c.log_likelihood.windows(2) {
            drop = drop.max(w[0] - w[1]);
        }
        let paper = em_fit(
            &d,
            &labels,
            1,
            &EmConfig {
                mode: EmMode::Paper,
                max_iters,
                ..Default::default()
            },
            &mut rng.derive("mirror"),
        )?;
        let p = paper.classes[0].params;
        finite &= p.pi.is_finite() && p.sigma.is_finite() && p.delta.is_finite();
        let scored: Vec<(f64, bool)> = draws.iter().map(|m| (posterior_beta(m.distance, &p), m.inlier)).collect();
        auc_sum += auc(&scored);
    }
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    Ok(EmRecovery {
        pi,
        sd,
        delta,
        max_rel_err: rel(pi, pi0).max(rel(sd, sd0)).max(rel(delta, delta0)),
        max_ll_drop: drop,
        paper_auc: auc_sum / seeds as f64,
        paper_finite: finite,
    })
}

pub fn em_check() -> Result<Check> {
    let t = Instant::now();
    let r = em_recovery(5, 10_000, 200)?;
    let passed = r.max_rel_err < 0.1 && r.max_ll_drop <= 1e-8 && r.paper_finite && r.paper_auc >= 0.9;
    Ok(Check::timed(
        "em recovery",
        t,
        passed,
        format!(
            "pi {:.3} sd {:.4} delta {:.3} (max rel err {:.3}); ll drop {:.1e}; paper-mode AUC {:.3}",
            r.pi, r.sd, r.delta, r.max_rel_err, r.max_ll_drop, r.paper_auc
        ),
    ))
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn mean_cos_dist(points: &[Vec<f64>], c: &[f64]) -> f64 {
    points.iter().map(|p| 1.0 - crate::nn::dot(p, c)).sum::<f64>() / points.len() as f64
}

/// A random unit vector in `dim` dimensions.
fn random_unit(rng: &mut Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
            return normalized(&v);
        }
    }
}

/// Points scattered around a random pole, so the minimizer is unique.
fn random_point_set(rng: &mut Rng, dim: usize) -> Vec<Vec<f64>> {
    let pole = random_unit(rng, dim);
    let n = 2 + rng.below(30);
    let spread = rng.uniform_in(0.2, 1.2);
    (0..n)
        .map(|_| {
            let v: Vec<f64> = pole.iter().map(|p| p + spread * rng.normal()).collect();
            normalized(&v)
        })
        .collect()
}

/// Grid search over the sphere followed by a shrinking local pattern search
/// along tangent directions. Uses only objective evaluations.
pub fn brute_force_center(points: &[Vec<f64>]) -> Vec<f64> {
    let dim = points[0].len();
    let f = |c: &[f64]| mean_cos_dist(points, c);
    let grid: Vec<Vec<f64>> = match dim {
        2 => (0..3600)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 3600.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            // Fibonacci lattice
            let n = 4000;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    vec![r * t.cos(), r * t.sin(), z]
                })
                .collect()
        }
        _ => panic!("brute_force_center supports S^1 and S^2"),
    };
    let mut best = grid
        .into_iter()
        .min_by(|a, b| f(a).total_cmp(&f(b)))
        .expect("non-empty grid");
    let mut step = 0.05;
    while step > 1e-9 {
        let tangents = tangent_basis(&best);
        let mut improved = false;
        for t in &tangents {
            for s in [step, -step] {
                let cand = normalized(&best.iter().zip(t).map(|(b, t)| b + s * t).collect::<Vec<_>>());
                if f(&cand) < f(&best) {
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}

fn tangent_basis(c: &[f64]) -> Vec<Vec<f64>> {
    match c.len() {
        2 => vec![vec![-c[1], c[0]]],
        _ => {
            let a = if c[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            let d = crate::nn::dot(&a, c);
            let u = normalized(&a.iter().zip(c).map(|(a, c)| a - d * c).collect::<Vec<_>>());
            let v = vec![
                c[1] * u[2] - c[2] * u[1],
                c[2] * u[0] - c[0] * u[2],
                c[0] * u[1] - c[1] * u[0],
            ];
            vec![u, v]
        }
    }
}

/// Largest angle in radians between closed-form and brute-force centers over
/// `sets` random point sets on each of S¹ and S².
pub fn sphere_center_max_angle(sets: usize, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed).derive("selfcheck/sphere");
    let mut worst = 0.0f64;
    for dim in [2, 3] {
        for _ in 0..sets {
            let pts = random_point_set(&mut rng, dim);
            let m = Matrix::from_rows(&pts);
            let c = class_centers(&m, &vec![0; pts.len()], 1, 1.0)?;
            let closed = c.center(0).expect("one class").to_vec();
            let brute = brute_force_center(&pts);
            let cos = 1.0 - cosine_distance(&closed, &brute)?;
            worst = worst.max(cos.clamp(-1.0, 1.0).acos());
        }
    }
    Ok(worst)
}

pub fn sphere_check() -> Result<Check> {
    let t = Instant::now();
    let angle = sphere_center_max_angle(100, 0)?;
    Ok(Check::timed(
        "sphere center",
        t,
        angle < 1e-3,
        format!("max angular error {angle:.2e} rad over 200 point sets"),
    ))
}

/// Runs every check. Fails fast only on errors, not on failed checks.
pub fn run_all(seeds: u64) -> Result<Vec<Check>> {
    let mut out = gradient_checks(seeds)?;
    out.push(em_check()?);
    out.push(sphere_check()?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_landmarks() {
        assert_eq!(auc(&[(0.1, false), (0.9, true)]), 1.0);
        assert_eq!(auc(&[(0.9, false), (0.1, true)]), 0.0);
        assert_eq!(auc(&[(0.5, false), (0.5, true)]), 0.5);
    }

    #[test]
    fn sign_flip_is_caught() {
        let clean = stochastic_check(0).unwrap();
        assert!(clean.passed(GRAD_TOL));
        let broken = crate::model::with_log_var_sign_flip(|| stochastic_check(0).unwrap());
        assert!(!broken.passed(GRAD_TOL));
        assert!(stochastic_check(0).unwrap().passed(GRAD_TOL));
    }
}
