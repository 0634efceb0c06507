//! One test per acceptance criterion. Each prints a single
//! `[PASS|FAIL] <criterion>: <detail>` line before asserting.
//!
//! Tests take a shared lock so the timed criteria do not compete for the CPU.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use san::data::{synth_generate, Corpus, SynthSpec};
use san::model::{Architecture, ModelKind};
use san::nn::{Matrix, Rng};
use san::objectives::{dls_cross_entropy, dls_objective, smoothed_domain_target, DomainTarget};
use san::rplr::{mirrored_beta, posterior_beta, weight, ClassMixture};
use san::selfcheck::{em_recovery, gradient_checks, sphere_center_max_angle};
use san::trainer::{evaluate, measure_runtime, msuda_run, train, Ablation, RunOutput, Split, TrainConfig};

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

/// Written to the process stdout directly so the line shows without `--nocapture`.
fn report(name: &str, passed: bool, detail: String) {
    let line = format!("[{}] {name}: {detail}\n", if passed { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).and_then(|_| out.flush()).unwrap();
    assert!(passed, "{name}: {detail}");
}

const SEEDS: u64 = 5;

/// Desk-scale training configuration shared by the synthetic criteria.
fn desk() -> TrainConfig {
    TrainConfig {
        hidden: vec![256, 128],
        lr: 2e-3,
        lambda: DESK_LAMBDA,
        init_epochs: 5,
        main_epochs: 20,
        ..TrainConfig::default()
    }
}

const DESK_LAMBDA: f64 = 5.0;
const MSUDA_LAMBDA: f64 = 1.0;

fn separable(seed: u64) -> Corpus {
    synth_generate(&SynthSpec::parse(&format!("preset=separable,seed={seed}")).unwrap()).unwrap()
}

/// Seed means of the three test ablations plus the pseudo-label selection gap.
#[derive(Clone, Copy, Debug)]
struct Summary {
    none: f64,
    zero: f64,
    shuffle: f64,
    /// Mean over main rounds of valid minus overall pseudo-label accuracy.
    selection_gap: f64,
    seconds: f64,
}

fn run_variant(cfg: &TrainConfig) -> Summary {
    let t = Instant::now();
    let n = SEEDS as f64;
    let mut s = Summary {
        none: 0.0,
        zero: 0.0,
        shuffle: 0.0,
        selection_gap: 0.0,
        seconds: 0.0,
    };
    for seed in 0..SEEDS {
        let corpus = separable(seed);
        let out = train(&TrainConfig { seed, ..cfg.clone() }, &corpus, None).unwrap();
        let acc = |a| evaluate(&out.model, &corpus, Split::Test, a, seed).unwrap().average.unwrap();
        s.none += acc(Ablation::None) / n;
        s.zero += acc(Ablation::Zero) / n;
        s.shuffle += acc(Ablation::Shuffle) / n;
        let gaps: Vec<f64> = out
            .metrics
            .iter()
            .filter_map(|m| Some(m.valid_pseudo_acc? - m.pseudo_acc?))
            .collect();
        if !gaps.is_empty() {
            s.selection_gap += gaps.iter().sum::<f64>() / gaps.len() as f64 / n;
        }
    }
    s.seconds = t.elapsed().as_secs_f64();
    s
}

fn full_san() -> Summary {
    static FULL: OnceLock<Summary> = OnceLock::new();
    *FULL.get_or_init(|| run_variant(&desk()))
}

#[test]
fn gradient_integrity() {
    let _g = serial();
    let t = Instant::now();
    let checks = gradient_checks(10).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| format!("{} ({})", c.name, c.detail)).collect();
    report(
        "gradient integrity",
        failed.is_empty() && secs < 30.0,
        format!("{} checks x 10 seeds in {secs:.1}s; failed: {failed:?}", checks.len()),
    );
}

#[test]
fn domain_label_smoothing() {
    let _g = serial();
    let fixed = smoothed_domain_target(3, 0, 0.9).unwrap();
    // 1 − 0.9 is not 0.1 in binary; the off-target mass must be the correctly
    // rounded (1 − γ)/2 for the binary γ, which sits two ulps below 0.05
    let off = (1.0 - 0.9) / 2.0;
    let ulp = 0.05f64.next_up() - 0.05;
    let mut ok = fixed == vec![0.9, off, off] && (off - 0.05).abs() <= 2.0 * ulp;
    let mut rng = Rng::new(11);
    let mut worst_sum = 0.0f64;
    let mut worst_form = 0.0f64;
    for _ in 0..100 {
        let m = 2 + rng.below(15);
        let gamma = 0.01 + 0.98 * rng.uniform();
        let i = rng.below(m);
        let t = smoothed_domain_target(m, i, gamma).unwrap();
        worst_sum = worst_sum.max((t.iter().sum::<f64>() - 1.0).abs());

        // random normalized log-probabilities for a small batch
        let rows = 4;
        let mut lp = Matrix::zeros(rows, m);
        let mut domains = Vec::new();
        for r in 0..rows {
            let z: Vec<f64> = (0..m).map(|_| 3.0 * rng.normal()).collect();
            let lse = z.iter().map(|v| v.exp()).sum::<f64>().ln();
            lp.row_mut(r).iter_mut().zip(&z).for_each(|(o, v)| *o = v - lse);
            domains.push(rng.below(m));
        }
        let target = DomainTarget::Smoothed { gamma };
        let term_wise = dls_objective(&lp, &domains, &target).unwrap().value;
        let ce = dls_cross_entropy(&lp, &domains, &target).unwrap();
        // independent: γ·log D_i + (1−γ)/(M−1)·Σ_{j≠i} log D_j, batch mean
        let oracle: f64 = (0..rows)
            .map(|r| {
                let row = lp.row(r);
                let d = domains[r];
                let rest: f64 = (0..m).filter(|&j| j != d).map(|j| row[j]).sum();
                gamma * row[d] + (1.0 - gamma) / (m as f64 - 1.0) * rest
            })
            .sum::<f64>()
            / rows as f64;
        worst_form = worst_form.max((term_wise - ce).abs()).max((term_wise - oracle).abs());
    }
    ok &= worst_sum <= 1e-12 && worst_form <= 1e-10;
    report(
        "domain label smoothing",
        ok,
        format!("M=3,γ=0.9 -> {fixed:?}; max |Σt−1| {worst_sum:.1e}; max formulation diff {worst_form:.1e}"),
    );
}

#[test]
fn em_recovery_criterion() {
    let _g = serial();
    let t = Instant::now();
    let r = em_recovery(5, 10_000, 200).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let passed = r.max_rel_err < 0.1 && r.max_ll_drop <= 1e-8 && secs < 5.0 && r.paper_finite && r.paper_auc >= 0.9;
    report(
        "EM recovery",
        passed,
        format!(
            "π {:.4} sd {:.4} δ {:.4} (max rel err {:.4}); max ll drop {:.1e}; paper mode finite {} AUC {:.4}; {secs:.2}s",
            r.pi, r.sd, r.delta, r.max_rel_err, r.max_ll_drop, r.paper_finite, r.paper_auc
        ),
    );
}

#[test]
fn beta_formula_equivalence() {
    let _g = serial();
    let mut rng = Rng::new(21);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let m = ClassMixture {
            pi: 0.05 + 0.9 * rng.uniform(),
            sigma: (0.02 + 0.5 * rng.uniform()).powi(2),
            delta: 0.1 + 2.0 * rng.uniform(),
        };
        let d = 1.2 * m.delta * rng.uniform();
        let beta = posterior_beta(d, &m);
        // E-step responsibility on the mirrored sample, written out directly
        let e_step = |x: f64| {
            if x.abs() > m.delta {
                return 1.0;
            }
            let g = m.pi * (-x * x / (2.0 * m.sigma)).exp() / (2.0 * PI * m.sigma).sqrt();
            g / (g + (1.0 - m.pi) / (2.0 * m.delta))
        };
        for x in [d, -d] {
            worst = worst.max((beta - e_step(x)).abs()).max((beta - mirrored_beta(x, &m)).abs());
        }
    }
    report(
        "beta formula equivalence",
        worst <= 1e-9,
        format!("max |β − β_E(±d)| {worst:.2e} over 10^4 draws"),
    );
}

#[test]
fn spherical_center_oracle() {
    let _g = serial();
    let angle = sphere_center_max_angle(100, 0).unwrap();
    report(
        "spherical center oracle",
        angle < 1e-3,
        format!("max angle {angle:.2e} rad over 100 sets on each of S^1 and S^2"),
    );
}

#[test]
fn weight_rule() {
    let _g = serial();
    let at_half = weight(0.5);
    let above = weight(0.5 + 1e-9);
    let grid: Vec<f64> = (0..=1000).map(|i| weight(i as f64 * 1e-3)).collect();
    let monotone = grid.windows(2).all(|w| w[1] >= w[0]);
    report(
        "weight rule",
        at_half == 0.0 && above > 0.5 && monotone,
        format!("w(0.5) = {at_half}, w(0.5+1e-9) = {above}, monotone on [0,1] step 1e-3: {monotone}"),
    );
}

#[test]
fn parameter_decoupling() {
    let _g = serial();
    let arch = |kind, m| Architecture {
        kind,
        input_dim: 5000,
        hidden: vec![1000, 500],
        shared_dim: 128,
        specific_dim: 64,
        num_classes: 2,
        num_domains: m,
        dropout: 0.4,
    };
    let mut rows = Vec::new();
    let mut ok = true;
    let san2 = arch(ModelKind::San, 2).param_counts().specific;
    for m in [2, 4, 8, 16] {
        let san = arch(ModelKind::San, m).param_counts();
        let sp = arch(ModelKind::SharedPrivate, m).param_counts();
        ok &= san.specific == san2 && sp.specific == m * sp.specific_single;
        rows.push(format!("M={m}: san {} sp {} = {m}x{}", san.specific, sp.specific, sp.specific_single));
    }
    report("parameter decoupling", ok, rows.join("; "));
}

#[test]
fn end_to_end_synthetic() {
    let _g = serial();
    let full = full_san();
    let without_rplr = run_variant(&TrainConfig {
        lambda_rplr: 0.0,
        ..desk()
    });
    let plain = run_variant(&TrainConfig {
        lambda_rplr: 0.0,
        dls: false,
        ..desk()
    });
    let pct = |v: f64| 100.0 * v;
    let accuracy_ok = full.none >= 0.9 && full.seconds < 600.0;
    let ablation_ok = full.none >= without_rplr.none && without_rplr.none >= plain.none;
    let eval_ok = full.none - full.zero >= 0.02 && full.zero - full.shuffle >= 0.02;
    report(
        "end-to-end synthetic",
        accuracy_ok && ablation_ok && eval_ok,
        format!(
            "full {:.2}% in {:.0}s; w/o rplr {:.2}%; plain {:.2}%; none {:.2} zero {:.2} shuffle {:.2}",
            pct(full.none),
            full.seconds,
            pct(without_rplr.none),
            pct(plain.none),
            pct(full.none),
            pct(full.zero),
            pct(full.shuffle)
        ),
    );
}

#[test]
fn rplr_selection() {
    let _g = serial();
    let full = full_san();
    report(
        "RPLR selection",
        full.selection_gap >= 0.02,
        format!(
            "valid minus overall pseudo-label accuracy {:.2} points (mean over main rounds and {SEEDS} seeds)",
            100.0 * full.selection_gap
        ),
    );
}

#[test]
fn msuda_transfer() {
    let _g = serial();
    let (mut adv, mut control) = (0.0, 0.0);
    for seed in 0..SEEDS {
        let corpus = synth_generate(&SynthSpec::parse(&format!("preset=msuda,seed={seed}")).unwrap()).unwrap();
        let cfg = TrainConfig {
            seed,
            lambda: MSUDA_LAMBDA,
            msuda_target: Some("3".into()),
            ..desk()
        };
        adv += msuda_run(&cfg, &corpus, None).unwrap().target_accuracy / SEEDS as f64;
        control += msuda_run(&TrainConfig { lambda: 0.0, ..cfg }, &corpus, None)
            .unwrap()
            .target_accuracy
            / SEEDS as f64;
    }
    report(
        "MS-UDA transfer",
        adv - control >= 0.02,
        format!("target accuracy λ={MSUDA_LAMBDA}: {:.2}%, λ=0: {:.2}%", 100.0 * adv, 100.0 * control),
    );
}

#[test]
fn determinism() {
    let _g = serial();
    let corpus = synth_generate(&SynthSpec::parse("preset=tiny,seed=5").unwrap()).unwrap();
    let cfg = TrainConfig {
        hidden: vec![32, 16],
        shared_dim: 8,
        specific_dim: 6,
        lr: 1e-3,
        init_epochs: 2,
        main_epochs: 3,
        seed: 5,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let bytes: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = RunOutput::new(dir.path().join(name));
            train(&cfg, &corpus, Some(&out)).unwrap();
            std::fs::read(dir.path().join(name).join("metrics.jsonl")).unwrap()
        })
        .collect();
    report(
        "determinism",
        !bytes[0].is_empty() && bytes[0] == bytes[1],
        format!("metrics.jsonl {} bytes, identical: {}", bytes[0].len(), bytes[0] == bytes[1]),
    );
}

#[test]
fn efficiency_direction() {
    let _g = serial();
    let corpus = synth_generate(&SynthSpec::parse("preset=msuda,shift_strength=0").unwrap()).unwrap();
    let r = measure_runtime(&desk(), &corpus, 3).unwrap();
    report(
        "efficiency direction",
        r.san_seconds <= r.shared_private_seconds,
        format!(
            "M=4 mean epoch: san {:.3}s, shared-private {:.3}s (ratio {:.3})",
            r.san_seconds, r.shared_private_seconds, r.ratio
        ),
    );
}
