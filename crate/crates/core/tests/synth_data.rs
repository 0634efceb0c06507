use san::data::synth::oracle_accuracy;
use san::data::{densify, synth_generate, Corpus, SynthSpec};
use san::trainer::{evaluate, train, Ablation, Split, TrainConfig};

fn generate(s: &str) -> (SynthSpec, Corpus) {
    let spec = SynthSpec::parse(s).unwrap();
    let c = synth_generate(&spec).unwrap();
    (spec, c)
}

#[test]
fn separable_preset_is_nearly_perfect_for_the_oracle() {
    for seed in 0..3 {
        let (spec, c) = generate(&format!("preset=separable,seed={seed}"));
        let acc = oracle_accuracy(&spec, &c);
        assert!(acc >= 0.99, "seed {seed}: {acc}");
    }
}

/// Nearest domain mean, fitted on the labeled split, scored on the test split.
fn domain_probe(c: &Corpus) -> f64 {
    let means: Vec<Vec<f64>> = c
        .domains
        .iter()
        .map(|d| {
            let x = densify(&d.labeled, c.input_dim);
            (0..c.input_dim)
                .map(|j| (0..x.rows()).map(|i| x.get(i, j)).sum::<f64>() / x.rows() as f64)
                .collect()
        })
        .collect();
    let (mut hit, mut n) = (0, 0);
    for (d, dom) in c.domains.iter().enumerate() {
        let x = densify(&dom.test, c.input_dim);
        for i in 0..x.rows() {
            let row = x.row(i);
            let guess = (0..means.len())
                .min_by(|&a, &b| {
                    let da: f64 = row.iter().zip(&means[a]).map(|(p, q)| (p - q).powi(2)).sum();
                    let db: f64 = row.iter().zip(&means[b]).map(|(p, q)| (p - q).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            hit += usize::from(guess == d);
            n += 1;
        }
    }
    hit as f64 / n as f64
}

#[test]
fn domains_are_indistinguishable_without_nuisance() {
    let (_, flat) = generate("preset=separable,nuisance_strength=0");
    let chance = 1.0 / 3.0;
    let p = domain_probe(&flat);
    assert!((p - chance).abs() < 0.05, "{p}");
    let (_, marked) = generate("preset=separable");
    assert!(domain_probe(&marked) > 0.9);
}

#[test]
fn without_specific_signal_dropping_specific_features_costs_little() {
    let (_, c) = generate("preset=separable,specific_strength=0,shared_strength=0.8");
    let cfg = TrainConfig {
        hidden: vec![64, 32],
        lr: 2e-3,
        init_epochs: 4,
        main_epochs: 0,
        ..TrainConfig::default()
    };
    let out = train(&cfg, &c, None).unwrap();
    let acc = |a| evaluate(&out.model, &c, Split::Test, a, 0).unwrap().average.unwrap();
    let (none, zero) = (acc(Ablation::None), acc(Ablation::Zero));
    assert!(none > 0.9, "{none}");
    // F_d still carries a copy of the shared signal that C learned to read
    assert!((none - zero).abs() < 0.03, "none {none} zero {zero}");
}
