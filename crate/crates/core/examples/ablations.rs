//! Test accuracy with the domain-specific features kept, zeroed and shuffled.
use san::data::{synth_generate, SynthSpec};
use san::trainer::{evaluate, train, Ablation, Split, TrainConfig};

fn main() -> san::Result<()> {
    let corpus = synth_generate(&SynthSpec::parse("preset=separable")?)?;
    let cfg = TrainConfig {
        hidden: vec![256, 128],
        lr: 2e-3,
        lambda: 5.0,
        init_epochs: 5,
        main_epochs: 5,
        ..TrainConfig::default()
    };
    let out = train(&cfg, &corpus, None)?;
    for a in Ablation::ALL {
        let r = evaluate(&out.model, &corpus, Split::Test, a, 0)?;
        println!("{a}\t{:.4}", r.average.unwrap_or(f64::NAN));
    }
    Ok(())
}
