//! Train on the separable synthetic preset and print per-epoch metrics.
use san::data::{synth_generate, SynthSpec};
use san::trainer::{train, TrainConfig};

fn main() -> san::Result<()> {
    env_logger::init();
    let corpus = synth_generate(&SynthSpec::parse("preset=separable")?)?;
    let cfg = TrainConfig {
        hidden: vec![256, 128],
        lr: 2e-3,
        lambda: 5.0,
        init_epochs: 3,
        main_epochs: 4,
        ..TrainConfig::default()
    };
    let out = train(&cfg, &corpus, None)?;
    for m in &out.metrics {
        println!("{}", m.summary());
    }
    println!("test average {:.4}", out.test.average.unwrap_or(f64::NAN));
    Ok(())
}
