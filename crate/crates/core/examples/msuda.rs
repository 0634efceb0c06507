//! Leave one domain's labels out and compare against training without the adversary.
use san::data::{synth_generate, SynthSpec};
use san::trainer::{msuda_run, TrainConfig};

fn main() -> san::Result<()> {
    let corpus = synth_generate(&SynthSpec::parse("preset=msuda")?)?;
    let cfg = TrainConfig {
        hidden: vec![256, 128],
        lr: 2e-3,
        lambda: 1.0,
        init_epochs: 5,
        main_epochs: 5,
        msuda_target: Some("domain3".into()),
        ..TrainConfig::default()
    };
    for lambda in [cfg.lambda, 0.0] {
        let r = msuda_run(&TrainConfig { lambda, ..cfg.clone() }, &corpus, None)?;
        println!("lambda {lambda}: {} accuracy {:.4}", r.target, r.target_accuracy);
    }
    Ok(())
}
