//! Mean epoch time of the stochastic model against the shared-private baseline.
use san::data::{synth_generate, SynthSpec};
use san::trainer::{measure_runtime, TrainConfig};

fn main() -> san::Result<()> {
    let corpus = synth_generate(&SynthSpec::parse("preset=msuda,shift_strength=0")?)?;
    let cfg = TrainConfig { hidden: vec![256, 128], ..TrainConfig::default() };
    let r = measure_runtime(&cfg, &corpus, 2)?;
    print!("{r}");
    Ok(())
}
