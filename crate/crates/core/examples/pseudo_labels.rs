//! Pseudo-labels after the initialization phase: how many are kept and how
//! accurate the kept ones are against the hidden labels.
use san::data::{synth_generate, SynthSpec};
use san::trainer::{TrainConfig, TrainState};

fn main() -> san::Result<()> {
    let corpus = synth_generate(&SynthSpec::parse("preset=separable,specific_strength=0.5")?)?;
    let cfg = TrainConfig { hidden: vec![128, 64], lr: 2e-3, init_epochs: 2, ..TrainConfig::default() };
    let mut state = TrainState::new(&cfg, &corpus)?;
    state.init_phase(&corpus)?;
    state.estimate_phi_step(&corpus)?;
    let s = state.pseudo_stats(&corpus);
    println!("pseudo-labels {} valid {}", s.n, s.n_valid);
    println!("accuracy all {:?} valid {:?}", s.accuracy, s.valid_accuracy);
    for (k, c) in state.phi.classes.iter().enumerate() {
        println!("class {k}: pi {:.3} sd {:.3} delta {:.3}", c.pi, c.std_dev(), c.delta);
    }
    Ok(())
}
