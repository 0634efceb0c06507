//! Parameter counts of the stochastic and shared-private models as M grows.
use san::model::{Architecture, ModelKind};

fn main() {
    println!("M\tsan_specific\tsp_specific\tsan_total\tsp_total");
    for m in [2, 4, 8, 16] {
        let arch = |kind| Architecture {
            kind,
            input_dim: 5000,
            hidden: vec![1000, 500],
            shared_dim: 128,
            specific_dim: 64,
            num_classes: 2,
            num_domains: m,
            dropout: 0.4,
        };
        let (san, sp) = (arch(ModelKind::San).param_counts(), arch(ModelKind::SharedPrivate).param_counts());
        println!("{m}\t{}\t{}\t{}\t{}", san.specific, sp.specific, san.total, sp.total);
    }
}
