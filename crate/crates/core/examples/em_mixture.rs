//! Fit the inlier/outlier distance mixture to draws with known parameters.
use san::data::mixture_distances;
use san::nn::Rng;
use san::rplr::{em_fit, posterior_beta, weight, EmConfig, EmMode};

fn main() -> san::Result<()> {
    let mut rng = Rng::new(1);
    let draws = mixture_distances(0.7, 0.1, 1.0, 10_000, &mut rng);
    let d: Vec<f64> = draws.iter().map(|m| m.distance).collect();
    let labels = vec![0; d.len()];
    for mode in [EmMode::Moment, EmMode::Paper] {
        let cfg = EmConfig { mode, max_iters: 200, ..Default::default() };
        let fit = em_fit(&d, &labels, 1, &cfg, &mut rng.derive("mirror"))?;
        let p = fit.classes[0].params;
        let kept = d.iter().filter(|&&x| weight(posterior_beta(x, &p)) > 0.0).count();
        println!(
            "{mode}: pi {:.3} sd {:.3} delta {:.3} after {} iterations; {kept} of {} kept",
            p.pi,
            p.std_dev(),
            p.delta,
            fit.iterations(),
            d.len()
        );
    }
    println!("truth: pi 0.700 sd 0.100 delta 1.000");
    Ok(())
}
