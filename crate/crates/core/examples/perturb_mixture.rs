//! One Metropolis–Hastings perturbation step per point on a 2-D Gaussian
//! mixture. The perturbed cloud should have the same marginals as the input.
//!
//!     cargo run --release --example perturb_mixture

use vpquant::latent::SampleView;
use vpquant::perturb::{perturb_batch, PerturbConfig};
use vpquant::rng::seeded;
use vpquant::{RadiusParams, SourceSpec};

fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
    (mean, var.sqrt())
}

fn main() -> vpquant::Result<()> {
    let source = SourceSpec::gaussian_mixture(
        2,
        0,
        vec![0.7, 0.3],
        vec![vec![-2.0, 0.0], vec![3.0, 1.0]],
        vec![1.0, 0.5],
    );
    let samples = SampleView::from_vectors(2, &source.sample(5_000, &mut seeded(1))?)?;
    let cfg = PerturbConfig::new(RadiusParams::new(1024, 1.0, 3)?, 2)?;

    let batch = source.sample(20_000, &mut seeded(2))?;
    let outcomes = perturb_batch(&batch, &samples, &cfg, 3)?;

    let accepted = outcomes.iter().filter(|o| o.accepted).count();
    let by_support = outcomes.iter().filter(|o| o.rejected_by_support).count();
    println!(
        "accepted           {:.3}",
        accepted as f64 / batch.len() as f64
    );
    println!(
        "rejected (support) {:.3}",
        by_support as f64 / batch.len() as f64
    );

    for dim in 0..2 {
        let (m0, s0) = mean_std(batch.iter().map(|z| z[dim]));
        let (m1, s1) = mean_std(outcomes.iter().map(|o| o.result[dim]));
        println!("dim {dim}: input mean {m0:+.4} std {s0:.4} | output mean {m1:+.4} std {s1:.4}");
    }
    Ok(())
}
