//! kNN log-density estimates against the closed form for a standard Gaussian.
//!
//!     cargo run --release --example knn_density

use vpquant::density::log_density;
use vpquant::latent::SampleView;
use vpquant::rng::seeded;
use vpquant::SourceSpec;

fn main() -> vpquant::Result<()> {
    let source = SourceSpec::standard_gaussian(2, 0);
    let samples = SampleView::from_vectors(2, &source.sample(10_000, &mut seeded(1))?)?;

    println!("{:>6} {:>12} {:>12}", "radius", "true", "estimate");
    for i in 0..8 {
        let r = 0.4 * i as f64;
        let q = [r, 0.0];
        // The estimate is unnormalized; only its ordering and slope matter.
        let est = log_density(&q, &samples, 3)?;
        println!("{r:>6.2} {:>12.4} {est:>12.4}", source.log_density(&q)?);
    }
    Ok(())
}
