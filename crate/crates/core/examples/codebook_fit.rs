//! Fit a K-Means++ codebook offline, save it, reload it and quantize fresh data.
//!
//!     cargo run --release --example codebook_fit

use vpquant::codebook::CodebookMeta;
use vpquant::latent::SampleView;
use vpquant::metrics::{MetricReport, UsageCounts};
use vpquant::rng::seeded;
use vpquant::{kmeans_fit, Codebook, KMeansParams, SourceSpec};

fn main() -> vpquant::Result<()> {
    let source = SourceSpec::uniform_cube(3, 0);
    let fit = SampleView::from_vectors(3, &source.sample(20_000, &mut seeded(1))?)?;
    let params = KMeansParams::new(64, 5);
    let (codebook, report) = kmeans_fit(&fit, &params)?;
    println!(
        "{} iterations, converged {}, inertia {:.3}",
        report.iterations, report.converged, report.final_inertia
    );

    let dir = std::env::temp_dir().join("vpquant-codebook-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("cube.vpc");
    let meta = CodebookMeta {
        k: params.k,
        dim: 3,
        seed: params.seed,
        iterations: report.iterations,
        inertia: report.final_inertia,
    };
    codebook.save(&path, Some(&meta))?;
    let loaded = Codebook::load(&path)?;
    assert_eq!(loaded, codebook);

    let test = source.sample(20_000, &mut seeded(2))?;
    let (indices, counts) = loaded.quantize_batch(&test)?;
    let codes: Vec<&[f64]> = indices.iter().map(|&j| loaded.code(j)).collect();
    let metrics = MetricReport::new(
        &UsageCounts::new(counts)?,
        vpquant::metrics::mse(&test, &codes)?,
    )?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    println!("saved to {}", path.display());
    Ok(())
}
