//! The full vector pipeline from a TOML config: queue fill, perturbation,
//! offline codebook fit and inference quantization.
//!
//!     cargo run --release --example vp_pipeline

use vpquant::bench::{run, ExperimentConfig};

const CONFIG: &str = r#"
mode = "vp"
seed = 7

[source]
kind = "gaussian_mixture"
dim = 2
weights = [0.5, 0.5]
means = [[-5.0, 0.0], [5.0, 0.0]]
scales = [1.0, 1.0]

[vp]
codebook_size = 64
queue_capacity = 8192
queue_fill = 8192
fit_samples = 20000
eval_samples = 5000
"#;

fn main() -> vpquant::Result<()> {
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let output = run(&cfg)?;
    print!("{}", output.report.to_json(true)?);
    for (name, csv) in &output.traces {
        println!("{name}: {} rows", csv.lines().count() - 1);
    }
    Ok(())
}
