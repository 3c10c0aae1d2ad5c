//! Gaussian pre-activations through the FSP activation, the perturb-or-quantize
//! mixture and mixed-radix token packing.
//!
//!     cargo run --release --example scalar_tokens

use vpquant::metrics::{cvu, UsageCounts};
use vpquant::rng::seeded;
use vpquant::scalar::{
    activate, default_levels, fsp_quantize, index_pack, index_unpack, mixture_forward,
    MixtureBranch,
};
use vpquant::{ActivationKind, FspConfig, SourceSpec};

fn main() -> vpquant::Result<()> {
    let levels = default_levels(256).expect("standard list").to_vec();
    let cfg = FspConfig::new(levels.clone(), 1.0, ActivationKind::NormalCdf)?;
    let raw = SourceSpec::standard_gaussian(levels.len(), 0).sample(50_000, &mut seeded(1))?;

    let mut rng = seeded(2);
    let mut perturbed = 0;
    let mut tokens = Vec::with_capacity(raw.len());
    for a in &raw {
        let z = activate(a, cfg.activation)?;
        if mixture_forward(&z, &cfg, &mut rng)?.1 == MixtureBranch::Perturbed {
            perturbed += 1;
        }
        tokens.push(index_pack(&fsp_quantize(&z, &levels)?.indices, &levels)?);
    }

    let usage = UsageCounts::from_ids(tokens.iter().copied(), cfg.codebook_size() as usize)?;
    println!("levels {levels:?}, K = {}", cfg.codebook_size());
    println!(
        "perturbed fraction {:.3}",
        perturbed as f64 / raw.len() as f64
    );
    println!("token CVU {:.4}", cvu(&usage)?);
    println!(
        "token {} unpacks to {:?}",
        tokens[0],
        index_unpack(tokens[0], &levels)?
    );
    Ok(())
}
