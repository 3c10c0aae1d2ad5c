//! Output distributions and distortion of FSP and FSQ on a uniform latent.
//!
//!     cargo run --release --example fsp_vs_fsq

use rand::Rng;
use vpquant::bench::{figure_csv, figure_fsp_vs_fsq};
use vpquant::rng::seeded;
use vpquant::scalar::{fsp_quantize, fsq_quantize};

fn main() -> vpquant::Result<()> {
    print!("{}", figure_csv(&figure_fsp_vs_fsq(4, 100_000, 7)?));
    println!();

    let mut rng = seeded(1);
    let draws: Vec<f64> = (0..200_000).map(|_| rng.random()).collect();
    println!(
        "{:>3} {:>12} {:>12} {:>12} {:>12}",
        "L", "fsp mse", "1/(12L^2)", "fsq mse", "1/(12(L-1)^2)"
    );
    for l in [2usize, 3, 4, 5, 8] {
        let (mut fsp, mut fsq) = (0.0, 0.0);
        for &z in &draws {
            fsp += (fsp_quantize(&[z], &[l])?.value[0] - z).powi(2);
            fsq += (fsq_quantize(&[z], &[l])?.value[0] - z).powi(2);
        }
        let n = draws.len() as f64;
        let lf = l as f64;
        println!(
            "{l:>3} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            fsp / n,
            1.0 / (12.0 * lf * lf),
            fsq / n,
            1.0 / (12.0 * (lf - 1.0).powi(2))
        );
    }
    Ok(())
}
