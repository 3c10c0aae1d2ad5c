//! Fill a bounded sample queue with subsampled batches and round-trip a
//! snapshot through the binary dump format.
//!
//!     cargo run --release --example queue_dump

use vpquant::latent::SampleView;
use vpquant::rng::seeded;
use vpquant::{SampleQueue, SourceSpec};

fn main() -> vpquant::Result<()> {
    let source = SourceSpec::annulus(2, 0, 1.0, 2.0);
    let mut queue = SampleQueue::new(4096, 2)?;
    let mut draw = seeded(1);
    let mut pick = seeded(2);
    for step in 0..40 {
        let batch = source.sample(2048, &mut draw)?;
        let kept = queue.push_subsampled(&batch, 0.05, &mut pick)?;
        if step % 10 == 0 {
            println!("step {step:>2}: kept {kept}, queue holds {}", queue.len());
        }
    }

    let snapshot = queue.snapshot();
    let mut buf = Vec::new();
    snapshot.write_dump(&mut buf)?;
    let back = SampleView::read_dump(buf.as_slice())?;
    assert_eq!(back.as_flat(), snapshot.as_flat());
    println!("dumped {} vectors in {} bytes", back.len(), buf.len());
    Ok(())
}
