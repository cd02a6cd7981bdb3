//! Find the minimum of a distribution you can only sample from.
//!
//! Run with `cargo run --example confirmation_sampling`.

use confirm_lsh::confirm::{
    confirmation_sampling, exact_output_distribution, expected_samples_bound, failure_bound, CsOutcome, DiscreteDistribution,
};
use confirm_lsh::oracle::simulate_cs;
use confirm_lsh::types::RngSeed;

fn main() -> confirm_lsh::error::Result<()> {
    // Element 0 is the minimum but not the most likely draw.
    let dist = DiscreteDistribution::from_weights(&[0.2, 0.5, 0.3])?;
    let sampler = dist.sampler();
    let mut rng = RngSeed::new(1).rng();
    let mut source = || Some(sampler.sample(&mut rng));

    let t = 3;
    match confirmation_sampling(&mut source, t, usize::cmp, None)? {
        CsOutcome::Confirmed(res) => println!("reported {} after {} samples", res.element, res.samples),
        other => println!("stopped early: {other:?}"),
    }

    let exact = exact_output_distribution(&dist, t as u32)?;
    let sim = simulate_cs(&dist, t, 200_000, &RngSeed::new(2))?;
    println!("exact output distribution  {exact:.4?}");
    println!("simulated (200k runs)      {:.4?}", sim.frequencies());
    println!(
        "failure: exact {:.4}, bound {:.4}",
        1.0 - exact[0],
        failure_bound(dist.p1(), dist.p2(), t as u32)?
    );
    println!(
        "samples: simulated mean {:.2}, bound {:.2}",
        sim.mean_samples,
        expected_samples_bound(dist.p1(), t as u32)?
    );
    Ok(())
}
