//! Exact nearest-neighbor queries over a lazily grown sequence of hash tables.
//!
//! Run with `cargo run --release --example table_sequence`.

use confirm_lsh::data::{generate, InstanceSpec};
use confirm_lsh::family::LshFamily;
use confirm_lsh::tables::TableSequence;
use confirm_lsh::types::RngSeed;

fn main() -> confirm_lsh::error::Result<()> {
    let inst = generate(&InstanceSpec::planted_nn(2000, 64, 2, 10, 200, 5))?;
    let family = LshFamily::bit_sampling(64);
    let seq = TableSequence::with_default_width(inst.dataset.clone(), family, 512, RngSeed::new(9))?;
    println!("concatenation width K_cat = {}", seq.k_cat());

    let mut rng = RngSeed::new(10).rng();
    let (mut correct, mut tables, mut distances) = (0, 0, 0);
    for (q, truth) in inst.queries.iter().zip(&inst.truth) {
        let res = seq.query_nn(q.as_ref(), 0.01, &mut rng)?;
        correct += usize::from(res.point == *truth);
        tables += res.stats.tables_queried;
        distances += res.stats.distance_computations;
    }
    let nq = inst.queries.len() as f64;
    println!(
        "delta = 0.01: recall {:.3}, {:.1} tables and {:.1} distance computations per query",
        correct as f64 / nq,
        tables as f64 / nq,
        distances as f64 / nq
    );

    // The budgeted variant fixes L and doubles a per-bucket cap each round.
    let (res, rounds) = seq.query_nn_budgeted(inst.queries[0].as_ref(), 0.01, 64, &mut rng)?;
    println!("budgeted query: confirmed {} after {} rounds", res.confirmed, rounds.len());
    for r in rounds {
        println!("  round {} cap {:>5}: {} candidates inspected", r.round, r.cap, r.work);
    }
    Ok(())
}
