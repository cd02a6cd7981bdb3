//! Build an LSH Forest, inspect buckets at every level and save it.
//!
//! Run with `cargo run --example lsh_forest`.

use std::sync::Arc;

use confirm_lsh::data::{generate, GeneratorKind, InstanceSpec};
use confirm_lsh::family::LshFamily;
use confirm_lsh::forest::{build_forest, expected_collisions, Forest};
use confirm_lsh::types::RngSeed;

fn main() -> confirm_lsh::error::Result<()> {
    let inst = generate(&InstanceSpec::new(GeneratorKind::GaussianAngular, 500, 24, 1, 3))?;
    let family = LshFamily::sign_random_projection(24);
    let forest = build_forest(inst.dataset.clone(), family, 20, 16, RngSeed::new(4))?;
    println!("{} trees of depth {}, {} nodes", forest.len(), forest.depth(), forest.node_count());

    let q = inst.queries[0].as_ref();
    println!("level  mean bucket size  expected");
    for i in [0, 2, 4, 6, 8, 12, 16, 20] {
        let total: usize = (0..forest.len()).map(|j| forest.collision_count(j, i, q)).sum::<Result<_, _>>()?;
        println!(
            "{i:>5}  {:>16.2}  {:>8.2}",
            total as f64 / forest.len() as f64,
            expected_collisions(&inst.dataset, &family, q, i)?
        );
    }
    let bucket: Vec<_> = forest.bucket(0, 6, q)?.collect();
    println!("tree 0, level 6 holds {bucket:?}");

    let bytes = forest.to_bytes();
    let loaded = Forest::read_from(&mut bytes.as_slice(), Arc::clone(&inst.dataset))?;
    assert!(loaded.bucket(0, 6, q)?.eq(bucket.iter().copied()));
    println!("serialized to {} bytes and reloaded", bytes.len());
    Ok(())
}
