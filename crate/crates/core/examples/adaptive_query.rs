//! The adaptive forest-ensemble query on an instance where every fixed
//! level fails: a dense cluster sits just behind the nearest neighbor.
//!
//! Run with `cargo run --release --example adaptive_query`.

use confirm_lsh::adaptive::{default_forest_count, AdaptiveParams, ForestEnsemble};
use confirm_lsh::data::{generate, GeneratorKind, InstanceSpec};
use confirm_lsh::family::LshFamily;
use confirm_lsh::types::RngSeed;
use confirm_lsh::verify::natural_baseline;

fn main() -> confirm_lsh::error::Result<()> {
    let inst = generate(&InstanceSpec::default_for(GeneratorKind::DenseCluster, 1024, 100, 8))?;
    let family = LshFamily::bit_sampling(inst.dataset.dim());
    let r = default_forest_count(inst.dataset.len(), 8.0);
    let ens = ForestEnsemble::build(inst.dataset.clone(), family, 48, 8, r, RngSeed::new(1))?;
    println!("{} forests of {} trees, depth {}", ens.forest_count(), ens.trees_per_forest(), ens.depth());

    let params = AdaptiveParams::default();
    let (mut correct, mut work) = (0, 0);
    for (qi, q) in inst.queries.iter().enumerate() {
        let res = ens.query(q.as_ref(), &params, &RngSeed::new(2).derive("query", qi as u64))?;
        correct += usize::from(res.point == inst.truth[qi]);
        work += res.cost.work_units();
        if qi < 3 {
            println!(
                "query {qi}: level {}, {} trees, {:?} phase, {} work units",
                res.level,
                res.trees,
                res.phase,
                res.cost.work_units()
            );
        }
    }
    let nq = inst.queries.len() as f64;
    println!("adaptive recall {:.2}, mean work {:.0}", correct as f64 / nq, work as f64 / nq);
    println!("fixed-level recall on the same forests {:.2}", natural_baseline(&ens, &inst, 8.0)?);
    Ok(())
}
