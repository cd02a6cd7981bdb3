//! Distance profile of a query and the optimal fixed-level cost.
//!
//! Run with `cargo run --example opt_oracle`.

use std::sync::Arc;

use confirm_lsh::data::{generate, InstanceSpec};
use confirm_lsh::family::LshFamily;
use confirm_lsh::forest::build_forest;
use confirm_lsh::oracle::{brute_force_nn, natural_algorithm, opt_report, profile, static_level};
use confirm_lsh::types::RngSeed;

fn main() -> confirm_lsh::error::Result<()> {
    let inst = generate(&InstanceSpec::planted_nn(4096, 64, 3, 12, 1, 11))?;
    let family = LshFamily::bit_sampling(64);
    let q = inst.queries[0].as_ref();
    assert_eq!(brute_force_nn(&inst.dataset, q)?, inst.truth[0]);

    let prof = profile(&inst.dataset, &family, q)?;
    let (l, k) = (64, 32);
    let opt = opt_report(&prof, l, k);
    println!("p1 = {:.4}, i' = {:?}, i* = {:?}, OPT = {:.1}", prof.p1, opt.i_prime, opt.i_star, opt.opt);
    for i in (0..=k).step_by(4) {
        println!("  level {i:>2}: C = {:>9.2}  T = {:>9.2}  feasible {}", opt.c[i], opt.t[i], opt.feasible[i]);
    }

    let forest = build_forest(Arc::clone(&inst.dataset), family, k, l, RngSeed::new(3))?;
    let level = static_level(&forest, q, 8.0, l)?;
    let res = natural_algorithm(&forest, q, level, l)?;
    println!(
        "fixed level {level} over {l} trees: found {:?} (truth {:?}) with {} collisions",
        res.point, inst.truth[0], res.collisions
    );
    Ok(())
}
