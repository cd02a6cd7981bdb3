//! Statistical properties of the adaptive query's building blocks on
//! planted-neighbor instances with a known distance profile.

use confirm_lsh::adaptive::{bottom_up_phase, choose_level, run_level_pair, AdaptiveParams, ForestEnsemble, LevelStatus};
use confirm_lsh::data::{generate, Instance, InstanceSpec};
use confirm_lsh::family::LshFamily;
use confirm_lsh::oracle::{opt_report, profile};
use confirm_lsh::types::RngSeed;

const L_PRIME: usize = 128;
const K: usize = 16;

fn planted(n: usize, seed: u64) -> Instance {
    generate(&InstanceSpec::planted_nn(n, 64, 1, 8, 1, seed)).unwrap()
}

fn analytic_p1(inst: &Instance) -> f64 {
    let fam = LshFamily::bit_sampling(inst.dataset.dim());
    profile(&inst.dataset, &fam, inst.queries[0].as_ref()).unwrap().p1
}

#[test]
fn chosen_level_is_at_most_i_prime() {
    let runs = 1000;
    let mut within = 0;
    let mut checked = 0;
    for run in 0..runs {
        let inst = planted(256, 7_000 + run);
        let fam = LshFamily::bit_sampling(64);
        let q = inst.queries[0].as_ref();
        let prof = profile(&inst.dataset, &fam, q).unwrap();
        let report = opt_report(&prof, L_PRIME, K);
        let i_prime = report.i_prime.expect("C(K) is tiny at n = 256");
        // The largest budget allowed in one forest must cover 100 / p1^i'.
        assert!(100.0 / prof.p1.powi(i_prime as i32) <= L_PRIME as f64);
        let ens = ForestEnsemble::build(inst.dataset.clone(), fam, K, L_PRIME, 8, RngSeed::new(run).derive("ensemble", 0)).unwrap();
        let (i, _) = choose_level(&ens, q, L_PRIME, &AdaptiveParams::default()).unwrap();
        checked += 1;
        within += usize::from(i <= i_prime);
    }
    assert!(within * 100 >= checked * 99, "{within} of {checked} runs chose a level at most i'");
}

#[test]
fn level_pair_terminates_in_most_forests() {
    let (mut terminated, mut trials) = (0usize, 0usize);
    for run in 0..20u64 {
        let inst = planted(512, 9_000 + run);
        let fam = LshFamily::bit_sampling(64);
        let q = inst.queries[0].as_ref();
        let p1 = analytic_p1(&inst);
        let ens = ForestEnsemble::build(inst.dataset.clone(), fam, K, L_PRIME, 40, RngSeed::new(run).derive("ensemble", 1)).unwrap();
        let params = AdaptiveParams::default();
        let (i, _) = choose_level(&ens, q, L_PRIME, &params).unwrap();
        let i = i.max(1);
        assert!(100.0 / p1.powi(i as i32) <= L_PRIME as f64);
        let (statuses, _) = run_level_pair(&ens, q, i, L_PRIME, &params, &RngSeed::new(run).derive("pair", 0)).unwrap();
        for s in &statuses {
            trials += 1;
            terminated += usize::from(s.upper == LevelStatus::Terminated || s.lower == LevelStatus::Terminated);
            if let Some(best) = s.best {
                assert!(best.0 < 512);
            }
        }
    }
    let freq = terminated as f64 / trials as f64;
    let sigma = (0.9f64 * 0.1 / trials as f64).sqrt();
    assert!(freq >= 0.9 - 3.0 * sigma, "per-forest termination frequency {freq} over {trials} forests");
}

#[test]
fn bottom_up_stops_no_lower_than_i_hat() {
    let seeds = 100u64;
    let mut ok = 0;
    for s in 0..seeds {
        let inst = planted(256, 11_000 + s);
        let fam = LshFamily::bit_sampling(64);
        let q = inst.queries[0].as_ref();
        let prof = profile(&inst.dataset, &fam, q).unwrap();
        let i_prime = opt_report(&prof, L_PRIME, K).i_prime.expect("C(K) is tiny");
        // Largest level below i' - 1 whose confirmation budget fits in L' trees.
        let i_hat = (0..i_prime.saturating_sub(1))
            .rev()
            .find(|&i| 100.0 / prof.p1.powi(i as i32) <= L_PRIME as f64)
            .expect("level 0 always fits");
        let ens = ForestEnsemble::build(inst.dataset.clone(), fam, K, L_PRIME, 8, RngSeed::new(s).derive("ensemble", 2)).unwrap();
        let res = bottom_up_phase(&ens, q, K, &AdaptiveParams::default(), &RngSeed::new(s).derive("query", 0)).unwrap();
        ok += usize::from(res.level >= i_hat && res.point == inst.truth[0]);
    }
    assert!(ok * 100 >= seeds as usize * 99, "{ok} of {seeds} searches stopped at or above i-hat");
}
