//! Ground truth used by the tests and the bench: brute-force nearest
//! neighbors, analytic collision profiles and the OPT cost, the static
//! "natural algorithm" baseline, and Monte Carlo replays of confirmation
//! sampling.

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::confirm::{ConfirmationState, CsOutcome, DiscreteDistribution, Neumaier};
use crate::error::{Error, Result};
use crate::family::{FamilyKind, LshFamily};
use crate::forest::Forest;
use crate::tables::HashTable;
use crate::types::{Dataset, PointId, PointRef, QueryOrder, RngSeed};

/// The `≺_q`-minimum of the dataset by linear scan.
pub fn brute_force_nn(dataset: &Dataset, q: PointRef<'_>) -> Result<PointId> {
    let order = QueryOrder::new(dataset, q)?;
    dataset
        .ids()
        .min_by_key(|&id| order.key(id))
        .ok_or(Error::EmptyDataset)
}

/// Analytic collision probabilities of every point with one query.
#[derive(Clone, Debug)]
pub struct DistanceProfile {
    /// Distance from the query, indexed by point id.
    pub distances: Vec<f64>,
    /// `p(q, x) = f(dist(q, x))`, indexed by point id.
    pub probs: Vec<f64>,
    pub nearest: PointId,
    /// Collision probability of the nearest neighbor.
    pub p1: f64,
}

impl DistanceProfile {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `C(i) = Σ_x p(q, x)^i`, with compensated summation.
    pub fn c(&self, i: usize) -> f64 {
        let mut acc = Neumaier::default();
        for &p in &self.probs {
            acc.add(p.powi(i as i32));
        }
        acc.total()
    }

    /// Distances in ascending order.
    pub fn sorted_distances(&self) -> Vec<f64> {
        let mut d = self.distances.clone();
        d.sort_by(f64::total_cmp);
        d
    }
}

pub fn profile(dataset: &Dataset, family: &LshFamily, q: PointRef<'_>) -> Result<DistanceProfile> {
    if family.metric() != dataset.metric() || family.dim() != dataset.dim() {
        return Err(Error::Unsupported(format!(
            "{} has no analytic collision function for {}-dimensional {} data",
            family.kind(),
            dataset.dim(),
            dataset.metric()
        )));
    }
    let nearest = brute_force_nn(dataset, q)?;
    let distances: Vec<f64> = dataset.ids().map(|id| dataset.distance_to(id, q)).collect();
    let probs: Vec<f64> = distances
        .iter()
        .map(|&d| family.collision_probability_unchecked(d))
        .collect();
    let p1 = probs[nearest.index()];
    Ok(DistanceProfile {
        distances,
        probs,
        nearest,
        p1,
    })
}

/// Per-level costs and the best natural strategy for one query.
#[derive(Clone, Debug, Serialize)]
pub struct OptReport {
    /// `C(i)` for `i = 0..=K`.
    pub c: Vec<f64>,
    /// `T(i) = (i + C(i)) / p1^i`.
    pub t: Vec<f64>,
    /// Levels with `p1^i · L ≥ ln n`.
    pub feasible: Vec<bool>,
    /// Smallest `i` with `C(i) ≤ i`, if any level up to `K` has it.
    pub i_prime: Option<usize>,
    /// Feasible level minimizing `T(i)`.
    pub i_star: Option<usize>,
    /// `T(i*) · ln n`, or `+∞` when no level is feasible.
    pub opt: f64,
    pub ln_n: f64,
}

impl OptReport {
    pub fn is_feasible(&self) -> bool {
        self.i_star.is_some()
    }
}

pub fn opt_report(profile: &DistanceProfile, l: usize, k: usize) -> OptReport {
    let ln_n = (profile.len() as f64).ln();
    let c: Vec<f64> = (0..=k).map(|i| profile.c(i)).collect();
    let t: Vec<f64> = c
        .iter()
        .enumerate()
        .map(|(i, &ci)| (i as f64 + ci) / profile.p1.powi(i as i32))
        .collect();
    let feasible: Vec<bool> = (0..=k)
        .map(|i| profile.p1.powi(i as i32) * l as f64 >= ln_n)
        .collect();
    let i_prime = (0..=k).find(|&i| c[i] <= i as f64);
    let i_star = (0..=k)
        .filter(|&i| feasible[i])
        .min_by(|&a, &b| t[a].total_cmp(&t[b]).then(a.cmp(&b)));
    let opt = i_star.map_or(f64::INFINITY, |i| t[i] * ln_n);
    OptReport {
        c,
        t,
        feasible,
        i_prime,
        i_star,
        opt,
        ln_n,
    }
}

/// Outcome of scanning a fixed set of buckets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct NaturalResult {
    /// `≺_q`-minimum over the scanned buckets; `None` if all were empty.
    pub point: Option<PointId>,
    pub collisions: usize,
    /// `i · j` hash evaluations plus the collisions.
    pub work: usize,
}

/// Scans `S_{i,1..j}(q)` and returns the closest point seen.
pub fn natural_algorithm(forest: &Forest, q: PointRef<'_>, i: usize, j: usize) -> Result<NaturalResult> {
    if j > forest.len() {
        return Err(Error::input(format!("{j} trees requested, forest has {}", forest.len())));
    }
    let order = QueryOrder::new(forest.dataset(), q)?;
    let mut best: Option<PointId> = None;
    let mut collisions = 0;
    for tree in 0..j {
        for id in forest.bucket(tree, i, q)? {
            collisions += 1;
            if best.is_none_or(|b| order.key(id) < order.key(b)) {
                best = Some(id);
            }
        }
    }
    Ok(NaturalResult {
        point: best,
        collisions,
        work: i * j + collisions,
    })
}

/// Smallest level at which the first `l` trees hold at most `c · l`
/// collisions in total, or `K` if none does. This is the static level
/// choice the adaptive query is compared against.
pub fn static_level(forest: &Forest, q: PointRef<'_>, c: f64, l: usize) -> Result<usize> {
    if l == 0 || l > forest.len() {
        return Err(Error::input(format!("{l} trees requested, forest has {}", forest.len())));
    }
    for i in 0..=forest.depth() {
        let mut total = 0;
        for tree in 0..l {
            total += forest.collision_count(tree, i, q)?;
        }
        if total as f64 <= c * l as f64 {
            return Ok(i);
        }
    }
    Ok(forest.depth())
}

/// Empirical replay of confirmation sampling on an explicit distribution.
#[derive(Clone, Debug, Serialize)]
pub struct SimReport {
    pub runs: u64,
    /// How often each element was reported.
    pub counts: Vec<u64>,
    pub mean_samples: f64,
    /// Standard error of `mean_samples`.
    pub se_samples: f64,
}

impl SimReport {
    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.runs as f64).collect()
    }

    /// Binomial standard error of a frequency with true probability `p`.
    pub fn binomial_se(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.runs as f64).sqrt()
    }
}

enum Sampler {
    /// All probabilities are multiples of `1 / table.len()`.
    Lattice(Vec<u8>),
    Alias(crate::confirm::DiscreteSampler),
}

impl Sampler {
    fn new(dist: &DiscreteDistribution) -> Self {
        const MAX_DENOMINATOR: usize = 200;
        for m in 1..=MAX_DENOMINATOR {
            let units: Vec<f64> = dist.probs().iter().map(|&p| p * m as f64).collect();
            if dist.len() <= u8::MAX as usize && units.iter().all(|u| (u - u.round()).abs() < 1e-9) {
                let mut table = Vec::with_capacity(m);
                for (i, u) in units.iter().enumerate() {
                    table.extend(std::iter::repeat_n(i as u8, u.round() as usize));
                }
                if table.len() == m {
                    return Sampler::Lattice(table);
                }
            }
        }
        Sampler::Alias(dist.sampler())
    }

    #[inline]
    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        match self {
            Sampler::Lattice(table) => table[rng.random_range(0..table.len())] as usize,
            Sampler::Alias(alias) => alias.sample(rng),
        }
    }
}

/// Runs confirmation sampling `runs` times on i.i.d. draws from `dist`,
/// where element 0 is the minimum. Distributions on a small lattice are
/// sampled exactly through a lookup table, others through an alias table.
pub fn simulate_cs(dist: &DiscreteDistribution, t: usize, runs: u64, seed: &RngSeed) -> Result<SimReport> {
    if runs == 0 {
        return Err(Error::input("runs must be at least 1"));
    }
    let sampler = Sampler::new(dist);
    // Replays draw billions of samples; a xoshiro stream seeded from the
    // ChaCha stream keeps them reproducible at a fraction of the cost.
    let mut rng = SmallRng::from_rng(&mut seed.rng());
    let mut counts = vec![0u64; dist.len()];
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for _ in 0..runs {
        let mut state = ConfirmationState::new(t)?;
        while !state.observe(sampler.sample(&mut rng), usize::cmp) {}
        let CsOutcome::Confirmed(res) = state.outcome() else {
            unreachable!("observe returned true")
        };
        counts[res.element] += 1;
        let s = res.samples as f64;
        sum += s;
        sum_sq += s * s;
    }
    let n = runs as f64;
    let mean = sum / n;
    let var = if runs > 1 { (sum_sq - n * mean * mean) / (n - 1.0) } else { 0.0 };
    Ok(SimReport {
        runs,
        counts,
        mean_samples: mean,
        se_samples: (var.max(0.0) / n).sqrt(),
    })
}

/// Exact distribution of one draw from a fresh bit-sampling table of width
/// `k_cat`: the bucket's `≺_q`-minimum, or a uniform point when the bucket
/// is empty. Enumerates all `dim^k_cat` coordinate tuples.
pub fn qq_exact_bit_sampling(dataset: &Dataset, family: &LshFamily, q: PointRef<'_>, k_cat: usize) -> Result<Vec<f64>> {
    if family.kind() != FamilyKind::BitSampling {
        return Err(Error::Unsupported("exact enumeration needs bit sampling".into()));
    }
    let dim = family.dim();
    let tuples = (dim as f64).powi(k_cat as i32);
    if tuples > 1e8 {
        return Err(Error::input(format!("{dim}^{k_cat} coordinate tuples is too many to enumerate")));
    }
    let order = QueryOrder::new(dataset, q)?;
    let n = dataset.len();
    let qbits = bits_of(q)?;
    let points: Vec<Vec<bool>> = dataset.ids().map(|id| bits_of(dataset.point(id))).collect::<Result<_>>()?;
    // Ids sorted by ≺_q, so the first agreeing point is the bucket minimum.
    let mut ranked: Vec<PointId> = dataset.ids().collect();
    ranked.sort_by_key(|&id| order.key(id));
    let weight = 1.0 / tuples;
    let mut probs = vec![Neumaier::default(); n];
    let mut empty = Neumaier::default();
    let mut coords = vec![0usize; k_cat];
    loop {
        let hit = ranked
            .iter()
            .find(|id| coords.iter().all(|&c| points[id.index()][c] == qbits[c]));
        match hit {
            Some(id) => probs[id.index()].add(weight),
            None => empty.add(weight),
        }
        // Odometer over dim^k_cat tuples.
        let mut pos = 0;
        while pos < k_cat {
            coords[pos] += 1;
            if coords[pos] < dim {
                break;
            }
            coords[pos] = 0;
            pos += 1;
        }
        if pos == k_cat {
            break;
        }
    }
    let share = empty.total() / n as f64;
    Ok(probs.iter().map(|p| p.total() + share).collect())
}

fn bits_of(x: PointRef<'_>) -> Result<Vec<bool>> {
    match x {
        PointRef::Bits { dim, words } => Ok((0..dim).map(|i| crate::types::get_bit(words, i)).collect()),
        PointRef::Dense(_) => Err(Error::Unsupported("expected a binary point".into())),
    }
}

/// Empirical frequencies of single draws from `draws` independent tables,
/// each built and dropped on the fly. Table `i` uses seed path
/// `seed / table:i`, the same tables a [`crate::tables::TableSequence`]
/// with that seed would build.
pub fn qq_empirical(
    dataset: &Dataset,
    family: &LshFamily,
    q: PointRef<'_>,
    k_cat: usize,
    draws: usize,
    seed: &RngSeed,
) -> Result<Vec<u64>> {
    let order = QueryOrder::new(dataset, q)?;
    let mut rng = seed.derive("fallback", 0).rng();
    let mut counts = vec![0u64; dataset.len()];
    for i in 0..draws {
        let table = HashTable::build(dataset, family, k_cat, seed, i);
        let bucket = table.bucket(table.key(q));
        let x = match bucket.iter().copied().min_by_key(|&id| order.key(id)) {
            Some(id) => id,
            None => PointId(rng.random_range(0..dataset.len()) as u32),
        };
        counts[x.index()] += 1;
    }
    Ok(counts)
}
