//! Parameter-free adaptive nearest-neighbor search over an ensemble of
//! LSH forests.
//!
//! The query doubles a tree budget `j = 1, 2, 4, …, L′`. For each `j` it
//! picks the shallowest level whose first `j` buckets hold few enough
//! collisions in at least half of the forests, then runs budgeted
//! confirmation sampling at that level and the one above it in every
//! forest. Once a quarter of the forests confirm at one level the search
//! stops and reports the closest point seen. If even `j = L′` does not
//! reach the quorum, a bottom-up phase walks the levels towards the root,
//! where every bucket is the whole dataset and confirmation is certain.

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::ops::AddAssign;
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confirm::ConfirmationState;
use crate::error::{Error, Result};
use crate::family::LshFamily;
use crate::forest::{build_forest, read_seed, write_seed, Forest, PrefixWalker};
use crate::types::{Dataset, PointId, PointRef, QueryOrder, RngSeed, Stream};

/// Tunable constants of the adaptive query. The defaults are the ones the
/// analysis is stated for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveParams {
    /// Confirmations required before a search reports.
    pub t: usize,
    /// Collision budget multiplier: at most `cap · i · j` collisions.
    pub collision_cap: f64,
    /// Fraction of forests that must satisfy the cap when choosing a level.
    pub level_fraction: f64,
    /// Fraction of forests that must confirm at one level to stop.
    pub quorum_fraction: f64,
    /// Fraction of forests that must exhaust their trees before the
    /// bottom-up phase moves one level up.
    pub explore_fraction: f64,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        AdaptiveParams {
            t: 3,
            collision_cap: 10.0,
            level_fraction: 0.5,
            quorum_fraction: 0.25,
            explore_fraction: 0.5,
        }
    }
}

impl AdaptiveParams {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::Config("t must be at least 1".into()));
        }
        if self.collision_cap.is_nan() || self.collision_cap <= 0.0 {
            return Err(Error::Config("collision cap multiplier must be positive".into()));
        }
        for (name, v) in [
            ("level fraction", self.level_fraction),
            ("quorum fraction", self.quorum_fraction),
            ("explore fraction", self.explore_fraction),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// `⌈fraction · r⌉`, at least 1.
pub fn quorum_size(r: usize, fraction: f64) -> usize {
    ((fraction * r as f64 - 1e-9).ceil() as usize).clamp(1, r.max(1))
}

/// Default number of forests, `max(1, ⌈c_R · ln n⌉)`.
pub fn default_forest_count(n: usize, c_r: f64) -> usize {
    ((c_r * (n.max(1) as f64).ln()).ceil() as usize).max(1)
}

/// Largest power of two `≤ l / r`, at least 1.
pub fn trees_per_forest(l: usize, r: usize) -> usize {
    let per = (l / r.max(1)).max(1);
    1 << (usize::BITS - 1 - per.leading_zeros())
}

/// Work counters of one query. Additive across forests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounters {
    pub hash_evaluations: u64,
    /// Candidate distance computations, the quantity the collision cap limits.
    pub distance_computations: u64,
    pub buckets_opened: u64,
    pub node_visits: u64,
    /// Empty buckets replaced by a uniformly random point.
    pub empty_bucket_fallbacks: u64,
}

impl CostCounters {
    /// Work units: hash evaluations plus distance computations.
    pub fn work_units(&self) -> u64 {
        self.hash_evaluations + self.distance_computations
    }
}

impl AddAssign for CostCounters {
    fn add_assign(&mut self, o: Self) {
        self.hash_evaluations += o.hash_evaluations;
        self.distance_computations += o.distance_computations;
        self.buckets_opened += o.buckets_opened;
        self.node_visits += o.node_visits;
        self.empty_bucket_fallbacks += o.empty_bucket_fallbacks;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Stopped inside the doubling loop.
    Doubling,
    BottomUp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveResult {
    pub point: PointId,
    pub cost: CostCounters,
    pub phase: Phase,
    /// Level at which the quorum was reached.
    pub level: usize,
    /// Tree budget `j` when the search stopped.
    pub trees: usize,
    /// Forests whose confirmation sampling terminated at `level`.
    pub terminated: usize,
}

/// Outcome of one budgeted confirmation-sampling instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LevelStatus {
    Terminated,
    Exhausted,
}

/// Statuses of one forest's two instances in [`run_level_pair`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairStatus {
    pub upper: LevelStatus,
    pub lower: LevelStatus,
    /// Best point either instance saw.
    pub best: Option<PointId>,
}

/// True when at least `⌈fraction · R⌉` forests terminated at level `i`, or
/// at least that many at level `i − 1`. The two levels are not pooled.
pub fn quorum_check(statuses: &[PairStatus], fraction: f64) -> bool {
    let need = quorum_size(statuses.len(), fraction);
    let at_lower = statuses.iter().filter(|s| s.lower == LevelStatus::Terminated).count();
    let at_upper = statuses.iter().filter(|s| s.upper == LevelStatus::Terminated).count();
    at_lower >= need || at_upper >= need
}

/// `R` independent forests of `L′` trees each, sharing `K` and the family.
#[derive(Clone, Debug)]
pub struct ForestEnsemble {
    forests: Vec<Forest>,
    l_prime: usize,
    seed: RngSeed,
}

impl ForestEnsemble {
    /// Builds `r` forests; forest `f` uses seed path `seed / forest:f`.
    pub fn build(dataset: Arc<Dataset>, family: LshFamily, k: usize, l_prime: usize, r: usize, seed: RngSeed) -> Result<Self> {
        if !l_prime.is_power_of_two() {
            return Err(Error::Config(format!("trees per forest must be a power of two, got {l_prime}")));
        }
        if r == 0 {
            return Err(Error::Config("at least one forest is required".into()));
        }
        let forests = (0..r)
            .into_par_iter()
            .map(|f| build_forest(dataset.clone(), family, k, l_prime, seed.derive("forest", f as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ForestEnsemble { forests, l_prime, seed })
    }

    /// Builds with `R = ⌈c_R ln n⌉` forests sharing roughly `l_total` trees.
    pub fn with_total_trees(dataset: Arc<Dataset>, family: LshFamily, k: usize, l_total: usize, c_r: f64, seed: RngSeed) -> Result<Self> {
        let r = default_forest_count(dataset.len(), c_r);
        Self::build(dataset, family, k, trees_per_forest(l_total, r), r, seed)
    }

    pub fn forests(&self) -> &[Forest] {
        &self.forests
    }

    pub fn forest_count(&self) -> usize {
        self.forests.len()
    }

    pub fn trees_per_forest(&self) -> usize {
        self.l_prime
    }

    pub fn total_trees(&self) -> usize {
        self.l_prime * self.forests.len()
    }

    pub fn depth(&self) -> usize {
        self.forests[0].depth()
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        self.forests[0].dataset()
    }

    pub fn family(&self) -> &LshFamily {
        self.forests[0].family()
    }

    pub fn seed(&self) -> &RngSeed {
        &self.seed
    }

    /// Runs the adaptive query; `seed` drives the empty-bucket fallbacks.
    pub fn query(&self, q: PointRef<'_>, params: &AdaptiveParams, seed: &RngSeed) -> Result<AdaptiveResult> {
        adaptive_nearest_neighbor(self, q, params, seed)
    }
}

const ENSEMBLE_MAGIC: &[u8; 4] = b"LSHE";

impl ForestEnsemble {
    /// Versioned binary form: header, then each forest's serialization
    /// prefixed by its byte length.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(ENSEMBLE_MAGIC)?;
        w.write_u32::<LittleEndian>(crate::forest::FORMAT_VERSION)?;
        w.write_u32::<LittleEndian>(self.forests.len() as u32)?;
        w.write_u32::<LittleEndian>(self.l_prime as u32)?;
        write_seed(w, &self.seed)?;
        for forest in &self.forests {
            let bytes = forest.to_bytes();
            w.write_u64::<LittleEndian>(bytes.len() as u64)?;
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_from<R: Read>(r: &mut R, dataset: Arc<Dataset>) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != ENSEMBLE_MAGIC {
            return Err(Error::format(0, "not a serialized forest ensemble"));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != crate::forest::FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: crate::forest::FORMAT_VERSION,
            });
        }
        let count = r.read_u32::<LittleEndian>()? as usize;
        let l_prime = r.read_u32::<LittleEndian>()? as usize;
        if count == 0 || !l_prime.is_power_of_two() {
            return Err(Error::format(8, "invalid ensemble header"));
        }
        let seed = read_seed(r)?;
        let mut forests = Vec::with_capacity(count);
        for _ in 0..count {
            let _len = r.read_u64::<LittleEndian>()?;
            let forest = Forest::read_from(r, dataset.clone())?;
            if forest.len() != l_prime {
                return Err(Error::format(0, "forest size disagrees with the ensemble header"));
            }
            forests.push(forest);
        }
        Ok(ForestEnsemble { forests, l_prime, seed })
    }
}

/// Per-query search state shared by every phase.
struct Search<'a> {
    ensemble: &'a ForestEnsemble,
    order: QueryOrder<'a>,
    query: PointRef<'a>,
    /// Query hash string per (forest, tree) and how many levels are known.
    hashes: Vec<(u64, usize)>,
    rngs: Vec<Stream>,
    cost: CostCounters,
    best: Option<PointId>,
}

enum Draw {
    Sample { point: PointId, collisions: usize },
    OverBudget,
}

impl<'a> Search<'a> {
    fn new(ensemble: &'a ForestEnsemble, q: PointRef<'a>, seed: &RngSeed) -> Result<Self> {
        let order = QueryOrder::new(ensemble.dataset(), q)?;
        let r = ensemble.forest_count();
        Ok(Search {
            ensemble,
            order,
            query: q,
            hashes: vec![(0, 0); r * ensemble.l_prime],
            rngs: (0..r).map(|f| seed.derive("forest", f as u64).rng()).collect(),
            cost: CostCounters::default(),
            best: None,
        })
    }

    /// The first `level` levels of the query's string in one tree,
    /// evaluating (and charging) only levels not seen before.
    fn query_bits(&mut self, f: usize, tree: usize, level: usize) -> u64 {
        let slot = &mut self.hashes[f * self.ensemble.l_prime + tree];
        if slot.1 < level {
            let members = self.ensemble.forests[f].tree(tree).members();
            for (l, member) in members.iter().enumerate().take(level).skip(slot.1) {
                if member.eval(self.query) {
                    slot.0 |= 1 << l;
                }
            }
            self.cost.hash_evaluations += (level - slot.1) as u64;
            slot.1 = level;
        }
        slot.0
    }

    fn see(&mut self, id: PointId) {
        if self.best.is_none_or(|b| self.order.cmp(id, b) == Ordering::Less) {
            self.best = Some(id);
        }
    }

    /// One sample from `Q` at `(forest, tree, level)`: the bucket's
    /// `≺_q`-minimum, or a uniform point when the bucket is empty. Returns
    /// `OverBudget` without inspecting anything if the bucket holds more
    /// than `budget` candidates.
    fn sample(&mut self, f: usize, tree: usize, level: usize, budget: Option<usize>) -> Draw {
        let bits = self.query_bits(f, tree, level);
        let trie = self.ensemble.forests[f].tree(tree);
        let range = trie.locate(level, bits);
        self.cost.node_visits += range.node_visits as u64;
        if range.len == 0 {
            let n = self.order.dataset().len();
            let id = PointId(self.rngs[f].random_range(0..n) as u32);
            self.cost.empty_bucket_fallbacks += 1;
            self.cost.distance_computations += 1;
            self.see(id);
            return Draw::Sample { point: id, collisions: 0 };
        }
        if budget.is_some_and(|b| range.len > b) {
            return Draw::OverBudget;
        }
        let order = &self.order;
        let point = trie
            .bucket_points(range)
            .iter()
            .copied()
            .min_by_key(|&id| order.key(id))
            .expect("non-empty bucket");
        self.cost.buckets_opened += 1;
        self.cost.distance_computations += range.len as u64;
        self.see(point);
        Draw::Sample {
            point,
            collisions: range.len,
        }
    }

    fn cmp(&self, a: &PointId, b: &PointId) -> Ordering {
        self.order.cmp(*a, *b)
    }
}

/// Smallest level `i` at which the first `j` trees hold at most
/// `cap · i · j` collisions in at least `level_fraction` of the forests,
/// or `K` if there is none. Walks each tree top-down, one node per level.
fn choose_level_in(search: &mut Search<'_>, j: usize, params: &AdaptiveParams) -> usize {
    let ens = search.ensemble;
    let k = ens.depth();
    let r = ens.forest_count();
    let need = quorum_size(r, params.level_fraction);
    let mut walkers: Vec<Vec<PrefixWalker>> = ens
        .forests
        .iter()
        .map(|forest| (0..j).map(|t| forest.tree(t).walker()).collect())
        .collect();
    let mut satisfied = vec![false; r];
    let mut count = 0;
    for i in 1..=k {
        let cap = params.collision_cap * (i * j) as f64;
        for f in 0..r {
            // Sums only shrink with depth while the cap grows, so a forest
            // that met the cap keeps meeting it.
            if satisfied[f] {
                continue;
            }
            let mut sum = 0;
            for (t, walker) in walkers[f].iter_mut().enumerate() {
                let bits = search.query_bits(f, t, i);
                sum += walker.step(ens.forests[f].tree(t), bits);
            }
            search.cost.node_visits += j as u64;
            if sum as f64 <= cap {
                satisfied[f] = true;
                count += 1;
            }
        }
        if count >= need {
            return i;
        }
    }
    k
}

struct LevelRun {
    level: usize,
    next_tree: usize,
    collisions: usize,
    state: ConfirmationState<PointId>,
    status: Option<LevelStatus>,
}

impl LevelRun {
    fn new(level: usize, t: usize) -> Self {
        LevelRun {
            level,
            next_tree: 0,
            collisions: 0,
            state: ConfirmationState::new(t).expect("t validated"),
            status: None,
        }
    }

    /// Consumes one more bucket under the `(j, cap)` budget.
    fn step(&mut self, search: &mut Search<'_>, f: usize, j: usize, cap: usize) {
        if self.next_tree == j {
            self.status = Some(LevelStatus::Exhausted);
            return;
        }
        let draw = search.sample(f, self.next_tree, self.level, Some(cap - self.collisions));
        self.next_tree += 1;
        match draw {
            Draw::OverBudget => self.status = Some(LevelStatus::Exhausted),
            Draw::Sample { point, collisions } => {
                self.collisions += collisions;
                if self.state.observe(point, |a, b| search.cmp(a, b)) {
                    self.status = Some(LevelStatus::Terminated);
                }
            }
        }
    }
}

fn run_level_pair_in(search: &mut Search<'_>, i: usize, j: usize, params: &AdaptiveParams) -> Vec<PairStatus> {
    let cap = (params.collision_cap * (i * j) as f64).floor() as usize;
    (0..search.ensemble.forest_count())
        .map(|f| {
            let mut upper = LevelRun::new(i, params.t);
            let mut lower = LevelRun::new(i - 1, params.t);
            // Alternate buckets between the two levels; a forest stops as
            // soon as either level confirms.
            while upper.status != Some(LevelStatus::Terminated) && lower.status != Some(LevelStatus::Terminated) {
                let mut progressed = false;
                for run in [&mut upper, &mut lower] {
                    if run.status.is_none() {
                        run.step(search, f, j, cap);
                        progressed = true;
                    }
                }
                if !progressed {
                    break;
                }
            }
            let best = [upper.state.best(), lower.state.best()]
                .into_iter()
                .flatten()
                .min_by(|a, b| search.cmp(a, b));
            PairStatus {
                upper: upper.status.unwrap_or(LevelStatus::Exhausted),
                lower: lower.status.unwrap_or(LevelStatus::Exhausted),
                best,
            }
        })
        .collect()
}

/// Picks the level for tree budget `j`; see the module docs.
pub fn choose_level(ensemble: &ForestEnsemble, q: PointRef<'_>, j: usize, params: &AdaptiveParams) -> Result<(usize, CostCounters)> {
    check_budget(ensemble, j)?;
    let mut search = Search::new(ensemble, q, &ensemble.seed.derive("query", 0))?;
    let i = choose_level_in(&mut search, j, params);
    Ok((i, search.cost))
}

/// Runs budgeted confirmation sampling at levels `i` and `i − 1` in every
/// forest over the first `j` trees.
pub fn run_level_pair(
    ensemble: &ForestEnsemble,
    q: PointRef<'_>,
    i: usize,
    j: usize,
    params: &AdaptiveParams,
    seed: &RngSeed,
) -> Result<(Vec<PairStatus>, CostCounters)> {
    params.validate()?;
    check_budget(ensemble, j)?;
    if i == 0 || i > ensemble.depth() {
        return Err(Error::input(format!("level {i} out of range 1..={}", ensemble.depth())));
    }
    let mut search = Search::new(ensemble, q, seed)?;
    let statuses = run_level_pair_in(&mut search, i, j, params);
    Ok((statuses, search.cost))
}

/// Runs only the lock-step bottom-up search, starting at level `start`.
pub fn bottom_up_phase(
    ensemble: &ForestEnsemble,
    q: PointRef<'_>,
    start: usize,
    params: &AdaptiveParams,
    seed: &RngSeed,
) -> Result<AdaptiveResult> {
    params.validate()?;
    if start > ensemble.depth() {
        return Err(Error::input(format!("level {start} out of range 0..={}", ensemble.depth())));
    }
    let mut search = Search::new(ensemble, q, seed)?;
    let (level, terminated) = bottom_up_in(&mut search, start, params);
    Ok(finish(search, Phase::BottomUp, level, ensemble.l_prime, terminated))
}

fn check_budget(ensemble: &ForestEnsemble, j: usize) -> Result<()> {
    if !j.is_power_of_two() || j > ensemble.l_prime {
        return Err(Error::input(format!("tree budget {j} must be a power of two ≤ {}", ensemble.l_prime)));
    }
    Ok(())
}

/// Lock-step search from `start` towards the root; returns the level and
/// number of forests that confirmed there.
fn bottom_up_in(search: &mut Search<'_>, start: usize, params: &AdaptiveParams) -> (usize, usize) {
    let r = search.ensemble.forest_count();
    let l_prime = search.ensemble.l_prime;
    let need = quorum_size(r, params.quorum_fraction);
    let explore_need = quorum_size(r, params.explore_fraction);
    let mut level = start;
    loop {
        let mut next = vec![0usize; r];
        let mut states: Vec<ConfirmationState<PointId>> =
            (0..r).map(|_| ConfirmationState::new(params.t).expect("t validated")).collect();
        let mut terminated = vec![false; r];
        loop {
            let mut progressed = false;
            for f in 0..r {
                // At the root every bucket is the whole dataset, so trees
                // are reused until the search confirms.
                if terminated[f] || (next[f] >= l_prime && level > 0) {
                    continue;
                }
                let Draw::Sample { point, .. } = search.sample(f, next[f] % l_prime, level, None) else {
                    unreachable!("unbudgeted draws always sample")
                };
                next[f] += 1;
                progressed = true;
                if states[f].observe(point, |a, b| search.cmp(a, b)) {
                    terminated[f] = true;
                }
            }
            let done = terminated.iter().filter(|&&x| x).count();
            if done >= need {
                return (level, done);
            }
            let explored = next.iter().filter(|&&n| n >= l_prime).count();
            if level > 0 && (explored >= explore_need || !progressed) {
                level -= 1;
                break;
            }
        }
    }
}

/// Answers `q` exactly with high probability, adapting the level and the
/// number of trees to the query's distance profile.
pub fn adaptive_nearest_neighbor(
    ensemble: &ForestEnsemble,
    q: PointRef<'_>,
    params: &AdaptiveParams,
    seed: &RngSeed,
) -> Result<AdaptiveResult> {
    params.validate()?;
    let mut search = Search::new(ensemble, q, seed)?;
    let mut j = 1;
    loop {
        let i = choose_level_in(&mut search, j, params);
        let statuses = run_level_pair_in(&mut search, i, j, params);
        if quorum_check(&statuses, params.quorum_fraction) {
            let need = quorum_size(statuses.len(), params.quorum_fraction);
            let at_upper = statuses.iter().filter(|s| s.upper == LevelStatus::Terminated).count();
            let (level, terminated) = if at_upper >= need {
                (i, at_upper)
            } else {
                (i - 1, statuses.iter().filter(|s| s.lower == LevelStatus::Terminated).count())
            };
            return Ok(finish(search, Phase::Doubling, level, j, terminated));
        }
        if j == ensemble.l_prime {
            let (level, terminated) = bottom_up_in(&mut search, i - 1, params);
            return Ok(finish(search, Phase::BottomUp, level, j, terminated));
        }
        j *= 2;
    }
}

fn finish(search: Search<'_>, phase: Phase, level: usize, trees: usize, terminated: usize) -> AdaptiveResult {
    AdaptiveResult {
        point: search.best.expect("every phase samples at least once"),
        cost: search.cost,
        phase,
        level,
        trees,
        terminated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::BitVector;

    fn random_bits(n: usize, dim: usize, seed: u64) -> Arc<Dataset> {
        let mut rng = RngSeed::new(seed).rng();
        let pts = (0..n)
            .map(|_| BitVector::from_bools(&(0..dim).map(|_| rng.random::<bool>()).collect::<Vec<_>>()))
            .collect();
        Arc::new(Dataset::from_bits(pts).unwrap())
    }

    fn brute(data: &Dataset, q: PointRef<'_>) -> PointId {
        let order = QueryOrder::new(data, q).unwrap();
        data.ids().min_by_key(|&id| order.key(id)).unwrap()
    }

    #[test]
    fn sizing_helpers() {
        assert_eq!(quorum_size(4, 0.25), 1);
        assert_eq!(quorum_size(8, 0.25), 2);
        assert_eq!(quorum_size(45, 0.5), 23);
        assert_eq!(quorum_size(1, 0.25), 1);
        assert_eq!(default_forest_count(256, 8.0), 45);
        assert_eq!(default_forest_count(1, 8.0), 1);
        assert_eq!(trees_per_forest(360, 45), 8);
        assert_eq!(trees_per_forest(100, 45), 2);
        assert_eq!(trees_per_forest(10, 45), 1);
    }

    fn status(upper: bool, lower: bool) -> PairStatus {
        let s = |b| if b { LevelStatus::Terminated } else { LevelStatus::Exhausted };
        PairStatus {
            upper: s(upper),
            lower: s(lower),
            best: None,
        }
    }

    #[test]
    fn quorum_is_counted_per_level() {
        let mut four = vec![status(false, false); 4];
        four[0] = status(true, false);
        assert!(quorum_check(&four, 0.25));
        let mut eight = vec![status(false, false); 8];
        eight[0] = status(true, false);
        eight[1] = status(false, true);
        assert!(!quorum_check(&eight, 0.25));
        eight[0] = status(false, true);
        assert!(quorum_check(&eight, 0.25));
    }

    #[test]
    fn single_point_dataset() {
        let data = random_bits(1, 16, 1);
        let ens = ForestEnsemble::build(data, LshFamily::bit_sampling(16), 8, 4, 3, RngSeed::new(1)).unwrap();
        let q = BitVector::from_words(16, vec![0x1234]).unwrap();
        let res = ens.query(q.as_point(), &AdaptiveParams::default(), &RngSeed::new(2)).unwrap();
        assert_eq!(res.point, PointId(0));
    }

    #[test]
    fn choose_level_trivial_cases() {
        // All points identical and far from q: level 1 already meets the cap.
        let far = BitVector::from_words(32, vec![0xffff_ffff]).unwrap();
        let data = Arc::new(Dataset::from_bits(vec![far; 200]).unwrap());
        let ens = ForestEnsemble::build(data, LshFamily::bit_sampling(32), 10, 4, 5, RngSeed::new(3)).unwrap();
        let q = BitVector::zeros(32);
        let (i, cost) = choose_level(&ens, q.as_point(), 1, &AdaptiveParams::default()).unwrap();
        assert_eq!(i, 1);
        assert!(cost.node_visits <= 5);

        // All points equal to q and n > 10·K·L′: no level qualifies.
        let data = Arc::new(Dataset::from_bits(vec![q.clone(); 500]).unwrap());
        let ens = ForestEnsemble::build(data, LshFamily::bit_sampling(32), 10, 4, 5, RngSeed::new(4)).unwrap();
        let (i, cost) = choose_level(&ens, q.as_point(), 4, &AdaptiveParams::default()).unwrap();
        assert_eq!(i, 10);
        assert!(cost.node_visits as usize <= 5 * 10 * 4);
        assert!(choose_level(&ens, q.as_point(), 3, &AdaptiveParams::default()).is_err());
    }

    #[test]
    fn certain_collision_terminates_everywhere() {
        let q = BitVector::from_words(32, vec![0xdead_beef]).unwrap();
        let data = Arc::new(Dataset::from_bits(vec![q.clone(); 3]).unwrap());
        let ens = ForestEnsemble::build(data, LshFamily::bit_sampling(32), 6, 4, 6, RngSeed::new(5)).unwrap();
        let (statuses, _) = run_level_pair(&ens, q.as_point(), 1, 4, &AdaptiveParams::default(), &RngSeed::new(6)).unwrap();
        assert!(statuses.iter().all(|s| s.upper == LevelStatus::Terminated || s.lower == LevelStatus::Terminated));
        assert!(statuses.iter().all(|s| s.best == Some(PointId(0))));
    }

    #[test]
    fn oversized_buckets_exhaust_on_collisions() {
        let q = BitVector::zeros(32);
        let data = Arc::new(Dataset::from_bits(vec![q.clone(); 100]).unwrap());
        let ens = ForestEnsemble::build(data, LshFamily::bit_sampling(32), 6, 4, 2, RngSeed::new(7)).unwrap();
        // Budget 10·1·4 = 40 collisions, every bucket holds 100.
        let (statuses, cost) = run_level_pair(&ens, q.as_point(), 1, 4, &AdaptiveParams::default(), &RngSeed::new(8)).unwrap();
        assert!(statuses.iter().all(|s| s.upper == LevelStatus::Exhausted && s.lower == LevelStatus::Exhausted));
        assert_eq!(cost.distance_computations, 0);
    }

    #[test]
    fn exact_answers_on_random_instances() {
        let data = random_bits(256, 64, 9);
        let ens = ForestEnsemble::build(data.clone(), LshFamily::bit_sampling(64), 32, 8, 45, RngSeed::new(10)).unwrap();
        let params = AdaptiveParams::default();
        let mut rng = RngSeed::new(11).rng();
        let mut hits = 0;
        for s in 0..100 {
            let q = BitVector::from_bools(&(0..64).map(|_| rng.random::<bool>()).collect::<Vec<_>>());
            let res = ens.query(q.as_point(), &params, &RngSeed::new(s)).unwrap();
            hits += usize::from(res.point == brute(&data, q.as_point()));
            let again = ens.query(q.as_point(), &params, &RngSeed::new(s)).unwrap();
            assert_eq!(res, again);
        }
        assert!(hits >= 97, "{hits}");
    }

    #[test]
    fn bottom_up_reaches_the_root() {
        // One tree per forest and an impossible quorum in the doubling loop
        // force the bottom-up phase.
        let data = random_bits(64, 32, 12);
        let ens = ForestEnsemble::build(data.clone(), LshFamily::bit_sampling(32), 4, 1, 4, RngSeed::new(13)).unwrap();
        let q = BitVector::from_words(32, vec![0x0f0f_0f0f]).unwrap();
        let res = ens.query(q.as_point(), &AdaptiveParams::default(), &RngSeed::new(14)).unwrap();
        assert_eq!(res.phase, Phase::BottomUp);
        assert_eq!(res.level, 0);
        assert_eq!(res.point, brute(&data, q.as_point()));
    }

    #[test]
    fn ensemble_round_trip() {
        let data = random_bits(50, 32, 15);
        let ens = ForestEnsemble::build(data.clone(), LshFamily::bit_sampling(32), 12, 4, 3, RngSeed::new(16)).unwrap();
        let bytes = ens.to_bytes();
        let back = ForestEnsemble::read_from(&mut bytes.as_slice(), data.clone()).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        let q = BitVector::from_words(32, vec![0x5555_aaaa]).unwrap();
        let params = AdaptiveParams::default();
        assert_eq!(
            ens.query(q.as_point(), &params, &RngSeed::new(1)).unwrap(),
            back.query(q.as_point(), &params, &RngSeed::new(1)).unwrap()
        );
    }
}
