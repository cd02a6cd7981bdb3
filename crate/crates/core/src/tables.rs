//! A lazily grown sequence of independent hash tables and exact
//! nearest-neighbor search by confirmation sampling over it.
//!
//! Each draw of the sampling distribution queries the next table: the sample
//! is the closest point of the query's bucket, or a uniformly random point
//! when the bucket is empty. Table `i` is built from seed path
//! `seed / table:i`, so it is the same table whenever it is materialized.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::confirm::{CsOutcome, ConfirmationState};
use crate::error::{Error, Result};
use crate::family::{concat_bits, sample_members, HashSpec, LshFamily, MAX_LEVELS};
use crate::types::{Dataset, OrderKey, PointId, PointRef, QueryOrder, RngSeed};

/// One hash table over the concatenation of `K_cat` members.
#[derive(Debug)]
pub struct HashTable {
    index: usize,
    members: Vec<HashSpec>,
    buckets: HashMap<u64, Vec<PointId>>,
}

impl HashTable {
    pub fn build(dataset: &Dataset, family: &LshFamily, k_cat: usize, seed: &RngSeed, index: usize) -> Self {
        let members = sample_members(family, &seed.derive("table", index as u64), k_cat);
        let mut buckets: HashMap<u64, Vec<PointId>> = HashMap::new();
        for id in dataset.ids() {
            buckets
                .entry(concat_bits(&members, dataset.point(id)))
                .or_default()
                .push(id);
        }
        HashTable {
            index,
            members,
            buckets,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn members(&self) -> &[HashSpec] {
        &self.members
    }

    pub fn key(&self, q: PointRef<'_>) -> u64 {
        concat_bits(&self.members, q)
    }

    /// Points sharing `key`, in id order.
    pub fn bucket(&self, key: u64) -> &[PointId] {
        self.buckets.get(&key).map_or(&[], Vec::as_slice)
    }

    pub fn buckets(&self) -> impl Iterator<Item = &[PointId]> {
        self.buckets.values().map(Vec::as_slice)
    }
}

/// Work counters of one table-sequence query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryStats {
    pub tables_queried: usize,
    pub distance_computations: usize,
    pub hash_evaluations: usize,
    pub empty_bucket_fallbacks: usize,
}

impl QueryStats {
    pub fn work_units(&self) -> usize {
        self.distance_computations + self.hash_evaluations
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableQueryResult {
    pub point: PointId,
    /// False when the search ran out of tables or rounds before confirming.
    pub confirmed: bool,
    pub stats: QueryStats,
}

#[derive(Debug)]
pub struct TableSequence {
    dataset: Arc<Dataset>,
    family: LshFamily,
    k_cat: usize,
    seed: RngSeed,
    tables: Vec<OnceLock<HashTable>>,
}

impl TableSequence {
    pub fn new(dataset: Arc<Dataset>, family: LshFamily, k_cat: usize, l_max: usize, seed: RngSeed) -> Result<Self> {
        if !(1..=MAX_LEVELS).contains(&k_cat) {
            return Err(Error::input(format!("K_cat must be in 1..={MAX_LEVELS}")));
        }
        if l_max == 0 {
            return Err(Error::input("L_max must be at least 1"));
        }
        if family.dim() != dataset.dim() || family.metric() != dataset.metric() {
            return Err(Error::input("family does not match the dataset"));
        }
        Ok(TableSequence {
            dataset,
            family,
            k_cat,
            seed,
            tables: (0..l_max).map(|_| OnceLock::new()).collect(),
        })
    }

    /// Builds with the default concatenation width, see [`default_k_cat`].
    pub fn with_default_width(dataset: Arc<Dataset>, family: LshFamily, l_max: usize, seed: RngSeed) -> Result<Self> {
        let k = default_k_cat(&dataset, &family, &seed.derive("k-cat", 0));
        Self::new(dataset, family, k, l_max, seed)
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn family(&self) -> &LshFamily {
        &self.family
    }

    pub fn k_cat(&self) -> usize {
        self.k_cat
    }

    pub fn l_max(&self) -> usize {
        self.tables.len()
    }

    pub fn built_tables(&self) -> usize {
        self.tables.iter().filter(|t| t.get().is_some()).count()
    }

    /// Table `i` (0-based), materialized on first use.
    pub fn table(&self, i: usize) -> Result<&HashTable> {
        let slot = self.tables.get(i).ok_or(Error::SequenceExhausted {
            index: i,
            max: self.tables.len(),
        })?;
        Ok(slot.get_or_init(|| HashTable::build(&self.dataset, &self.family, self.k_cat, &self.seed, i)))
    }

    /// One draw from the sampling distribution using table `i`.
    pub fn sample_qq<R: Rng + ?Sized>(
        &self,
        order: &QueryOrder<'_>,
        i: usize,
        rng: &mut R,
        stats: &mut QueryStats,
    ) -> Result<PointId> {
        let table = self.table(i)?;
        stats.tables_queried += 1;
        stats.hash_evaluations += self.k_cat;
        let bucket = table.bucket(table.key(order.query()));
        Ok(self.bucket_min(order, bucket, rng, stats))
    }

    fn bucket_min<R: Rng + ?Sized>(
        &self,
        order: &QueryOrder<'_>,
        bucket: &[PointId],
        rng: &mut R,
        stats: &mut QueryStats,
    ) -> PointId {
        if bucket.is_empty() {
            stats.empty_bucket_fallbacks += 1;
            stats.distance_computations += 1;
            return PointId::from(rng.random_range(0..self.dataset.len()));
        }
        stats.distance_computations += bucket.len();
        bucket
            .iter()
            .map(|&id| order.key(id))
            .min()
            .expect("nonempty bucket")
            .id
    }

    /// Exact nearest-neighbor search with failure probability `delta`:
    /// confirmation sampling with `t = ⌈log2(1/δ)⌉` over tables `0, 1, 2, …`.
    pub fn query_nn<R: Rng + ?Sized>(&self, q: PointRef<'_>, delta: f64, rng: &mut R) -> Result<TableQueryResult> {
        let t = confirmations_for(delta)?;
        let order = QueryOrder::new(&self.dataset, q)?;
        let mut stats = QueryStats::default();
        let mut state = ConfirmationState::new(t)?;
        let cmp = |a: &OrderKey, b: &OrderKey| a.cmp(b);
        for i in 0..self.l_max() {
            let x = self.sample_qq(&order, i, rng, &mut stats)?;
            if state.observe(order.key(x), cmp) {
                break;
            }
        }
        Ok(TableQueryResult {
            point: state.best().expect("at least one table").id,
            confirmed: state.is_confirmed(),
            stats,
        })
    }

    /// Fixed-`L` variant: for rounds `r = 1 … ⌈log2 n⌉`, confirmation sampling
    /// over tables `0..l` where each table may inspect at most `2^r`
    /// candidates. A bucket over the cap behaves like an empty bucket.
    /// Returns the first confirmed result.
    pub fn query_nn_budgeted<R: Rng + ?Sized>(
        &self,
        q: PointRef<'_>,
        delta: f64,
        l: usize,
        rng: &mut R,
    ) -> Result<(TableQueryResult, Vec<RoundStats>)> {
        let t = confirmations_for(delta)?;
        if l == 0 || l > self.l_max() {
            return Err(Error::input(format!("L = {l} must be in 1..={}", self.l_max())));
        }
        let order = QueryOrder::new(&self.dataset, q)?;
        let mut stats = QueryStats::default();
        let mut keys: Vec<Option<u64>> = vec![None; l];
        let rounds = ceil_log2(self.dataset.len()).max(1);
        let mut best: Option<OrderKey> = None;
        let mut trace = Vec::new();
        let cmp = |a: &OrderKey, b: &OrderKey| a.cmp(b);
        for r in 1..=rounds {
            let cap = 1usize << r.min(62);
            let before = stats.distance_computations;
            let mut state = ConfirmationState::new(t)?;
            for (i, key) in keys.iter_mut().enumerate() {
                let table = self.table(i)?;
                let key = *key.get_or_insert_with(|| {
                    stats.hash_evaluations += self.k_cat;
                    table.key(q)
                });
                stats.tables_queried += 1;
                let bucket = table.bucket(key);
                let bucket = if bucket.len() > cap { &[][..] } else { bucket };
                let x = order.key(self.bucket_min(&order, bucket, rng, &mut stats));
                best = Some(best.map_or(x, |b| b.min(x)));
                if state.observe(x, cmp) {
                    break;
                }
            }
            trace.push(RoundStats {
                round: r,
                cap,
                work: stats.distance_computations - before,
                confirmed: state.is_confirmed(),
            });
            if let CsOutcome::Confirmed(res) = state.outcome() {
                return Ok((
                    TableQueryResult {
                        point: res.element.id,
                        confirmed: true,
                        stats,
                    },
                    trace,
                ));
            }
        }
        Ok((
            TableQueryResult {
                point: best.expect("at least one table").id,
                confirmed: false,
                stats,
            },
            trace,
        ))
    }
}

/// Candidate work spent in one round of [`TableSequence::query_nn_budgeted`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoundStats {
    pub round: usize,
    pub cap: usize,
    pub work: usize,
    pub confirmed: bool,
}

/// `t = ⌈log2(1/δ)⌉`, at least 1.
pub fn confirmations_for(delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::input(format!("failure probability {delta} must lie in (0, 1)")));
    }
    // Tolerate representation error for exact powers of two.
    let t = ((1.0 / delta).log2() - 1e-9).ceil();
    Ok((t as usize).max(1))
}

pub(crate) fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

/// Smallest width `k` whose expected bucket size, estimated from sampled
/// data-to-data distances, is at most one.
pub fn default_k_cat(dataset: &Dataset, family: &LshFamily, seed: &RngSeed) -> usize {
    let n = dataset.len();
    if n <= 1 {
        return 1;
    }
    let mut rng = seed.rng();
    let pairs = 512.min(n * (n - 1));
    let probs: Vec<f64> = (0..pairs)
        .map(|_| {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            let d = dataset.distance_to(PointId::from(a), dataset.point(PointId::from(b)));
            family.collision_probability_unchecked(d)
        })
        .collect();
    (1..=MAX_LEVELS)
        .find(|&k| {
            let mean = probs.iter().map(|p| p.powi(k as i32)).sum::<f64>() / probs.len() as f64;
            n as f64 * mean <= 1.0
        })
        .unwrap_or(MAX_LEVELS)
}
