//! Statistical acceptance checks.
//!
//! Each criterion is a function returning a [`CriterionReport`] made of
//! [`Check`]s, every check carrying the measured value, the tolerance it was
//! held to and a verdict. The checks are grouped into named [`Suite`]s for
//! the `verify` subcommand. All randomness flows from one master seed, so a
//! report is reproducible bit for bit.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::Exp1;

use crate::adaptive::ForestEnsemble;
use crate::confirm::{exact_output_distribution, failure_bound, DiscreteDistribution};
use crate::data::{generate, read_bvecs, read_fvecs, write_bvecs, write_fvecs, GeneratorKind, Instance, InstanceSpec};
use crate::error::{Error, Result};
use crate::experiment::{Algorithm, ExperimentConfig, Prepared, Row};
use crate::family::{concat_hash, FamilyKind, LshFamily};
use crate::forest::{build_forest, expected_collisions, Forest};
use crate::oracle::{brute_force_nn, natural_algorithm, qq_empirical, qq_exact_bit_sampling, simulate_cs, static_level};
use crate::tables::{default_k_cat, TableSequence};
use crate::types::{BitVector, Dataset, Metric, Point, PointId, RngSeed};

/// One assertion with its evidence.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub label: String,
    pub measured: String,
    pub expected: String,
    pub pass: bool,
}

impl Check {
    pub fn new(label: impl Into<String>, measured: impl Into<String>, expected: impl Into<String>, pass: bool) -> Self {
        Check {
            label: label.into(),
            measured: measured.into(),
            expected: expected.into(),
            pass,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: measured {}; expected {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.label,
            self.measured,
            self.expected
        )
    }
}

#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub id: usize,
    pub title: &'static str,
    pub checks: Vec<Check>,
}

impl CriterionReport {
    fn new(id: usize, title: &'static str) -> Self {
        CriterionReport {
            id,
            title,
            checks: Vec::new(),
        }
    }

    fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    /// The one-line verdict.
    pub fn headline(&self) -> String {
        let failed = self.checks.iter().filter(|c| !c.pass).count();
        format!(
            "{} criterion {:>2} {} ({} checks, {} failed)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.checks.len(),
            failed
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    CsExact,
    CsBounds,
    QqDominance,
    ForestStructure,
    AdaptiveRecall,
    AdaptiveVsOpt,
    Formats,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::CsExact,
        Suite::CsBounds,
        Suite::QqDominance,
        Suite::ForestStructure,
        Suite::AdaptiveRecall,
        Suite::AdaptiveVsOpt,
        Suite::Formats,
    ];

    pub fn criteria(self) -> &'static [usize] {
        match self {
            Suite::CsExact => &[1],
            Suite::CsBounds => &[2, 3, 4],
            Suite::QqDominance => &[5, 6],
            Suite::ForestStructure => &[7],
            Suite::AdaptiveRecall => &[8, 9],
            Suite::AdaptiveVsOpt => &[10],
            Suite::Formats => &[11],
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}")))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::CsExact => "cs-exact",
            Suite::CsBounds => "cs-bounds",
            Suite::QqDominance => "qq-dominance",
            Suite::ForestStructure => "forest-structure",
            Suite::AdaptiveRecall => "adaptive-recall",
            Suite::AdaptiveVsOpt => "adaptive-vs-opt",
            Suite::Formats => "formats",
        })
    }
}

/// Runs the criteria of `suites` in order, sharing the adaptive grid.
/// `on_report` sees each criterion as soon as it finishes.
pub fn run_suites(suites: &[Suite], seed: u64, mut on_report: impl FnMut(&CriterionReport)) -> Result<Vec<CriterionReport>> {
    let mut ids: Vec<usize> = suites.iter().flat_map(|s| s.criteria().iter().copied()).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut grid: Option<AdaptiveGrid> = None;
    let mut out = Vec::new();
    for id in ids {
        let report = match id {
            8..=10 => {
                if grid.is_none() {
                    grid = Some(AdaptiveGrid::compute(seed)?);
                }
                let g = grid.as_ref().expect("just computed");
                match id {
                    8 => criterion_8(g),
                    9 => criterion_9(g)?,
                    _ => criterion_10(g),
                }
            }
            _ => criterion(id, seed)?,
        };
        on_report(&report);
        out.push(report);
    }
    Ok(out)
}

/// Runs one criterion other than the grid-based 8 to 10 on its own.
pub fn criterion(id: usize, seed: u64) -> Result<CriterionReport> {
    let root = RngSeed::new(seed);
    match id {
        1 => criterion_1(&root.derive("criterion", 1)),
        2 => criterion_2(),
        3 => criterion_3(),
        4 => criterion_4(&root.derive("criterion", 4)),
        5 => criterion_5(&root.derive("criterion", 5)),
        6 => criterion_6(&root.derive("criterion", 6)),
        7 => criterion_7(&root.derive("criterion", 7)),
        8 => Ok(criterion_8(&AdaptiveGrid::compute(seed)?)),
        9 => criterion_9(&AdaptiveGrid::compute(seed)?),
        10 => Ok(criterion_10(&AdaptiveGrid::compute(seed)?)),
        11 => criterion_11(&root.derive("criterion", 11)),
        _ => Err(Error::Config(format!("no criterion {id}"))),
    }
}

fn binomial_sigma(p: f64, n: f64) -> f64 {
    (p * (1.0 - p) / n).sqrt()
}

/// All ordered ways to split `total` into `parts` positive integers.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn go(total: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 1..=total.saturating_sub(parts - 1) {
            prefix.push(first);
            go(total - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts >= 1 && total >= parts {
        go(total, parts, &mut Vec::new(), &mut out);
    }
    out
}

/// Distributions with at most six outcomes whose probabilities are positive
/// multiples of 0.05, in every order.
pub fn grid_distributions() -> Vec<DiscreteDistribution> {
    (1..=6)
        .flat_map(|k| compositions(20, k))
        .map(|parts| {
            DiscreteDistribution::new(parts.iter().map(|&c| c as f64 / 20.0).collect()).expect("grid probabilities sum to one")
        })
        .collect()
}

fn criterion_1(seed: &RngSeed) -> Result<CriterionReport> {
    let mut rep = CriterionReport::new(1, "exact output distribution matches simulation");
    let runs = 1_000_000u64;
    let mut dists = vec![DiscreteDistribution::new(vec![0.5, 0.5])?];
    let mut rng = seed.derive("distributions", 0).rng();
    for _ in 0..20 {
        let n = rng.random_range(2..=8);
        let weights: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        dists.push(DiscreteDistribution::from_weights(&weights)?);
    }
    for (d, dist) in dists.iter().enumerate() {
        let ts: &[usize] = if d == 0 { &[1] } else { &[1, 2, 3] };
        for &t in ts {
            let exact = exact_output_distribution(dist, t as u32)?;
            let sim = simulate_cs(dist, t, runs, &seed.derive("sim", d as u64).derive("t", t as u64))?;
            let freq = sim.frequencies();
            let mut worst = 0.0f64;
            for (&p, &f) in exact.iter().zip(&freq) {
                let sigma = binomial_sigma(p, runs as f64);
                let z = if sigma > 0.0 { (f - p).abs() / sigma } else if f == p { 0.0 } else { f64::INFINITY };
                worst = worst.max(z);
            }
            let label = if d == 0 {
                "p = (0.5, 0.5), t = 1".to_string()
            } else {
                format!("distribution {d} (n = {}), t = {t}", dist.len())
            };
            rep.push(Check::new(label, format!("max |z| = {worst:.2}"), "every component within 3 sigma", worst <= 3.0));
        }
    }
    Ok(rep)
}

fn criterion_2() -> Result<CriterionReport> {
    let mut rep = CriterionReport::new(2, "failure bound dominates, tight on two points");
    let grid = grid_distributions();
    for t in 1..=4u32 {
        let mut worst_excess = f64::NEG_INFINITY;
        let mut worst_two_point = 0.0f64;
        for dist in &grid {
            let rho = exact_output_distribution(dist, t)?;
            let failure = 1.0 - rho[0];
            let bound = failure_bound(dist.p1(), dist.p2(), t)?;
            worst_excess = worst_excess.max(failure - bound);
            if dist.len() == 2 {
                worst_two_point = worst_two_point.max((failure - bound).abs());
            }
        }
        rep.push(Check::new(
            format!("t = {t}, {} grid distributions", grid.len()),
            format!("max (1 - rho_1) - bound = {worst_excess:.3e}"),
            "<= 1e-12",
            worst_excess <= 1e-12,
        ));
        rep.push(Check::new(
            format!("t = {t}, two-point distributions"),
            format!("max |(1 - rho_1) - bound| = {worst_two_point:.3e}"),
            "<= 1e-12",
            worst_two_point <= 1e-12,
        ));
    }
    Ok(rep)
}

fn criterion_3() -> Result<CriterionReport> {
    let mut rep = CriterionReport::new(3, "bound is within a factor two on uniform distributions");
    for t in 1..=8u32 {
        let (mut lo, mut hi, mut worst_t1) = (f64::INFINITY, 0.0f64, 0.0f64);
        for n in 2..=64 {
            let dist = DiscreteDistribution::uniform(n)?;
            let rho = exact_output_distribution(&dist, t)?;
            let ratio = failure_bound(dist.p1(), dist.p2(), t)? / (1.0 - rho[0]);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            worst_t1 = worst_t1.max((ratio - 1.0).abs());
        }
        rep.push(Check::new(
            format!("t = {t}, n = 2..64"),
            format!("ratio in [{lo:.12}, {hi:.12}]"),
            "within [1, 2 + 1e-9]",
            lo >= 1.0 - 1e-12 && hi <= 2.0 + 1e-9,
        ));
        if t == 1 {
            rep.push(Check::new(
                "t = 1 ratio is one",
                format!("max |ratio - 1| = {worst_t1:.3e}"),
                "<= 1e-12",
                worst_t1 <= 1e-12,
            ));
        }
    }
    Ok(rep)
}

fn criterion_4(seed: &RngSeed) -> Result<CriterionReport> {
    let mut rep = CriterionReport::new(4, "mean sample count within (t + 1) / p1");
    let grid = grid_distributions();
    let runs = 100_000u64;
    for t in 1..=4usize {
        let mut violations = 0usize;
        let mut worst = f64::NEG_INFINITY;
        for (d, dist) in grid.iter().enumerate() {
            let sim = simulate_cs(dist, t, runs, &seed.derive("t", t as u64).derive("dist", d as u64))?;
            let bound = (t + 1) as f64 / dist.p1();
            let excess = sim.mean_samples - bound;
            let z = if sim.se_samples > 0.0 {
                excess / sim.se_samples
            } else if excess <= 0.0 {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
            if z > 3.0 {
                violations += 1;
            }
        }
        rep.push(Check::new(
            format!("t = {t}, {} grid distributions, {runs} runs each", grid.len()),
            format!("{violations} above bound + 3 SE, max (mean - bound) / SE = {worst:.2}"),
            "none above bound + 3 SE",
            violations == 0,
        ));
    }
    Ok(rep)
}

fn random_bits(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<BitVector> {
    (0..n)
        .map(|_| BitVector::from_bools(&(0..dim).map(|_| rng.random::<bool>()).collect::<Vec<_>>()))
        .collect()
}

fn random_unit_rows(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| (x / norm) as f32).collect()
        })
        .collect()
}

fn criterion_5(seed: &RngSeed) -> Result<CriterionReport> {
    let mut rep = CriterionReport::new(5, "nearest neighbor is the most likely bucket minimum");
    let mut rng = seed.derive("instances", 0).rng();
    for inst in 0..10 {
        let dim = rng.random_range(4..=16);
        let n = rng.random_range(2..=32);
        let points = random_bits(&mut rng, n + 1, dim);
        let q = points[n].clone();
        let data = Dataset::from_bits(points[..n].to_vec())?;
        let family = LshFamily::bit_sampling(dim);
        let nn = brute_force_nn(&data, q.as_point())?;
        for k_cat in 1..=3 {
            let probs = qq_exact_bit_sampling(&data, &family, q.as_point(), k_cat)?;
            let p1 = probs[nn.index()];
            let gap = probs
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != nn.index())
                .map(|(_, &p)| p1 - p)
                .fold(f64::INFINITY, f64::min);
            rep.push(Check::new(
                format!("bit sampling instance {inst} (dim {dim}, n {n}), K_cat = {k_cat}"),
                format!("min Pr[x1] - Pr[x] = {gap:.3e}"),
                ">= -1e-12",
                gap >= -1e-12 || n == 1,
            ));
        }
    }
    let draws = 100_000usize;
    for inst in 0..3 {
        let (n, dim) = (32, 16);
        let mut rng = seed.derive("angular", inst).rng();
        let mut rows = random_unit_rows(&mut rng, n + 1, dim);
        let q = rows.pop().expect("n + 1 rows");
        let data = Dataset::from_rows(Metric::Angular, rows)?;
        let family = LshFamily::sign_random_projection(dim);
        let q = Point::Dense(q);
        let nn = brute_force_nn(&data, q.as_ref())?;
        for k_cat in 1..=3 {
            let counts = qq_empirical(&data, &family, q.as_ref(), k_cat, draws, &seed.derive("draws", inst).derive("k", k_cat as u64))?;
            let f1 = counts[nn.index()] as f64 / draws as f64;
            let mut worst = f64::NEG_INFINITY;
            for (i, &c) in counts.iter().enumerate() {
                if i == nn.index() {
                    continue;
                }
                let f = c as f64 / draws as f64;
                let sd = ((f1 + f - (f1 - f).powi(2)) / draws as f64).sqrt();
                let z = if sd > 0.0 { (f - f1) / sd } else { 0.0 };
                worst = worst.max(z);
            }
            rep.push(Check::new(
                format!("sign projection instance {inst}, K_cat = {k_cat}, {draws} tables"),
                format!("max (freq(x) - freq(x1)) / sd = {worst:.2}"),
                "<= 3",
                worst <= 3.0,
            ));
        }
    }
    Ok(rep)
}

fn criterion_6(seed: &RngSeed) -> Result<CriterionReport> {
    let mut rep = CriterionReport::new(6, "table sequence recall and table count");
    let queries = 10_000;
    let spec = InstanceSpec::planted_nn(1000, 64, 1, 8, queries, seed.derive("instance", 0).key());
    let inst = generate(&spec)?;
    let data = inst.dataset.clone();
    let family = LshFamily::bit_sampling(spec.dim);
    let k_cat = default_k_cat(&data, &family, &seed.derive("k-cat", 0));
    let p1 = family.collision_probability(spec.planted as f64)?.powi(k_cat as i32);
    for t in [1u32, 3, 5] {
        let delta = 0.5f64.powi(t as i32);
        let mut correct = 0usize;
        let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
        for (qi, q) in inst.queries.iter().enumerate() {
            let qseed = seed.derive("t", t as u64).derive("query", qi as u64);
            let seq = TableSequence::new(data.clone(), family, k_cat, 4096, qseed.clone())?;
            let res = seq.query_nn(q.as_ref(), delta, &mut qseed.derive("fallback", 0).rng())?;
            correct += usize::from(res.point == inst.truth[qi]);
            let tables = res.stats.tables_queried as f64;
            sum += tables;
            sum_sq += tables * tables;
        }
        let nq = queries as f64;
        let recall = correct as f64 / nq;
        let target = 1.0 - delta;
        let floor = target - 3.0 * binomial_sigma(target, nq);
        rep.push(Check::new(
            format!("t = {t}, recall over {queries} queries"),
            format!("{recall:.4}"),
            format!(">= {floor:.4}"),
            recall >= floor,
        ));
        let mean = sum / nq;
        let se = ((sum_sq - nq * mean * mean) / (nq - 1.0)).max(0.0).sqrt() / nq.sqrt();
        let bound = f64::from(t + 1) / p1;
        rep.push(Check::new(
            format!("t = {t}, mean tables queried (K_cat = {k_cat}, p1 = {p1:.4})"),
            format!("{mean:.3} (SE {se:.3})"),
            format!("<= {:.3}", bound + 3.0 * se),
            mean <= bound + 3.0 * se,
        ));
    }
    Ok(rep)
}

/// Points sharing the first `i` hash levels with `q`, by direct comparison
/// of full hash strings.
fn naive_bucket(forest: &Forest, j: usize, i: usize, q: &Point) -> Result<Vec<PointId>> {
    let members = forest.tree(j).members();
    let hq = concat_hash(members, q.as_ref())?;
    let data = forest.dataset();
    let mut out = Vec::new();
    for id in data.ids() {
        if concat_hash(members, data.point(id))?.shares_prefix(&hq, i) {
            out.push(id);
        }
    }
    Ok(out)
}

fn criterion_7(seed: &RngSeed) -> Result<CriterionReport> {
    let mut rep = CriterionReport::new(7, "forest buckets match the prefix definition");
    let mut rng = seed.derive("instances", 0).rng();
    for inst in 0..10 {
        let n = rng.random_range(1..=64);
        let angular = inst % 2 == 1;
        let dim = if angular { rng.random_range(2..=12) } else { rng.random_range(4..=24) };
        let (data, family, queries) = if angular {
            let rows = random_unit_rows(&mut rng, n + 8, dim);
            let queries: Vec<Point> = rows[n..].iter().cloned().map(Point::Dense).collect();
            let data = Dataset::from_rows(Metric::Angular, rows[..n].to_vec())?;
            (data, LshFamily::sign_random_projection(dim), queries)
        } else {
            let pts = random_bits(&mut rng, n + 8, dim);
            let queries: Vec<Point> = pts[n..].iter().cloned().map(Point::Bits).collect();
            (Dataset::from_bits(pts[..n].to_vec())?, LshFamily::bit_sampling(dim), queries)
        };
        let data = Arc::new(data);
        // Data points double as queries so that exact matches are covered.
        let mut all: Vec<Point> = data.to_points();
        all.extend(queries);
        let k = 12;
        let forest = build_forest(data.clone(), family, k, 4, seed.derive("forest", inst))?;
        let (mut compared, mut mismatches, mut count_mismatches) = (0usize, 0usize, 0usize);
        for q in &all {
            for j in 0..forest.len() {
                for i in 0..=k {
                    let mut got: Vec<PointId> = forest.bucket(j, i, q.as_ref())?.collect();
                    got.sort_unstable();
                    compared += 1;
                    mismatches += usize::from(got != naive_bucket(&forest, j, i, q)?);
                    count_mismatches += usize::from(forest.collision_count(j, i, q.as_ref())? != got.len());
                }
            }
        }
        rep.push(Check::new(
            format!("instance {inst} ({}, n {n}, dim {dim}), {compared} (q, tree, level) cases", family.kind()),
            format!("{mismatches} bucket and {count_mismatches} count mismatches"),
            "0 and 0",
            mismatches == 0 && count_mismatches == 0 && forest.trees().iter().all(|t| t.counts_are_consistent()),
        ));
    }
    let trees = 10_000;
    for kind in [FamilyKind::BitSampling, FamilyKind::SignRandomProjection] {
        let mut rng = seed.derive("expectation", kind as u64).rng();
        let (n, dim) = (48, 16);
        let (data, family, q) = match kind {
            FamilyKind::BitSampling => {
                let pts = random_bits(&mut rng, n + 1, dim);
                (Dataset::from_bits(pts[..n].to_vec())?, LshFamily::bit_sampling(dim), Point::Bits(pts[n].clone()))
            }
            FamilyKind::SignRandomProjection => {
                let mut rows = random_unit_rows(&mut rng, n + 1, dim);
                let q = rows.pop().expect("n + 1 rows");
                (Dataset::from_rows(Metric::Angular, rows)?, LshFamily::sign_random_projection(dim), Point::Dense(q))
            }
        };
        let data = Arc::new(data);
        let forest = build_forest(data.clone(), family, 8, trees, seed.derive("big-forest", kind as u64))?;
        for i in [1, 2, 4, 8] {
            let counts: Vec<f64> = (0..trees)
                .map(|j| forest.collision_count(j, i, q.as_ref()).map(|c| c as f64))
                .collect::<Result<_>>()?;
            let mean = counts.iter().sum::<f64>() / trees as f64;
            let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (trees - 1) as f64;
            let se = (var / trees as f64).sqrt();
            let expected = expected_collisions(&data, &family, q.as_ref(), i)?;
            rep.push(Check::new(
                format!("{kind} expected collisions at level {i} over {trees} trees"),
                format!("mean {mean:.3} (SE {se:.3})"),
                format!("{expected:.3} within 3 SE"),
                (mean - expected).abs() <= 3.0 * se,
            ));
        }
    }
    Ok(rep)
}

/// Adaptive runs over every instance kind and size, shared by the recall,
/// separation and work criteria.
pub struct AdaptiveGrid {
    pub cells: Vec<GridCell>,
}

pub struct GridCell {
    pub kind: GeneratorKind,
    pub prepared: Prepared,
    pub rows: Vec<Row>,
}

pub const GRID_KINDS: [GeneratorKind; 4] = [
    GeneratorKind::PlantedNn,
    GeneratorKind::DenseCluster,
    GeneratorKind::DistanceZero,
    GeneratorKind::UniformHamming,
];
pub const GRID_SIZES: [usize; 3] = [256, 1024, 4096];

impl AdaptiveGrid {
    pub fn compute(seed: u64) -> Result<Self> {
        let root = RngSeed::new(seed).derive("criterion", 8);
        let mut cells = Vec::new();
        for (ki, &kind) in GRID_KINDS.iter().enumerate() {
            for &n in &GRID_SIZES {
                let inst_seed = root.derive("instance", ki as u64).derive("n", n as u64).key();
                let mut config = ExperimentConfig {
                    instance: InstanceSpec::default_for(kind, n, 1000, inst_seed),
                    algorithm: Algorithm::ForestAdaptive,
                    seed: root.derive("structure", ki as u64).derive("n", n as u64).key(),
                    ..ExperimentConfig::default()
                };
                config.threads = 1;
                let prepared = Prepared::new(&config)?;
                let rows = prepared.run()?.rows;
                cells.push(GridCell { kind, prepared, rows });
            }
        }
        Ok(AdaptiveGrid { cells })
    }
}

fn recall(rows: &[Row]) -> f64 {
    rows.iter().filter(|r| r.correct).count() as f64 / rows.len() as f64
}

fn recall_check(cell: &GridCell) -> Check {
    let n = cell.prepared.resolved.n as f64;
    let nq = cell.rows.len() as f64;
    let target = 1.0 - 1.0 / n;
    let floor = target - 3.0 * binomial_sigma(target, nq);
    let r = recall(&cell.rows);
    Check::new(
        format!("adaptive recall on {} n = {} ({} queries)", cell.kind, n, cell.rows.len()),
        format!("{r:.4}"),
        format!(">= {floor:.4}"),
        r >= floor,
    )
}

fn criterion_8(grid: &AdaptiveGrid) -> CriterionReport {
    let mut rep = CriterionReport::new(8, "adaptive recall on every instance");
    for cell in &grid.cells {
        rep.push(recall_check(cell));
    }
    rep
}

/// The fixed-level baseline: each query uses one forest of the ensemble,
/// rotating through them, at the smallest level whose collisions over the
/// forest's trees total at most `c` per tree.
pub fn natural_baseline(ensemble: &ForestEnsemble, instance: &Instance, c: f64) -> Result<f64> {
    let mut correct = 0usize;
    for (qi, q) in instance.queries.iter().enumerate() {
        let forest = &ensemble.forests()[qi % ensemble.forest_count()];
        let level = static_level(forest, q.as_ref(), c, forest.len())?;
        let res = natural_algorithm(forest, q.as_ref(), level, forest.len())?;
        correct += usize::from(res.point == Some(instance.truth[qi]));
    }
    Ok(correct as f64 / instance.queries.len() as f64)
}

fn criterion_9(grid: &AdaptiveGrid) -> Result<CriterionReport> {
    let mut rep = CriterionReport::new(9, "adaptive search beats the fixed level on dense clusters");
    for cell in grid.cells.iter().filter(|c| c.kind == GeneratorKind::DenseCluster) {
        let ens = cell.prepared.ensemble(0).expect("adaptive cells hold an ensemble");
        let c = cell.prepared.config.natural_c;
        let r = natural_baseline(ens, &cell.prepared.instance, c)?;
        rep.push(Check::new(
            format!("fixed-level recall on {} n = {} (c = {c})", cell.kind, cell.prepared.resolved.n),
            format!("{r:.4}"),
            "< 0.1",
            r < 0.1,
        ));
        rep.push(recall_check(cell));
    }
    Ok(rep)
}

/// Least-squares slope of `y` on `x` with its standard error.
pub fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = (rss / (n - 2.0) / sxx).sqrt();
    (slope, se)
}

fn criterion_10(grid: &AdaptiveGrid) -> CriterionReport {
    let mut rep = CriterionReport::new(10, "adaptive work tracks the optimal level");
    let mut c_work = 0.0f64;
    let mut missing = 0usize;
    for cell in &grid.cells {
        let ratios: Vec<f64> = cell
            .rows
            .iter()
            .filter_map(|r| r.opt.map(|o| r.work_units as f64 / o))
            .collect();
        missing += cell.rows.len() - ratios.len();
        let mean = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
        let max = ratios.iter().copied().fold(0.0, f64::max);
        c_work = c_work.max(max);
        rep.push(Check::new(
            format!("work / OPT on {} n = {}", cell.kind, cell.prepared.resolved.n),
            format!("mean {mean:.1}, max {max:.1}"),
            "finite OPT for every query",
            ratios.len() == cell.rows.len() && max.is_finite(),
        ));
    }
    rep.push(Check::new(
        "fitted c_work over the whole grid",
        format!("{c_work:.1}"),
        "one finite constant bounds work / OPT everywhere",
        missing == 0 && c_work.is_finite() && c_work > 0.0,
    ));
    let (mut x, mut y) = (Vec::new(), Vec::new());
    let mut means = Vec::new();
    for cell in grid.cells.iter().filter(|c| c.kind == GeneratorKind::DistanceZero) {
        let r = cell.prepared.resolved.forests as f64;
        let n = cell.prepared.resolved.n as f64;
        let per_forest: Vec<f64> = cell.rows.iter().map(|row| row.work_units as f64 / r).collect();
        means.push(format!("{}: {:.1}", n, per_forest.iter().sum::<f64>() / per_forest.len() as f64));
        x.extend(std::iter::repeat_n(n, per_forest.len()));
        y.extend(per_forest);
    }
    let (slope, se) = ols_slope(&x, &y);
    rep.push(Check::new(
        format!("distance-zero work per forest against n (means {})", means.join(", ")),
        format!("slope {slope:.4} (SE {se:.4})"),
        "|slope| <= 3 SE",
        slope.abs() <= 3.0 * se,
    ));
    rep
}

fn criterion_11(seed: &RngSeed) -> Result<CriterionReport> {
    let mut rep = CriterionReport::new(11, "determinism and file formats");
    for alg in [
        Algorithm::TableCs,
        Algorithm::BudgetedCs,
        Algorithm::ForestAdaptive,
        Algorithm::Natural,
        Algorithm::Brute,
    ] {
        let mut config = ExperimentConfig {
            instance: InstanceSpec::default_for(GeneratorKind::PlantedNn, 300, 40, seed.derive("instance", 0).key()),
            algorithm: alg,
            seed: seed.derive("structure", 0).key(),
            ..ExperimentConfig::default()
        };
        config.l_max = 256;
        let a = Prepared::new(&config)?.run()?.to_jsonl();
        let b = Prepared::new(&config)?.run()?.to_jsonl();
        let mut threaded = config.clone();
        threaded.threads = 3;
        let c = Prepared::new(&threaded)?.run()?;
        let same_rows = c.rows == Prepared::new(&config)?.run()?.rows;
        rep.push(Check::new(
            format!("{alg} report reproduces"),
            format!("{} bytes, identical {}, rows equal across thread counts {same_rows}", a.len(), a == b),
            "byte-identical",
            a == b && same_rows,
        ));
    }

    let mut rng = seed.derive("fvecs", 0).rng();
    let (rows, dim) = (37, 11);
    // Any bit pattern except NaNs, which do not compare equal to themselves.
    let values: Vec<f32> = (0..rows * dim)
        .map(|_| loop {
            let v = f32::from_bits(rng.random());
            if !v.is_nan() {
                break v;
            }
        })
        .collect();
    let data = Dataset::from_dense(Metric::Euclidean, dim, values.clone())?;
    let mut buf = Vec::new();
    write_fvecs(&mut buf, &data)?;
    let (d2, back) = read_fvecs(buf.as_slice())?;
    let exact = d2 == dim && back.iter().map(|v| v.to_bits()).eq(values.iter().map(|v| v.to_bits()));
    rep.push(Check::new("fvecs round trip", format!("{} values, bit-exact {exact}", values.len()), "bit-exact", exact));

    let bits = Dataset::from_bits(random_bits(&mut rng, 29, 70))?;
    let mut buf = Vec::new();
    write_bvecs(&mut buf, &bits)?;
    let (d2, bytes) = read_bvecs(buf.as_slice())?;
    let restored = Dataset::from_bits(bytes.chunks(d2).map(|r| BitVector::from_bools(&r.iter().map(|&b| b == 1).collect::<Vec<_>>())).collect())?;
    rep.push(Check::new("bvecs round trip", format!("{} points, equal {}", bits.len(), restored == bits), "bit-exact", restored == bits));

    let inst = generate(&InstanceSpec::default_for(GeneratorKind::PlantedNn, 200, 30, seed.derive("instance", 1).key()))?;
    let family = LshFamily::bit_sampling(inst.dataset.dim());
    let forest = build_forest(inst.dataset.clone(), family, 24, 6, seed.derive("forest", 0))?;
    let bytes = forest.to_bytes();
    let again = build_forest(inst.dataset.clone(), family, 24, 6, seed.derive("forest", 0))?.to_bytes();
    let loaded = Forest::read_from(&mut bytes.as_slice(), inst.dataset.clone())?;
    let mut same = loaded.to_bytes() == bytes;
    for q in &inst.queries {
        for j in 0..forest.len() {
            for i in 0..=forest.depth() {
                same &= forest.bucket(j, i, q.as_ref())?.eq(loaded.bucket(j, i, q.as_ref())?);
            }
        }
    }
    rep.push(Check::new(
        "forest reload",
        format!("{} bytes, rebuilt identical {}, buckets identical {same}", bytes.len(), bytes == again),
        "identical bytes and buckets",
        same && bytes == again,
    ));

    let ens = ForestEnsemble::build(inst.dataset.clone(), family, 24, 8, 12, seed.derive("ensemble", 0))?;
    let loaded = ForestEnsemble::read_from(&mut ens.to_bytes().as_slice(), inst.dataset.clone())?;
    let params = crate::adaptive::AdaptiveParams::default();
    let mut same = true;
    for (qi, q) in inst.queries.iter().enumerate() {
        let s = seed.derive("query", qi as u64);
        same &= ens.query(q.as_ref(), &params, &s)? == loaded.query(q.as_ref(), &params, &s)?;
    }
    rep.push(Check::new(
        "ensemble reload",
        format!("{} queries, identical results {same}", inst.queries.len()),
        "identical",
        same,
    ));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_counts_match_binomials() {
        assert_eq!(compositions(20, 1).len(), 1);
        assert_eq!(compositions(20, 2).len(), 19);
        assert_eq!(compositions(20, 3).len(), 171);
        assert_eq!(grid_distributions().len(), 1 + 19 + 171 + 969 + 3876 + 11628);
        assert!(compositions(3, 4).is_empty());
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn ols_recovers_a_line() {
        let x: Vec<f64> = (0..50).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v + if (*v as i32) % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let (slope, se) = ols_slope(&x, &y);
        assert!((slope + 0.5).abs() < 1e-2 && se < 0.01);
    }

    #[test]
    fn fast_criteria_pass() {
        for id in [2, 3] {
            let rep = criterion(id, 42).unwrap();
            assert!(rep.passed(), "{:#?}", rep.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
        }
    }
}
