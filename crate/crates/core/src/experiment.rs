//! Experiment configuration, query runs and machine-readable reports.
//!
//! A config is a flat `key = value` text file (see [`ExperimentConfig::set`]
//! for the keys). A report is line-delimited JSON: one `config` record with
//! the fully resolved settings, one `row` per query and repetition, and a
//! closing `summary`. Wall time is only recorded when `timing = true`, so
//! that the default report is byte-identical across runs with one seed.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::{default_forest_count, AdaptiveParams, ForestEnsemble};
use crate::data::{generate, GeneratorKind, Instance, InstanceSpec};
use crate::error::{Error, Result};
use crate::family::{FamilyKind, LshFamily};
use crate::forest::{build_forest, Forest};
use crate::oracle::{brute_force_nn, natural_algorithm, opt_report, profile, static_level};
use crate::tables::TableSequence;
use crate::types::{Dataset, PointId, RngSeed};

/// Search strategy evaluated by an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Confirmation sampling over an unbounded table sequence.
    TableCs,
    /// Confirmation sampling over `L` tables with doubling bucket caps.
    BudgetedCs,
    /// The adaptive forest-ensemble query.
    ForestAdaptive,
    /// Scan the first `natural_trees` buckets of one forest at a fixed level
    /// (or the static collision-count level when none is given).
    Natural,
    /// Linear scan.
    Brute,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table-cs" => Ok(Algorithm::TableCs),
            "budgeted-cs" => Ok(Algorithm::BudgetedCs),
            "forest-adaptive" | "adaptive" => Ok(Algorithm::ForestAdaptive),
            "natural" => Ok(Algorithm::Natural),
            "brute" => Ok(Algorithm::Brute),
            _ => Err(Error::Config(format!("unknown algorithm {s:?}"))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::TableCs => "table-cs",
            Algorithm::BudgetedCs => "budgeted-cs",
            Algorithm::ForestAdaptive => "forest-adaptive",
            Algorithm::Natural => "natural",
            Algorithm::Brute => "brute",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    /// Load a saved instance instead of generating one.
    pub instance_dir: Option<PathBuf>,
    pub family: Option<FamilyKind>,
    pub algorithm: Algorithm,
    /// Failure probability for the table algorithms.
    pub delta: f64,
    /// Forest depth `K`; defaults to 48 for dense-cluster, 32 otherwise.
    pub k: Option<usize>,
    /// Table concatenation width; defaults to the data-driven width.
    pub k_cat: Option<usize>,
    /// Table sequence length, and `L` for the budgeted variant.
    pub l_max: usize,
    /// Trees per forest `L′` (a power of two).
    pub l_prime: usize,
    /// Forest count multiplier: `R = ⌈c_R ln n⌉`.
    pub c_r: f64,
    /// Explicit forest count overriding `c_R`.
    pub forests: Option<usize>,
    pub adaptive: AdaptiveParams,
    pub natural_level: Option<usize>,
    pub natural_trees: usize,
    /// Collisions per tree allowed by the static level rule.
    pub natural_c: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub threads: usize,
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            instance: InstanceSpec::default_for(GeneratorKind::PlantedNn, 1024, 100, 42),
            instance_dir: None,
            family: None,
            algorithm: Algorithm::ForestAdaptive,
            delta: 0.125,
            k: None,
            k_cat: None,
            l_max: 1024,
            l_prime: 8,
            c_r: 8.0,
            forests: None,
            adaptive: AdaptiveParams::default(),
            natural_level: None,
            natural_trees: 8,
            natural_c: 8.0,
            repetitions: 1,
            seed: 42,
            threads: 1,
            timing: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl ExperimentConfig {
    /// Applies one setting. Keys:
    /// `instance` (generator kind), `n`, `dim`, `queries`, `planted`,
    /// `shell`, `cluster`, `instance_seed`, `instance_dir`, `family`,
    /// `algorithm`, `delta`, `K`, `K_cat`, `L_max`, `L_prime`, `c_R`,
    /// `forests`, `t`, `cap`, `level_fraction`, `quorum`, `explore_fraction`,
    /// `natural_level`, `natural_trees`, `natural_c`, `repetitions`, `seed`,
    /// `threads`, `timing`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "instance" => {
                let kind: GeneratorKind = value.parse()?;
                self.instance = InstanceSpec {
                    seed: self.instance.seed,
                    queries: self.instance.queries,
                    ..InstanceSpec::default_for(kind, self.instance.n, self.instance.queries, self.instance.seed)
                };
            }
            "n" => self.instance.n = parse(key, value)?,
            "dim" => self.instance.dim = parse(key, value)?,
            "queries" => self.instance.queries = parse(key, value)?,
            "planted" => self.instance.planted = parse(key, value)?,
            "shell" => self.instance.shell = parse(key, value)?,
            "cluster" => self.instance.cluster = parse(key, value)?,
            "instance_seed" => self.instance.seed = parse(key, value)?,
            "instance_dir" => self.instance_dir = Some(PathBuf::from(value)),
            "family" => self.family = Some(value.parse().map_err(|_| Error::Config(format!("unknown family {value:?}")))?),
            "algorithm" => self.algorithm = value.parse()?,
            "delta" => self.delta = parse(key, value)?,
            "K" | "k" => self.k = Some(parse(key, value)?),
            "K_cat" | "k_cat" => self.k_cat = Some(parse(key, value)?),
            "L_max" | "l_max" | "L" => self.l_max = parse(key, value)?,
            "L_prime" | "l_prime" => self.l_prime = parse(key, value)?,
            "c_R" | "c_r" => self.c_r = parse(key, value)?,
            "forests" | "R" => self.forests = Some(parse(key, value)?),
            "t" => self.adaptive.t = parse(key, value)?,
            "cap" => self.adaptive.collision_cap = parse(key, value)?,
            "level_fraction" => self.adaptive.level_fraction = parse(key, value)?,
            "quorum" => self.adaptive.quorum_fraction = parse(key, value)?,
            "explore_fraction" => self.adaptive.explore_fraction = parse(key, value)?,
            "natural_level" => self.natural_level = Some(parse(key, value)?),
            "natural_trees" => self.natural_trees = parse(key, value)?,
            "natural_c" => self.natural_c = parse(key, value)?,
            "repetitions" => self.repetitions = parse(key, value)?,
            "seed" => {
                let seed: u64 = parse(key, value)?;
                if self.instance.seed == self.seed {
                    self.instance.seed = seed;
                }
                self.seed = seed;
            }
            "threads" => self.threads = parse(key, value)?,
            "timing" => self.timing = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in Self::parse_kv(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == Some(0) || self.k.is_some_and(|k| k > crate::family::MAX_LEVELS) {
            return Err(Error::Config(format!("K must be in 1..={}", crate::family::MAX_LEVELS)));
        }
        if self.k_cat == Some(0) {
            return Err(Error::Config("K_cat must be at least 1".into()));
        }
        if !self.l_prime.is_power_of_two() {
            return Err(Error::Config(format!("L_prime = {} is not a power of two", self.l_prime)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta = {} must lie in (0, 1)", self.delta)));
        }
        if self.repetitions == 0 || self.threads == 0 || self.l_max == 0 || self.natural_trees == 0 {
            return Err(Error::Config("repetitions, threads, L_max and natural_trees must be positive".into()));
        }
        self.adaptive.validate()
    }

    /// Depth `K` after defaults.
    pub fn depth(&self) -> usize {
        self.k.unwrap_or(match self.instance.kind {
            GeneratorKind::DenseCluster => 48,
            _ => 32,
        })
    }
}

/// Settings that depend on the instance, fixed before any query runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolved {
    pub n: usize,
    pub dim: usize,
    pub family: FamilyKind,
    pub k: usize,
    pub forests: usize,
    pub l_prime: usize,
    pub k_cat: Option<usize>,
}

/// The structure built for one repetition.
pub enum Structure {
    Tables(TableSequence),
    Ensemble(ForestEnsemble),
    Forest(Forest),
    None,
}

impl Structure {
    /// Serialized bytes, for the kinds that have a file format.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        match self {
            Structure::Ensemble(e) => Ok(e.to_bytes()),
            Structure::Forest(f) => Ok(f.to_bytes()),
            Structure::Tables(_) => Err(Error::Unsupported(
                "table sequences are rebuilt from their seed and have no file format".into(),
            )),
            Structure::None => Err(Error::Unsupported("brute force has no structure".into())),
        }
    }

    /// Reads a forest or an ensemble, telling them apart by their magic.
    pub fn from_bytes(bytes: &[u8], dataset: Arc<Dataset>) -> Result<Self> {
        match bytes.get(..4) {
            Some(b"LSHE") => Ok(Structure::Ensemble(ForestEnsemble::read_from(&mut &bytes[..], dataset)?)),
            Some(b"LSHF") => Ok(Structure::Forest(Forest::read_from(&mut &bytes[..], dataset)?)),
            _ => Err(Error::format(0, "not a forest or ensemble file")),
        }
    }

    /// Build statistics for the `build` subcommand.
    pub fn describe(&self) -> String {
        let forests: Vec<&Forest> = match self {
            Structure::Ensemble(e) => e.forests().iter().collect(),
            Structure::Forest(f) => vec![f],
            Structure::Tables(t) => return format!("table sequence, K_cat {}", t.k_cat()),
            Structure::None => return "no structure".into(),
        };
        let trees: usize = forests.iter().map(|f| f.len()).sum();
        let nodes: usize = forests.iter().map(|f| f.node_count()).sum();
        format!(
            "{} forest(s), {trees} trees, depth {}, {nodes} nodes",
            forests.len(),
            forests[0].depth()
        )
    }
}

/// An instance with the structures of every repetition, ready to query.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub instance: Instance,
    pub family: LshFamily,
    pub resolved: Resolved,
    pub structures: Vec<Structure>,
}

impl Prepared {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let instance = match &config.instance_dir {
            Some(dir) => Instance::load(dir)?,
            None => generate(&config.instance)?,
        };
        Self::with_instance(config, instance)
    }

    pub fn with_instance(config: &ExperimentConfig, instance: Instance) -> Result<Self> {
        config.validate()?;
        let data = instance.dataset.clone();
        let kind = match config.family {
            Some(kind) => kind,
            None => FamilyKind::for_metric(data.metric())
                .ok_or_else(|| Error::Unsupported(format!("no family for {} data", data.metric())))?,
        };
        let family = LshFamily::for_dataset(kind, &data)?;
        let k = config.depth();
        let forests = config.forests.unwrap_or_else(|| default_forest_count(data.len(), config.c_r));
        let root = RngSeed::new(config.seed);
        let mut structures = Vec::with_capacity(config.repetitions);
        let mut k_cat = config.k_cat;
        for rep in 0..config.repetitions {
            let seed = root.derive("structure", rep as u64);
            let s = match config.algorithm {
                Algorithm::TableCs | Algorithm::BudgetedCs => {
                    let seq = match config.k_cat {
                        Some(w) => TableSequence::new(data.clone(), family, w, config.l_max, seed)?,
                        None => TableSequence::with_default_width(data.clone(), family, config.l_max, seed)?,
                    };
                    k_cat = Some(seq.k_cat());
                    Structure::Tables(seq)
                }
                Algorithm::ForestAdaptive => {
                    Structure::Ensemble(ForestEnsemble::build(data.clone(), family, k, config.l_prime, forests, seed)?)
                }
                Algorithm::Natural => Structure::Forest(build_forest(data.clone(), family, k, config.natural_trees, seed)?),
                Algorithm::Brute => Structure::None,
            };
            structures.push(s);
        }
        let resolved = Resolved {
            n: data.len(),
            dim: data.dim(),
            family: kind,
            k,
            forests,
            l_prime: config.l_prime,
            k_cat,
        };
        // Pin every default so the embedded config reproduces the run.
        let mut config = config.clone();
        config.family = Some(kind);
        config.k = Some(k);
        config.forests = Some(forests);
        config.k_cat = k_cat;
        Ok(Prepared {
            config,
            instance,
            family,
            resolved,
            structures,
        })
    }

    /// Wraps a structure read from disk. The config is rewritten to the
    /// structure's own shape, so the report describes what actually ran.
    pub fn with_structure(config: &ExperimentConfig, instance: Instance, structure: Structure) -> Result<Self> {
        let mut config = config.clone();
        config.repetitions = 1;
        let family = match &structure {
            Structure::Ensemble(e) => {
                config.algorithm = Algorithm::ForestAdaptive;
                config.k = Some(e.depth());
                config.forests = Some(e.forest_count());
                config.l_prime = e.trees_per_forest();
                *e.family()
            }
            Structure::Forest(f) => {
                config.algorithm = Algorithm::Natural;
                config.k = Some(f.depth());
                config.natural_trees = f.len();
                *f.family()
            }
            _ => return Err(Error::Unsupported("only forests and ensembles are stored on disk".into())),
        };
        config.family = Some(family.kind());
        config.validate()?;
        let data = &instance.dataset;
        config.forests = Some(config.forests.unwrap_or_else(|| default_forest_count(data.len(), config.c_r)));
        let resolved = Resolved {
            n: data.len(),
            dim: data.dim(),
            family: family.kind(),
            k: config.depth(),
            forests: config.forests.expect("pinned above"),
            l_prime: config.l_prime,
            k_cat: None,
        };
        Ok(Prepared {
            config,
            instance,
            family,
            resolved,
            structures: vec![structure],
        })
    }

    /// Trees available to the OPT comparator for this algorithm.
    fn opt_trees(&self) -> Option<usize> {
        match self.config.algorithm {
            Algorithm::ForestAdaptive => Some(self.resolved.forests * self.resolved.l_prime),
            Algorithm::Natural => Some(self.config.natural_trees),
            _ => None,
        }
    }

    fn run_query(&self, rep: usize, qi: usize) -> Result<Row> {
        let cfg = &self.config;
        let q = self.instance.queries[qi].as_ref();
        let truth = self.instance.truth[qi];
        let qseed = RngSeed::new(cfg.seed).derive("query", rep as u64).derive("q", qi as u64);
        let start = cfg.timing.then(Instant::now);
        let mut row = Row::new(rep, qi, truth);
        match &self.structures[rep] {
            Structure::Tables(seq) => {
                let mut rng = qseed.rng();
                let res = if cfg.algorithm == Algorithm::BudgetedCs {
                    seq.query_nn_budgeted(q, cfg.delta, cfg.l_max, &mut rng)?.0
                } else {
                    seq.query_nn(q, cfg.delta, &mut rng)?
                };
                row.returned = Some(res.point.0);
                row.confirmed = Some(res.confirmed);
                row.hash_evaluations = res.stats.hash_evaluations as u64;
                row.distance_computations = res.stats.distance_computations as u64;
                row.buckets_opened = res.stats.tables_queried as u64;
                row.fallbacks = res.stats.empty_bucket_fallbacks as u64;
            }
            Structure::Ensemble(ens) => {
                let res = ens.query(q, &cfg.adaptive, &qseed)?;
                row.returned = Some(res.point.0);
                row.level = Some(res.level);
                row.hash_evaluations = res.cost.hash_evaluations;
                row.distance_computations = res.cost.distance_computations;
                row.buckets_opened = res.cost.buckets_opened;
                row.node_visits = res.cost.node_visits;
                row.fallbacks = res.cost.empty_bucket_fallbacks;
            }
            Structure::Forest(forest) => {
                let level = match cfg.natural_level {
                    Some(i) => i.min(forest.depth()),
                    None => static_level(forest, q, cfg.natural_c, forest.len())?,
                };
                let res = natural_algorithm(forest, q, level, forest.len())?;
                row.returned = res.point.map(|p| p.0);
                row.level = Some(level);
                row.hash_evaluations = (level * forest.len()) as u64;
                row.distance_computations = res.collisions as u64;
                row.buckets_opened = forest.len() as u64;
            }
            Structure::None => {
                let p = brute_force_nn(&self.instance.dataset, q)?;
                row.returned = Some(p.0);
                row.distance_computations = self.instance.dataset.len() as u64;
            }
        }
        row.wall_ns = start.map(|s| s.elapsed().as_nanos() as u64);
        row.correct = row.returned == Some(truth.0);
        row.work_units = row.hash_evaluations + row.distance_computations;
        if let Some(l) = self.opt_trees() {
            if self.family.metric() == self.instance.dataset.metric() {
                let prof = profile(&self.instance.dataset, &self.family, q)?;
                let opt = opt_report(&prof, l, self.resolved.k).opt;
                row.opt = opt.is_finite().then_some(opt);
            }
        }
        Ok(row)
    }

    /// Runs every query of every repetition. Rows come back in a fixed
    /// order whatever the thread count.
    pub fn run(&self) -> Result<Report> {
        let cells: Vec<(usize, usize)> = (0..self.config.repetitions)
            .flat_map(|r| (0..self.instance.queries.len()).map(move |q| (r, q)))
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        let rows = pool.install(|| {
            cells
                .par_iter()
                .map(|&(r, q)| self.run_query(r, q))
                .collect::<Result<Vec<_>>>()
        })?;
        let summary = Summary::from_rows(&rows);
        Ok(Report {
            config: self.config.clone(),
            resolved: self.resolved.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            rows,
            summary,
        })
    }

    pub fn ensemble(&self, rep: usize) -> Option<&ForestEnsemble> {
        match self.structures.get(rep) {
            Some(Structure::Ensemble(e)) => Some(e),
            _ => None,
        }
    }
}

/// One query of one repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub repetition: usize,
    pub query: usize,
    pub returned: Option<u32>,
    pub truth: u32,
    pub correct: bool,
    pub work_units: u64,
    pub hash_evaluations: u64,
    pub distance_computations: u64,
    pub buckets_opened: u64,
    pub node_visits: u64,
    pub fallbacks: u64,
    pub level: Option<usize>,
    pub confirmed: Option<bool>,
    pub opt: Option<f64>,
    pub wall_ns: Option<u64>,
}

impl Row {
    fn new(repetition: usize, query: usize, truth: PointId) -> Self {
        Row {
            repetition,
            query,
            returned: None,
            truth: truth.0,
            correct: false,
            work_units: 0,
            hash_evaluations: 0,
            distance_computations: 0,
            buckets_opened: 0,
            node_visits: 0,
            fallbacks: 0,
            level: None,
            confirmed: None,
            opt: None,
            wall_ns: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub queries: usize,
    pub recall: f64,
    pub mean_work: f64,
    pub p50_work: u64,
    pub p90_work: u64,
    pub p99_work: u64,
    pub max_work: u64,
    /// Mean and max of `work / OPT` over rows with a finite OPT.
    pub mean_opt_ratio: Option<f64>,
    pub max_opt_ratio: Option<f64>,
}

impl Summary {
    pub fn from_rows(rows: &[Row]) -> Self {
        let n = rows.len().max(1) as f64;
        let mut work: Vec<u64> = rows.iter().map(|r| r.work_units).collect();
        work.sort_unstable();
        let pct = |p: f64| -> u64 {
            if work.is_empty() {
                0
            } else {
                work[((p * (work.len() - 1) as f64).round() as usize).min(work.len() - 1)]
            }
        };
        let ratios: Vec<f64> = rows
            .iter()
            .filter_map(|r| r.opt.map(|o| r.work_units as f64 / o))
            .collect();
        Summary {
            queries: rows.len(),
            recall: rows.iter().filter(|r| r.correct).count() as f64 / n,
            mean_work: work.iter().sum::<u64>() as f64 / n,
            p50_work: pct(0.5),
            p90_work: pct(0.9),
            p99_work: pct(0.99),
            max_work: work.last().copied().unwrap_or(0),
            mean_opt_ratio: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
            max_opt_ratio: ratios.iter().copied().reduce(f64::max),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub resolved: Resolved,
    pub version: String,
    pub rows: Vec<Row>,
    pub summary: Summary,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Record<'a> {
    Config {
        version: &'a str,
        config: &'a ExperimentConfig,
        resolved: &'a Resolved,
    },
    Row(&'a Row),
    Summary(&'a Summary),
}

impl Report {
    /// Writes the line-delimited JSON form.
    pub fn write_jsonl<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut line = |rec: Record<'_>| -> Result<()> {
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n")?;
            Ok(())
        };
        line(Record::Config {
            version: &self.version,
            config: &self.config,
            resolved: &self.resolved,
        })?;
        for row in &self.rows {
            line(Record::Row(row))?;
        }
        line(Record::Summary(&self.summary))
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        buf
    }

    /// One-line human summary.
    pub fn headline(&self) -> String {
        let s = &self.summary;
        let mut out = format!(
            "{} on {} (n={}): recall {:.4} over {} queries, mean work {:.1}, p90 {}",
            self.config.algorithm, self.config.instance.kind, self.resolved.n, s.recall, s.queries, s.mean_work, s.p90_work
        );
        if let Some(r) = s.mean_opt_ratio {
            out.push_str(&format!(", work/OPT mean {r:.2}"));
        }
        out
    }
}

/// Sweep over algorithms × instance kinds × sizes.
#[derive(Clone, Debug)]
pub struct BenchMatrix {
    pub base: ExperimentConfig,
    pub algorithms: Vec<Algorithm>,
    pub instances: Vec<GeneratorKind>,
    pub sizes: Vec<usize>,
}

impl BenchMatrix {
    /// Reads a config file whose `algorithms`, `instances` and `sizes` keys
    /// hold comma-separated lists; every other key sets the base config.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut base = ExperimentConfig::default();
        let mut lists: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (k, v) in ExperimentConfig::parse_kv(text)? {
            match k.as_str() {
                "algorithms" | "instances" | "sizes" => {
                    lists.insert(k, v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect());
                }
                _ => base.set(&k, &v)?,
            }
        }
        let list = |key: &str, default: &str| lists.get(key).cloned().unwrap_or_else(|| vec![default.to_string()]);
        let algorithms = list("algorithms", &base.algorithm.to_string())
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_>>()?;
        let instances = list("instances", &base.instance.kind.to_string())
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_>>()?;
        let sizes = list("sizes", &base.instance.n.to_string())
            .iter()
            .map(|s| parse("sizes", s))
            .collect::<Result<_>>()?;
        Ok(BenchMatrix {
            base,
            algorithms,
            instances,
            sizes,
        })
    }

    /// Config of one cell.
    pub fn cell(&self, algorithm: Algorithm, kind: GeneratorKind, n: usize) -> ExperimentConfig {
        let mut cfg = self.base.clone();
        cfg.algorithm = algorithm;
        cfg.instance = InstanceSpec::default_for(kind, n, self.base.instance.queries, self.base.instance.seed);
        cfg
    }

    pub fn cells(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &kind in &self.instances {
            for &n in &self.sizes {
                for &alg in &self.algorithms {
                    out.push(self.cell(alg, kind, n));
                }
            }
        }
        out
    }
}

/// Outcome of one bench cell; failures are kept, not fatal.
pub struct BenchCell {
    pub config: ExperimentConfig,
    pub result: Result<Report>,
}

/// Runs every cell, sharing each generated instance across algorithms.
pub fn run_bench(matrix: &BenchMatrix) -> Vec<BenchCell> {
    let mut cells = Vec::new();
    for &kind in &matrix.instances {
        for &n in &matrix.sizes {
            let spec = matrix.cell(Algorithm::Brute, kind, n).instance;
            let instance = generate(&spec);
            for &alg in &matrix.algorithms {
                let config = matrix.cell(alg, kind, n);
                let result = match &instance {
                    Ok(inst) => Prepared::with_instance(&config, inst.clone()).and_then(|p| p.run()),
                    Err(e) => Err(Error::Config(format!("instance generation failed: {e}"))),
                };
                cells.push(BenchCell { config, result });
            }
        }
    }
    cells
}

/// Tab-separated summary table, one line per cell.
pub fn bench_table(cells: &[BenchCell]) -> String {
    let mut out = String::from("instance\tn\talgorithm\trecall\tmean_work\tp90_work\tmean_work_over_opt\tstatus\n");
    for c in cells {
        let head = format!("{}\t{}\t{}", c.config.instance.kind, c.config.instance.n, c.config.algorithm);
        match &c.result {
            Ok(r) => {
                let s = &r.summary;
                let ratio = s.mean_opt_ratio.map_or("-".to_string(), |v| format!("{v:.3}"));
                out.push_str(&format!("{head}\t{:.4}\t{:.1}\t{}\t{ratio}\tok\n", s.recall, s.mean_work, s.p90_work));
            }
            Err(e) => out.push_str(&format!("{head}\t-\t-\t-\t-\terror: {e}\n")),
        }
    }
    out
}

/// Generates (or loads) the instance, builds and runs.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    Prepared::new(config)?.run()
}
