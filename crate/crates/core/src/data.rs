//! Dataset files and synthetic instances.
//!
//! `fvecs` records are `[d: i32 LE][d × f32 LE]`, `bvecs` records are
//! `[d: i32 LE][d bytes]`. Hamming datasets travel as `bvecs` with one
//! 0/1 byte per coordinate. CSV files hold one point per row.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use byteorder::{LittleEndian, WriteBytesExt};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::brute_force_nn;
use crate::types::{BitVector, Dataset, Metric, Point, PointId, RngSeed, Stream};

fn read_records<R: Read>(mut r: R, elem_size: usize) -> Result<(usize, Vec<u8>, usize)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut offset = 0usize;
    let mut dim = None;
    let mut payload = Vec::with_capacity(bytes.len());
    let mut count = 0;
    while offset < bytes.len() {
        if bytes.len() - offset < 4 {
            return Err(Error::format(offset as u64, "truncated record header"));
        }
        let d = i32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"));
        if d <= 0 {
            return Err(Error::format(offset as u64, format!("record dimension {d} is not positive")));
        }
        let d = d as usize;
        if let Some(expected) = dim {
            if d != expected {
                return Err(Error::format(offset as u64, format!("record dimension {d} differs from {expected}")));
            }
        }
        dim = Some(d);
        let body = d * elem_size;
        if bytes.len() - offset - 4 < body {
            return Err(Error::format(offset as u64, format!("truncated record: expected {body} bytes")));
        }
        payload.extend_from_slice(&bytes[offset + 4..offset + 4 + body]);
        offset += 4 + body;
        count += 1;
    }
    Ok((dim.expect("at least one record"), payload, count))
}

/// Reads `fvecs` as rows of floats.
pub fn read_fvecs<R: Read>(r: R) -> Result<(usize, Vec<f32>)> {
    let (dim, payload, _) = read_records(r, 4)?;
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((dim, values))
}

/// Reads `bvecs` as rows of bytes.
pub fn read_bvecs<R: Read>(r: R) -> Result<(usize, Vec<u8>)> {
    let (dim, payload, _) = read_records(r, 1)?;
    Ok((dim, payload))
}

pub fn load_fvecs(path: impl AsRef<Path>, metric: Metric) -> Result<Dataset> {
    let (dim, values) = read_fvecs(BufReader::new(File::open(path)?))?;
    if metric == Metric::Hamming {
        let rows = values
            .chunks_exact(dim)
            .map(|row| bits_from_values(row.iter().map(|&v| v as f64)))
            .collect::<Result<Vec<_>>>()?;
        return Dataset::from_bits(rows);
    }
    Dataset::from_dense(metric, dim, values)
}

/// Loads `bvecs`. For Hamming every byte must be 0 or 1; other metrics
/// read the bytes as unsigned coordinates.
pub fn load_bvecs(path: impl AsRef<Path>, metric: Metric) -> Result<Dataset> {
    let (dim, bytes) = read_bvecs(BufReader::new(File::open(path)?))?;
    if metric == Metric::Hamming {
        let mut rows = Vec::with_capacity(bytes.len() / dim);
        for (i, row) in bytes.chunks_exact(dim).enumerate() {
            if let Some(pos) = row.iter().position(|&b| b > 1) {
                let offset = (i * (dim + 4) + 4 + pos) as u64;
                return Err(Error::format(offset, format!("byte {} is not a bit", row[pos])));
            }
            rows.push(BitVector::from_bools(&row.iter().map(|&b| b == 1).collect::<Vec<_>>()));
        }
        return Dataset::from_bits(rows);
    }
    Dataset::from_dense(metric, dim, bytes.iter().map(|&b| b as f32).collect())
}

fn bits_from_values(values: impl Iterator<Item = f64>) -> Result<BitVector> {
    let bools = values
        .map(|v| match v {
            0.0 => Ok(false),
            1.0 => Ok(true),
            _ => Err(Error::input(format!("{v} is not a bit"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BitVector::from_bools(&bools))
}

pub fn write_fvecs<W: Write>(w: &mut W, dataset: &Dataset) -> Result<()> {
    for id in dataset.ids() {
        w.write_i32::<LittleEndian>(dataset.dim() as i32)?;
        match dataset.point(id) {
            crate::types::PointRef::Dense(v) => {
                for &x in v {
                    w.write_f32::<LittleEndian>(x)?;
                }
            }
            crate::types::PointRef::Bits { dim, words } => {
                for i in 0..dim {
                    w.write_f32::<LittleEndian>(f32::from(u8::from(crate::types::get_bit(words, i))))?;
                }
            }
        }
    }
    Ok(())
}

/// Writes a Hamming dataset as `bvecs` with one 0/1 byte per coordinate.
pub fn write_bvecs<W: Write>(w: &mut W, dataset: &Dataset) -> Result<()> {
    if dataset.metric() != Metric::Hamming {
        return Err(Error::Unsupported("bvecs output holds binary datasets only".into()));
    }
    for id in dataset.ids() {
        let crate::types::PointRef::Bits { dim, words } = dataset.point(id) else {
            unreachable!("Hamming datasets store bits")
        };
        w.write_i32::<LittleEndian>(dim as i32)?;
        let row: Vec<u8> = (0..dim).map(|i| u8::from(crate::types::get_bit(words, i))).collect();
        w.write_all(&row)?;
    }
    Ok(())
}

/// Writes `bvecs` for Hamming data and `fvecs` otherwise.
pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if dataset.metric() == Metric::Hamming {
        write_bvecs(&mut w, dataset)?;
    } else {
        write_fvecs(&mut w, dataset)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads what [`save_dataset`] wrote.
pub fn load_dataset(path: impl AsRef<Path>, metric: Metric) -> Result<Dataset> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => load_csv(path, metric, false),
        Some("fvecs") => load_fvecs(path, metric),
        _ if metric == Metric::Hamming => load_bvecs(path, metric),
        _ => load_fvecs(path, metric),
    }
}

/// Parses CSV rows into a dataset; `header` skips the first line.
pub fn read_csv<R: Read>(r: R, metric: Metric, header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        let values = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| Error::Row {
                    row,
                    message: format!("{cell:?} is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if values.len() != first.len() {
                return Err(Error::Row {
                    row,
                    message: format!("{} columns, expected {}", values.len(), first.len()),
                });
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if metric == Metric::Hamming {
        let bits = rows
            .into_iter()
            .enumerate()
            .map(|(row, values)| {
                bits_from_values(values.into_iter()).map_err(|e| Error::Row {
                    row,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        return Dataset::from_bits(bits);
    }
    Dataset::from_rows(metric, rows.into_iter().map(|r| r.into_iter().map(|v| v as f32).collect()).collect())
}

pub fn load_csv(path: impl AsRef<Path>, metric: Metric, header: bool) -> Result<Dataset> {
    read_csv(BufReader::new(File::open(path)?), metric, header)
}

/// Synthetic instance families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Random bit vectors, random queries.
    UniformHamming,
    /// Each query lies `planted` bits from one data point and at least
    /// `shell` bits from all others.
    PlantedNn,
    /// Each query is a copy of a data point.
    DistanceZero,
    /// A nearest neighbor `planted` bits from every query plus `cluster`
    /// copies of a point one bit further away from it, so the cluster lands
    /// in the nearest neighbor's bucket almost whenever it does.
    DenseCluster,
    /// Unit-normalized Gaussian vectors under the angular metric.
    GaussianAngular,
}

impl GeneratorKind {
    pub fn metric(self) -> Metric {
        match self {
            GeneratorKind::GaussianAngular => Metric::Angular,
            _ => Metric::Hamming,
        }
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform-hamming" => Ok(GeneratorKind::UniformHamming),
            "planted" | "planted-nn" => Ok(GeneratorKind::PlantedNn),
            "distance-zero" | "duplicate" => Ok(GeneratorKind::DistanceZero),
            "dense-cluster" | "cluster" => Ok(GeneratorKind::DenseCluster),
            "gaussian-angular" | "angular" => Ok(GeneratorKind::GaussianAngular),
            _ => Err(Error::Config(format!("unknown generator {s:?}"))),
        }
    }
}

impl std::fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GeneratorKind::UniformHamming => "uniform-hamming",
            GeneratorKind::PlantedNn => "planted-nn",
            GeneratorKind::DistanceZero => "distance-zero",
            GeneratorKind::DenseCluster => "dense-cluster",
            GeneratorKind::GaussianAngular => "gaussian-angular",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    pub dim: usize,
    pub queries: usize,
    /// Query to nearest-neighbor distance (planted-nn, dense-cluster).
    pub planted: usize,
    /// Minimum distance from a query to every other point (planted-nn).
    pub shell: usize,
    /// Number of cluster copies (dense-cluster).
    pub cluster: usize,
    pub seed: u64,
}

impl InstanceSpec {
    pub fn new(kind: GeneratorKind, n: usize, dim: usize, queries: usize, seed: u64) -> Self {
        InstanceSpec {
            kind,
            n,
            dim,
            queries,
            planted: 1,
            shell: 8,
            cluster: 0,
            seed,
        }
    }

    pub fn planted_nn(n: usize, dim: usize, planted: usize, shell: usize, queries: usize, seed: u64) -> Self {
        InstanceSpec {
            planted,
            shell,
            ..Self::new(GeneratorKind::PlantedNn, n, dim, queries, seed)
        }
    }

    pub fn dense_cluster(n: usize, dim: usize, planted: usize, cluster: usize, queries: usize, seed: u64) -> Self {
        InstanceSpec {
            planted,
            cluster,
            ..Self::new(GeneratorKind::DenseCluster, n, dim, queries, seed)
        }
    }

    /// Benchmark defaults for each kind. The dense-cluster instance needs a
    /// wide space so that bit sampling rarely picks the cluster offset.
    pub fn default_for(kind: GeneratorKind, n: usize, queries: usize, seed: u64) -> Self {
        match kind {
            GeneratorKind::PlantedNn => Self::planted_nn(n, 64, 1, 8, queries, seed),
            GeneratorKind::DenseCluster => Self::dense_cluster(n, 2048, 256, 128.min(n.saturating_sub(1)), queries, seed),
            GeneratorKind::GaussianAngular => Self::new(kind, n, 32, queries, seed),
            _ => Self::new(kind, n, 64, queries, seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.dim == 0 {
            return Err(Error::input("n and dim must be positive"));
        }
        match self.kind {
            GeneratorKind::PlantedNn if self.planted >= self.shell => Err(Error::input(format!(
                "planted distance {} must be below the shell distance {}",
                self.planted, self.shell
            ))),
            GeneratorKind::PlantedNn if self.shell > self.dim => Err(Error::input("shell distance exceeds the dimension")),
            GeneratorKind::DenseCluster if self.cluster + 1 > self.n => {
                Err(Error::input(format!("cluster of {} does not fit in n = {}", self.cluster, self.n)))
            }
            GeneratorKind::DenseCluster if self.planted + 1 >= self.dim => {
                Err(Error::input("planted distance leaves no coordinate for the cluster offset"))
            }
            _ => Ok(()),
        }
    }
}

/// A generated dataset with its queries and their exact nearest neighbors.
#[derive(Clone, Debug)]
pub struct Instance {
    pub spec: InstanceSpec,
    pub dataset: Arc<Dataset>,
    pub queries: Vec<Point>,
    pub truth: Vec<PointId>,
}

fn random_bits(rng: &mut Stream, dim: usize) -> BitVector {
    let words = (0..dim.div_ceil(64)).map(|_| rng.random::<u64>()).collect::<Vec<_>>();
    BitVector::from_words(dim, mask_tail(dim, words)).expect("sized words")
}

fn mask_tail(dim: usize, mut words: Vec<u64>) -> Vec<u64> {
    if !dim.is_multiple_of(64) {
        let last = words.len() - 1;
        words[last] &= (1u64 << (dim % 64)) - 1;
    }
    words
}

/// Flips `count` distinct coordinates of `v`, never touching `avoid`.
fn flip_random(rng: &mut Stream, v: &mut BitVector, count: usize, avoid: Option<usize>) {
    let dim = v.dim();
    let pool = dim - usize::from(avoid.is_some());
    for i in sample(rng, pool, count) {
        let coord = match avoid {
            Some(a) if i >= a => i + 1,
            _ => i,
        };
        v.flip(coord);
    }
}

fn unit_gaussian(rng: &mut Stream, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.iter().map(|x| (x / norm) as f32).collect();
        }
    }
}

/// Generates an instance deterministically from its spec; ground truth is
/// computed by brute force.
pub fn generate(spec: &InstanceSpec) -> Result<Instance> {
    spec.validate()?;
    let seed = RngSeed::new(spec.seed);
    let mut data_rng = seed.derive("data", 0).rng();
    let mut query_rng = seed.derive("queries", 0).rng();
    let (dataset, queries) = match spec.kind {
        GeneratorKind::UniformHamming => {
            let data: Vec<BitVector> = (0..spec.n).map(|_| random_bits(&mut data_rng, spec.dim)).collect();
            let queries = (0..spec.queries)
                .map(|_| Point::Bits(random_bits(&mut query_rng, spec.dim)))
                .collect();
            (Dataset::from_bits(data)?, queries)
        }
        GeneratorKind::DistanceZero => {
            let data: Vec<BitVector> = (0..spec.n).map(|_| random_bits(&mut data_rng, spec.dim)).collect();
            let queries = (0..spec.queries)
                .map(|_| Point::Bits(data[query_rng.random_range(0..spec.n)].clone()))
                .collect();
            (Dataset::from_bits(data)?, queries)
        }
        GeneratorKind::PlantedNn => {
            let data: Vec<BitVector> = (0..spec.n).map(|_| random_bits(&mut data_rng, spec.dim)).collect();
            let dataset = Dataset::from_bits(data.clone())?;
            let mut queries = Vec::with_capacity(spec.queries);
            for _ in 0..spec.queries {
                queries.push(Point::Bits(planted_query(&mut query_rng, &dataset, &data, spec)?));
            }
            (dataset, queries)
        }
        GeneratorKind::DenseCluster => {
            let nearest = random_bits(&mut data_rng, spec.dim);
            let offset = data_rng.random_range(0..spec.dim);
            let mut copy = nearest.clone();
            copy.flip(offset);
            let background = spec.n - 1 - spec.cluster;
            let mut data: Vec<BitVector> = (0..background).map(|_| random_bits(&mut data_rng, spec.dim)).collect();
            data.extend(std::iter::repeat_n(copy, spec.cluster));
            let slot = data_rng.random_range(0..=data.len());
            data.insert(slot, nearest.clone());
            let queries = (0..spec.queries)
                .map(|_| {
                    let mut q = nearest.clone();
                    flip_random(&mut query_rng, &mut q, spec.planted, Some(offset));
                    Point::Bits(q)
                })
                .collect();
            (Dataset::from_bits(data)?, queries)
        }
        GeneratorKind::GaussianAngular => {
            let values: Vec<f32> = (0..spec.n).flat_map(|_| unit_gaussian(&mut data_rng, spec.dim)).collect();
            let queries = (0..spec.queries)
                .map(|_| Point::Dense(unit_gaussian(&mut query_rng, spec.dim)))
                .collect();
            (Dataset::from_dense(Metric::Angular, spec.dim, values)?, queries)
        }
    };
    let truth = queries
        .iter()
        .map(|q: &Point| brute_force_nn(&dataset, q.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Instance {
        spec: spec.clone(),
        dataset: Arc::new(dataset),
        queries,
        truth,
    })
}

fn planted_query(rng: &mut Stream, dataset: &Dataset, data: &[BitVector], spec: &InstanceSpec) -> Result<BitVector> {
    const ATTEMPTS: usize = 1000;
    for _ in 0..ATTEMPTS {
        let target = rng.random_range(0..spec.n);
        let mut q = data[target].clone();
        flip_random(rng, &mut q, spec.planted, None);
        let clear = dataset
            .ids()
            .filter(|id| id.index() != target)
            .all(|id| dataset.distance_to(id, q.as_point()) >= spec.shell as f64);
        if clear {
            return Ok(q);
        }
    }
    Err(Error::input(format!(
        "no query with a clear shell of {} after {ATTEMPTS} attempts; the data is too dense",
        spec.shell
    )))
}

impl Instance {
    /// Writes `data.{bvecs,fvecs}`, `queries.{bvecs,fvecs}`, `truth.csv`
    /// and `instance.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let ext = extension(self.dataset.metric());
        save_dataset(dir.join(format!("data.{ext}")), &self.dataset)?;
        save_dataset(dir.join(format!("queries.{ext}")), &queries_dataset(&self.queries, self.dataset.metric())?)?;
        let mut w = csv::Writer::from_path(dir.join("truth.csv")).map_err(|e| Error::input(e.to_string()))?;
        w.write_record(["query", "point"]).map_err(|e| Error::input(e.to_string()))?;
        for (i, t) in self.truth.iter().enumerate() {
            w.write_record([i.to_string(), t.0.to_string()])
                .map_err(|e| Error::input(e.to_string()))?;
        }
        w.flush()?;
        std::fs::write(dir.join("instance.json"), serde_json::to_string_pretty(&self.spec)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let spec: InstanceSpec = serde_json::from_str(&std::fs::read_to_string(dir.join("instance.json"))?)?;
        let metric = spec.kind.metric();
        let ext = extension(metric);
        let dataset = load_dataset(dir.join(format!("data.{ext}")), metric)?;
        let queries = load_dataset(dir.join(format!("queries.{ext}")), metric)?.to_points();
        let mut reader = csv::Reader::from_path(dir.join("truth.csv")).map_err(|e| Error::input(e.to_string()))?;
        let mut truth = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Row {
                row,
                message: e.to_string(),
            })?;
            let id: u32 = record
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Row {
                    row,
                    message: "expected query,point".into(),
                })?;
            dataset.check_id(PointId(id))?;
            truth.push(PointId(id));
        }
        if truth.len() != queries.len() {
            return Err(Error::input(format!("{} labels for {} queries", truth.len(), queries.len())));
        }
        Ok(Instance {
            spec,
            dataset: Arc::new(dataset),
            queries,
            truth,
        })
    }
}

fn extension(metric: Metric) -> &'static str {
    if metric == Metric::Hamming {
        "bvecs"
    } else {
        "fvecs"
    }
}

/// Packs a query list into a dataset, e.g. to save it.
pub fn queries_dataset(queries: &[Point], metric: Metric) -> Result<Dataset> {
    if metric == Metric::Hamming {
        let bits = queries
            .iter()
            .map(|q| match q {
                Point::Bits(b) => Ok(b.clone()),
                Point::Dense(_) => Err(Error::input("dense query in a Hamming instance")),
            })
            .collect::<Result<Vec<_>>>()?;
        return Dataset::from_bits(bits);
    }
    let rows = queries
        .iter()
        .map(|q| match q {
            Point::Dense(v) => Ok(v.clone()),
            Point::Bits(_) => Err(Error::input("binary query in a dense instance")),
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_rows(metric, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn fvecs_bytes(records: &[&[f32]]) -> Vec<u8> {
        let mut out = Vec::new();
        for r in records {
            out.extend((r.len() as i32).to_le_bytes());
            for x in *r {
                out.extend(x.to_le_bytes());
            }
        }
        out
    }

    #[test]
    fn single_fvecs_record() {
        let (dim, values) = read_fvecs(fvecs_bytes(&[&[1.0, 2.0]]).as_slice()).unwrap();
        assert_eq!((dim, values), (2, vec![1.0, 2.0]));
    }

    #[test]
    fn malformed_files_name_the_offset() {
        assert!(matches!(read_fvecs(&[][..]), Err(Error::EmptyDataset)));
        let mut bytes = fvecs_bytes(&[&[1.0, 2.0], &[3.0, 4.0]]);
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(read_fvecs(bytes.as_slice()), Err(Error::Format { offset: 12, .. })));
        let ragged = fvecs_bytes(&[&[1.0, 2.0], &[3.0]]);
        assert!(matches!(read_fvecs(ragged.as_slice()), Err(Error::Format { offset: 12, .. })));
        let zero = 0i32.to_le_bytes();
        assert!(matches!(read_bvecs(&zero[..]), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(read_bvecs(&[1u8, 0][..]), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn csv_rows() {
        let d = read_csv("0,1\n1,0\n".as_bytes(), Metric::Hamming, false).unwrap();
        assert_eq!((d.len(), d.dim()), (2, 2));
        assert!(matches!(
            read_csv("0,1\n1\n".as_bytes(), Metric::Hamming, false),
            Err(Error::Row { row: 1, .. })
        ));
        assert!(matches!(
            read_csv("x,y\n0.5,abc\n".as_bytes(), Metric::Euclidean, true),
            Err(Error::Row { row: 0, .. })
        ));
        assert!(matches!(read_csv("0,2\n".as_bytes(), Metric::Hamming, false), Err(Error::Row { row: 0, .. })));
    }

    #[test]
    fn csv_and_fvecs_agree() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.fvecs");
        std::fs::write(&path, fvecs_bytes(&[&[0.5, -1.25, 3.0], &[2.0, 0.0, 1.0]])).unwrap();
        let a = load_fvecs(&path, Metric::Euclidean).unwrap();
        let b = read_csv("0.5,-1.25,3\n2,0,1\n".as_bytes(), Metric::Euclidean, false).unwrap();
        assert_eq!(a.to_points(), b.to_points());
    }

    #[test]
    fn generators_respect_their_constructions() {
        let inst = generate(&InstanceSpec::planted_nn(100, 32, 1, 8, 50, 7)).unwrap();
        for (q, t) in inst.queries.iter().zip(&inst.truth) {
            assert_eq!(inst.dataset.distance_to(*t, q.as_ref()), 1.0);
            for id in inst.dataset.ids().filter(|id| id != t) {
                assert!(inst.dataset.distance_to(id, q.as_ref()) >= 8.0);
            }
        }
        let inst = generate(&InstanceSpec::dense_cluster(300, 512, 64, 128, 20, 8)).unwrap();
        for (q, t) in inst.queries.iter().zip(&inst.truth) {
            assert_eq!(inst.dataset.distance_to(*t, q.as_ref()), 64.0);
            let at_65 = inst.dataset.ids().filter(|&id| inst.dataset.distance_to(id, q.as_ref()) == 65.0).count();
            assert_eq!(at_65, 128);
        }
        let inst = generate(&InstanceSpec::new(GeneratorKind::DistanceZero, 64, 64, 20, 9)).unwrap();
        for (q, t) in inst.queries.iter().zip(&inst.truth) {
            assert_eq!(inst.dataset.distance_to(*t, q.as_ref()), 0.0);
        }
        let inst = generate(&InstanceSpec::new(GeneratorKind::GaussianAngular, 30, 8, 5, 10)).unwrap();
        assert_eq!(inst.dataset.metric(), Metric::Angular);
        for t in &inst.truth {
            assert!(t.index() < 30);
        }
        assert!(generate(&InstanceSpec::planted_nn(10, 32, 8, 8, 1, 1)).is_err());
        assert!(generate(&InstanceSpec::dense_cluster(10, 64, 4, 10, 1, 1)).is_err());
    }

    #[test]
    fn instances_round_trip_byte_identically() {
        let spec = InstanceSpec::planted_nn(40, 20, 1, 5, 7, 11);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate(&spec).unwrap().save(a.path()).unwrap();
        generate(&spec).unwrap().save(b.path()).unwrap();
        for name in ["data.bvecs", "queries.bvecs", "truth.csv", "instance.json"] {
            assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
        }
        let back = Instance::load(a.path()).unwrap();
        let orig = generate(&spec).unwrap();
        assert_eq!(back.dataset.to_points(), orig.dataset.to_points());
        assert_eq!(back.queries, orig.queries);
        assert_eq!(back.truth, orig.truth);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn fvecs_round_trip_is_bit_exact(rows in 1usize..20, dim in 1usize..16, seed in any::<u64>()) {
            let mut rng = RngSeed::new(seed).rng();
            let values: Vec<f32> = (0..rows * dim).map(|_| f32::from_bits(rng.random::<u32>() & 0xbfff_ffff)).collect();
            let d = Dataset::from_dense(Metric::Euclidean, dim, values.clone()).unwrap();
            let mut buf = Vec::new();
            write_fvecs(&mut buf, &d).unwrap();
            let (back_dim, back) = read_fvecs(buf.as_slice()).unwrap();
            prop_assert_eq!(back_dim, dim);
            prop_assert_eq!(
                back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                values.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }

        #[test]
        fn bvecs_round_trip_is_bit_exact(rows in 1usize..20, dim in 1usize..130, seed in any::<u64>()) {
            let mut rng = RngSeed::new(seed).rng();
            let d = Dataset::from_bits((0..rows).map(|_| random_bits(&mut rng, dim)).collect()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("x.bvecs");
            save_dataset(&path, &d).unwrap();
            let back = load_bvecs(&path, Metric::Hamming).unwrap();
            prop_assert_eq!(back.to_points(), d.to_points());
        }
    }
}
