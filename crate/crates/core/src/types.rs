//! Points, datasets, metrics, the query-induced total order and seeded
//! random streams.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense index of a point inside a [`Dataset`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PointId(pub u32);

impl PointId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for PointId {
    fn from(i: usize) -> Self {
        PointId(u32::try_from(i).expect("point index exceeds u32"))
    }
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Number of differing coordinates of two bit vectors.
    Hamming,
    Euclidean,
    /// Angle in radians between two real vectors, in `[0, π]`.
    Angular,
}

impl Metric {
    pub fn is_binary(self) -> bool {
        matches!(self, Metric::Hamming)
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Metric::Hamming => 0,
            Metric::Euclidean => 1,
            Metric::Angular => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Metric::Hamming),
            1 => Some(Metric::Euclidean),
            2 => Some(Metric::Angular),
            _ => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Hamming => "hamming",
            Metric::Euclidean => "euclidean",
            Metric::Angular => "angular",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hamming" => Ok(Metric::Hamming),
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "angular" | "cosine" => Ok(Metric::Angular),
            other => Err(Error::input(format!("unknown metric `{other}`"))),
        }
    }
}

#[inline]
pub(crate) fn words_for(dim: usize) -> usize {
    dim.div_ceil(64)
}

/// A fixed-width bit vector packed into 64-bit words, bit `i` at word
/// `i / 64`, position `i % 64`. Padding bits past `dim` are always zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitVector {
    dim: usize,
    words: Vec<u64>,
}

impl BitVector {
    pub fn zeros(dim: usize) -> Self {
        BitVector {
            dim,
            words: vec![0; words_for(dim)],
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    /// Parses a string of `0`/`1` characters, position 0 first.
    pub fn parse(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::input(format!("`{other}` is not a bit"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_bools(&bits))
    }

    pub fn from_words(dim: usize, words: Vec<u64>) -> Result<Self> {
        if words.len() != words_for(dim) {
            return Err(Error::DimensionMismatch {
                expected: words_for(dim),
                actual: words.len(),
            });
        }
        let mut v = BitVector { dim, words };
        v.clear_padding();
        Ok(v)
    }

    fn clear_padding(&mut self) {
        let rem = self.dim % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        get_bit(&self.words, i)
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.dim, "bit {i} out of range for dim {}", self.dim);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.dim, "bit {i} out of range for dim {}", self.dim);
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn as_point(&self) -> PointRef<'_> {
        PointRef::Bits {
            dim: self.dim,
            words: &self.words,
        }
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.dim {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn get_bit(words: &[u64], i: usize) -> bool {
    (words[i / 64] >> (i % 64)) & 1 == 1
}

/// Borrowed view of one point.
#[derive(Clone, Copy, Debug)]
pub enum PointRef<'a> {
    Bits { dim: usize, words: &'a [u64] },
    Dense(&'a [f32]),
}

impl<'a> PointRef<'a> {
    pub fn dim(&self) -> usize {
        match self {
            PointRef::Bits { dim, .. } => *dim,
            PointRef::Dense(v) => v.len(),
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, PointRef::Bits { .. })
    }

    pub fn to_owned(&self) -> Point {
        match *self {
            PointRef::Bits { dim, words } => Point::Bits(BitVector {
                dim,
                words: words.to_vec(),
            }),
            PointRef::Dense(v) => Point::Dense(v.to_vec()),
        }
    }
}

/// Owned point.
#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Bits(BitVector),
    Dense(Vec<f32>),
}

impl Point {
    pub fn as_ref(&self) -> PointRef<'_> {
        match self {
            Point::Bits(b) => b.as_point(),
            Point::Dense(v) => PointRef::Dense(v),
        }
    }

    pub fn dim(&self) -> usize {
        self.as_ref().dim()
    }
}

impl From<BitVector> for Point {
    fn from(b: BitVector) -> Self {
        Point::Bits(b)
    }
}

impl From<Vec<f32>> for Point {
    fn from(v: Vec<f32>) -> Self {
        Point::Dense(v)
    }
}

fn check_compatible(metric: Metric, x: &PointRef<'_>, y: &PointRef<'_>) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            actual: y.dim(),
        });
    }
    if metric.is_binary() != x.is_binary() || x.is_binary() != y.is_binary() {
        return Err(Error::input(format!(
            "metric {metric} is incompatible with the point representation"
        )));
    }
    Ok(())
}

/// Distance between two points under `metric`.
pub fn distance(metric: Metric, x: PointRef<'_>, y: PointRef<'_>) -> Result<f64> {
    check_compatible(metric, &x, &y)?;
    if metric == Metric::Angular {
        if let (PointRef::Dense(a), PointRef::Dense(b)) = (x, y) {
            if norm(a) == 0.0 || norm(b) == 0.0 {
                return Err(Error::input("angular distance of a zero vector"));
            }
        }
    }
    Ok(distance_unchecked(metric, x, y))
}

#[inline]
pub(crate) fn hamming(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn distance_unchecked(metric: Metric, x: PointRef<'_>, y: PointRef<'_>) -> f64 {
    match (x, y) {
        (PointRef::Bits { words: a, .. }, PointRef::Bits { words: b, .. }) => f64::from(hamming(a, b)),
        (PointRef::Dense(a), PointRef::Dense(b)) => match metric {
            Metric::Angular => {
                let mut dot = 0.0f64;
                let mut na = 0.0f64;
                let mut nb = 0.0f64;
                for (&u, &v) in a.iter().zip(b) {
                    let (u, v) = (f64::from(u), f64::from(v));
                    dot += u * v;
                    na += u * u;
                    nb += v * v;
                }
                let cos = dot / (na.sqrt() * nb.sqrt());
                cos.clamp(-1.0, 1.0).acos()
            }
            _ => a
                .iter()
                .zip(b)
                .map(|(&u, &v)| {
                    let d = f64::from(u) - f64::from(v);
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
        },
        _ => unreachable!("representation checked at construction"),
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Storage {
    Bits { words: usize, data: Vec<u64> },
    Dense { data: Vec<f32> },
}

/// An immutable, indexed collection of points sharing one dimension and
/// metric. Point ids are the dense range `0..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    n: usize,
    metric: Metric,
    storage: Storage,
}

impl Dataset {
    pub fn from_bits(points: Vec<BitVector>) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyDataset)?;
        let dim = first.dim();
        if dim == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        let words = words_for(dim);
        let mut data = Vec::with_capacity(points.len() * words);
        for p in &points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: p.dim(),
                });
            }
            data.extend_from_slice(p.words());
        }
        Ok(Dataset {
            dim,
            n: points.len(),
            metric: Metric::Hamming,
            storage: Storage::Bits { words, data },
        })
    }

    /// Builds a real-valued dataset from row-major `data` of `dim` columns.
    pub fn from_dense(metric: Metric, dim: usize, data: Vec<f32>) -> Result<Self> {
        if metric.is_binary() {
            return Err(Error::input("hamming datasets must be built from bit vectors"));
        }
        if dim == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::input(format!(
                "{} values do not divide into rows of {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite coordinate"));
        }
        let n = data.len() / dim;
        if metric == Metric::Angular {
            if let Some(i) = (0..n).find(|&i| norm(&data[i * dim..(i + 1) * dim]) == 0.0) {
                return Err(Error::input(format!("point {i} is the zero vector")));
            }
        }
        Ok(Dataset {
            dim,
            n,
            metric,
            storage: Storage::Dense { data },
        })
    }

    pub fn from_rows(metric: Metric, rows: Vec<Vec<f32>>) -> Result<Self> {
        let dim = rows.first().ok_or(Error::EmptyDataset)?.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Self::from_dense(metric, dim, rows.concat())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn ids(&self) -> impl Iterator<Item = PointId> + '_ {
        (0..self.n).map(PointId::from)
    }

    pub fn check_id(&self, id: PointId) -> Result<()> {
        if id.index() < self.n {
            Ok(())
        } else {
            Err(Error::InvalidPointId {
                id: id.index(),
                n: self.n,
            })
        }
    }

    /// # Panics
    /// If `id` is out of range.
    #[inline]
    pub fn point(&self, id: PointId) -> PointRef<'_> {
        let i = id.index();
        assert!(i < self.n, "point id {i} out of range");
        match &self.storage {
            Storage::Bits { words, data } => PointRef::Bits {
                dim: self.dim,
                words: &data[i * words..(i + 1) * words],
            },
            Storage::Dense { data } => PointRef::Dense(&data[i * self.dim..(i + 1) * self.dim]),
        }
    }

    /// Validates that `q` can be compared against this dataset's points.
    pub fn check_query(&self, q: PointRef<'_>) -> Result<()> {
        check_compatible(self.metric, &self.point(PointId(0)), &q)?;
        if self.metric == Metric::Angular {
            if let PointRef::Dense(v) = q {
                if norm(v) == 0.0 {
                    return Err(Error::input("query is the zero vector"));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn distance_to(&self, id: PointId, q: PointRef<'_>) -> f64 {
        distance_unchecked(self.metric, self.point(id), q)
    }

    /// Largest possible distance under this dataset's metric, if bounded.
    pub fn max_distance(&self) -> Option<f64> {
        match self.metric {
            Metric::Hamming => Some(self.dim as f64),
            Metric::Angular => Some(PI),
            Metric::Euclidean => None,
        }
    }

    /// Raw row-major coordinates for dense datasets.
    pub fn dense_values(&self) -> Option<&[f32]> {
        match &self.storage {
            Storage::Dense { data } => Some(data),
            Storage::Bits { .. } => None,
        }
    }

    pub fn to_points(&self) -> Vec<Point> {
        self.ids().map(|id| self.point(id).to_owned()).collect()
    }
}

/// Sort key of a point under the query order: distance first, id second.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderKey {
    pub distance: f64,
    pub id: PointId,
}

impl Eq for OrderKey {}

impl PartialOrd for OrderKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.id.cmp(&other.id))
    }
}

/// The strict total order `x ≺ y` iff `(dist(q,x), id(x)) < (dist(q,y), id(y))`.
#[derive(Clone, Copy, Debug)]
pub struct QueryOrder<'a> {
    dataset: &'a Dataset,
    query: PointRef<'a>,
}

impl<'a> QueryOrder<'a> {
    pub fn new(dataset: &'a Dataset, query: PointRef<'a>) -> Result<Self> {
        dataset.check_query(query)?;
        Ok(QueryOrder { dataset, query })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn query(&self) -> PointRef<'a> {
        self.query
    }

    #[inline]
    pub fn key(&self, id: PointId) -> OrderKey {
        OrderKey {
            distance: self.dataset.distance_to(id, self.query),
            id,
        }
    }

    pub fn precedes(&self, x: PointId, y: PointId) -> Result<bool> {
        self.dataset.check_id(x)?;
        self.dataset.check_id(y)?;
        Ok(self.key(x) < self.key(y))
    }

    pub fn cmp(&self, x: PointId, y: PointId) -> Ordering {
        self.key(x).cmp(&self.key(y))
    }
}

/// Seeded, replayable random-stream identity: a master seed plus a path of
/// `(scope tag, index)` steps.
///
/// The stream key starts at `splitmix64(master)`; each step folds in
/// `splitmix64(key ^ splitmix64(fnv1a(tag) + splitmix64(index)))`. The
/// stream itself is `ChaCha8Rng::seed_from_u64(key)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RngSeed {
    master: u64,
    path: Vec<(String, u64)>,
    key: u64,
}

/// Random stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

impl RngSeed {
    pub fn new(master: u64) -> Self {
        RngSeed {
            master,
            path: Vec::new(),
            key: splitmix64(master),
        }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn path(&self) -> &[(String, u64)] {
        &self.path
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn derive(&self, scope: &str, index: u64) -> RngSeed {
        let step = splitmix64(fnv1a(scope.as_bytes()).wrapping_add(splitmix64(index)));
        let mut path = self.path.clone();
        path.push((scope.to_owned(), index));
        RngSeed {
            master: self.master,
            path,
            key: splitmix64(self.key ^ step),
        }
    }

    pub fn rng(&self) -> Stream {
        Stream::seed_from_u64(self.key)
    }
}

impl fmt::Display for RngSeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.master)?;
        for (tag, i) in &self.path {
            write!(f, "/{tag}:{i}")?;
        }
        Ok(())
    }
}

/// Random stream for `seed / scope:index`.
pub fn derive_rng(seed: &RngSeed, scope: &str, index: u64) -> Stream {
    seed.derive(scope, index).rng()
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn bits(s: &str) -> BitVector {
        BitVector::parse(s).unwrap()
    }

    #[test]
    fn hamming_distances() {
        let z = bits("0000");
        assert_eq!(distance(Metric::Hamming, z.as_point(), z.as_point()).unwrap(), 0.0);
        let y = bits("0101");
        assert_eq!(distance(Metric::Hamming, z.as_point(), y.as_point()).unwrap(), 2.0);
    }

    #[test]
    fn angular_right_angle() {
        let x = [1.0f32, 0.0];
        let y = [0.0f32, 1.0];
        let d = distance(Metric::Angular, PointRef::Dense(&x), PointRef::Dense(&y)).unwrap();
        assert!((d - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = bits("0000");
        let b = bits("00000");
        assert!(matches!(
            distance(Metric::Hamming, a.as_point(), b.as_point()),
            Err(Error::DimensionMismatch { .. })
        ));
        let x = [1.0f32, 0.0];
        assert!(distance(Metric::Hamming, PointRef::Dense(&x), PointRef::Dense(&x)).is_err());
    }

    #[test]
    fn precedes_examples() {
        // q = 0000; point 0 at distance 2, point 1 at distance 1, points 3 and 7 tie.
        let pts = ["0011", "0001", "1111", "1000", "1111", "1110", "0111", "0100"];
        let data = Dataset::from_bits(pts.iter().map(|s| bits(s)).collect()).unwrap();
        let q = bits("0000");
        let order = QueryOrder::new(&data, q.as_point()).unwrap();
        assert!(order.precedes(PointId(1), PointId(0)).unwrap());
        assert!(order.precedes(PointId(3), PointId(7)).unwrap());
        assert!(!order.precedes(PointId(7), PointId(3)).unwrap());
        assert!(!order.precedes(PointId(3), PointId(3)).unwrap());
        assert!(order.precedes(PointId(3), PointId(8)).is_err());
    }

    #[test]
    fn derived_streams() {
        let s = RngSeed::new(42);
        let a: u64 = derive_rng(&s, "tree", 0).random();
        let b: u64 = derive_rng(&s, "tree", 0).random();
        let c: u64 = derive_rng(&s, "tree", 1).random();
        let d: u64 = derive_rng(&s, "forest", 0).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(c, d);
        assert_eq!(s.derive("tree", 3).to_string(), "42/tree:3");
    }

    fn small_dataset() -> impl Strategy<Value = (Vec<Vec<bool>>, Vec<bool>)> {
        (1usize..12).prop_flat_map(|dim| {
            (
                prop::collection::vec(prop::collection::vec(any::<bool>(), dim), 1..64),
                prop::collection::vec(any::<bool>(), dim),
            )
        })
    }

    proptest! {
        #[test]
        fn query_order_is_strict_total((rows, q) in small_dataset()) {
            let data = Dataset::from_bits(rows.iter().map(|r| BitVector::from_bools(r)).collect()).unwrap();
            let q = BitVector::from_bools(&q);
            let order = QueryOrder::new(&data, q.as_point()).unwrap();
            let ids: Vec<PointId> = data.ids().collect();
            for &x in &ids {
                prop_assert!(!order.precedes(x, x).unwrap());
                for &y in &ids {
                    if x != y {
                        prop_assert!(order.precedes(x, y).unwrap() ^ order.precedes(y, x).unwrap());
                    }
                    for &z in &ids {
                        if order.precedes(x, y).unwrap() && order.precedes(y, z).unwrap() {
                            prop_assert!(order.precedes(x, z).unwrap());
                        }
                    }
                }
            }
            // The minimum is the closest point with the smallest id among ties.
            let min = ids.iter().copied().min_by(|&a, &b| order.cmp(a, b)).unwrap();
            let best = ids.iter().map(|&i| data.distance_to(i, q.as_point())).fold(f64::INFINITY, f64::min);
            let first = ids.iter().copied().find(|&i| data.distance_to(i, q.as_point()) == best).unwrap();
            prop_assert_eq!(min, first);
        }
    }
}
