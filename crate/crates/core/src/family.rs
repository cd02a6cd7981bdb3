//! Monotone LSH families with an exact collision-probability function.
//!
//! Two families are shipped:
//!
//! * **Bit sampling** over Hamming space: a member reads one uniformly chosen
//!   coordinate. `f(d) = 1 - d / dim`.
//! * **Sign random projection** over angular space: a member returns the sign
//!   of the inner product with a Gaussian direction. `f(θ) = 1 - θ / π`.
//!
//! Hash values are single bits, so a concatenation of `K ≤ 64` members packs
//! into one [`HashString`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{get_bit, Dataset, Metric, PointRef, RngSeed};

/// Longest supported hash string.
pub const MAX_LEVELS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    BitSampling,
    SignRandomProjection,
}

impl FamilyKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            FamilyKind::BitSampling => 0,
            FamilyKind::SignRandomProjection => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FamilyKind::BitSampling),
            1 => Some(FamilyKind::SignRandomProjection),
            _ => None,
        }
    }

    /// The family matching a metric, if one is shipped.
    pub fn for_metric(metric: Metric) -> Option<Self> {
        match metric {
            Metric::Hamming => Some(FamilyKind::BitSampling),
            Metric::Angular => Some(FamilyKind::SignRandomProjection),
            Metric::Euclidean => None,
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyKind::BitSampling => "bit-sampling",
            FamilyKind::SignRandomProjection => "sign-random-projection",
        })
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bit-sampling" | "bits" => Ok(FamilyKind::BitSampling),
            "sign-random-projection" | "srp" | "simhash" => Ok(FamilyKind::SignRandomProjection),
            other => Err(Error::input(format!("unknown family `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LshFamily {
    kind: FamilyKind,
    dim: usize,
}

impl LshFamily {
    pub fn bit_sampling(dim: usize) -> Self {
        LshFamily {
            kind: FamilyKind::BitSampling,
            dim,
        }
    }

    pub fn sign_random_projection(dim: usize) -> Self {
        LshFamily {
            kind: FamilyKind::SignRandomProjection,
            dim,
        }
    }

    pub fn new(kind: FamilyKind, dim: usize) -> Self {
        LshFamily { kind, dim }
    }

    /// The family of `kind` over `dataset`, rejecting incompatible metrics.
    pub fn for_dataset(kind: FamilyKind, dataset: &Dataset) -> Result<Self> {
        match (kind, dataset.metric()) {
            (FamilyKind::BitSampling, Metric::Hamming)
            | (FamilyKind::SignRandomProjection, Metric::Angular) => Ok(Self::new(kind, dataset.dim())),
            (kind, metric) => Err(Error::Unsupported(format!(
                "{kind} has no exact collision function under the {metric} metric"
            ))),
        }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        match self.kind {
            FamilyKind::BitSampling => Metric::Hamming,
            FamilyKind::SignRandomProjection => Metric::Angular,
        }
    }

    pub fn sample_member(&self, seed: &RngSeed) -> HashSpec {
        let mut rng = seed.rng();
        let func = match self.kind {
            FamilyKind::BitSampling => HashFn::Bit(rng.random_range(0..self.dim)),
            FamilyKind::SignRandomProjection => HashFn::Hyperplane(
                (0..self.dim)
                    .map(|_| rng.sample::<f32, _>(StandardNormal))
                    .collect(),
            ),
        };
        HashSpec {
            func,
            seed: seed.clone(),
        }
    }

    /// `f(d)`, the probability that a random member hashes two points at
    /// distance `d` to the same value.
    pub fn collision_probability(&self, d: f64) -> Result<f64> {
        let max = match self.kind {
            FamilyKind::BitSampling => self.dim as f64,
            FamilyKind::SignRandomProjection => PI,
        };
        if !(0.0..=max).contains(&d) {
            return Err(Error::input(format!("distance {d} outside [0, {max}]")));
        }
        Ok(self.collision_probability_unchecked(d))
    }

    #[inline]
    pub(crate) fn collision_probability_unchecked(&self, d: f64) -> f64 {
        match self.kind {
            FamilyKind::BitSampling => (1.0 - d / self.dim as f64).clamp(0.0, 1.0),
            FamilyKind::SignRandomProjection => (1.0 - d / PI).clamp(0.0, 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum HashFn {
    /// Reads one coordinate.
    Bit(usize),
    /// Sign of the inner product with a direction.
    Hyperplane(Box<[f32]>),
}

/// One sampled family member together with the seed that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct HashSpec {
    func: HashFn,
    seed: RngSeed,
}

impl HashSpec {
    pub fn func(&self) -> &HashFn {
        &self.func
    }

    pub fn seed(&self) -> &RngSeed {
        &self.seed
    }

    pub fn evaluate(&self, x: PointRef<'_>) -> Result<bool> {
        let (dim, binary) = match &self.func {
            HashFn::Bit(_) => (None, true),
            HashFn::Hyperplane(d) => (Some(d.len()), false),
        };
        if x.is_binary() != binary {
            return Err(Error::input("hash function cannot hash this point type"));
        }
        if let Some(dim) = dim {
            if dim != x.dim() {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: x.dim(),
                });
            }
        }
        if let HashFn::Bit(i) = self.func {
            if i >= x.dim() {
                return Err(Error::DimensionMismatch {
                    expected: i + 1,
                    actual: x.dim(),
                });
            }
        }
        Ok(self.eval(x))
    }

    /// Evaluates without validating the point.
    #[inline]
    pub(crate) fn eval(&self, x: PointRef<'_>) -> bool {
        match (&self.func, x) {
            (HashFn::Bit(i), PointRef::Bits { words, .. }) => get_bit(words, *i),
            (HashFn::Hyperplane(dir), PointRef::Dense(v)) => {
                let dot: f32 = dir.iter().zip(v).map(|(a, b)| a * b).sum();
                dot >= 0.0
            }
            _ => panic!("hash function applied to incompatible point"),
        }
    }
}

/// Concatenated hash values `h_1(x) … h_K(x)`; level `ℓ` (1-based) is bit
/// `ℓ - 1` of `bits`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct HashString {
    bits: u64,
    len: u8,
}

#[inline]
pub(crate) fn prefix_mask(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

impl HashString {
    pub fn from_bits(bits: u64, len: usize) -> Self {
        assert!(len <= MAX_LEVELS);
        HashString {
            bits: bits & prefix_mask(len),
            len: len as u8,
        }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> usize {
        usize::from(self.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Value at 1-based `level`.
    pub fn level(&self, level: usize) -> bool {
        assert!(level >= 1 && level <= self.len());
        (self.bits >> (level - 1)) & 1 == 1
    }

    pub fn prefix(&self, len: usize) -> HashString {
        assert!(len <= self.len());
        HashString::from_bits(self.bits, len)
    }

    /// True iff both strings agree on their first `len` levels.
    pub fn shares_prefix(&self, other: &HashString, len: usize) -> bool {
        assert!(len <= self.len() && len <= other.len());
        (self.bits ^ other.bits) & prefix_mask(len) == 0
    }

    pub(crate) fn push(&mut self, value: bool) {
        assert!(self.len() < MAX_LEVELS);
        self.bits |= u64::from(value) << self.len;
        self.len += 1;
    }
}

impl fmt::Display for HashString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in 1..=self.len() {
            f.write_str(if self.level(l) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Concatenates `members` evaluated on `x`.
pub fn concat_hash(members: &[HashSpec], x: PointRef<'_>) -> Result<HashString> {
    if members.is_empty() || members.len() > MAX_LEVELS {
        return Err(Error::input(format!(
            "concatenation width must be in 1..={MAX_LEVELS}, got {}",
            members.len()
        )));
    }
    let mut s = HashString::default();
    for m in members {
        s.push(m.evaluate(x)?);
    }
    Ok(s)
}

#[inline]
pub(crate) fn concat_bits(members: &[HashSpec], x: PointRef<'_>) -> u64 {
    members
        .iter()
        .enumerate()
        .fold(0u64, |acc, (l, m)| acc | (u64::from(m.eval(x)) << l))
}

/// Samples `k` members from seed paths `seed / level:0 … level:k-1`.
pub fn sample_members(family: &LshFamily, seed: &RngSeed, k: usize) -> Vec<HashSpec> {
    (0..k)
        .map(|l| family.sample_member(&seed.derive("level", l as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::BitVector;

    #[test]
    fn bit_sampling_member_and_evaluation() {
        let fam = LshFamily::bit_sampling(8);
        let seed = RngSeed::new(7);
        let h = fam.sample_member(&seed);
        match h.func() {
            HashFn::Bit(i) => assert!(*i < 8),
            _ => panic!("wrong member kind"),
        }
        assert_eq!(h, fam.sample_member(&seed));

        let spec = HashSpec {
            func: HashFn::Bit(2),
            seed,
        };
        let x = BitVector::parse("0100").unwrap();
        assert!(!spec.evaluate(x.as_point()).unwrap());
        assert_eq!(spec.evaluate(x.as_point()).unwrap(), spec.evaluate(x.as_point()).unwrap());
        let wide = BitVector::parse("01").unwrap();
        assert!(spec.evaluate(wide.as_point()).is_err());
    }

    #[test]
    fn bit_sampling_coordinates_are_uniform() {
        let fam = LshFamily::bit_sampling(8);
        let root = RngSeed::new(11);
        let mut counts = [0u32; 8];
        let draws = 10_000;
        for i in 0..draws {
            if let HashFn::Bit(c) = fam.sample_member(&root.derive("draw", i)).func() {
                counts[*c] += 1;
            }
        }
        let mean = draws as f64 / 8.0;
        let sd = (draws as f64 * (1.0 / 8.0) * (7.0 / 8.0)).sqrt();
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2) / mean).sum();
        for &c in &counts {
            assert!((c as f64 - mean).abs() <= 5.0 * sd, "{counts:?}");
        }
        // 7 degrees of freedom; 24.3 is the 0.999 quantile.
        assert!(chi2 < 24.3, "chi2 = {chi2}");
    }

    #[test]
    fn sign_projection_on_its_own_direction_is_positive() {
        let fam = LshFamily::sign_random_projection(5);
        let h = fam.sample_member(&RngSeed::new(3));
        let HashFn::Hyperplane(dir) = h.func() else {
            panic!("wrong member kind")
        };
        let x: Vec<f32> = dir.to_vec();
        assert!(h.evaluate(PointRef::Dense(&x)).unwrap());
        let neg: Vec<f32> = x.iter().map(|v| -v).collect();
        assert!(!h.evaluate(PointRef::Dense(&neg)).unwrap());
    }

    #[test]
    fn collision_probability_closed_forms() {
        let fam = LshFamily::bit_sampling(4);
        assert_eq!(fam.collision_probability(0.0).unwrap(), 1.0);
        // Enumerate the four coordinate choices for x = 0000, y = 1000.
        let x = BitVector::parse("0000").unwrap();
        let y = BitVector::parse("1000").unwrap();
        let agree = (0..4).filter(|&i| x.get(i) == y.get(i)).count();
        assert_eq!(fam.collision_probability(1.0).unwrap(), agree as f64 / 4.0);
        assert!(fam.collision_probability(5.0).is_err());
        assert!(fam.collision_probability(-1.0).is_err());

        let srp = LshFamily::sign_random_projection(2);
        assert!((srp.collision_probability(PI / 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(srp.collision_probability(4.0).is_err());
    }

    #[test]
    fn collision_probability_is_monotone() {
        for fam in [LshFamily::bit_sampling(16), LshFamily::sign_random_projection(16)] {
            let max = if fam.kind() == FamilyKind::BitSampling { 16.0 } else { PI };
            let grid: Vec<f64> = (0..=100).map(|i| max * i as f64 / 100.0).collect();
            for w in grid.windows(2) {
                assert!(fam.collision_probability(w[0]).unwrap() >= fam.collision_probability(w[1]).unwrap());
            }
        }
    }

    #[test]
    fn sign_projection_collision_monte_carlo() {
        let fam = LshFamily::sign_random_projection(2);
        let x = [1.0f32, 0.0];
        let y = [0.0f32, 1.0];
        let root = RngSeed::new(5);
        let runs = 200_000u64;
        let hits = (0..runs)
            .filter(|&i| {
                let h = fam.sample_member(&root.derive("m", i));
                h.eval(PointRef::Dense(&x)) == h.eval(PointRef::Dense(&y))
            })
            .count();
        let p = hits as f64 / runs as f64;
        let sd = (0.25 / runs as f64).sqrt();
        assert!((p - 0.5).abs() <= 3.0 * sd, "p = {p}");
    }

    #[test]
    fn concatenation() {
        let fam = LshFamily::bit_sampling(4);
        let root = RngSeed::new(9);
        let members = sample_members(&fam, &root, 1);
        let x = BitVector::parse("1010").unwrap();
        let s = concat_hash(&members, x.as_point()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.level(1), members[0].evaluate(x.as_point()).unwrap());
        let members = sample_members(&fam, &root, 6);
        let a = concat_hash(&members, x.as_point()).unwrap();
        assert_eq!(a, concat_hash(&members, x.clone().as_point()).unwrap());
        assert!(concat_hash(&[], x.as_point()).is_err());
    }

    #[test]
    fn level_two_prefix_collision_rate() {
        // dim 4, d = 1: f(1)^2 = 0.5625 from the enumeration above.
        let fam = LshFamily::bit_sampling(4);
        let x = BitVector::parse("0000").unwrap();
        let y = BitVector::parse("0010").unwrap();
        let root = RngSeed::new(21);
        let trials = 100_000u64;
        let hits = (0..trials)
            .filter(|&t| {
                let m = sample_members(&fam, &root.derive("trial", t), 2);
                let a = concat_hash(&m, x.as_point()).unwrap();
                let b = concat_hash(&m, y.as_point()).unwrap();
                a.shares_prefix(&b, 2)
            })
            .count();
        let p = 0.5625;
        let rate = hits as f64 / trials as f64;
        let sd = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((rate - p).abs() <= 3.0 * sd, "rate = {rate}");
    }

    #[test]
    fn empirical_collision_frequency_matches_f() {
        let fam = LshFamily::bit_sampling(16);
        let x = BitVector::zeros(16);
        let root = RngSeed::new(99);
        let n = 20_000u64;
        for d in [0usize, 3, 8, 13, 16] {
            let mut y = BitVector::zeros(16);
            for i in 0..d {
                y.flip(i);
            }
            let hits = (0..n)
                .filter(|&i| {
                    let h = fam.sample_member(&root.derive("d", d as u64).derive("m", i));
                    h.eval(x.as_point()) == h.eval(y.as_point())
                })
                .count();
            let p = fam.collision_probability(d as f64).unwrap();
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((hits as f64 / n as f64 - p).abs() <= 3.0 * sd + 1e-12, "d = {d}");
        }
    }
}
