//! LSH Forest: `L` prefix tries over `K`-level hash strings.
//!
//! Every tree stores each point at the node of the shortest prefix of its
//! hash string that no other point shares (never shallower than level 1),
//! or at depth `K` when no such prefix exists. Nodes are laid out so that
//! the points below any node form one contiguous run of the tree's point
//! array, ordered depth-first and by id inside a leaf. Each node therefore
//! knows its subtree size, and a bucket at level `i` costs `i + 1` node
//! visits to locate plus its own length to enumerate.
//!
//! A point stored at depth `d < i` still belongs to deeper buckets when its
//! full hash string matches the query there; the tree keeps every stored
//! point's full string to decide that without rehashing.

use std::io::{Read, Write};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::confirm::Neumaier;
use crate::error::{Error, Result};
use crate::family::{concat_bits, prefix_mask, sample_members, FamilyKind, HashSpec, HashString, LshFamily, MAX_LEVELS};
use crate::types::{Dataset, Metric, PointId, PointRef, RngSeed};

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Node {
    child: [u32; 2],
    start: u32,
    count: u32,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.child == [NONE, NONE]
    }
}

/// Location of one bucket inside a tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BucketRange {
    pub start: usize,
    pub len: usize,
    /// Trie nodes touched while locating the bucket.
    pub node_visits: usize,
}

/// One trie of the forest.
#[derive(Clone, Debug)]
pub struct ForestTrie {
    members: Vec<HashSpec>,
    nodes: Vec<Node>,
    points: Vec<PointId>,
    keys: Vec<u64>,
}

impl ForestTrie {
    fn build(dataset: &Dataset, family: &LshFamily, k: usize, seed: &RngSeed) -> Self {
        let members = sample_members(family, seed, k);
        let strings: Vec<u64> = dataset.ids().map(|id| concat_bits(&members, dataset.point(id))).collect();
        let mut points: Vec<PointId> = dataset.ids().collect();
        // Level 1 is the most significant position after bit reversal.
        points.sort_by_key(|id| (strings[id.index()].reverse_bits(), *id));
        let keys = points.iter().map(|id| strings[id.index()]).collect();
        let mut trie = ForestTrie {
            members,
            nodes: Vec::new(),
            points,
            keys,
        };
        trie.build_node(0, 0, trie.points.len());
        trie
    }

    fn build_node(&mut self, depth: usize, lo: usize, hi: usize) -> u32 {
        let index = self.nodes.len() as u32;
        self.nodes.push(Node {
            child: [NONE, NONE],
            start: lo as u32,
            count: (hi - lo) as u32,
        });
        let k = self.members.len();
        if depth == k || (depth >= 1 && hi - lo == 1) {
            return index;
        }
        let split = lo + self.keys[lo..hi].partition_point(|key| (key >> depth) & 1 == 0);
        if lo < split {
            let c = self.build_node(depth + 1, lo, split);
            self.nodes[index as usize].child[0] = c;
        }
        if split < hi {
            let c = self.build_node(depth + 1, split, hi);
            self.nodes[index as usize].child[1] = c;
        }
        index
    }

    pub fn depth(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[HashSpec] {
        &self.members
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Hash string of `x` under this tree's members.
    pub fn hash_string(&self, x: PointRef<'_>) -> HashString {
        HashString::from_bits(concat_bits(&self.members, x), self.members.len())
    }

    /// Locates `S_i(q)` given at least the first `level` levels of the
    /// query's hash string.
    pub fn locate(&self, level: usize, query: u64) -> BucketRange {
        debug_assert!(level <= self.depth());
        let mut node = self.nodes[0];
        let mut visits = 1;
        for depth in 0..level {
            if node.is_leaf() {
                // Single point stored above `level`: compare the rest of its string.
                let start = node.start as usize;
                let hit = (self.keys[start] ^ query) & prefix_mask(level) == 0;
                return BucketRange {
                    start,
                    len: usize::from(hit && node.count > 0),
                    node_visits: visits,
                };
            }
            let c = node.child[((query >> depth) & 1) as usize];
            if c == NONE {
                return BucketRange {
                    start: 0,
                    len: 0,
                    node_visits: visits,
                };
            }
            node = self.nodes[c as usize];
            visits += 1;
        }
        BucketRange {
            start: node.start as usize,
            len: node.count as usize,
            node_visits: visits,
        }
    }

    pub fn bucket_points(&self, range: BucketRange) -> &[PointId] {
        &self.points[range.start..range.start + range.len]
    }

    /// Depth of the node holding `id`.
    pub fn stored_depth(&self, id: PointId) -> Option<usize> {
        let pos = self.points.iter().position(|&p| p == id)?;
        let key = self.keys[pos];
        let mut node = self.nodes[0];
        let mut depth = 0;
        while !node.is_leaf() {
            node = self.nodes[node.child[((key >> depth) & 1) as usize] as usize];
            depth += 1;
        }
        Some(depth)
    }

    /// Verifies that every internal node's count is the sum of its children's.
    pub fn counts_are_consistent(&self) -> bool {
        self.nodes.iter().all(|n| {
            n.is_leaf()
                || n.child
                    .iter()
                    .filter(|&&c| c != NONE)
                    .map(|&c| self.nodes[c as usize].count)
                    .sum::<u32>()
                    == n.count
        })
    }

    /// Walks down the query's path one level at a time, yielding
    /// `|S_1(q)|, |S_2(q)|, …` at one node visit per level.
    pub fn walker(&self) -> PrefixWalker {
        PrefixWalker {
            node: 0,
            depth: 0,
            state: WalkState::Internal,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum WalkState {
    Internal,
    /// Passed a single-point leaf at a shallower depth.
    Single { pos: u32 },
    Empty,
}

/// Incremental collision counter along one tree's query path.
#[derive(Clone, Copy, Debug)]
pub struct PrefixWalker {
    node: u32,
    depth: usize,
    state: WalkState,
}

impl PrefixWalker {
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Advances one level and returns the collision count there. `query`
    /// must hold at least `depth + 1` levels.
    pub fn step(&mut self, trie: &ForestTrie, query: u64) -> usize {
        let d = self.depth;
        self.depth += 1;
        match self.state {
            WalkState::Empty => 0,
            WalkState::Single { pos } => {
                if (trie.keys[pos as usize] ^ query) & prefix_mask(self.depth) == 0 {
                    1
                } else {
                    self.state = WalkState::Empty;
                    0
                }
            }
            WalkState::Internal => {
                let node = trie.nodes[self.node as usize];
                if node.is_leaf() {
                    self.state = WalkState::Single { pos: node.start };
                    self.depth -= 1;
                    return self.step(trie, query);
                }
                let c = node.child[((query >> d) & 1) as usize];
                if c == NONE {
                    self.state = WalkState::Empty;
                    0
                } else {
                    self.node = c;
                    trie.nodes[c as usize].count as usize
                }
            }
        }
    }
}

/// Enumerates one bucket `S_{i,j}(q)`.
#[derive(Clone, Debug)]
pub struct LevelCursor<'a> {
    pub tree: usize,
    pub level: usize,
    pub node_visits: usize,
    ids: std::slice::Iter<'a, PointId>,
}

impl Iterator for LevelCursor<'_> {
    type Item = PointId;

    fn next(&mut self) -> Option<PointId> {
        self.ids.next().copied()
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.ids.size_hint()
    }
}

impl ExactSizeIterator for LevelCursor<'_> {}

#[derive(Clone, Debug)]
pub struct Forest {
    dataset: Arc<Dataset>,
    family: LshFamily,
    k: usize,
    seed: RngSeed,
    trees: Vec<ForestTrie>,
}

/// Builds `l` independent tries of depth `k`; tree `j` uses seed path
/// `seed / tree:j / level:ℓ` for its members.
pub fn build_forest(dataset: Arc<Dataset>, family: LshFamily, k: usize, l: usize, seed: RngSeed) -> Result<Forest> {
    if !(1..=MAX_LEVELS).contains(&k) {
        return Err(Error::input(format!("K must be in 1..={MAX_LEVELS}, got {k}")));
    }
    if l == 0 {
        return Err(Error::input("L must be at least 1"));
    }
    if family.dim() != dataset.dim() || family.metric() != dataset.metric() {
        return Err(Error::input("family does not match the dataset"));
    }
    let trees = (0..l)
        .map(|j| ForestTrie::build(&dataset, &family, k, &seed.derive("tree", j as u64)))
        .collect();
    Ok(Forest {
        dataset,
        family,
        k,
        seed,
        trees,
    })
}

impl Forest {
    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn family(&self) -> &LshFamily {
        &self.family
    }

    /// Number of levels `K`.
    pub fn depth(&self) -> usize {
        self.k
    }

    /// Number of trees `L`.
    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn seed(&self) -> &RngSeed {
        &self.seed
    }

    pub fn tree(&self, j: usize) -> &ForestTrie {
        &self.trees[j]
    }

    pub fn trees(&self) -> &[ForestTrie] {
        &self.trees
    }

    fn check(&self, j: usize, i: usize, q: &PointRef<'_>) -> Result<()> {
        if j >= self.trees.len() {
            return Err(Error::input(format!("tree {j} out of range 0..{}", self.trees.len())));
        }
        if i > self.k {
            return Err(Error::input(format!("level {i} out of range 0..={}", self.k)));
        }
        self.dataset.check_query(*q)
    }

    /// The points of `S_{i,j}(q)` (tree `j` is 0-based; level 0 is all of P).
    pub fn bucket(&self, j: usize, i: usize, q: PointRef<'_>) -> Result<LevelCursor<'_>> {
        self.check(j, i, &q)?;
        let tree = &self.trees[j];
        let range = tree.locate(i, tree.hash_string(q).bits());
        Ok(LevelCursor {
            tree: j,
            level: i,
            node_visits: range.node_visits,
            ids: tree.bucket_points(range).iter(),
        })
    }

    /// `|S_{i,j}(q)|` from subtree counts.
    pub fn collision_count(&self, j: usize, i: usize, q: PointRef<'_>) -> Result<usize> {
        self.check(j, i, &q)?;
        let tree = &self.trees[j];
        Ok(tree.locate(i, tree.hash_string(q).bits()).len)
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(ForestTrie::node_count).sum()
    }
}

/// `C(i) = Σ_x f(dist(q, x))^i`, the expected bucket size at level `i`.
pub fn expected_collisions(dataset: &Dataset, family: &LshFamily, q: PointRef<'_>, i: usize) -> Result<f64> {
    if family.metric() != dataset.metric() {
        return Err(Error::Unsupported(format!(
            "{} has no collision function for {} data",
            family.kind(),
            dataset.metric()
        )));
    }
    dataset.check_query(q)?;
    let mut acc = Neumaier::default();
    for id in dataset.ids() {
        acc.add(family.collision_probability_unchecked(dataset.distance_to(id, q)).powi(i as i32));
    }
    Ok(acc.total())
}

const FOREST_MAGIC: &[u8; 4] = b"LSHF";
/// Serialization format version.
pub const FORMAT_VERSION: u32 = 1;

impl Forest {
    /// Writes the versioned binary form: header (magic, version, n, dim,
    /// metric, family, K, L, seed) then each tree's node, point and key
    /// arrays, all little-endian.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(FOREST_MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u64::<LittleEndian>(self.dataset.len() as u64)?;
        w.write_u64::<LittleEndian>(self.dataset.dim() as u64)?;
        w.write_u8(self.dataset.metric().code())?;
        w.write_u8(self.family.kind().code())?;
        w.write_u32::<LittleEndian>(self.k as u32)?;
        w.write_u32::<LittleEndian>(self.trees.len() as u32)?;
        write_seed(w, &self.seed)?;
        for tree in &self.trees {
            w.write_u32::<LittleEndian>(tree.nodes.len() as u32)?;
            for n in &tree.nodes {
                w.write_u32::<LittleEndian>(n.child[0])?;
                w.write_u32::<LittleEndian>(n.child[1])?;
                w.write_u32::<LittleEndian>(n.start)?;
                w.write_u32::<LittleEndian>(n.count)?;
            }
            for p in &tree.points {
                w.write_u32::<LittleEndian>(p.0)?;
            }
            for k in &tree.keys {
                w.write_u64::<LittleEndian>(*k)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    /// Reads a forest written by [`Forest::write_to`] over `dataset`. Hash
    /// members are regenerated from the stored seed.
    pub fn read_from<R: Read>(r: &mut R, dataset: Arc<Dataset>) -> Result<Self> {
        let mut r = CountingReader { inner: r, offset: 0 };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != FOREST_MAGIC {
            return Err(Error::format(0, "not a serialized forest"));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let n = r.read_u64::<LittleEndian>()? as usize;
        let dim = r.read_u64::<LittleEndian>()? as usize;
        let metric_at = r.offset;
        let metric = Metric::from_code(r.read_u8()?).ok_or_else(|| Error::format(metric_at, "unknown metric"))?;
        let kind = FamilyKind::from_code(r.read_u8()?).ok_or_else(|| Error::format(metric_at + 1, "unknown family"))?;
        if n != dataset.len() || dim != dataset.dim() || metric != dataset.metric() {
            return Err(Error::input(format!(
                "forest was built over n={n}, dim={dim}, {metric}; dataset has n={}, dim={}, {}",
                dataset.len(),
                dataset.dim(),
                dataset.metric()
            )));
        }
        let k = r.read_u32::<LittleEndian>()? as usize;
        let l = r.read_u32::<LittleEndian>()? as usize;
        if !(1..=MAX_LEVELS).contains(&k) || l == 0 {
            return Err(Error::format(r.offset, format!("invalid K={k} or L={l}")));
        }
        let seed = read_seed(&mut r)?;
        let family = LshFamily::for_dataset(kind, &dataset)?;
        let mut trees = Vec::with_capacity(l);
        for j in 0..l {
            let at = r.offset;
            let count = r.read_u32::<LittleEndian>()? as usize;
            let mut nodes = Vec::with_capacity(count.min(1 << 24));
            for _ in 0..count {
                let child = [r.read_u32::<LittleEndian>()?, r.read_u32::<LittleEndian>()?];
                let start = r.read_u32::<LittleEndian>()?;
                let count = r.read_u32::<LittleEndian>()?;
                nodes.push(Node { child, start, count });
            }
            let points = (0..n)
                .map(|_| r.read_u32::<LittleEndian>().map(PointId))
                .collect::<std::io::Result<Vec<_>>>()?;
            let keys = (0..n)
                .map(|_| r.read_u64::<LittleEndian>())
                .collect::<std::io::Result<Vec<_>>>()?;
            let valid = !nodes.is_empty()
                && nodes.iter().all(|nd| {
                    nd.child.iter().all(|&c| c == NONE || (c as usize) < nodes.len())
                        && nd.start as usize + nd.count as usize <= n
                })
                && points.iter().all(|p| p.index() < n);
            if !valid {
                return Err(Error::format(at, format!("tree {j} is corrupt")));
            }
            let members = sample_members(&family, &seed.derive("tree", j as u64), k);
            trees.push(ForestTrie {
                members,
                nodes,
                points,
                keys,
            });
        }
        Ok(Forest {
            dataset,
            family,
            k,
            seed,
            trees,
        })
    }
}

struct CountingReader<'a, R> {
    inner: &'a mut R,
    offset: u64,
}

impl<R: Read> Read for CountingReader<'_, R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.offset += n as u64;
        Ok(n)
    }
}

pub(crate) fn write_seed<W: Write>(w: &mut W, seed: &RngSeed) -> Result<()> {
    w.write_u64::<LittleEndian>(seed.master())?;
    w.write_u32::<LittleEndian>(seed.path().len() as u32)?;
    for (tag, index) in seed.path() {
        w.write_u32::<LittleEndian>(tag.len() as u32)?;
        w.write_all(tag.as_bytes())?;
        w.write_u64::<LittleEndian>(*index)?;
    }
    Ok(())
}

pub(crate) fn read_seed<R: Read>(r: &mut R) -> Result<RngSeed> {
    let mut seed = RngSeed::new(r.read_u64::<LittleEndian>()?);
    let steps = r.read_u32::<LittleEndian>()?;
    for _ in 0..steps {
        let len = r.read_u32::<LittleEndian>()? as usize;
        if len > 1024 {
            return Err(Error::format(0, "seed tag too long"));
        }
        let mut tag = vec![0u8; len];
        r.read_exact(&mut tag)?;
        let tag = String::from_utf8(tag).map_err(|_| Error::format(0, "seed tag is not UTF-8"))?;
        let index = r.read_u64::<LittleEndian>()?;
        seed = seed.derive(&tag, index);
    }
    Ok(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::BitVector;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_bits(n: usize, dim: usize, seed: u64) -> Arc<Dataset> {
        let mut rng = RngSeed::new(seed).rng();
        let pts = (0..n)
            .map(|_| BitVector::from_bools(&(0..dim).map(|_| rng.random::<bool>()).collect::<Vec<_>>()))
            .collect();
        Arc::new(Dataset::from_bits(pts).unwrap())
    }

    /// Shortest prefix length (≥ 1) of point `x`'s string that no other
    /// point shares, or `k`, by scanning every string.
    fn naive_unique_prefix(strings: &[HashString], x: usize, k: usize) -> usize {
        (1..=k)
            .find(|&l| {
                strings
                    .iter()
                    .enumerate()
                    .all(|(y, s)| y == x || !s.shares_prefix(&strings[x], l))
            })
            .unwrap_or(k)
    }

    fn naive_bucket(forest: &Forest, j: usize, i: usize, q: PointRef<'_>) -> Vec<PointId> {
        let tree = forest.tree(j);
        let hq = tree.hash_string(q);
        forest
            .dataset()
            .ids()
            .filter(|&id| tree.hash_string(forest.dataset().point(id)).shares_prefix(&hq, i))
            .collect()
    }

    #[test]
    fn single_point_is_stored_at_depth_one() {
        let data = random_bits(1, 8, 1);
        let f = build_forest(data, LshFamily::bit_sampling(8), 5, 4, RngSeed::new(1)).unwrap();
        for tree in f.trees() {
            assert_eq!(tree.stored_depth(PointId(0)), Some(1));
            assert_eq!(tree.node_count(), 2);
        }
    }

    #[test]
    fn identical_points_share_the_deepest_leaf() {
        let p = BitVector::parse("10110010").unwrap();
        let data = Arc::new(Dataset::from_bits(vec![p; 6]).unwrap());
        let f = build_forest(data.clone(), LshFamily::bit_sampling(8), 7, 3, RngSeed::new(2)).unwrap();
        for tree in f.trees() {
            for id in data.ids() {
                assert_eq!(tree.stored_depth(id), Some(7));
            }
        }
    }

    #[test]
    fn stored_depth_matches_naive_unique_prefix() {
        // 8 distinct points in dimension 8.
        let rows = ["00000000", "11111111", "10101010", "01010101", "11110000", "00001111", "11001100", "00110011"];
        let data = Arc::new(Dataset::from_bits(rows.iter().map(|r| BitVector::parse(r).unwrap()).collect()).unwrap());
        let f = build_forest(data.clone(), LshFamily::bit_sampling(8), 8, 20, RngSeed::new(3)).unwrap();
        for tree in f.trees() {
            let strings: Vec<HashString> = data.ids().map(|id| tree.hash_string(data.point(id))).collect();
            for id in data.ids() {
                assert_eq!(tree.stored_depth(id), Some(naive_unique_prefix(&strings, id.index(), 8)));
            }
            assert!(tree.counts_are_consistent());
        }
    }

    #[test]
    fn level_zero_and_full_depth_buckets() {
        let data = random_bits(20, 16, 4);
        let f = build_forest(data.clone(), LshFamily::bit_sampling(16), 10, 3, RngSeed::new(4)).unwrap();
        let q = data.point(PointId(7)).to_owned();
        for j in 0..3 {
            assert_eq!(f.bucket(j, 0, q.as_ref()).unwrap().count(), 20);
            assert_eq!(f.collision_count(j, 0, q.as_ref()).unwrap(), 20);
            assert!(f.bucket(j, 10, q.as_ref()).unwrap().any(|id| id == PointId(7)));
        }
        assert!(f.bucket(3, 0, q.as_ref()).is_err());
        assert!(f.bucket(0, 11, q.as_ref()).is_err());
    }

    #[test]
    fn walker_agrees_with_locate() {
        let data = random_bits(64, 16, 5);
        let f = build_forest(data.clone(), LshFamily::bit_sampling(16), 12, 6, RngSeed::new(5)).unwrap();
        let q = BitVector::from_words(16, vec![0xbeef]).unwrap();
        for tree in f.trees() {
            let key = tree.hash_string(q.as_point()).bits();
            let mut w = tree.walker();
            let mut prev = data.len();
            for i in 1..=12 {
                let c = w.step(tree, key);
                assert_eq!(c, tree.locate(i, key).len);
                assert!(c <= prev);
                prev = c;
            }
        }
    }

    #[test]
    fn expected_collisions_examples() {
        let data = random_bits(10, 8, 6);
        let fam = LshFamily::bit_sampling(8);
        let q = data.point(PointId(0)).to_owned();
        assert_eq!(expected_collisions(&data, &fam, q.as_ref(), 0).unwrap(), 10.0);
        let same = Arc::new(Dataset::from_bits(vec![BitVector::parse("0101").unwrap(); 5]).unwrap());
        let q = BitVector::parse("0101").unwrap();
        for i in 0..6 {
            assert_eq!(expected_collisions(&same, &LshFamily::bit_sampling(4), q.as_point(), i).unwrap(), 5.0);
        }
        let dense = Dataset::from_rows(Metric::Euclidean, vec![vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            expected_collisions(&dense, &LshFamily::sign_random_projection(2), PointRef::Dense(&[1.0, 0.0]), 1),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn mean_collision_count_matches_expectation() {
        let data = random_bits(24, 8, 7);
        let fam = LshFamily::bit_sampling(8);
        let q = BitVector::parse("01100101").unwrap();
        let trees = 10_000;
        let f = build_forest(data.clone(), fam, 3, trees, RngSeed::new(8)).unwrap();
        for i in 1..=3 {
            let counts: Vec<f64> = (0..trees)
                .map(|j| f.collision_count(j, i, q.as_point()).unwrap() as f64)
                .collect();
            let mean = counts.iter().sum::<f64>() / trees as f64;
            let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (trees - 1) as f64;
            let expected = expected_collisions(&data, &fam, q.as_point(), i).unwrap();
            assert!((mean - expected).abs() <= 3.0 * (var / trees as f64).sqrt(), "level {i}");
        }
    }

    #[test]
    fn serialization_round_trip_and_version_check() {
        let data = random_bits(40, 24, 9);
        let f = build_forest(data.clone(), LshFamily::bit_sampling(24), 9, 5, RngSeed::new(10).derive("forest", 2)).unwrap();
        let bytes = f.to_bytes();
        let g = Forest::read_from(&mut bytes.as_slice(), data.clone()).unwrap();
        assert_eq!(g.to_bytes(), bytes);
        let q = BitVector::from_words(24, vec![0xabcdef]).unwrap();
        for j in 0..5 {
            for i in 0..=9 {
                let a: Vec<_> = f.bucket(j, i, q.as_point()).unwrap().collect();
                let b: Vec<_> = g.bucket(j, i, q.as_point()).unwrap().collect();
                assert_eq!(a, b);
            }
        }
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            Forest::read_from(&mut bad.as_slice(), data.clone()),
            Err(Error::VersionMismatch { found: 2, .. })
        ));
        let other = random_bits(41, 24, 9);
        assert!(Forest::read_from(&mut bytes.as_slice(), other).is_err());
        let truncated = &bytes[..bytes.len() - 3];
        assert!(Forest::read_from(&mut &truncated[..], data).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn buckets_match_naive_prefix_filter(n in 1usize..64, dim in 2usize..20, k in 1usize..16, seed in any::<u64>()) {
            let data = random_bits(n, dim, seed);
            let f = build_forest(data.clone(), LshFamily::bit_sampling(dim), k, 4, RngSeed::new(seed ^ 1)).unwrap();
            let mut rng = RngSeed::new(seed ^ 2).rng();
            let q = BitVector::from_bools(&(0..dim).map(|_| rng.random::<bool>()).collect::<Vec<_>>());
            for j in 0..4 {
                prop_assert!(f.tree(j).counts_are_consistent());
                for i in 0..=k {
                    let cursor = f.bucket(j, i, q.as_point()).unwrap();
                    prop_assert!(cursor.node_visits <= i + 1);
                    let mut got: Vec<_> = cursor.collect();
                    got.sort();
                    prop_assert_eq!(&got, &naive_bucket(&f, j, i, q.as_point()));
                    prop_assert_eq!(f.collision_count(j, i, q.as_point()).unwrap(), got.len());
                }
            }
        }
    }
}
