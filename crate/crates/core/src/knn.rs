//! Exact nearest-neighbour queries under the maximum (L∞) norm.
//!
//! Queries are exhaustive scans with a bounded max-heap and early exit on
//! the partial distance. Ties are broken by ascending row index, so results
//! are deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};

/// N samples of dimension d, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn from_flat(d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("sample dimension must be at least 1".into()));
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::InvalidParameter(format!(
                "{} values do not form rows of dimension {d}",
                data.len()
            )));
        }
        let n = data.len() / d;
        if n < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 samples, got {n}")));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite value at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { n, d, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::InvalidParameter(format!(
                    "row {i} has {} columns, expected {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(d, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// Applies `f` to every coordinate, keeping the shape.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_flat(self.d, self.data.iter().map(|&v| f(v)).collect())
    }
}

/// L∞ distance between two rows.
#[inline]
pub fn chebyshev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| {
        let t = (x - y).abs();
        if t > m {
            t
        } else {
            m
        }
    })
}

/// Nearest neighbours of one row, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist: f64,
    idx: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.idx.cmp(&other.idx))
    }
}

const CHUNK: usize = 8;

/// The `m` nearest neighbours of row `i`, excluding `i` itself.
pub fn knn_query(s: &SampleSet, i: usize, m: usize) -> Result<NeighborList> {
    check_query(s, i, m)?;
    let xi = s.row(i);
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(m + 1);
    for j in 0..s.n {
        if j == i {
            continue;
        }
        let xj = s.row(j);
        if heap.len() < m {
            heap.push(Candidate {
                dist: chebyshev(xi, xj),
                idx: j,
            });
            continue;
        }
        // Rows are scanned in index order, so an equal distance never
        // displaces a heap member.
        let worst = heap.peek().map(|c| c.dist).unwrap_or(f64::INFINITY);
        let mut dist = 0.0f64;
        let mut pruned = false;
        for (a, b) in xi.chunks(CHUNK).zip(xj.chunks(CHUNK)) {
            dist = dist.max(chebyshev(a, b));
            if dist >= worst {
                pruned = true;
                break;
            }
        }
        if !pruned {
            heap.pop();
            heap.push(Candidate { dist, idx: j });
        }
    }
    let sorted = heap.into_sorted_vec();
    Ok(NeighborList {
        indices: sorted.iter().map(|c| c.idx).collect(),
        distances: sorted.iter().map(|c| c.dist).collect(),
    })
}

/// L∞ distance from row `i` to its k-th nearest neighbour.
pub fn kth_distance(s: &SampleSet, i: usize, k: usize) -> Result<f64> {
    let list = knn_query(s, i, k)?;
    Ok(*list.distances.last().expect("k >= 1"))
}

fn check_query(s: &SampleSet, i: usize, m: usize) -> Result<()> {
    if i >= s.n {
        return Err(Error::InvalidParameter(format!("row {i} out of range for {} samples", s.n)));
    }
    if m == 0 || m >= s.n {
        return Err(Error::InvalidParameter(format!(
            "neighbour count must satisfy 1 <= m <= n-1 (m={m}, n={})",
            s.n
        )));
    }
    Ok(())
}

/// The `m` nearest neighbours of every row.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    m: usize,
    indices: Vec<usize>,
    distances: Vec<f64>,
}

impl NeighborTable {
    pub fn build(s: &SampleSet, m: usize, exec: Execution) -> Result<Self> {
        check_query(s, 0, m)?;
        let lists = map_indexed(exec, s.n, |i| knn_query(s, i, m));
        let mut indices = Vec::with_capacity(s.n * m);
        let mut distances = Vec::with_capacity(s.n * m);
        for list in lists {
            let list = list?;
            indices.extend_from_slice(&list.indices);
            distances.extend_from_slice(&list.distances);
        }
        Ok(Self { m, indices, distances })
    }

    /// Neighbours stored per row.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.indices.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self, i: usize) -> &[usize] {
        &self.indices[i * self.m..(i + 1) * self.m]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.m..(i + 1) * self.m]
    }

    /// Distance to the k-th neighbour (1-based), k ≤ m.
    pub fn kth_distance(&self, i: usize, k: usize) -> f64 {
        self.distances(i)[k - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(points: &[f64]) -> SampleSet {
        SampleSet::from_flat(1, points.to_vec()).unwrap()
    }

    /// Exhaustive oracle: sort every other row by (distance, index).
    fn brute_force(s: &SampleSet, i: usize, m: usize) -> NeighborList {
        let mut all: Vec<(f64, usize)> = (0..s.n())
            .filter(|&j| j != i)
            .map(|j| {
                let d = s.row(i).iter().zip(s.row(j)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                (d, j)
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(m);
        NeighborList {
            indices: all.iter().map(|t| t.1).collect(),
            distances: all.iter().map(|t| t.0).collect(),
        }
    }

    #[test]
    fn one_dimensional_example() {
        let s = line(&[0.0, 1.0, 2.0, 4.0]);
        let r = knn_query(&s, 0, 2).unwrap();
        assert_eq!(r.indices, vec![1, 2]);
        assert_eq!(r.distances, vec![1.0, 2.0]);
        assert_eq!(kth_distance(&s, 0, 1).unwrap(), 1.0);
        assert_eq!(kth_distance(&s, 3, 2).unwrap(), 3.0);
    }

    #[test]
    fn uses_max_norm() {
        let s = SampleSet::from_rows(&[[0.0, 0.0], [1.0, 0.5], [3.0, 3.0]]).unwrap();
        let r = knn_query(&s, 0, 1).unwrap();
        assert_eq!(r.indices, vec![1]);
        assert_eq!(r.distances, vec![1.0]);
    }

    #[test]
    fn ties_break_by_index() {
        let s = line(&[0.0, 1.0, -1.0, 1.0, -1.0]);
        let r = knn_query(&s, 0, 4).unwrap();
        assert_eq!(r.indices, vec![1, 2, 3, 4]);
    }

    #[test]
    fn duplicates_give_zero_distance() {
        let s = line(&[0.0, 0.0, 1.0]);
        assert_eq!(kth_distance(&s, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_counts() {
        let s = line(&[0.0, 1.0, 2.0]);
        assert!(knn_query(&s, 0, 3).is_err());
        assert!(knn_query(&s, 0, 0).is_err());
        assert!(knn_query(&s, 5, 1).is_err());
        assert!(SampleSet::from_flat(1, vec![1.0]).is_err());
        assert!(SampleSet::from_flat(2, vec![1.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn matches_brute_force_in_five_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let data: Vec<f64> = (0..200 * 5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = SampleSet::from_flat(5, data).unwrap();
        for i in 0..200 {
            assert_eq!(knn_query(&s, i, 10).unwrap(), brute_force(&s, i, 10));
        }
        let table = NeighborTable::build(&s, 10, Execution::Parallel).unwrap();
        for i in 0..200 {
            assert_eq!(table.indices(i), brute_force(&s, i, 10).indices.as_slice());
        }
    }

    #[test]
    fn matches_brute_force_with_many_ties() {
        // Integer grid coordinates produce heavy distance ties.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f64> = (0..150 * 3).map(|_| rng.gen_range(0..6) as f64).collect();
        let s = SampleSet::from_flat(3, data).unwrap();
        for i in 0..150 {
            assert_eq!(knn_query(&s, i, 20).unwrap(), brute_force(&s, i, 20));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        fn sample_set() -> impl Strategy<Value = SampleSet> {
            (1usize..20, 2usize..120).prop_flat_map(|(d, n)| {
                prop::collection::vec(-5.0f64..5.0, n * d)
                    .prop_map(move |data| SampleSet::from_flat(d, data).unwrap())
            })
        }

        proptest! {
            #[test]
            fn brute_force_equivalence(s in sample_set(), seed in 0u64..1000) {
                let i = (seed as usize) % s.n();
                let m = 1 + (seed as usize) % (s.n() - 1);
                prop_assert_eq!(knn_query(&s, i, m).unwrap(), brute_force(&s, i, m));
            }

            #[test]
            fn kth_distance_nondecreasing(s in sample_set(), seed in 0u64..1000) {
                let i = (seed as usize) % s.n();
                let list = knn_query(&s, i, s.n() - 1).unwrap();
                prop_assert!(list.distances.windows(2).all(|w| w[0] <= w[1]));
            }

            #[test]
            fn row_permutation_preserves_distances(s in sample_set(), seed in 0u64..1000) {
                let n = s.n();
                let mut perm: Vec<usize> = (0..n).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for a in (1..n).rev() {
                    perm.swap(a, rng.gen_range(0..=a));
                }
                let rows: Vec<&[f64]> = perm.iter().map(|&p| s.row(p)).collect();
                let t = SampleSet::from_rows(&rows).unwrap();
                let m = (n - 1).min(5);
                for (new_i, &old_i) in perm.iter().enumerate() {
                    let a = knn_query(&s, old_i, m).unwrap().distances;
                    let b = knn_query(&t, new_i, m).unwrap().distances;
                    prop_assert_eq!(a, b);
                }
            }
        }
    }
}
