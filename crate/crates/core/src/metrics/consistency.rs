//! k-nearest-neighbour label consistency.
//!
//! Neighbours are ordered by `(squared Euclidean distance, index)`, so ties
//! go to the lowest index and the result does not depend on the search
//! structure. The k-d tree and the exhaustive scan compute distances with
//! the same summation order and therefore agree bit for bit.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::outcome::Measured;
use crate::dataset::TabularDataset;
use crate::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsistencyConfig {
    pub k: usize,
    /// Z-score every column (constant columns become zero) before measuring
    /// distances. Off by default: distances use the encoded features as is.
    pub standardize: bool,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            k: 5,
            standardize: false,
        }
    }
}

/// `1 - (1/n) * sum_i |y_i - mean(y over the k nearest neighbours of i)|`,
/// unweighted, self excluded.
pub fn consistency(ds: &TabularDataset, k: usize) -> Measured {
    consistency_with(
        ds,
        &ConsistencyConfig {
            k,
            ..Default::default()
        },
    )
}

pub fn consistency_with(ds: &TabularDataset, cfg: &ConsistencyConfig) -> Measured {
    let points = Points::new(ds, cfg)?;
    let labels = ds.labels();
    let k = cfg.k;
    // identical rows are searched once; a row's duplicates are its nearest
    // neighbours, lowest index first
    let groups = duplicate_groups(&points);
    let representatives: Vec<usize> = groups.iter().map(|g| g[0]).collect();
    let unique = points.select(&representatives);
    let tree = KdTree::build(&unique);
    let mut heap = BinaryHeap::with_capacity(k + 1);
    let mut per_row = vec![0.0; points.n];
    for (g, members) in groups.iter().enumerate() {
        let own = members.len() - 1;
        heap.clear();
        if own < k {
            tree.knn(&unique, g, &groups, k - own, &mut heap);
        }
        let external = heap.iter().filter(|c| labels[c.index] == 1).count();
        for &i in members {
            let neighbours = members.iter().copied().filter(|&j| j != i).take(k);
            let positives = external + neighbours.filter(|&j| labels[j] == 1).count();
            per_row[i] = (f64::from(labels[i]) - positives as f64 / k as f64).abs();
        }
    }
    Ok(1.0 - per_row.iter().sum::<f64>() / points.n as f64)
}

/// Row indices grouped by identical feature vectors; each group ascending.
fn duplicate_groups(points: &Points) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..points.n).collect();
    let cmp = |a: &usize, b: &usize| {
        points
            .row(*a)
            .iter()
            .zip(points.row(*b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    };
    order.sort_by(|a, b| cmp(a, b).then(a.cmp(b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if cmp(&g[0], &i).is_eq() => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups.sort_by_key(|g| g[0]);
    groups
}

/// Exhaustive-scan variant of [`consistency_with`]; quadratic in `n`.
pub fn consistency_brute_force(ds: &TabularDataset, cfg: &ConsistencyConfig) -> Measured {
    let points = Points::new(ds, cfg)?;
    let mut total = 0.0;
    let mut candidates: Vec<Candidate> = Vec::with_capacity(points.n);
    for i in 0..points.n {
        candidates.clear();
        candidates.extend((0..points.n).filter(|&j| j != i).map(|j| Candidate {
            dist2: points.dist2(i, j),
            index: j,
        }));
        candidates.sort_unstable();
        let nearest = candidates[..cfg.k].iter().map(|c| c.index);
        total += disagreement(ds.labels(), i, nearest, cfg.k);
    }
    Ok(1.0 - total / points.n as f64)
}

fn disagreement(labels: &[u8], i: usize, neighbours: impl Iterator<Item = usize>, k: usize) -> f64 {
    let positives = neighbours.filter(|&j| labels[j] == 1).count();
    (f64::from(labels[i]) - positives as f64 / k as f64).abs()
}

struct Points {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl Points {
    fn new(ds: &TabularDataset, cfg: &ConsistencyConfig) -> Result<Self, MetricError> {
        let (n, d) = (ds.n(), ds.d());
        if cfg.k == 0 || n <= cfg.k {
            return Err(MetricError::TooFewRecords { n, k: cfg.k });
        }
        // -0.0 + 0.0 == +0.0, so equal coordinates compare equal bitwise
        let mut data: Vec<f64> = ds.features().iter().map(|v| v + 0.0).collect();
        if cfg.standardize {
            for j in 0..d {
                let mean = (0..n).map(|i| data[i * d + j]).sum::<f64>() / n as f64;
                let var = (0..n).map(|i| (data[i * d + j] - mean).powi(2)).sum::<f64>() / n as f64;
                let sd = var.sqrt();
                for i in 0..n {
                    let v = &mut data[i * d + j];
                    *v = if sd > 0.0 { (*v - mean) / sd + 0.0 } else { 0.0 };
                }
            }
        }
        Ok(Self { data, n, d })
    }

    fn select(&self, rows: &[usize]) -> Self {
        Self {
            data: rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            n: rows.len(),
            d: self.d,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    fn dist2(&self, a: usize, b: usize) -> f64 {
        self.row(a)
            .iter()
            .zip(self.row(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Left subtrees hold coordinates `<= value`, right subtrees `>= value`.
/// Every node keeps the bounding box of its points and the smallest point id
/// below it.
struct KdTree {
    nodes: Vec<Node>,
    order: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    min_id: Vec<usize>,
    d: usize,
}

impl KdTree {
    fn build(points: &Points) -> Self {
        let mut tree = KdTree {
            nodes: Vec::new(),
            order: (0..points.n).collect(),
            lower: Vec::new(),
            upper: Vec::new(),
            min_id: Vec::new(),
            d: points.d,
        };
        tree.build_node(points, 0, points.n);
        tree
    }

    fn build_node(&mut self, points: &Points, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        let slice = &self.order[start..end];
        self.min_id.push(*slice.iter().min().expect("nodes are non-empty"));
        let (mut dim, mut spread) = (0, 0.0);
        for j in 0..points.d {
            let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = points.data[i * points.d + j];
                (lo.min(v), hi.max(v))
            });
            self.lower.push(lo);
            self.upper.push(hi);
            if hi - lo > spread {
                (dim, spread) = (j, hi - lo);
            }
        }
        if end - start <= LEAF_SIZE || spread == 0.0 {
            return id;
        }
        let slice = &mut self.order[start..end];
        let mid = slice.len() / 2;
        let key = |i: &usize| points.data[i * points.d + dim];
        slice.select_nth_unstable_by(mid, |a, b| key(a).total_cmp(&key(b)));
        let value = key(&slice[mid]);
        let left = self.build_node(points, start, start + mid);
        let right = self.build_node(points, start + mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    /// Squared distance from `q` to the node's box, summed in coordinate
    /// order. Each term is at most the matching term of the distance to any
    /// point inside, and rounding is monotone, so the bound never exceeds a
    /// computed point distance.
    fn box_dist2(&self, node: usize, q: &[f64]) -> f64 {
        let lo = &self.lower[node * self.d..(node + 1) * self.d];
        let hi = &self.upper[node * self.d..(node + 1) * self.d];
        q.iter()
            .zip(lo.iter().zip(hi))
            .map(|(&v, (&l, &h))| {
                let gap = if v < l {
                    l - v
                } else if v > h {
                    v - h
                } else {
                    0.0
                };
                gap * gap
            })
            .sum()
    }

    /// The `m` nearest `(distance, row index)` pairs outside the query's own
    /// group; `groups[u]` lists the rows at unique point `u`, ascending, and
    /// groups are ordered by their first row.
    fn knn(&self, points: &Points, query: usize, groups: &[Vec<usize>], m: usize, heap: &mut BinaryHeap<Candidate>) {
        self.visit(0, points, query, groups, m, heap);
    }

    fn visit(
        &self,
        node: usize,
        points: &Points,
        query: usize,
        groups: &[Vec<usize>],
        m: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        if heap.len() == m {
            let worst = heap.peek().expect("heap holds m items");
            let bound = self.box_dist2(node, points.row(query));
            let first_row = groups[self.min_id[node]][0];
            if bound > worst.dist2 || (bound == worst.dist2 && first_row > worst.index) {
                return;
            }
        }
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &u in &self.order[start..end] {
                    if u == query {
                        continue;
                    }
                    let dist2 = points.dist2(query, u);
                    for &index in &groups[u] {
                        let c = Candidate { dist2, index };
                        if heap.len() < m {
                            heap.push(c);
                        } else if c < *heap.peek().expect("heap holds m items") {
                            heap.pop();
                            heap.push(c);
                        } else {
                            // later rows of the group have larger indices
                            break;
                        }
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = points.data[query * points.d + dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.visit(near, points, query, groups, m, heap);
                self.visit(far, points, query, groups, m, heap);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn line(labels: Vec<u8>) -> TabularDataset {
        let n = labels.len();
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let s = (0..n).map(|i| (i % 2) as u8).collect();
        TabularDataset::from_parts(x, labels, s, "line").unwrap()
    }

    #[test]
    fn six_points_on_a_line() {
        // only rows 2 and 3 see a nearest neighbour with the other label;
        // row 2 ties between 1 and 3, and the lower index wins
        let ds = line(vec![1, 1, 1, 0, 0, 0]);
        let v = consistency(&ds, 1).unwrap();
        assert!((v - 5.0 / 6.0).abs() < 1e-15, "{v}");
        let cfg = ConsistencyConfig { k: 1, standardize: false };
        assert_eq!(consistency_brute_force(&ds, &cfg).unwrap(), v);
    }

    #[test]
    fn six_points_with_a_tight_boundary_pair() {
        // rows 2 and 3 are each other's nearest neighbour: two disagreements
        let pos = [0.0, 1.0, 3.0, 3.5, 5.5, 6.5];
        let x = Array2::from_shape_fn((6, 1), |(i, _)| pos[i]);
        let ds = TabularDataset::from_parts(x, vec![1, 1, 1, 0, 0, 0], vec![0, 1, 0, 1, 0, 1], "l")
            .unwrap();
        assert!((consistency(&ds, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_labels_are_fully_consistent() {
        assert_eq!(consistency(&line(vec![1; 9]), 5).unwrap(), 1.0);
    }

    #[test]
    fn needs_more_than_k_records() {
        assert_eq!(
            consistency(&line(vec![1, 0, 1]), 5),
            Err(MetricError::TooFewRecords { n: 3, k: 5 })
        );
    }

    #[test]
    fn constant_column_standardises_to_zero() {
        let x = Array2::from_shape_fn((12, 2), |(i, j)| if j == 0 { 7.0 } else { i as f64 });
        let y = (0..12).map(|i| u8::from(i < 6)).collect();
        let s = (0..12).map(|i| (i % 2) as u8).collect();
        let ds = TabularDataset::from_parts(x, y, s, "c").unwrap();
        let cfg = ConsistencyConfig { k: 3, standardize: true };
        let v = consistency_with(&ds, &cfg).unwrap();
        assert!((0.0..=1.0).contains(&v));
        assert_eq!(v, consistency_brute_force(&ds, &cfg).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn tree_matches_exhaustive_scan(
            n in 20usize..120,
            d in 1usize..5,
            k in 1usize..7,
            grid in any::<bool>(),
            standardize in any::<bool>(),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // coarse grids force many exact distance ties
            let x = Array2::from_shape_fn((n, d), |_| {
                if grid { rng.random_range(0..3) as f64 } else { rng.random::<f64>() }
            });
            let y = (0..n).map(|_| rng.random_range(0..2u8)).collect();
            let s = (0..n).map(|i| (i % 2) as u8).collect();
            let ds = TabularDataset::from_parts(x, y, s, "p").unwrap();
            let cfg = ConsistencyConfig { k, standardize };
            let fast = consistency_with(&ds, &cfg).unwrap();
            prop_assert_eq!(fast, consistency_brute_force(&ds, &cfg).unwrap());
            prop_assert!((0.0..=1.0).contains(&fast));
        }
    }
}
