//! Directed graphs with self-loops and their column-stochastic weights.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attempts made by [`build_geometric_digraph`] before giving up.
pub const GEOMETRIC_RETRY_BUDGET: usize = 1000;

/// A directed graph on nodes `0..n`. Every node is its own out-neighbor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    out_neighbors: Vec<Vec<usize>>,
}

/// On-disk form: `{ "n": .., "edges": [[src, dst], ..] }`, self-loops implied.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

impl Digraph {
    /// Builds a digraph from directed edges `(src, dst)`. Self-loops are
    /// added for every node; duplicate edges are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("node count must be at least 1".into()));
        }
        let mut out: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(src, dst) in edges {
            if src >= n || dst >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({src}, {dst}) out of range for n = {n}"
                )));
            }
            if src == dst {
                continue;
            }
            if out[src].contains(&dst) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({src}, {dst})")));
            }
            out[src].push(dst);
        }
        for list in &mut out {
            list.sort_unstable();
        }
        Ok(Digraph { n, out_neighbors: out })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Sorted out-neighbors of `i`, including `i` itself.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_neighbors[i]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_neighbors[i].len()
    }

    /// Directed edges excluding self-loops, in (src, dst) order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out_neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j != i).map(move |&j| (i, j)))
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.out_neighbors[src].binary_search(&dst).is_ok()
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            n: self.n,
            edges: self.edges().map(|(s, d)| [s, d]).collect(),
        }
    }

    pub fn from_file(file: &GraphFile) -> Result<Self> {
        let edges: Vec<(usize, usize)> = file.edges.iter().map(|e| (e[0], e[1])).collect();
        Digraph::from_edges(file.n, &edges)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(s)?;
        Digraph::from_file(&file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Digraph::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Node `i` sends to `(i + 2^j) mod n` for every `2^j < n`, plus itself.
pub fn build_exponential_digraph(n: usize) -> Result<Digraph> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        let mut hop = 1;
        while hop < n {
            edges.push((i, (i + hop) % n));
            hop <<= 1;
        }
    }
    Digraph::from_edges(n, &edges)
}

/// Random geometric digraph on the unit square.
///
/// Pairs closer than `radius` get edges both ways, then every non-loop edge
/// is dropped independently with probability `drop_prob`. Positions are
/// resampled until the result is strongly connected.
pub fn build_geometric_digraph(n: usize, radius: f64, drop_prob: f64, seed: u64) -> Result<Digraph> {
    if n == 0 {
        return Err(Error::InvalidGraph("node count must be at least 1".into()));
    }
    if !(radius > 0.0 && radius <= std::f64::consts::SQRT_2 + 1e-12) {
        return Err(Error::InvalidGraph(format!("radius {radius} outside (0, sqrt 2]")));
    }
    if !(0.0..1.0).contains(&drop_prob) {
        return Err(Error::InvalidGraph(format!("drop probability {drop_prob} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r2 = radius * radius;
    for _ in 0..GEOMETRIC_RETRY_BUDGET {
        let pos: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (dx, dy) = (pos[i].0 - pos[j].0, pos[i].1 - pos[j].1);
                // always consume the draw so the stream layout is independent of geometry
                let keep = rng.random::<f64>() >= drop_prob;
                if dx * dx + dy * dy <= r2 && keep {
                    edges.push((i, j));
                }
            }
        }
        let g = Digraph::from_edges(n, &edges)?;
        if is_strongly_connected(&g) {
            return Ok(g);
        }
    }
    Err(Error::RetryBudgetExhausted {
        budget: GEOMETRIC_RETRY_BUDGET,
        radius,
        drop_prob,
    })
}

fn reach_count(n: usize, start: usize, next: impl Fn(usize) -> Vec<usize>) -> usize {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for v in next(u) {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count
}

/// True iff every node reaches every other node.
///
/// Checks forward reachability from node 0 and reachability to node 0 on the
/// reversed graph.
pub fn is_strongly_connected(g: &Digraph) -> bool {
    let n = g.n();
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, d) in g.edges() {
        reverse[d].push(s);
    }
    reach_count(n, 0, |u| g.out_neighbors(u).to_vec()) == n
        && reach_count(n, 0, |u| reverse[u].clone()) == n
}

/// Column-stochastic mixing matrix. Entry `(j, i)` is the weight node `i`
/// assigns to the message it pushes to `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    /// Wraps a dense matrix after checking it is square, non-negative and
    /// column stochastic to 1e-12.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidGraph("weights must be finite and non-negative".into()));
        }
        for (i, col) in m.column_iter().enumerate() {
            let s: f64 = col.sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidGraph(format!("column {i} sums to {s}, not 1")));
            }
        }
        Ok(WeightMatrix(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// `b_ji = 1 / |N_i^out|` for each out-neighbor `j` of `i`.
pub fn column_stochastic_weights(g: &Digraph) -> Result<WeightMatrix> {
    if !is_strongly_connected(g) {
        return Err(Error::NotStronglyConnected);
    }
    let n = g.n();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let w = 1.0 / g.out_degree(i) as f64;
        for &j in g.out_neighbors(i) {
            m[(j, i)] = w;
        }
    }
    WeightMatrix::new(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bfs_all_pairs(g: &Digraph) -> bool {
        (0..g.n()).all(|s| reach_count(g.n(), s, |u| g.out_neighbors(u).to_vec()) == g.n())
    }

    #[test]
    fn exponential_small_cases() {
        let g1 = build_exponential_digraph(1).unwrap();
        assert_eq!(g1.out_neighbors(0), &[0]);
        let g2 = build_exponential_digraph(2).unwrap();
        assert_eq!(g2.out_neighbors(0), &[0, 1]);
        assert_eq!(g2.out_neighbors(1), &[0, 1]);
        assert!(matches!(build_exponential_digraph(12), Err(Error::NotPowerOfTwo(12))));
        assert!(build_exponential_digraph(0).is_err());
    }

    #[test]
    fn exponential_sixteen() {
        let g = build_exponential_digraph(16).unwrap();
        for i in 0..16 {
            assert_eq!(g.out_degree(i), 5);
            for hop in [1, 2, 4, 8] {
                assert!(g.has_edge(i, (i + hop) % 16));
            }
        }
        assert!(bfs_all_pairs(&g));
        assert!(is_strongly_connected(&g));
    }

    #[test]
    fn strong_connectivity_cases() {
        let cycle = Digraph::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        assert!(is_strongly_connected(&cycle));
        let loops = Digraph::from_edges(2, &[]).unwrap();
        assert!(!is_strongly_connected(&loops));
        let one_way = Digraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(!is_strongly_connected(&one_way));
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Digraph::from_edges(2, &[(0, 2)]).is_err());
        assert!(Digraph::from_edges(2, &[(0, 1), (0, 1)]).is_err());
        assert!(Digraph::from_edges(0, &[]).is_err());
    }

    #[test]
    fn geometric_cases() {
        let full = build_geometric_digraph(3, std::f64::consts::SQRT_2, 0.0, 1).unwrap();
        for i in 0..3 {
            assert_eq!(full.out_degree(i), 3);
        }
        let single = build_geometric_digraph(1, 0.1, 0.5, 9).unwrap();
        assert_eq!(single.out_neighbors(0), &[0]);
        let g = build_geometric_digraph(16, 0.6, 0.3, 42).unwrap();
        assert!(bfs_all_pairs(&g));
        let again = build_geometric_digraph(16, 0.6, 0.3, 42).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn geometric_budget_failure() {
        let err = build_geometric_digraph(30, 0.01, 0.0, 3).unwrap_err();
        assert!(matches!(err, Error::RetryBudgetExhausted { budget, .. } if budget == GEOMETRIC_RETRY_BUDGET));
    }

    #[test]
    fn weights_match_out_degree() {
        let g2 = build_exponential_digraph(2).unwrap();
        let b = column_stochastic_weights(&g2).unwrap();
        assert!(b.matrix().iter().all(|&v| v == 0.5));

        let g = build_exponential_digraph(16).unwrap();
        let b = column_stochastic_weights(&g).unwrap();
        for v in b.matrix().iter().filter(|&&v| v > 0.0) {
            assert_eq!(*v, 0.2);
        }
        for r in 0..16 {
            assert!((b.matrix().row(r).sum() - 1.0).abs() < 1e-12);
            assert!((b.matrix().column(r).sum() - 1.0).abs() < 1e-12);
        }
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(b.matrix()[(j, i)] > 0.0, g.has_edge(i, j));
            }
        }

        let g1 = build_exponential_digraph(1).unwrap();
        assert_eq!(column_stochastic_weights(&g1).unwrap().matrix()[(0, 0)], 1.0);

        let disconnected = Digraph::from_edges(2, &[]).unwrap();
        assert!(matches!(column_stochastic_weights(&disconnected), Err(Error::NotStronglyConnected)));
    }

    #[test]
    fn json_round_trip() {
        let g = build_geometric_digraph(8, 0.7, 0.2, 5).unwrap();
        let json = g.to_json().unwrap();
        assert_eq!(Digraph::from_json(&json).unwrap(), g);
        let f: GraphFile = serde_json::from_str(&json).unwrap();
        assert!(f.edges.iter().all(|e| e[0] != e[1]));
    }
}
