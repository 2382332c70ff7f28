//! Directed unweighted graphs without self-loops.
//!
//! Vertices are 1-based in the public API and in all file formats. `A[i][j] = 1`
//! means vertex `i` receives input from vertex `j`, so the first-level set
//! `L1(q)` (the vertices receiving an edge from `q`) is the support of column
//! `q` of the adjacency matrix.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense directed graph on `n` vertices, immutable after construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    /// Row-major n*n entries; `adj[(i-1)*n + (j-1)]` holds A[i][j].
    adj: Vec<bool>,
    /// Row supports: `in_neighbors[i-1]` lists the j with A[i][j] = 1.
    in_neighbors: Vec<Vec<u32>>,
}

impl Graph {
    /// Builds a graph from 1-based directed edges `(i, j)` meaning `i`
    /// receives input from `j`.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("vertex count must be >= 1".into()));
        }
        let mut adj = vec![false; n * n];
        for &(i, j) in edges {
            if i == 0 || j == 0 || i > n || j > n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i}, {j}) out of range for n={n}"
                )));
            }
            if i == j {
                return Err(Error::SelfLoopImplied(i));
            }
            adj[(i - 1) * n + (j - 1)] = true;
        }
        Ok(Self::from_dense(n, adj))
    }

    fn from_dense(n: usize, adj: Vec<bool>) -> Self {
        debug_assert_eq!(adj.len(), n * n);
        let in_neighbors = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| adj[i * n + j])
                    .map(|j| (j + 1) as u32)
                    .collect()
            })
            .collect();
        Self {
            n,
            adj,
            in_neighbors,
        }
    }

    /// Samples an Erdős–Rényi graph: each unordered pair `{i, j}` becomes a
    /// symmetric edge independently with probability `p`. Deterministic for a
    /// fixed seed.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self> {
        Self::erdos_renyi_impl(n, p, seed, false)
    }

    /// Directed variant: each ordered pair `(i, j)`, `i != j`, is an edge
    /// independently with probability `p`.
    pub fn erdos_renyi_directed(n: usize, p: f64, seed: u64) -> Result<Self> {
        Self::erdos_renyi_impl(n, p, seed, true)
    }

    fn erdos_renyi_impl(n: usize, p: f64, seed: u64, directed: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("vertex count must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "edge probability {p} outside [0, 1]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut adj = vec![false; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                if directed {
                    if rng.gen_bool(p) {
                        adj[i * n + j] = true;
                    }
                    if rng.gen_bool(p) {
                        adj[j * n + i] = true;
                    }
                } else if rng.gen_bool(p) {
                    adj[i * n + j] = true;
                    adj[j * n + i] = true;
                }
            }
        }
        Ok(Self::from_dense(n, adj))
    }

    /// Number of vertices.
    pub fn n(&self) -> usize {
        self.n
    }

    /// A[i][j] with 1-based `i`, `j`.
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        assert!(i >= 1 && i <= self.n && j >= 1 && j <= self.n);
        self.adj[(i - 1) * self.n + (j - 1)]
    }

    /// The 1-based vertices `j` that vertex `i` receives input from.
    pub fn in_neighbors(&self, i: usize) -> &[u32] {
        assert!(i >= 1 && i <= self.n);
        &self.in_neighbors[i - 1]
    }

    /// First-level set of `q`: the vertices that receive an edge from `q`,
    /// i.e. the support of column `q`. Never contains `q`.
    pub fn level_set(&self, q: usize) -> Result<BTreeSet<usize>> {
        if q == 0 || q > self.n {
            return Err(Error::InvalidParameter(format!(
                "vertex {q} out of range 1..={}",
                self.n
            )));
        }
        Ok((1..=self.n)
            .filter(|&i| self.adj[(i - 1) * self.n + (q - 1)])
            .collect())
    }

    /// Out-degree of `q`: `|L1(q)|`.
    pub fn out_degree(&self, q: usize) -> Result<usize> {
        Ok(self.level_set(q)?.len())
    }

    /// Maximum out-degree over all vertices; 0 for the empty graph.
    pub fn max_out_degree(&self) -> usize {
        (1..=self.n)
            .map(|q| {
                (1..=self.n)
                    .filter(|&i| self.adj[(i - 1) * self.n + (q - 1)])
                    .count()
            })
            .max()
            .unwrap_or(0)
    }

    /// Total number of directed edges (1-entries of A).
    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&b| b).count()
    }

    /// True when A is symmetric.
    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.adj[i * self.n + j] != self.adj[j * self.n + i] {
                    return false;
                }
            }
        }
        true
    }

    /// All directed edges as 1-based `(i, j)` pairs, row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 1..=self.n {
            for j in 1..=self.n {
                if self.adj[(i - 1) * self.n + (j - 1)] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Serializes to the edge-list text format: a header `n=<N> directed=<0|1>`
    /// followed by one `i j` pair per line. With `directed=0` each symmetric
    /// pair is written once with `i < j`.
    pub fn to_edge_list(&self) -> String {
        let directed = !self.is_symmetric();
        let mut out = String::new();
        let _ = writeln!(out, "n={} directed={}", self.n, u8::from(directed));
        for (i, j) in self.edges() {
            if directed || i < j {
                let _ = writeln!(out, "{i} {j}");
            }
        }
        out
    }

    /// Parses the edge-list text format produced by [`Graph::to_edge_list`].
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty graph file".into()))?;
        let mut n = None;
        let mut directed = None;
        for field in header.split_whitespace() {
            if let Some(v) = field.strip_prefix("n=") {
                n = Some(v.parse::<usize>().map_err(|e| {
                    Error::Parse(format!("bad vertex count in header {header:?}: {e}"))
                })?);
            } else if let Some(v) = field.strip_prefix("directed=") {
                directed = Some(match v {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::Parse(format!(
                            "directed flag must be 0 or 1, got {other:?}"
                        )))
                    }
                });
            }
        }
        let n = n.ok_or_else(|| Error::Parse(format!("header {header:?} missing n=")))?;
        let directed =
            directed.ok_or_else(|| Error::Parse(format!("header {header:?} missing directed=")))?;
        let mut edges = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            let (i, j) = match (it.next(), it.next(), it.next()) {
                (Some(a), Some(b), None) => {
                    let i = a
                        .parse::<usize>()
                        .map_err(|e| Error::Parse(format!("bad edge line {line:?}: {e}")))?;
                    let j = b
                        .parse::<usize>()
                        .map_err(|e| Error::Parse(format!("bad edge line {line:?}: {e}")))?;
                    (i, j)
                }
                _ => return Err(Error::Parse(format!("bad edge line {line:?}"))),
            };
            edges.push((i, j));
            if !directed {
                edges.push((j, i));
            }
        }
        Self::from_edges(n, &edges)
    }

    /// Writes the edge-list format to `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list())?;
        Ok(())
    }

    /// Reads the edge-list format from `path`.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_edge_list(&std::fs::read_to_string(path)?)
    }
}

/// Rebuilds a graph from its level sets: `A[i][j] = 1` iff `i ∈ sets[j-1]`.
/// Inverse of [`Graph::level_set`] applied to every vertex.
pub fn adjacency_from_level_sets(sets: &[BTreeSet<usize>]) -> Result<Graph> {
    let n = sets.len();
    if n == 0 {
        return Err(Error::InvalidParameter(
            "need at least one level set".into(),
        ));
    }
    let mut edges = Vec::new();
    for (idx, set) in sets.iter().enumerate() {
        let q = idx + 1;
        for &i in set {
            if i == q {
                return Err(Error::SelfLoopImplied(q));
            }
            if i == 0 || i > n {
                return Err(Error::InvalidParameter(format!(
                    "level set of {q} contains out-of-range vertex {i}"
                )));
            }
            edges.push((i, q));
        }
    }
    Graph::from_edges(n, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn er_p_zero_is_empty() {
        let g = Graph::erdos_renyi(5, 0.0, 3).unwrap();
        assert_eq!(g.edge_count(), 0);
        for q in 1..=5 {
            assert!(g.level_set(q).unwrap().is_empty());
        }
    }

    #[test]
    fn er_p_one_is_complete() {
        let g = Graph::erdos_renyi(5, 1.0, 3).unwrap();
        assert_eq!(g.edge_count(), 5 * 4);
        for i in 1..=5 {
            for j in 1..=5 {
                assert_eq!(g.has_edge(i, j), i != j);
            }
        }
    }

    #[test]
    fn er_rejects_bad_probability() {
        assert!(Graph::erdos_renyi(5, -0.1, 0).is_err());
        assert!(Graph::erdos_renyi(5, 1.5, 0).is_err());
    }

    #[test]
    fn er_mean_degree_matches_expectation() {
        // Monte-Carlo check of E[d] = (N-1)p over 100 seeds.
        let n = 1000;
        let p = (1000f64).ln() / 1000.0 * 0.5;
        let expected = (n as f64 - 1.0) * p;
        let mut total = 0.0;
        for seed in 0..100 {
            let g = Graph::erdos_renyi(n, p, seed).unwrap();
            // Undirected: mean vertex degree equals directed-entry count / n.
            total += g.edge_count() as f64 / n as f64;
        }
        let mean = total / 100.0;
        assert!(
            (mean - expected).abs() <= 0.2 * expected,
            "mean degree {mean} not within 20% of {expected}"
        );
    }

    #[test]
    fn level_set_of_two_vertex_graph() {
        let g = Graph::from_edges(2, &[(2, 1)]).unwrap();
        assert_eq!(g.level_set(1).unwrap(), BTreeSet::from([2]));
        assert_eq!(g.level_set(2).unwrap(), BTreeSet::new());
    }

    #[test]
    fn level_set_of_complete_graph() {
        let g = Graph::erdos_renyi(4, 1.0, 0).unwrap();
        assert_eq!(g.level_set(3).unwrap(), BTreeSet::from([1, 2, 4]));
    }

    #[test]
    fn level_set_rejects_out_of_range() {
        let g = Graph::erdos_renyi(4, 0.5, 0).unwrap();
        assert!(g.level_set(0).is_err());
        assert!(g.level_set(5).is_err());
    }

    #[test]
    fn max_out_degree_cases() {
        let empty = Graph::erdos_renyi(4, 0.0, 0).unwrap();
        assert_eq!(empty.max_out_degree(), 0);
        let complete = Graph::erdos_renyi(4, 1.0, 0).unwrap();
        assert_eq!(complete.max_out_degree(), 3);
        // Star with center 1 pointing to 2..5: column 1 has four entries.
        let star = Graph::from_edges(5, &[(2, 1), (3, 1), (4, 1), (5, 1)]).unwrap();
        assert_eq!(star.max_out_degree(), 4);
        assert_eq!(star.level_set(1).unwrap(), BTreeSet::from([2, 3, 4, 5]));
    }

    #[test]
    fn level_sets_rebuild_two_vertex_graph() {
        let sets = vec![BTreeSet::from([2]), BTreeSet::new()];
        let g = adjacency_from_level_sets(&sets).unwrap();
        assert!(g.has_edge(2, 1));
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn level_sets_reject_self_loop() {
        let sets = vec![BTreeSet::from([1]), BTreeSet::new()];
        assert!(matches!(
            adjacency_from_level_sets(&sets),
            Err(Error::SelfLoopImplied(1))
        ));
    }

    #[test]
    fn edge_list_roundtrip_directed_and_undirected() {
        for directed in [false, true] {
            let g = if directed {
                Graph::erdos_renyi_directed(9, 0.3, 11).unwrap()
            } else {
                Graph::erdos_renyi(9, 0.3, 11).unwrap()
            };
            let text = g.to_edge_list();
            let back = Graph::from_edge_list(&text).unwrap();
            assert_eq!(g, back);
        }
    }

    proptest! {
        #[test]
        fn level_set_roundtrip(n in 1usize..20, p in 0.0f64..1.0, seed in 0u64..1000) {
            let g = Graph::erdos_renyi_directed(n, p, seed).unwrap();
            let sets: Vec<_> = (1..=n).map(|q| g.level_set(q).unwrap()).collect();
            let back = adjacency_from_level_sets(&sets).unwrap();
            prop_assert_eq!(g.clone(), back);
            // Directed edge count equals the total level-set mass.
            let mass: usize = sets.iter().map(|s| s.len()).sum();
            prop_assert_eq!(mass, g.edge_count());
        }

        #[test]
        fn er_is_symmetric(n in 2usize..30, p in 0.0f64..1.0, seed in 0u64..1000) {
            let g = Graph::erdos_renyi(n, p, seed).unwrap();
            prop_assert!(g.is_symmetric());
            for i in 1..=n {
                prop_assert!(!g.has_edge(i, i));
            }
        }
    }
}
