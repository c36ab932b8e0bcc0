//! Communication graph, subgraph covers, and the stacked-space layout.
//!
//! Node ids are 1-based. A cover is a list of overlapping node sets `V_i`
//! whose induced subgraphs are connected and whose union spans and connects
//! the whole graph. Each pair `(i, j in V_i)` owns one contiguous block of
//! length `d` in the stacked space of dimension `p = sum_i d*|V_i|`; blocks
//! are ordered by subgraph index, then by node position within sorted `V_i`.

use crate::error::{CoverDefect, Error, Result};
use nalgebra::DVector;
use std::collections::BTreeSet;

/// Undirected connected communication graph over nodes `1..=n`.
#[derive(Debug, Clone)]
pub struct CommGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl CommGraph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        assert!(n > 0, "node count must be positive");
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            for id in [a, b] {
                if id < 1 || id > n {
                    return Err(Error::NodeOutOfRange { id, n });
                }
            }
            set.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut adj = vec![Vec::new(); n + 1];
        for &(a, b) in &edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let g = CommGraph { n, edges, adj };
        let all: Vec<usize> = (1..=n).collect();
        if !connected(&all, &g.edges) {
            return Err(Error::GraphDisconnected);
        }
        Ok(g)
    }

    /// Ring 1-2-3-...-n-1.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::DegenerateRing(n));
        }
        let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i, i + 1)).collect();
        edges.push((1, n));
        CommGraph::new(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbours(&self, node: usize) -> &[usize] {
        &self.adj[node]
    }
}

/// BFS connectivity of `nodes` under the given edge set restricted to them.
fn connected(nodes: &[usize], edges: &[(usize, usize)]) -> bool {
    if nodes.is_empty() {
        return false;
    }
    let node_set: BTreeSet<usize> = nodes.iter().copied().collect();
    let max = *nodes.iter().max().unwrap();
    let mut adj = vec![Vec::new(); max + 1];
    for &(a, b) in edges {
        if node_set.contains(&a) && node_set.contains(&b) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut seen = BTreeSet::new();
    let mut queue = std::collections::VecDeque::new();
    seen.insert(nodes[0]);
    queue.push_back(nodes[0]);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    seen.len() == node_set.len()
}

#[derive(Debug, Clone)]
pub struct Subgraph {
    /// Sorted, deduplicated node ids.
    pub nodes: Vec<usize>,
    /// Parent edges internal to `nodes`.
    pub edges: Vec<(usize, usize)>,
}

/// A validated cover of overlapping subgraphs with the stacked-space layout.
#[derive(Debug, Clone)]
pub struct SubgraphCover {
    n: usize,
    block_dim: usize,
    subgraphs: Vec<Subgraph>,
    /// `membership[j-1]` = subgraph ids containing node j (the set N_j).
    membership: Vec<Vec<usize>>,
    /// Block index at which each subgraph's blocks start.
    subgraph_start: Vec<usize>,
    /// Flattened block list: `blocks[b] = (subgraph, node)`.
    blocks: Vec<(usize, usize)>,
    p: usize,
}

impl SubgraphCover {
    /// Validates `node_sets` against `graph` and computes the layout.
    /// `E_i` is taken to be all parent edges internal to `V_i`.
    pub fn build(graph: &CommGraph, node_sets: &[Vec<usize>], d: usize) -> Result<Self> {
        assert!(!node_sets.is_empty(), "node_sets must be nonempty");
        assert!(d >= 1, "block dimension must be at least 1");
        let n = graph.n();
        let mut subgraphs = Vec::with_capacity(node_sets.len());
        for (i, set) in node_sets.iter().enumerate() {
            let nodes: Vec<usize> = {
                let s: BTreeSet<usize> = set.iter().copied().collect();
                s.into_iter().collect()
            };
            for &id in &nodes {
                if id < 1 || id > n {
                    return Err(Error::NodeOutOfRange { id, n });
                }
            }
            let node_set: BTreeSet<usize> = nodes.iter().copied().collect();
            let edges: Vec<(usize, usize)> = graph
                .edges()
                .iter()
                .copied()
                .filter(|(a, b)| node_set.contains(a) && node_set.contains(b))
                .collect();
            if !connected(&nodes, &edges) {
                return Err(Error::CoverInvalid(CoverDefect::SubgraphDisconnected {
                    index: i,
                }));
            }
            subgraphs.push(Subgraph { nodes, edges });
        }

        let mut membership = vec![Vec::new(); n];
        for (i, sg) in subgraphs.iter().enumerate() {
            for &j in &sg.nodes {
                membership[j - 1].push(i);
            }
        }
        if let Some(j) = membership.iter().position(|m| m.is_empty()) {
            return Err(Error::CoverInvalid(CoverDefect::CoverIncomplete {
                missing_node: j + 1,
            }));
        }
        let union_edges: Vec<(usize, usize)> = subgraphs
            .iter()
            .flat_map(|sg| sg.edges.iter().copied())
            .collect();
        let all: Vec<usize> = (1..=n).collect();
        if !connected(&all, &union_edges) {
            return Err(Error::CoverInvalid(CoverDefect::UnionDisconnected));
        }

        let mut subgraph_start = Vec::with_capacity(subgraphs.len());
        let mut blocks = Vec::new();
        for (i, sg) in subgraphs.iter().enumerate() {
            subgraph_start.push(blocks.len());
            for &j in &sg.nodes {
                blocks.push((i, j));
            }
        }
        let p = blocks.len() * d;
        Ok(SubgraphCover {
            n,
            block_dim: d,
            subgraphs,
            membership,
            subgraph_start,
            blocks,
            p,
        })
    }

    /// Edge-pair ring cover: `V_i = {i, i+1}` for `i < n`, `V_n = {1, n}`.
    pub fn ring(n: usize, d: usize) -> Result<Self> {
        let graph = CommGraph::ring(n)?;
        let mut sets: Vec<Vec<usize>> = (1..n).map(|i| vec![i, i + 1]).collect();
        sets.push(vec![1, n]);
        SubgraphCover::build(&graph, &sets, d)
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.subgraphs.len()
    }

    pub fn dim(&self) -> usize {
        self.block_dim
    }

    /// Stacked-space dimension `p = sum_i d*|V_i|`.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn subgraphs(&self) -> &[Subgraph] {
        &self.subgraphs
    }

    /// N_j: ids of the subgraphs containing node `j` (1-based node id).
    pub fn neighbourhood(&self, j: usize) -> &[usize] {
        &self.membership[j - 1]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// `(subgraph, node)` owning block `b`.
    pub fn block(&self, b: usize) -> (usize, usize) {
        self.blocks[b]
    }

    /// Block index of the pair `(subgraph i, node j)`; `j` must be in `V_i`.
    pub fn block_index(&self, i: usize, j: usize) -> usize {
        let pos = self.subgraphs[i]
            .nodes
            .binary_search(&j)
            .expect("node not in subgraph");
        self.subgraph_start[i] + pos
    }

    /// Coordinate range of block `b` in the stacked space.
    pub fn block_range(&self, b: usize) -> std::ops::Range<usize> {
        b * self.block_dim..(b + 1) * self.block_dim
    }

    /// Block indices owned by subgraph `i`.
    pub fn subgraph_blocks(&self, i: usize) -> std::ops::Range<usize> {
        self.subgraph_start[i]..self.subgraph_start[i] + self.subgraphs[i].nodes.len()
    }

    /// T(x): copies each node vector into every block that references it.
    pub fn stack(&self, x: &[DVector<f64>]) -> Result<DVector<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        for v in x {
            if v.len() != self.block_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.block_dim,
                    got: v.len(),
                });
            }
        }
        let mut out = DVector::zeros(self.p);
        for (b, &(_, j)) in self.blocks.iter().enumerate() {
            out.rows_mut(b * self.block_dim, self.block_dim)
                .copy_from(&x[j - 1]);
        }
        Ok(out)
    }

    /// Adjoint-based recovery: node j gets the average of its |N_j| copies.
    /// Left inverse of [`stack`](Self::stack).
    pub fn unstack_average(&self, s: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        if s.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: s.len(),
            });
        }
        let d = self.block_dim;
        let mut out = vec![DVector::zeros(d); self.n];
        for (j, members) in self.membership.iter().enumerate() {
            let mut acc = DVector::zeros(d);
            for &i in members {
                let b = self.block_index(i, j + 1);
                acc += s.rows(b * d, d);
            }
            out[j] = acc / members.len() as f64;
        }
        Ok(out)
    }

    /// Average of node j's block copies in `s` (the prox-center of `f_j`).
    pub fn node_block_average(&self, s: &DVector<f64>, j: usize) -> DVector<f64> {
        let d = self.block_dim;
        let members = &self.membership[j - 1];
        let mut acc = DVector::zeros(d);
        for &i in members {
            let b = self.block_index(i, j);
            acc += s.rows(b * d, d);
        }
        acc / members.len() as f64
    }
}
