//! Directed acyclic graphs, random graph models and order utilities.

use std::collections::{BTreeSet, BinaryHeap};
use std::cmp::Reverse;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Edge `(from, to)` meaning `from -> to`.
pub type Edge = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dag {
    num_nodes: usize,
    edges: BTreeSet<Edge>,
}

impl Dag {
    pub fn empty(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            edges: BTreeSet::new(),
        }
    }

    /// Builds a graph and checks it for self-loops, out-of-range indices and
    /// cycles. Duplicate edges collapse.
    pub fn new(num_nodes: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut g = Self::empty(num_nodes);
        for (i, j) in edges {
            if i >= num_nodes || j >= num_nodes {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i}, {j}) out of range for {num_nodes} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop on node {i}")));
            }
            g.edges.insert((i, j));
        }
        topological_sort(&g)?;
        Ok(g)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    /// Parents of `j`, ascending.
    pub fn parents(&self, j: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|&&(_, t)| t == j)
            .map(|&(s, _)| s)
            .collect()
    }

    /// Children of `i`, ascending.
    pub fn children(&self, i: usize) -> Vec<usize> {
        self.edges
            .range((i, 0)..=(i, usize::MAX))
            .map(|&(_, t)| t)
            .collect()
    }

    pub fn is_root(&self, j: usize) -> bool {
        !self.edges.iter().any(|&(_, t)| t == j)
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        self.children(i).is_empty()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.num_nodes).filter(|&j| self.is_root(j)).collect()
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.num_nodes).filter(|&j| self.is_leaf(j)).collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(s, t)| s == i || t == i).count()
    }

    /// Same graph minus the listed edges.
    pub fn without_edges(&self, removed: &BTreeSet<Edge>) -> Self {
        Self {
            num_nodes: self.num_nodes,
            edges: self.edges.difference(removed).copied().collect(),
        }
    }

    /// Relabel nodes: node `i` becomes `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        TopologicalOrder::new(perm.to_vec())?;
        if perm.len() != self.num_nodes {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for {} nodes",
                perm.len(),
                self.num_nodes
            )));
        }
        Ok(Self {
            num_nodes: self.num_nodes,
            edges: self.edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect(),
        })
    }

    /// `digraph { i -> j; ... }` with optional node labels.
    pub fn to_dot(&self, labels: Option<&[String]>) -> String {
        dot_from_edges(self.num_nodes, self.edges.iter().copied(), labels, None)
    }
}

/// DOT text for an edge list. Edges listed in `highlight` are drawn red.
pub fn dot_from_edges(
    num_nodes: usize,
    edges: impl IntoIterator<Item = Edge>,
    labels: Option<&[String]>,
    highlight: Option<&BTreeSet<Edge>>,
) -> String {
    let name = |i: usize| -> String {
        match labels {
            Some(l) if i < l.len() => format!("\"{}\"", l[i].replace('"', "\\\"")),
            _ => i.to_string(),
        }
    };
    let mut out = String::from("digraph {\n");
    for i in 0..num_nodes {
        let _ = writeln!(out, "  {};", name(i));
    }
    for (i, j) in edges {
        let red = highlight.is_some_and(|h| h.contains(&(i, j)));
        if red {
            let _ = writeln!(out, "  {} -> {} [color=red];", name(i), name(j));
        } else {
            let _ = writeln!(out, "  {} -> {};", name(i), name(j));
        }
    }
    out.push_str("}\n");
    out
}

/// A permutation of `[0, d)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopologicalOrder(Vec<usize>);

impl TopologicalOrder {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &v in &order {
            if v >= n || seen[v] {
                return Err(Error::InvalidParameter(format!(
                    "{order:?} is not a permutation"
                )));
            }
            seen[v] = true;
        }
        Ok(Self(order))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `position[v]` = index of node `v` in the order.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.0.len()];
        for (p, &v) in self.0.iter().enumerate() {
            pos[v] = p;
        }
        pos
    }

    /// Nodes strictly before `j`, in order.
    pub fn predecessors(&self, j: usize) -> Vec<usize> {
        self.0.iter().take_while(|&&v| v != j).copied().collect()
    }
}

/// Kahn's algorithm, smallest available index first.
pub fn topological_sort(g: &Dag) -> Result<TopologicalOrder> {
    let n = g.num_nodes;
    let mut indeg = vec![0usize; n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in &g.edges {
        indeg[j] += 1;
        out[i].push(j);
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&v| indeg[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &w in &out[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.push(Reverse(w));
            }
        }
    }
    if order.len() < n {
        let stuck = (0..n).find(|&v| indeg[v] > 0).unwrap_or(0);
        return Err(Error::CycleDetected(stuck));
    }
    Ok(TopologicalOrder(order))
}

pub fn is_valid_order(g: &Dag, order: &TopologicalOrder) -> Result<bool> {
    if order.len() != g.num_nodes {
        return Err(Error::DimensionMismatch(format!(
            "order of length {} for {} nodes",
            order.len(),
            g.num_nodes
        )));
    }
    let pos = order.positions();
    Ok(g.edges.iter().all(|&(i, j)| pos[i] < pos[j]))
}

/// Erdős–Rényi DAG with `k * d` expected edges.
///
/// Draws a random node order and keeps each order-respecting pair with
/// probability `min(1, 2k / (d - 1))`.
pub fn generate_er(d: usize, k: f64, seed: u64) -> Result<Dag> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("ER graph needs d >= 2, got {d}")));
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidParameter(format!("ER density k must be > 0, got {k}")));
    }
    let p = (2.0 * k / (d as f64 - 1.0)).min(1.0);
    let mut rng = seed::stream(seed, "er", 0);
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(&mut rng);
    let mut edges = BTreeSet::new();
    for a in 0..d {
        for b in (a + 1)..d {
            if rng.random::<f64>() < p {
                edges.insert((perm[a], perm[b]));
            }
        }
    }
    Ok(Dag { num_nodes: d, edges })
}

/// Barabási–Albert preferential attachment, oriented from older to newer
/// node. Attachment weight is `degree + 1`.
pub fn generate_sf(d: usize, k: usize, seed: u64) -> Result<Dag> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("SF graph needs d >= 2, got {d}")));
    }
    if k < 1 || k >= d {
        return Err(Error::InvalidParameter(format!(
            "SF attachment count must satisfy 1 <= k < d, got k={k}, d={d}"
        )));
    }
    let mut rng = seed::stream(seed, "sf", 0);
    let mut degree = vec![0usize; d];
    let mut edges = BTreeSet::new();
    for new in 1..d {
        let want = k.min(new);
        let mut chosen: Vec<usize> = Vec::with_capacity(want);
        while chosen.len() < want {
            let weights: Vec<f64> = (0..new)
                .map(|v| {
                    if chosen.contains(&v) {
                        0.0
                    } else {
                        degree[v] as f64 + 1.0
                    }
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = new - 1;
            for (v, w) in weights.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                if u < *w {
                    pick = v;
                    break;
                }
                u -= w;
                pick = v;
            }
            chosen.push(pick);
        }
        for t in chosen {
            edges.insert((t, new));
            degree[t] += 1;
            degree[new] += 1;
        }
    }
    Ok(Dag { num_nodes: d, edges })
}
